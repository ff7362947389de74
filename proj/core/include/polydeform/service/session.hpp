#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydeform/data/sample.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/types.hpp"
#include "polydeform/io/image.hpp"
#include "polydeform/model/model.hpp"

namespace polydeform::service {

using geometry::Box;
using geometry::Polygon;

/// Unknown session or instance id.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// No model is loaded for the session.
class ModelUnavailableError : public Error {
 public:
  using Error::Error;
};

/// An edit would break a polygon invariant (fewer than 3 vertices, vertex
/// outside the image).
class InvariantError : public Error {
 public:
  using Error::Error;
};

struct InstanceState {
  int id = 0;
  std::string label;
  double score = 1.0;
  std::optional<Box> box;
  std::vector<Polygon> polygons;
  bool accepted = false;
};

struct SessionState {
  std::string id;
  int width = 0;
  int height = 0;
  std::string model_id;
  std::vector<InstanceState> instances;
  /// Number of events folded into this state.
  std::int64_t version = 0;

  InstanceState& instance(int iid);
  const InstanceState& instance(int iid) const;
};

// Events are JSON objects with an "op" field:
//   create       {id, width, height, model_id}
//   add_instance {instance, label, score, box|null, polygons}
//   edit         {instance, edits: [...]}
//   deform       {instance, mode, polygons}
// Edits: {op:"move", polygon, vertex, x, y}; {op:"insert", polygon, edge,
// x?, y?} (defaults to the edge midpoint, inserted after vertex `edge`);
// {op:"delete", polygon, vertex}; {op:"accept"}.

/// Folds one event into `state`. Edits apply atomically: on any failure the
/// state is left untouched.
void apply_event(SessionState& state, const nlohmann::json& event);
SessionState replay(const std::vector<nlohmann::json>& events);

nlohmann::json polygons_to_json(const std::vector<Polygon>& polygons);
std::vector<Polygon> polygons_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SessionState& state);

/// Initial polygon for a box-only instance: the inscribed ellipse.
Polygon ellipse_in_box(const Box& box, int vertices);

struct ModelSnapshot {
  std::string id;
  std::shared_ptr<const model::Model<float>> model;
};

struct StoreConfig {
  std::filesystem::path data_dir;
  data::AugmentConfig augment;
  /// Vertex count for box-initialized ellipses.
  int ellipse_vertices = 40;
};

/// Sessions persisted as data_dir/sessions/<id>/{image.png,events.jsonl}.
/// Operations on one session are serialized; different sessions proceed
/// concurrently. Each session keeps the model snapshot current at creation.
class SessionStore {
 public:
  explicit SessionStore(StoreConfig cfg);

  /// Installs the snapshot new sessions will pin.
  void set_model(ModelSnapshot snapshot);
  std::optional<ModelSnapshot> current_model() const;

  struct MaskInput {
    geometry::BinaryMask mask;
    std::string label;
  };
  struct BoxInput {
    Box box;
    std::string label;
  };

  std::string create(const Image& image, const std::vector<MaskInput>& masks, const std::vector<BoxInput>& boxes);
  /// Recreates instances from a polygon document (the export format).
  std::string import_document(const Image& image, const std::string& polygon_json);

  nlohmann::json state(const std::string& id);
  const Image& image(const std::string& id);
  std::vector<std::uint8_t> image_png(const std::string& id);
  std::vector<nlohmann::json> events(const std::string& id);

  nlohmann::json add_mask_instance(const std::string& id, const MaskInput& input);
  nlohmann::json add_box_instance(const std::string& id, const BoxInput& input);
  /// Response: {instance, polygons, chamfer_to_previous: [per polygon]}.
  nlohmann::json deform(const std::string& id, int iid, data::Mode mode);
  nlohmann::json edit(const std::string& id, int iid, const nlohmann::json& edits);
  /// Polygon JSON document of all instances, in instance order.
  std::string export_json(const std::string& id);
  /// Rasterized instance masks keyed by instance id.
  std::map<int, geometry::BinaryMask> export_masks(const std::string& id);

 private:
  struct Session {
    std::mutex mutex;
    SessionState state;
    Image image;
    std::optional<ModelSnapshot> model;
    std::filesystem::path dir;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<Session> open_new(const Image& image);
  void commit(Session& s, const nlohmann::json& event);
  nlohmann::json add_instance_locked(Session& s, const std::string& label, std::optional<Box> box,
                                     std::vector<Polygon> polygons);

  StoreConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, ModelSnapshot> snapshots_;
  std::optional<ModelSnapshot> current_;
  std::uint64_t next_id_ = 1;
};

}  // namespace polydeform::service
