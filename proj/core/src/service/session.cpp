#include "polydeform/service/session.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/geometry/raster.hpp"
#include "polydeform/io/png_io.hpp"
#include "polydeform/io/polygon_json.hpp"
#include "polydeform/model/losses.hpp"
#include "polydeform/train/inference.hpp"

namespace polydeform::service {
namespace {

namespace fs = std::filesystem;

int get_int(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw ValidationError(std::string("field '") + key + "' must be an integer");
  }
  return j.at(key).get<int>();
}

double get_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ValidationError(std::string("field '") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

nlohmann::json box_to_json(const std::optional<Box>& b) {
  if (!b) return nullptr;
  return {b->x0, b->y0, b->x1, b->y1};
}

std::optional<Box> box_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 4) throw ValidationError("box must be [x0, y0, x1, y1]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError("box coordinates must be numbers");
  }
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(b.x1 > b.x0 && b.y1 > b.y0)) throw ValidationError("box must have positive width and height");
  return b;
}

void check_in_bounds(const SessionState& st, geometry::Vec2 p) {
  if (!(p.x >= 0 && p.x <= st.width && p.y >= 0 && p.y <= st.height)) {
    throw InvariantError("vertex (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") lies outside the image");
  }
}

void apply_edit(const SessionState& st, InstanceState& inst, const nlohmann::json& e) {
  if (!e.is_object() || !e.contains("op") || !e.at("op").is_string()) throw ValidationError("edit needs an 'op'");
  const auto op = e.at("op").get<std::string>();
  if (op == "accept") {
    inst.accepted = true;
    return;
  }
  const int pi = get_int(e, "polygon");
  if (pi < 0 || pi >= static_cast<int>(inst.polygons.size())) throw ValidationError("polygon index out of range");
  auto v = inst.polygons[static_cast<std::size_t>(pi)].vertices();
  const int n = static_cast<int>(v.size());
  if (op == "move") {
    const int k = get_int(e, "vertex");
    if (k < 0 || k >= n) throw ValidationError("vertex index out of range");
    const geometry::Vec2 p{get_number(e, "x"), get_number(e, "y")};
    check_in_bounds(st, p);
    v[static_cast<std::size_t>(k)] = p;
  } else if (op == "insert") {
    const int k = get_int(e, "edge");
    if (k < 0 || k >= n) throw ValidationError("edge index out of range");
    const auto a = v[static_cast<std::size_t>(k)];
    const auto b = v[static_cast<std::size_t>((k + 1) % n)];
    geometry::Vec2 p{(a.x + b.x) / 2, (a.y + b.y) / 2};
    if (e.contains("x") || e.contains("y")) p = {get_number(e, "x"), get_number(e, "y")};
    check_in_bounds(st, p);
    v.insert(v.begin() + k + 1, p);
  } else if (op == "delete") {
    const int k = get_int(e, "vertex");
    if (k < 0 || k >= n) throw ValidationError("vertex index out of range");
    if (n <= 3) throw InvariantError("deleting a vertex would leave fewer than 3");
    v.erase(v.begin() + k);
  } else {
    throw ValidationError("unknown edit op '" + op + "'");
  }
  inst.polygons[static_cast<std::size_t>(pi)] = Polygon(std::move(v));
}

std::vector<Polygon> clamp_to_image(const std::vector<Polygon>& polys, int h, int w) {
  std::vector<Polygon> out;
  for (const auto& p : polys) {
    std::vector<geometry::Vec2> v;
    for (const auto& q : p.vertices()) {
      v.push_back({std::clamp(q.x, 0.0, static_cast<double>(w)), std::clamp(q.y, 0.0, static_cast<double>(h))});
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

std::string event_line(const nlohmann::json& e) { return e.dump() + "\n"; }

}  // namespace

InstanceState& SessionState::instance(int iid) {
  for (auto& i : instances) {
    if (i.id == iid) return i;
  }
  throw NotFoundError("no instance " + std::to_string(iid) + " in session " + id);
}

const InstanceState& SessionState::instance(int iid) const {
  return const_cast<SessionState*>(this)->instance(iid);
}

nlohmann::json polygons_to_json(const std::vector<Polygon>& polygons) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : polygons) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& v : p.vertices()) pts.push_back({v.x, v.y});
    out.push_back(std::move(pts));
  }
  return out;
}

std::vector<Polygon> polygons_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("polygons must be an array");
  std::vector<Polygon> out;
  for (const auto& pj : j) {
    if (!pj.is_array() || pj.size() < 3) throw ValidationError("each polygon needs at least 3 vertices");
    std::vector<geometry::Vec2> v;
    for (const auto& q : pj) {
      if (!q.is_array() || q.size() != 2 || !q[0].is_number() || !q[1].is_number()) {
        throw ValidationError("vertices must be [x, y] number pairs");
      }
      v.push_back({q[0].get<double>(), q[1].get<double>()});
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

nlohmann::json to_json(const SessionState& s) {
  nlohmann::json instances = nlohmann::json::array();
  for (const auto& i : s.instances) {
    instances.push_back({{"id", i.id},
                         {"label", i.label},
                         {"score", i.score},
                         {"box", box_to_json(i.box)},
                         {"accepted", i.accepted},
                         {"polygons", polygons_to_json(i.polygons)}});
  }
  return {{"id", s.id},       {"width", s.width},         {"height", s.height},
          {"model_id", s.model_id}, {"version", s.version}, {"instances", instances}};
}

void apply_event(SessionState& state, const nlohmann::json& event) {
  if (!event.is_object() || !event.contains("op") || !event.at("op").is_string()) {
    throw ValidationError("event needs an 'op'");
  }
  const auto op = event.at("op").get<std::string>();
  if (op == "create") {
    if (state.version != 0) throw ValidationError("create must be the first event");
    state.id = event.at("id").get<std::string>();
    state.width = get_int(event, "width");
    state.height = get_int(event, "height");
    state.model_id = event.value("model_id", "");
  } else {
    if (state.version == 0) throw ValidationError("first event must be create");
    if (op == "add_instance") {
      InstanceState inst;
      inst.id = get_int(event, "instance");
      for (const auto& i : state.instances) {
        if (i.id == inst.id) throw ValidationError("duplicate instance id");
      }
      inst.label = event.value("label", "object");
      inst.score = event.value("score", 1.0);
      inst.box = box_from_json(event.value("box", nlohmann::json(nullptr)));
      inst.polygons = polygons_from_json(event.at("polygons"));
      state.instances.push_back(std::move(inst));
    } else if (op == "edit") {
      auto& target = state.instance(get_int(event, "instance"));
      if (!event.contains("edits") || !event.at("edits").is_array()) throw ValidationError("edits must be an array");
      InstanceState copy = target;
      for (const auto& e : event.at("edits")) apply_edit(state, copy, e);
      target = std::move(copy);
    } else if (op == "deform") {
      auto& target = state.instance(get_int(event, "instance"));
      auto polys = polygons_from_json(event.at("polygons"));
      if (polys.size() != target.polygons.size()) throw ValidationError("deform changed the polygon count");
      target.polygons = std::move(polys);
    } else {
      throw ValidationError("unknown event op '" + op + "'");
    }
  }
  ++state.version;
}

SessionState replay(const std::vector<nlohmann::json>& events) {
  SessionState s;
  for (const auto& e : events) apply_event(s, e);
  return s;
}

Polygon ellipse_in_box(const Box& box, int vertices) {
  if (vertices < 3) throw ContractError("ellipse_in_box: need at least 3 vertices");
  const double cx = (box.x0 + box.x1) / 2, cy = (box.y0 + box.y1) / 2;
  const double rx = box.width() / 2, ry = box.height() / 2;
  std::vector<geometry::Vec2> v;
  for (int k = 0; k < vertices; ++k) {
    const double t = 2 * std::numbers::pi * k / vertices;
    v.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return Polygon(std::move(v));
}

SessionStore::SessionStore(StoreConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.augment.validate();
  if (cfg_.ellipse_vertices < 3) throw ValidationError("ellipse_vertices must be >= 3");
  fs::create_directories(cfg_.data_dir / "sessions");
  for (const auto& entry : fs::directory_iterator(cfg_.data_dir / "sessions")) {
    const auto name = entry.path().filename().string();
    unsigned long long n = 0;
    if (std::sscanf(name.c_str(), "s%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
  }
}

void SessionStore::set_model(ModelSnapshot snapshot) {
  std::lock_guard lock(mutex_);
  snapshots_[snapshot.id] = snapshot;
  current_ = std::move(snapshot);
}

std::optional<ModelSnapshot> SessionStore::current_model() const {
  std::lock_guard lock(mutex_);
  return current_;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  const fs::path dir = cfg_.data_dir / "sessions" / id;
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos ||
      !fs::exists(dir / "events.jsonl")) {
    throw NotFoundError("no session '" + id + "'");
  }
  auto s = std::make_shared<Session>();
  s->dir = dir;
  s->image = io::decode_png(io::read_file(dir / "image.png"));
  std::ifstream in(dir / "events.jsonl");
  std::vector<nlohmann::json> events;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) events.push_back(nlohmann::json::parse(line));
  }
  s->state = replay(events);
  if (auto it = snapshots_.find(s->state.model_id); it != snapshots_.end()) s->model = it->second;
  sessions_[id] = s;
  return s;
}

std::shared_ptr<SessionStore::Session> SessionStore::open_new(const Image& image) {
  if (image.height < 1 || image.width < 1) throw ValidationError("image is empty");
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06llu", static_cast<unsigned long long>(next_id_++));
  auto s = std::make_shared<Session>();
  s->dir = cfg_.data_dir / "sessions" / buf;
  fs::create_directories(s->dir);
  s->image = image;
  io::write_file(s->dir / "image.png", io::encode_png(image));
  s->model = current_;
  s->state.id = buf;
  sessions_[buf] = s;
  return s;
}

void SessionStore::commit(Session& s, const nlohmann::json& event) {
  SessionState next = s.state;
  apply_event(next, event);
  std::ofstream out(s.dir / "events.jsonl", std::ios::app | std::ios::binary);
  out << event_line(event);
  out.flush();
  if (!out) throw Error("failed to append to the session log");
  s.state = std::move(next);
}

nlohmann::json SessionStore::add_instance_locked(Session& s, const std::string& label, std::optional<Box> box,
                                                 std::vector<Polygon> polygons) {
  int iid = 0;
  for (const auto& i : s.state.instances) iid = std::max(iid, i.id + 1);
  commit(s, {{"op", "add_instance"},
             {"instance", iid},
             {"label", label.empty() ? "object" : label},
             {"score", 1.0},
             {"box", box_to_json(box)},
             {"polygons", polygons_to_json(polygons)}});
  return to_json(s.state)["instances"].back();
}

std::string SessionStore::create(const Image& image, const std::vector<MaskInput>& masks,
                                 const std::vector<BoxInput>& boxes) {
  std::vector<std::vector<Polygon>> mask_polygons;
  for (const auto& m : masks) {
    if (m.mask.height() != image.height || m.mask.width() != image.width) {
      throw ValidationError("mask dimensions differ from the image");
    }
    if (m.mask.empty()) throw ValidationError("mask is empty");
    const auto inst = train::instance_from_mask(image, m.mask, data::Mode::Detection, cfg_.augment);
    if (inst.polygons.empty()) throw ValidationError("mask yields no polygon");
    mask_polygons.push_back(clamp_to_image(inst.image_polygons(), image.height, image.width));
  }
  const Box bounds{0, 0, static_cast<double>(image.width), static_cast<double>(image.height)};
  std::vector<Box> clipped;
  for (const auto& b : boxes) {
    clipped.push_back(geometry::clip_box(b.box, bounds));
    if (!(clipped.back().width() > 0 && clipped.back().height() > 0)) {
      throw ValidationError("box lies outside the image");
    }
  }
  auto s = open_new(image);
  std::lock_guard lock(s->mutex);
  commit(*s, {{"op", "create"},
              {"id", s->state.id},
              {"width", image.width},
              {"height", image.height},
              {"model_id", s->model ? s->model->id : ""}});
  for (std::size_t k = 0; k < masks.size(); ++k) {
    add_instance_locked(*s, masks[k].label, geometry::fit_box(masks[k].mask), mask_polygons[k]);
  }
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    add_instance_locked(*s, boxes[k].label, clipped[k], {ellipse_in_box(clipped[k], cfg_.ellipse_vertices)});
  }
  return s->state.id;
}

std::string SessionStore::import_document(const Image& image, const std::string& polygon_json) {
  const auto doc = io::parse_polygon_json(polygon_json);
  auto s = open_new(image);
  std::lock_guard lock(s->mutex);
  commit(*s, {{"op", "create"},
              {"id", s->state.id},
              {"width", image.width},
              {"height", image.height},
              {"model_id", s->model ? s->model->id : ""}});
  int iid = 0;
  for (const auto& rec : doc.instances) {
    commit(*s, {{"op", "add_instance"},
                {"instance", iid++},
                {"label", rec.label},
                {"score", rec.score},
                {"box", nullptr},
                {"polygons", polygons_to_json(rec.polygons)}});
  }
  return s->state.id;
}

nlohmann::json SessionStore::state(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return to_json(s->state);
}

const Image& SessionStore::image(const std::string& id) { return find(id)->image; }

std::vector<std::uint8_t> SessionStore::image_png(const std::string& id) {
  return io::encode_png(find(id)->image);
}

std::vector<nlohmann::json> SessionStore::events(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  std::ifstream in(s->dir / "events.jsonl");
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

nlohmann::json SessionStore::add_mask_instance(const std::string& id, const MaskInput& input) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (input.mask.height() != s->image.height || input.mask.width() != s->image.width) {
    throw ValidationError("mask dimensions differ from the image");
  }
  if (input.mask.empty()) throw ValidationError("mask is empty");
  const auto inst = train::instance_from_mask(s->image, input.mask, data::Mode::Detection, cfg_.augment);
  if (inst.polygons.empty()) throw ValidationError("mask yields no polygon");
  return add_instance_locked(*s, input.label, geometry::fit_box(input.mask),
                             clamp_to_image(inst.image_polygons(), s->image.height, s->image.width));
}

nlohmann::json SessionStore::add_box_instance(const std::string& id, const BoxInput& input) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  const Box bounds{0, 0, static_cast<double>(s->image.width), static_cast<double>(s->image.height)};
  const Box b = geometry::clip_box(input.box, bounds);
  if (!(b.width() > 0 && b.height() > 0)) throw ValidationError("box lies outside the image");
  return add_instance_locked(*s, input.label, b, {ellipse_in_box(b, cfg_.ellipse_vertices)});
}

nlohmann::json SessionStore::deform(const std::string& id, int iid, data::Mode mode) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->model || !s->model->model) throw ModelUnavailableError("no model loaded for session " + id);
  const auto& inst = s->state.instance(iid);
  if (inst.polygons.empty()) throw InvariantError("instance has no polygons");
  std::optional<Box> box;
  if (mode == data::Mode::Annotation && inst.box) box = inst.box;
  const auto crop = train::instance_from_polygons(s->image, inst.polygons, mode, cfg_.augment, box);
  const auto refined = clamp_to_image(train::deform_instance(*s->model->model, crop).image_polygons(),
                                      s->image.height, s->image.width);
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t k = 0; k < refined.size(); ++k) {
    diag.push_back(model::chamfer_distance({inst.polygons[k]}, {refined[k]}, model::LossConfig{}));
  }
  commit(*s, {{"op", "deform"}, {"instance", iid}, {"mode", data::to_string(mode)}, {"polygons", polygons_to_json(refined)}});
  return {{"instance", iid}, {"polygons", polygons_to_json(refined)}, {"chamfer_to_previous", diag},
          {"version", s->state.version}};
}

nlohmann::json SessionStore::edit(const std::string& id, int iid, const nlohmann::json& edits) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  (void)s->state.instance(iid);
  commit(*s, {{"op", "edit"}, {"instance", iid}, {"edits", edits}});
  return {{"instance", iid}, {"polygons", polygons_to_json(s->state.instance(iid).polygons)},
          {"version", s->state.version}};
}

std::string SessionStore::export_json(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  io::PolygonDocument doc;
  for (const auto& i : s->state.instances) doc.instances.push_back({i.label, i.score, i.polygons});
  return io::dump_polygon_json(doc);
}

std::map<int, geometry::BinaryMask> SessionStore::export_masks(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  std::map<int, geometry::BinaryMask> out;
  for (const auto& i : s->state.instances) {
    out.emplace(i.id, geometry::rasterize_mask(i.polygons, s->state.height, s->state.width));
  }
  return out;
}

}  // namespace polydeform::service
