#include "polydeform/service/server.hpp"

#include <httplib.h>

#include "polydeform/io/png_io.hpp"

namespace polydeform::service {
namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed JSON body: ") + e.what());
  }
}

std::vector<std::uint8_t> decode_b64_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ValidationError(std::string("field '") + key + "' must be a base64 string");
  }
  return io::base64_decode(j.at(key).get<std::string>());
}

std::string label_of(const nlohmann::json& j) {
  if (!j.contains("label")) return "object";
  if (!j.at("label").is_string()) throw ValidationError("label must be a string");
  return j.at("label").get<std::string>();
}

Box parse_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("box must be [x0, y0, x1, y1]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError("box coordinates must be numbers");
  }
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(b.x1 > b.x0 && b.y1 > b.y0)) throw ValidationError("box must have positive width and height");
  return b;
}

int parse_iid(const httplib::Request& req) {
  const auto& s = req.path_params.at("iid");
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw NotFoundError("no instance '" + s + "'");
  }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_json(res, {{"error", e.what()}}, 404);
    } catch (const ModelUnavailableError& e) {
      send_json(res, {{"error", e.what()}}, 503);
    } catch (const InvariantError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const DegenerateError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const ValidationError& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const Error& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

}  // namespace

struct Server::Impl {
  SessionStore& store;
  httplib::Server http;

  explicit Impl(SessionStore& s) : store(s) {}
};

Server::Server(SessionStore& store, std::filesystem::path static_dir) : impl_(std::make_unique<Impl>(store)) {
  auto& http = impl_->http;
  SessionStore* st = &store;

  http.Get("/healthz", guarded([st](const httplib::Request&, httplib::Response& res) {
             const auto m = st->current_model();
             send_json(res, {{"status", "ok"}, {"model_loaded", m.has_value()}, {"model_id", m ? m->id : ""}});
           }));

  http.Post("/sessions", guarded([st](const httplib::Request& req, httplib::Response& res) {
              const auto body = parse_body(req);
              const Image image = io::decode_png(decode_b64_field(body, "image_png"));
              std::string id;
              if (body.contains("document")) {
                const auto& d = body.at("document");
                id = st->import_document(image, d.is_string() ? d.get<std::string>() : d.dump());
              } else {
                std::vector<SessionStore::MaskInput> masks;
                std::vector<SessionStore::BoxInput> boxes;
                for (const auto& m : body.value("masks", nlohmann::json::array())) {
                  masks.push_back({io::decode_mask_png(decode_b64_field(m, "png")), label_of(m)});
                }
                for (const auto& b : body.value("boxes", nlohmann::json::array())) {
                  if (!b.contains("box")) throw ValidationError("box entries need a 'box'");
                  boxes.push_back({parse_box(b.at("box")), label_of(b)});
                }
                id = st->create(image, masks, boxes);
              }
              send_json(res, st->state(id), 201);
            }));

  http.Get("/sessions/:id", guarded([st](const httplib::Request& req, httplib::Response& res) {
             send_json(res, st->state(req.path_params.at("id")));
           }));

  http.Get("/sessions/:id/image", guarded([st](const httplib::Request& req, httplib::Response& res) {
             const auto png = st->image_png(req.path_params.at("id"));
             res.set_content(std::string(png.begin(), png.end()), "image/png");
           }));

  http.Get("/sessions/:id/events", guarded([st](const httplib::Request& req, httplib::Response& res) {
             send_json(res, st->events(req.path_params.at("id")));
           }));

  http.Post("/sessions/:id/instances", guarded([st](const httplib::Request& req, httplib::Response& res) {
              const auto body = parse_body(req);
              const auto& id = req.path_params.at("id");
              nlohmann::json inst;
              if (body.contains("box")) {
                inst = st->add_box_instance(id, {parse_box(body.at("box")), label_of(body)});
              } else if (body.contains("mask_png")) {
                inst = st->add_mask_instance(id, {io::decode_mask_png(decode_b64_field(body, "mask_png")), label_of(body)});
              } else {
                throw ValidationError("instance needs a 'box' or a 'mask_png'");
              }
              send_json(res, inst, 201);
            }));

  http.Post("/sessions/:id/instances/:iid/deform",
            guarded([st](const httplib::Request& req, httplib::Response& res) {
              data::Mode mode = data::Mode::Annotation;
              if (!req.body.empty()) {
                const auto body = parse_body(req);
                if (body.contains("mode")) {
                  if (!body.at("mode").is_string()) throw ValidationError("mode must be a string");
                  mode = data::parse_mode(body.at("mode").get<std::string>());
                }
              }
              send_json(res, st->deform(req.path_params.at("id"), parse_iid(req), mode));
            }));

  http.Patch("/sessions/:id/instances/:iid/vertices",
             guarded([st](const httplib::Request& req, httplib::Response& res) {
               const auto body = parse_body(req);
               if (!body.contains("edits")) throw ValidationError("body needs 'edits'");
               send_json(res, st->edit(req.path_params.at("id"), parse_iid(req), body.at("edits")));
             }));

  http.Get("/sessions/:id/export", guarded([st](const httplib::Request& req, httplib::Response& res) {
             const auto& id = req.path_params.at("id");
             const auto doc = st->export_json(id);
             if (req.get_param_value("masks") != "1") {
               res.set_content(doc, kJson);
               return;
             }
             nlohmann::json masks = nlohmann::json::object();
             for (const auto& [iid, m] : st->export_masks(id)) masks[std::to_string(iid)] = io::base64_encode(io::encode_mask_png(m));
             send_json(res, {{"document", nlohmann::json::parse(doc)}, {"masks", masks}});
           }));

  if (!static_dir.empty()) http.set_mount_point("/", static_dir.string());
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool Server::listen_after_bind() { return impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

}  // namespace polydeform::service
