#include <gtest/gtest.h>

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <thread>

#include "polydeform/geometry/raster.hpp"
#include "polydeform/io/png_io.hpp"
#include "polydeform/metrics/metrics.hpp"
#include "polydeform/service/server.hpp"
#include "polydeform/service/session.hpp"
#include "support/grad_cases.hpp"
#include "support/shapes.hpp"

using namespace polydeform;
using namespace polydeform::service;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDocument =
    R"({"instances":[{"label":"car","score":1,"polygons":[[[10,10],[30,10],[30,30],[10,30]]]},)"
    R"({"label":"person","score":0.5,"polygons":[[[40,40],[50,40],[45,50]],[[5,40],[15,40],[10,48]]]}]})";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("polydeform_service_" + name);
  fs::remove_all(dir);
  return dir;
}

Image test_image(int h = 64, int w = 64) {
  Image img(h, w, 3);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 255);
  for (auto& v : img.data) v = static_cast<float>(level(rng)) / 255.0f;
  return img;
}

StoreConfig store_config(const fs::path& dir) {
  StoreConfig cfg;
  cfg.data_dir = dir;
  cfg.augment.crop_size = 32;
  cfg.augment.vertex_spacing = 4;
  return cfg;
}

ModelSnapshot snapshot(const std::string& id, bool identity) {
  auto m = std::make_shared<model::Model<float>>(fixtures::small_model_config(32));
  m->initialize(7);
  if (!identity) {
    std::mt19937_64 rng(8);
    std::normal_distribution<float> noise(0.0f, 0.3f);
    for (auto& v : m->params().get("deformer.head.out.bias").data()) v = noise(rng);
  }
  return {id, m};
}

std::vector<Polygon> polygons_of(const json& instance) { return polygons_from_json(instance.at("polygons")); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string s{std::istreambuf_iterator<char>(in), {}};
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

TEST(Session, CreateFromImageMasksAndBoxes) {
  SessionStore store(store_config(scratch("create")));
  const auto img = test_image();
  EXPECT_TRUE(store.state(store.create(img, {}, {})).at("instances").empty());

  const auto one = store.state(store.create(img, {{fixtures::filled_rect(64, 64, 10, 12, 40, 44), "car"}}, {}));
  ASSERT_EQ(one.at("instances").size(), 1u);
  EXPECT_GE(one.at("instances")[0].at("polygons").size(), 1u);
  EXPECT_EQ(one.at("instances")[0].at("label"), "car");

  auto two = fixtures::filled_rect(64, 64, 5, 5, 20, 20);
  for (int r = 35; r < 55; ++r)
    for (int c = 30; c < 50; ++c) two.set(r, c, true);
  const auto split = store.state(store.create(img, {{two, "person"}}, {}));
  EXPECT_EQ(split.at("instances")[0].at("polygons").size(), 2u);

  const auto boxed = store.state(store.create(img, {}, {{{8, 8, 40, 30}, "truck"}}));
  const auto ellipse = polygons_of(boxed.at("instances")[0]);
  ASSERT_EQ(ellipse.size(), 1u);
  EXPECT_EQ(ellipse[0].size(), 40u);
  for (const auto& v : ellipse[0].vertices()) {
    EXPECT_GE(v.x, 8 - 1e-9);
    EXPECT_LE(v.x, 40 + 1e-9);
  }

  EXPECT_THROW(store.create(img, {{geometry::BinaryMask(32, 32), "x"}}, {}), ValidationError);
  EXPECT_THROW(store.create(img, {{geometry::BinaryMask(64, 64), "x"}}, {}), ValidationError);
  EXPECT_THROW(store.create(img, {}, {{{100, 100, 120, 120}, "x"}}), ValidationError);
  EXPECT_THROW(store.state("s999999"), NotFoundError);
  EXPECT_THROW(store.state("../etc"), NotFoundError);
}

TEST(Session, MoveInsertDeleteAccept) {
  SessionStore store(store_config(scratch("edits")));
  const auto id = store.import_document(test_image(), kDocument);
  const auto before = polygons_of(store.state(id).at("instances")[0])[0];

  auto after = polygons_of(store.edit(id, 0, json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", 1}, {"x", 31}, {"y", 9}}})))[0];
  ASSERT_EQ(after.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    if (k == 1) {
      EXPECT_EQ(after[k], (geometry::Vec2{31, 9}));
    } else {
      EXPECT_EQ(after[k], before[k]);
    }
  }

  after = polygons_of(store.edit(id, 0, json::array({{{"op", "insert"}, {"polygon", 0}, {"edge", 2}}})))[0];
  ASSERT_EQ(after.size(), 5u);
  EXPECT_EQ(after[2], before[2]);
  EXPECT_EQ(after[3], (geometry::Vec2{20, 30}));
  EXPECT_EQ(after[4], before[3]);

  after = polygons_of(store.edit(id, 0, json::array({{{"op", "delete"}, {"polygon", 0}, {"vertex", 3}}})))[0];
  EXPECT_EQ(after.size(), 4u);
  EXPECT_EQ(after[3], before[3]);

  store.edit(id, 1, json::array({{{"op", "accept"}}}));
  EXPECT_TRUE(store.state(id).at("instances")[1].at("accepted").get<bool>());
}

TEST(Session, InvariantViolationsLeaveStateUntouched) {
  SessionStore store(store_config(scratch("invariants")));
  const auto id = store.import_document(test_image(), kDocument);
  const auto before = store.state(id);
  const auto events_before = store.events(id).size();

  EXPECT_THROW(store.edit(id, 1, json::array({{{"op", "delete"}, {"polygon", 0}, {"vertex", 0}}})), InvariantError);
  EXPECT_THROW(store.edit(id, 0, json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", 0}, {"x", 70}, {"y", 3}}})),
               InvariantError);
  // A valid move followed by an invalid delete applies neither.
  EXPECT_THROW(store.edit(id, 1, json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", 0}, {"x", 41}, {"y", 41}},
                                              {{"op", "delete"}, {"polygon", 0}, {"vertex", 1}}})),
               InvariantError);
  EXPECT_THROW(store.edit(id, 0, json::array({{{"op", "spin"}}})), ValidationError);
  EXPECT_THROW(store.edit(id, 0, json::array({{{"op", "move"}, {"polygon", 3}, {"vertex", 0}, {"x", 1}, {"y", 1}}})),
               ValidationError);
  EXPECT_THROW(store.edit(id, 9, json::array()), NotFoundError);

  EXPECT_EQ(store.state(id), before);
  EXPECT_EQ(store.events(id).size(), events_before);
}

TEST(Session, HistoryReplaysToCurrentState) {
  const auto dir = scratch("replay");
  std::string id;
  json live;
  {
    SessionStore store(store_config(dir));
    store.set_model(snapshot("identity", true));
    id = store.create(test_image(), {{fixtures::filled_rect(64, 64, 10, 10, 40, 36), "car"}}, {{{30, 30, 60, 60}, "bus"}});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(1.0, 63.0);
    for (int k = 0; k < 20; ++k) {
      const auto st = store.state(id);
      const int iid = k % 2;
      const auto n = static_cast<int>(st.at("instances")[iid].at("polygons")[0].size());
      json e;
      switch (k % 4) {
        case 0: e = {{"op", "move"}, {"polygon", 0}, {"vertex", k % n}, {"x", u(rng)}, {"y", u(rng)}}; break;
        case 1: e = {{"op", "insert"}, {"polygon", 0}, {"edge", (3 * k) % n}}; break;
        case 2: e = {{"op", "delete"}, {"polygon", 0}, {"vertex", (5 * k) % n}}; break;
        default: e = {{"op", "accept"}}; break;
      }
      store.edit(id, iid, json::array({e}));
    }
    store.deform(id, 0, data::Mode::Annotation);
    live = store.state(id);
    EXPECT_EQ(to_json(replay(store.events(id))), live);
    EXPECT_EQ(live.at("version"), store.events(id).size());
  }
  // A fresh store rebuilds the session from its log on disk.
  SessionStore reopened(store_config(dir));
  EXPECT_EQ(reopened.state(id), live);
  EXPECT_NE(reopened.create(test_image(), {}, {}), id);
}

TEST(Session, ReplayRejectsMalformedHistories) {
  EXPECT_THROW(replay({{{"op", "edit"}, {"instance", 0}, {"edits", json::array()}}}), ValidationError);
  const json create = {{"op", "create"}, {"id", "s1"}, {"width", 10}, {"height", 10}, {"model_id", ""}};
  EXPECT_THROW(replay({create, create}), ValidationError);
  const json add = {{"op", "add_instance"}, {"instance", 0}, {"label", "a"}, {"score", 1.0}, {"box", nullptr},
                    {"polygons", json::array({json::array({{1, 1}, {5, 1}, {1, 5}})})}};
  EXPECT_THROW(replay({create, add, add}), ValidationError);
  EXPECT_EQ(replay({create, add}).instances.size(), 1u);
}

TEST(Export, MatchesGoldenFile) {
  SessionStore store(store_config(scratch("golden")));
  const auto id = store.import_document(test_image(), kDocument);
  store.edit(id, 0,
             json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", 1}, {"x", 32.5}, {"y", 8}},
                          {{"op", "insert"}, {"polygon", 0}, {"edge", 2}},
                          {{"op", "accept"}}}));
  EXPECT_THROW(store.edit(id, 1, json::array({{{"op", "delete"}, {"polygon", 0}, {"vertex", 0}}})), InvariantError);
  store.edit(id, 1, json::array({{{"op", "move"}, {"polygon", 1}, {"vertex", 2}, {"x", 10}, {"y", 47.25}}}));
  EXPECT_EQ(store.export_json(id), read_text(fs::path(POLYDEFORM_FIXTURE_DIR) / "session_export_golden.json"));
}

TEST(Export, ImportRoundTripIsByteIdentical) {
  SessionStore store(store_config(scratch("roundtrip")));
  const auto img = test_image();
  const auto id = store.create(img, {{fixtures::filled_rect(64, 64, 3, 7, 29, 50), "car"}}, {{{20, 30, 55, 62}, "bus"}});
  const auto first = store.export_json(id);
  const auto again = store.export_json(store.import_document(img, first));
  EXPECT_EQ(again, first);
}

TEST(Export, MasksMatchCurrentPolygons) {
  SessionStore store(store_config(scratch("masks")));
  const auto id = store.import_document(test_image(), kDocument);
  const auto masks = store.export_masks(id);
  const auto st = store.state(id);
  ASSERT_EQ(masks.size(), 2u);
  for (const auto& inst : st.at("instances")) {
    const auto expect = geometry::rasterize_mask(polygons_of(inst), 64, 64);
    EXPECT_EQ(metrics::mask_iou(masks.at(inst.at("id").get<int>()), expect), 1.0);
  }
  // The decoded PNG is the same mask.
  const auto png = io::encode_mask_png(masks.at(0));
  EXPECT_EQ(metrics::mask_iou(io::decode_mask_png(png), masks.at(0)), 1.0);
}

TEST(Deform, ErrorsForMissingModelOrIds) {
  SessionStore store(store_config(scratch("deform_errors")));
  const auto id = store.import_document(test_image(), kDocument);
  EXPECT_THROW(store.deform(id, 0, data::Mode::Annotation), ModelUnavailableError);
  store.set_model(snapshot("identity", true));
  // The session pinned "no model" at creation.
  EXPECT_THROW(store.deform(id, 0, data::Mode::Annotation), ModelUnavailableError);
  const auto id2 = store.import_document(test_image(), kDocument);
  EXPECT_THROW(store.deform(id2, 5, data::Mode::Annotation), NotFoundError);
  EXPECT_THROW(store.deform("s424242", 0, data::Mode::Annotation), NotFoundError);
}

TEST(Deform, IdentityModelKeepsPolygons) {
  SessionStore store(store_config(scratch("deform_identity")));
  store.set_model(snapshot("identity", true));
  const auto id = store.import_document(test_image(), kDocument);
  for (int iid : {0, 1}) {
    const auto before = polygons_of(store.state(id).at("instances")[iid]);
    for (auto mode : {data::Mode::Annotation, data::Mode::Detection}) {
      const auto res = store.deform(id, iid, mode);
      const auto after = polygons_of(res);
      ASSERT_EQ(after.size(), before.size());
      for (std::size_t p = 0; p < after.size(); ++p) {
        ASSERT_EQ(after[p].size(), before[p].size());
        for (std::size_t k = 0; k < after[p].size(); ++k) {
          EXPECT_NEAR(after[p][k].x, before[p][k].x, 1e-3);
          EXPECT_NEAR(after[p][k].y, before[p][k].y, 1e-3);
        }
        // Edge lengths that drift past an integer change the sample count, so
        // the diagnostic only stays below half a sample step.
        EXPECT_LT(res.at("chamfer_to_previous")[p].get<double>(), 0.5);
      }
    }
  }
  const auto events = store.events(id);
  EXPECT_EQ(events.back().at("op"), "deform");
  EXPECT_EQ(events.back().at("mode"), "detection");
}

TEST(Deform, SessionsKeepTheirModelSnapshot) {
  SessionStore store(store_config(scratch("pinning")));
  store.set_model(snapshot("identity", true));
  const auto old_id = store.import_document(test_image(), kDocument);
  store.set_model(snapshot("moved", false));
  const auto new_id = store.import_document(test_image(), kDocument);
  EXPECT_EQ(store.state(old_id).at("model_id"), "identity");
  EXPECT_EQ(store.state(new_id).at("model_id"), "moved");

  const auto before = polygons_of(store.state(old_id).at("instances")[0]);
  const auto kept = polygons_of(store.deform(old_id, 0, data::Mode::Annotation));
  EXPECT_NEAR(kept[0][0].x, before[0][0].x, 1e-3);
  const auto moved = polygons_of(store.deform(new_id, 0, data::Mode::Annotation));
  ASSERT_EQ(moved[0].size(), before[0].size());
  double shift = 0;
  for (std::size_t k = 0; k < before[0].size(); ++k) shift += std::abs(moved[0][k].x - before[0][k].x);
  EXPECT_GT(shift, 1e-2);
}

TEST(Concurrency, SessionsStayConsistentUnderParallelEdits) {
  SessionStore store(store_config(scratch("concurrency")));
  const auto img = test_image();
  const std::vector<std::string> ids{store.import_document(img, kDocument), store.import_document(img, kDocument)};
  constexpr int kThreads = 6, kEdits = 25;
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      const auto& id = ids[static_cast<std::size_t>(t % 2)];
      for (int k = 0; k < kEdits; ++k) {
        const double x = 10 + (t * kEdits + k) % 40;
        store.edit(id, 0, json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", t % 4}, {"x", x}, {"y", 12.5}}}));
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& id : ids) {
    const auto st = store.state(id);
    // create + 2 add_instance + one event per edit
    EXPECT_EQ(st.at("version"), 3 + kThreads / 2 * kEdits);
    EXPECT_EQ(to_json(replay(store.events(id))), st);
  }
}

TEST(Geometry, EllipseInBox) {
  const auto e = ellipse_in_box({0, 0, 20, 10}, 4);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_NEAR(e[0].x, 20, 1e-12);
  EXPECT_NEAR(e[0].y, 5, 1e-12);
  EXPECT_NEAR(e[1].x, 10, 1e-12);
  EXPECT_NEAR(e[1].y, 10, 1e-12);
  EXPECT_THROW(ellipse_in_box({0, 0, 1, 1}, 2), ContractError);
}

class HttpTest : public ::testing::Test {
 protected:
  void start(bool with_model) {
    dir_ = scratch(std::string("http_") + (with_model ? "model" : "bare"));
    fs::create_directories(dir_ / "static");
    std::ofstream(dir_ / "static" / "index.html") << "<html>annotator</html>";
    store_ = std::make_unique<SessionStore>(store_config(dir_ / "data"));
    if (with_model) store_->set_model(snapshot("identity", true));
    server_ = std::make_unique<Server>(*store_, dir_ / "static");
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int k = 0; k < 200 && !server_->running(); ++k) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  json create_body() const {
    const auto png = io::encode_png(test_image());
    const auto mask = io::encode_mask_png(fixtures::filled_rect(64, 64, 10, 10, 40, 40));
    return {{"image_png", io::base64_encode(png)}, {"masks", json::array({{{"png", io::base64_encode(mask)}, {"label", "car"}}})}};
  }

  fs::path dir_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<Server> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = -1;
};

TEST_F(HttpTest, FullWorkflow) {
  start(true);
  auto res = client_->Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("model_loaded"), true);

  res = client_->Post("/sessions", create_body().dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const auto created = json::parse(res->body);
  const auto id = created.at("id").get<std::string>();
  ASSERT_EQ(created.at("instances").size(), 1u);

  res = client_->Get("/sessions/" + id);
  EXPECT_EQ(json::parse(res->body), created);

  res = client_->Get("/sessions/" + id + "/image");
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");

  const json edits = {{"edits", json::array({{{"op", "move"}, {"polygon", 0}, {"vertex", 0}, {"x", 12}, {"y", 11}}})}};
  res = client_->Patch("/sessions/" + id + "/instances/0/vertices", edits.dump(), "application/json");
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(polygons_of(json::parse(res->body))[0][0], (geometry::Vec2{12, 11}));

  res = client_->Post("/sessions/" + id + "/instances/0/deform", R"({"mode":"annotation"})", "application/json");
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(json::parse(res->body).at("chamfer_to_previous").size(), 1u);

  res = client_->Post("/sessions/" + id + "/instances", R"({"box":[5,5,30,25],"label":"bus"})", "application/json");
  ASSERT_EQ(res->status, 201) << res->body;
  EXPECT_EQ(json::parse(res->body).at("id"), 1);

  res = client_->Get("/sessions/" + id + "/export");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, store_->export_json(id));

  res = client_->Get("/sessions/" + id + "/export?masks=1");
  const auto with_masks = json::parse(res->body);
  const auto mask = io::decode_mask_png(io::base64_decode(with_masks.at("masks").at("0").get<std::string>()));
  EXPECT_EQ(metrics::mask_iou(mask, store_->export_masks(id).at(0)), 1.0);

  res = client_->Get("/sessions/" + id + "/events");
  EXPECT_EQ(json::parse(res->body).size(), 5u);

  res = client_->Post("/sessions", json{{"image_png", io::base64_encode(io::encode_png(test_image()))}, {"document", kDocument}}.dump(),
                      "application/json");
  ASSERT_EQ(res->status, 201) << res->body;
  EXPECT_EQ(json::parse(res->body).at("instances").size(), 2u);

  res = client_->Get("/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "<html>annotator</html>");
}

TEST_F(HttpTest, ErrorStatusCodes) {
  start(false);
  EXPECT_EQ(json::parse(client_->Get("/healthz")->body).at("model_loaded"), false);
  EXPECT_EQ(client_->Get("/sessions/s000404")->status, 404);
  EXPECT_EQ(client_->Post("/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/sessions", R"({"image_png":"AAAA"})", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/sessions", R"({"image_png":7})", "application/json")->status, 400);

  auto res = client_->Post("/sessions", json{{"image_png", io::base64_encode(io::encode_png(test_image()))}, {"document", kDocument}}.dump(),
                           "application/json");
  ASSERT_EQ(res->status, 201);
  const auto id = json::parse(res->body).at("id").get<std::string>();

  res = client_->Post("/sessions/" + id + "/instances/0/deform", "", "application/json");
  EXPECT_EQ(res->status, 503);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
  EXPECT_EQ(client_->Post("/sessions/" + id + "/instances/x/deform", "", "application/json")->status, 404);
  EXPECT_EQ(client_->Post("/sessions/" + id + "/instances/0/deform", R"({"mode":"sideways"})", "application/json")->status, 400);

  const json bad_delete = {{"edits", json::array({{{"op", "delete"}, {"polygon", 0}, {"vertex", 0}}})}};
  EXPECT_EQ(client_->Patch("/sessions/" + id + "/instances/1/vertices", bad_delete.dump(), "application/json")->status, 422);
  EXPECT_EQ(client_->Patch("/sessions/" + id + "/instances/7/vertices", bad_delete.dump(), "application/json")->status, 404);
  EXPECT_EQ(client_->Patch("/sessions/" + id + "/instances/0/vertices", "{}", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/sessions/" + id + "/instances", R"({"box":[5,5,1,1]})", "application/json")->status, 400);
  EXPECT_EQ(client_->Get("/sessions/nope/export")->status, 404);
}
