// polydeform: dataset generation, training, evaluation, single-instance
// deformation and the annotation service.
//
// Exit codes: 0 success, 1 other failure, 2 invalid input or configuration,
// 3 numerical abort.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "polydeform/autodiff/checkpoint.hpp"
#include "polydeform/data/dataset.hpp"
#include "polydeform/error.hpp"
#include "polydeform/geometry/box_ops.hpp"
#include "polydeform/io/png_io.hpp"
#include "polydeform/io/polygon_json.hpp"
#include "polydeform/model/model.hpp"
#include "polydeform/service/server.hpp"
#include "polydeform/train/evaluate.hpp"
#include "polydeform/train/inference.hpp"
#include "polydeform/train/trainer.hpp"

namespace pd = polydeform;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw pd::ValidationError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw pd::ValidationError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw pd::ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "dataset" && key != "train" && key != "eval" && key != "deform" && key != "serve") {
      throw pd::ValidationError("config: unknown section '" + key + "'");
    }
  }
  return j;
}

json section(const json& cfg, const char* name) { return cfg.contains(name) ? cfg.at(name) : json::object(); }

/// {split?, mode?, augment?, max_instances?}
pd::train::EvalOptions eval_options(const json& j) {
  pd::train::EvalOptions o;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "split") o.split = v.get<std::string>();
      else if (key == "mode") o.mode = pd::data::parse_mode(v.get<std::string>());
      else if (key == "augment") o.augment = pd::data::augment_config_from_json(v);
      else if (key == "max_instances") o.max_instances = v.get<int>();
      else throw pd::ValidationError("eval: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw pd::ValidationError("eval." + key + ": " + e.what());
    }
  }
  return o;
}

pd::Image read_image(const std::string& path) { return pd::io::decode_png(pd::io::read_file(path)); }

void write_text(const fs::path& path, const std::string& text) {
  pd::io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

pd::geometry::Box parse_box(const std::string& s) {
  pd::geometry::Box b;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(s);
  if (!(in >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1) || c1 != ',' || c2 != ',' || c3 != ',' ||
      !(b.x1 > b.x0 && b.y1 > b.y0)) {
    throw pd::ValidationError("--box must be x0,y0,x1,y1 with x1 > x0 and y1 > y0");
  }
  return b;
}

pd::service::Server* g_server = nullptr;
void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polydeform: polygon refinement with a self-attention deformer"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config with dataset/train/eval/deform/serve sections");
    sub->add_option("--seed", seed, "Seed overriding the config");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen);
  std::string out_dir;
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  add_common(train);
  std::string data_dir, ckpt_out, log_path;
  double time_budget = 0.0;
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", ckpt_out, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Write the metrics timeline as JSON lines");
  train->add_option("--time-budget", time_budget, "Wall-clock limit in seconds (breaks reproducibility)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval);
  std::string ckpt_in, report_path, split, mode_name, expect_hash;
  int max_instances = -1;
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--checkpoint", ckpt_in, "Checkpoint path")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--mode", mode_name, "detection or annotation");
  eval->add_option("--max-instances", max_instances, "Cap on evaluated instances");
  eval->add_option("--json", report_path, "Write the report as JSON");
  eval->add_option("--expect-config-hash", expect_hash, "Reject checkpoints with another architecture hash");

  auto* deform = app.add_subcommand("deform", "Refine one instance given an image and mask");
  add_common(deform);
  std::string image_path, mask_path, box_text, label = "object";
  deform->add_option("--checkpoint", ckpt_in, "Checkpoint path")->required();
  deform->add_option("--image", image_path, "Image PNG")->required();
  deform->add_option("--mask", mask_path, "Initial mask PNG")->required();
  deform->add_option("--mode", mode_name, "detection or annotation");
  deform->add_option("--box", box_text, "Annotation box x0,y0,x1,y1");
  deform->add_option("--label", label, "Label written to the output");
  deform->add_option("--out", out_dir, "Output polygon JSON (stdout if omitted)");

  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  add_common(serve);
  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  serve->add_option("--checkpoint", ckpt_in, "Checkpoint path (env POLYDEFORM_CHECKPOINT)");
  serve->add_option("--data-dir", data_dir, "Session storage (env POLYDEFORM_DATA_DIR)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--static", static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    const json cfg = load_config(config_path);

    if (*gen) {
      auto dc = pd::data::dataset_config_from_json(section(cfg, "dataset"));
      if (seed) dc.seed = *seed;
      const auto ds = pd::data::build_dataset(dc);
      pd::data::save_dataset(ds, out_dir);
      for (const auto& s : ds.splits) {
        std::cout << s.name << ": " << s.scenes.size() << " scenes, " << s.items.size() << " instances\n";
      }
      return 0;
    }

    if (*train) {
      auto tc = pd::train::train_config_from_json(section(cfg, "train"));
      if (seed) tc.seed = *seed;
      const auto ds = pd::data::load_dataset(data_dir);
      std::ofstream log;
      if (!log_path.empty()) log.open(log_path);
      pd::train::TrainOptions opts;
      opts.abort_checkpoint_path = ckpt_out + ".last-good";
      opts.time_budget_seconds = time_budget;
      opts.on_log = [&](const json& e) {
        std::cout << e.dump() << std::endl;
        if (log) log << e.dump() << "\n";
      };
      const auto res = pd::train::train(tc, ds, opts);
      pd::autodiff::save_checkpoint(ckpt_out, res.checkpoint);
      std::cout << "steps " << res.steps << ", skipped " << res.skipped
                << (res.budget_exhausted ? " (time budget reached)" : "") << "\n";
      return 0;
    }

    if (*eval) {
      auto eo = eval_options(section(cfg, "eval"));
      if (!split.empty()) eo.split = split;
      if (!mode_name.empty()) eo.mode = pd::data::parse_mode(mode_name);
      if (max_instances >= 0) eo.max_instances = max_instances;
      const auto ds = pd::data::load_dataset(data_dir);
      const auto ckpt = pd::autodiff::load_checkpoint(ckpt_in);
      const auto report = pd::train::evaluate(ckpt, ds, eo, expect_hash);
      std::cout << pd::train::format_report(report);
      if (!report_path.empty()) write_text(report_path, pd::train::to_json(report).dump(2) + "\n");
      return 0;
    }

    if (*deform) {
      const json dj = section(cfg, "deform");
      pd::data::AugmentConfig augment;
      pd::data::Mode mode = pd::data::Mode::Detection;
      for (const auto& [key, v] : dj.items()) {
        if (key == "augment") augment = pd::data::augment_config_from_json(v);
        else if (key == "mode") mode = pd::data::parse_mode(v.get<std::string>());
        else throw pd::ValidationError("deform: unknown key '" + key + "'");
      }
      if (!mode_name.empty()) mode = pd::data::parse_mode(mode_name);
      const auto model = pd::model::load_model<float>(pd::autodiff::load_checkpoint(ckpt_in));
      const auto image = read_image(image_path);
      const auto mask = pd::io::decode_mask_png(pd::io::read_file(mask_path));
      std::optional<pd::geometry::Box> box;
      if (!box_text.empty()) box = parse_box(box_text);
      auto inst = pd::train::instance_from_mask(image, mask, mode, augment, box);
      const auto refined = pd::train::deform_instance(*model, inst);
      pd::io::PolygonDocument doc;
      doc.instances.push_back({label, 1.0, refined.image_polygons()});
      const auto text = pd::io::dump_polygon_json(doc);
      if (out_dir.empty()) std::cout << text << "\n";
      else write_text(out_dir, text + "\n");
      return 0;
    }

    if (*serve) {
      if (ckpt_in.empty()) {
        if (const char* env = std::getenv("POLYDEFORM_CHECKPOINT")) ckpt_in = env;
      }
      if (data_dir.empty()) {
        const char* env = std::getenv("POLYDEFORM_DATA_DIR");
        data_dir = env != nullptr ? env : "polydeform-sessions";
      }
      const json sj = section(cfg, "serve");
      pd::service::StoreConfig sc;
      sc.data_dir = data_dir;
      for (const auto& [key, v] : sj.items()) {
        if (key == "augment") sc.augment = pd::data::augment_config_from_json(v);
        else if (key == "ellipse_vertices") sc.ellipse_vertices = v.get<int>();
        else throw pd::ValidationError("serve: unknown key '" + key + "'");
      }
      pd::service::SessionStore store(sc);
      if (!ckpt_in.empty()) {
        const auto ckpt = pd::autodiff::load_checkpoint(ckpt_in);
        std::shared_ptr<const pd::model::Model<float>> model = pd::model::load_model<float>(ckpt);
        store.set_model({ckpt.manifest.value("config_hash", std::string()) + ":" +
                             std::to_string(ckpt.manifest.value("step", std::int64_t{0})),
                         model});
      }
      pd::service::Server server(store, static_dir);
      const int bound = server.bind(host, port);
      if (bound < 0) throw pd::Error("cannot bind " + host + ":" + std::to_string(port));
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      server.listen_after_bind();
      g_server = nullptr;
      return 0;
    }
  } catch (const pd::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const pd::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const pd::CompatibilityError& e) {
    std::cerr << "incompatible: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
