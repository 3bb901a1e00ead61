// mgnm: command-line front end (synth, train, eval, ablate, infer, plot, dump-graph, rerun).

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgnm/ablation.hpp"
#include "mgnm/config.hpp"
#include "mgnm/dataset.hpp"
#include "mgnm/errors.hpp"
#include "mgnm/hico_convert.hpp"
#include "mgnm/pipeline.hpp"
#include "mgnm/rng.hpp"
#include "mgnm/synthetic.hpp"
#include "plot.hpp"

#ifndef MGNM_GIT_REVISION
#define MGNM_GIT_REVISION "unknown"
#endif

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Timings {
  json phases = json::object();
  Clock::time_point start = Clock::now();

  template <typename F>
  auto time(const std::string& name, F&& f) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      phases[name] = std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto r = f();
      phases[name] = std::chrono::duration<double>(Clock::now() - t0).count();
      return r;
    }
  }
  json finish() {
    json t = phases;
    t["total"] = std::chrono::duration<double>(Clock::now() - start).count();
    return t;
  }
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw mgnm::Error("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw mgnm::Error("cannot write " + p.string());
  out << text;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Options shared by the commands that build a model.
struct RunInputs {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
};

void add_run_options(CLI::App* cmd, RunInputs& in) {
  cmd->add_option("-c,--config", in.config_path, "JSON config file (defaults apply when omitted)");
  cmd->add_option("-d,--data", in.data_path, "Dataset file; omitted means generate from the synth section");
  cmd->add_option("-o,--out", in.out_dir, "Output directory (overrides config and MGNM_OUT_DIR)");
  cmd->add_option("--seed", in.seed, "Training seed override");
  cmd->add_option("--epochs", in.epochs, "Epoch count override");
  cmd->add_option("--lr", in.lr, "Learning-rate override");
}

mgnm::RunConfig resolve_config(const RunInputs& in) {
  mgnm::RunConfig cfg = in.config_path.empty() ? mgnm::RunConfig{} : mgnm::load_config(in.config_path);
  mgnm::apply_environment(cfg);
  if (in.seed) cfg.train.seed = *in.seed;
  if (in.epochs) cfg.train.epochs = *in.epochs;
  if (in.lr) cfg.train.lr = *in.lr;
  if (!in.out_dir.empty()) cfg.output_dir = in.out_dir;
  cfg.validate();
  return cfg;
}

struct DataSource {
  mgnm::Dataset dataset;
  json record;
};

DataSource load_data(const std::string& path, const mgnm::RunConfig& cfg) {
  if (path.empty()) {
    mgnm::Dataset d = mgnm::synth::generate_synthetic(cfg.synth);
    return {std::move(d), json{{"synth", true}}};
  }
  const std::string text = read_text(path);
  mgnm::Dataset d = mgnm::dataset_from_json(text);
  return {std::move(d), json{{"path", fs::absolute(path).string()}, {"hash", hex(mgnm::rng::hash(text))}}};
}

void write_manifest(const fs::path& dir, const std::string& command, const mgnm::RunConfig& cfg,
                    const json& data, const json& extra, Timings& timings) {
  json m{{"command", command},
         {"config_hash", hex(cfg.hash())},
         {"seed", cfg.train.seed},
         {"git_revision", MGNM_GIT_REVISION},
         {"config", json::parse(mgnm::config_to_json(cfg))},
         {"data", data},
         {"timings", timings.finish()}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void print_report(const mgnm::EvalReport& r) { std::cout << mgnm::report_to_text(r); }

// ---- commands ------------------------------------------------------------

int cmd_synth(const std::string& task, int scenes, int test_scenes, std::uint64_t seed, int categories,
              double long_tail, const std::string& config_path, const std::string& out) {
  mgnm::synth::SynthTaskSpec spec;
  if (!config_path.empty()) spec = mgnm::load_config(config_path).synth;
  if (!task.empty()) spec.kind = mgnm::synth::parse_task_kind(task);
  if (scenes > 0) spec.train_scenes = scenes;
  if (test_scenes >= 0) spec.test_scenes = test_scenes;
  if (seed != ~0ull) spec.seed = seed;
  if (categories > 0) spec.num_categories = categories;
  if (long_tail >= 0) spec.long_tail = long_tail;
  const mgnm::Dataset d = mgnm::synth::generate_synthetic(spec);
  mgnm::save_dataset(out, d);
  std::cout << "wrote " << d.train.size() << " train / " << d.test.size() << " test scenes to " << out << "\n";
  return 0;
}

int cmd_train(const RunInputs& in, const std::string& resume) {
  Timings timings;
  const mgnm::RunConfig cfg = resolve_config(in);
  DataSource data = timings.time("load", [&] { return load_data(in.data_path, cfg); });
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  const mgnm::ModelConfig model_cfg = cfg.resolved_model(data.dataset);
  const mgnm::Model model(model_cfg);
  const mgnm::ProviderSet providers = mgnm::ProviderSet::from_config(cfg.resolved_providers(data.dataset));
  auto scenes = timings.time("features", [&] {
    return mgnm::training::prepare_scenes(data.dataset.train, providers, data.dataset.categories, model_cfg);
  });
  const auto test = mgnm::extract_all(data.dataset.test, providers, data.dataset.categories, model_cfg);

  mgnm::training::Trainer trainer(model, cfg.train, std::move(scenes));
  if (!resume.empty()) {
    trainer.resume(resume);
  } else {
    fs::remove(dir / "metrics.jsonl");
  }
  trainer.set_metrics_log(dir / "metrics.jsonl");
  trainer.set_checkpoint_dir(dir);
  const auto splits = mgnm::evaluation::SplitRegistry::from_training(data.dataset.hoi, data.dataset.train_ground_truth());
  const auto test_gt = data.dataset.test_ground_truth();
  trainer.set_eval_hook([&](const mgnm::Model& m, mgnm::ParameterStore& store) {
    const auto preds = mgnm::predict(m, store, test, data.dataset.hoi);
    return mgnm::evaluation::evaluate_hico(preds, test_gt, splits, mgnm::evaluation::HicoSetting::Default).full;
  });

  timings.time("train", [&] {
    while (trainer.epoch() < cfg.train.epochs) {
      const auto rec = trainer.run_epoch();
      std::printf("epoch %d loss %.6f%s\n", rec.epoch, rec.loss,
                  rec.eval_map ? (" mAP " + std::to_string(*rec.eval_map)).c_str() : "");
    }
  });
  const auto preds = timings.time("predict", [&] { return mgnm::predict(model, trainer.store(), test, data.dataset.hoi); });
  const mgnm::EvalReport report = mgnm::evaluate_all(preds, data.dataset);
  mgnm::save_predictions(dir / "predictions.json", preds);
  write_text(dir / "report.json", mgnm::report_to_json(report));
  print_report(report);
  json extra{{"metrics", json::parse(mgnm::report_to_json(report))}};
  if (!resume.empty()) extra["resumed_from"] = fs::absolute(resume).string();
  write_manifest(dir, "train", cfg, data.record, extra, timings);
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& preds_path, const std::string& out) {
  const mgnm::Dataset d = mgnm::load_dataset(data_path);
  const auto preds = mgnm::load_predictions(preds_path);
  const mgnm::EvalReport report = mgnm::evaluate_all(preds, d);
  print_report(report);
  if (!out.empty()) write_text(out, mgnm::report_to_json(report));
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(const RunInputs& in, const std::string& stages) {
  Timings timings;
  const mgnm::RunConfig cfg = resolve_config(in);
  DataSource data = load_data(in.data_path, cfg);
  const fs::path dir = cfg.output_dir;
  const auto list = split_list(stages);
  for (const std::string& s : list) mgnm::evaluation::without_stage({}, s);
  const auto report = timings.time("ablate", [&] {
    return mgnm::evaluation::ablation_run(cfg, data.dataset, list, dir);
  });
  std::cout << report.to_markdown();
  write_text(dir / "ablation.md", report.to_markdown());
  write_text(dir / "ablation.json", report.to_json());
  write_manifest(dir, "ablate", cfg, data.record,
                 json{{"stages", list}, {"metrics", json::parse(report.to_json())}}, timings);
  return 0;
}

json matrix_json(const mgnm::Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
  }
  return rows;
}

int cmd_infer(const RunInputs& in, const std::string& checkpoint, const std::string& split, const std::string& out,
              const std::string& attention_out) {
  const mgnm::RunConfig cfg = resolve_config(in);
  DataSource data = load_data(in.data_path, cfg);
  const mgnm::ModelConfig model_cfg = cfg.resolved_model(data.dataset);
  const mgnm::Model model(model_cfg);
  mgnm::ParameterStore store(cfg.train.seed);
  model.register_parameters(store);
  mgnm::load_checkpoint(checkpoint, store, model_cfg.hash());
  const mgnm::ProviderSet providers = mgnm::ProviderSet::from_config(cfg.resolved_providers(data.dataset));
  const auto& scenes = split == "train" ? data.dataset.train : data.dataset.test;
  const auto features = mgnm::extract_all(scenes, providers, data.dataset.categories, model_cfg);
  std::vector<mgnm::HoiPrediction> preds;
  std::vector<mgnm::AttentionMap> maps;
  for (const auto& f : features) {
    auto p = mgnm::predict_scene(model, store, f, data.dataset.hoi, attention_out.empty() ? nullptr : &maps);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  mgnm::save_predictions(out, preds);
  std::cout << "wrote " << preds.size() << " predictions for " << features.size() << " images to " << out << "\n";
  if (!attention_out.empty()) {
    json a = json::array();
    for (const auto& m : maps) {
      a.push_back({{"image", m.image_key}, {"layer", m.layer}, {"head", m.head},
                   {"grid", cfg.providers.backbone_grid}, {"weights", matrix_json(m.weights)}});
    }
    write_text(attention_out, json{{"format", "mgnm-attention"}, {"version", 1}, {"maps", a}}.dump() + "\n");
  }
  return 0;
}

int cmd_plot_pr(const std::string& data_path, const std::string& preds_path, const std::vector<int>& classes,
                const std::string& out) {
  const mgnm::Dataset d = mgnm::load_dataset(data_path);
  const auto preds = mgnm::load_predictions(preds_path);
  const auto test = d.test_ground_truth();
  std::vector<mgnm::plot::Series> series;
  std::vector<int> ids = classes;
  if (ids.empty()) {
    for (int c = 0; c < static_cast<int>(d.hoi.size()) && c < 8; ++c) ids.push_back(c);
  }
  for (int c : ids) {
    if (c < 0 || c >= static_cast<int>(d.hoi.size())) throw mgnm::ConfigError("HOI class " + std::to_string(c) + " out of range");
    std::size_t num_gt = 0;
    const auto flags = mgnm::evaluation::class_flags(preds, test, d.hoi, c, mgnm::evaluation::HicoSetting::Default, &num_gt);
    const auto& cls = d.hoi.at(c);
    char label[160];
    std::snprintf(label, sizeof label, "%s %s (AP %.3f)", d.actions.name(cls.action).c_str(),
                  d.categories.name(cls.object).c_str(), mgnm::evaluation::average_precision(flags, num_gt));
    series.push_back({label, mgnm::evaluation::pr_curve(flags, num_gt)});
  }
  write_text(out, mgnm::plot::pr_curves_svg(series, "Precision-recall"));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_plot_attention(const std::string& path, const std::string& image, int layer, int head, int pair,
                       const std::string& out) {
  const json j = json::parse(read_text(path));
  for (const json& m : j.at("maps")) {
    if (m.at("image") != image || m.at("layer") != layer || m.at("head") != head) continue;
    const json& rows = m.at("weights");
    if (pair < 0 || pair >= static_cast<int>(rows.size())) throw mgnm::ConfigError("pair index out of range");
    const auto w = rows[static_cast<std::size_t>(pair)].get<std::vector<double>>();
    const int grid = m.value("grid", 7);
    if (static_cast<int>(w.size()) != grid * grid) throw mgnm::ConfigError("attention row is not a square grid");
    mgnm::Matrix cells(grid, grid);
    for (int i = 0; i < grid * grid; ++i) cells(i / grid, i % grid) = w[static_cast<std::size_t>(i)];
    write_text(out, mgnm::plot::heatmap_svg(cells, image + " layer " + std::to_string(layer) + " head " +
                                                       std::to_string(head) + " pair " + std::to_string(pair)));
    std::cout << "wrote " << out << "\n";
    return 0;
  }
  throw mgnm::ConfigError("no attention map for that image, layer and head");
}

int cmd_dump_graph(const RunInputs& in, const std::string& checkpoint, const std::string& image, const std::string& out) {
  const mgnm::RunConfig cfg = resolve_config(in);
  DataSource data = load_data(in.data_path, cfg);
  const mgnm::ModelConfig model_cfg = cfg.resolved_model(data.dataset);
  const mgnm::Model model(model_cfg);
  mgnm::ParameterStore store(cfg.train.seed);
  model.register_parameters(store);
  if (!checkpoint.empty()) mgnm::load_checkpoint(checkpoint, store, model_cfg.hash());
  const mgnm::ProviderSet providers = mgnm::ProviderSet::from_config(cfg.resolved_providers(data.dataset));
  const mgnm::SceneRecord* scene = nullptr;
  for (const auto* split : {&data.dataset.train, &data.dataset.test}) {
    for (const auto& s : *split) {
      if (s.image_key == image) scene = &s;
    }
  }
  if (!scene) throw mgnm::ConfigError("image '" + image + "' not in the dataset");
  const auto features = mgnm::extract_features(*scene, providers, data.dataset.categories, model_cfg);
  if (!features) throw mgnm::Error("image '" + image + "' has no human-object pair");
  mgnm::ad::Tape tape(false);
  const mgnm::ForwardResult r = model.forward(tape, store, *features, true);
  json iterations = json::array();
  for (const auto& s : r.snapshots) {
    iterations.push_back({{"step", s.step}, {"N", matrix_json(s.nodes)}, {"E", matrix_json(s.pairs)},
                          {"W_G", matrix_json(s.adjacency)}});
  }
  json pairs = json::array();
  for (const auto& p : features->pairs.pairs) pairs.push_back({p.human, p.object});
  write_text(out, json{{"format", "mgnm-graph-dump"},
                       {"version", 1},
                       {"image", image},
                       {"pairs", pairs},
                       {"iterations", iterations}}
                      .dump() +
                      "\n");
  std::cout << "wrote " << r.snapshots.size() << " iterations to " << out << "\n";
  return 0;
}

int cmd_convert(const std::string& train, const std::string& test, const std::string& out) {
  const mgnm::Dataset d =
      mgnm::convert_hico_files(train, test.empty() ? std::nullopt : std::optional<fs::path>(test));
  mgnm::save_dataset(out, d);
  std::cout << "wrote " << d.train.size() << " train / " << d.test.size() << " test images to " << out << "\n";
  return 0;
}

// Re-executes a train or ablate run from the config and data recorded in its manifest.
int cmd_rerun(const std::string& manifest_path, const std::string& out) {
  const json m = json::parse(read_text(manifest_path));
  const std::string command = m.at("command").get<std::string>();
  const fs::path dir = out.empty() ? fs::path(manifest_path).parent_path() / "rerun" : fs::path(out);
  fs::create_directories(dir);
  const fs::path cfg_path = dir / "config.json";
  write_text(cfg_path, m.at("config").dump(2) + "\n");
  RunInputs in;
  in.config_path = cfg_path.string();
  in.out_dir = dir.string();
  const json& data = m.at("data");
  if (data.contains("path")) {
    in.data_path = data.at("path").get<std::string>();
    if (hex(mgnm::rng::hash(read_text(in.data_path))) != data.at("hash").get<std::string>()) {
      throw mgnm::ConfigError("dataset " + in.data_path + " changed since the recorded run");
    }
  }
  if (command == "train") return cmd_train(in, "");
  if (command == "ablate") {
    std::string stages;
    for (const auto& s : m.at("stages")) stages += s.get<std::string>() + ",";
    return cmd_ablate(in, stages);
  }
  throw mgnm::ConfigError("cannot rerun command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal graph HOI detector: synthetic data, training, evaluation"};
  app.require_subcommand(1);

  std::string task, out, config_path;
  int scenes = 0, test_scenes = -1, categories = 0;
  std::uint64_t seed = ~0ull;
  double long_tail = -1;
  auto* synth = app.add_subcommand("synth", "Write a generated synthetic dataset");
  synth->add_option("--task", task, "spatial-rule, visual-rule, category-rule or mixed");
  synth->add_option("--scenes", scenes, "Training scenes");
  synth->add_option("--test-scenes", test_scenes, "Test scenes");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--categories", categories, "Non-person object categories");
  synth->add_option("--long-tail", long_tail, "Category long-tail exponent");
  synth->add_option("-c,--config", config_path, "Config whose synth section supplies defaults");
  synth->add_option("-o,--out", out, "Output dataset file")->required();

  RunInputs train_in;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train and evaluate; writes checkpoint, metrics and manifest");
  add_run_options(train, train_in);
  train->add_option("--resume", resume, "Run directory to resume from");

  std::string data_path, preds_path;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions in every metric setting");
  eval->add_option("-d,--data", data_path, "Dataset file")->required();
  eval->add_option("-p,--predictions", preds_path, "Predictions file")->required();
  eval->add_option("-o,--out", out, "Report file");

  RunInputs ablate_in;
  std::string stages = "spatial,visual,textual,interaction";
  auto* ablate = app.add_subcommand("ablate", "Train the vanilla model and one model per disabled stage");
  add_run_options(ablate, ablate_in);
  ablate->add_option("--stages", stages, "Comma-separated stages to ablate");

  RunInputs infer_in;
  std::string checkpoint, split = "test", attention_out;
  auto* infer = app.add_subcommand("infer", "Predict HOI triplets for one dataset split");
  add_run_options(infer, infer_in);
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  infer->add_option("-p,--predictions", out, "Predictions output file")->required();
  infer->add_option("--attention", attention_out, "Also export decoder attention maps here");

  auto* plot = app.add_subcommand("plot", "Render PR curves or attention heatmaps to SVG");
  plot->require_subcommand(1);
  std::vector<int> classes;
  auto* plot_pr = plot->add_subcommand("pr", "Precision-recall curves per HOI class");
  plot_pr->add_option("-d,--data", data_path, "Dataset file")->required();
  plot_pr->add_option("-p,--predictions", preds_path, "Predictions file")->required();
  plot_pr->add_option("--class", classes, "HOI class ids (default: the first eight)");
  plot_pr->add_option("-o,--out", out, "SVG file")->required();
  std::string attention_path, image;
  int layer = 0, head = 0, pair = 0;
  auto* plot_att = plot->add_subcommand("attention", "Heatmap of one pair's decoder attention over the backbone grid");
  plot_att->add_option("-a,--attention", attention_path, "Attention export from infer")->required();
  plot_att->add_option("--image", image, "Image key")->required();
  plot_att->add_option("--layer", layer, "Decoder layer");
  plot_att->add_option("--head", head, "Attention head");
  plot_att->add_option("--pair", pair, "Pair row");
  plot_att->add_option("-o,--out", out, "SVG file")->required();

  RunInputs dump_in;
  auto* dump = app.add_subcommand("dump-graph", "Write per-iteration N, E and W_G for one image");
  add_run_options(dump, dump_in);
  dump->add_option("--checkpoint", checkpoint, "Checkpoint file (initial weights when omitted)");
  dump->add_option("--image", image, "Image key")->required();
  dump->add_option("--graph-out", out, "Output file")->required();

  std::string hico_train, hico_test;
  auto* convert = app.add_subcommand("convert-hico", "Convert HICO-DET annotation JSON to the dataset format");
  convert->add_option("--train", hico_train, "Training annotations")->required();
  convert->add_option("--test", hico_test, "Test annotations");
  convert->add_option("-o,--out", out, "Output dataset file")->required();

  std::string manifest;
  auto* rerun = app.add_subcommand("rerun", "Repeat a train or ablate run from its manifest");
  rerun->add_option("-m,--manifest", manifest, "manifest.json of the original run")->required();
  rerun->add_option("-o,--out", out, "Output directory (default: <run>/rerun)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(task, scenes, test_scenes, seed, categories, long_tail, config_path, out);
    if (*train) return cmd_train(train_in, resume);
    if (*eval) return cmd_eval(data_path, preds_path, out);
    if (*ablate) return cmd_ablate(ablate_in, stages);
    if (*infer) return cmd_infer(infer_in, checkpoint, split, out, attention_out);
    if (*plot_pr) return cmd_plot_pr(data_path, preds_path, classes, out);
    if (*plot_att) return cmd_plot_attention(attention_path, image, layer, head, pair, out);
    if (*dump) return cmd_dump_graph(dump_in, checkpoint, image, out);
    if (*convert) return cmd_convert(hico_train, hico_test, out);
    if (*rerun) return cmd_rerun(manifest, out);
  } catch (const mgnm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mgnm::VersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
