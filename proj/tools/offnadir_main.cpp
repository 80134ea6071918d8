// offnadir: dataset generation, training, knowledge transfer, and reporting
// from one reproducible command line. Logs go to stderr; artifacts to files.
//
// Exit codes: 0 success, 1 failed run, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "offnadir/datagen/stats.hpp"
#include "offnadir/harness/runners.hpp"

namespace fs = std::filesystem;
using namespace offnadir;

namespace {

// --set a.b.c=value overrides, applied after the config file; last one wins.
void apply_override(Json& config, const std::string& kv) {
  const size_t eq = kv.find('=');
  ON_CHECK(eq != std::string::npos && eq > 0, "override '%s' is not key=value",
           kv.c_str());
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (...) {
    value = raw;  // unquoted strings stay strings
  }
  Json* node = &config;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    ON_CHECK(!key.empty(), "override '%s' has an empty key segment", kv.c_str());
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // -1: keep config seeds
};

Json load_config(const CommonArgs& args) {
  Json config = load_json(args.config_path);
  for (const std::string& kv : args.overrides) apply_override(config, kv);
  if (args.seed >= 0) config["seed"] = uint64_t(args.seed);
  return config;
}

uint64_t config_seed(const Json& config, uint64_t fallback) {
  return config.contains("seed") ? config.at("seed").get<uint64_t>() : fallback;
}

// Model seeds not pinned in the config derive from the run seed by role, so
// one --seed controls every random stream.
uint64_t role_seed(const Json& node, uint64_t run_seed, const char* role) {
  if (node.contains("seed")) return node.at("seed").get<uint64_t>();
  return splitmix64(run_seed ^ fnv1a64(role));
}

void write_snapshot(const std::string& out_dir, const std::string& command,
                    const Json& resolved) {
  ensure_dir(out_dir);
  save_json(out_dir + "/resolved_config.json",
            Json{{"command", command}, {"config", resolved}});
}

train::TrainConfig train_config_of(const Json& config, uint64_t run_seed) {
  train::TrainConfig cfg = config.contains("train")
                               ? train::TrainConfig::from_json(config.at("train"))
                               : train::TrainConfig{};
  if (!config.contains("train") || !config.at("train").contains("seed"))
    cfg.seed = run_seed;
  return cfg;
}

struct LoadedData {
  std::string root;
  datagen::DatasetManifest manifest;
  datagen::SplitData train_data, val_data;
  train::DataView view;
};

LoadedData open_training_data(const Json& config, const train::TrainConfig& cfg) {
  const Json& d = config.at("dataset");
  LoadedData ld;
  ld.root = harness::resolve_data_root(d.at("root").get<std::string>());
  ld.manifest = datagen::load_manifest(ld.root);
  const std::string train_split = d.value("train_split", cfg.train_split);
  const std::string val_split = d.value("val_split", cfg.val_split);
  harness::check_train_split(train_split);
  ld.train_data = datagen::load_split(ld.root, ld.manifest, train_split);
  ld.val_data = datagen::load_split(ld.root, ld.manifest, val_split);
  ld.view = train::make_data_view(ld.train_data, ld.val_data, ld.root, ld.manifest,
                                  train_split, val_split);
  return ld;
}

std::unique_ptr<models::UNetF> build_from_config(const Json& node, uint64_t seed) {
  const std::string edn = node.value("edn", std::string("unet"));
  models::ModelSpec spec = models::ModelSpec::from_json(node.at("spec"));
  return models::EdnRegistry::instance().build(edn, spec, seed);
}

int cmd_datagen(const CommonArgs& args, const std::string& out, bool force) {
  Json config = load_config(args);
  datagen::DatagenConfig cfg = datagen::DatagenConfig::from_json(config);
  write_snapshot(out, "datagen", cfg.to_json());
  datagen::DatasetManifest m = datagen::build_dataset(cfg, out, force);
  size_t tiles = 0;
  for (const auto& [name, ids] : m.splits) tiles += ids.size();
  fprintf(stderr, "datagen: %zu tiles in %zu splits under %s\n", tiles,
          m.splits.size(), out.c_str());
  const auto rows = datagen::misalignment_stats(out, m);
  if (!rows.empty())
    fprintf(stderr, "misalignment (noisy vs clean IoU by gsd, stratum):\n%s",
            datagen::misalignment_table(rows).c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  Json config = load_config(args);
  const uint64_t run_seed = config_seed(config, 0);
  train::TrainConfig cfg = train_config_of(config, run_seed);
  const std::string out_dir = config.at("out_dir").get<std::string>();
  write_snapshot(out_dir, "train", config);
  LoadedData ld = open_training_data(config, cfg);
  auto model = build_from_config(config.at("model"),
                                 role_seed(config.at("model"), run_seed, "model"));
  train::RunRecord rec = train::train(*model, ld.view, cfg, out_dir);
  fprintf(stderr, "train: status=%s best_epoch=%d best_val_iou=%.4f -> %s\n",
          rec.status.c_str(), rec.best_epoch, rec.best_val_iou, out_dir.c_str());
  return rec.status == "ok" ? 0 : 1;
}

int cmd_adapt(const CommonArgs& args) {
  Json config = load_config(args);
  const uint64_t run_seed = config_seed(config, 0);
  train::TrainConfig cfg = train_config_of(config, run_seed);
  const std::string out_dir = config.at("out_dir").get<std::string>();
  write_snapshot(out_dir, "adapt", config);
  LoadedData ld = open_training_data(config, cfg);
  train::RunRecord rec = train::sda_adapt(
      config.at("checkpoint").get<std::string>(), ld.view, cfg, out_dir);
  fprintf(stderr, "adapt: status=%s best_epoch=%d best_val_iou=%.4f -> %s\n",
          rec.status.c_str(), rec.best_epoch, rec.best_val_iou, out_dir.c_str());
  return rec.status == "ok" ? 0 : 1;
}

losses::DistillConfig distill_config_of(const Json& config) {
  losses::DistillConfig dcfg;
  if (config.contains("distill")) {
    const Json& d = config.at("distill");
    if (d.contains("alpha")) dcfg.alpha = d.at("alpha").get<double>();
    if (d.contains("level_weights"))
      dcfg.level_weights = d.at("level_weights").get<std::array<double, 5>>();
    if (d.contains("normalize")) dcfg.normalize = d.at("normalize").get<bool>();
  }
  dcfg.validate();
  return dcfg;
}

int cmd_distill(const CommonArgs& args) {
  Json config = load_config(args);
  const uint64_t run_seed = config_seed(config, 0);
  train::TrainConfig cfg = train_config_of(config, run_seed);
  const std::string out_dir = config.at("out_dir").get<std::string>();
  write_snapshot(out_dir, "distill", config);
  LoadedData ld = open_training_data(config, cfg);
  auto student = build_from_config(
      config.at("student"), role_seed(config.at("student"), run_seed, "student"));
  train::RunRecord rec = train::kd_distill(
      config.at("teacher_checkpoint").get<std::string>(), *student, ld.view, cfg,
      distill_config_of(config), out_dir);
  fprintf(stderr, "distill: status=%s best_epoch=%d best_val_iou=%.4f -> %s\n",
          rec.status.c_str(), rec.best_epoch, rec.best_val_iou, out_dir.c_str());
  return rec.status == "ok" ? 0 : 1;
}

int cmd_dml(const CommonArgs& args) {
  Json config = load_config(args);
  const uint64_t run_seed = config_seed(config, 0);
  train::TrainConfig cfg = train_config_of(config, run_seed);
  const std::string out_dir = config.at("out_dir").get<std::string>();
  write_snapshot(out_dir, "dml", config);
  LoadedData ld = open_training_data(config, cfg);

  const Json& students = config.at("students");
  ON_CHECK(students.is_array() && students.size() == 2,
           "dml takes exactly two students (got %zu)", students.size());
  auto a = build_from_config(students.at(0),
                             role_seed(students.at(0), run_seed, "student.a"));
  auto b = build_from_config(students.at(1),
                             role_seed(students.at(1), run_seed, "student.b"));

  train::DmlWeights w;
  if (config.contains("weights")) {
    const Json& jw = config.at("weights");
    if (jw.contains("w_sup")) w.w_sup = jw.at("w_sup").get<double>();
    if (jw.contains("w_mut")) w.w_mut = jw.at("w_mut").get<double>();
    if (jw.contains("w_kd")) w.w_kd = jw.at("w_kd").get<double>();
    if (jw.contains("update_mode"))
      w.update_mode = jw.at("update_mode").get<std::string>();
  }
  auto [ra, rb] = train::dml_train(*a, *b,
                                   config.value("teacher_checkpoint", std::string()),
                                   ld.view, cfg, w, out_dir);
  fprintf(stderr, "dml: a(best_iou=%.4f) b(best_iou=%.4f) -> %s\n", ra.best_val_iou,
          rb.best_val_iou, out_dir.c_str());
  return (ra.status == "ok" && rb.status == "ok") ? 0 : 1;
}

int cmd_eval(const CommonArgs& args) {
  Json config = load_config(args);
  const std::string out_dir = config.at("out_dir").get<std::string>();
  write_snapshot(out_dir, "eval", config);
  const std::string root =
      harness::resolve_data_root(config.at("dataset_root").get<std::string>());
  datagen::DatasetManifest m = datagen::load_manifest(root);
  harness::EvalReport rep = harness::stratified_eval(
      config.at("checkpoint").get<std::string>(), root, m,
      config.value("split", std::string("ev_val")), config.value("batch_size", 8));
  harness::emit_report(rep, "json", out_dir + "/stratified.json");
  harness::emit_report(rep, "markdown", out_dir + "/stratified.md");
  harness::emit_report(rep, "csv", out_dir + "/stratified.csv");
  fprintf(stderr, "eval: %zu rows -> %s/stratified.{json,md,csv}\n",
          rep.rows.size(), out_dir.c_str());
  return 0;
}

int cmd_bench(const std::string& plan_path, const CommonArgs& args) {
  CommonArgs with_plan = args;
  with_plan.config_path = plan_path;
  Json plan_json = load_config(with_plan);
  const std::string kind = plan_json.value("kind", std::string("model_bench"));
  harness::EvalReport rep;
  std::string out_dir;
  if (kind == "hparam_search") {
    harness::HparamPlan plan = harness::HparamPlan::from_json(plan_json);
    out_dir = plan.out_dir;
    write_snapshot(out_dir, "bench", plan.to_json());
    rep = harness::run_hparam_search(plan);
  } else if (kind == "model_bench") {
    harness::BenchPlan plan = harness::BenchPlan::from_json(plan_json);
    out_dir = plan.out_dir;
    write_snapshot(out_dir, "bench", plan.to_json());
    rep = harness::run_model_bench(plan);
  } else {
    fail(strfmt("unknown bench plan kind '%s'", kind.c_str()));
  }
  harness::emit_report(rep, "json", out_dir + "/report.json");
  harness::emit_report(rep, "markdown", out_dir + "/report.md");
  harness::emit_report(rep, "csv", out_dir + "/report.csv");
  fprintf(stderr, "bench(%s): %zu rows -> %s/report.{json,md,csv}\n", kind.c_str(),
          rep.rows.size(), out_dir.c_str());
  return 0;
}

int cmd_compare(const std::string& plan_path, const CommonArgs& args) {
  CommonArgs with_plan = args;
  with_plan.config_path = plan_path;
  Json plan_json = load_config(with_plan);
  harness::TransferPlan plan = harness::TransferPlan::from_json(plan_json);
  write_snapshot(plan.out_dir, "compare", plan.to_json());
  harness::TransferResult result = harness::run_transfer_comparison(plan);
  harness::emit_report(result.table, "json", plan.out_dir + "/table4.json");
  harness::emit_report(result.table, "markdown", plan.out_dir + "/table4.md");
  harness::emit_report(result.table, "csv", plan.out_dir + "/table4.csv");
  harness::emit_gains(result.gains, "json", plan.out_dir + "/table5.json");
  harness::emit_gains(result.gains, "markdown", plan.out_dir + "/table5.md");
  harness::emit_gains(result.gains, "csv", plan.out_dir + "/table5.csv");
  fprintf(stderr, "compare: %zu entries -> %s/table4.md, table5.md\n",
          result.entries.size(), plan.out_dir.c_str());
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
  const std::string ext = format == "markdown" ? "md" : format;
  int rendered = 0;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.path().extension() != ".json") continue;
    Json j;
    try {
      j = load_json(entry.path().string());
    } catch (...) {
      continue;
    }
    if (!j.is_object() || !j.contains("title") || !j.contains("rows")) continue;
    const std::string out =
        (entry.path().parent_path() / entry.path().stem()).string() + "." + ext;
    // Gains reports have a "network" + gain columns schema; try both shapes.
    try {
      harness::EvalReport rep = harness::EvalReport::from_json(j);
      harness::emit_report(rep, format, out);
    } catch (...) {
      harness::GainsReport rep = harness::GainsReport::from_json(j);
      harness::emit_gains(rep, format, out);
    }
    fprintf(stderr, "report: wrote %s\n", out.c_str());
    ++rendered;
  }
  ON_CHECK(rendered > 0, "no report JSON files found in '%s'", in_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"off-nadir building-extraction toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_dir, plan_path, in_dir, format = "markdown";
  bool force = false;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("--config", common.config_path, "JSON config file")
          ->required();
    cmd->add_option("--set", common.overrides,
                    "dotted-key=value override (repeatable; last wins)");
    cmd->add_option("--seed", common.seed, "master seed for all random streams");
  };

  CLI::App* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
  add_common(datagen);
  datagen->add_option("--out", out_dir, "output dataset directory")->required();
  datagen->add_flag("--force", force, "overwrite an existing manifest");

  add_common(app.add_subcommand("train", "supervised baseline training"));
  add_common(app.add_subcommand("adapt", "supervised domain adaptation (SDA)"));
  add_common(app.add_subcommand("distill", "knowledge distillation (KD)"));
  add_common(app.add_subcommand("dml", "deep mutual learning of two students"));
  add_common(app.add_subcommand("eval", "stratified evaluation of a checkpoint"));

  CLI::App* bench = app.add_subcommand("bench", "hyperparameter or model bench");
  bench->add_option("--plan", plan_path, "plan JSON")->required();
  bench->add_option("--set", common.overrides, "dotted-key=value override");
  bench->add_option("--seed", common.seed, "master seed");

  CLI::App* compare = app.add_subcommand("compare", "baseline/SDA/KD/DML comparison");
  compare->add_option("--plan", plan_path, "plan JSON")->required();
  compare->add_option("--set", common.overrides, "dotted-key=value override");
  compare->add_option("--seed", common.seed, "master seed");

  CLI::App* report = app.add_subcommand("report", "re-render stored reports");
  report->add_option("--in", in_dir, "directory holding report JSON files")
      ->required();
  report->add_option("--format", format, "csv | markdown | json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand("datagen")) return cmd_datagen(common, out_dir, force);
    if (app.got_subcommand("train")) return cmd_train(common);
    if (app.got_subcommand("adapt")) return cmd_adapt(common);
    if (app.got_subcommand("distill")) return cmd_distill(common);
    if (app.got_subcommand("dml")) return cmd_dml(common);
    if (app.got_subcommand("eval")) return cmd_eval(common);
    if (app.got_subcommand("bench")) return cmd_bench(plan_path, common);
    if (app.got_subcommand("compare")) return cmd_compare(plan_path, common);
    if (app.got_subcommand("report")) return cmd_report(in_dir, format);
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
