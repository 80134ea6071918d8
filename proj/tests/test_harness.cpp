// Report emitters, table assembly, the search protocols, and stratified
// evaluation, including the golden-file fidelity checks.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "offnadir/harness/runners.hpp"

using namespace offnadir;
using namespace offnadir::harness;
using models::EncoderFamily;
using models::ModelSpec;
using models::UNetF;

namespace {

std::string test_dir(const std::string& name) {
  const std::string d = "/tmp/offnadir_harness_" + name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ModelSpec tiny_spec(EncoderFamily f = EncoderFamily::mbconv) {
  ModelSpec spec = ModelSpec::defaults(f);
  spec.encoder.width_multiplier = 0.5;
  spec.decoder_channels = {32, 24, 16, 12, 8};
  spec.input_size = 32;
  return spec;
}

// A learnable 32-px dataset on disk with t/s/ev splits.
std::string make_tiny_dataset(const std::string& name, uint64_t seed) {
  const std::string dir = test_dir("ds_" + name);
  datagen::DatagenConfig cfg;
  cfg.seed = seed;
  cfg.tile_px = 32;
  cfg.gsd_cm = {120};
  cfg.off_nadir_tan = 0.1;
  cfg.buildings_min = 1;
  cfg.buildings_max = 2;
  cfg.building_min_m = 16;
  cfg.building_max_m = 30;
  cfg.distractors = 1;
  cfg.splits = {
      {"t_train", 8, "noisy", false, false},
      {"t_val", 4, "noisy", false, false},
      {"s_train", 6, "clean", false, false},
      {"s_val", 4, "clean", false, false},
      {"ev_val", 4, "clean", true, false},
  };
  datagen::build_dataset(cfg, dir, false);
  return dir;
}

train::TrainConfig tiny_train(int epochs, uint64_t seed = 3) {
  train::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("format_gain matches the paper's percentage style") {
  CHECK(format_gain(0.827, 4.2) == "0.827 (+4.2%)");
  CHECK(format_gain(0.803, -0.2) == "0.803 (-0.2%)");
  CHECK(format_gain(0.779, 0.0) == "0.779 (+0.0%)");
  CHECK(format_gain(NAN, 1.0) == "-");
}

TEST_CASE("csv emitter: one header plus N rows with RFC-4180 quoting") {
  EvalReport rep;
  rep.title = "quoting";
  EvalRow a;
  a.network = "model \"a\", wide";
  a.f1 = 0.5;
  EvalRow b;
  b.network = "plain";
  b.f1 = 0.75;
  rep.rows = {a, b};
  const std::string csv = render_report(rep, "csv");
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < csv.size()) {
    const size_t nl = csv.find('\n', pos);
    lines.push_back(csv.substr(pos, nl - pos));
    pos = nl + 1;
  }
  REQUIRE(lines.size() == 3);  // header + 2 rows
  CHECK(lines[0] == "network,f1,run_hash");
  CHECK(lines[1] == "\"model \"\"a\"\", wide\",0.500,");
  CHECK(lines[2] == "plain,0.750,");
}

TEST_CASE("markdown emitter bolds per-column extremes within a block") {
  EvalReport rep;
  rep.title = "bolding";
  for (double f1 : {0.90, 0.95, 0.95}) {
    EvalRow r;
    r.setting = "S-S";
    r.method = "baseline";
    r.network = strfmt("m%.2f", f1);
    r.f1 = f1;
    r.loss = 1.0 - f1;
    rep.rows.push_back(r);
  }
  const std::string md = render_report(rep, "markdown");
  CHECK(md.find("**0.950**") != std::string::npos);  // max f1 bold (both ties)
  CHECK(md.find("**0.050**") != std::string::npos);  // min loss bold
  CHECK(md.find("**0.900**") == std::string::npos);
}

TEST_CASE("report json round trip is lossless") {
  EvalReport rep;
  rep.title = "round trip";
  rep.meta = Json{{"plan_hash", "abc"}, {"mark_top3", true}};
  EvalRow r;
  r.setting = "S-Ev";
  r.method = "kd";
  r.network = "u-mbconv";
  r.params_m = 3.149;
  r.loss = 0.21;
  r.precision = 0.9;
  r.recall = 0.8;
  r.iou = 0.74;
  r.f1 = 0.85;
  r.ms_per_iter = 123;
  r.best_epoch = 17;
  r.par_red_pct = 79.4;
  r.par_red_applicable = true;
  r.run_hash = "deadbeef";
  rep.rows.push_back(r);
  EvalReport back = EvalReport::from_json(rep.to_json());
  CHECK(back.to_json() == rep.to_json());
  CHECK(render_report(back, "markdown") == render_report(rep, "markdown"));
}

TEST_CASE("transfer table golden: four blocks, two settings, Par. Red. dashes") {
  Json frozen = load_json(std::string(GOLDEN_DIR) + "/transfer_entries.json");
  std::vector<TransferEntry> entries;
  for (const Json& e : frozen) entries.push_back(TransferEntry::from_json(e));

  EvalReport table = transfer_table(entries);
  GainsReport gains = transfer_gains(entries);

  // Structural checks from the acceptance wording.
  int baseline_rows = 0, kd_rows = 0;
  for (const EvalRow& r : table.rows) {
    if (r.method == "baseline") {
      ++baseline_rows;
      CHECK_FALSE(r.par_red_applicable);
    }
    if (r.method == "kd") {
      ++kd_rows;
      CHECK(r.par_red_applicable);
      CHECK_FALSE(std::isnan(r.par_red_pct));
    }
  }
  CHECK(baseline_rows > 0);
  CHECK(kd_rows > 0);
  std::set<std::pair<std::string, std::string>> blocks;
  for (const EvalRow& r : table.rows) blocks.insert({r.method, r.setting});
  CHECK(blocks.size() == 8);  // 4 methods x 2 settings

  CHECK(render_report(table, "markdown") ==
        slurp(std::string(GOLDEN_DIR) + "/table4.md"));
  CHECK(render_gains(gains, "markdown") ==
        slurp(std::string(GOLDEN_DIR) + "/table5.md"));
  CHECK(render_report(table, "csv") ==
        slurp(std::string(GOLDEN_DIR) + "/table4.csv"));
}

TEST_CASE("gains arithmetic: (sda - baseline) / baseline") {
  Json frozen = load_json(std::string(GOLDEN_DIR) + "/transfer_entries.json");
  std::vector<TransferEntry> entries;
  for (const Json& e : frozen) entries.push_back(TransferEntry::from_json(e));
  GainsReport gains = transfer_gains(entries);
  for (const GainsRow& row : gains.rows) {
    const TransferEntry *sda = nullptr, *base = nullptr;
    for (const TransferEntry& e : entries) {
      if (e.network != row.network) continue;
      if (e.method == "sda") sda = &e;
      if (e.method == "baseline") base = &e;
    }
    REQUIRE(sda);
    REQUIRE(base);
    const double expect =
        100.0 * (sda->ev.f1 - base->ev.f1) / base->ev.f1;
    CHECK(row.ev_f1_gain_pct == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("settings discipline: ev splits never feed a train loader") {
  CHECK_THROWS_AS(check_train_split("ev_val"), Error);
  CHECK_NOTHROW(check_train_split("s_train"));
  CHECK_NOTHROW(check_train_split("t_train"));

  const std::string ds = make_tiny_dataset("discipline", 42);
  BenchPlan plan;
  plan.dataset_root = ds;
  plan.train_split = "ev_val";
  plan.val_split = "s_val";
  plan.roster = {{tiny_spec(), 1, "unet"}};
  plan.base = tiny_train(0);
  plan.out_dir = test_dir("discipline_out");
  CHECK_THROWS_AS(run_model_bench(plan), Error);
}

TEST_CASE("resolve_data_root honors OFFNADIR_DATA_ROOT for relative paths") {
  setenv("OFFNADIR_DATA_ROOT", "/data/base", 1);
  CHECK(resolve_data_root("set1") == "/data/base/set1");
  CHECK(resolve_data_root("/abs/path") == "/abs/path");
  unsetenv("OFFNADIR_DATA_ROOT");
  CHECK(resolve_data_root("set1") == "set1");
}

TEST_CASE("model bench: single-row roster with exact params column") {
  const std::string ds = make_tiny_dataset("bench", 7);
  BenchPlan plan;
  plan.dataset_root = ds;
  plan.setting = "S-S";
  plan.roster = {{tiny_spec(), 5, "unet"}};
  plan.base = tiny_train(1);
  plan.out_dir = test_dir("bench_out");
  EvalReport rep = run_model_bench(plan);
  REQUIRE(rep.rows.size() == 1);
  UNetF ref(tiny_spec(), 5);
  CHECK(rep.rows[0].params_m ==
        doctest::Approx(double(models::count_params(ref)) / 1e6).epsilon(1e-9));
  CHECK(rep.rows[0].setting == "S-S");
  CHECK_FALSE(rep.rows[0].run_hash.empty());
  CHECK(rep.meta.at("mark_top3") == true);
}

TEST_CASE("hparam search: 14 rows, winner reuse for the total-loss row") {
  const std::string ds = make_tiny_dataset("hparam", 9);
  HparamPlan plan;
  plan.dataset_root = ds;
  plan.model = tiny_spec();
  plan.model_seed = 3;
  plan.base = tiny_train(1);
  plan.out_dir = test_dir("hparam_out");
  EvalReport rep = run_hparam_search(plan);
  REQUIRE(rep.rows.size() == 14);
  int optimizer_rows = 0, loss_rows = 0, winners = 0;
  for (const EvalRow& r : rep.rows) {
    if (r.method == "optimizer") ++optimizer_rows;
    if (r.method == "loss") ++loss_rows;
    if (r.note == "winner") ++winners;
  }
  CHECK(optimizer_rows == 5);
  CHECK(loss_rows == 9);
  CHECK(winners == 1);
  CHECK(rep.meta.contains("winning_optimizer"));
  // The total-loss row reuses the winning optimizer's run.
  const std::string win = rep.meta.at("winning_optimizer").get<std::string>();
  const EvalRow* win_row = nullptr;
  const EvalRow* total_row = nullptr;
  for (const EvalRow& r : rep.rows) {
    if (r.method == "optimizer" && r.network == win) win_row = &r;
    if (r.method == "loss" && r.network == "total") total_row = &r;
  }
  REQUIRE(win_row);
  REQUIRE(total_row);
  CHECK(total_row->run_hash == win_row->run_hash);
  CHECK(total_row->f1 == win_row->f1);
}

TEST_CASE("dice- and jaccard-trained runs converge to nearby IoU") {
  const std::string ds = make_tiny_dataset("dicejac", 11);
  auto root = ds;
  auto manifest = datagen::load_manifest(root);
  auto tr = datagen::load_split(root, manifest, "s_train");
  auto va = datagen::load_split(root, manifest, "s_val");
  auto data = train::make_data_view(tr, va, root, manifest, "s_train", "s_val");
  double ious[2];
  int i = 0;
  for (losses::LossName ln : {losses::LossName::dice, losses::LossName::jaccard}) {
    UNetF model(tiny_spec(), 21);
    train::TrainConfig cfg = tiny_train(8, 77);
    cfg.loss.name = ln;
    train::RunRecord rec =
        train::train(model, data, cfg, test_dir(strfmt("dj_%d", i)));
    ious[i++] = rec.best_val_iou;
  }
  CHECK(std::abs(ious[0] - ious[1]) < 0.005);
}

TEST_CASE("stratified eval: additivity and omitted empty strata") {
  const std::string dir = test_dir("strat_ds");
  datagen::DatagenConfig cfg;
  cfg.seed = 77;
  cfg.tile_px = 32;
  cfg.gsd_cm = {60, 120};
  cfg.off_nadir_tan = 0.1;
  cfg.buildings_min = 1;
  cfg.buildings_max = 1;
  cfg.building_min_m = 14;
  cfg.building_max_m = 24;
  cfg.ev_strata_weights = {0.5, 0.5, 0.0, 0.0};  // only low and mid
  cfg.splits = {{"s_train", 6, "clean", false, false},
                {"s_val", 4, "clean", false, false},
                {"ev_val", 8, "clean", true, false}};
  auto manifest = datagen::build_dataset(cfg, dir, false);

  auto tr = datagen::load_split(dir, manifest, "s_train");
  auto va = datagen::load_split(dir, manifest, "s_val");
  auto data = train::make_data_view(tr, va, dir, manifest, "s_train", "s_val");
  UNetF model(tiny_spec(), 31);
  train::RunRecord rec =
      train::train(model, data, tiny_train(1), test_dir("strat_run"));

  EvalReport rep = stratified_eval(rec.checkpoint_path, dir, manifest, "ev_val", 4);
  // low + mid strata, one gsd=60 row, one gsd=120 row, and the marginal.
  int stratum_rows = 0, gsd_rows = 0, marginal = 0;
  for (const EvalRow& r : rep.rows) {
    if (r.stratum == "low" || r.stratum == "mid") ++stratum_rows;
    if (r.stratum == "high" || r.stratum == "sky") stratum_rows += 100;  // must not appear
    if (r.stratum.empty() && r.gsd_cm > 0) ++gsd_rows;
    if (r.stratum == "all") ++marginal;
  }
  CHECK(stratum_rows == 2);
  CHECK(gsd_rows == 2);
  CHECK(marginal == 1);

  // Pooled marginal equals the confusion-sum of the stratum rows: recompute
  // per-tile counts independently and compare the F1 the report shows.
  auto ev_split = datagen::load_split(dir, manifest, "ev_val");
  models::CheckpointInfo info = models::read_checkpoint_info(rec.checkpoint_path);
  UNetF reloaded(info.spec, info.seed);
  models::load_checkpoint(rec.checkpoint_path, reloaded);
  auto ev = train::evaluate(reloaded, ev_split, losses::LossConfig{}, 4);
  metrics::ConfusionCounts sum;
  for (const auto& c : ev.per_tile) sum += c;
  const metrics::Scores pooled = metrics::score(sum);
  for (const EvalRow& r : rep.rows)
    if (r.stratum == "all") {
      CHECK(r.f1 == doctest::Approx(pooled.f1).epsilon(1e-12));
      CHECK(r.tiles == int(ev.per_tile.size()));
    }
}

TEST_CASE("shipped sample configs parse into their plan/config types") {
  const std::string cfg = std::string(CONFIG_DIR);
  CHECK_NOTHROW(datagen::DatagenConfig::from_json(load_json(cfg + "/datagen_desk.json")));
  CHECK_NOTHROW(datagen::DatagenConfig::from_json(load_json(cfg + "/datagen_small.json")));
  CHECK_NOTHROW(HparamPlan::from_json(load_json(cfg + "/hparam_search.json")));
  CHECK_NOTHROW(BenchPlan::from_json(load_json(cfg + "/model_bench.json")));
  CHECK_NOTHROW(TransferPlan::from_json(load_json(cfg + "/compare_desk.json")));
  for (const char* name : {"train_teacher", "adapt_teacher", "distill_student",
                           "dml_pair"}) {
    const Json j = load_json(cfg + "/" + name + ".json");
    CHECK_NOTHROW(train::TrainConfig::from_json(j.at("train")));
    if (j.contains("model"))
      CHECK_NOTHROW(ModelSpec::from_json(j.at("model").at("spec")));
    if (j.contains("student"))
      CHECK_NOTHROW(ModelSpec::from_json(j.at("student").at("spec")));
    if (j.contains("students"))
      for (const Json& s : j.at("students"))
        CHECK_NOTHROW(ModelSpec::from_json(s.at("spec")));
  }
}
