#include "offnadir/harness/runners.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

namespace offnadir::harness {

using datagen::SplitData;
using models::ModelSpec;
using models::UNetF;
using train::RunRecord;
using train::TrainConfig;

void check_train_split(const std::string& split) {
  ON_CHECK(split.rfind("ev", 0) != 0,
           "split '%s' is evaluation-only and cannot feed a train loader",
           split.c_str());
}

std::string resolve_data_root(const std::string& root) {
  if (!root.empty() && root[0] == '/') return root;
  const char* base = std::getenv("OFFNADIR_DATA_ROOT");
  if (base && *base) return std::string(base) + "/" + root;
  return root;
}

std::pair<std::string, std::string> setting_splits(const std::string& setting) {
  if (setting == "T-T") return {"t_train", "t_val"};
  if (setting == "T-S") return {"t_train", "s_val"};
  if (setting == "T-Ev") return {"t_train", "ev_val"};
  if (setting == "S-S") return {"s_train", "s_val"};
  if (setting == "S-Ev") return {"s_train", "ev_val"};
  fail(strfmt("unknown setting '%s'", setting.c_str()));
}

namespace {

RosterEntry roster_from_json(const Json& j) {
  RosterEntry e;
  e.spec = ModelSpec::from_json(j.at("spec"));
  if (j.contains("seed")) e.seed = j.at("seed").get<uint64_t>();
  if (j.contains("edn")) e.edn = j.at("edn").get<std::string>();
  return e;
}

Json roster_to_json(const RosterEntry& e) {
  return Json{{"spec", e.spec.to_json()}, {"seed", e.seed}, {"edn", e.edn}};
}

struct OpenDataset {
  std::string root;
  datagen::DatasetManifest manifest;
  std::map<std::string, SplitData> splits;

  const SplitData& split(const std::string& name) {
    auto it = splits.find(name);
    if (it == splits.end())
      it = splits.emplace(name, datagen::load_split(root, manifest, name)).first;
    return it->second;
  }
};

OpenDataset open_dataset(const std::string& configured_root) {
  OpenDataset ds;
  ds.root = resolve_data_root(configured_root);
  ds.manifest = datagen::load_manifest(ds.root);
  return ds;
}

train::DataView view_of(OpenDataset& ds, const std::string& train_split,
                        const std::string& val_split) {
  check_train_split(train_split);
  return train::make_data_view(ds.split(train_split), ds.split(val_split), ds.root,
                               ds.manifest, train_split, val_split);
}

EvalRow row_from_record(const RunRecord& rec, const std::string& label) {
  EvalRow row;
  row.network = label;
  row.params_m = rec.params_m();
  const auto& best = rec.epochs.at(size_t(rec.best_epoch));
  row.loss = best.val_loss;
  row.precision = best.val.precision;
  row.recall = best.val.recall;
  row.iou = best.val.iou;
  row.f1 = best.val.f1;
  row.ms_per_iter = rec.ms_per_iter;
  row.best_epoch = rec.best_epoch;
  row.run_hash = rec.run_hash;
  return row;
}

// Scores of a run's best checkpoint on another split.
std::pair<metrics::Scores, double> eval_checkpoint(const std::string& ckpt,
                                                   const SplitData& split,
                                                   const losses::LossConfig& loss_cfg,
                                                   int batch) {
  models::CheckpointInfo info = models::read_checkpoint_info(ckpt);
  UNetF model(info.spec, info.seed);
  models::load_checkpoint(ckpt, model);
  train::EvalResult ev = train::evaluate(model, split, loss_cfg, batch);
  return {ev.pooled, ev.mean_loss};
}

}  // namespace

// ---------------------------------------------------------------------------
// Step 1: optimizers then losses
// ---------------------------------------------------------------------------

HparamPlan HparamPlan::from_json(const Json& j) {
  HparamPlan p;
  p.dataset_root = j.at("dataset_root").get<std::string>();
  if (j.contains("train_split")) p.train_split = j.at("train_split").get<std::string>();
  if (j.contains("val_split")) p.val_split = j.at("val_split").get<std::string>();
  p.model = ModelSpec::from_json(j.at("model"));
  if (j.contains("model_seed")) p.model_seed = j.at("model_seed").get<uint64_t>();
  if (j.contains("train")) p.base = TrainConfig::from_json(j.at("train"));
  p.out_dir = j.at("out_dir").get<std::string>();
  return p;
}

Json HparamPlan::to_json() const {
  return Json{{"dataset_root", dataset_root}, {"train_split", train_split},
              {"val_split", val_split},       {"model", model.to_json()},
              {"model_seed", model_seed},     {"train", base.to_json()},
              {"out_dir", out_dir}};
}

EvalReport run_hparam_search(const HparamPlan& plan) {
  OpenDataset ds = open_dataset(plan.dataset_root);
  train::DataView data = view_of(ds, plan.train_split, plan.val_split);
  ensure_dir(plan.out_dir);

  EvalReport report;
  report.title = "Hyperparameter search: optimizers (total loss), then losses";
  report.meta["plan_hash"] = hash_hex(json_hash(plan.to_json()));
  report.meta["model"] = plan.model.to_json();

  struct Outcome {
    RunRecord rec;
    train::OptimizerName opt;
  };
  std::vector<Outcome> opt_runs;
  for (train::OptimizerName opt :
       {train::OptimizerName::adam, train::OptimizerName::sgd,
        train::OptimizerName::rmsprop, train::OptimizerName::adadelta,
        train::OptimizerName::nadam}) {
    TrainConfig cfg = plan.base;
    cfg.optimizer.name = opt;
    cfg.loss.name = losses::LossName::total;
    UNetF model(plan.model, plan.model_seed);
    const std::string name = train::optimizer_to_string(opt);
    RunRecord rec =
        train::train(model, data, cfg, plan.out_dir + "/opt_" + name);
    EvalRow row = row_from_record(rec, name);
    row.method = "optimizer";
    report.rows.push_back(row);
    opt_runs.push_back({std::move(rec), opt});
  }

  // Winner: highest F1, ties by lower loss, then earlier converging epoch.
  size_t win = 0;
  auto key = [&](const Outcome& o) {
    const auto& e = o.rec.epochs.at(size_t(o.rec.best_epoch));
    return std::make_tuple(-e.val.f1, e.val_loss, o.rec.best_epoch);
  };
  for (size_t i = 1; i < opt_runs.size(); ++i)
    if (key(opt_runs[i]) < key(opt_runs[win])) win = i;
  const train::OptimizerName winner = opt_runs[win].opt;
  report.meta["winning_optimizer"] = train::optimizer_to_string(winner);
  report.rows[win].note = "winner";

  for (losses::LossName ln :
       {losses::LossName::bce, losses::LossName::bce_dice,
        losses::LossName::bce_jaccard, losses::LossName::focal_dice,
        losses::LossName::focal_jaccard, losses::LossName::jaccard,
        losses::LossName::dice, losses::LossName::focal, losses::LossName::total}) {
    const std::string name = losses::loss_name_to_string(ln);
    EvalRow row;
    if (ln == losses::LossName::total) {
      // Identical configuration to the winning optimizer run: reuse it.
      row = row_from_record(opt_runs[win].rec, name);
      row.note = "reused from optimizer row";
    } else {
      TrainConfig cfg = plan.base;
      cfg.optimizer.name = winner;
      cfg.loss.name = ln;
      UNetF model(plan.model, plan.model_seed);
      RunRecord rec =
          train::train(model, data, cfg, plan.out_dir + "/loss_" + name);
      row = row_from_record(rec, name);
    }
    row.method = "loss";
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Model bench
// ---------------------------------------------------------------------------

BenchPlan BenchPlan::from_json(const Json& j) {
  BenchPlan p;
  p.dataset_root = j.at("dataset_root").get<std::string>();
  if (j.contains("setting")) p.setting = j.at("setting").get<std::string>();
  if (j.contains("train_split")) p.train_split = j.at("train_split").get<std::string>();
  if (j.contains("val_split")) p.val_split = j.at("val_split").get<std::string>();
  for (const Json& r : j.at("roster")) p.roster.push_back(roster_from_json(r));
  if (j.contains("train")) p.base = TrainConfig::from_json(j.at("train"));
  p.out_dir = j.at("out_dir").get<std::string>();
  return p;
}

Json BenchPlan::to_json() const {
  Json jr = Json::array();
  for (const RosterEntry& r : roster) jr.push_back(roster_to_json(r));
  return Json{{"dataset_root", dataset_root}, {"setting", setting},
              {"train_split", train_split},   {"val_split", val_split},
              {"roster", jr},                 {"train", base.to_json()},
              {"out_dir", out_dir}};
}

EvalReport run_model_bench(const BenchPlan& plan) {
  ON_CHECK(!plan.roster.empty(), "model bench needs a non-empty roster");
  OpenDataset ds = open_dataset(plan.dataset_root);
  std::string train_split = plan.train_split, val_split = plan.val_split;
  if (train_split.empty() || val_split.empty())
    std::tie(train_split, val_split) = setting_splits(plan.setting);
  train::DataView data = view_of(ds, train_split, val_split);
  ensure_dir(plan.out_dir);

  EvalReport report;
  report.title = strfmt("Model bench (%s)", plan.setting.c_str());
  report.meta["plan_hash"] = hash_hex(json_hash(plan.to_json()));
  report.meta["mark_top3"] = true;

  for (size_t i = 0; i < plan.roster.size(); ++i) {
    const RosterEntry& entry = plan.roster[i];
    auto model = models::EdnRegistry::instance().build(entry.edn, entry.spec,
                                                       entry.seed);
    RunRecord rec = train::train(*model, data, plan.base,
                                 plan.out_dir + strfmt("/model_%02zu", i));
    EvalRow row = row_from_record(rec, entry.spec.name());
    row.setting = plan.setting;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Transfer comparison: baseline / SDA / KD / DML over S-S and S-Ev
// ---------------------------------------------------------------------------

TransferPlan TransferPlan::from_json(const Json& j) {
  TransferPlan p;
  p.dataset_root = j.at("dataset_root").get<std::string>();
  for (auto [key, field] :
       std::initializer_list<std::pair<const char*, std::string*>>{
           {"t_train", &p.t_train},
           {"t_val", &p.t_val},
           {"s_train", &p.s_train},
           {"s_val", &p.s_val},
           {"ev_val", &p.ev_val}})
    if (j.contains(key)) *field = j.at(key).get<std::string>();
  p.teacher = roster_from_json(j.at("teacher"));
  for (const Json& s : j.at("students")) p.students.push_back(roster_from_json(s));
  if (j.contains("teacher_epochs")) p.teacher_epochs = j.at("teacher_epochs").get<int>();
  if (j.contains("train")) p.strain = TrainConfig::from_json(j.at("train"));
  if (j.contains("kd")) {
    const Json& k = j.at("kd");
    if (k.contains("alpha")) p.kd.alpha = k.at("alpha").get<double>();
    if (k.contains("level_weights"))
      p.kd.level_weights = k.at("level_weights").get<std::array<double, 5>>();
    if (k.contains("normalize")) p.kd.normalize = k.at("normalize").get<bool>();
  }
  if (j.contains("dml")) {
    const Json& d = j.at("dml");
    if (d.contains("w_sup")) p.dml.w_sup = d.at("w_sup").get<double>();
    if (d.contains("w_mut")) p.dml.w_mut = d.at("w_mut").get<double>();
    if (d.contains("w_kd")) p.dml.w_kd = d.at("w_kd").get<double>();
    if (d.contains("update_mode"))
      p.dml.update_mode = d.at("update_mode").get<std::string>();
  }
  if (j.contains("dml_pairs"))
    for (const Json& pr : j.at("dml_pairs"))
      p.dml_pairs.push_back({pr.at(0).get<int>(), pr.at(1).get<int>()});
  if (j.contains("kd_include_teacher"))
    p.kd_include_teacher = j.at("kd_include_teacher").get<bool>();
  p.out_dir = j.at("out_dir").get<std::string>();
  return p;
}

Json TransferPlan::to_json() const {
  Json js = Json::array();
  for (const RosterEntry& s : students) js.push_back(roster_to_json(s));
  Json jp = Json::array();
  for (const auto& pr : dml_pairs) jp.push_back(Json::array({pr[0], pr[1]}));
  return Json{{"dataset_root", dataset_root},
              {"t_train", t_train},
              {"t_val", t_val},
              {"s_train", s_train},
              {"s_val", s_val},
              {"ev_val", ev_val},
              {"teacher", roster_to_json(teacher)},
              {"students", js},
              {"teacher_epochs", teacher_epochs},
              {"train", strain.to_json()},
              {"kd",
               Json{{"alpha", kd.alpha},
                    {"level_weights", kd.level_weights},
                    {"normalize", kd.normalize}}},
              {"dml",
               Json{{"w_sup", dml.w_sup},
                    {"w_mut", dml.w_mut},
                    {"w_kd", dml.w_kd},
                    {"update_mode", dml.update_mode}}},
              {"dml_pairs", jp},
              {"kd_include_teacher", kd_include_teacher},
              {"out_dir", out_dir}};
}

Json TransferEntry::to_json() const {
  auto num = [](double v) { return std::isnan(v) ? Json() : Json(v); };
  return Json{{"method", method},
              {"network", network},
              {"record", record.to_json()},
              {"ev_loss", num(ev_loss)},
              {"ev",
               Json{{"precision", ev.precision},
                    {"recall", ev.recall},
                    {"iou", ev.iou},
                    {"f1", ev.f1},
                    {"degenerate", ev.degenerate}}},
              {"par_red_pct", num(par_red_pct)},
              {"par_red_applicable", par_red_applicable}};
}

TransferEntry TransferEntry::from_json(const Json& j) {
  TransferEntry e;
  e.method = j.at("method").get<std::string>();
  e.network = j.at("network").get<std::string>();
  e.record = RunRecord::from_json(j.at("record"));
  e.ev_loss = j.at("ev_loss").is_null() ? NAN : j.at("ev_loss").get<double>();
  e.ev.precision = j.at("ev").at("precision").get<double>();
  e.ev.recall = j.at("ev").at("recall").get<double>();
  e.ev.iou = j.at("ev").at("iou").get<double>();
  e.ev.f1 = j.at("ev").at("f1").get<double>();
  e.ev.degenerate = j.at("ev").at("degenerate").get<bool>();
  e.par_red_pct =
      j.at("par_red_pct").is_null() ? NAN : j.at("par_red_pct").get<double>();
  e.par_red_applicable = j.at("par_red_applicable").get<bool>();
  return e;
}

EvalReport transfer_table(const std::vector<TransferEntry>& entries) {
  EvalReport report;
  report.title =
      "Knowledge transfer comparison (baseline / SDA / KD / DML; S-S and S-Ev)";
  for (const std::string& method : {"baseline", "sda", "kd", "dml"}) {
    for (const std::string& setting : {"S-S", "S-Ev"}) {
      for (const TransferEntry& e : entries) {
        if (e.method != method) continue;
        EvalRow row;
        row.setting = setting;
        row.method = method;
        row.network = e.network;
        row.params_m = e.record.params_m();
        row.run_hash = e.record.run_hash;
        row.par_red_applicable = e.par_red_applicable;
        row.par_red_pct = e.par_red_pct;
        if (setting == "S-S") {
          const auto& best = e.record.epochs.at(size_t(e.record.best_epoch));
          row.loss = best.val_loss;
          row.precision = best.val.precision;
          row.recall = best.val.recall;
          row.iou = best.val.iou;
          row.f1 = best.val.f1;
          row.ms_per_iter = e.record.ms_per_iter;
          row.best_epoch = e.record.best_epoch;
        } else {
          row.loss = e.ev_loss;
          row.precision = e.ev.precision;
          row.recall = e.ev.recall;
          row.iou = e.ev.iou;
          row.f1 = e.ev.f1;
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

GainsReport transfer_gains(const std::vector<TransferEntry>& entries) {
  GainsReport gains;
  gains.title = "Improvements with SDA vs. without SDA";
  auto find = [&](const std::string& method,
                  const std::string& network) -> const TransferEntry* {
    for (const TransferEntry& e : entries)
      if (e.method == method && e.network == network) return &e;
    return nullptr;
  };
  for (const TransferEntry& e : entries) {
    if (e.method != "sda") continue;
    const TransferEntry* base = find("baseline", e.network);
    if (!base) continue;
    const auto& sda_best = e.record.epochs.at(size_t(e.record.best_epoch));
    const auto& base_best =
        base->record.epochs.at(size_t(base->record.best_epoch));
    auto pct = [](double now, double ref) {
      return ref > 0 ? 100.0 * (now - ref) / ref : NAN;
    };
    GainsRow row;
    row.network = e.network;
    row.ss_iou = sda_best.val.iou;
    row.ss_iou_gain_pct = pct(sda_best.val.iou, base_best.val.iou);
    row.ss_f1 = sda_best.val.f1;
    row.ss_f1_gain_pct = pct(sda_best.val.f1, base_best.val.f1);
    row.ev_iou = e.ev.iou;
    row.ev_iou_gain_pct = pct(e.ev.iou, base->ev.iou);
    row.ev_f1 = e.ev.f1;
    row.ev_f1_gain_pct = pct(e.ev.f1, base->ev.f1);
    gains.rows.push_back(std::move(row));
  }
  return gains;
}

TransferResult run_transfer_comparison(const TransferPlan& plan) {
  ON_CHECK(!plan.students.empty(), "transfer comparison needs students");
  OpenDataset ds = open_dataset(plan.dataset_root);
  ensure_dir(plan.out_dir);

  train::DataView t_data = view_of(ds, plan.t_train, plan.t_val);
  train::DataView s_data = view_of(ds, plan.s_train, plan.s_val);
  const SplitData& ev_split = ds.split(plan.ev_val);

  std::vector<RosterEntry> all_models{plan.teacher};
  all_models.insert(all_models.end(), plan.students.begin(), plan.students.end());

  // Pretraining on T (the SDA source and the KD/DML teacher).
  std::map<std::string, std::string> pretrain_ckpt;
  for (size_t i = 0; i < all_models.size(); ++i) {
    const RosterEntry& m = all_models[i];
    const std::string name = m.spec.name();
    if (pretrain_ckpt.count(name)) continue;
    TrainConfig cfg = plan.strain;
    cfg.epochs = plan.teacher_epochs;
    cfg.train_split = plan.t_train;
    cfg.val_split = plan.t_val;
    auto model = models::EdnRegistry::instance().build(m.edn, m.spec, m.seed);
    RunRecord rec = train::train(*model, t_data, cfg,
                                 plan.out_dir + "/pretrain_" + name);
    pretrain_ckpt[name] = rec.checkpoint_path;
  }
  const std::string teacher_ckpt = pretrain_ckpt.at(plan.teacher.spec.name());
  const int64_t teacher_param_count =
      UNetF(plan.teacher.spec, plan.teacher.seed).params().count_all();

  std::vector<TransferEntry> entries;
  auto push_entry = [&](const std::string& method, const RosterEntry& m,
                        RunRecord rec, bool par_red) {
    TransferEntry e;
    e.method = method;
    e.network = m.spec.name();
    auto [scores, loss] = eval_checkpoint(rec.checkpoint_path, ev_split,
                                          plan.strain.loss, plan.strain.batch_size);
    e.ev = scores;
    e.ev_loss = loss;
    if (par_red) {
      e.par_red_applicable = true;
      const int64_t p = UNetF(m.spec, m.seed).params().count_all();
      e.par_red_pct = 100.0 * (1.0 - double(p) / double(teacher_param_count));
    }
    e.record = std::move(rec);
    entries.push_back(std::move(e));
  };

  TrainConfig scfg = plan.strain;
  scfg.train_split = plan.s_train;
  scfg.val_split = plan.s_val;

  // Baseline: trained alone on S.
  for (const RosterEntry& m : all_models) {
    auto model = models::EdnRegistry::instance().build(m.edn, m.spec, m.seed);
    RunRecord rec = train::train(*model, s_data, scfg,
                                 plan.out_dir + "/baseline_" + m.spec.name());
    push_entry("baseline", m, std::move(rec), false);
  }

  // SDA: adapt each model's own T-pretrained checkpoint on S.
  for (const RosterEntry& m : all_models) {
    RunRecord rec =
        train::sda_adapt(pretrain_ckpt.at(m.spec.name()), s_data, scfg,
                         plan.out_dir + "/sda_" + m.spec.name());
    push_entry("sda", m, std::move(rec), false);
  }

  // KD: distill the frozen teacher into each student on S.
  std::vector<RosterEntry> kd_targets = plan.students;
  if (plan.kd_include_teacher) kd_targets.insert(kd_targets.begin(), plan.teacher);
  for (const RosterEntry& m : kd_targets) {
    auto student = models::EdnRegistry::instance().build(m.edn, m.spec, m.seed);
    RunRecord rec = train::kd_distill(teacher_ckpt, *student, s_data, scfg, plan.kd,
                                      plan.out_dir + "/kd_" + m.spec.name());
    push_entry("kd", m, std::move(rec), true);
  }

  // DML: student pairs, optionally guided by the teacher.
  for (size_t pi = 0; pi < plan.dml_pairs.size(); ++pi) {
    const auto& pr = plan.dml_pairs[pi];
    ON_CHECK(pr[0] >= 0 && pr[1] >= 0 && pr[0] != pr[1] &&
                 size_t(pr[0]) < plan.students.size() &&
                 size_t(pr[1]) < plan.students.size(),
             "bad dml pair [%d,%d]", pr[0], pr[1]);
    const RosterEntry& ma = plan.students[size_t(pr[0])];
    const RosterEntry& mb = plan.students[size_t(pr[1])];
    auto a = models::EdnRegistry::instance().build(ma.edn, ma.spec, ma.seed);
    auto b = models::EdnRegistry::instance().build(mb.edn, mb.spec, mb.seed);
    auto [ra, rb] = train::dml_train(
        *a, *b, plan.dml.w_kd != 0 ? teacher_ckpt : std::string(), s_data, scfg,
        plan.dml, plan.out_dir + strfmt("/dml_pair%zu", pi));
    push_entry("dml", ma, std::move(ra), true);
    push_entry("dml", mb, std::move(rb), true);
  }

  TransferResult result;
  result.table = transfer_table(entries);
  result.gains = transfer_gains(entries);
  result.entries = std::move(entries);

  Json frozen = Json::array();
  for (const TransferEntry& e : result.entries) frozen.push_back(e.to_json());
  save_json(plan.out_dir + "/transfer_entries.json", frozen);
  return result;
}

// ---------------------------------------------------------------------------
// Stratified evaluation
// ---------------------------------------------------------------------------

EvalReport stratified_eval(const std::string& checkpoint_path,
                           const std::string& dataset_root,
                           const datagen::DatasetManifest& manifest,
                           const std::string& split, int batch_size) {
  const std::string root = resolve_data_root(dataset_root);
  SplitData data = datagen::load_split(root, manifest, split);
  models::CheckpointInfo info = models::read_checkpoint_info(checkpoint_path);
  UNetF model(info.spec, info.seed);
  models::load_checkpoint(checkpoint_path, model);
  train::EvalResult ev = train::evaluate(model, data, losses::LossConfig{},
                                         batch_size);
  ON_CHECK(ev.per_tile.size() == data.metas.size(), "per-tile count mismatch");

  EvalReport report;
  report.title = strfmt("Stratified evaluation of %s on %s",
                        info.spec.name().c_str(), split.c_str());
  report.meta["checkpoint"] = checkpoint_path;
  report.meta["weights_hash"] = info.weights_hash;

  auto add_row = [&](const std::string& stratum, int gsd,
                     const std::vector<metrics::ConfusionCounts>& counts) {
    EvalRow row;
    row.network = info.spec.name();
    row.stratum = stratum;
    row.gsd_cm = gsd;
    row.tiles = int(counts.size());
    metrics::Scores s = metrics::pooled_scores(counts);
    row.precision = s.precision;
    row.recall = s.recall;
    row.iou = s.iou;
    row.f1 = s.f1;
    report.rows.push_back(std::move(row));
  };

  for (datagen::Stratum s :
       {datagen::Stratum::low, datagen::Stratum::mid, datagen::Stratum::high,
        datagen::Stratum::sky}) {
    std::vector<metrics::ConfusionCounts> counts;
    for (size_t i = 0; i < data.metas.size(); ++i)
      if (data.metas[i].stratum == s) counts.push_back(ev.per_tile[i]);
    if (counts.empty()) {
      fprintf(stderr, "warning: stratum '%s' has no tiles in split '%s'; omitted\n",
              datagen::stratum_to_string(s).c_str(), split.c_str());
      continue;
    }
    add_row(datagen::stratum_to_string(s), 0, counts);
  }

  std::vector<int> gsds;
  for (const auto& m : data.metas)
    if (std::find(gsds.begin(), gsds.end(), m.gsd_cm) == gsds.end())
      gsds.push_back(m.gsd_cm);
  std::sort(gsds.begin(), gsds.end());
  for (int g : gsds) {
    std::vector<metrics::ConfusionCounts> counts;
    for (size_t i = 0; i < data.metas.size(); ++i)
      if (data.metas[i].gsd_cm == g) counts.push_back(ev.per_tile[i]);
    add_row("", g, counts);
  }

  add_row("all", 0, ev.per_tile);
  return report;
}

}  // namespace offnadir::harness
