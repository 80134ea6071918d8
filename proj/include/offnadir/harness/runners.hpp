#pragma once
// Experiment orchestration: the optimizer/loss search, the model bench, the
// four-block transfer comparison, and stratified evaluation. Every emitted
// row points back to a RunRecord by hash.

#include "offnadir/harness/report.hpp"
#include "offnadir/train/trainer.hpp"

namespace offnadir::harness {

// Split-role discipline: names beginning with "ev" are validation-only and
// may never feed a train loader.
void check_train_split(const std::string& split);

// Dataset roots in plans resolve against $OFFNADIR_DATA_ROOT when relative.
std::string resolve_data_root(const std::string& root);

// "T-T", "T-S", "T-Ev", "S-S", "S-Ev" -> (train split, val split).
std::pair<std::string, std::string> setting_splits(const std::string& setting);

struct HparamPlan {
  std::string dataset_root;
  std::string train_split = "s_train";
  std::string val_split = "s_val";
  models::ModelSpec model;  // one fixed encoder for the whole search
  uint64_t model_seed = 1;
  train::TrainConfig base;  // optimizer and loss are overridden per row
  std::string out_dir;

  static HparamPlan from_json(const Json& j);
  Json to_json() const;
};

// Step 1 protocol: 5 optimizers under total loss, then 9 losses under the
// winning optimizer (highest F1; ties by lower loss, then earlier epoch).
// The total-loss row reuses the winner's run, like the paper's Table 1.
EvalReport run_hparam_search(const HparamPlan& plan);

struct RosterEntry {
  models::ModelSpec spec;
  uint64_t seed = 1;
  std::string edn = "unet";
};

struct BenchPlan {
  std::string dataset_root;
  std::string setting = "S-S";  // or explicit splits below
  std::string train_split, val_split;
  std::vector<RosterEntry> roster;
  train::TrainConfig base;
  std::string out_dir;

  static BenchPlan from_json(const Json& j);
  Json to_json() const;
};

// One row per roster model; top-3 per metric column marked in markdown.
EvalReport run_model_bench(const BenchPlan& plan);

struct TransferPlan {
  std::string dataset_root;
  std::string t_train = "t_train", t_val = "t_val";
  std::string s_train = "s_train", s_val = "s_val";
  std::string ev_val = "ev_val";
  RosterEntry teacher;
  std::vector<RosterEntry> students;
  int teacher_epochs = 50;
  train::TrainConfig strain;  // epochs here apply to baseline/sda/kd/dml on S
  losses::DistillConfig kd;
  train::DmlWeights dml;
  std::vector<std::array<int, 2>> dml_pairs;  // student indices
  bool kd_include_teacher = false;            // teacher-self distillation row
  std::string out_dir;

  static TransferPlan from_json(const Json& j);
  Json to_json() const;
};

// One per-method, per-network outcome: the S-trained record plus the best
// checkpoint's scores on Ev. The report assembly below is pure, so a frozen
// entry set can drive golden tests.
struct TransferEntry {
  std::string method;  // baseline | sda | kd | dml
  std::string network;
  train::RunRecord record;
  double ev_loss = NAN;
  metrics::Scores ev;
  double par_red_pct = NAN;
  bool par_red_applicable = false;

  Json to_json() const;
  static TransferEntry from_json(const Json& j);
};

EvalReport transfer_table(const std::vector<TransferEntry>& entries);
GainsReport transfer_gains(const std::vector<TransferEntry>& entries);

struct TransferResult {
  std::vector<TransferEntry> entries;
  EvalReport table;
  GainsReport gains;
};

TransferResult run_transfer_comparison(const TransferPlan& plan);

// Per-stratum and per-gsd rows plus the pooled marginal; strata without
// tiles are omitted with a warning.
EvalReport stratified_eval(const std::string& checkpoint_path,
                           const std::string& dataset_root,
                           const datagen::DatasetManifest& manifest,
                           const std::string& split, int batch_size = 8);

}  // namespace offnadir::harness
