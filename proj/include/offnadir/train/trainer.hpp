#pragma once
// Baseline supervised training and the three knowledge-transfer procedures.
// All four share one loop: deterministic shuffling from (seed, epoch),
// plateau-scheduled lr on validation IoU, checkpoint at the best-IoU epoch.

#include "offnadir/datagen/dataset.hpp"
#include "offnadir/models/checkpoint.hpp"
#include "offnadir/train/records.hpp"

namespace offnadir::train {

// Borrowed views of in-memory splits plus dataset provenance for the record.
struct DataView {
  const datagen::SplitData* train = nullptr;
  const datagen::SplitData* val = nullptr;
  Json provenance;  // {root, manifest config_hash, train_split, val_split}
};

DataView make_data_view(const datagen::SplitData& train,
                        const datagen::SplitData& val, const std::string& root,
                        const datagen::DatasetManifest& manifest,
                        const std::string& train_split,
                        const std::string& val_split);

struct EvalResult {
  metrics::Scores pooled;
  metrics::Scores macro;
  double mean_loss = 0;
  std::vector<metrics::ConfusionCounts> per_tile;
};

// Eval-mode forward over a whole split (pooled micro counts + macro mean).
EvalResult evaluate(models::UNetF& model, const datagen::SplitData& split,
                    const losses::LossConfig& loss_cfg, int batch_size);

// Supervised baseline. Writes run_record.json and checkpoint.ckpt under
// out_dir; returns the record.
RunRecord train(models::UNetF& model, const DataView& data, const TrainConfig& cfg,
                const std::string& out_dir);

// Fine-tunes a checkpointed model on the target dataset; the architecture is
// identical by construction and every layer stays trainable.
RunRecord sda_adapt(const std::string& pretrained_ckpt, const DataView& target,
                    const TrainConfig& cfg, const std::string& out_dir);

// Distills a frozen teacher into the student:
// loss = alpha * dice(student, gt) + (1-alpha) * distill(student_pyr, teacher_pyr).
// With alpha == 1 the teacher is never evaluated and the weight trajectory is
// bit-identical to train() with dice loss.
RunRecord kd_distill(const std::string& teacher_ckpt, models::UNetF& student,
                     const DataView& data, const TrainConfig& cfg,
                     const losses::DistillConfig& dcfg, const std::string& out_dir);

struct DmlWeights {
  double w_sup = 1.0;
  double w_mut = 0.5;
  double w_kd = 0.5;  // ignored when no teacher checkpoint is given
  std::string update_mode = "simultaneous";  // or "alternating"
};

// Two students learning from the ground truth, from each other
// (gradient-detached peer probabilities), and optionally from a frozen
// teacher's feature pyramid.
std::pair<RunRecord, RunRecord> dml_train(models::UNetF& student_a,
                                          models::UNetF& student_b,
                                          const std::string& teacher_ckpt_or_empty,
                                          const DataView& data,
                                          const TrainConfig& cfg,
                                          const DmlWeights& weights,
                                          const std::string& out_dir);

}  // namespace offnadir::train
