#include "offnadir/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

namespace offnadir::train {

using datagen::SplitData;
using losses::DistillConfig;
using losses::FeatureProjector;
using models::UNetF;
using nn::TensorF;
using nn::Variable;

namespace {

struct Batch {
  TensorF images, masks;
};

Batch collate(const SplitData& split, const std::vector<size_t>& ids, size_t first,
              size_t count) {
  const auto& img0 = split.images[ids[first]];
  const int s = img0.h();
  Batch b;
  b.images.resize(int(count), 3, s, s);
  b.masks.resize(int(count), 1, s, s);
  for (size_t k = 0; k < count; ++k) {
    const auto& img = split.images[ids[first + k]];
    const auto& msk = split.masks[ids[first + k]];
    ON_CHECK(img.h() == s && img.w() == s, "mixed tile sizes in one split");
    std::copy(img.v.begin(), img.v.end(), b.images.v.begin() + k * img.numel());
    std::copy(msk.v.begin(), msk.v.end(), b.masks.v.begin() + k * msk.numel());
  }
  return b;
}

struct WeightSnapshot {
  std::vector<std::vector<float>> params, buffers;
};

WeightSnapshot snapshot(const UNetF& model) {
  WeightSnapshot s;
  for (const auto& e : model.params().entries()) s.params.push_back(e.var.value().v);
  for (const auto& b : model.params().buffers()) s.buffers.push_back(b.buf->v);
  return s;
}

void restore(UNetF& model, const WeightSnapshot& s) {
  const auto& entries = model.params().entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    Variable<float> v = entries[i].var;
    v.mutable_value().v = s.params[i];
  }
  const auto& buffers = model.params().buffers();
  for (size_t i = 0; i < buffers.size(); ++i) buffers[i].buf->v = s.buffers[i];
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr int kWarmupIters = 10;

double epoch_ms(const std::vector<double>& iter_ms, size_t epoch_begin,
                size_t epoch_end) {
  std::vector<double> post;
  for (size_t i = std::max(epoch_begin, size_t(kWarmupIters)); i < epoch_end; ++i)
    post.push_back(iter_ms[i]);
  if (post.empty())
    post.assign(iter_ms.begin() + epoch_begin, iter_ms.begin() + epoch_end);
  return median(post);
}

using StepLoss = std::function<Variable<float>(UNetF&, const TensorF&, const TensorF&)>;

std::vector<Variable<float>> gather_params(UNetF& model,
                                           const std::vector<Variable<float>>& extra) {
  std::vector<Variable<float>> out;
  for (const auto& e : model.params().entries()) out.push_back(e.var);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::string make_run_hash(const std::string& method, const TrainConfig& cfg,
                          const UNetF& model, const DataView& data,
                          const Json& provenance) {
  Json id{{"method", method},
          {"config", cfg.to_json()},
          {"model_spec", model.spec().to_json()},
          {"model_seed", model.seed()},
          {"dataset", data.provenance},
          {"provenance", provenance}};
  return hash_hex(json_hash(id));
}

// One loop drives train/sda/kd; DML has its own below.
RunRecord run_single(UNetF& model, const DataView& data, const TrainConfig& cfg,
                     const std::string& out_dir, const std::string& method,
                     Json provenance, const StepLoss& step_loss,
                     const std::vector<Variable<float>>& extra_params) {
  cfg.validate();
  ON_CHECK(data.train && data.val, "train() needs train and val splits");
  ON_CHECK(!data.train->images.empty(), "empty train split");
  ensure_dir(out_dir);

  RunRecord rec;
  rec.method = method;
  rec.config = cfg.to_json();
  rec.model_spec = model.spec().to_json();
  rec.model_seed = model.seed();
  rec.dataset = data.provenance;
  rec.provenance = std::move(provenance);
  rec.params = model.params().count_trainable();
  rec.run_hash = make_run_hash(method, cfg, model, data, rec.provenance);

  auto optimizer = Optimizer::create(cfg.optimizer, cfg.lr,
                                     gather_params(model, extra_params));
  optimizer->zero_grad();
  PlateauScheduler plateau(cfg.lr, cfg.plateau);

  WeightSnapshot best = snapshot(model);
  bool diverged = false;
  try {
    EvalResult ev0 = evaluate(model, *data.val, cfg.loss, cfg.batch_size);
    EpochRecord e0;
    e0.epoch = 0;
    e0.val = ev0.pooled;
    e0.val_loss = ev0.mean_loss;
    e0.lr = cfg.lr;
    rec.epochs.push_back(e0);
    rec.best_epoch = 0;
    rec.best_val_iou = ev0.pooled.iou;
  } catch (const Error& e) {
    rec.status = "diverged";
    rec.diagnostic = strfmt("initial validation failed: %s", e.what());
    diverged = true;
  }

  std::vector<size_t> order(data.train->size());
  std::vector<double> iter_ms;

  for (int epoch = 1; epoch <= cfg.epochs && !diverged; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::stream(cfg.seed, strfmt("shuffle/%06d", epoch));
    shuffle_rng.shuffle(order);

    const size_t epoch_iter_begin = iter_ms.size();
    double loss_sum = 0;
    size_t steps = 0;
    const double lr_used = optimizer->lr();
    for (size_t first = 0; first < order.size(); first += size_t(cfg.batch_size)) {
      const size_t count = std::min(size_t(cfg.batch_size), order.size() - first);
      Batch batch = collate(*data.train, order, first, count);
      const auto t0 = std::chrono::steady_clock::now();
      Variable<float> loss = step_loss(model, batch.images, batch.masks);
      optimizer->zero_grad();
      loss.backward();
      if (!std::isfinite(double(loss.scalar())) ||
          model.params().any_nonfinite_grad()) {
        rec.status = "diverged";
        rec.diagnostic = strfmt("non-finite loss/gradient at epoch %d step %zu "
                                "(loss=%g)",
                                epoch, steps, double(loss.scalar()));
        diverged = true;
        break;
      }
      optimizer->step();
      const auto t1 = std::chrono::steady_clock::now();
      iter_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      loss_sum += double(loss.scalar());
      ++steps;
    }
    if (diverged) break;

    EvalResult ev;
    try {
      ev = evaluate(model, *data.val, cfg.loss, cfg.batch_size);
    } catch (const Error& e) {
      rec.status = "diverged";
      rec.diagnostic = strfmt("validation failed at epoch %d: %s", epoch, e.what());
      break;
    }
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = steps ? loss_sum / double(steps) : 0.0;
    er.val = ev.pooled;
    er.val_loss = ev.mean_loss;
    er.lr = lr_used;
    er.ms_per_iter = epoch_ms(iter_ms, epoch_iter_begin, iter_ms.size());
    rec.epochs.push_back(er);

    if (ev.pooled.iou > rec.best_val_iou) {
      rec.best_val_iou = ev.pooled.iou;
      rec.best_epoch = epoch;
      best = snapshot(model);
    }
    optimizer->set_lr(plateau.step(ev.pooled.iou));
  }

  {
    std::vector<double> post(iter_ms.begin() + std::min(iter_ms.size(),
                                                        size_t(kWarmupIters)),
                             iter_ms.end());
    rec.ms_per_iter = post.empty() ? median(iter_ms) : median(post);
  }

  // Checkpoint carries the best-epoch weights; the live model keeps its
  // final state.
  WeightSnapshot last = snapshot(model);
  restore(model, best);
  rec.checkpoint_path = out_dir + "/checkpoint.ckpt";
  models::save_checkpoint(rec.checkpoint_path, model,
                          Json{{"run_hash", rec.run_hash},
                               {"method", rec.method},
                               {"best_epoch", rec.best_epoch},
                               {"best_val_iou", rec.best_val_iou}});
  restore(model, last);

  save_run_record(out_dir + "/run_record.json", rec);
  return rec;
}

struct FrozenTeacher {
  std::unique_ptr<UNetF> model;
  std::string weights_hash;
  std::vector<std::vector<float>> pristine_buffers;

  // Teacher features are normalized with the current batch statistics, the
  // same mode the student trains under, so a student initialized from the
  // teacher sees exactly zero distillation loss. The frozen teacher's own
  // running buffers are restored afterwards.
  models::FeaturePyramid<float> pyramid(const TensorF& imgs) {
    auto pyr = model->encoder_forward(imgs, /*training=*/true);
    const auto& bufs = model->params().buffers();
    for (size_t i = 0; i < bufs.size(); ++i) bufs[i].buf->v = pristine_buffers[i];
    return pyr;
  }
};

FrozenTeacher load_frozen_teacher(const std::string& ckpt) {
  models::CheckpointInfo info = models::read_checkpoint_info(ckpt);
  FrozenTeacher t;
  t.model = std::make_unique<UNetF>(info.spec, info.seed);
  models::load_checkpoint(ckpt, *t.model);
  t.model->params().set_trainable("", false);
  t.weights_hash = info.weights_hash;
  for (const auto& b : t.model->params().buffers())
    t.pristine_buffers.push_back(b.buf->v);
  return t;
}

}  // namespace

DataView make_data_view(const SplitData& train, const SplitData& val,
                        const std::string& root,
                        const datagen::DatasetManifest& manifest,
                        const std::string& train_split,
                        const std::string& val_split) {
  DataView v;
  v.train = &train;
  v.val = &val;
  v.provenance = Json{{"root", root},
                      {"config_hash", manifest.config_hash},
                      {"train_split", train_split},
                      {"val_split", val_split}};
  return v;
}

EvalResult evaluate(UNetF& model, const SplitData& split,
                    const losses::LossConfig& loss_cfg, int batch_size) {
  ON_CHECK(!split.images.empty(), "evaluate: empty split");
  EvalResult res;
  std::vector<size_t> order(split.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  double loss_weighted = 0;
  size_t total = 0;
  for (size_t first = 0; first < order.size(); first += size_t(batch_size)) {
    const size_t count = std::min(size_t(batch_size), order.size() - first);
    Batch batch = collate(split, order, first, count);
    auto out = model.forward(batch.images, /*training=*/false);
    loss_weighted +=
        double(losses::combined_loss(loss_cfg, out.prob, batch.masks).scalar()) *
        double(count);
    total += count;
    const auto& probs = out.prob.value();
    const int s = probs.h();
    for (size_t k = 0; k < count; ++k) {
      TensorF p1(1, 1, s, s), y1(1, 1, s, s);
      std::copy_n(probs.v.begin() + k * p1.numel(), p1.numel(), p1.v.begin());
      std::copy_n(batch.masks.v.begin() + k * y1.numel(), y1.numel(), y1.v.begin());
      res.per_tile.push_back(metrics::confusion(metrics::binarize(p1), y1));
    }
  }
  res.pooled = metrics::pooled_scores(res.per_tile);
  res.macro = metrics::macro_scores(res.per_tile);
  res.mean_loss = loss_weighted / double(total);
  return res;
}

RunRecord train(UNetF& model, const DataView& data, const TrainConfig& cfg,
                const std::string& out_dir) {
  StepLoss step = [&cfg](UNetF& m, const TensorF& imgs, const TensorF& y) {
    auto out = m.forward(imgs, true);
    return losses::combined_loss(cfg.loss, out.prob, y);
  };
  return run_single(model, data, cfg, out_dir, "train", Json::object(), step, {});
}

RunRecord sda_adapt(const std::string& pretrained_ckpt, const DataView& target,
                    const TrainConfig& cfg, const std::string& out_dir) {
  models::CheckpointInfo info = models::read_checkpoint_info(pretrained_ckpt);
  UNetF model(info.spec, info.seed);
  models::load_checkpoint(pretrained_ckpt, model);
  model.params().set_trainable("", true);  // all layers fine-tuned
  Json prov{{"source_checkpoint", pretrained_ckpt},
            {"source_weights_hash", info.weights_hash}};
  StepLoss step = [&cfg](UNetF& m, const TensorF& imgs, const TensorF& y) {
    auto out = m.forward(imgs, true);
    return losses::combined_loss(cfg.loss, out.prob, y);
  };
  return run_single(model, target, cfg, out_dir, "sda", std::move(prov), step, {});
}

RunRecord kd_distill(const std::string& teacher_ckpt, UNetF& student,
                     const DataView& data, const TrainConfig& cfg,
                     const DistillConfig& dcfg, const std::string& out_dir) {
  dcfg.validate();
  Json prov{{"teacher_checkpoint", teacher_ckpt},
            {"alpha", dcfg.alpha},
            {"level_weights", dcfg.level_weights},
            {"normalize", dcfg.normalize}};

  if (dcfg.alpha == 1.0) {
    // Exact reduction: dice-only training, no teacher evaluation at all.
    StepLoss step = [](UNetF& m, const TensorF& imgs, const TensorF& y) {
      auto out = m.forward(imgs, true);
      return losses::dice_loss(out.prob, y);
    };
    return run_single(student, data, cfg, out_dir, "kd", std::move(prov), step, {});
  }

  auto teacher = std::make_shared<FrozenTeacher>(load_frozen_teacher(teacher_ckpt));
  prov["teacher_weights_hash"] = teacher->weights_hash;
  const int64_t teacher_params = teacher->model->params().count_all();
  prov["par_red_pct"] =
      100.0 * (1.0 - double(student.params().count_all()) / double(teacher_params));

  auto aux = std::make_shared<nn::ParamStore<float>>(
      splitmix64(cfg.seed ^ fnv1a64("kd.projector")));
  auto projector = std::make_shared<FeatureProjector<float>>(
      student.encoder_channels(), teacher->model->encoder_channels(),
      [&](const std::string& name, std::array<int, 4> shape, bool ident) {
        return aux->param(name, shape,
                          ident ? nn::Init::identity_1x1 : nn::Init::he_normal);
      });
  std::vector<Variable<float>> extra;
  for (const auto& e : aux->entries()) extra.push_back(e.var);

  StepLoss step = [&cfg, dcfg, teacher, projector](UNetF& m, const TensorF& imgs,
                                                   const TensorF& y) {
    auto out = m.forward(imgs, true);
    auto teacher_pyr = teacher->pyramid(imgs);
    Variable<float> sup = losses::dice_loss(out.prob, y);
    Variable<float> dist =
        losses::distillation_loss(out.pyramid, teacher_pyr, dcfg, *projector);
    return nn::add(nn::scale(sup, dcfg.alpha), nn::scale(dist, 1.0 - dcfg.alpha));
  };
  return run_single(student, data, cfg, out_dir, "kd", std::move(prov), step, extra);
}

std::pair<RunRecord, RunRecord> dml_train(UNetF& student_a, UNetF& student_b,
                                          const std::string& teacher_ckpt_or_empty,
                                          const DataView& data,
                                          const TrainConfig& cfg,
                                          const DmlWeights& weights,
                                          const std::string& out_dir) {
  cfg.validate();
  ON_CHECK(data.train && data.val, "dml_train needs train and val splits");
  ON_CHECK(weights.update_mode == "simultaneous" ||
               weights.update_mode == "alternating",
           "dml update_mode must be simultaneous|alternating");
  ensure_dir(out_dir + "/a");
  ensure_dir(out_dir + "/b");

  const bool use_teacher = !teacher_ckpt_or_empty.empty() && weights.w_kd != 0.0;
  std::shared_ptr<FrozenTeacher> teacher;
  DistillConfig dcfg;  // default level weights; normalize on
  std::array<std::shared_ptr<FeatureProjector<float>>, 2> projectors;
  std::array<std::shared_ptr<nn::ParamStore<float>>, 2> aux;
  if (use_teacher) {
    teacher = std::make_shared<FrozenTeacher>(
        load_frozen_teacher(teacher_ckpt_or_empty));
    UNetF* students[2] = {&student_a, &student_b};
    for (int s = 0; s < 2; ++s) {
      aux[s] = std::make_shared<nn::ParamStore<float>>(
          splitmix64(cfg.seed ^ fnv1a64(strfmt("dml.projector.%d", s))));
      projectors[s] = std::make_shared<FeatureProjector<float>>(
          students[s]->encoder_channels(), teacher->model->encoder_channels(),
          [&](const std::string& name, std::array<int, 4> shape, bool ident) {
            return aux[s]->param(name, shape,
                                 ident ? nn::Init::identity_1x1 : nn::Init::he_normal);
          });
    }
  }

  Json base_prov{{"weights",
                  Json{{"w_sup", weights.w_sup},
                       {"w_mut", weights.w_mut},
                       {"w_kd", use_teacher ? weights.w_kd : 0.0}}},
                 {"update_mode", weights.update_mode},
                 {"teacher_checkpoint", teacher_ckpt_or_empty}};
  if (use_teacher) {
    base_prov["teacher_weights_hash"] = teacher->weights_hash;
    const double tp = double(teacher->model->params().count_all());
    base_prov["par_red_pct_a"] =
        100.0 * (1.0 - double(student_a.params().count_all()) / tp);
    base_prov["par_red_pct_b"] =
        100.0 * (1.0 - double(student_b.params().count_all()) / tp);
  }

  UNetF* students[2] = {&student_a, &student_b};
  std::array<RunRecord, 2> recs;
  std::array<std::unique_ptr<Optimizer>, 2> opts;
  std::array<std::unique_ptr<PlateauScheduler>, 2> plateaus;
  std::array<WeightSnapshot, 2> best;
  std::array<std::vector<double>, 2> iter_ms;

  for (int s = 0; s < 2; ++s) {
    UNetF& m = *students[s];
    RunRecord& rec = recs[s];
    rec.method = "dml";
    rec.config = cfg.to_json();
    rec.model_spec = m.spec().to_json();
    rec.model_seed = m.seed();
    rec.dataset = data.provenance;
    rec.provenance = base_prov;
    rec.provenance["student"] = s == 0 ? "a" : "b";
    rec.params = m.params().count_trainable();
    rec.run_hash = make_run_hash("dml", cfg, m, data, rec.provenance);

    std::vector<Variable<float>> extra;
    if (use_teacher)
      for (const auto& e : aux[s]->entries()) extra.push_back(e.var);
    opts[s] = Optimizer::create(cfg.optimizer, cfg.lr, gather_params(m, extra));
    opts[s]->zero_grad();
    plateaus[s] = std::make_unique<PlateauScheduler>(cfg.lr, cfg.plateau);

    EvalResult ev0 = evaluate(m, *data.val, cfg.loss, cfg.batch_size);
    EpochRecord e0;
    e0.epoch = 0;
    e0.val = ev0.pooled;
    e0.val_loss = ev0.mean_loss;
    e0.lr = cfg.lr;
    rec.epochs.push_back(e0);
    rec.best_epoch = 0;
    rec.best_val_iou = ev0.pooled.iou;
    best[s] = snapshot(m);
  }

  auto student_loss = [&](int s, const Variable<float>& own_prob,
                          const Variable<float>& peer_prob,
                          const models::FeaturePyramid<float>& own_pyr,
                          const models::FeaturePyramid<float>& teacher_pyr,
                          const TensorF& y) {
    Variable<float> total = weights.w_sup == 1.0
                                ? losses::dice_loss(own_prob, y)
                                : nn::scale(losses::dice_loss(own_prob, y),
                                            weights.w_sup);
    if (weights.w_mut != 0.0)
      total = nn::add(total, nn::scale(losses::mutual_loss(own_prob,
                                                           peer_prob.detach()),
                                       weights.w_mut));
    if (use_teacher)
      total = nn::add(
          total, nn::scale(losses::distillation_loss(own_pyr, teacher_pyr, dcfg,
                                                     *projectors[s]),
                           weights.w_kd));
    return total;
  };

  std::vector<size_t> order(data.train->size());
  bool diverged = false;
  size_t global_iter = 0;
  for (int epoch = 1; epoch <= cfg.epochs && !diverged; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::stream(cfg.seed, strfmt("shuffle/%06d", epoch));
    shuffle_rng.shuffle(order);

    std::array<size_t, 2> epoch_begin{iter_ms[0].size(), iter_ms[1].size()};
    std::array<double, 2> loss_sum{0, 0};
    std::array<size_t, 2> steps{0, 0};
    std::array<double, 2> lr_used{opts[0]->lr(), opts[1]->lr()};

    for (size_t first = 0; first < order.size() && !diverged;
         first += size_t(cfg.batch_size), ++global_iter) {
      const size_t count = std::min(size_t(cfg.batch_size), order.size() - first);
      Batch batch = collate(*data.train, order, first, count);

      models::FeaturePyramid<float> teacher_pyr;
      if (use_teacher) teacher_pyr = teacher->pyramid(batch.images);

      const bool update_a =
          weights.update_mode == "simultaneous" || global_iter % 2 == 0;
      const bool update_b =
          weights.update_mode == "simultaneous" || global_iter % 2 == 1;

      auto out_a = student_a.forward(batch.images, update_a);
      auto out_b = student_b.forward(batch.images, update_b);

      for (int s = 0; s < 2; ++s) {
        const bool update = s == 0 ? update_a : update_b;
        if (!update) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Variable<float> loss =
            s == 0 ? student_loss(0, out_a.prob, out_b.prob, out_a.pyramid,
                                  teacher_pyr, batch.masks)
                   : student_loss(1, out_b.prob, out_a.prob, out_b.pyramid,
                                  teacher_pyr, batch.masks);
        opts[s]->zero_grad();
        loss.backward();
        if (!std::isfinite(double(loss.scalar())) ||
            students[s]->params().any_nonfinite_grad()) {
          recs[s].status = "diverged";
          recs[s].diagnostic = strfmt(
              "non-finite loss/gradient at epoch %d (student %c)", epoch,
              s == 0 ? 'a' : 'b');
          diverged = true;
          break;
        }
        opts[s]->step();
        const auto t1 = std::chrono::steady_clock::now();
        iter_ms[s].push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        loss_sum[s] += double(loss.scalar());
        ++steps[s];
      }
    }
    if (diverged) break;

    for (int s = 0; s < 2; ++s) {
      EvalResult ev = evaluate(*students[s], *data.val, cfg.loss, cfg.batch_size);
      EpochRecord er;
      er.epoch = epoch;
      er.train_loss = steps[s] ? loss_sum[s] / double(steps[s]) : 0.0;
      er.val = ev.pooled;
      er.val_loss = ev.mean_loss;
      er.lr = lr_used[s];
      er.ms_per_iter = epoch_ms(iter_ms[s], epoch_begin[s], iter_ms[s].size());
      recs[s].epochs.push_back(er);
      if (ev.pooled.iou > recs[s].best_val_iou) {
        recs[s].best_val_iou = ev.pooled.iou;
        recs[s].best_epoch = epoch;
        best[s] = snapshot(*students[s]);
      }
      opts[s]->set_lr(plateaus[s]->step(ev.pooled.iou));
    }
  }

  for (int s = 0; s < 2; ++s) {
    RunRecord& rec = recs[s];
    std::vector<double> post(
        iter_ms[s].begin() + std::min(iter_ms[s].size(), size_t(kWarmupIters)),
        iter_ms[s].end());
    rec.ms_per_iter = post.empty() ? median(iter_ms[s]) : median(post);
    const std::string sub = out_dir + (s == 0 ? "/a" : "/b");
    WeightSnapshot last = snapshot(*students[s]);
    restore(*students[s], best[s]);
    rec.checkpoint_path = sub + "/checkpoint.ckpt";
    models::save_checkpoint(rec.checkpoint_path, *students[s],
                            Json{{"run_hash", rec.run_hash},
                                 {"method", rec.method},
                                 {"best_epoch", rec.best_epoch},
                                 {"best_val_iou", rec.best_val_iou}});
    restore(*students[s], last);
    save_run_record(sub + "/run_record.json", rec);
  }
  return {recs[0], recs[1]};
}

}  // namespace offnadir::train
