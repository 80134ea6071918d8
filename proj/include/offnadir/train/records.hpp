#pragma once
// Training configuration and the per-run record that every report row
// traces back to.

#include <optional>

#include "offnadir/losses.hpp"
#include "offnadir/metrics.hpp"
#include "offnadir/train/optim.hpp"
#include "offnadir/train/schedule.hpp"

namespace offnadir::train {

struct TrainConfig {
  int epochs = 200;  // teachers conventionally run 50, students 200
  double lr = 1e-4;
  OptimizerConfig optimizer;
  losses::LossConfig loss;
  int batch_size = 8;
  uint64_t seed = 0;
  PlateauConfig plateau;
  std::string train_split = "train";
  std::string val_split = "val";

  void validate() const {
    ON_CHECK(epochs >= 0, "epochs must be >= 0");
    ON_CHECK(lr > 0, "lr must be positive");
    ON_CHECK(batch_size >= 1, "batch_size must be >= 1");
    plateau.validate();
  }

  Json to_json() const {
    return Json{{"epochs", epochs},
                {"lr", lr},
                {"optimizer", optimizer.to_json()},
                {"loss",
                 Json{{"name", losses::loss_name_to_string(loss.name)},
                      {"focal_gamma", loss.focal_gamma},
                      {"focal_alpha", loss.focal_alpha}}},
                {"batch_size", batch_size},
                {"seed", seed},
                {"plateau", plateau.to_json()},
                {"train_split", train_split},
                {"val_split", val_split}};
  }

  static TrainConfig from_json(const Json& j) {
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("optimizer"))
      c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
    if (j.contains("loss")) {
      const Json& l = j.at("loss");
      if (l.is_string()) {
        c.loss.name = losses::loss_name_from_string(l.get<std::string>());
      } else {
        c.loss.name = losses::loss_name_from_string(l.at("name").get<std::string>());
        if (l.contains("focal_gamma")) c.loss.focal_gamma = l.at("focal_gamma").get<double>();
        if (l.contains("focal_alpha")) c.loss.focal_alpha = l.at("focal_alpha").get<double>();
      }
    }
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("plateau")) c.plateau = PlateauConfig::from_json(j.at("plateau"));
    if (j.contains("train_split")) c.train_split = j.at("train_split").get<std::string>();
    if (j.contains("val_split")) c.val_split = j.at("val_split").get<std::string>();
    c.validate();
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  std::optional<double> train_loss;  // absent for the initial validation pass
  double val_loss = 0;
  metrics::Scores val;
  double lr = 0;
  double ms_per_iter = 0;
};

struct RunRecord {
  std::string run_hash;  // identity of (config, model, seeds, dataset)
  std::string status = "ok";  // "ok" | "diverged"
  std::string method = "train";  // train | sda | kd | dml
  Json config;
  Json model_spec;
  uint64_t model_seed = 0;
  Json dataset;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_iou = 0;
  std::string checkpoint_path;
  double ms_per_iter = 0;  // median over iterations after a 10-iter warmup
  int64_t params = 0;
  Json provenance = Json::object();
  std::string diagnostic;  // set when status == "diverged"

  double params_m() const { return double(params) / 1e6; }

  Json to_json() const {
    Json je = Json::array();
    for (const EpochRecord& e : epochs) {
      Json r{{"epoch", e.epoch},
             {"val_loss", e.val_loss},
             {"val",
              Json{{"precision", e.val.precision},
                   {"recall", e.val.recall},
                   {"iou", e.val.iou},
                   {"f1", e.val.f1},
                   {"degenerate", e.val.degenerate}}},
             {"lr", e.lr},
             {"ms_per_iter", e.ms_per_iter}};
      if (e.train_loss)
        r["train_loss"] = *e.train_loss;
      else
        r["train_loss"] = nullptr;
      je.push_back(std::move(r));
    }
    return Json{{"run_hash", run_hash},
                {"status", status},
                {"method", method},
                {"config", config},
                {"model_spec", model_spec},
                {"model_seed", model_seed},
                {"dataset", dataset},
                {"epochs", je},
                {"best_epoch", best_epoch},
                {"best_val_iou", best_val_iou},
                {"checkpoint", checkpoint_path},
                {"ms_per_iter", ms_per_iter},
                {"params", params},
                {"params_m", params_m()},
                {"provenance", provenance},
                {"diagnostic", diagnostic}};
  }

  static RunRecord from_json(const Json& j) {
    RunRecord r;
    r.run_hash = j.at("run_hash").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.config = j.at("config");
    r.model_spec = j.at("model_spec");
    r.model_seed = j.at("model_seed").get<uint64_t>();
    r.dataset = j.at("dataset");
    for (const Json& e : j.at("epochs")) {
      EpochRecord er;
      er.epoch = e.at("epoch").get<int>();
      if (!e.at("train_loss").is_null())
        er.train_loss = e.at("train_loss").get<double>();
      er.val_loss = e.at("val_loss").get<double>();
      er.val.precision = e.at("val").at("precision").get<double>();
      er.val.recall = e.at("val").at("recall").get<double>();
      er.val.iou = e.at("val").at("iou").get<double>();
      er.val.f1 = e.at("val").at("f1").get<double>();
      er.val.degenerate = e.at("val").at("degenerate").get<bool>();
      er.lr = e.at("lr").get<double>();
      er.ms_per_iter = e.at("ms_per_iter").get<double>();
      r.epochs.push_back(er);
    }
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_iou = j.at("best_val_iou").get<double>();
    r.checkpoint_path = j.at("checkpoint").get<std::string>();
    r.ms_per_iter = j.at("ms_per_iter").get<double>();
    r.params = j.at("params").get<int64_t>();
    r.provenance = j.at("provenance");
    r.diagnostic = j.at("diagnostic").get<std::string>();
    return r;
  }
};

inline void save_run_record(const std::string& path, const RunRecord& r) {
  save_json(path, r.to_json());
}

inline RunRecord load_run_record(const std::string& path) {
  return RunRecord::from_json(load_json(path));
}

}  // namespace offnadir::train
