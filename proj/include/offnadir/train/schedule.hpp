#pragma once
// Reduce-on-plateau schedule over validation IoU: after `patience` epochs
// without improvement the learning rate is multiplied by `factor` and the
// counter resets; any improvement also resets the counter.

#include "offnadir/jsonio.hpp"

namespace offnadir::train {

struct PlateauConfig {
  std::string metric = "val_iou";
  double factor = 0.1;
  int patience = 10;

  void validate() const {
    ON_CHECK(factor > 0.0 && factor < 1.0, "plateau factor must be in (0,1)");
    ON_CHECK(patience >= 1, "plateau patience must be >= 1");
    ON_CHECK(metric == "val_iou", "plateau monitors val IoU");
  }

  Json to_json() const {
    return Json{{"metric", metric}, {"factor", factor}, {"patience", patience}};
  }
  static PlateauConfig from_json(const Json& j) {
    PlateauConfig c;
    if (j.contains("metric")) c.metric = j.at("metric").get<std::string>();
    if (j.contains("factor")) c.factor = j.at("factor").get<double>();
    if (j.contains("patience")) c.patience = j.at("patience").get<int>();
    c.validate();
    return c;
  }
};

class PlateauScheduler {
public:
  PlateauScheduler(double initial_lr, PlateauConfig cfg)
      : cfg_(cfg), lr_(initial_lr) {
    cfg.validate();
  }

  // Feed one epoch's validation IoU; returns the lr for the next epoch.
  double step(double val_iou) {
    if (val_iou > best_) {
      best_ = val_iou;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
      if (bad_epochs_ >= cfg_.patience) {
        lr_ *= cfg_.factor;
        bad_epochs_ = 0;
      }
    }
    return lr_;
  }

  double lr() const { return lr_; }
  int bad_epochs() const { return bad_epochs_; }

private:
  PlateauConfig cfg_;
  double lr_;
  double best_ = -1.0;
  int bad_epochs_ = 0;
};

}  // namespace offnadir::train
