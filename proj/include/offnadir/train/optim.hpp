#pragma once
// The five optimizers of the hyperparameter search. Hyperparameters beyond
// the learning rate sit at conventional defaults and are recorded per run.

#include <memory>
#include <vector>

#include "offnadir/jsonio.hpp"
#include "offnadir/nn.hpp"

namespace offnadir::train {

enum class OptimizerName { adam, sgd, rmsprop, adadelta, nadam };

std::string optimizer_to_string(OptimizerName n);
OptimizerName optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerName name = OptimizerName::adam;
  double momentum = 0.9;     // sgd
  double beta1 = 0.9;        // adam/nadam
  double beta2 = 0.999;      // adam/nadam
  double rho = 0.9;          // rmsprop
  double adadelta_rho = 0.95;
  double eps = 1e-8;
  double adadelta_eps = 1e-6;

  Json to_json() const;
  static OptimizerConfig from_json(const Json& j);
};

class Optimizer {
public:
  virtual ~Optimizer() = default;

  static std::unique_ptr<Optimizer> create(const OptimizerConfig& cfg, double lr,
                                           std::vector<nn::Variable<float>> params);

  // Applies one update from the accumulated gradients; does not zero them.
  virtual void step() = 0;

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

protected:
  Optimizer(double lr, std::vector<nn::Variable<float>> params)
      : lr_(lr), params_(std::move(params)) {}

  double lr_;
  std::vector<nn::Variable<float>> params_;
};

}  // namespace offnadir::train
