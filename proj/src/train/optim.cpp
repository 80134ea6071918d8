#include "offnadir/train/optim.hpp"

#include <cmath>

namespace offnadir::train {

std::string optimizer_to_string(OptimizerName n) {
  switch (n) {
    case OptimizerName::adam: return "adam";
    case OptimizerName::sgd: return "sgd";
    case OptimizerName::rmsprop: return "rmsprop";
    case OptimizerName::adadelta: return "adadelta";
    case OptimizerName::nadam: return "nadam";
  }
  fail("bad OptimizerName");
}

OptimizerName optimizer_from_string(const std::string& s) {
  for (OptimizerName n : {OptimizerName::adam, OptimizerName::sgd,
                          OptimizerName::rmsprop, OptimizerName::adadelta,
                          OptimizerName::nadam})
    if (optimizer_to_string(n) == s) return n;
  fail(strfmt("unknown optimizer '%s'", s.c_str()));
}

Json OptimizerConfig::to_json() const {
  return Json{{"name", optimizer_to_string(name)},
              {"momentum", momentum},
              {"beta1", beta1},
              {"beta2", beta2},
              {"rho", rho},
              {"adadelta_rho", adadelta_rho},
              {"eps", eps},
              {"adadelta_eps", adadelta_eps}};
}

OptimizerConfig OptimizerConfig::from_json(const Json& j) {
  OptimizerConfig c;
  if (j.is_string()) {  // shorthand: just the name
    c.name = optimizer_from_string(j.get<std::string>());
    return c;
  }
  c.name = optimizer_from_string(j.at("name").get<std::string>());
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("rho")) c.rho = j.at("rho").get<double>();
  if (j.contains("adadelta_rho")) c.adadelta_rho = j.at("adadelta_rho").get<double>();
  if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  if (j.contains("adadelta_eps")) c.adadelta_eps = j.at("adadelta_eps").get<double>();
  return c;
}

namespace {

using nn::Variable;

struct Slot {
  std::vector<float> a, b;  // per-optimizer meaning
};

class SgdMomentum : public Optimizer {
public:
  SgdMomentum(const OptimizerConfig& cfg, double lr,
              std::vector<Variable<float>> params)
      : Optimizer(lr, std::move(params)), mu_(float(cfg.momentum)) {
    state_.resize(params_.size());
  }
  void step() override {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.requires_grad()) continue;
      auto& t = p.mutable_value();
      const auto& g = p.grad();
      auto& v = state_[i].a;
      if (v.empty()) v.assign(t.numel(), 0.f);
      for (size_t k = 0; k < t.numel(); ++k) {
        v[k] = mu_ * v[k] + g.v[k];
        t.v[k] -= float(lr_) * v[k];
      }
    }
  }

private:
  float mu_;
  std::vector<Slot> state_;
};

class Adam : public Optimizer {
public:
  Adam(const OptimizerConfig& cfg, double lr, std::vector<Variable<float>> params,
       bool nesterov)
      : Optimizer(lr, std::move(params)),
        b1_(cfg.beta1),
        b2_(cfg.beta2),
        eps_(cfg.eps),
        nesterov_(nesterov) {
    state_.resize(params_.size());
  }
  void step() override {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.requires_grad()) continue;
      auto& w = p.mutable_value();
      const auto& g = p.grad();
      auto& m = state_[i].a;
      auto& v = state_[i].b;
      if (m.empty()) {
        m.assign(w.numel(), 0.f);
        v.assign(w.numel(), 0.f);
      }
      for (size_t k = 0; k < w.numel(); ++k) {
        const double gk = g.v[k];
        m[k] = float(b1_ * m[k] + (1 - b1_) * gk);
        v[k] = float(b2_ * v[k] + (1 - b2_) * gk * gk);
        const double vhat = v[k] / bc2;
        double num;
        if (nesterov_)
          num = b1_ * (m[k] / bc1) + (1 - b1_) * gk / bc1;
        else
          num = m[k] / bc1;
        w.v[k] -= float(lr_ * num / (std::sqrt(vhat) + eps_));
      }
    }
  }

private:
  double b1_, b2_, eps_;
  bool nesterov_;
  int t_ = 0;
  std::vector<Slot> state_;
};

class RmsProp : public Optimizer {
public:
  RmsProp(const OptimizerConfig& cfg, double lr, std::vector<Variable<float>> params)
      : Optimizer(lr, std::move(params)), rho_(cfg.rho), eps_(cfg.eps) {
    state_.resize(params_.size());
  }
  void step() override {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.requires_grad()) continue;
      auto& w = p.mutable_value();
      const auto& g = p.grad();
      auto& a = state_[i].a;
      if (a.empty()) a.assign(w.numel(), 0.f);
      for (size_t k = 0; k < w.numel(); ++k) {
        const double gk = g.v[k];
        a[k] = float(rho_ * a[k] + (1 - rho_) * gk * gk);
        w.v[k] -= float(lr_ * gk / (std::sqrt(double(a[k])) + eps_));
      }
    }
  }

private:
  double rho_, eps_;
  std::vector<Slot> state_;
};

class Adadelta : public Optimizer {
public:
  Adadelta(const OptimizerConfig& cfg, double lr, std::vector<Variable<float>> params)
      : Optimizer(lr, std::move(params)), rho_(cfg.adadelta_rho), eps_(cfg.adadelta_eps) {
    state_.resize(params_.size());
  }
  void step() override {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.requires_grad()) continue;
      auto& w = p.mutable_value();
      const auto& g = p.grad();
      auto& a = state_[i].a;  // E[g^2]
      auto& d = state_[i].b;  // E[dx^2]
      if (a.empty()) {
        a.assign(w.numel(), 0.f);
        d.assign(w.numel(), 0.f);
      }
      for (size_t k = 0; k < w.numel(); ++k) {
        const double gk = g.v[k];
        a[k] = float(rho_ * a[k] + (1 - rho_) * gk * gk);
        const double dx =
            -std::sqrt((double(d[k]) + eps_) / (double(a[k]) + eps_)) * gk;
        d[k] = float(rho_ * d[k] + (1 - rho_) * dx * dx);
        w.v[k] += float(lr_ * dx);
      }
    }
  }

private:
  double rho_, eps_;
  std::vector<Slot> state_;
};

}  // namespace

std::unique_ptr<Optimizer> Optimizer::create(const OptimizerConfig& cfg, double lr,
                                             std::vector<nn::Variable<float>> params) {
  switch (cfg.name) {
    case OptimizerName::sgd:
      return std::make_unique<SgdMomentum>(cfg, lr, std::move(params));
    case OptimizerName::adam:
      return std::make_unique<Adam>(cfg, lr, std::move(params), false);
    case OptimizerName::nadam:
      return std::make_unique<Adam>(cfg, lr, std::move(params), true);
    case OptimizerName::rmsprop:
      return std::make_unique<RmsProp>(cfg, lr, std::move(params));
    case OptimizerName::adadelta:
      return std::make_unique<Adadelta>(cfg, lr, std::move(params));
  }
  fail("bad OptimizerName");
}

}  // namespace offnadir::train
