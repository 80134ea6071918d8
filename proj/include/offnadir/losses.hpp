#pragma once
// Supervised segmentation losses (dice/jaccard/bce/focal and their sums),
// feature-map distillation, and symmetric mutual (Bernoulli KL) loss.
// Dice and jaccard aggregate sums over the whole batch; bce/focal/mse/kl are
// per-pixel means. Smoothing constant is 1.

#include <string>

#include "offnadir/ops.hpp"
#include "offnadir/ops_conv.hpp"

namespace offnadir::losses {

using nn::Node;
using nn::Tensor;
using nn::Variable;

enum class LossName {
  bce,
  bce_dice,
  bce_jaccard,
  focal_dice,
  focal_jaccard,
  jaccard,
  dice,
  focal,
  total
};

struct LossConfig {
  LossName name = LossName::dice;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  static constexpr double smooth = 1.0;
};

inline std::string loss_name_to_string(LossName n) {
  switch (n) {
    case LossName::bce: return "bce";
    case LossName::bce_dice: return "bce_dice";
    case LossName::bce_jaccard: return "bce_jaccard";
    case LossName::focal_dice: return "focal_dice";
    case LossName::focal_jaccard: return "focal_jaccard";
    case LossName::jaccard: return "jaccard";
    case LossName::dice: return "dice";
    case LossName::focal: return "focal";
    case LossName::total: return "total";
  }
  fail("unknown LossName");
}

inline LossName loss_name_from_string(const std::string& s) {
  for (LossName n : {LossName::bce, LossName::bce_dice, LossName::bce_jaccard,
                     LossName::focal_dice, LossName::focal_jaccard, LossName::jaccard,
                     LossName::dice, LossName::focal, LossName::total}) {
    if (s == loss_name_to_string(n)) return n;
  }
  // Leniency for the long-form table labels.
  if (s == "binary_focal") return LossName::focal;
  if (s == "total_loss") return LossName::total;
  fail(strfmt("unknown loss name '%s'", s.c_str()));
}

inline constexpr double kProbEps = 1e-7;

namespace detail_loss {

template <class S>
void check_pair(const Tensor<S>& p, const Tensor<S>& y) {
  ON_CHECK(p.same_shape(y), "loss: prediction/target shape mismatch");
  for (size_t i = 0; i < y.numel(); ++i)
    ON_CHECK(y.v[i] == S(0) || y.v[i] == S(1), "loss: target must be binary");
}

}  // namespace detail_loss

// L = 1 - (2*sum(y*p) + 1) / (sum(y) + sum(p) + 1), sums over the batch.
template <class S>
Variable<S> dice_loss(const Variable<S>& p, const Tensor<S>& y) {
  detail_loss::check_pair(p.value(), y);
  auto n = nn::detail::make_op<S>({p.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& pv = p.value();
  double inter = 0, sum_y = 0, sum_p = 0;
  for (size_t i = 0; i < y.numel(); ++i) {
    inter += double(y.v[i]) * pv.v[i];
    sum_y += y.v[i];
    sum_p += pv.v[i];
  }
  const double num = 2.0 * inter + 1.0;
  const double den = sum_y + sum_p + 1.0;
  n->value.v[0] = S(1.0 - num / den);
  if (n->requires_grad) {
    auto pp = p.node();
    n->backprop = [pp, y, num, den](Node<S>& self) {
      if (!pp->requires_grad) return;
      pp->ensure_grad();
      const S g = self.grad.v[0];
      const double den2 = den * den;
      for (size_t i = 0; i < y.numel(); ++i)
        pp->grad.v[i] += g * S((num - 2.0 * y.v[i] * den) / den2);
    };
  }
  return Variable<S>(n);
}

// L = 1 - (I + 1) / (U + 1), I = sum(y*p), U = sum(y) + sum(p) - I.
template <class S>
Variable<S> jaccard_loss(const Variable<S>& p, const Tensor<S>& y) {
  detail_loss::check_pair(p.value(), y);
  auto n = nn::detail::make_op<S>({p.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& pv = p.value();
  double inter = 0, sum_y = 0, sum_p = 0;
  for (size_t i = 0; i < y.numel(); ++i) {
    inter += double(y.v[i]) * pv.v[i];
    sum_y += y.v[i];
    sum_p += pv.v[i];
  }
  const double uni = sum_y + sum_p - inter;
  n->value.v[0] = S(1.0 - (inter + 1.0) / (uni + 1.0));
  if (n->requires_grad) {
    auto pp = p.node();
    n->backprop = [pp, y, inter, uni](Node<S>& self) {
      if (!pp->requires_grad) return;
      pp->ensure_grad();
      const S g = self.grad.v[0];
      const double d = (uni + 1.0) * (uni + 1.0);
      for (size_t i = 0; i < y.numel(); ++i) {
        const double yi = y.v[i];
        pp->grad.v[i] += g * S(-(yi * (uni + 1.0) - (inter + 1.0) * (1.0 - yi)) / d);
      }
    };
  }
  return Variable<S>(n);
}

// Mean over pixels of -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps].
template <class S>
Variable<S> bce_loss(const Variable<S>& p, const Tensor<S>& y) {
  detail_loss::check_pair(p.value(), y);
  auto n = nn::detail::make_op<S>({p.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& pv = p.value();
  const size_t m = y.numel();
  double acc = 0;
  for (size_t i = 0; i < m; ++i) {
    double pc = std::min(std::max(double(pv.v[i]), kProbEps), 1.0 - kProbEps);
    acc += -(double(y.v[i]) * std::log(pc) + (1.0 - y.v[i]) * std::log(1.0 - pc));
  }
  n->value.v[0] = S(acc / double(m));
  if (n->requires_grad) {
    auto pp = p.node();
    n->backprop = [pp, y, m](Node<S>& self) {
      if (!pp->requires_grad) return;
      pp->ensure_grad();
      const S g = self.grad.v[0];
      for (size_t i = 0; i < m; ++i) {
        const double pr = double(pp->value.v[i]);
        if (pr <= kProbEps || pr >= 1.0 - kProbEps) continue;  // clamped: flat
        pp->grad.v[i] += g * S((pr - y.v[i]) / (pr * (1.0 - pr)) / double(m));
      }
    };
  }
  return Variable<S>(n);
}

// Mean of -[a y (1-p)^g ln p + (1-a)(1-y) p^g ln(1-p)].
template <class S>
Variable<S> focal_loss(const Variable<S>& p, const Tensor<S>& y, double gamma,
                       double alpha) {
  detail_loss::check_pair(p.value(), y);
  ON_CHECK(gamma >= 0.0, "focal_loss: gamma must be >= 0");
  ON_CHECK(alpha > 0.0 && alpha < 1.0, "focal_loss: alpha must be in (0,1)");
  auto n = nn::detail::make_op<S>({p.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& pv = p.value();
  const size_t m = y.numel();
  double acc = 0;
  for (size_t i = 0; i < m; ++i) {
    const double pc = std::min(std::max(double(pv.v[i]), kProbEps), 1.0 - kProbEps);
    if (y.v[i] == S(1))
      acc += -alpha * std::pow(1.0 - pc, gamma) * std::log(pc);
    else
      acc += -(1.0 - alpha) * std::pow(pc, gamma) * std::log(1.0 - pc);
  }
  n->value.v[0] = S(acc / double(m));
  if (n->requires_grad) {
    auto pp = p.node();
    n->backprop = [pp, y, gamma, alpha, m](Node<S>& self) {
      if (!pp->requires_grad) return;
      pp->ensure_grad();
      const S g = self.grad.v[0];
      for (size_t i = 0; i < m; ++i) {
        const double pr = double(pp->value.v[i]);
        if (pr <= kProbEps || pr >= 1.0 - kProbEps) continue;
        double d;
        if (y.v[i] == S(1)) {
          d = alpha * gamma * std::pow(1.0 - pr, gamma - 1.0) * std::log(pr) -
              alpha * std::pow(1.0 - pr, gamma) / pr;
        } else {
          d = -(1.0 - alpha) * gamma * std::pow(pr, gamma - 1.0) * std::log(1.0 - pr) +
              (1.0 - alpha) * std::pow(pr, gamma) / (1.0 - pr);
        }
        pp->grad.v[i] += g * S(d / double(m));
      }
    };
  }
  return Variable<S>(n);
}

// Composite rows of the loss table; all unweighted sums.
template <class S>
Variable<S> combined_loss(const LossConfig& cfg, const Variable<S>& p,
                          const Tensor<S>& y) {
  switch (cfg.name) {
    case LossName::bce:
      return bce_loss(p, y);
    case LossName::dice:
      return dice_loss(p, y);
    case LossName::jaccard:
      return jaccard_loss(p, y);
    case LossName::focal:
      return focal_loss(p, y, cfg.focal_gamma, cfg.focal_alpha);
    case LossName::bce_dice:
      return nn::add(bce_loss(p, y), dice_loss(p, y));
    case LossName::bce_jaccard:
      return nn::add(bce_loss(p, y), jaccard_loss(p, y));
    case LossName::focal_dice:
      return nn::add(focal_loss(p, y, cfg.focal_gamma, cfg.focal_alpha),
                     dice_loss(p, y));
    case LossName::focal_jaccard:
      return nn::add(focal_loss(p, y, cfg.focal_gamma, cfg.focal_alpha),
                     jaccard_loss(p, y));
    case LossName::total:
      return nn::add(dice_loss(p, y),
                     focal_loss(p, y, cfg.focal_gamma, cfg.focal_alpha));
  }
  fail("combined_loss: unknown loss name");
}

// Mean squared error between two tensors of equal shape.
template <class S>
Variable<S> mse_loss(const Variable<S>& a, const Variable<S>& b) {
  ON_CHECK(a.value().same_shape(b.value()), "mse_loss: shape mismatch");
  auto n = nn::detail::make_op<S>({a.node(), b.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& av = a.value();
  const auto& bv = b.value();
  const size_t m = av.numel();
  double acc = 0;
  for (size_t i = 0; i < m; ++i) {
    const double d = double(av.v[i]) - bv.v[i];
    acc += d * d;
  }
  n->value.v[0] = S(acc / double(m));
  if (n->requires_grad) {
    auto ap = a.node(), bp = b.node();
    n->backprop = [ap, bp, m](Node<S>& self) {
      const S g = self.grad.v[0];
      if (ap->requires_grad) ap->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const S d = S(2.0 / double(m)) * (ap->value.v[i] - bp->value.v[i]) * g;
        if (ap->requires_grad) ap->grad.v[i] += d;
        if (bp->requires_grad) bp->grad.v[i] -= d;
      }
    };
  }
  return Variable<S>(n);
}

// Symmetric Bernoulli KL between probability maps:
// mean_j 0.5 * [KL(a_j||b_j) + KL(b_j||a_j)], probabilities eps-clamped.
template <class S>
Variable<S> mutual_loss(const Variable<S>& pa, const Variable<S>& pb) {
  ON_CHECK(pa.value().same_shape(pb.value()), "mutual_loss: shape mismatch");
  auto n = nn::detail::make_op<S>({pa.node(), pb.node()});
  n->value.resize(1, 1, 1, 1);
  const auto& av = pa.value();
  const auto& bv = pb.value();
  const size_t m = av.numel();
  auto clamp = [](double x) {
    return std::min(std::max(x, kProbEps), 1.0 - kProbEps);
  };
  double acc = 0;
  for (size_t i = 0; i < m; ++i) {
    const double a = clamp(double(av.v[i])), b = clamp(double(bv.v[i]));
    const double kl_ab = a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b));
    const double kl_ba = b * std::log(b / a) + (1 - b) * std::log((1 - b) / (1 - a));
    acc += 0.5 * (kl_ab + kl_ba);
  }
  n->value.v[0] = S(acc / double(m));
  if (n->requires_grad) {
    auto ap = pa.node(), bp = pb.node();
    n->backprop = [ap, bp, m, clamp](Node<S>& self) {
      const S g = self.grad.v[0];
      if (ap->requires_grad) ap->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      for (size_t i = 0; i < m; ++i) {
        const double ar = double(ap->value.v[i]), br = double(bp->value.v[i]);
        const double a = clamp(ar), b = clamp(br);
        if (ap->requires_grad && ar > kProbEps && ar < 1.0 - kProbEps) {
          const double d =
              std::log(a * (1 - b) / (b * (1 - a))) - b / a + (1 - b) / (1 - a);
          ap->grad.v[i] += g * S(0.5 * d / double(m));
        }
        if (bp->requires_grad && br > kProbEps && br < 1.0 - kProbEps) {
          const double d =
              std::log(b * (1 - a) / (a * (1 - b))) - a / b + (1 - a) / (1 - b);
          bp->grad.v[i] += g * S(0.5 * d / double(m));
        }
      }
    };
  }
  return Variable<S>(n);
}

// ---------------------------------------------------------------------------
// Feature-map distillation
// ---------------------------------------------------------------------------

struct DistillConfig {
  double alpha = 0.5;  // supervised weight; 1 disables distillation exactly
  std::array<double, 5> level_weights{0.2, 0.2, 0.2, 0.2, 0.2};
  bool normalize = true;  // RMS-normalize features before the MSE

  void validate() const {
    ON_CHECK(alpha >= 0.0 && alpha <= 1.0, "DistillConfig: alpha in [0,1]");
    double s = 0;
    for (double w : level_weights) {
      ON_CHECK(w >= 0.0, "DistillConfig: negative level weight");
      s += w;
    }
    ON_CHECK(std::abs(s - 1.0) < 1e-9, "DistillConfig: level weights must sum to 1");
  }
};

// Learned 1x1 projections from student to teacher channel counts, one per
// level. Identity-initialized when the channel counts match, so a student
// that starts as a copy of the teacher has zero distillation loss at step 0.
template <class S>
class FeatureProjector {
public:
  FeatureProjector() = default;

  // `make_param` is the model/trainer parameter factory:
  // (name, shape, identity_init) -> Variable.
  template <class MakeParam>
  FeatureProjector(const std::array<int, 5>& student_ch,
                   const std::array<int, 5>& teacher_ch, MakeParam&& make_param) {
    for (int l = 0; l < 5; ++l) {
      proj_[l] = make_param(strfmt("distill.proj%d.w", l),
                            std::array<int, 4>{teacher_ch[l], student_ch[l], 1, 1},
                            student_ch[l] == teacher_ch[l]);
    }
  }

  bool defined() const { return proj_[0].defined(); }

  Variable<S> apply(int level, const Variable<S>& feat) const {
    ON_CHECK(proj_[level].defined(), "FeatureProjector: not initialized");
    if (identity_shortcut(level, feat)) return feat;
    return nn::conv2d(feat, proj_[level], Variable<S>(), 1, 0);
  }

private:
  bool identity_shortcut(int, const Variable<S>&) const { return false; }
  std::array<Variable<S>, 5> proj_;
};

// Weighted sum over levels of MSE between (optionally RMS-normalized)
// projected student features and teacher features.
template <class S>
Variable<S> distillation_loss(const std::array<Variable<S>, 5>& student_pyr,
                              const std::array<Variable<S>, 5>& teacher_pyr,
                              const DistillConfig& cfg,
                              const FeatureProjector<S>& projector) {
  cfg.validate();
  Variable<S> total;
  for (int l = 0; l < 5; ++l) {
    ON_CHECK(student_pyr[l].defined() && teacher_pyr[l].defined(),
             "distillation_loss: pyramid must have 5 levels");
    if (cfg.level_weights[l] == 0.0) continue;
    Variable<S> s = projector.defined() ? projector.apply(l, student_pyr[l])
                                        : student_pyr[l];
    Variable<S> t = teacher_pyr[l];
    ON_CHECK(s.value().c() == t.value().c(),
             "distillation_loss: level %d channels %d vs %d (projector required)",
             l, s.value().c(), t.value().c());
    if (cfg.normalize) {
      s = nn::rms_norm_sample(s, 1e-6);
      t = nn::rms_norm_sample(t, 1e-6);
    }
    Variable<S> term = nn::scale(mse_loss(s, t), cfg.level_weights[l]);
    total = total.defined() ? nn::add(total, term) : term;
  }
  if (!total.defined()) {
    Tensor<S> z(1, 1, 1, 1);
    total = Variable<S>::constant(z);
  }
  return total;
}

}  // namespace offnadir::losses
