// Closed-form values, gradient checks, and invariants for the loss family.

#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "offnadir/losses.hpp"
#include "offnadir/nn.hpp"

using namespace offnadir;
using namespace offnadir::losses;
using nn::Tensor;
using nn::Variable;
using offnadir::testing::gradcheck;
using offnadir::testing::random_tensor;

namespace {

Tensor<double> const_map(int n, int c, int h, int w, double v) {
  Tensor<double> t(n, c, h, w);
  t.fill(v);
  return t;
}

Tensor<double> random_binary(int h, int w, uint64_t seed) {
  Tensor<double> t(1, 1, h, w);
  Rng rng(seed);
  for (auto& v : t.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return t;
}

Variable<double> leafv(Tensor<double> t) {
  return Variable<double>::leaf(std::move(t), true);
}

}  // namespace

TEST_CASE("dice loss closed forms") {
  // Perfect overlap, 16 px of ones: 1 - 33/33 = 0.
  auto p = Variable<double>::constant(const_map(1, 1, 4, 4, 1.0));
  CHECK(dice_loss(p, const_map(1, 1, 4, 4, 1.0)).scalar() == doctest::Approx(0.0).epsilon(1e-12));
  // Edge case y = p = 0 from the smoothing constant: exactly 0.
  auto z = Variable<double>::constant(const_map(1, 1, 4, 4, 0.0));
  CHECK(dice_loss(z, const_map(1, 1, 4, 4, 0.0)).scalar() == 0.0);
  // Disjoint: y ones over 4 px, p zeros -> 1 - 1/5.
  auto p0 = Variable<double>::constant(const_map(1, 1, 2, 2, 0.0));
  CHECK(dice_loss(p0, const_map(1, 1, 2, 2, 1.0)).scalar() == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("jaccard loss closed forms") {
  auto p = Variable<double>::constant(const_map(1, 1, 4, 4, 1.0));
  CHECK(jaccard_loss(p, const_map(1, 1, 4, 4, 1.0)).scalar() == doctest::Approx(0.0).epsilon(1e-12));
  // Disjoint 4 px each over an 8-px map: 1 - 1/9.
  Tensor<double> y(1, 1, 2, 4), pm(1, 1, 2, 4);
  for (int i = 0; i < 4; ++i) {
    y.v[i] = 1.0;
    pm.v[4 + i] = 1.0;
  }
  CHECK(jaccard_loss(Variable<double>::constant(pm), y).scalar() ==
        doctest::Approx(1.0 - 1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("jaccard matches brute-force smoothed IoU on random maps") {
  Rng rng(404);
  Tensor<double> y = random_binary(8, 8, 405);
  Tensor<double> p(1, 1, 8, 8);
  for (auto& v : p.v) v = rng.uniform(0.0, 1.0);
  double inter = 0, uni = 0;
  for (size_t i = 0; i < p.numel(); ++i) {
    inter += y.v[i] * p.v[i];
    uni += y.v[i] + p.v[i] - y.v[i] * p.v[i];
  }
  const double expect = 1.0 - (inter + 1.0) / (uni + 1.0);
  CHECK(jaccard_loss(Variable<double>::constant(p), y).scalar() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bce loss closed forms and oracle") {
  auto yh = random_binary(4, 4, 501);
  auto ph = Variable<double>::constant(const_map(1, 1, 4, 4, 0.5));
  CHECK(bce_loss(ph, yh).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // p == y exactly: post-clamp loss is at most -ln(1-eps).
  auto py = Variable<double>::constant(yh);
  CHECK(bce_loss(py, yh).scalar() <= -std::log(1.0 - 1e-7) + 1e-15);
  // Random maps match the per-pixel summation oracle.
  Rng rng(502);
  Tensor<double> p(1, 1, 6, 6), y(1, 1, 6, 6);
  for (auto& v : p.v) v = rng.uniform(0.01, 0.99);
  for (auto& v : y.v) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  double acc = 0;
  for (size_t i = 0; i < p.numel(); ++i)
    acc += -(y.v[i] * std::log(p.v[i]) + (1 - y.v[i]) * std::log(1 - p.v[i]));
  CHECK(bce_loss(Variable<double>::constant(p), y).scalar() ==
        doctest::Approx(acc / p.numel()).epsilon(1e-12));
}

TEST_CASE("binary focal loss closed forms") {
  Tensor<double> y1(1, 1, 1, 1), y0(1, 1, 1, 1);
  y1.v[0] = 1.0;
  auto p = Variable<double>::constant(const_map(1, 1, 1, 1, 0.5));
  // y=1: 0.25 * 0.25 * ln 2
  CHECK(focal_loss(p, y1, 2.0, 0.25).scalar() ==
        doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  // y=0: 0.75 * 0.25 * ln 2
  CHECK(focal_loss(p, y0, 2.0, 0.25).scalar() ==
        doctest::Approx(0.75 * 0.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("focal with gamma=0, alpha=0.5 halves bce") {
  Rng rng(601);
  Tensor<double> p(1, 1, 5, 5), y = random_binary(5, 5, 602);
  for (auto& v : p.v) v = rng.uniform(0.05, 0.95);
  auto pv = Variable<double>::constant(p);
  CHECK(focal_loss(pv, y, 0.0, 0.5).scalar() ==
        doctest::Approx(0.5 * bce_loss(pv, y).scalar()).epsilon(1e-12));
}

TEST_CASE("combined losses are exact sums") {
  Rng rng(603);
  Tensor<double> p(1, 1, 5, 5), y = random_binary(5, 5, 604);
  for (auto& v : p.v) v = rng.uniform(0.05, 0.95);
  auto pv = Variable<double>::constant(p);
  LossConfig cfg;
  cfg.name = LossName::bce_dice;
  CHECK(combined_loss(cfg, pv, y).scalar() ==
        doctest::Approx(bce_loss(pv, y).scalar() + dice_loss(pv, y).scalar())
            .epsilon(1e-15));
  cfg.name = LossName::total;
  CHECK(combined_loss(cfg, pv, y).scalar() ==
        doctest::Approx(dice_loss(pv, y).scalar() +
                        focal_loss(pv, y, cfg.focal_gamma, cfg.focal_alpha).scalar())
            .epsilon(1e-15));
  // total on perfect all-ones prediction is ~0.
  auto ones = Variable<double>::constant(const_map(1, 1, 4, 4, 1.0));
  cfg.name = LossName::total;
  CHECK(combined_loss(cfg, ones, const_map(1, 1, 4, 4, 1.0)).scalar() < 1e-6);
}

TEST_CASE("loss gradients match central differences") {
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    Tensor<double> y = random_binary(6, 6, 700 + seed);
    Rng rng(710 + seed);
    Tensor<double> p0(1, 1, 6, 6);
    for (auto& v : p0.v) v = rng.uniform(0.05, 0.95);
    auto p = leafv(p0);
    CHECK(gradcheck(p, [&] { return dice_loss(p, y); }, 1e-5).max_rel_err < 1e-5);
    CHECK(gradcheck(p, [&] { return jaccard_loss(p, y); }, 1e-5).max_rel_err < 1e-5);
    CHECK(gradcheck(p, [&] { return bce_loss(p, y); }, 1e-5).max_rel_err < 1e-5);
    CHECK(gradcheck(p, [&] { return focal_loss(p, y, 2.0, 0.25); }, 1e-5).max_rel_err <
          1e-5);
  }
}

TEST_CASE("loss ranges and monotone response toward the target") {
  Rng rng(801);
  Tensor<double> y = random_binary(8, 8, 802);
  Tensor<double> p(1, 1, 8, 8);
  for (auto& v : p.v) v = rng.uniform(0.0, 1.0);
  auto pv = Variable<double>::constant(p);
  const double d0 = dice_loss(pv, y).scalar();
  const double j0 = jaccard_loss(pv, y).scalar();
  CHECK(d0 >= 0.0);
  CHECK(d0 < 1.0);
  CHECK(j0 >= 0.0);
  CHECK(j0 < 1.0);
  CHECK(bce_loss(pv, y).scalar() >= 0.0);
  CHECK(focal_loss(pv, y, 2.0, 0.25).scalar() >= 0.0);
  // Move every pixel halfway toward its target: dice never increases.
  Tensor<double> p2 = p;
  for (size_t i = 0; i < p2.numel(); ++i) p2.v[i] += 0.5 * (y.v[i] - p2.v[i]);
  CHECK(dice_loss(Variable<double>::constant(p2), y).scalar() <= d0 + 1e-12);
}

TEST_CASE("mutual loss: zero at equality, symmetric, closed form") {
  Rng rng(901);
  Tensor<double> a(1, 1, 4, 4), b(1, 1, 4, 4);
  for (auto& v : a.v) v = rng.uniform(0.05, 0.95);
  for (auto& v : b.v) v = rng.uniform(0.05, 0.95);
  auto av = Variable<double>::constant(a), bv = Variable<double>::constant(b);
  CHECK(mutual_loss(av, av).scalar() == 0.0);
  CHECK(mutual_loss(av, bv).scalar() == mutual_loss(bv, av).scalar());
  CHECK(mutual_loss(av, bv).scalar() >= 0.0);

  Tensor<double> pa(1, 1, 1, 1), pb(1, 1, 1, 1);
  pa.v[0] = 0.9;
  pb.v[0] = 0.1;
  CHECK(mutual_loss(Variable<double>::constant(pa), Variable<double>::constant(pb))
            .scalar() == doctest::Approx(0.8 * std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("mutual loss gradients") {
  Rng rng(902);
  Tensor<double> a0(1, 1, 4, 4), b0(1, 1, 4, 4);
  for (auto& v : a0.v) v = rng.uniform(0.1, 0.9);
  for (auto& v : b0.v) v = rng.uniform(0.1, 0.9);
  auto a = leafv(a0);
  auto bvc = Variable<double>::constant(b0);
  CHECK(gradcheck(a, [&] { return mutual_loss(a, bvc); }, 1e-6).max_rel_err < 1e-6);
}

namespace {

std::array<Variable<double>, 5> make_pyramid(const std::array<int, 5>& ch,
                                             uint64_t seed) {
  std::array<Variable<double>, 5> pyr;
  int side = 16;
  for (int l = 0; l < 5; ++l) {
    pyr[l] = Variable<double>::constant(random_tensor(2, ch[l], side, side, seed + l));
    side = std::max(1, side / 2);
  }
  return pyr;
}

}  // namespace

TEST_CASE("distillation loss: identity, level weighting, homogeneity") {
  const std::array<int, 5> ch{4, 8, 12, 16, 20};
  nn::ParamStore<double> ps(42);
  FeatureProjector<double> proj(ch, ch, [&](const std::string& name,
                                            std::array<int, 4> shape, bool ident) {
    return ps.param(name, shape, ident ? nn::Init::identity_1x1 : nn::Init::he_normal);
  });
  DistillConfig cfg;

  auto pyr = make_pyramid(ch, 1000);
  // Same pyramid on both sides with identity projection: exactly zero.
  CHECK(distillation_loss(pyr, pyr, cfg, proj).scalar() == 0.0);

  // One-hot weight on level 4: other levels do not contribute.
  cfg.level_weights = {0, 0, 0, 0, 1};
  auto teacher = make_pyramid(ch, 2000);
  const double l_onehot = distillation_loss(pyr, teacher, cfg, proj).scalar();
  auto teacher2 = teacher;
  teacher2[0] = Variable<double>::constant(random_tensor(2, ch[0], 16, 16, 3000));
  teacher2[2] = Variable<double>::constant(random_tensor(2, ch[2], 4, 4, 3001));
  CHECK(distillation_loss(pyr, teacher2, cfg, proj).scalar() ==
        doctest::Approx(l_onehot).epsilon(1e-15));

  // Mean-squared homogeneity with normalization off: scaling both pyramids
  // by 2 scales the loss by 4.
  cfg.level_weights = {0.2, 0.2, 0.2, 0.2, 0.2};
  cfg.normalize = false;
  const double base = distillation_loss(pyr, teacher, cfg, proj).scalar();
  std::array<Variable<double>, 5> pyr2, teacher_x2;
  for (int l = 0; l < 5; ++l) {
    pyr2[l] = nn::scale(pyr[l], 2.0);
    teacher_x2[l] = nn::scale(teacher[l], 2.0);
  }
  CHECK(distillation_loss(pyr2, teacher_x2, cfg, proj).scalar() ==
        doctest::Approx(4.0 * base).epsilon(1e-12));

  // With normalization on, scale invariance instead (up to the norm eps).
  cfg.normalize = true;
  const double n1 = distillation_loss(pyr, teacher, cfg, proj).scalar();
  const double n2 = distillation_loss(pyr2, teacher_x2, cfg, proj).scalar();
  CHECK(n1 == doctest::Approx(n2).epsilon(1e-4));
}

TEST_CASE("distillation loss projects mismatched channels") {
  const std::array<int, 5> sch{2, 4, 6, 8, 10};
  const std::array<int, 5> tch{4, 8, 12, 16, 20};
  nn::ParamStore<double> ps(43);
  FeatureProjector<double> proj(sch, tch, [&](const std::string& name,
                                              std::array<int, 4> shape, bool ident) {
    return ps.param(name, shape, ident ? nn::Init::identity_1x1 : nn::Init::he_normal);
  });
  DistillConfig cfg;
  auto s = make_pyramid(sch, 4000);
  auto t = make_pyramid(tch, 5000);
  const double v = distillation_loss(s, t, cfg, proj).scalar();
  CHECK(v >= 0.0);
  CHECK(std::isfinite(v));
}

TEST_CASE("distill config validation") {
  DistillConfig cfg;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.alpha = 0.5;
  cfg.level_weights = {0.5, 0.5, 0.5, 0, 0};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("loss name round trip") {
  for (const char* n : {"bce", "bce_dice", "bce_jaccard", "focal_dice",
                        "focal_jaccard", "jaccard", "dice", "focal", "total"}) {
    CHECK(loss_name_to_string(loss_name_from_string(n)) == n);
  }
  CHECK_THROWS_AS(loss_name_from_string("hinge"), Error);
}
