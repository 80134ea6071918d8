#pragma once
// Convolution, normalization, and batched-matmul ops. GEMM via Eigen,
// parallelized over the batch so results are bit-identical for any thread
// count (each sample's outputs are written by exactly one thread; weight
// gradients are reduced in fixed sample order).

#include <Eigen/Core>

#include "offnadir/ops.hpp"

namespace offnadir::nn {

namespace detail {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapRM = Eigen::Map<const MatRM<S>>;

// col layout: (Cin*kh*kw) x (Ho*Wo), row-major.
template <class S>
void im2col(const Tensor<S>& x, int n, int kh, int kw, int stride, int pad,
            int ho, int wo, S* col) {
  const int cin = x.c(), hi = x.h(), wi = x.w();
  for (int c = 0; c < cin; ++c) {
    const S* src = x.plane(n, c);
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        S* dst = col + (size_t(c) * kh * kw + size_t(ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= hi) {
            std::fill_n(dst + size_t(oy) * wo, wo, S(0));
            continue;
          }
          const S* row = src + size_t(iy) * wi;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[size_t(oy) * wo + ox] = (ix >= 0 && ix < wi) ? row[ix] : S(0);
          }
        }
      }
  }
}

template <class S>
void col2im_add(const S* col, int cin, int kh, int kw, int stride, int pad,
                int ho, int wo, Tensor<S>& dx, int n) {
  const int hi = dx.h(), wi = dx.w();
  for (int c = 0; c < cin; ++c) {
    S* dst = dx.plane(n, c);
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const S* src = col + (size_t(c) * kh * kw + size_t(ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= hi) continue;
          S* row = dst + size_t(iy) * wi;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < wi) row[ix] += src[size_t(oy) * wo + ox];
          }
        }
      }
  }
}

}  // namespace detail

// conv2d: x (N,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (1,Cout,1,1).
template <class S>
Variable<S> conv2d(const Variable<S>& x, const Variable<S>& w, const Variable<S>& b,
                   int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const int cout = wv.n(), cin = wv.c(), kh = wv.h(), kw = wv.w();
  ON_CHECK(xv.c() == cin, "conv2d: input channels %d != weight %d", xv.c(), cin);
  const bool has_bias = b.defined();
  if (has_bias)
    ON_CHECK(b.value().c() == cout && b.value().numel() == size_t(cout),
             "conv2d: bias shape");
  const int ho = (xv.h() + 2 * pad - kh) / stride + 1;
  const int wo = (xv.w() + 2 * pad - kw) / stride + 1;
  ON_CHECK(ho > 0 && wo > 0, "conv2d: output would be empty");

  std::vector parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  auto n = detail::make_op<S>(std::move(parents));
  n->value.resize(xv.n(), cout, ho, wo);

  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  const size_t colrows = size_t(cin) * kh * kw;
  const size_t hw = size_t(ho) * wo;
  detail::CMapRM<S> wmat(wv.data(), cout, colrows);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < xv.n(); ++i) {
    detail::MapRM<S> out(n->value.plane(i, 0), cout, hw);
    if (pointwise) {
      detail::CMapRM<S> in(xv.plane(i, 0), cin, hw);
      out.noalias() = wmat * in;
    } else {
      std::vector<S> col(colrows * hw);
      detail::im2col(xv, i, kh, kw, stride, pad, ho, wo, col.data());
      detail::CMapRM<S> in(col.data(), colrows, hw);
      out.noalias() = wmat * in;
    }
    if (has_bias) {
      const S* bias = b.value().data();
      for (int c = 0; c < cout; ++c) out.row(c).array() += bias[c];
    }
  }

  if (n->requires_grad) {
    auto xp = x.node(), wp = w.node();
    auto bp = has_bias ? b.node() : nullptr;
    n->backprop = [xp, wp, bp, stride, pad, cout, cin, kh, kw, ho, wo, pointwise,
                   colrows, hw](Node<S>& self) {
      const auto& xv2 = xp->value;
      const int nb = xv2.n();
      detail::CMapRM<S> wmat2(wp->value.data(), cout, colrows);
      if (xp->requires_grad) {
        xp->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < nb; ++i) {
          detail::CMapRM<S> gout(self.grad.plane(i, 0), cout, hw);
          if (pointwise) {
            detail::MapRM<S> gin(xp->grad.plane(i, 0), cin, hw);
            gin.noalias() += wmat2.transpose() * gout;
          } else {
            std::vector<S> colg(colrows * hw);
            detail::MapRM<S> cg(colg.data(), colrows, hw);
            cg.noalias() = wmat2.transpose() * gout;
            detail::col2im_add(colg.data(), cin, kh, kw, stride, pad, ho, wo,
                               xp->grad, i);
          }
        }
      }
      if (wp->requires_grad) {
        wp->ensure_grad();
        // Per-sample partials, reduced in fixed order for determinism.
        std::vector<std::vector<S>> partials(nb);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < nb; ++i) {
          partials[i].resize(size_t(cout) * colrows);
          detail::MapRM<S> dw(partials[i].data(), cout, colrows);
          detail::CMapRM<S> gout(self.grad.plane(i, 0), cout, hw);
          if (pointwise) {
            detail::CMapRM<S> in(xv2.plane(i, 0), cin, hw);
            dw.noalias() = gout * in.transpose();
          } else {
            std::vector<S> col(colrows * hw);
            detail::im2col(xv2, i, kh, kw, stride, pad, ho, wo, col.data());
            detail::CMapRM<S> in(col.data(), colrows, hw);
            dw.noalias() = gout * in.transpose();
          }
        }
        for (int i = 0; i < nb; ++i)
          for (size_t k = 0; k < wp->grad.numel(); ++k)
            wp->grad.v[k] += partials[i][k];
      }
      if (bp && bp->requires_grad) {
        bp->ensure_grad();
        for (int i = 0; i < nb; ++i)
          for (int c = 0; c < cout; ++c) {
            const S* g = self.grad.plane(i, c);
            S acc = S(0);
            for (size_t k = 0; k < hw; ++k) acc += g[k];
            bp->grad.v[c] += acc;
          }
      }
    };
  }
  return Variable<S>(n);
}

// Depthwise 3x3-style conv: w (C,1,kh,kw).
template <class S>
Variable<S> depthwise_conv2d(const Variable<S>& x, const Variable<S>& w,
                             const Variable<S>& b, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const int c = xv.c(), kh = wv.h(), kw = wv.w();
  ON_CHECK(wv.n() == c && wv.c() == 1, "depthwise_conv2d: weight must be (C,1,kh,kw)");
  const bool has_bias = b.defined();
  const int ho = (xv.h() + 2 * pad - kh) / stride + 1;
  const int wo = (xv.w() + 2 * pad - kw) / stride + 1;

  std::vector parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  auto n = detail::make_op<S>(std::move(parents));
  n->value.resize(xv.n(), c, ho, wo);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < xv.n(); ++i)
    for (int ch = 0; ch < c; ++ch) {
      const S* src = xv.plane(i, ch);
      const S* ker = wv.plane(ch, 0);
      S* dst = n->value.plane(i, ch);
      const S bias = has_bias ? b.value().v[ch] : S(0);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          S acc = bias;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= xv.h()) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < xv.w())
                acc += ker[ky * kw + kx] * src[size_t(iy) * xv.w() + ix];
            }
          }
          dst[size_t(oy) * wo + ox] = acc;
        }
    }

  if (n->requires_grad) {
    auto xp = x.node(), wp = w.node();
    auto bp = has_bias ? b.node() : nullptr;
    n->backprop = [xp, wp, bp, stride, pad, kh, kw, ho, wo](Node<S>& self) {
      const auto& xv2 = xp->value;
      const int nb = xv2.n(), c2 = xv2.c();
      if (xp->requires_grad) xp->ensure_grad();
      if (wp->requires_grad) wp->ensure_grad();
      if (bp && bp->requires_grad) bp->ensure_grad();
      // dx parallel over samples (disjoint); dw/db per (sample,channel) into
      // per-sample partials, reduced in order.
      if (xp->requires_grad) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < nb; ++i)
          for (int ch = 0; ch < c2; ++ch) {
            const S* ker = wp->value.plane(ch, 0);
            const S* g = self.grad.plane(i, ch);
            S* dx = xp->grad.plane(i, ch);
            for (int oy = 0; oy < ho; ++oy)
              for (int ox = 0; ox < wo; ++ox) {
                const S gv = g[size_t(oy) * wo + ox];
                for (int ky = 0; ky < kh; ++ky) {
                  const int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= xv2.h()) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride + kx - pad;
                    if (ix >= 0 && ix < xv2.w())
                      dx[size_t(iy) * xv2.w() + ix] += gv * ker[ky * kw + kx];
                  }
                }
              }
          }
      }
      if (wp->requires_grad || (bp && bp->requires_grad)) {
        std::vector<std::vector<S>> dwp(nb), dbp(nb);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < nb; ++i) {
          dwp[i].assign(size_t(c2) * kh * kw, S(0));
          dbp[i].assign(c2, S(0));
          for (int ch = 0; ch < c2; ++ch) {
            const S* src = xv2.plane(i, ch);
            const S* g = self.grad.plane(i, ch);
            S* dw = dwp[i].data() + size_t(ch) * kh * kw;
            S db = S(0);
            for (int oy = 0; oy < ho; ++oy)
              for (int ox = 0; ox < wo; ++ox) {
                const S gv = g[size_t(oy) * wo + ox];
                db += gv;
                for (int ky = 0; ky < kh; ++ky) {
                  const int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= xv2.h()) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride + kx - pad;
                    if (ix >= 0 && ix < xv2.w())
                      dw[ky * kw + kx] += gv * src[size_t(iy) * xv2.w() + ix];
                  }
                }
              }
            dbp[i][ch] = db;
          }
        }
        for (int i = 0; i < nb; ++i) {
          if (wp->requires_grad)
            for (size_t k = 0; k < wp->grad.numel(); ++k) wp->grad.v[k] += dwp[i][k];
          if (bp && bp->requires_grad)
            for (int ch = 0; ch < c2; ++ch) bp->grad.v[ch] += dbp[i][ch];
        }
      }
    };
  }
  return Variable<S>(n);
}

// Batched matmul over the leading (n,c) dims: a (B,G,Ra,Ca) x b (B,G,Rb,Cb).
template <class S>
Variable<S> bmm(const Variable<S>& a, const Variable<S>& b, bool ta, bool tb) {
  const auto& av = a.value();
  const auto& bv = b.value();
  ON_CHECK(av.n() == bv.n() && av.c() == bv.c(), "bmm: leading dims mismatch");
  const int ra = ta ? av.w() : av.h(), ka = ta ? av.h() : av.w();
  const int kb = tb ? bv.w() : bv.h(), cb = tb ? bv.h() : bv.w();
  ON_CHECK(ka == kb, "bmm: inner dims %d != %d", ka, kb);
  auto n = detail::make_op<S>({a.node(), b.node()});
  n->value.resize(av.n(), av.c(), ra, cb);
  const int groups = av.n() * av.c();

#pragma omp parallel for schedule(static)
  for (int g = 0; g < groups; ++g) {
    detail::CMapRM<S> ma(av.data() + size_t(g) * av.h() * av.w(), av.h(), av.w());
    detail::CMapRM<S> mb(bv.data() + size_t(g) * bv.h() * bv.w(), bv.h(), bv.w());
    detail::MapRM<S> mc(n->value.data() + size_t(g) * ra * cb, ra, cb);
    if (!ta && !tb)
      mc.noalias() = ma * mb;
    else if (ta && !tb)
      mc.noalias() = ma.transpose() * mb;
    else if (!ta && tb)
      mc.noalias() = ma * mb.transpose();
    else
      mc.noalias() = ma.transpose() * mb.transpose();
  }

  if (n->requires_grad) {
    auto ap = a.node(), bp = b.node();
    n->backprop = [ap, bp, ta, tb, ra, cb, groups](Node<S>& self) {
      const auto& av2 = ap->value;
      const auto& bv2 = bp->value;
      if (ap->requires_grad) ap->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int g = 0; g < groups; ++g) {
        detail::CMapRM<S> ma(av2.data() + size_t(g) * av2.h() * av2.w(), av2.h(), av2.w());
        detail::CMapRM<S> mb(bv2.data() + size_t(g) * bv2.h() * bv2.w(), bv2.h(), bv2.w());
        detail::CMapRM<S> gc(self.grad.data() + size_t(g) * ra * cb, ra, cb);
        if (ap->requires_grad) {
          detail::MapRM<S> da(ap->grad.data() + size_t(g) * av2.h() * av2.w(), av2.h(), av2.w());
          if (!ta && !tb)
            da.noalias() += gc * mb.transpose();
          else if (ta && !tb)
            da.noalias() += mb * gc.transpose();
          else if (!ta && tb)
            da.noalias() += gc * mb;
          else
            da.noalias() += mb.transpose() * gc.transpose();
        }
        if (bp->requires_grad) {
          detail::MapRM<S> db(bp->grad.data() + size_t(g) * bv2.h() * bv2.w(), bv2.h(), bv2.w());
          if (!ta && !tb)
            db.noalias() += ma.transpose() * gc;
          else if (ta && !tb)
            db.noalias() += ma * gc;
          else if (!ta && tb)
            db.noalias() += gc.transpose() * ma;
          else
            db.noalias() += gc.transpose() * ma.transpose();
        }
      }
    };
  }
  return Variable<S>(n);
}

// BatchNorm over (N,H,W) per channel. Running stats live outside the graph
// and are updated only in training mode (unbiased variance, PyTorch-style).
template <class S>
Variable<S> batch_norm(const Variable<S>& x, const Variable<S>& gamma,
                       const Variable<S>& beta, Tensor<S>& running_mean,
                       Tensor<S>& running_var, bool training, double momentum,
                       double eps) {
  const auto& xv = x.value();
  const int c = xv.c();
  ON_CHECK(gamma.value().numel() == size_t(c) && beta.value().numel() == size_t(c),
           "batch_norm: affine shape");
  auto n = detail::make_op<S>({x.node(), gamma.node(), beta.node()});
  n->value.resize(xv.n(), c, xv.h(), xv.w());
  const size_t hw = size_t(xv.h()) * xv.w();
  const size_t m = size_t(xv.n()) * hw;

  std::vector<S> mean(c), inv_std(c);
  if (training) {
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0;
      for (int i = 0; i < xv.n(); ++i) {
        const S* src = xv.plane(i, ch);
        for (size_t k = 0; k < hw; ++k) acc += src[k];
      }
      const double mu = acc / double(m);
      double var = 0;
      for (int i = 0; i < xv.n(); ++i) {
        const S* src = xv.plane(i, ch);
        for (size_t k = 0; k < hw; ++k) {
          const double d = double(src[k]) - mu;
          var += d * d;
        }
      }
      var /= double(m);
      mean[ch] = S(mu);
      inv_std[ch] = S(1.0 / std::sqrt(var + eps));
      const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
      running_mean.v[ch] = S((1.0 - momentum) * running_mean.v[ch] + momentum * mu);
      running_var.v[ch] = S((1.0 - momentum) * running_var.v[ch] + momentum * unbiased);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.v[ch];
      inv_std[ch] = S(1.0 / std::sqrt(double(running_var.v[ch]) + eps));
    }
  }

#pragma omp parallel for schedule(static)
  for (int i = 0; i < xv.n(); ++i)
    for (int ch = 0; ch < c; ++ch) {
      const S* src = xv.plane(i, ch);
      S* dst = n->value.plane(i, ch);
      const S g = gamma.value().v[ch], bt = beta.value().v[ch];
      const S mu = mean[ch], is = inv_std[ch];
      for (size_t k = 0; k < hw; ++k) dst[k] = (src[k] - mu) * is * g + bt;
    }

  if (n->requires_grad) {
    auto xp = x.node(), gp = gamma.node(), bp = beta.node();
    n->backprop = [xp, gp, bp, mean, inv_std, training, hw, m](Node<S>& self) {
      const auto& xv2 = xp->value;
      const int c2 = xv2.c();
      if (xp->requires_grad) xp->ensure_grad();
      if (gp->requires_grad) gp->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int ch = 0; ch < c2; ++ch) {
        const S mu = mean[ch], is = inv_std[ch];
        const S g = gp->value.v[ch];
        double sum_g = 0, sum_gx = 0;
        for (int i = 0; i < xv2.n(); ++i) {
          const S* gr = self.grad.plane(i, ch);
          const S* src = xv2.plane(i, ch);
          for (size_t k = 0; k < hw; ++k) {
            sum_g += gr[k];
            sum_gx += double(gr[k]) * (src[k] - mu) * is;
          }
        }
        if (gp->requires_grad) gp->grad.v[ch] += S(sum_gx);
        if (bp->requires_grad) bp->grad.v[ch] += S(sum_g);
        if (xp->requires_grad) {
          if (training) {
            const double inv_m = 1.0 / double(m);
            for (int i = 0; i < xv2.n(); ++i) {
              const S* gr = self.grad.plane(i, ch);
              const S* src = xv2.plane(i, ch);
              S* dx = xp->grad.plane(i, ch);
              for (size_t k = 0; k < hw; ++k) {
                const double xhat = double(src[k] - mu) * is;
                dx[k] += S(double(g) * is *
                           (double(gr[k]) - inv_m * (sum_g + xhat * sum_gx)));
              }
            }
          } else {
            for (int i = 0; i < xv2.n(); ++i) {
              const S* gr = self.grad.plane(i, ch);
              S* dx = xp->grad.plane(i, ch);
              for (size_t k = 0; k < hw; ++k) dx[k] += gr[k] * g * is;
            }
          }
        }
      }
    };
  }
  return Variable<S>(n);
}

// LayerNorm across channels per spatial position (token norm for attention).
template <class S>
Variable<S> layer_norm_c(const Variable<S>& x, const Variable<S>& gamma,
                         const Variable<S>& beta, double eps) {
  const auto& xv = x.value();
  const int c = xv.c();
  auto n = detail::make_op<S>({x.node(), gamma.node(), beta.node()});
  n->value.resize(xv.n(), c, xv.h(), xv.w());
  const size_t hw = size_t(xv.h()) * xv.w();

  Tensor<S> mean(xv.n(), 1, xv.h(), xv.w()), inv_std(xv.n(), 1, xv.h(), xv.w());
  for (int i = 0; i < xv.n(); ++i)
    for (size_t k = 0; k < hw; ++k) {
      double acc = 0;
      for (int ch = 0; ch < c; ++ch) acc += xv.plane(i, ch)[k];
      const double mu = acc / c;
      double var = 0;
      for (int ch = 0; ch < c; ++ch) {
        const double d = xv.plane(i, ch)[k] - mu;
        var += d * d;
      }
      mean.plane(i, 0)[k] = S(mu);
      inv_std.plane(i, 0)[k] = S(1.0 / std::sqrt(var / c + eps));
    }
  for (int i = 0; i < xv.n(); ++i)
    for (int ch = 0; ch < c; ++ch) {
      const S* src = xv.plane(i, ch);
      S* dst = n->value.plane(i, ch);
      const S g = gamma.value().v[ch], bt = beta.value().v[ch];
      for (size_t k = 0; k < hw; ++k)
        dst[k] = (src[k] - mean.plane(i, 0)[k]) * inv_std.plane(i, 0)[k] * g + bt;
    }

  if (n->requires_grad) {
    auto xp = x.node(), gp = gamma.node(), bp = beta.node();
    n->backprop = [xp, gp, bp, mean, inv_std, hw](Node<S>& self) {
      const auto& xv2 = xp->value;
      const int c2 = xv2.c();
      if (xp->requires_grad) xp->ensure_grad();
      if (gp->requires_grad) gp->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      for (int i = 0; i < xv2.n(); ++i)
        for (size_t k = 0; k < hw; ++k) {
          const S mu = mean.plane(i, 0)[k], is = inv_std.plane(i, 0)[k];
          double sum_g = 0, sum_gx = 0;
          for (int ch = 0; ch < c2; ++ch) {
            const double xhat = double(xv2.plane(i, ch)[k] - mu) * is;
            const double gg = double(self.grad.plane(i, ch)[k]) * gp->value.v[ch];
            sum_g += gg;
            sum_gx += gg * xhat;
            if (gp->requires_grad)
              gp->grad.v[ch] += self.grad.plane(i, ch)[k] * S(xhat);
            if (bp->requires_grad) bp->grad.v[ch] += self.grad.plane(i, ch)[k];
          }
          if (xp->requires_grad) {
            for (int ch = 0; ch < c2; ++ch) {
              const double xhat = double(xv2.plane(i, ch)[k] - mu) * is;
              const double gg = double(self.grad.plane(i, ch)[k]) * gp->value.v[ch];
              xp->grad.plane(i, ch)[k] +=
                  S(is * (gg - (sum_g + xhat * sum_gx) / c2));
            }
          }
        }
    };
  }
  return Variable<S>(n);
}

}  // namespace offnadir::nn
