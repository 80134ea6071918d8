#pragma once
// Elementwise and structural autodiff ops. Convolutions live in ops_conv.hpp.

#include <cmath>

#include "offnadir/autodiff.hpp"

namespace offnadir::nn {

namespace detail {

template <class S, class Fwd, class Bwd>
Variable<S> unary_elementwise(const Variable<S>& x, Fwd fwd, Bwd dfdx) {
  auto n = make_op<S>({x.node()});
  const Tensor<S>& xv = x.value();
  n->value.resize(xv.n(), xv.c(), xv.h(), xv.w());
  for (size_t i = 0; i < xv.numel(); ++i) n->value.v[i] = fwd(xv.v[i]);
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, dfdx](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i) {
        xp->grad.v[i] += self.grad.v[i] * dfdx(xp->value.v[i], self.value.v[i]);
      }
    };
  }
  return Variable<S>(n);
}

}  // namespace detail

template <class S>
Variable<S> relu(const Variable<S>& x) {
  return detail::unary_elementwise(
      x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
Variable<S> relu6(const Variable<S>& x) {
  return detail::unary_elementwise(
      x, [](S v) { return v < S(0) ? S(0) : (v > S(6) ? S(6) : v); },
      [](S v, S) { return (v > S(0) && v < S(6)) ? S(1) : S(0); });
}

template <class S>
Variable<S> sigmoid(const Variable<S>& x) {
  return detail::unary_elementwise(
      x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Variable<S> silu(const Variable<S>& x) {
  return detail::unary_elementwise(
      x, [](S v) { return v / (S(1) + std::exp(-v)); },
      [](S v, S) {
        S s = S(1) / (S(1) + std::exp(-v));
        return s * (S(1) + v * (S(1) - s));
      });
}

template <class S>
Variable<S> add(const Variable<S>& a, const Variable<S>& b) {
  ON_CHECK(a.value().same_shape(b.value()), "add: shape mismatch");
  auto n = detail::make_op<S>({a.node(), b.node()});
  const auto& av = a.value();
  const auto& bv = b.value();
  n->value.resize(av.n(), av.c(), av.h(), av.w());
  for (size_t i = 0; i < av.numel(); ++i) n->value.v[i] = av.v[i] + bv.v[i];
  if (n->requires_grad) {
    auto ap = a.node(), bp = b.node();
    n->backprop = [ap, bp](Node<S>& self) {
      if (ap->requires_grad) detail::accum(*ap, self.grad);
      if (bp->requires_grad) detail::accum(*bp, self.grad);
    };
  }
  return Variable<S>(n);
}

template <class S>
Variable<S> scale(const Variable<S>& x, double s) {
  return detail::unary_elementwise(
      x, [s](S v) { return S(v * s); }, [s](S, S) { return S(s); });
}

template <class S>
Variable<S> mul(const Variable<S>& a, const Variable<S>& b) {
  ON_CHECK(a.value().same_shape(b.value()), "mul: shape mismatch");
  auto n = detail::make_op<S>({a.node(), b.node()});
  const auto& av = a.value();
  const auto& bv = b.value();
  n->value.resize(av.n(), av.c(), av.h(), av.w());
  for (size_t i = 0; i < av.numel(); ++i) n->value.v[i] = av.v[i] * bv.v[i];
  if (n->requires_grad) {
    auto ap = a.node(), bp = b.node();
    n->backprop = [ap, bp](Node<S>& self) {
      if (ap->requires_grad) {
        ap->ensure_grad();
        for (size_t i = 0; i < self.grad.numel(); ++i)
          ap->grad.v[i] += self.grad.v[i] * bp->value.v[i];
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (size_t i = 0; i < self.grad.numel(); ++i)
          bp->grad.v[i] += self.grad.v[i] * ap->value.v[i];
      }
    };
  }
  return Variable<S>(n);
}

// x:(N,C,H,W) * s:(N,C,1,1) -> (N,C,H,W). Channel-wise gain (SE blocks).
template <class S>
Variable<S> mul_channel(const Variable<S>& x, const Variable<S>& s) {
  const auto& xv = x.value();
  const auto& sv = s.value();
  ON_CHECK(sv.n() == xv.n() && sv.c() == xv.c() && sv.h() == 1 && sv.w() == 1,
           "mul_channel: gain must be (N,C,1,1)");
  auto n = detail::make_op<S>({x.node(), s.node()});
  n->value.resize(xv.n(), xv.c(), xv.h(), xv.w());
  const size_t hw = size_t(xv.h()) * xv.w();
  for (int i = 0; i < xv.n(); ++i)
    for (int c = 0; c < xv.c(); ++c) {
      const S g = sv.at(i, c, 0, 0);
      const S* src = xv.plane(i, c);
      S* dst = n->value.plane(i, c);
      for (size_t k = 0; k < hw; ++k) dst[k] = src[k] * g;
    }
  if (n->requires_grad) {
    auto xp = x.node(), sp = s.node();
    n->backprop = [xp, sp, hw](Node<S>& self) {
      const auto& xv2 = xp->value;
      const auto& sv2 = sp->value;
      if (xp->requires_grad) xp->ensure_grad();
      if (sp->requires_grad) sp->ensure_grad();
      for (int i = 0; i < xv2.n(); ++i)
        for (int c = 0; c < xv2.c(); ++c) {
          const S* g = self.grad.plane(i, c);
          if (xp->requires_grad) {
            S* dx = xp->grad.plane(i, c);
            const S gain = sv2.at(i, c, 0, 0);
            for (size_t k = 0; k < hw; ++k) dx[k] += g[k] * gain;
          }
          if (sp->requires_grad) {
            const S* src = xv2.plane(i, c);
            S acc = S(0);
            for (size_t k = 0; k < hw; ++k) acc += g[k] * src[k];
            sp->grad.at(i, c, 0, 0) += acc;
          }
        }
    };
  }
  return Variable<S>(n);
}

// x:(N,C,H,W) * m:(N,1,H,W) -> (N,C,H,W). Spatial gate (attention gates).
template <class S>
Variable<S> mul_spatial(const Variable<S>& x, const Variable<S>& m) {
  const auto& xv = x.value();
  const auto& mv = m.value();
  ON_CHECK(mv.n() == xv.n() && mv.c() == 1 && mv.h() == xv.h() && mv.w() == xv.w(),
           "mul_spatial: gate must be (N,1,H,W)");
  auto n = detail::make_op<S>({x.node(), m.node()});
  n->value.resize(xv.n(), xv.c(), xv.h(), xv.w());
  const size_t hw = size_t(xv.h()) * xv.w();
  for (int i = 0; i < xv.n(); ++i) {
    const S* gate = mv.plane(i, 0);
    for (int c = 0; c < xv.c(); ++c) {
      const S* src = xv.plane(i, c);
      S* dst = n->value.plane(i, c);
      for (size_t k = 0; k < hw; ++k) dst[k] = src[k] * gate[k];
    }
  }
  if (n->requires_grad) {
    auto xp = x.node(), mp = m.node();
    n->backprop = [xp, mp, hw](Node<S>& self) {
      const auto& xv2 = xp->value;
      const auto& mv2 = mp->value;
      if (xp->requires_grad) xp->ensure_grad();
      if (mp->requires_grad) mp->ensure_grad();
      for (int i = 0; i < xv2.n(); ++i) {
        const S* gate = mv2.plane(i, 0);
        S* dm = mp->requires_grad ? mp->grad.plane(i, 0) : nullptr;
        for (int c = 0; c < xv2.c(); ++c) {
          const S* g = self.grad.plane(i, c);
          if (xp->requires_grad) {
            S* dx = xp->grad.plane(i, c);
            for (size_t k = 0; k < hw; ++k) dx[k] += g[k] * gate[k];
          }
          if (dm) {
            const S* src = xv2.plane(i, c);
            for (size_t k = 0; k < hw; ++k) dm[k] += g[k] * src[k];
          }
        }
      }
    };
  }
  return Variable<S>(n);
}

template <class S>
Variable<S> concat_c(const Variable<S>& a, const Variable<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  ON_CHECK(av.n() == bv.n() && av.h() == bv.h() && av.w() == bv.w(),
           "concat_c: spatial/batch mismatch");
  auto n = detail::make_op<S>({a.node(), b.node()});
  n->value.resize(av.n(), av.c() + bv.c(), av.h(), av.w());
  const size_t hw = size_t(av.h()) * av.w();
  for (int i = 0; i < av.n(); ++i) {
    for (int c = 0; c < av.c(); ++c)
      std::copy_n(av.plane(i, c), hw, n->value.plane(i, c));
    for (int c = 0; c < bv.c(); ++c)
      std::copy_n(bv.plane(i, c), hw, n->value.plane(i, av.c() + c));
  }
  if (n->requires_grad) {
    auto ap = a.node(), bp = b.node();
    const int ac = av.c();
    n->backprop = [ap, bp, ac, hw](Node<S>& self) {
      if (ap->requires_grad) {
        ap->ensure_grad();
        for (int i = 0; i < ap->value.n(); ++i)
          for (int c = 0; c < ac; ++c) {
            const S* g = self.grad.plane(i, c);
            S* d = ap->grad.plane(i, c);
            for (size_t k = 0; k < hw; ++k) d[k] += g[k];
          }
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (int i = 0; i < bp->value.n(); ++i)
          for (int c = 0; c < bp->value.c(); ++c) {
            const S* g = self.grad.plane(i, ac + c);
            S* d = bp->grad.plane(i, c);
            for (size_t k = 0; k < hw; ++k) d[k] += g[k];
          }
      }
    };
  }
  return Variable<S>(n);
}

// 2x2 max pool, stride 2. Ties resolve to the first element in scan order.
template <class S>
Variable<S> maxpool2(const Variable<S>& x) {
  const auto& xv = x.value();
  ON_CHECK(xv.h() % 2 == 0 && xv.w() % 2 == 0, "maxpool2: odd spatial dims");
  auto n = detail::make_op<S>({x.node()});
  const int ho = xv.h() / 2, wo = xv.w() / 2;
  n->value.resize(xv.n(), xv.c(), ho, wo);
  for (int i = 0; i < xv.n(); ++i)
    for (int c = 0; c < xv.c(); ++c) {
      const S* src = xv.plane(i, c);
      S* dst = n->value.plane(i, c);
      for (int y = 0; y < ho; ++y)
        for (int xq = 0; xq < wo; ++xq) {
          const S* p = src + (2 * y) * xv.w() + 2 * xq;
          S m = p[0];
          if (p[1] > m) m = p[1];
          if (p[xv.w()] > m) m = p[xv.w()];
          if (p[xv.w() + 1] > m) m = p[xv.w() + 1];
          dst[y * wo + xq] = m;
        }
    }
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, ho, wo](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      const auto& xv2 = xp->value;
      for (int i = 0; i < xv2.n(); ++i)
        for (int c = 0; c < xv2.c(); ++c) {
          const S* src = xv2.plane(i, c);
          S* dx = xp->grad.plane(i, c);
          const S* g = self.grad.plane(i, c);
          for (int y = 0; y < ho; ++y)
            for (int xq = 0; xq < wo; ++xq) {
              const size_t base = size_t(2 * y) * xv2.w() + 2 * xq;
              size_t best = base;
              if (src[base + 1] > src[best]) best = base + 1;
              if (src[base + xv2.w()] > src[best]) best = base + xv2.w();
              if (src[base + xv2.w() + 1] > src[best]) best = base + xv2.w() + 1;
              dx[best] += g[y * wo + xq];
            }
        }
    };
  }
  return Variable<S>(n);
}

template <class S>
Variable<S> upsample_nearest2(const Variable<S>& x) {
  const auto& xv = x.value();
  auto n = detail::make_op<S>({x.node()});
  const int ho = xv.h() * 2, wo = xv.w() * 2;
  n->value.resize(xv.n(), xv.c(), ho, wo);
  for (int i = 0; i < xv.n(); ++i)
    for (int c = 0; c < xv.c(); ++c) {
      const S* src = xv.plane(i, c);
      S* dst = n->value.plane(i, c);
      for (int y = 0; y < ho; ++y) {
        const S* row = src + (y / 2) * xv.w();
        for (int xq = 0; xq < wo; ++xq) dst[y * wo + xq] = row[xq / 2];
      }
    }
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, ho, wo](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int i = 0; i < xp->value.n(); ++i)
        for (int c = 0; c < xp->value.c(); ++c) {
          S* dx = xp->grad.plane(i, c);
          const S* g = self.grad.plane(i, c);
          const int wi = xp->value.w();
          for (int y = 0; y < ho; ++y)
            for (int xq = 0; xq < wo; ++xq)
              dx[(y / 2) * wi + xq / 2] += g[y * wo + xq];
        }
    };
  }
  return Variable<S>(n);
}

template <class S>
Variable<S> global_avg_pool(const Variable<S>& x) {
  const auto& xv = x.value();
  auto n = detail::make_op<S>({x.node()});
  n->value.resize(xv.n(), xv.c(), 1, 1);
  const size_t hw = size_t(xv.h()) * xv.w();
  for (int i = 0; i < xv.n(); ++i)
    for (int c = 0; c < xv.c(); ++c) {
      const S* src = xv.plane(i, c);
      S acc = S(0);
      for (size_t k = 0; k < hw; ++k) acc += src[k];
      n->value.at(i, c, 0, 0) = acc / S(hw);
    }
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, hw](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int i = 0; i < xp->value.n(); ++i)
        for (int c = 0; c < xp->value.c(); ++c) {
          const S g = self.grad.at(i, c, 0, 0) / S(hw);
          S* dx = xp->grad.plane(i, c);
          for (size_t k = 0; k < hw; ++k) dx[k] += g;
        }
    };
  }
  return Variable<S>(n);
}

template <class S>
Variable<S> mean_all(const Variable<S>& x) {
  const auto& xv = x.value();
  auto n = detail::make_op<S>({x.node()});
  n->value.resize(1, 1, 1, 1);
  S acc = S(0);
  for (size_t i = 0; i < xv.numel(); ++i) acc += xv.v[i];
  n->value.v[0] = acc / S(xv.numel());
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      const S g = self.grad.v[0] / S(xp->value.numel());
      for (size_t i = 0; i < xp->grad.numel(); ++i) xp->grad.v[i] += g;
    };
  }
  return Variable<S>(n);
}

// Copy-reshape; numel must match.
template <class S>
Variable<S> reshape(const Variable<S>& x, int n_, int c_, int h_, int w_) {
  const auto& xv = x.value();
  ON_CHECK(size_t(n_) * c_ * h_ * w_ == xv.numel(), "reshape: numel mismatch");
  auto n = detail::make_op<S>({x.node()});
  n->value.resize(n_, c_, h_, w_);
  n->value.v = xv.v;
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (size_t i = 0; i < self.grad.numel(); ++i) xp->grad.v[i] += self.grad.v[i];
    };
  }
  return Variable<S>(n);
}

// Softmax over the last (w) axis, per (n,c,h) row.
template <class S>
Variable<S> softmax_lastdim(const Variable<S>& x) {
  const auto& xv = x.value();
  auto n = detail::make_op<S>({x.node()});
  n->value.resize(xv.n(), xv.c(), xv.h(), xv.w());
  const int rows = xv.n() * xv.c() * xv.h();
  const int cols = xv.w();
  for (int r = 0; r < rows; ++r) {
    const S* src = xv.data() + size_t(r) * cols;
    S* dst = n->value.data() + size_t(r) * cols;
    S mx = src[0];
    for (int k = 1; k < cols; ++k)
      if (src[k] > mx) mx = src[k];
    S sum = S(0);
    for (int k = 0; k < cols; ++k) {
      dst[k] = std::exp(src[k] - mx);
      sum += dst[k];
    }
    const S inv = S(1) / sum;
    for (int k = 0; k < cols; ++k) dst[k] *= inv;
  }
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, rows, cols](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const S* y = self.value.data() + size_t(r) * cols;
        const S* g = self.grad.data() + size_t(r) * cols;
        S* dx = xp->grad.data() + size_t(r) * cols;
        S dot = S(0);
        for (int k = 0; k < cols; ++k) dot += g[k] * y[k];
        for (int k = 0; k < cols; ++k) dx[k] += y[k] * (g[k] - dot);
      }
    };
  }
  return Variable<S>(n);
}

// Per-sample RMS normalization over the whole (C,H,W) block:
// y = x / sqrt(mean(x^2) + eps).
template <class S>
Variable<S> rms_norm_sample(const Variable<S>& x, double eps) {
  const auto& xv = x.value();
  auto n = detail::make_op<S>({x.node()});
  n->value.resize(xv.n(), xv.c(), xv.h(), xv.w());
  const size_t m = size_t(xv.c()) * xv.h() * xv.w();
  std::vector<S> rinv(xv.n());
  for (int i = 0; i < xv.n(); ++i) {
    const S* src = xv.data() + size_t(i) * m;
    double acc = 0;
    for (size_t k = 0; k < m; ++k) acc += double(src[k]) * src[k];
    rinv[i] = S(1.0 / std::sqrt(acc / double(m) + eps));
    S* dst = n->value.data() + size_t(i) * m;
    for (size_t k = 0; k < m; ++k) dst[k] = src[k] * rinv[i];
  }
  if (n->requires_grad) {
    auto xp = x.node();
    n->backprop = [xp, m, rinv](Node<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int i = 0; i < xp->value.n(); ++i) {
        const S* src = xp->value.data() + size_t(i) * m;
        const S* g = self.grad.data() + size_t(i) * m;
        S* dx = xp->grad.data() + size_t(i) * m;
        double dot = 0;
        for (size_t k = 0; k < m; ++k) dot += double(g[k]) * src[k];
        const S r = rinv[i];
        const S corr = S(double(r) * r * r * dot / double(m));
        for (size_t k = 0; k < m; ++k) dx[k] += g[k] * r - src[k] * corr;
      }
    };
  }
  return Variable<S>(n);
}

}  // namespace offnadir::nn
