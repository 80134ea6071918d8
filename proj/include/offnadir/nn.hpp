#pragma once
// Parameter management and thin layer wrappers over the autodiff ops.
// Parameter initialization derives an RNG stream from (seed, parameter name),
// so init values do not depend on creation order or on unrelated parameters.

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "offnadir/ops_conv.hpp"

namespace offnadir::nn {

enum class Init { he_normal, zeros, ones, identity_1x1 };

template <class S>
class ParamStore {
public:
  struct Entry {
    std::string name;
    Variable<S> var;
  };
  struct BufEntry {
    std::string name;
    std::shared_ptr<Tensor<S>> buf;
  };

  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  Variable<S> param(const std::string& name, std::array<int, 4> shape, Init init) {
    ON_CHECK(!index_.count(name), "duplicate parameter '%s'", name.c_str());
    Tensor<S> t(shape[0], shape[1], shape[2], shape[3]);
    const int fan_in = shape[1] * shape[2] * shape[3];
    Rng rng = Rng::stream(seed_, name);
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        t.fill(S(1));
        break;
      case Init::he_normal: {
        const double std = std::sqrt(2.0 / double(std::max(fan_in, 1)));
        for (auto& v : t.v) v = S(rng.normal() * std);
        break;
      }
      case Init::identity_1x1: {
        ON_CHECK(shape[2] == 1 && shape[3] == 1, "identity init needs a 1x1 kernel");
        if (shape[0] == shape[1]) {
          for (int i = 0; i < shape[0]; ++i) t.at(i, i, 0, 0) = S(1);
        } else {
          const double std = std::sqrt(2.0 / double(std::max(fan_in, 1)));
          for (auto& v : t.v) v = S(rng.normal() * std);
        }
        break;
      }
    }
    Variable<S> v = Variable<S>::leaf(std::move(t), true);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
  }

  std::shared_ptr<Tensor<S>> buffer(const std::string& name,
                                    std::array<int, 4> shape, S fill) {
    ON_CHECK(!buf_index_.count(name), "duplicate buffer '%s'", name.c_str());
    auto t = std::make_shared<Tensor<S>>(shape[0], shape[1], shape[2], shape[3]);
    t->fill(fill);
    buf_index_[name] = buffers_.size();
    buffers_.push_back({name, t});
    return t;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<BufEntry>& buffers() const { return buffers_; }

  Variable<S> find(const std::string& name) const {
    auto it = index_.find(name);
    ON_CHECK(it != index_.end(), "no parameter '%s'", name.c_str());
    return entries_[it->second].var;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  // Trainable scalar count (frozen parameters excluded).
  int64_t count_trainable() const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (e.var.requires_grad()) n += int64_t(e.var.value().numel());
    return n;
  }

  int64_t count_all() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += int64_t(e.var.value().numel());
    return n;
  }

  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) e.var.set_requires_grad(trainable);
  }

  bool any_nonfinite_grad() const {
    for (const auto& e : entries_) {
      if (!e.var.requires_grad()) continue;
      const auto& g = e.var.node()->grad;
      for (S v : g.v)
        if (!std::isfinite(double(v))) return true;
    }
    return false;
  }

private:
  uint64_t seed_;
  std::vector<Entry> entries_;
  std::vector<BufEntry> buffers_;
  std::unordered_map<std::string, size_t> index_;
  std::unordered_map<std::string, size_t> buf_index_;
};

template <class S>
struct Conv2d {
  Variable<S> w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<S>& ps, const std::string& name, int cin, int cout, int k,
         int stride_, int pad_, bool bias = true, Init init = Init::he_normal)
      : stride(stride_), pad(pad_) {
    w = ps.param(name + ".w", {cout, cin, k, k}, init);
    if (bias) b = ps.param(name + ".b", {1, cout, 1, 1}, Init::zeros);
  }

  Variable<S> operator()(const Variable<S>& x) const {
    return conv2d(x, w, b, stride, pad);
  }
};

template <class S>
struct DepthwiseConv2d {
  Variable<S> w, b;
  int stride = 1, pad = 0;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParamStore<S>& ps, const std::string& name, int c, int k,
                  int stride_, int pad_, bool bias = true)
      : stride(stride_), pad(pad_) {
    w = ps.param(name + ".w", {c, 1, k, k}, Init::he_normal);
    if (bias) b = ps.param(name + ".b", {1, c, 1, 1}, Init::zeros);
  }

  Variable<S> operator()(const Variable<S>& x) const {
    return depthwise_conv2d(x, w, b, stride, pad);
  }
};

template <class S>
struct BatchNorm2d {
  Variable<S> gamma, beta;
  std::shared_ptr<Tensor<S>> run_mean, run_var;
  double momentum = 0.1, eps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<S>& ps, const std::string& name, int c) {
    gamma = ps.param(name + ".gamma", {1, c, 1, 1}, Init::ones);
    beta = ps.param(name + ".beta", {1, c, 1, 1}, Init::zeros);
    run_mean = ps.buffer(name + ".running_mean", {1, c, 1, 1}, S(0));
    run_var = ps.buffer(name + ".running_var", {1, c, 1, 1}, S(1));
  }

  Variable<S> operator()(const Variable<S>& x, bool training) const {
    return batch_norm(x, gamma, beta, *run_mean, *run_var, training, momentum, eps);
  }
};

template <class S>
struct LayerNormC {
  Variable<S> gamma, beta;
  double eps = 1e-5;

  LayerNormC() = default;
  LayerNormC(ParamStore<S>& ps, const std::string& name, int c) {
    gamma = ps.param(name + ".gamma", {1, c, 1, 1}, Init::ones);
    beta = ps.param(name + ".beta", {1, c, 1, 1}, Init::zeros);
  }

  Variable<S> operator()(const Variable<S>& x) const {
    return layer_norm_c(x, gamma, beta, eps);
  }
};

}  // namespace offnadir::nn
