#pragma once
// Network building blocks shared by the encoder families and the decoder.
// Convolutions followed by BN carry no bias.

#include "offnadir/nn.hpp"

namespace offnadir::models {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::DepthwiseConv2d;
using nn::Init;
using nn::LayerNormC;
using nn::ParamStore;
using nn::Tensor;
using nn::Variable;

enum class Act { none, relu, relu6, silu };

template <class S>
Variable<S> activate(const Variable<S>& x, Act a) {
  switch (a) {
    case Act::none: return x;
    case Act::relu: return nn::relu(x);
    case Act::relu6: return nn::relu6(x);
    case Act::silu: return nn::silu(x);
  }
  fail("bad Act");
}

template <class S>
struct ConvBnAct {
  Conv2d<S> conv;
  BatchNorm2d<S> bn;
  Act act = Act::relu;

  ConvBnAct() = default;
  ConvBnAct(ParamStore<S>& ps, const std::string& name, int cin, int cout, int k,
            int stride, Act act_)
      : conv(ps, name + ".conv", cin, cout, k, stride, k / 2, /*bias=*/false),
        bn(ps, name + ".bn", cout),
        act(act_) {}

  Variable<S> operator()(const Variable<S>& x, bool training) const {
    return activate(bn(conv(x), training), act);
  }
};

// Squeeze-and-Excitation: global pool -> bottleneck MLP -> channel gains.
template <class S>
struct SeBlock {
  Conv2d<S> fc1, fc2;

  SeBlock() = default;
  SeBlock(ParamStore<S>& ps, const std::string& name, int c, int reduction = 4)
      : fc1(ps, name + ".fc1", c, std::max(4, c / reduction), 1, 1, 0),
        fc2(ps, name + ".fc2", std::max(4, c / reduction), c, 1, 1, 0) {}

  Variable<S> operator()(const Variable<S>& x) const {
    Variable<S> s = nn::global_avg_pool(x);
    s = nn::silu(fc1(s));
    s = nn::sigmoid(fc2(s));
    return nn::mul_channel(x, s);
  }
};

// MobileNetv2 inverted residual: 1x1 expand, depthwise 3x3, 1x1 project,
// ReLU6, identity shortcut at stride 1 with matching channels.
template <class S>
struct Mv2Block {
  ConvBnAct<S> expand;
  DepthwiseConv2d<S> dw;
  BatchNorm2d<S> dw_bn;
  Conv2d<S> project;
  BatchNorm2d<S> project_bn;
  bool residual = false;
  int stride = 1;

  Mv2Block() = default;
  Mv2Block(ParamStore<S>& ps, const std::string& name, int cin, int cout, int stride_,
           int expansion = 4)
      : expand(ps, name + ".expand", cin, cin * expansion, 1, 1, Act::relu6),
        dw(ps, name + ".dw", cin * expansion, 3, stride_, 1, /*bias=*/false),
        dw_bn(ps, name + ".dw_bn", cin * expansion),
        project(ps, name + ".project", cin * expansion, cout, 1, 1, 0, /*bias=*/false),
        project_bn(ps, name + ".project_bn", cout),
        residual(stride_ == 1 && cin == cout),
        stride(stride_) {}

  Variable<S> operator()(const Variable<S>& x, bool training) const {
    Variable<S> h = expand(x, training);
    h = nn::relu6(dw_bn(dw(h), training));
    h = project_bn(project(h), training);
    return residual ? nn::add(h, x) : h;
  }
};

// Fused-MBConv: full 3x3 expansion conv with SiLU, SE, 1x1 projection.
template <class S>
struct FusedMbBlock {
  ConvBnAct<S> expand;
  SeBlock<S> se;
  Conv2d<S> project;
  BatchNorm2d<S> project_bn;
  bool residual = false;

  FusedMbBlock() = default;
  FusedMbBlock(ParamStore<S>& ps, const std::string& name, int cin, int cout,
               int stride, int expansion = 4)
      : expand(ps, name + ".expand", cin, cin * expansion, 3, stride, Act::silu),
        se(ps, name + ".se", cin * expansion),
        project(ps, name + ".project", cin * expansion, cout, 1, 1, 0, /*bias=*/false),
        project_bn(ps, name + ".project_bn", cout),
        residual(stride == 1 && cin == cout) {}

  Variable<S> operator()(const Variable<S>& x, bool training) const {
    Variable<S> h = expand(x, training);
    h = se(h);
    h = project_bn(project(h), training);
    return residual ? nn::add(h, x) : h;
  }
};

// Pre-norm transformer layer over the H*W token grid (global context).
template <class S>
struct TransformerBlock {
  LayerNormC<S> ln1, ln2;
  Conv2d<S> q, k, v, o, mlp1, mlp2;
  int heads = 4;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<S>& ps, const std::string& name, int c, int heads_)
      : ln1(ps, name + ".ln1", c),
        ln2(ps, name + ".ln2", c),
        q(ps, name + ".q", c, c, 1, 1, 0),
        k(ps, name + ".k", c, c, 1, 1, 0),
        v(ps, name + ".v", c, c, 1, 1, 0),
        o(ps, name + ".o", c, c, 1, 1, 0),
        mlp1(ps, name + ".mlp1", c, 2 * c, 1, 1, 0),
        mlp2(ps, name + ".mlp2", 2 * c, c, 1, 1, 0),
        heads(heads_) {
    ON_CHECK(c % heads_ == 0, "transformer channels %d not divisible by %d heads", c,
             heads_);
  }

  Variable<S> operator()(const Variable<S>& x, bool) const {
    const int n = x.value().n(), c = x.value().c();
    const int hh = x.value().h(), ww = x.value().w();
    const int dh = c / heads, tokens = hh * ww;

    Variable<S> xn = ln1(x);
    auto to_heads = [&](const Variable<S>& t) {
      return nn::reshape(t, n, heads, dh, tokens);
    };
    Variable<S> qs = to_heads(q(xn));
    Variable<S> ks = to_heads(k(xn));
    Variable<S> vs = to_heads(v(xn));
    Variable<S> attn = nn::scale(nn::bmm(qs, ks, true, false),
                                 1.0 / std::sqrt(double(dh)));
    attn = nn::softmax_lastdim(attn);
    Variable<S> ctx = nn::bmm(vs, attn, false, true);  // (n,heads,dh,tokens)
    ctx = nn::reshape(ctx, n, c, hh, ww);
    Variable<S> h = nn::add(x, o(ctx));

    Variable<S> m = ln2(h);
    m = mlp2(nn::silu(mlp1(m)));
    return nn::add(h, m);
  }
};

// MobileViT-style block: local conv features, a transformer over the grid,
// then a fusing conv over the concatenation.
template <class S>
struct MobileVitBlock {
  ConvBnAct<S> local;
  TransformerBlock<S> transformer;
  ConvBnAct<S> fuse;

  MobileVitBlock() = default;
  MobileVitBlock(ParamStore<S>& ps, const std::string& name, int c, int heads)
      : local(ps, name + ".local", c, c, 3, 1, Act::silu),
        transformer(ps, name + ".transformer", c, heads),
        fuse(ps, name + ".fuse", 2 * c, c, 3, 1, Act::silu) {}

  Variable<S> operator()(const Variable<S>& x, bool training) const {
    Variable<S> l = local(x, training);
    Variable<S> t = transformer(l, training);
    return fuse(nn::concat_c(x, t), training);
  }
};

// Additive attention gate on a skip connection (gating signal = decoder state).
template <class S>
struct AttentionGate {
  Conv2d<S> ws, wx, psi;

  AttentionGate() = default;
  AttentionGate(ParamStore<S>& ps, const std::string& name, int skip_c, int gate_c,
                int inter_c)
      : ws(ps, name + ".ws", skip_c, inter_c, 1, 1, 0),
        wx(ps, name + ".wx", gate_c, inter_c, 1, 1, 0),
        psi(ps, name + ".psi", inter_c, 1, 1, 1, 0) {}

  Variable<S> operator()(const Variable<S>& skip, const Variable<S>& gate) const {
    Variable<S> a = nn::relu(nn::add(ws(skip), wx(gate)));
    return nn::mul_spatial(skip, nn::sigmoid(psi(a)));
  }
};

}  // namespace offnadir::models
