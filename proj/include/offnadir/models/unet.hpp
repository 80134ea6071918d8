#pragma once
// Encoder families and the U-Net assembly. Five encoder stages halve the
// spatial side each (input S -> S/2 .. S/32); the decoder walks back up,
// concatenating the matching encoder level at every block.

#include <memory>

#include "offnadir/models/blocks.hpp"
#include "offnadir/models/spec.hpp"

namespace offnadir::models {

template <class S>
using FeaturePyramid = std::array<Variable<S>, 5>;

template <class S>
class Encoder {
public:
  Encoder(const EncoderSpec& spec, ParamStore<S>& ps, const std::string& prefix)
      : spec_(spec), channels_(spec.scaled_channels()) {
    spec.validate();
    int cin = 3;
    for (int i = 0; i < 5; ++i) {
      const std::string sname = prefix + strfmt(".s%d", i);
      const int cout = channels_[size_t(i)];
      switch (spec.family) {
        case EncoderFamily::vgg_like:
          vgg_a_[size_t(i)] = ConvBnAct<S>(ps, sname + ".conv0", cin, cout, 3, 2,
                                           Act::relu);
          vgg_b_[size_t(i)] = ConvBnAct<S>(ps, sname + ".conv1", cout, cout, 3, 1,
                                           Act::relu);
          break;
        case EncoderFamily::inverted_residual:
          mv2_down_[size_t(i)] = Mv2Block<S>(ps, sname + ".down", cin, cout, 2);
          if (i >= 1)
            mv2_res_[size_t(i)] = std::make_unique<Mv2Block<S>>(ps, sname + ".res",
                                                                cout, cout, 1);
          break;
        case EncoderFamily::mbconv:
          fused_down_[size_t(i)] =
              FusedMbBlock<S>(ps, sname + ".down", cin, cout, 2);
          if (i >= 1)
            fused_res_[size_t(i)] = std::make_unique<FusedMbBlock<S>>(
                ps, sname + ".res", cout, cout, 1);
          break;
        case EncoderFamily::mobilevit_like:
          mv2_down_[size_t(i)] = Mv2Block<S>(ps, sname + ".down", cin, cout, 2);
          if (i <= 2) {
            if (i >= 1)
              mv2_res_[size_t(i)] = std::make_unique<Mv2Block<S>>(ps, sname + ".res",
                                                                  cout, cout, 1);
          } else {
            vit_[size_t(i)] =
                std::make_unique<MobileVitBlock<S>>(ps, sname + ".vit", cout, 4);
          }
          break;
      }
      cin = cout;
    }
  }

  // Input (N,3,S,S) in [0,1] -> five levels at S/2 .. S/32. No silent resize.
  FeaturePyramid<S> forward(const Variable<S>& images, bool training) const {
    FeaturePyramid<S> pyr;
    Variable<S> x = images;
    for (int i = 0; i < 5; ++i) {
      switch (spec_.family) {
        case EncoderFamily::vgg_like:
          x = vgg_b_[size_t(i)](vgg_a_[size_t(i)](x, training), training);
          break;
        case EncoderFamily::inverted_residual:
          x = mv2_down_[size_t(i)](x, training);
          if (mv2_res_[size_t(i)]) x = (*mv2_res_[size_t(i)])(x, training);
          break;
        case EncoderFamily::mbconv:
          x = fused_down_[size_t(i)](x, training);
          if (fused_res_[size_t(i)]) x = (*fused_res_[size_t(i)])(x, training);
          break;
        case EncoderFamily::mobilevit_like:
          x = mv2_down_[size_t(i)](x, training);
          if (mv2_res_[size_t(i)]) x = (*mv2_res_[size_t(i)])(x, training);
          if (vit_[size_t(i)]) x = (*vit_[size_t(i)])(x, training);
          break;
      }
      pyr[size_t(i)] = x;
    }
    return pyr;
  }

  const std::array<int, 5>& channels() const { return channels_; }

private:
  EncoderSpec spec_;
  std::array<int, 5> channels_;
  std::array<ConvBnAct<S>, 5> vgg_a_, vgg_b_;
  std::array<Mv2Block<S>, 5> mv2_down_;
  std::array<std::unique_ptr<Mv2Block<S>>, 5> mv2_res_;
  std::array<FusedMbBlock<S>, 5> fused_down_;
  std::array<std::unique_ptr<FusedMbBlock<S>>, 5> fused_res_;
  std::array<std::unique_ptr<MobileVitBlock<S>>, 5> vit_;
};

template <class S>
class UNet {
public:
  struct Output {
    Variable<S> prob;          // (N,1,S,S), sigmoid probabilities
    FeaturePyramid<S> pyramid; // encoder levels, for distillation
  };

  UNet(const ModelSpec& spec, uint64_t seed) : spec_(spec), store_(seed) {
    spec.validate();
    encoder_ = std::make_unique<Encoder<S>>(spec.encoder, store_, "enc");
    const auto& ec = encoder_->channels();
    const auto& dc = spec.decoder_channels;

    bridge_ = ConvBnAct<S>(store_, "dec.bridge", ec[4], dc[0], 3, 1, Act::relu);
    int xin = dc[0];
    for (int i = 0; i < 5; ++i) {
      const std::string bname = strfmt("dec.b%d", i);
      const int skip_c = ec[size_t(4 - i)];
      if (spec.use_attention)
        att_[size_t(i)] = std::make_unique<AttentionGate<S>>(
            store_, bname + ".att", skip_c, xin, std::max(4, dc[size_t(i)] / 2));
      conv1_[size_t(i)] = ConvBnAct<S>(store_, bname + ".conv1", xin + skip_c,
                                       dc[size_t(i)], 3, 1, Act::relu);
      conv2_[size_t(i)] = ConvBnAct<S>(store_, bname + ".conv2", dc[size_t(i)],
                                       dc[size_t(i)], 3, 1, Act::relu);
      up_[size_t(i)] = ConvBnAct<S>(store_, bname + ".up", dc[size_t(i)],
                                    dc[size_t(i)], 3, 1, Act::relu);
      xin = dc[size_t(i)];
    }
    head_ = Conv2d<S>(store_, "head", dc[4], 1, 1, 1, 0);
  }

  Output forward(const Tensor<S>& images, bool training) {
    ON_CHECK(images.c() == 3, "input must have 3 channels, got %d", images.c());
    ON_CHECK(images.h() == spec_.input_size && images.w() == spec_.input_size,
             "input is %dx%d but the model was built for %dx%d (no silent resize)",
             images.h(), images.w(), spec_.input_size, spec_.input_size);
    for (S v : images.v)
      ON_CHECK(v >= S(0) && v <= S(1), "input values must lie in [0,1]");

    Variable<S> x = Variable<S>::constant(images);
    Output out;
    out.pyramid = encoder_->forward(x, training);

    Variable<S> d = bridge_(out.pyramid[4], training);
    for (int i = 0; i < 5; ++i) {
      Variable<S> skip = out.pyramid[size_t(4 - i)];
      if (att_[size_t(i)]) skip = (*att_[size_t(i)])(skip, d);
      d = conv1_[size_t(i)](nn::concat_c(d, skip), training);
      d = conv2_[size_t(i)](d, training);
      d = up_[size_t(i)](nn::upsample_nearest2(d), training);
    }
    out.prob = nn::sigmoid(head_(d));
    return out;
  }

  // Encoder-only forward, for feature inspection and distillation teachers.
  FeaturePyramid<S> encoder_forward(const Tensor<S>& images, bool training) {
    ON_CHECK(images.c() == 3, "input must have 3 channels, got %d", images.c());
    ON_CHECK(images.h() == spec_.input_size && images.w() == spec_.input_size,
             "input is %dx%d but the model was built for %dx%d (no silent resize)",
             images.h(), images.w(), spec_.input_size, spec_.input_size);
    return encoder_->forward(Variable<S>::constant(images), training);
  }

  const ModelSpec& spec() const { return spec_; }
  uint64_t seed() const { return store_.seed(); }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  const std::array<int, 5>& encoder_channels() const { return encoder_->channels(); }

private:
  ModelSpec spec_;
  ParamStore<S> store_;
  std::unique_ptr<Encoder<S>> encoder_;
  ConvBnAct<S> bridge_;
  std::array<std::unique_ptr<AttentionGate<S>>, 5> att_;
  std::array<ConvBnAct<S>, 5> conv1_, conv2_, up_;
  Conv2d<S> head_;
};

using UNetF = UNet<float>;

// Exact count of trainable scalars.
template <class S>
int64_t count_params(const UNet<S>& model) {
  return model.params().count_trainable();
}

// ---------------------------------------------------------------------------
// EDN registry. U-Net ships; other encoder-decoder architectures can be
// registered by name without touching the harness.
// ---------------------------------------------------------------------------

class EdnRegistry {
public:
  using Builder = std::function<std::unique_ptr<UNetF>(const ModelSpec&, uint64_t)>;

  static EdnRegistry& instance() {
    static EdnRegistry reg;
    return reg;
  }

  void register_edn(const std::string& name, Builder b) {
    ON_CHECK(!builders_.count(name), "EDN '%s' already registered", name.c_str());
    builders_[name] = std::move(b);
  }

  std::unique_ptr<UNetF> build(const std::string& name, const ModelSpec& spec,
                               uint64_t seed) const {
    auto it = builders_.find(name);
    ON_CHECK(it != builders_.end(), "no EDN named '%s' registered", name.c_str());
    return it->second(spec, seed);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : builders_) out.push_back(n);
    return out;
  }

private:
  EdnRegistry() {
    builders_["unet"] = [](const ModelSpec& spec, uint64_t seed) {
      return std::make_unique<UNetF>(spec, seed);
    };
  }
  std::map<std::string, Builder> builders_;
};

}  // namespace offnadir::models
