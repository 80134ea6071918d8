#pragma once
// Declarative model descriptions. A ModelSpec is sufficient to rebuild a
// network bit-identically given the same seed.

#include <array>
#include <string>

#include "offnadir/jsonio.hpp"

namespace offnadir::models {

enum class EncoderFamily { vgg_like, inverted_residual, mbconv, mobilevit_like };

std::string family_to_string(EncoderFamily f);
EncoderFamily family_from_string(const std::string& s);

struct EncoderSpec {
  EncoderFamily family = EncoderFamily::vgg_like;
  std::array<int, 5> stage_channels{64, 128, 256, 512, 512};
  double width_multiplier = 1.0;

  // Channel counts after the width multiplier, rounded to multiples of 4 so
  // SE reductions and attention heads stay valid.
  std::array<int, 5> scaled_channels() const;

  void validate() const;
  Json to_json() const;
  static EncoderSpec from_json(const Json& j);
  static EncoderSpec defaults(EncoderFamily f);
};

struct ModelSpec {
  EncoderSpec encoder;
  std::array<int, 5> decoder_channels{256, 128, 64, 32, 16};
  bool use_attention = true;
  int input_size = 256;  // must be a multiple of 32

  void validate() const;
  Json to_json() const;
  static ModelSpec from_json(const Json& j);
  static ModelSpec defaults(EncoderFamily f);
  std::string name() const;  // e.g. "u-vgg_like" (+ width suffix when != 1)
};

inline std::string family_to_string(EncoderFamily f) {
  switch (f) {
    case EncoderFamily::vgg_like: return "vgg_like";
    case EncoderFamily::inverted_residual: return "inverted_residual";
    case EncoderFamily::mbconv: return "mbconv";
    case EncoderFamily::mobilevit_like: return "mobilevit_like";
  }
  fail("bad EncoderFamily");
}

inline EncoderFamily family_from_string(const std::string& s) {
  for (EncoderFamily f : {EncoderFamily::vgg_like, EncoderFamily::inverted_residual,
                          EncoderFamily::mbconv, EncoderFamily::mobilevit_like})
    if (family_to_string(f) == s) return f;
  fail(strfmt("unknown encoder family '%s'", s.c_str()));
}

inline std::array<int, 5> EncoderSpec::scaled_channels() const {
  std::array<int, 5> out{};
  for (int i = 0; i < 5; ++i) {
    const double scaled = stage_channels[size_t(i)] * width_multiplier;
    out[size_t(i)] = std::max(4, 4 * int(std::lround(scaled / 4.0)));
  }
  return out;
}

inline void EncoderSpec::validate() const {
  for (int c : stage_channels) ON_CHECK(c > 0, "stage_channels must be positive");
  ON_CHECK(width_multiplier > 0, "width_multiplier must be > 0");
}

inline Json EncoderSpec::to_json() const {
  return Json{{"family", family_to_string(family)},
              {"stage_channels", stage_channels},
              {"width_multiplier", width_multiplier}};
}

inline EncoderSpec EncoderSpec::from_json(const Json& j) {
  EncoderSpec s;
  s.family = family_from_string(j.at("family").get<std::string>());
  const auto ch = j.at("stage_channels").get<std::vector<int>>();
  ON_CHECK(ch.size() == 5, "stage_channels must have exactly 5 entries, got %zu",
           ch.size());
  std::copy(ch.begin(), ch.end(), s.stage_channels.begin());
  if (j.contains("width_multiplier"))
    s.width_multiplier = j.at("width_multiplier").get<double>();
  s.validate();
  return s;
}

inline EncoderSpec EncoderSpec::defaults(EncoderFamily f) {
  EncoderSpec s;
  s.family = f;
  switch (f) {
    case EncoderFamily::vgg_like:
      s.stage_channels = {64, 128, 256, 512, 512};
      break;
    case EncoderFamily::inverted_residual:
      s.stage_channels = {16, 24, 32, 64, 96};
      break;
    case EncoderFamily::mbconv:
      s.stage_channels = {16, 32, 48, 96, 128};
      break;
    case EncoderFamily::mobilevit_like:
      s.stage_channels = {16, 32, 48, 80, 96};
      break;
  }
  return s;
}

inline void ModelSpec::validate() const {
  encoder.validate();
  for (int c : decoder_channels) ON_CHECK(c > 0, "decoder_channels must be positive");
  ON_CHECK(input_size >= 32 && input_size % 32 == 0,
           "input_size must be a multiple of 32 (got %d)", input_size);
}

inline Json ModelSpec::to_json() const {
  return Json{{"encoder", encoder.to_json()},
              {"decoder_channels", decoder_channels},
              {"use_attention", use_attention},
              {"input_size", input_size}};
}

inline ModelSpec ModelSpec::from_json(const Json& j) {
  ModelSpec s;
  s.encoder = EncoderSpec::from_json(j.at("encoder"));
  const auto ch = j.at("decoder_channels").get<std::vector<int>>();
  ON_CHECK(ch.size() == 5, "decoder_channels must have exactly 5 entries, got %zu",
           ch.size());
  std::copy(ch.begin(), ch.end(), s.decoder_channels.begin());
  if (j.contains("use_attention")) s.use_attention = j.at("use_attention").get<bool>();
  if (j.contains("input_size")) s.input_size = j.at("input_size").get<int>();
  s.validate();
  return s;
}

inline ModelSpec ModelSpec::defaults(EncoderFamily f) {
  ModelSpec s;
  s.encoder = EncoderSpec::defaults(f);
  switch (f) {
    case EncoderFamily::vgg_like:
      s.decoder_channels = {256, 128, 64, 32, 16};
      break;
    case EncoderFamily::inverted_residual:
      s.decoder_channels = {96, 64, 48, 32, 16};
      break;
    case EncoderFamily::mbconv:
      s.decoder_channels = {128, 64, 48, 32, 16};
      break;
    case EncoderFamily::mobilevit_like:
      s.decoder_channels = {96, 64, 48, 32, 16};
      break;
  }
  return s;
}

inline std::string ModelSpec::name() const {
  std::string n = "u-" + family_to_string(encoder.family);
  if (encoder.width_multiplier != 1.0)
    n += strfmt("-w%.2g", encoder.width_multiplier);
  return n;
}

}  // namespace offnadir::models
