#pragma once
// Checkpoints pair float32 weights (and BN buffers) with the producing
// ModelSpec and seed, so a network can be rebuilt bit-identically.
// Layout: magic, u64 header length, JSON header, raw little-endian float32.

#include <cstring>
#include <fstream>

#include "offnadir/models/unet.hpp"

namespace offnadir::models {

inline constexpr char kCkptMagic[8] = {'O', 'F', 'N', 'C', 'K', 'P', 'T', '1'};

struct CheckpointInfo {
  ModelSpec spec;
  uint64_t seed = 0;
  std::string weights_hash;  // fnv of the raw payload
  Json meta;                 // trainer provenance (config hash, run id, ...)
};

inline void save_checkpoint(const std::string& path, const UNetF& model,
                            const Json& meta = Json::object()) {
  Json header;
  header["model_spec"] = model.spec().to_json();
  header["seed"] = model.seed();
  header["meta"] = meta;
  Json tensors = Json::array();
  std::vector<float> payload;
  for (const auto& e : model.params().entries()) {
    const auto& t = e.var.value();
    tensors.push_back(Json{{"name", e.name}, {"kind", "param"}, {"shape", t.shape}});
    payload.insert(payload.end(), t.v.begin(), t.v.end());
  }
  for (const auto& b : model.params().buffers()) {
    tensors.push_back(
        Json{{"name", b.name}, {"kind", "buffer"}, {"shape", b.buf->shape}});
    payload.insert(payload.end(), b.buf->v.begin(), b.buf->v.end());
  }
  header["tensors"] = tensors;
  header["payload_hash"] = hash_hex(
      fnv1a64(std::string_view(reinterpret_cast<const char*>(payload.data()),
                               payload.size() * sizeof(float))));

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  ON_CHECK(out.good(), "cannot write checkpoint '%s'", path.c_str());
  out.write(kCkptMagic, sizeof(kCkptMagic));
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), std::streamsize(hs.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            std::streamsize(payload.size() * sizeof(float)));
  ON_CHECK(out.good(), "checkpoint write failed for '%s'", path.c_str());
}

inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ON_CHECK(in.good(), "cannot open checkpoint '%s'", path.c_str());
  char magic[8];
  in.read(magic, 8);
  ON_CHECK(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
           "'%s' is not a checkpoint", path.c_str());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  ON_CHECK(in.good(), "truncated checkpoint '%s'", path.c_str());
  Json header = Json::parse(hs);
  CheckpointInfo info;
  info.spec = ModelSpec::from_json(header.at("model_spec"));
  info.seed = header.at("seed").get<uint64_t>();
  info.weights_hash = header.at("payload_hash").get<std::string>();
  info.meta = header.value("meta", Json::object());
  return info;
}

// Loads weights into an already-built model; the model's spec must match the
// checkpoint's exactly.
inline CheckpointInfo load_checkpoint(const std::string& path, UNetF& model) {
  std::ifstream in(path, std::ios::binary);
  ON_CHECK(in.good(), "cannot open checkpoint '%s'", path.c_str());
  char magic[8];
  in.read(magic, 8);
  ON_CHECK(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
           "'%s' is not a checkpoint", path.c_str());
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  Json header = Json::parse(hs);

  CheckpointInfo info;
  info.spec = ModelSpec::from_json(header.at("model_spec"));
  info.seed = header.at("seed").get<uint64_t>();
  info.weights_hash = header.at("payload_hash").get<std::string>();
  info.meta = header.value("meta", Json::object());
  ON_CHECK(info.spec.to_json() == model.spec().to_json(),
           "checkpoint '%s' was produced by a different ModelSpec", path.c_str());

  auto read_into = [&](const std::string& name, const std::string& kind,
                       nn::TensorF& dst) {
    (void)name;
    (void)kind;
    in.read(reinterpret_cast<char*>(dst.data()),
            std::streamsize(dst.numel() * sizeof(float)));
    ON_CHECK(in.good(), "truncated checkpoint payload in '%s'", path.c_str());
  };

  size_t pi = 0, bi = 0;
  const auto& entries = model.params().entries();
  const auto& buffers = model.params().buffers();
  for (const Json& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "param") {
      ON_CHECK(pi < entries.size() && entries[pi].name == name,
               "checkpoint param order mismatch at '%s'", name.c_str());
      nn::Variable<float> var = entries[pi].var;  // copies alias the node
      read_into(name, kind, var.mutable_value());
      ++pi;
    } else {
      ON_CHECK(bi < buffers.size() && buffers[bi].name == name,
               "checkpoint buffer order mismatch at '%s'", name.c_str());
      read_into(name, kind, *buffers[bi].buf);
      ++bi;
    }
  }
  ON_CHECK(pi == entries.size() && bi == buffers.size(),
           "checkpoint '%s' is missing tensors", path.c_str());
  return info;
}

}  // namespace offnadir::models
