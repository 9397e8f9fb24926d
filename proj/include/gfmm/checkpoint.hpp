#pragma once

#include "gfmm/adam.hpp"
#include "gfmm/model.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace gfmm {

// ============================================================================
// CRC32 (IEEE 802.3 polynomial)
// ============================================================================

inline std::uint32_t crc32_bytes(const void* data, std::size_t len, std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xffffffffu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

// ============================================================================
// Checkpoint container
//
// Layout: magic "GFMMCKPT" | u32 version | u64 manifest length | manifest
// JSON | raw little-endian tensor payload. The manifest carries the model
// spec, iteration, rng state, optimizer state and a tensor directory with
// per-tensor name/shape/dtype/offset/crc32.
// ============================================================================

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[9] = "GFMMCKPT";

template <typename S>
const char* dtype_name() {
  if constexpr (std::is_same_v<S, float>) return "f32";
  else return "f64";
}

namespace detail {

template <typename S>
void append_tensor_entry(json& dir, std::vector<char>& payload, const std::string& name, const char* kind,
                         const std::vector<Index>& shape, const Vec<S>& data) {
  const std::size_t nbytes = static_cast<std::size_t>(data.size()) * sizeof(S);
  json e;
  e["name"] = name;
  e["kind"] = kind;
  e["shape"] = shape;
  e["dtype"] = dtype_name<S>();
  e["offset"] = payload.size();
  e["bytes"] = nbytes;
  e["crc32"] = crc32_bytes(data.data(), nbytes);
  dir.push_back(e);
  const std::size_t at = payload.size();
  payload.resize(at + nbytes);
  std::memcpy(payload.data() + at, data.data(), nbytes);
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const AnyModel<S>& model, const AdamState<S>* adam,
                     std::int64_t iteration, Index grid, const SeededRng& rng, const json& extra = json::object()) {
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["dtype"] = dtype_name<S>();
  manifest["model"] = model.describe();
  manifest["grid"] = grid;
  manifest["iteration"] = iteration;
  manifest["rng_state"] = rng.save_state();
  for (auto& [k, v] : extra.items()) manifest[k] = v;

  json dir = json::array();
  std::vector<char> payload;
  const auto params = model.parameters();
  for (const auto& p : params)
    detail::append_tensor_entry(dir, payload, p.name, "param", p.tensor->shape(), p.tensor->values());
  if (adam) {
    json ja;
    ja["lr"] = adam->config().lr;
    ja["beta1"] = adam->config().beta1;
    ja["beta2"] = adam->config().beta2;
    ja["eps"] = adam->config().eps;
    ja["step"] = adam->step_count();
    manifest["adam"] = ja;
    auto& m = const_cast<AdamState<S>*>(adam)->first_moments();
    auto& v = const_cast<AdamState<S>*>(adam)->second_moments();
    for (std::size_t k = 0; k < m.size(); ++k) {
      detail::append_tensor_entry(dir, payload, params[k].name, "adam_m", {m[k].size()}, m[k]);
      detail::append_tensor_entry(dir, payload, params[k].name, "adam_v", {v[k].size()}, v[k]);
    }
  }
  manifest["tensors"] = dir;

  const std::string mtxt = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw integrity_error("cannot open checkpoint file for writing: " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint32_t ver = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t mlen = mtxt.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtxt.data(), static_cast<std::streamsize>(mtxt.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw integrity_error("failed writing checkpoint: " + path);
}

template <typename S>
struct LoadedCheckpoint {
  std::unique_ptr<AnyModel<S>> model;
  std::unique_ptr<AdamState<S>> adam;  // null when the checkpoint has no optimizer state
  std::int64_t iteration = 0;
  Index grid = 0;
  SeededRng rng;
  json manifest;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw integrity_error("cannot open checkpoint file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 8 + sizeof(std::uint32_t) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw integrity_error("not a checkpoint file: " + path);
  std::uint32_t ver = 0;
  std::memcpy(&ver, bytes.data() + 8, sizeof(ver));
  if (ver != kCheckpointVersion)
    throw integrity_error("incompatible checkpoint format version " + std::to_string(ver) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  std::uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 12, sizeof(mlen));
  const std::size_t header = 8 + sizeof(ver) + sizeof(mlen);
  if (bytes.size() < header + mlen) throw integrity_error("truncated checkpoint manifest: " + path);

  LoadedCheckpoint<S> out;
  out.manifest = json::parse(std::string(bytes.data() + header, mlen), nullptr, false);
  if (out.manifest.is_discarded()) throw integrity_error("corrupt checkpoint manifest: " + path);
  if (out.manifest.value("dtype", "") != dtype_name<S>())
    throw config_error("checkpoint dtype " + out.manifest.value("dtype", std::string("?")) +
                       " does not match the requested precision " + dtype_name<S>());

  out.iteration = out.manifest.value("iteration", std::int64_t(0));
  out.grid = out.manifest.value("grid", Index(0));
  out.rng = SeededRng::restore_state(out.manifest.value("rng_state", ""));

  SeededRng scratch(0);
  out.model = build_model<S>(out.manifest.at("model"), out.grid, scratch);
  auto params = out.model->parameters();

  const char* base = bytes.data() + header + mlen;
  const std::size_t payload_len = bytes.size() - header - static_cast<std::size_t>(mlen);
  auto read_entry = [&](const json& e, Vec<S>& dst) {
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::size_t nb = e.at("bytes").get<std::size_t>();
    if (off + nb > payload_len) throw integrity_error("truncated checkpoint payload: " + path);
    if (crc32_bytes(base + off, nb) != e.at("crc32").get<std::uint32_t>())
      throw integrity_error("checksum mismatch for tensor '" + e.at("name").get<std::string>() + "'");
    if (nb != static_cast<std::size_t>(dst.size()) * sizeof(S))
      throw integrity_error("size mismatch for tensor '" + e.at("name").get<std::string>() + "'");
    std::memcpy(dst.data(), base + off, nb);
  };

  std::vector<Vec<S>> adam_m, adam_v;
  const bool has_adam = out.manifest.contains("adam");
  if (has_adam) {
    adam_m.resize(params.size());
    adam_v.resize(params.size());
  }
  std::size_t pi = 0, mi = 0, vi = 0;
  for (const json& e : out.manifest.at("tensors")) {
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "param") {
      if (pi >= params.size() || params[pi].name != e.at("name").get<std::string>())
        throw integrity_error("checkpoint tensor directory does not match the model spec");
      read_entry(e, params[pi].tensor->values());
      ++pi;
    } else if (kind == "adam_m") {
      adam_m[mi].resize(e.at("shape")[0].get<Index>());
      read_entry(e, adam_m[mi]);
      ++mi;
    } else if (kind == "adam_v") {
      adam_v[vi].resize(e.at("shape")[0].get<Index>());
      read_entry(e, adam_v[vi]);
      ++vi;
    }
  }
  if (pi != params.size()) throw integrity_error("checkpoint is missing model parameters");

  if (has_adam) {
    const json& ja = out.manifest.at("adam");
    AdamConfig cfg{ja.at("lr").get<double>(), ja.at("beta1").get<double>(), ja.at("beta2").get<double>(),
                   ja.at("eps").get<double>()};
    out.adam = std::make_unique<AdamState<S>>(cfg);
    out.adam->restore(ja.at("step").get<std::int64_t>(), std::move(adam_m), std::move(adam_v));
  }
  return out;
}

}  // namespace gfmm
