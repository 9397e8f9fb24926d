#pragma once

#include "gfmm/checkpoint.hpp"
#include "gfmm/datagen.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace gfmm {

// Dataset container: magic "GFMMDATA" | u32 version | u64 manifest length |
// manifest JSON | little-endian scalar payload. The manifest records the
// problem, grid, scheme, seed and per-sample named field entries.

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[9] = "GFMMDATA";

template <typename S>
void write_dataset(const std::string& path, const json& header, const Batch<S>& batch) {
  json manifest = header;
  manifest["format_version"] = kDatasetVersion;
  manifest["dtype"] = dtype_name<S>();
  manifest["count"] = batch.size();

  std::vector<char> payload;
  auto push = [&](const Vec<S>& v) {
    json e;
    e["offset"] = payload.size();
    e["len"] = v.size();
    const std::size_t nb = static_cast<std::size_t>(v.size()) * sizeof(S);
    const std::size_t at = payload.size();
    payload.resize(at + nb);
    std::memcpy(payload.data() + at, v.data(), nb);
    return e;
  };

  json samples = json::array();
  for (const auto& s : batch) {
    json js;
    json fields = json::object();
    for (const auto& [name, v] : s.fields) fields[name] = push(v);
    js["fields"] = fields;
    js["target"] = s.target ? push(*s.target) : json();
    js["residual_only"] = s.residual_only;
    js["meta"] = s.meta;
    samples.push_back(js);
  }
  manifest["samples"] = samples;
  manifest["payload_crc32"] = crc32_bytes(payload.data(), payload.size());

  const std::string mtxt = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw integrity_error("cannot open dataset file for writing: " + path);
  out.write(kDatasetMagic, 8);
  const std::uint32_t ver = kDatasetVersion;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t mlen = mtxt.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtxt.data(), static_cast<std::streamsize>(mtxt.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw integrity_error("failed writing dataset: " + path);
}

template <typename S>
struct LoadedDataset {
  json manifest;
  Batch<S> batch;
};

template <typename S>
LoadedDataset<S> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw integrity_error("cannot open dataset file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + sizeof(std::uint32_t) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kDatasetMagic, 8) != 0)
    throw integrity_error("not a dataset file: " + path);
  std::uint32_t ver = 0;
  std::memcpy(&ver, bytes.data() + 8, sizeof(ver));
  if (ver != kDatasetVersion)
    throw integrity_error("incompatible dataset format version " + std::to_string(ver));
  std::uint64_t mlen = 0;
  std::memcpy(&mlen, bytes.data() + 12, sizeof(mlen));
  const std::size_t header = 8 + sizeof(ver) + sizeof(mlen);
  if (bytes.size() < header + mlen) throw integrity_error("truncated dataset manifest: " + path);

  LoadedDataset<S> out;
  out.manifest = json::parse(std::string(bytes.data() + header, mlen), nullptr, false);
  if (out.manifest.is_discarded()) throw integrity_error("corrupt dataset manifest: " + path);
  if (out.manifest.value("dtype", "") != dtype_name<S>())
    throw config_error("dataset dtype does not match the requested precision");

  const char* base = bytes.data() + header + mlen;
  const std::size_t payload_len = bytes.size() - header - static_cast<std::size_t>(mlen);
  if (crc32_bytes(base, payload_len) != out.manifest.value("payload_crc32", std::uint32_t(0)))
    throw integrity_error("dataset payload checksum mismatch: " + path);

  auto pull = [&](const json& e) {
    const std::size_t off = e.at("offset").get<std::size_t>();
    const Index len = e.at("len").get<Index>();
    if (off + static_cast<std::size_t>(len) * sizeof(S) > payload_len)
      throw integrity_error("truncated dataset payload: " + path);
    Vec<S> v(len);
    std::memcpy(v.data(), base + off, static_cast<std::size_t>(len) * sizeof(S));
    return v;
  };

  for (const auto& js : out.manifest.at("samples")) {
    Sample<S> s;
    for (const auto& [name, e] : js.at("fields").items()) s.fields[name] = pull(e);
    if (!js.at("target").is_null()) s.target = pull(js.at("target"));
    s.residual_only = js.value("residual_only", false);
    for (const auto& [k, v] : js.at("meta").items()) s.meta[k] = v.template get<double>();
    out.batch.push_back(std::move(s));
  }
  return out;
}

}  // namespace gfmm
