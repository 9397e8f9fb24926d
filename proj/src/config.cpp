#include "gfmm/config.hpp"

#include <cstring>
#include <fstream>

namespace gfmm {

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw config_error("config file is not valid JSON: " + path);
  return from_json(std::move(j));
}

RunConfig RunConfig::from_json(json j) {
  validate_run_config(j);
  return RunConfig{std::move(j)};
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("--set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare strings are allowed unquoted

  json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) throw config_error("--set: empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null())
      throw config_error("--set: '" + path.substr(0, dot) + "' is not an object");
    pos = dot + 1;
  }
}

namespace {

void fail(const std::string& path, const std::string& why) { throw config_error(path + ": " + why); }

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) fail(path + "." + key, "missing required field");
  return j.at(key);
}

void check_block_levels(const json& jb, Index grid, const std::string& path) {
  if (!jb.contains("levels")) fail(path + ".levels", "missing required field");
  const auto levels = jb.at("levels").get<std::int64_t>();
  if (levels < 1) fail(path + ".levels", "must be >= 1");
  if (levels >= 60 || grid % (Index(1) << levels) != 0)
    fail(path + ".levels", "grid size " + std::to_string(grid) + " is not divisible by 2^levels");
}

}  // namespace

void validate_run_config(const json& root) {
  if (!root.is_object()) fail("config", "must be a JSON object");
  const json& jp = need(root, "problem", "config");
  const std::string type = need(jp, "type", "problem").get<std::string>();
  if (type != "poisson1d" && type != "darcy1d" && type != "bvp1d" && type != "poisson2d")
    fail("problem.type", "unknown problem '" + type + "'");
  const Index grid = need(jp, "grid", "problem").get<Index>();
  if (grid < 1) fail("problem.grid", "must be >= 1");

  const json& jm = need(root, "model", "config");
  const std::string kind = need(jm, "kind", "model").get<std::string>();
  if (kind == "uno") {
    const json& jb = need(jm, "blocks", "model");
    if (!jb.is_array() || jb.empty()) fail("model.blocks", "must be a non-empty array");
    for (std::size_t k = 0; k < jb.size(); ++k)
      check_block_levels(jb[k], grid, "model.blocks[" + std::to_string(k) + "]");
    need(jm, "inputs", "model");
  } else if (kind == "mno") {
    const json& jc = need(jm, "coeff_blocks", "model");
    const json& jr = need(jm, "rhs_blocks", "model");
    if (!jc.is_array() || jc.empty()) fail("model.coeff_blocks", "must be a non-empty array");
    if (!jr.is_array() || !jc.is_array() || jr.size() != jc.size())
      fail("model.rhs_blocks", "must pair one-to-one with coeff_blocks");
    for (std::size_t k = 0; k < jc.size(); ++k)
      check_block_levels(jc[k], grid, "model.coeff_blocks[" + std::to_string(k) + "]");
    for (std::size_t k = 0; k < jr.size(); ++k)
      check_block_levels(jr[k], grid, "model.rhs_blocks[" + std::to_string(k) + "]");
    need(jm, "coeff_inputs", "model");
    need(jm, "rhs_inputs", "model");
    if (jm.contains("fusion_on_block") && jm.at("fusion_on_block").size() != jr.size())
      fail("model.fusion_on_block", "must list one flag per rhs block");
  } else if (kind == "gfmm2d") {
    if (type != "poisson2d") fail("model.kind", "gfmm2d models require problem.type == poisson2d");
    const Index side = need(jm, "grid_side", "model").get<Index>();
    if (side != grid) fail("model.grid_side", "must equal problem.grid");
    const Index bs = need(jm, "block_side", "model").get<Index>();
    if (bs < 1 || side % bs != 0) fail("model.block_side", "must divide the grid side");
    const Index b = side / bs;
    if ((b & (b - 1)) != 0) fail("model.block_side", "blocks per side must be a power of two");
    const auto levels = need(jm, "levels", "model").get<std::int64_t>();
    if (levels < 1) fail("model.levels", "must be >= 1");
    if ((b * b) >> (2 * levels) < 1) fail("model.levels", "tree deeper than the block grid allows");
  } else {
    fail("model.kind", "expected 'uno', 'mno' or 'gfmm2d', got '" + kind + "'");
  }

  const json& jt = need(root, "train", "config");
  if (jt.value("iterations", std::int64_t(0)) < 0) fail("train.iterations", "must be >= 0");
  if (jt.value("batch", Index(1)) < 1) fail("train.batch", "must be >= 1");
  if (jt.value("lr", 1e-3) < 0) fail("train.lr", "must be >= 0");
  const std::string prec = jt.value("precision", "f32");
  if (prec != "f32" && prec != "f64") fail("train.precision", "expected 'f32' or 'f64'");
  if (jt.contains("scheme")) parse_scheme(jt.at("scheme"));
}

std::string peek_checkpoint_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw integrity_error("cannot open checkpoint file: " + path);
  char magic[8];
  std::uint32_t ver = 0;
  std::uint64_t mlen = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw integrity_error("not a checkpoint file: " + path);
  std::string mtxt(mlen, '\0');
  in.read(mtxt.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw integrity_error("truncated checkpoint manifest: " + path);
  json m = json::parse(mtxt, nullptr, false);
  if (m.is_discarded()) throw integrity_error("corrupt checkpoint manifest: " + path);
  return m.value("dtype", "f32");
}

}  // namespace gfmm
