#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gfmm {

// Stable CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIntegrity = 4;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;          // --set key.path=value
  std::optional<std::uint64_t> seed;           // --seed
  std::optional<std::string> out;              // --out
};

int cmd_train(const CommonOpts& opts);
int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, bool oracle, bool fusion_off);
int cmd_gradcheck(const CommonOpts& opts, int probes);
int cmd_gen_data(const CommonOpts& opts, std::int64_t count, const std::string& out_file, bool require_targets);
int cmd_export_dense(const CommonOpts& opts, const std::string& checkpoint_path, const std::string& out_file,
                     const std::string& format);

}  // namespace gfmm
