#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfmm {

using Index = Eigen::Index;

template <typename S> using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S> using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S> using VecMap = Eigen::Map<Vec<S>>;
template <typename S> using ConstVecMap = Eigen::Map<const Vec<S>>;
template <typename S> using MatMap = Eigen::Map<Mat<S>>;
template <typename S> using ConstMatMap = Eigen::Map<const Mat<S>>;

// ============================================================================
// Error taxonomy. The CLI maps these onto stable exit codes
// (config 2, numerical 3, integrity 4).
// ============================================================================

struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (e.g. non-scalar loss).
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Object used in an invalid lifecycle state (e.g. tape replayed twice).
struct state_error : std::logic_error {
  using std::logic_error::logic_error;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct integrity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct unsupported_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw dimension_error(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw config_error(msg);
}

enum class Activation { identity, rational, relu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::rational: return "rational";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "rational") return Activation::rational;
  if (s == "relu") return Activation::relu;
  throw config_error("unknown activation '" + s + "'");
}

}  // namespace gfmm
