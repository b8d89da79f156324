#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace riskcast {

using Scalar = double;

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVectorT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using Matrix = MatrixT<Scalar>;
using Vector = VectorT<Scalar>;
using RowVector = RowVectorT<Scalar>;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Base of all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad experiment / model configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed or inconsistent data (CLI exit code 3).
struct DataError : Error {
  using Error::Error;
};

// Errors shared by more than one module.
struct EmptyTraining : DataError {
  using DataError::DataError;
};
struct DimensionMismatch : DataError {
  using DataError::DataError;
};
struct AlignmentError : DataError {
  using DataError::DataError;
};

inline Scalar sigmoid(Scalar x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

inline Scalar logit(Scalar p) { return std::log(p / (1.0 - p)); }

/// Elementwise logistic function for Eigen array expressions.
template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

/// SplitMix64 step; mixes a master seed with a stream index so that
/// per-patient / per-resample / per-trial streams are independent and
/// reproducible regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace riskcast
