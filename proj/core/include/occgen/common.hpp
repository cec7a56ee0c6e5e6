#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace occgen {

using real = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Numerical floor used wherever a strictly positive scale is required.
inline constexpr real kSigmaFloor = 1e-4;
// Slope clamp for the presence probability, keeps logits finite.
inline constexpr real kPresEps = 1e-6;

// Cholesky factorization kept failing after the jitter escalation ran out.
struct CholeskyFailure : std::runtime_error {
  explicit CholeskyFailure(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or truncated dataset / checkpoint bytes.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Scene sampler could not place the requested objects without overlap.
struct PlacementFailure : std::runtime_error {
  explicit PlacementFailure(const std::string& what) : std::runtime_error(what) {}
};

// Time-regression design matrix had rank zero.
struct DegenerateDesign : std::runtime_error {
  explicit DegenerateDesign(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Observed/query frame selection impossible for the scene at hand.
struct FrameSpecError : std::runtime_error {
  explicit FrameSpecError(const std::string& what) : std::runtime_error(what) {}
};

// Loss became non-finite during training.
struct NumericsFailure : std::runtime_error {
  explicit NumericsFailure(const std::string& what) : std::runtime_error(what) {}
};

inline real sigmoid(real x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const real e = std::exp(x);
  return e / (1.0 + e);
}

inline real softplus(real x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline real logit(real p) { return std::log(p) - std::log1p(-p); }

}  // namespace occgen
