#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"

namespace banditlab {

enum class KernelKind { Rbf, Polynomial, Linear };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Polynomial: return "polynomial";
    case KernelKind::Linear: return "linear";
  }
  return "?";
}

inline KernelKind parse_kernel(const std::string& name) {
  if (name == "rbf") return KernelKind::Rbf;
  if (name == "polynomial" || name == "poly") return KernelKind::Polynomial;
  if (name == "linear") return KernelKind::Linear;
  throw Error(ErrorCode::UnknownParameter, "kernel '" + name + "'");
}

struct KernelParams {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 0.5;   // Rbf only
  int degree = 2;       // Polynomial only

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const {
    switch (kind) {
      case KernelKind::Rbf: return std::exp(-gamma * (x - y).squaredNorm());
      case KernelKind::Polynomial: return std::pow(x.dot(y) + 1.0, degree);
      case KernelKind::Linear: return x.dot(y);
    }
    return 0.0;
  }
};

/// Joint context-action kernel: the base kernel gated by the action
/// indicator, so observations of different arms never interact.
inline double kernel_eval(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t a,
                          const Eigen::Ref<const Eigen::VectorXd>& x2, std::size_t a2, const KernelParams& params) {
  require(x.size() == x2.size(), ErrorCode::DimensionMismatch, "kernel argument dimensions");
  require(params.kind != KernelKind::Rbf || params.gamma > 0.0, ErrorCode::InvalidArgument, "rbf gamma must be > 0");
  if (a != a2) return 0.0;
  return params(x, x2);
}

}  // namespace banditlab
