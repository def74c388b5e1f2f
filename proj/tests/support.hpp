#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "slot/factor_graph.hpp"
#include "slot/geometry.hpp"

namespace slot::testing {

inline std::filesystem::path scene_dir() { return SLOT_SCENE_DIR; }

inline Pose random_pose(std::mt19937_64& rng, double max_angle = 2.5, double max_trans = 10.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector3 axis(u(rng), u(rng), u(rng));
  axis.normalize();
  const double angle = max_angle * std::abs(u(rng));
  const Vector3 t(max_trans * u(rng), max_trans * u(rng), max_trans * u(rng));
  return {so3_exp(angle * axis), t};
}

inline Twist random_twist(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Twist v;
  for (int i = 0; i < 6; ++i) v[i] = u(rng);
  return v;
}

/// Central-difference Jacobians of a pose factor under right perturbations.
inline std::vector<Matrix6> numeric_jacobians(FactorKind kind, std::span<const Pose> values,
                                              const std::optional<Pose>& measurement,
                                              double step = 1e-6) {
  std::vector<Matrix6> out(values.size(), Matrix6::Zero());
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (int k = 0; k < 6; ++k) {
      Twist d = Twist::Zero();
      d[k] = step;
      std::vector<Pose> plus(values.begin(), values.end());
      std::vector<Pose> minus(values.begin(), values.end());
      plus[i] = plus[i] * exp_map(d);
      minus[i] = minus[i] * exp_map(-d);
      out[i].col(k) = (linearize_pose_factor(kind, plus, measurement).error -
                       linearize_pose_factor(kind, minus, measurement).error) /
                      (2.0 * step);
    }
  }
  return out;
}

/// max |A - B| / max(1, max |B|)
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace slot::testing
