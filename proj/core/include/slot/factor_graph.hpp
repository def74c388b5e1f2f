#pragma once

#include <compare>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "slot/geometry.hpp"

namespace slot {

enum class VariableKind { EgoPose, ObjectPose, ObjectMotion };

struct VariableId {
  VariableKind kind = VariableKind::EgoPose;
  int frame = 0;
  std::optional<int> object;

  static VariableId ego(int frame) { return {VariableKind::EgoPose, frame, std::nullopt}; }
  static VariableId object_pose(int frame, int track) {
    return {VariableKind::ObjectPose, frame, track};
  }
  static VariableId object_motion(int frame, int track) {
    return {VariableKind::ObjectMotion, frame, track};
  }

  bool is_pose() const { return kind != VariableKind::ObjectMotion; }
  std::string str() const;

  auto operator<=>(const VariableId&) const = default;
};

enum class FactorKind { Odometry, Observation, Motion, ConstVelocity, Loop, MarginalPrior };

const char* to_string(FactorKind kind);

/// Gaussian prior left behind by marginalization. The cost over the retained
/// variables is dx^T H dx + 2 g^T dx + const with dx_i = log(lin_i^-1 x_i),
/// stored in square-root form so it is a plain least-squares residual.
struct MarginalPriorData {
  std::vector<Pose> linearization_points;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd sqrt_information;
  Eigen::VectorXd offset;
};

struct Factor {
  FactorKind kind = FactorKind::Odometry;
  std::vector<VariableId> variables;
  std::optional<Pose> measurement;
  /// Inverse covariance, 6k x 6k.
  Eigen::MatrixXd information;
  /// Only set for MarginalPrior.
  std::shared_ptr<const MarginalPriorData> prior;

  static Factor odometry(int prev, int cur, const Pose& t_meas, const Matrix6& info);
  static Factor loop(int old_frame, int new_frame, const Pose& t_meas, const Matrix6& info);
  static Factor observation(const VariableId& ego, const VariableId& object,
                            const Pose& local_meas, const Matrix6& info);
  static Factor motion(const VariableId& prev_pose, const VariableId& cur_pose,
                       const VariableId& motion, const Matrix6& info);
  static Factor const_velocity(const VariableId& prev_motion, const VariableId& cur_motion,
                               const Matrix6& info);
  /// Prior over `variables` around `linearization_points` with information H
  /// and linear term g.
  static Factor marginal_prior(std::vector<VariableId> variables,
                               std::vector<Pose> linearization_points,
                               const Eigen::MatrixXd& information,
                               const Eigen::VectorXd& gradient);
  /// Prior pinning one variable at `value` with isotropic information.
  static Factor anchor(const VariableId& id, const Pose& value, double information);
};

class InvalidGraph : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonPsdInformation : public NumericalError {
 public:
  explicit NonPsdInformation(std::size_t factor_index);
  std::size_t factor_index() const { return factor_index_; }

 private:
  std::size_t factor_index_;
};

/// The normal equations are singular. `variables` lists the variables that
/// take part in the null space.
class RankDeficient : public NumericalError {
 public:
  explicit RankDeficient(std::vector<VariableId> variables);
  const std::vector<VariableId>& variables() const { return variables_; }

 private:
  std::vector<VariableId> variables_;
};

class Graph {
 public:
  void add_variable(const VariableId& id, const Pose& initial);
  bool has_variable(const VariableId& id) const { return values_.contains(id); }
  const Pose& value(const VariableId& id) const;
  void set_value(const VariableId& id, const Pose& value);
  const std::map<VariableId, Pose>& values() const { return values_; }
  std::size_t variable_count() const { return values_.size(); }

  /// Validates arity and variable references; returns the factor index.
  std::size_t add_factor(Factor factor);
  const std::vector<Factor>& factors() const { return factors_; }

  /// Sum of squared whitened residuals (robustified when huber_scale is set).
  double objective(std::optional<double> huber_scale = std::nullopt) const;

  /// Left-multiplies every ego/object pose estimate by `delta`, together with
  /// the linearization points of marginal priors on those variables. Relative
  /// residuals are unchanged.
  void apply_rigid_correction(const Pose& delta);

  /// Removes `ids` and every factor touching them. Used by marginalize.
  void erase(const std::set<VariableId>& ids);

  /// One factor per line: kind, variable ids, measurement (12 floats, zeros
  /// when absent), information diagonal.
  void dump(std::ostream& os) const;

 private:
  std::map<VariableId, Pose> values_;
  std::vector<Factor> factors_;
};

/// Residual of one pose factor and its Jacobians with respect to a right
/// perturbation x <- x * exp(d) of each variable, in factor order.
struct PoseResidual {
  Twist error;
  std::vector<Matrix6> jacobians;
};

PoseResidual linearize_pose_factor(FactorKind kind, std::span<const Pose> values,
                                   const std::optional<Pose>& measurement);

Twist residual_odometry(const Pose& x_prev, const Pose& x_cur, const Pose& t_meas);
Twist residual_observation(const Pose& x, const Pose& b_world, const Pose& b_local_meas);
Twist residual_motion(const Pose& b_prev, const Pose& b_cur, const Pose& motion);
Twist residual_const_velocity(const Pose& c_prev, const Pose& c_cur);
Twist residual_loop(const Pose& x_old, const Pose& x_new, const Pose& t_loop);

enum class Termination { Converged, MaxIterations, Stalled };
const char* to_string(Termination t);

struct OptimizeOptions {
  int max_iterations = 50;
  double relative_tolerance = 1e-9;
  double gradient_tolerance = 1e-10;
  double initial_lambda = 1e-4;
  std::optional<double> huber_scale;
  // Graphs with fewer variables than this use a dense Cholesky.
  std::size_t dense_threshold = 60;
};

struct OptimizeReport {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  Termination termination = Termination::Converged;
  // Objective after each accepted step, starting with the initial value.
  std::vector<double> objective_trace;
};

/// Levenberg-Marquardt with right-multiplicative updates. Throws
/// NonPsdInformation or RankDeficient.
OptimizeReport optimize(Graph& graph, const OptimizeOptions& options = {});
OptimizeReport optimize(Graph& graph, int max_iterations, double relative_tolerance);

struct MarginalizationReport {
  std::vector<VariableId> blanket;
  std::size_t absorbed_factors = 0;
  bool damped = false;
  double damping = 0.0;
};

/// Removes `victims` and the factors touching them, replacing those factors
/// by a single MarginalPrior over the Markov blanket (Schur complement of the
/// victim block linearized at the current estimate).
MarginalizationReport marginalize(Graph& graph, const std::set<VariableId>& victims,
                                  std::optional<double> huber_scale = std::nullopt);

/// Gauss-Newton system of the whole graph at its current estimate, over
/// variables in map order (6 columns each). Exposed for tests and tooling.
struct NormalEquations {
  std::vector<VariableId> order;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  double objective = 0.0;
};
NormalEquations dense_normal_equations(const Graph& graph,
                                       std::optional<double> huber_scale = std::nullopt);

}  // namespace slot
