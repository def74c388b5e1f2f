#include "slot/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace slot {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

constexpr double kPivotRatio = 1e-10;
constexpr double kMaxLambda = 1e10;
constexpr double kSchurDamping = 1e-8;

const char* kind_name(VariableKind kind) {
  switch (kind) {
    case VariableKind::EgoPose: return "X";
    case VariableKind::ObjectPose: return "B";
    case VariableKind::ObjectMotion: return "C";
  }
  return "?";
}

std::size_t expected_arity(FactorKind kind) {
  switch (kind) {
    case FactorKind::Odometry:
    case FactorKind::Loop:
    case FactorKind::Observation:
    case FactorKind::ConstVelocity: return 2;
    case FactorKind::Motion: return 3;
    case FactorKind::MarginalPrior: return 0;
  }
  return 0;
}

struct ChainTerm {
  Pose value;
  int variable = -1;  // index into the factor's variables, -1 for constants
  bool inverted = false;
};

// r = log(T_0 T_1 ... T_n) where each term is a variable (possibly inverted)
// or a constant. A right perturbation X <- X exp(d) of term k moves the
// product to M exp(+-Ad(...) d); chaining with Jr^-1 gives dr/dd.
PoseResidual evaluate_chain(const std::vector<ChainTerm>& terms, std::size_t variable_count) {
  const std::size_t n = terms.size();
  // suffix[k] = T_k ... T_{n-1}
  std::vector<Pose> suffix(n + 1);
  for (std::size_t k = n; k-- > 0;) suffix[k] = terms[k].value * suffix[k + 1];
  PoseResidual out;
  out.error = log_map(suffix[0]);
  const Matrix6 jr_inv = se3_right_jacobian_inverse(out.error);
  out.jacobians.assign(variable_count, Matrix6::Zero());
  for (std::size_t k = 0; k < n; ++k) {
    const ChainTerm& term = terms[k];
    if (term.variable < 0) continue;
    const Pose& rest = suffix[k + 1];
    Matrix6 block;
    if (!term.inverted) {
      block = rest.inverse().adjoint();
    } else {
      // term.value is X^-1, so R^-1 X = rest^-1 * term.value^-1
      block = -(rest.inverse() * term.value.inverse()).adjoint();
    }
    out.jacobians[static_cast<std::size_t>(term.variable)] += jr_inv * block;
  }
  return out;
}

Eigen::MatrixXd whitening(const Eigen::MatrixXd& info) {
  if (info.isDiagonal(0.0)) {
    return info.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return s.asDiagonal() * eig.eigenvectors().transpose();
}

bool is_psd(const Eigen::MatrixXd& info) {
  if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, info.cwiseAbs().maxCoeff())) {
    return false;
  }
  if (info.isDiagonal(0.0)) return info.diagonal().minCoeff() >= 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  return eig.eigenvalues().minCoeff() >= -1e-12 * scale;
}

// Whitened residual and per-variable Jacobian blocks of one factor.
struct Linearized {
  Eigen::VectorXd error;
  std::vector<Eigen::MatrixXd> jacobians;
};

Linearized linearize_factor(const Factor& f, const Graph& g) {
  Linearized out;
  if (f.kind == FactorKind::MarginalPrior) {
    const MarginalPriorData& p = *f.prior;
    const Eigen::Index rows = p.sqrt_information.rows();
    Eigen::VectorXd dx(6 * static_cast<Eigen::Index>(f.variables.size()));
    out.jacobians.reserve(f.variables.size());
    for (std::size_t i = 0; i < f.variables.size(); ++i) {
      const Twist d = log_map(p.linearization_points[i].inverse() * g.value(f.variables[i]));
      const auto col = static_cast<Eigen::Index>(6 * i);
      dx.segment<6>(col) = d;
      out.jacobians.emplace_back(p.sqrt_information.middleCols(col, 6) *
                                 se3_right_jacobian_inverse(d));
    }
    out.error = rows > 0 ? Eigen::VectorXd(p.sqrt_information * dx + p.offset)
                         : Eigen::VectorXd();
    return out;
  }
  std::vector<Pose> values;
  values.reserve(f.variables.size());
  for (const VariableId& id : f.variables) values.push_back(g.value(id));
  PoseResidual r = linearize_pose_factor(f.kind, values, f.measurement);
  const Eigen::MatrixXd w = whitening(f.information);
  out.error = w * r.error;
  out.jacobians.reserve(r.jacobians.size());
  for (const Matrix6& j : r.jacobians) out.jacobians.emplace_back(w * j);
  return out;
}

double robust_cost(double squared, std::optional<double> huber) {
  if (!huber) return squared;
  const double norm = std::sqrt(squared);
  return norm <= *huber ? squared : 2.0 * *huber * norm - *huber * *huber;
}

double robust_weight(double squared, std::optional<double> huber) {
  if (!huber) return 1.0;
  const double norm = std::sqrt(squared);
  return norm <= *huber ? 1.0 : *huber / norm;
}

double factor_cost(const Factor& f, const Graph& g, std::optional<double> huber) {
  if (f.kind == FactorKind::MarginalPrior) {
    const Linearized lin = linearize_factor(f, g);
    return robust_cost(lin.error.squaredNorm(), huber);
  }
  std::vector<Pose> values;
  values.reserve(f.variables.size());
  for (const VariableId& id : f.variables) values.push_back(g.value(id));
  PoseResidual r = linearize_pose_factor(f.kind, values, f.measurement);
  return robust_cost(r.error.dot(f.information * r.error), huber);
}

using IndexMap = std::map<VariableId, Eigen::Index>;

IndexMap index_variables(const Graph& g) {
  IndexMap index;
  Eigen::Index next = 0;
  for (const auto& [id, value] : g.values()) {
    index.emplace(id, next);
    next += 6;
  }
  return index;
}

struct System {
  SparseMatrix hessian;
  Eigen::VectorXd gradient;
  double objective = 0.0;
};

System build_system(const Graph& g, const IndexMap& index, std::optional<double> huber) {
  const auto dim = static_cast<Eigen::Index>(6 * g.variable_count());
  System sys;
  sys.gradient = Eigen::VectorXd::Zero(dim);
  std::vector<Eigen::Triplet<double>> triplets;
  for (const Factor& f : g.factors()) {
    const Linearized lin = linearize_factor(f, g);
    if (lin.error.size() == 0) continue;
    const double squared = lin.error.squaredNorm();
    sys.objective += robust_cost(squared, huber);
    const double w = robust_weight(squared, huber);
    for (std::size_t a = 0; a < f.variables.size(); ++a) {
      const Eigen::Index ia = index.at(f.variables[a]);
      sys.gradient.segment<6>(ia) += w * lin.jacobians[a].transpose() * lin.error;
      for (std::size_t b = 0; b < f.variables.size(); ++b) {
        const Eigen::Index ib = index.at(f.variables[b]);
        const Eigen::MatrixXd block = w * lin.jacobians[a].transpose() * lin.jacobians[b];
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) {
            if (block(r, c) != 0.0) triplets.emplace_back(ia + r, ib + c, block(r, c));
          }
        }
      }
    }
  }
  // Keep the diagonal structurally present so damping can always be applied.
  for (Eigen::Index i = 0; i < dim; ++i) triplets.emplace_back(i, i, 0.0);
  sys.hessian.resize(dim, dim);
  sys.hessian.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

std::vector<VariableId> null_space_variables(const SparseMatrix& h, const IndexMap& index,
                                             const std::vector<Eigen::Index>& weak_pivots) {
  std::vector<VariableId> out;
  auto owner = [&](Eigen::Index column) {
    for (const auto& [id, start] : index) {
      if (column >= start && column < start + 6) return id;
    }
    return index.begin()->first;
  };
  if (h.rows() <= 1500) {
    Eigen::MatrixXd dense(h);
    Eigen::VectorXd scale = dense.diagonal().cwiseAbs();
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
      scale(i) = scale(i) > 0.0 ? 1.0 / std::sqrt(scale(i)) : 1.0;
    }
    const Eigen::MatrixXd scaled = scale.asDiagonal() * dense * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    std::set<VariableId> hit;
    for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
      if (eig.eigenvalues()(k) > kPivotRatio * top) continue;
      const Eigen::VectorXd v = eig.eigenvectors().col(k);
      for (const auto& [id, start] : index) {
        if (v.segment<6>(start).norm() > 1e-6) hit.insert(id);
      }
    }
    out.assign(hit.begin(), hit.end());
    if (!out.empty()) return out;
  }
  std::set<VariableId> hit;
  for (Eigen::Index c : weak_pivots) hit.insert(owner(c));
  out.assign(hit.begin(), hit.end());
  return out;
}

void check_rank(const SparseMatrix& h, const IndexMap& index) {
  if (h.rows() == 0) return;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(h);
  std::vector<Eigen::Index> weak;
  if (ldlt.info() != Eigen::Success) {
    weak.push_back(0);
  } else {
    const Eigen::VectorXd d = ldlt.vectorD();
    const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> inverse_perm =
        ldlt.permutationP().inverse();
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      const Eigen::Index original = inverse_perm.indices()(j);
      const double diag = h.coeff(original, original);
      if (diag <= 0.0 || d(j) <= kPivotRatio * diag) weak.push_back(original);
    }
  }
  if (!weak.empty()) throw RankDeficient(null_space_variables(h, index, weak));
}

void validate_information(const Graph& g) {
  for (std::size_t i = 0; i < g.factors().size(); ++i) {
    const Factor& f = g.factors()[i];
    if (f.kind == FactorKind::MarginalPrior) continue;
    if (!is_psd(f.information)) throw NonPsdInformation(i);
  }
}

Graph retracted(const Graph& g, const IndexMap& index, const Eigen::VectorXd& step) {
  Graph out = g;
  for (const auto& [id, start] : index) {
    out.set_value(id, g.value(id) * exp_map(step.segment<6>(start)));
  }
  return out;
}

}  // namespace

std::string VariableId::str() const {
  std::ostringstream os;
  os << kind_name(kind) << frame;
  if (object) os << ":" << *object;
  return os.str();
}

const char* to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::Odometry: return "odometry";
    case FactorKind::Observation: return "observation";
    case FactorKind::Motion: return "motion";
    case FactorKind::ConstVelocity: return "const_velocity";
    case FactorKind::Loop: return "loop";
    case FactorKind::MarginalPrior: return "marginal_prior";
  }
  return "unknown";
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iters";
    case Termination::Stalled: return "stalled";
  }
  return "unknown";
}

NonPsdInformation::NonPsdInformation(std::size_t factor_index)
    : NumericalError("information matrix of factor " + std::to_string(factor_index) +
                     " is not symmetric positive semi-definite"),
      factor_index_(factor_index) {}

namespace {
std::string describe(const std::vector<VariableId>& ids) {
  std::string s = "normal equations are rank deficient; under-constrained:";
  for (const VariableId& id : ids) s += " " + id.str();
  return s;
}
}  // namespace

RankDeficient::RankDeficient(std::vector<VariableId> variables)
    : NumericalError(describe(variables)), variables_(std::move(variables)) {}

Factor Factor::odometry(int prev, int cur, const Pose& t_meas, const Matrix6& info) {
  return {FactorKind::Odometry, {VariableId::ego(prev), VariableId::ego(cur)}, t_meas, info, nullptr};
}

Factor Factor::loop(int old_frame, int new_frame, const Pose& t_meas, const Matrix6& info) {
  return {FactorKind::Loop, {VariableId::ego(old_frame), VariableId::ego(new_frame)}, t_meas, info,
          nullptr};
}

Factor Factor::observation(const VariableId& ego, const VariableId& object, const Pose& local_meas,
                           const Matrix6& info) {
  return {FactorKind::Observation, {ego, object}, local_meas, info, nullptr};
}

Factor Factor::motion(const VariableId& prev_pose, const VariableId& cur_pose,
                      const VariableId& motion, const Matrix6& info) {
  return {FactorKind::Motion, {prev_pose, cur_pose, motion}, std::nullopt, info, nullptr};
}

Factor Factor::const_velocity(const VariableId& prev_motion, const VariableId& cur_motion,
                              const Matrix6& info) {
  return {FactorKind::ConstVelocity, {prev_motion, cur_motion}, std::nullopt, info, nullptr};
}

Factor Factor::marginal_prior(std::vector<VariableId> variables,
                              std::vector<Pose> linearization_points,
                              const Eigen::MatrixXd& information,
                              const Eigen::VectorXd& gradient) {
  if (variables.size() != linearization_points.size() ||
      information.rows() != static_cast<Eigen::Index>(6 * variables.size()) ||
      information.cols() != information.rows() || gradient.size() != information.rows()) {
    throw InvalidGraph("marginal prior dimensions do not match its variables");
  }
  auto data = std::make_shared<MarginalPriorData>();
  data->linearization_points = std::move(linearization_points);
  data->gradient = gradient;
  const Eigen::MatrixXd sym = 0.5 * (information + information.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double top = lambda.size() > 0 ? lambda.maxCoeff() : 0.0;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > 1e-12 * top && lambda(i) > 0.0) kept.push_back(i);
  }
  const auto rows = static_cast<Eigen::Index>(kept.size());
  data->sqrt_information.resize(rows, sym.cols());
  data->offset.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index i = kept[static_cast<std::size_t>(r)];
    const double s = std::sqrt(lambda(i));
    const Eigen::VectorXd v = eig.eigenvectors().col(i);
    data->sqrt_information.row(r) = s * v.transpose();
    data->offset(r) = v.dot(gradient) / s;
  }
  Factor f;
  f.kind = FactorKind::MarginalPrior;
  f.variables = std::move(variables);
  f.information = sym;
  f.prior = std::move(data);
  return f;
}

Factor Factor::anchor(const VariableId& id, const Pose& value, double information) {
  return marginal_prior({id}, {value}, information * Eigen::MatrixXd::Identity(6, 6),
                        Eigen::VectorXd::Zero(6));
}

void Graph::add_variable(const VariableId& id, const Pose& initial) {
  const bool needs_object = id.kind != VariableKind::EgoPose;
  if (needs_object != id.object.has_value()) {
    throw InvalidGraph("variable " + id.str() + ": object id required iff not an ego pose");
  }
  if (!values_.emplace(id, initial).second) {
    throw InvalidGraph("duplicate variable " + id.str());
  }
}

const Pose& Graph::value(const VariableId& id) const {
  auto it = values_.find(id);
  if (it == values_.end()) throw InvalidGraph("unknown variable " + id.str());
  return it->second;
}

void Graph::set_value(const VariableId& id, const Pose& value) {
  auto it = values_.find(id);
  if (it == values_.end()) throw InvalidGraph("unknown variable " + id.str());
  it->second = value;
}

std::size_t Graph::add_factor(Factor factor) {
  const std::size_t arity = expected_arity(factor.kind);
  if (factor.kind == FactorKind::MarginalPrior) {
    if (factor.variables.empty() || !factor.prior) {
      throw InvalidGraph("marginal prior needs at least one variable and prior data");
    }
  } else {
    if (factor.variables.size() != arity) {
      throw InvalidGraph(std::string("wrong arity for ") + to_string(factor.kind) + " factor");
    }
    if (factor.information.rows() != 6 || factor.information.cols() != 6) {
      throw InvalidGraph(std::string("information of ") + to_string(factor.kind) +
                         " factor must be 6x6");
    }
    const bool needs_measurement = factor.kind == FactorKind::Odometry ||
                                   factor.kind == FactorKind::Loop ||
                                   factor.kind == FactorKind::Observation;
    if (needs_measurement != factor.measurement.has_value()) {
      throw InvalidGraph(std::string(to_string(factor.kind)) + " factor measurement mismatch");
    }
  }
  std::set<VariableId> seen;
  for (const VariableId& id : factor.variables) {
    if (!has_variable(id)) throw InvalidGraph("factor references unknown variable " + id.str());
    if (!seen.insert(id).second) throw InvalidGraph("factor repeats variable " + id.str());
  }
  factors_.push_back(std::move(factor));
  return factors_.size() - 1;
}

double Graph::objective(std::optional<double> huber_scale) const {
  double total = 0.0;
  for (const Factor& f : factors_) total += factor_cost(f, *this, huber_scale);
  return total;
}

void Graph::apply_rigid_correction(const Pose& delta) {
  for (auto& [id, value] : values_) {
    if (id.is_pose()) value = delta * value;
  }
  for (Factor& f : factors_) {
    if (f.kind != FactorKind::MarginalPrior) continue;
    auto data = std::make_shared<MarginalPriorData>(*f.prior);
    for (std::size_t i = 0; i < f.variables.size(); ++i) {
      if (f.variables[i].is_pose()) {
        data->linearization_points[i] = delta * data->linearization_points[i];
      }
    }
    f.prior = std::move(data);
  }
}

void Graph::erase(const std::set<VariableId>& ids) {
  std::erase_if(factors_, [&](const Factor& f) {
    return std::any_of(f.variables.begin(), f.variables.end(),
                       [&](const VariableId& v) { return ids.contains(v); });
  });
  for (const VariableId& id : ids) values_.erase(id);
}

void Graph::dump(std::ostream& os) const {
  for (const Factor& f : factors_) {
    os << to_string(f.kind);
    for (const VariableId& id : f.variables) os << ' ' << id.str();
    const std::array<double, 12> m =
        f.measurement ? f.measurement->to_row_major() : std::array<double, 12>{};
    for (double v : m) os << ' ' << v;
    for (Eigen::Index i = 0; i < f.information.rows(); ++i) os << ' ' << f.information(i, i);
    os << '\n';
  }
}

PoseResidual linearize_pose_factor(FactorKind kind, std::span<const Pose> v,
                                   const std::optional<Pose>& measurement) {
  auto var = [&](std::size_t i) { return ChainTerm{v[i], static_cast<int>(i), false}; };
  auto inv = [&](std::size_t i) { return ChainTerm{v[i].inverse(), static_cast<int>(i), true}; };
  auto need = [&](std::size_t n) {
    if (v.size() != n) throw InvalidGraph(std::string("wrong arity for ") + to_string(kind));
  };
  std::vector<ChainTerm> terms;
  switch (kind) {
    case FactorKind::Odometry:
    case FactorKind::Loop:
    case FactorKind::Observation:
      need(2);
      if (!measurement) throw InvalidGraph("factor needs a measurement");
      terms = {inv(0), var(1), ChainTerm{measurement->inverse(), -1, true}};
      break;
    case FactorKind::Motion:
      need(3);
      terms = {inv(0), var(1), inv(2)};
      break;
    case FactorKind::ConstVelocity:
      need(2);
      terms = {inv(0), var(1)};
      break;
    case FactorKind::MarginalPrior:
      throw InvalidGraph("marginal priors are not pose factors");
  }
  return evaluate_chain(terms, v.size());
}

Twist residual_odometry(const Pose& x_prev, const Pose& x_cur, const Pose& t_meas) {
  const Pose v[] = {x_prev, x_cur};
  return linearize_pose_factor(FactorKind::Odometry, v, t_meas).error;
}

Twist residual_observation(const Pose& x, const Pose& b_world, const Pose& b_local_meas) {
  const Pose v[] = {x, b_world};
  return linearize_pose_factor(FactorKind::Observation, v, b_local_meas).error;
}

Twist residual_motion(const Pose& b_prev, const Pose& b_cur, const Pose& motion) {
  const Pose v[] = {b_prev, b_cur, motion};
  return linearize_pose_factor(FactorKind::Motion, v, std::nullopt).error;
}

Twist residual_const_velocity(const Pose& c_prev, const Pose& c_cur) {
  const Pose v[] = {c_prev, c_cur};
  return linearize_pose_factor(FactorKind::ConstVelocity, v, std::nullopt).error;
}

Twist residual_loop(const Pose& x_old, const Pose& x_new, const Pose& t_loop) {
  const Pose v[] = {x_old, x_new};
  return linearize_pose_factor(FactorKind::Loop, v, t_loop).error;
}

NormalEquations dense_normal_equations(const Graph& graph, std::optional<double> huber_scale) {
  const IndexMap index = index_variables(graph);
  System sys = build_system(graph, index, huber_scale);
  NormalEquations out;
  for (const auto& [id, start] : index) out.order.push_back(id);
  out.hessian = Eigen::MatrixXd(sys.hessian);
  out.gradient = sys.gradient;
  out.objective = sys.objective;
  return out;
}

OptimizeReport optimize(Graph& graph, int max_iterations, double relative_tolerance) {
  OptimizeOptions options;
  options.max_iterations = max_iterations;
  options.relative_tolerance = relative_tolerance;
  return optimize(graph, options);
}

OptimizeReport optimize(Graph& graph, const OptimizeOptions& options) {
  if (options.max_iterations < 1) throw std::invalid_argument("optimize: max_iterations < 1");
  validate_information(graph);

  const IndexMap index = index_variables(graph);
  System sys = build_system(graph, index, options.huber_scale);
  OptimizeReport report;
  report.initial_objective = sys.objective;
  report.final_objective = sys.objective;
  report.objective_trace.push_back(sys.objective);
  if (!std::isfinite(sys.objective)) throw NumericalError("objective is not finite");
  check_rank(sys.hessian, index);

  const bool dense = graph.variable_count() < options.dense_threshold;
  Eigen::SimplicialLDLT<SparseMatrix> sparse_solver;

  double lambda = options.initial_lambda;
  report.termination = Termination::MaxIterations;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (sys.gradient.size() == 0 ||
        sys.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      report.termination = Termination::Converged;
      break;
    }
    ++report.iterations;
    Eigen::VectorXd step;
    bool solved = false;
    if (dense) {
      Eigen::MatrixXd h(sys.hessian);
      h.diagonal() += lambda * h.diagonal();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(-sys.gradient);
        solved = step.allFinite();
      }
    } else {
      SparseMatrix h = sys.hessian;
      for (Eigen::Index i = 0; i < h.rows(); ++i) h.coeffRef(i, i) *= 1.0 + lambda;
      h.makeCompressed();
      sparse_solver.compute(h);
      if (sparse_solver.info() == Eigen::Success) {
        step = sparse_solver.solve(-sys.gradient);
        solved = step.allFinite();
      }
    }
    if (solved) {
      Graph candidate = retracted(graph, index, step);
      double cost = std::numeric_limits<double>::infinity();
      try {
        cost = candidate.objective(options.huber_scale);
      } catch (const DegenerateRotation&) {
      }
      if (std::isfinite(cost) && cost <= sys.objective) {
        const double previous = sys.objective;
        graph = std::move(candidate);
        sys = build_system(graph, index, options.huber_scale);
        report.objective_trace.push_back(sys.objective);
        lambda = std::max(lambda / 10.0, 1e-12);
        const double decrease = previous - sys.objective;
        if (decrease <= options.relative_tolerance * std::max(previous, 1e-300)) {
          report.termination = Termination::Converged;
          break;
        }
        continue;
      }
    }
    lambda *= 10.0;
    if (lambda > kMaxLambda) {
      report.termination = Termination::Stalled;
      break;
    }
  }
  report.final_objective = sys.objective;
  return report;
}

MarginalizationReport marginalize(Graph& graph, const std::set<VariableId>& victims,
                                  std::optional<double> huber_scale) {
  MarginalizationReport report;
  for (const VariableId& id : victims) {
    if (!graph.has_variable(id)) throw InvalidGraph("cannot marginalize unknown " + id.str());
  }
  if (victims.empty()) return report;

  std::vector<const Factor*> absorbed;
  std::set<VariableId> blanket;
  for (const Factor& f : graph.factors()) {
    const bool touches = std::any_of(f.variables.begin(), f.variables.end(),
                                     [&](const VariableId& v) { return victims.contains(v); });
    if (!touches) continue;
    absorbed.push_back(&f);
    for (const VariableId& v : f.variables) {
      if (!victims.contains(v)) blanket.insert(v);
    }
  }
  report.absorbed_factors = absorbed.size();
  report.blanket.assign(blanket.begin(), blanket.end());

  // Local ordering: blanket first, then victims.
  IndexMap local;
  Eigen::Index next = 0;
  for (const VariableId& id : blanket) {
    local.emplace(id, next);
    next += 6;
  }
  const Eigen::Index nb = next;
  for (const VariableId& id : victims) {
    local.emplace(id, next);
    next += 6;
  }
  const Eigen::Index nv = next - nb;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(next, next);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(next);
  for (const Factor* f : absorbed) {
    const Linearized lin = linearize_factor(*f, graph);
    if (lin.error.size() == 0) continue;
    const double w = robust_weight(lin.error.squaredNorm(), huber_scale);
    for (std::size_t a = 0; a < f->variables.size(); ++a) {
      const Eigen::Index ia = local.at(f->variables[a]);
      g.segment<6>(ia) += w * lin.jacobians[a].transpose() * lin.error;
      for (std::size_t b = 0; b < f->variables.size(); ++b) {
        const Eigen::Index ib = local.at(f->variables[b]);
        h.block<6, 6>(ia, ib) += w * lin.jacobians[a].transpose() * lin.jacobians[b];
      }
    }
  }

  std::vector<Pose> linearization_points;
  for (const VariableId& id : blanket) linearization_points.push_back(graph.value(id));

  Eigen::MatrixXd hvv = h.bottomRightCorner(nv, nv);
  Eigen::LLT<Eigen::MatrixXd> llt(hvv);
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const Eigen::VectorXd d = llt.matrixLLT().diagonal();
    singular = d.minCoeff() <= std::sqrt(kPivotRatio) * std::sqrt(hvv.diagonal().maxCoeff());
  }
  if (singular) {
    report.damped = true;
    report.damping = kSchurDamping;
    hvv.diagonal().array() += kSchurDamping;
    llt.compute(hvv);
  }

  graph.erase(victims);
  if (blanket.empty()) return report;

  const Eigen::MatrixXd hbv = h.topRightCorner(nb, nv);
  const Eigen::MatrixXd solved = llt.solve(hbv.transpose());
  Eigen::MatrixXd schur = h.topLeftCorner(nb, nb) - hbv * solved;
  schur = 0.5 * (schur + schur.transpose());
  const Eigen::VectorXd gschur = g.head(nb) - solved.transpose() * g.tail(nv);
  graph.add_factor(Factor::marginal_prior(report.blanket, std::move(linearization_points), schur,
                                          gschur));
  return report;
}

}  // namespace slot
