#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "slot/factor_graph.hpp"
#include "support.hpp"

namespace slot {
namespace {

Matrix6 info(double v) { return v * Matrix6::Identity(); }

TEST(Residuals, ZeroOnConsistentInputs) {
  const Pose t = Pose::from_xyz_yaw(3.0, -1.0, 0.2, 0.8);
  EXPECT_LT(residual_odometry(Pose::identity(), t, t).norm(), 1e-15);
  EXPECT_LT(residual_loop(Pose::identity(), t, t).norm(), 1e-15);
  EXPECT_LT(residual_observation(Pose::identity(), t, t).norm(), 1e-15);
  const Pose x = Pose::from_xyz_yaw(10, 5, 0, -0.4);
  EXPECT_LT(residual_observation(x, x * t, t).norm(), 1e-14);
  EXPECT_TRUE(residual_motion(t, t, Pose::identity()).isZero(0.0));
  EXPECT_TRUE(residual_const_velocity(t, t).isZero(0.0));
  const Pose b1 = Pose::from_xyz_yaw(4, 1, 0, 0.3);
  EXPECT_LT(residual_motion(t, b1, between(t, b1)).norm(), 1e-14);
}

TEST(Residuals, OdometryErrorIsLogOfMismatch) {
  const Pose meas = Pose::from_translation(1.0, 0.0, 0.0);
  const Pose cur = Pose::from_translation(1.5, 0.0, 0.0);
  const Twist e = residual_odometry(Pose::identity(), cur, meas);
  EXPECT_NEAR(e[3], 0.5, 1e-15);
  EXPECT_NEAR(e.head<3>().norm() + e.tail<2>().norm(), 0.0, 1e-15);
}

TEST(Residuals, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const Pose a = testing::random_pose(rng);
    const Pose b = testing::random_pose(rng);
    const Pose m = between(a, b) * exp_map(testing::random_twist(rng, 0.4));
    for (FactorKind kind : {FactorKind::Odometry, FactorKind::Observation, FactorKind::Loop}) {
      const std::vector<Pose> v{a, b};
      const PoseResidual r = linearize_pose_factor(kind, v, m);
      const auto num = testing::numeric_jacobians(kind, v, m);
      for (int j = 0; j < 2; ++j) EXPECT_LT(testing::relative_error(r.jacobians[j], num[j]), 1e-5);
    }
    const std::vector<Pose> mv{a, b, m};
    const PoseResidual rm = linearize_pose_factor(FactorKind::Motion, mv, std::nullopt);
    const auto nm = testing::numeric_jacobians(FactorKind::Motion, mv, std::nullopt);
    for (int j = 0; j < 3; ++j) EXPECT_LT(testing::relative_error(rm.jacobians[j], nm[j]), 1e-5);
    const std::vector<Pose> cv{m, m * exp_map(testing::random_twist(rng, 0.3))};
    const PoseResidual rc = linearize_pose_factor(FactorKind::ConstVelocity, cv, std::nullopt);
    const auto nc = testing::numeric_jacobians(FactorKind::ConstVelocity, cv, std::nullopt);
    for (int j = 0; j < 2; ++j) EXPECT_LT(testing::relative_error(rc.jacobians[j], nc[j]), 1e-5);
  }
}

TEST(Residuals, WrongArityThrows) {
  const std::vector<Pose> one{Pose::identity()};
  EXPECT_THROW(linearize_pose_factor(FactorKind::Odometry, one, Pose::identity()), InvalidGraph);
}

TEST(Graph, RejectsUnknownAndDuplicateVariables) {
  Graph g;
  g.add_variable(VariableId::ego(0), Pose::identity());
  EXPECT_THROW(g.add_variable(VariableId::ego(0), Pose::identity()), InvalidGraph);
  EXPECT_THROW(g.add_factor(Factor::odometry(0, 1, Pose::identity(), info(1))), InvalidGraph);
  EXPECT_THROW(g.value(VariableId::ego(3)), InvalidGraph);
  EXPECT_THROW(g.add_variable(VariableId{VariableKind::ObjectPose, 1, std::nullopt},
                              Pose::identity()),
               InvalidGraph);
}

TEST(Graph, VariableIdOrderingAndNames) {
  EXPECT_LT(VariableId::ego(1), VariableId::ego(2));
  EXPECT_EQ(VariableId::ego(4).str(), "X4");
  EXPECT_EQ(VariableId::object_pose(5, 2).str(), "B5:2");
  EXPECT_EQ(VariableId::object_motion(5, 2).str(), "C5:2");
  EXPECT_FALSE(VariableId::object_motion(1, 1).is_pose());
}

// Translation-only chain with a loop: the problem is linear and its optimum
// is x1 = 16/15, x2 = 32/15 (normal equations 2x1 - x2 = 0, 2x2 - x1 = 3.2).
Graph linear_chain() {
  Graph g;
  g.add_variable(VariableId::ego(0), Pose::identity());
  g.add_variable(VariableId::ego(1), Pose::from_translation(0.5, 0.3, 0));
  g.add_variable(VariableId::ego(2), Pose::from_translation(3.0, -0.2, 0));
  g.add_factor(Factor::anchor(VariableId::ego(0), Pose::identity(), 1e8));
  g.add_factor(Factor::odometry(0, 1, Pose::from_translation(1, 0, 0), info(1)));
  g.add_factor(Factor::odometry(1, 2, Pose::from_translation(1, 0, 0), info(1)));
  g.add_factor(Factor::loop(0, 2, Pose::from_translation(2.2, 0, 0), info(1)));
  return g;
}

TEST(Optimize, SolvesLinearChainToClosedForm) {
  Graph g = linear_chain();
  const OptimizeReport report = optimize(g);
  EXPECT_EQ(report.termination, Termination::Converged);
  EXPECT_NEAR(g.value(VariableId::ego(1)).translation().x(), 16.0 / 15.0, 1e-7);
  EXPECT_NEAR(g.value(VariableId::ego(2)).translation().x(), 32.0 / 15.0, 1e-7);
  EXPECT_NEAR(g.value(VariableId::ego(2)).translation().y(), 0.0, 1e-7);
  // Residuals: (1/15, 1/15, -1/15) each squared.
  EXPECT_NEAR(report.final_objective, 3.0 / 225.0, 1e-9);
  for (std::size_t i = 1; i < report.objective_trace.size(); ++i) {
    EXPECT_LE(report.objective_trace[i], report.objective_trace[i - 1]);
  }
}

TEST(Optimize, SparseAndDensePathsAgree) {
  Graph dense;
  Graph sparse;
  std::mt19937_64 rng(8);
  for (Graph* g : {&dense, &sparse}) {
    rng.seed(8);
    Pose x = Pose::identity();
    g->add_variable(VariableId::ego(0), x);
    g->add_factor(Factor::anchor(VariableId::ego(0), x, 1e8));
    for (int f = 1; f < 80; ++f) {
      const Pose step = Pose::from_xyz_yaw(1.0, 0.0, 0.0, 0.05);
      x = x * step * exp_map(testing::random_twist(rng, 0.01));
      g->add_variable(VariableId::ego(f), x);
      g->add_factor(Factor::odometry(f - 1, f, step, info(100)));
    }
    g->add_factor(Factor::loop(0, 79, Pose::from_xyz_yaw(20, 30, 0, 1.0), info(10)));
  }
  OptimizeOptions d;
  d.dense_threshold = 1000;
  OptimizeOptions s;
  s.dense_threshold = 1;
  optimize(dense, d);
  optimize(sparse, s);
  for (const auto& [id, pose] : dense.values()) {
    EXPECT_TRUE(pose.is_approx(sparse.value(id), 1e-6)) << id.str();
  }
}

TEST(Optimize, NegativeInformationIsRejected) {
  Graph g = linear_chain();
  Matrix6 bad = info(1);
  bad(3, 3) = -1.0;
  g.add_factor(Factor::odometry(0, 1, Pose::identity(), bad));
  EXPECT_THROW(optimize(g), NonPsdInformation);
}

TEST(Optimize, UnanchoredGraphIsRankDeficient) {
  Graph g;
  g.add_variable(VariableId::ego(0), Pose::identity());
  g.add_variable(VariableId::ego(1), Pose::identity());
  g.add_factor(Factor::odometry(0, 1, Pose::from_translation(1, 0, 0), info(1)));
  try {
    optimize(g);
    FAIL() << "expected RankDeficient";
  } catch (const RankDeficient& e) {
    EXPECT_FALSE(e.variables().empty());
  }
}

TEST(Optimize, HuberDownweightsOutlier) {
  Graph g = linear_chain();
  g.add_factor(Factor::loop(0, 2, Pose::from_translation(50, 0, 0), info(1)));
  Graph robust = g;
  optimize(g);
  OptimizeOptions o;
  o.huber_scale = 1.0;
  optimize(robust, o);
  const double plain = g.value(VariableId::ego(2)).translation().x();
  const double huber = robust.value(VariableId::ego(2)).translation().x();
  EXPECT_GT(plain, 10.0);
  EXPECT_LT(huber, plain);
  EXPECT_LT(g.objective(1.0), g.objective());
}

TEST(Marginalize, PriorCarriesMarginalInformation) {
  Graph g = linear_chain();
  optimize(g);
  // Oracle: the marginal information of x1..x2 is the inverse of their
  // covariance block in the full system.
  const NormalEquations full = dense_normal_equations(g);
  const Eigen::MatrixXd cov = Eigen::MatrixXd(full.hessian).inverse();
  const Eigen::MatrixXd expected = cov.bottomRightCorner(12, 12).inverse();

  Graph m = g;
  const MarginalizationReport report = marginalize(m, {VariableId::ego(0)});
  EXPECT_EQ(report.blanket.size(), 2u);
  EXPECT_EQ(report.absorbed_factors, 3u);
  EXPECT_FALSE(report.damped);
  const NormalEquations reduced = dense_normal_equations(m);
  EXPECT_LT(testing::relative_error(reduced.hessian, expected), 1e-6);
}

TEST(Marginalize, ReoptimizingKeepsTheOptimum) {
  Graph g = linear_chain();
  optimize(g);
  Graph m = g;
  marginalize(m, {VariableId::ego(1)});
  EXPECT_FALSE(m.has_variable(VariableId::ego(1)));
  optimize(m);
  for (int f : {0, 2}) {
    EXPECT_TRUE(m.value(VariableId::ego(f)).is_approx(g.value(VariableId::ego(f)), 1e-8));
  }
}

TEST(Marginalize, NonlinearChainMatchesBatch) {
  std::mt19937_64 rng(9);
  Graph batch;
  Pose x = Pose::identity();
  batch.add_variable(VariableId::ego(0), x);
  batch.add_factor(Factor::anchor(VariableId::ego(0), x, 1e8));
  std::vector<Pose> odo;
  for (int f = 1; f < 12; ++f) {
    const Pose step = Pose::from_xyz_yaw(1.0, 0.1, 0.0, 0.2) * exp_map(testing::random_twist(rng, 0.05));
    x = x * step;
    batch.add_variable(VariableId::ego(f), x * exp_map(testing::random_twist(rng, 0.1)));
    batch.add_factor(Factor::odometry(f - 1, f, step, info(100)));
  }
  batch.add_factor(Factor::loop(0, 11, between(Pose::identity(), x) *
                                           exp_map(testing::random_twist(rng, 0.05)),
                                info(50)));
  Graph window = batch;
  optimize(batch);
  optimize(window);
  marginalize(window, {VariableId::ego(0), VariableId::ego(1)});
  optimize(window);
  for (const auto& [id, pose] : window.values()) {
    EXPECT_TRUE(pose.is_approx(batch.value(id), 1e-8)) << id.str();
  }
}

TEST(Marginalize, UnknownVictimThrows) {
  Graph g = linear_chain();
  EXPECT_THROW(marginalize(g, {VariableId::ego(7)}), InvalidGraph);
}

TEST(Graph, RigidCorrectionLeavesObjectiveUnchanged) {
  Graph g = linear_chain();
  optimize(g);
  marginalize(g, {VariableId::ego(0)});
  const double before = g.objective();
  g.apply_rigid_correction(Pose::from_xyz_yaw(5, -3, 1, 0.7));
  EXPECT_NEAR(g.objective(), before, 1e-9);
}

TEST(Graph, DumpWritesOneLinePerFactor) {
  const Graph g = linear_chain();
  std::ostringstream os;
  g.dump(os);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_NE(text.find("odometry"), std::string::npos);
}

}  // namespace
}  // namespace slot
