#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "slot/association.hpp"

namespace slot {
namespace {

std::vector<TrajectorySample> samples(const std::function<double(double)>& x, int first, int last) {
  std::vector<TrajectorySample> out;
  for (int f = first; f <= last; ++f) out.push_back({f, x(f - last), 0.0});
  return out;
}

Track track_with_history(int id, const std::vector<Vector3>& positions, int last_frame,
                         const AssociationParams& params) {
  Track t;
  t.id = id;
  const int first = last_frame - static_cast<int>(positions.size()) + 1;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    t.history.push_back({first + static_cast<int>(i), Pose(Matrix3::Identity(), positions[i]), false});
  }
  t.initialized = static_cast<int>(positions.size()) > params.init_threshold;
  std::vector<TrajectorySample> s;
  for (const TrackPoint& p : t.history) {
    s.push_back({p.frame, p.world_pose.translation().x(), p.world_pose.translation().y()});
  }
  if (s.size() >= 2) t.fit = fit_trajectory(s);
  return t;
}

Detection detection_at(double x, double y, ObjectClass c = ObjectClass::Vehicle) {
  Detection d;
  d.local_position = Vector3(x, y, 0.0);
  d.object_class = c;
  d.world_pose = d.local_pose();
  return d;
}

TEST(Fit, ExactCubicRecoversCoefficients) {
  const auto s = samples([](double t) { return t * t * t; }, 0, 5);
  const TrajectoryFit fit = fit_trajectory(s);
  const std::array<double, 4> expected{1.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit.x.coeffs[i], expected[i], 1e-10);
}

TEST(Fit, PredictsGeneratingCubicOneStepAhead) {
  auto x = [](double t) { return 0.5 * t * t * t - 2.0 * t * t + 3.0 * t + 7.0; };
  const TrajectoryFit fit = fit_trajectory(samples(x, 10, 18));
  EXPECT_NEAR(fit.x(1.0), x(1.0), 1e-9);
}

TEST(Fit, ShortHistoriesDropDegree) {
  const TrajectoryFit two = fit_trajectory(samples([](double t) { return 2.0 * t + 1.0; }, 0, 1));
  EXPECT_NEAR(two.x(1.0), 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(two.x.coeffs[0], 0.0);
  EXPECT_DOUBLE_EQ(two.x.coeffs[1], 0.0);
  EXPECT_THROW(fit_trajectory(samples([](double) { return 0.0; }, 0, 0)), InsufficientHistory);
}

TEST(Predict, ConstantPositionAndLinearExtrapolation) {
  AssociationParams params;
  const Track still = track_with_history(0, std::vector<Vector3>(7, Vector3(4, -2, 0)), 10, params);
  EXPECT_TRUE(predict_position(still, 11).isApprox(Eigen::Vector2d(4, -2), 1e-12));
  std::vector<Vector3> line;
  for (int i = 4; i <= 10; ++i) line.emplace_back(i, 0, 0);
  const Track moving = track_with_history(1, line, 10, params);
  EXPECT_NEAR(predict_position(moving, 11).x(), 11.0, 1e-9);
}

TEST(Predict, UninitializedTrackRefusesPolynomial) {
  AssociationParams params;
  const Track young = track_with_history(0, {Vector3(0, 0, 0), Vector3(1, 0, 0)}, 1, params);
  EXPECT_THROW(predict_position(young, 2), UninitializedTrack);
  EXPECT_TRUE(expected_position(young, 2, params).isApprox(Eigen::Vector2d(1, 0)));
}

TEST(Predict, BaselineModes) {
  AssociationParams params;
  std::vector<Vector3> line;
  for (int i = 0; i < 7; ++i) line.emplace_back(2.0 * i, 0, 0);
  const Track t = track_with_history(0, line, 6, params);
  params.prediction = PredictionMode::LastPosition;
  EXPECT_TRUE(expected_position(t, 7, params).isApprox(Eigen::Vector2d(12, 0)));
  params.prediction = PredictionMode::ConstantVelocity;
  EXPECT_TRUE(expected_position(t, 7, params).isApprox(Eigen::Vector2d(14, 0)));
}

TEST(Score, FollowsGateRatio) {
  AssociationParams params;
  const Track t = track_with_history(0, std::vector<Vector3>(7, Vector3(0, 0, 0)), 6, params);
  // Initialized: A = 1.5, distance 0.75 -> 0.5.
  EXPECT_NEAR(match_score(t, detection_at(0.75, 0.0), 7, params), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(match_score(t, detection_at(1.5, 0.0), 7, params), 0.0);
  EXPECT_DOUBLE_EQ(match_score(t, detection_at(0.1, 0.0, ObjectClass::Cyclist), 7, params), 0.0);
  // Uninitialized: A = 3.
  const Track young = track_with_history(1, {Vector3(0, 0, 0)}, 6, params);
  EXPECT_NEAR(match_score(young, detection_at(0.0, 1.5), 7, params), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(match_score(young, detection_at(0.0, 3.0), 7, params), 0.0);
}

TEST(Score, MatrixRowsFollowTracks) {
  AssociationParams params;
  std::vector<Track> tracks{track_with_history(4, {Vector3(0, 0, 0)}, 0, params),
                            track_with_history(9, {Vector3(10, 0, 0)}, 0, params)};
  const std::vector<Detection> dets{detection_at(10.3, 0), detection_at(0.3, 0), detection_at(50, 0)};
  const ScoreMatrix m = build_score_matrix(tracks, dets, 1, params);
  ASSERT_EQ(m.scores.rows(), 2);
  ASSERT_EQ(m.scores.cols(), 3);
  EXPECT_EQ(m.track_ids, (std::vector<int>{4, 9}));
  EXPECT_NEAR(m.scores(0, 1), 0.9, 1e-12);
  EXPECT_NEAR(m.scores(1, 0), 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(m.scores(0, 2), 0.0);
}

double brute(const Eigen::MatrixXd& s, int row, std::vector<bool>& used) {
  if (row == s.rows()) return 0.0;
  double best = brute(s, row + 1, used);
  for (int c = 0; c < s.cols(); ++c) {
    if (used[c] || s(row, c) <= 0.0) continue;
    used[c] = true;
    best = std::max(best, s(row, c) + brute(s, row + 1, used));
    used[c] = false;
  }
  return best;
}

TEST(Assignment, MatchesBruteForceOnContinuousScores) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_real_distribution<double> u(-0.3, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::MatrixXd s(dim(rng), dim(rng));
    for (int i = 0; i < s.size(); ++i) s.data()[i] = std::max(0.0, u(rng));
    const auto pairs = solve_assignment(s);
    double total = 0.0;
    std::vector<bool> rows(s.rows(), false);
    std::vector<bool> cols(s.cols(), false);
    for (const auto& [r, c] : pairs) {
      EXPECT_GT(s(r, c), 0.0);
      EXPECT_FALSE(rows[r] || cols[c]);
      rows[r] = cols[c] = true;
      total += s(r, c);
    }
    std::vector<bool> used(s.cols(), false);
    EXPECT_NEAR(total, brute(s, 0, used), 1e-12);
  }
}

TEST(Assignment, PrefersGlobalOptimumOverGreedy) {
  Eigen::MatrixXd s(2, 2);
  s << 0.9, 0.8, 0.7, 0.0;
  const auto pairs = solve_assignment(s);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], std::make_pair(0, 1));
  EXPECT_EQ(pairs[1], std::make_pair(1, 0));
}

TEST(Assignment, EmptyInputs) {
  EXPECT_TRUE(solve_assignment(Eigen::MatrixXd(0, 3)).empty());
  EXPECT_TRUE(solve_assignment(Eigen::MatrixXd::Zero(3, 3)).empty());
}

TEST(Tracker, InitializesAfterThresholdAndKeepsIds) {
  Tracker tracker;
  for (int f = 0; f < 12; ++f) {
    const TrackUpdate u = tracker.step({detection_at(f * 1.0, 0.0), detection_at(20.0, 5.0)}, f,
                                       Pose::identity());
    ASSERT_EQ(u.observations.size(), 2u);
    EXPECT_EQ(u.observations[0].track_id, 0);
    EXPECT_EQ(u.observations[1].track_id, 1);
    ASSERT_EQ(tracker.tracks().size(), 2u);
    // Initialized once the history holds more than five detections.
    EXPECT_EQ(tracker.tracks()[0].initialized, f >= 5);
    EXPECT_LE(tracker.tracks()[0].history.size(), 9u);
  }
}

TEST(Tracker, OneMissIsSupplementedTwoMissesTerminate) {
  Tracker tracker;
  for (int f = 0; f < 8; ++f) tracker.step({detection_at(f * 1.0, 0.0)}, f, Pose::identity());
  TrackUpdate miss = tracker.step({}, 8, Pose::identity());
  ASSERT_EQ(miss.supplementary.size(), 1u);
  EXPECT_NEAR(miss.supplementary[0].world_pose.translation().x(), 8.0, 1e-9);
  EXPECT_TRUE(miss.supplementary[0].supplementary);
  EXPECT_TRUE(miss.terminated.empty());
  TrackUpdate second = tracker.step({}, 9, Pose::identity());
  EXPECT_TRUE(second.supplementary.empty());
  EXPECT_EQ(second.terminated, std::vector<int>{0});
  EXPECT_TRUE(tracker.tracks().empty());
}

TEST(Tracker, UninitializedTrackDiesOnFirstMiss) {
  Tracker tracker;
  tracker.step({detection_at(0.0, 0.0)}, 0, Pose::identity());
  const TrackUpdate u = tracker.step({}, 1, Pose::identity());
  EXPECT_TRUE(u.supplementary.empty());
  EXPECT_EQ(u.terminated, std::vector<int>{0});
}

TEST(Tracker, DetectionsAreLiftedIntoTheWorldFrame) {
  Tracker tracker;
  const Pose ego = Pose::from_xyz_yaw(10, 0, 0, std::numbers::pi / 2);
  const TrackUpdate u = tracker.step({detection_at(2.0, 0.0)}, 0, ego);
  EXPECT_TRUE(u.observations[0].detection.world_pose.translation().isApprox(Vector3(10, 2, 0)));
}

TEST(Status, StationaryBelowThresholdDynamicAtIt) {
  AssociationParams params;
  Track still = track_with_history(0, std::vector<Vector3>(7, Vector3(3, 3, 0)), 6, params);
  EXPECT_EQ(classify_motion_status(still, params), MotionStatus::Stationary);

  // Exactly at the threshold is Dynamic: 0.25 m per 0.5 s frame vs 0.5 m/s.
  params.frame_period = 0.5;
  params.stationary_speed = 0.5;
  Track edge = still;
  edge.motion_translations.assign(6, Vector3(0.25, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(estimate_speed(edge, params), 0.5);
  EXPECT_EQ(classify_motion_status(edge, params), MotionStatus::Dynamic);

  Track young = track_with_history(1, {Vector3(0, 0, 0)}, 0, params);
  EXPECT_EQ(classify_motion_status(young, params), MotionStatus::Unknown);
}

TEST(Status, HistorySlopeWithoutMotionNodes) {
  AssociationParams params;
  std::vector<Vector3> line;
  for (int i = 0; i < 7; ++i) line.emplace_back(0.3 * i, 0.4 * i, 0);
  const Track t = track_with_history(0, line, 6, params);
  EXPECT_NEAR(estimate_speed(t, params), 5.0, 1e-9);
}

TEST(Names, RoundTrip) {
  for (ObjectClass c : {ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Cyclist}) {
    EXPECT_EQ(object_class_from_string(to_string(c)), c);
  }
  for (MotionStatus s : {MotionStatus::Unknown, MotionStatus::Dynamic, MotionStatus::Stationary}) {
    EXPECT_EQ(motion_status_from_string(to_string(s)), s);
  }
  EXPECT_THROW(object_class_from_string("Truck"), std::invalid_argument);
}

}  // namespace
}  // namespace slot
