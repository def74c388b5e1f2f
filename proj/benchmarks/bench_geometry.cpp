#include <random>

#include <benchmark/benchmark.h>

#include "slot/association.hpp"
#include "slot/factor_graph.hpp"
#include "slot/geometry.hpp"

namespace {

slot::Twist twist(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  slot::Twist v;
  for (int i = 0; i < 6; ++i) v[i] = u(rng);
  return v;
}

void BM_ExpLog(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const slot::Twist v = twist(rng);
  for (auto _ : state) benchmark::DoNotOptimize(slot::log_map(slot::exp_map(v)));
}
BENCHMARK(BM_ExpLog);

void BM_RightJacobianInverse(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const slot::Twist v = twist(rng);
  for (auto _ : state) benchmark::DoNotOptimize(slot::se3_right_jacobian_inverse(v));
}
BENCHMARK(BM_RightJacobianInverse);

void BM_LinearizeMotionFactor(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const std::vector<slot::Pose> values{slot::exp_map(twist(rng)), slot::exp_map(twist(rng)),
                                       slot::exp_map(twist(rng))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        slot::linearize_pose_factor(slot::FactorKind::Motion, values, std::nullopt));
  }
}
BENCHMARK(BM_LinearizeMotionFactor);

void BM_Assignment(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 1.0);
  Eigen::MatrixXd scores(n, n);
  for (int i = 0; i < scores.size(); ++i) scores.data()[i] = std::max(0.0, u(rng));
  for (auto _ : state) benchmark::DoNotOptimize(slot::solve_assignment(scores));
}
BENCHMARK(BM_Assignment)->Arg(5)->Arg(10)->Arg(20)->Arg(40);

}  // namespace
