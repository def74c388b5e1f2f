#include "slot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"

namespace slot {

namespace {

using nlohmann::json;

double rotation_angle(const Matrix3& r) {
  const Matrix3 a = r - r.transpose();
  const double s = 0.5 * Vector3(a(2, 1), a(0, 2), a(1, 0)).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

// Records of one frame, sorted by track id so results do not depend on the
// order records arrive in.
std::map<int, std::vector<TrackRecord>> by_frame(std::span<const TrackRecord> records) {
  std::map<int, std::vector<TrackRecord>> out;
  for (const TrackRecord& r : records) out[r.frame].push_back(r);
  for (auto& [frame, list] : out) {
    std::stable_sort(list.begin(), list.end(), [](const TrackRecord& a, const TrackRecord& b) {
      return a.track_id < b.track_id;
    });
  }
  return out;
}

std::vector<Vector3> positions(const std::vector<TrackRecord>& records) {
  std::vector<Vector3> out;
  out.reserve(records.size());
  for (const TrackRecord& r : records) out.push_back(r.world_pose.translation());
  return out;
}

// Calls fn(frame, est records, gt records, matches) for every frame present
// in either input.
template <typename Fn>
void for_each_frame(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                    double threshold, Fn&& fn) {
  if (!(threshold > 0.0)) throw std::invalid_argument("distance threshold must be > 0");
  const auto est = by_frame(estimate);
  const auto gt = by_frame(truth);
  std::set<int> frames;
  for (const auto& [f, l] : est) frames.insert(f);
  for (const auto& [f, l] : gt) frames.insert(f);
  static const std::vector<TrackRecord> empty;
  for (int f : frames) {
    const auto e = est.find(f);
    const auto g = gt.find(f);
    const auto& el = e == est.end() ? empty : e->second;
    const auto& gl = g == gt.end() ? empty : g->second;
    const auto ep = positions(el);
    const auto gp = positions(gl);
    fn(f, el, gl, greedy_match(ep, gp, threshold));
  }
}

}  // namespace

AteResult ate_rmse(std::span<const Pose> estimate, std::span<const Pose> truth) {
  if (estimate.size() != truth.size()) {
    throw std::invalid_argument("trajectory lengths differ: " + std::to_string(estimate.size()) +
                                " vs " + std::to_string(truth.size()));
  }
  AteResult out;
  if (estimate.empty()) return out;
  double t2 = 0.0;
  double r2 = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    t2 += (estimate[i].translation() - truth[i].translation()).squaredNorm();
    const double angle = rotation_angle(truth[i].rotation().transpose() * estimate[i].rotation());
    r2 += angle * angle;
  }
  const auto n = static_cast<double>(estimate.size());
  out.translation = std::sqrt(t2 / n);
  out.rotation = std::sqrt(r2 / n);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const Vector3> estimate,
                                                              std::span<const Vector3> truth,
                                                              double threshold) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double d = (estimate[i] - truth[j]).norm();
      if (d <= threshold) candidates.emplace_back(d, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> est_used(estimate.size(), false);
  std::vector<bool> gt_used(truth.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [d, i, j] : candidates) {
    if (est_used[i] || gt_used[j]) continue;
    est_used[i] = true;
    gt_used[j] = true;
    out.emplace_back(i, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double PrCounts::precision() const {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double PrCounts::recall() const {
  return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

PrCounts match_counts(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                      double threshold) {
  PrCounts c;
  for_each_frame(estimate, truth, threshold, [&](int, const auto& e, const auto& g, const auto& m) {
    const auto matched = static_cast<long>(m.size());
    c.tp += matched;
    c.fp += static_cast<long>(e.size()) - matched;
    c.fn += static_cast<long>(g.size()) - matched;
  });
  return c;
}

TrackingPr tracking_pr(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                       double threshold) {
  std::vector<TrackRecord> detector;
  for (const TrackRecord& r : estimate) {
    if (!r.supplementary) detector.push_back(r);
  }
  return {match_counts(detector, truth, threshold), match_counts(estimate, truth, threshold)};
}

double MotaCounts::mota() const {
  if (ground_truth == 0) throw EmptyGroundTruth("MOTA undefined without ground truth");
  return 1.0 - static_cast<double>(false_negatives + false_positives + id_switches) /
                   static_cast<double>(ground_truth);
}

MotaCounts mota_counts(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
                       double threshold) {
  if (truth.empty()) throw EmptyGroundTruth("MOTA undefined without ground truth");
  MotaCounts c;
  std::map<int, int> last_track;  // gt id -> track id at its last matched frame
  for_each_frame(estimate, truth, threshold, [&](int, const auto& e, const auto& g, const auto& m) {
    const auto matched = static_cast<long>(m.size());
    c.ground_truth += static_cast<long>(g.size());
    c.false_positives += static_cast<long>(e.size()) - matched;
    c.false_negatives += static_cast<long>(g.size()) - matched;
    for (const auto& [i, j] : m) {
      const int gt_id = g[j].track_id;
      const int track_id = e[i].track_id;
      auto it = last_track.find(gt_id);
      if (it != last_track.end() && it->second != track_id) ++c.id_switches;
      last_track[gt_id] = track_id;
    }
  });
  return c;
}

double mota(std::span<const TrackRecord> estimate, std::span<const TrackRecord> truth,
            double threshold) {
  return mota_counts(estimate, truth, threshold).mota();
}

double average_speed_kmh(std::span<const std::pair<int, Vector3>> samples, double frame_period) {
  if (samples.size() < 2 || samples.back().first == samples.front().first) {
    throw InsufficientFrames("average speed needs at least two frames");
  }
  double length = 0.0;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    length += (samples[k].second - samples[k - 1].second).norm();
  }
  const double seconds = (samples.back().first - samples.front().first) * frame_period;
  return length / seconds * 3.6;
}

std::vector<ObjectVelocity> velocity_metrics(std::span<const TrackRecord> estimate,
                                             std::span<const TrackRecord> truth,
                                             double frame_period, double threshold) {
  // (gt id, track id) -> matched (frame, est position, gt position)
  std::map<std::pair<int, int>, std::vector<std::tuple<int, Vector3, Vector3>>> pairs;
  for_each_frame(estimate, truth, threshold, [&](int f, const auto& e, const auto& g, const auto& m) {
    for (const auto& [i, j] : m) {
      pairs[{g[j].track_id, e[i].track_id}].emplace_back(f, e[i].world_pose.translation(),
                                                         g[j].world_pose.translation());
    }
  });
  std::map<int, std::pair<int, std::size_t>> best;  // gt id -> (track id, count)
  for (const auto& [key, list] : pairs) {
    auto it = best.find(key.first);
    if (it == best.end() || list.size() > it->second.second) best[key.first] = {key.second, list.size()};
  }
  std::vector<ObjectVelocity> out;
  for (const auto& [gt_id, choice] : best) {
    const auto& list = pairs.at({gt_id, choice.first});
    if (list.size() < 2) continue;
    std::vector<std::pair<int, Vector3>> est;
    std::vector<std::pair<int, Vector3>> gt;
    double sq = 0.0;
    for (const auto& [f, pe, pg] : list) {
      est.emplace_back(f, pe);
      gt.emplace_back(f, pg);
      sq += (pe - pg).squaredNorm();
    }
    ObjectVelocity v;
    v.truth_id = gt_id;
    v.track_id = choice.first;
    v.frames = static_cast<int>(list.size());
    v.v_true = average_speed_kmh(gt, frame_period);
    v.v_estimate = average_speed_kmh(est, frame_period);
    v.trajectory_rmse = std::sqrt(sq / static_cast<double>(list.size()));
    out.push_back(v);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double iqr(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
}

StageRuntimes summarize_timings(std::span<const FrameTiming> timings) {
  StageRuntimes s;
  if (timings.empty()) return s;
  std::vector<double> totals;
  for (const FrameTiming& t : timings) {
    s.association_ms += t.association_ms;
    s.optimization_ms += t.optimization_ms;
    s.global_ms += t.global_ms;
    totals.push_back(t.association_ms + t.optimization_ms + t.global_ms);
  }
  const auto n = static_cast<double>(timings.size());
  s.association_ms /= n;
  s.optimization_ms /= n;
  s.global_ms /= n;
  s.total_ms = median(std::move(totals));
  return s;
}

MetricsReport evaluate(std::span<const Pose> est_ego, std::span<const Pose> gt_ego,
                       std::span<const TrackRecord> est_tracks,
                       std::span<const TrackRecord> gt_tracks, double threshold,
                       double frame_period) {
  MetricsReport r;
  r.ate = ate_rmse(est_ego, gt_ego);
  r.pr = tracking_pr(est_tracks, gt_tracks, threshold);
  if (!gt_tracks.empty()) r.mota = mota_counts(est_tracks, gt_tracks, threshold);
  r.objects = velocity_metrics(est_tracks, gt_tracks, frame_period, threshold);
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  json objects = json::array();
  for (const ObjectVelocity& v : r.objects) {
    objects.push_back({{"truth_id", v.truth_id},
                       {"track_id", v.track_id},
                       {"frames", v.frames},
                       {"v_true_kmh", v.v_true},
                       {"v_estimate_kmh", v.v_estimate},
                       {"trajectory_rmse", v.trajectory_rmse}});
  }
  json j = {{"ate_trans_rmse", r.ate.translation},
            {"ate_rot_rmse", r.ate.rotation},
            {"det_precision", r.pr.detection.precision()},
            {"det_recall", r.pr.detection.recall()},
            {"trk_precision", r.pr.tracking.precision()},
            {"trk_recall", r.pr.tracking.recall()},
            {"objects", objects}};
  if (r.mota) {
    j["mota"] = r.mota->mota();
    j["mota_counts"] = {{"gt", r.mota->ground_truth},
                        {"fn", r.mota->false_negatives},
                        {"fp", r.mota->false_positives},
                        {"idsw", r.mota->id_switches}};
  } else {
    j["mota"] = nullptr;
  }
  if (r.runtimes) {
    j["runtimes_ms"] = {{"association", r.runtimes->association_ms},
                        {"optimization", r.runtimes->optimization_ms},
                        {"global", r.runtimes->global_ms},
                        {"median_frame_total", r.runtimes->total_ms}};
  }
  return j.dump(2);
}

}  // namespace slot
