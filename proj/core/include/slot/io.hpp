#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "slot/association.hpp"
#include "slot/backend.hpp"
#include "slot/geometry.hpp"

namespace slot {

/// Malformed or inconsistent input file.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StreamHeader {
  double frame_period = 0.1;
  int frame_count = 0;
};

struct FrameRecord {
  int frame = 0;
  Pose odometry;  // T_{t-1}^t; identity on the first frame
  std::vector<Detection> detections;
  std::vector<LoopEvent> loops;  // frame_new == frame
};

struct FrameStream {
  StreamHeader header;
  std::vector<FrameRecord> frames;
};

// Measurement stream: JSON lines. First line
//   {"frame_period": 0.1, "frame_count": N}
// then one line per frame
//   {"frame": t, "odometry": [12], "detections": [{"x","y","z","yaw","class"}],
//    "loops": [{"frame_old": s, "t_meas": [12]}]}
void write_stream(std::ostream& os, const FrameStream& stream);
FrameStream read_stream(std::istream& is);
void write_stream_file(const std::filesystem::path& path, const FrameStream& stream);
FrameStream read_stream_file(const std::filesystem::path& path);

/// Serializes one frame record as a single JSON line (no trailing newline).
std::string frame_record_to_json(const FrameRecord& record);
FrameRecord frame_record_from_json(const std::string& line);

// Trajectories: one line per frame, 12 floats, row-major [R|t].
void write_poses(std::ostream& os, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(std::istream& is);
void write_poses_file(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses_file(const std::filesystem::path& path);

// Track records: JSON lines with frame, track_id, class, x, y, z, yaw, vx,
// vy, vz, status, supplementary.
void write_tracks(std::ostream& os, const std::vector<TrackRecord>& records);
std::vector<TrackRecord> read_tracks(std::istream& is);
void write_tracks_file(const std::filesystem::path& path, const std::vector<TrackRecord>& records);
std::vector<TrackRecord> read_tracks_file(const std::filesystem::path& path);

// Per-frame stage timings as CSV: frame,association_ms,optimization_ms,global_ms
void write_timings_file(const std::filesystem::path& path, const std::vector<FrameTiming>& t);
std::vector<FrameTiming> read_timings_file(const std::filesystem::path& path);

/// Runs every frame (and its loop events) of `stream` through `backend`.
void run_stream(SlotBackend& backend, const FrameStream& stream);

}  // namespace slot
