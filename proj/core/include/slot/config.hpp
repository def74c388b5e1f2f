#pragma once

#include <filesystem>
#include <string>

#include "slot/backend.hpp"

namespace slot {

// Run configuration document (JSON). Every key is optional; missing keys keep
// the BackendConfig defaults.
//
// {
//   "window_size": 10, "init_threshold": 5,
//   "gate_initialized": 1.5, "gate_uninitialized": 3.0,
//   "stationary_speed": 0.1, "max_misses": 1, "frame_period": 0.1,
//   "information": {
//     "odometry": {"rotation": 100, "translation": 100},
//     "observation": {...}, "motion": {...}, "const_velocity": {...},
//     "loop": {...}, "anchor": 1e8, "supplementary_weight": 0.25
//   },
//   "solver": {"max_iterations": 50, "relative_tolerance": 1e-9,
//              "gradient_tolerance": 1e-10, "initial_lambda": 1e-4,
//              "huber_scale": null, "dense_threshold": 60}
// }
BackendConfig config_from_json(const std::string& text);
std::string config_to_json(const BackendConfig& config);
BackendConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const BackendConfig& config);

}  // namespace slot
