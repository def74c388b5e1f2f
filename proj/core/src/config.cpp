#include "slot/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "slot/io.hpp"

namespace slot {

namespace {

using nlohmann::json;

void read_information(const json& j, const char* key, DiagonalInformation& out) {
  if (!j.contains(key)) return;
  const json& block = j.at(key);
  out.rotation = block.value("rotation", out.rotation);
  out.translation = block.value("translation", out.translation);
  if (!(out.rotation >= 0.0) || !(out.translation >= 0.0)) {
    throw InvalidInput(std::string("information.") + key + " must be non-negative");
  }
}

json write_information(const DiagonalInformation& info) {
  return {{"rotation", info.rotation}, {"translation", info.translation}};
}

}  // namespace

BackendConfig config_from_json(const std::string& text) {
  BackendConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  try {
    AssociationParams& a = c.association;
    c.window_size = j.value("window_size", c.window_size);
    a.window_size = c.window_size;
    a.init_threshold = j.value("init_threshold", a.init_threshold);
    a.gate_initialized = j.value("gate_initialized", a.gate_initialized);
    a.gate_uninitialized = j.value("gate_uninitialized", a.gate_uninitialized);
    a.stationary_speed = j.value("stationary_speed", a.stationary_speed);
    a.max_misses = j.value("max_misses", a.max_misses);
    a.frame_period = j.value("frame_period", a.frame_period);
    if (j.contains("information")) {
      const json& info = j.at("information");
      read_information(info, "odometry", c.odometry);
      read_information(info, "observation", c.observation);
      read_information(info, "motion", c.motion);
      read_information(info, "const_velocity", c.const_velocity);
      read_information(info, "loop", c.loop);
      c.anchor_information = info.value("anchor", c.anchor_information);
      c.supplementary_weight = info.value("supplementary_weight", c.supplementary_weight);
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
      c.solver.relative_tolerance = s.value("relative_tolerance", c.solver.relative_tolerance);
      c.solver.gradient_tolerance = s.value("gradient_tolerance", c.solver.gradient_tolerance);
      c.solver.initial_lambda = s.value("initial_lambda", c.solver.initial_lambda);
      c.solver.dense_threshold = s.value("dense_threshold", c.solver.dense_threshold);
      if (s.contains("huber_scale") && !s.at("huber_scale").is_null()) {
        c.solver.huber_scale = s.at("huber_scale").get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  if (c.window_size < 2) throw InvalidInput("config: window_size must be >= 2");
  if (c.association.init_threshold < 0) throw InvalidInput("config: init_threshold < 0");
  if (!(c.association.gate_initialized > 0.0) || !(c.association.gate_uninitialized > 0.0)) {
    throw InvalidInput("config: association gates must be > 0");
  }
  if (!(c.association.frame_period > 0.0)) throw InvalidInput("config: frame_period must be > 0");
  if (c.association.max_misses < 0) throw InvalidInput("config: max_misses < 0");
  if (c.solver.max_iterations < 1) throw InvalidInput("config: solver.max_iterations < 1");
  return c;
}

std::string config_to_json(const BackendConfig& c) {
  const AssociationParams& a = c.association;
  json j = {
      {"window_size", c.window_size},
      {"init_threshold", a.init_threshold},
      {"gate_initialized", a.gate_initialized},
      {"gate_uninitialized", a.gate_uninitialized},
      {"stationary_speed", a.stationary_speed},
      {"max_misses", a.max_misses},
      {"frame_period", a.frame_period},
      {"information",
       {{"odometry", write_information(c.odometry)},
        {"observation", write_information(c.observation)},
        {"motion", write_information(c.motion)},
        {"const_velocity", write_information(c.const_velocity)},
        {"loop", write_information(c.loop)},
        {"anchor", c.anchor_information},
        {"supplementary_weight", c.supplementary_weight}}},
      {"solver",
       {{"max_iterations", c.solver.max_iterations},
        {"relative_tolerance", c.solver.relative_tolerance},
        {"gradient_tolerance", c.solver.gradient_tolerance},
        {"initial_lambda", c.solver.initial_lambda},
        {"dense_threshold", c.solver.dense_threshold},
        {"huber_scale", c.solver.huber_scale ? json(*c.solver.huber_scale) : json(nullptr)}}}};
  return j.dump(2);
}

BackendConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const std::filesystem::path& path, const BackendConfig& config) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write config " + path.string());
  os << config_to_json(config) << '\n';
}

}  // namespace slot
