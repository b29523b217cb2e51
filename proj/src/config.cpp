// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/config.hpp"

#include <cstdlib>

#include "omni_emotion/error.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

json RunConfig::section(const std::string& name) const {
  if (!raw.contains(name)) return json::object();
  const json& s = raw.at(name);
  if (!s.is_object()) throw UsageError("config section '" + name + "' must be an object");
  return s;
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path RunConfig::require_path(const json& section, const std::string& section_name,
                                              const std::string& key) const {
  if (!section.contains(key) || !section.at(key).is_string()) {
    throw UsageError("config is missing '" + section_name + "." + key + "'");
  }
  return resolve(section.at(key).get<std::string>());
}

std::optional<std::filesystem::path> RunConfig::optional_path(const json& section, const std::string& key) const {
  if (!section.contains(key) || section.at(key).is_null()) return std::nullopt;
  if (!section.at(key).is_string()) throw UsageError("config key '" + key + "' must be a path string");
  return resolve(section.at(key).get<std::string>());
}

std::filesystem::path RunConfig::output_dir(const json& section, const std::string& section_name) const {
  if (output_dir_override) return *output_dir_override;
  return require_path(section, section_name, "output_dir");
}

json RunConfig::resolved() const {
  json j = raw;
  j["seed"] = seed;
  j["workers"] = workers;
  j["created_at"] = created_at;
  j["registry_mode"] = registry_mode == RegistryMode::kHttp ? "http" : "mock";
  if (output_dir_override) j["output_dir_override"] = output_dir_override->string();
  return j;
}

std::string resolve_created_at(const json& raw) {
  if (raw.contains("created_at")) {
    if (!raw.at("created_at").is_string()) throw UsageError("created_at must be a string");
    return raw.at("created_at").get<std::string>();
  }
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(epoch, &used);
      if (used != std::string(epoch).size() || v < 0) throw std::invalid_argument("bad");
      return iso8601_utc(v);
    } catch (const std::exception&) {
      throw UsageError("SOURCE_DATE_EPOCH is not a non-negative integer");
    }
  }
  return iso8601_utc(0);
}

RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  if (!std::filesystem::exists(path)) throw UsageError("config file " + path.string() + " does not exist");
  RunConfig c;
  c.path = path;
  c.base_dir = std::filesystem::absolute(path).parent_path();
  try {
    c.raw = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!c.raw.is_object()) throw UsageError("config file must hold a JSON object");
  try {
    c.seed = c.raw.value("seed", std::uint64_t{0});
    c.workers = c.raw.value("workers", 1);
    const std::string mode = c.raw.contains("backends") ? c.raw.at("backends").value("mode", std::string("mock"))
                                                        : std::string("mock");
    if (mode == "http") {
      c.registry_mode = RegistryMode::kHttp;
    } else if (mode != "mock") {
      throw UsageError("backends.mode must be mock or http");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad top-level config value: ") + e.what());
  }
  c.created_at = resolve_created_at(c.raw);
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.workers) c.workers = *overrides.workers;
  if (overrides.registry_mode) c.registry_mode = *overrides.registry_mode;
  if (overrides.output_dir) c.output_dir_override = std::filesystem::absolute(*overrides.output_dir);
  if (c.workers < 1) throw UsageError("workers must be at least 1");
  return c;
}

std::filesystem::path write_config_snapshot(const RunConfig& config, const std::filesystem::path& dir,
                                            const std::string& subcommand) {
  std::filesystem::create_directories(dir);
  json j = config.resolved();
  j["subcommand"] = subcommand;
  const auto path = dir / "resolved_config.json";
  write_file_atomic(path, j.dump(2) + "\n");
  return path;
}

std::unique_ptr<BackendRegistry> registry_from_config(const RunConfig& config) {
  json backends = config.section("backends");
  return make_registry(backends, config.base_dir, config.registry_mode);
}

BackendRoles roles_from_json(const json& j, BackendRoles base) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw UsageError("roles must be an object");
  const auto take = [&](const char* key, std::string& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  take("detector", base.detector);
  take("video", base.video);
  take("face", base.face);
  take("age_gender", base.age_gender);
  take("audio", base.audio);
  take("judge", base.judge);
  return base;
}

CurationConfig curation_config_from_json(const json& s, const RunConfig& run) {
  CurationConfig c;
  try {
    c.score_threshold = s.value("score_threshold", c.score_threshold);
    c.hre_quota_per_source = s.value("hre_quota_per_source", c.hre_quota_per_source);
    if (s.contains("quota_overrides")) {
      for (const auto& [name, v] : s.at("quota_overrides").items()) {
        c.quota_overrides[parse_source_dataset(name)] = v.get<int>();
      }
    }
    if (s.contains("excluded_sources")) {
      c.excluded_sources.clear();
      for (const auto& v : s.at("excluded_sources")) c.excluded_sources.insert(parse_source_dataset(v.get<std::string>()));
    }
    c.sparse_rate_fps = s.value("sparse_rate_fps", c.sparse_rate_fps);
    c.dense_rate_fps = s.value("dense_rate_fps", c.dense_rate_fps);
    if (s.contains("tracker")) {
      const json& t = s.at("tracker");
      c.tracker.iou_threshold = t.value("iou_threshold", c.tracker.iou_threshold);
      c.tracker.gap_frames = t.value("gap_frames", c.tracker.gap_frames);
      c.tracker.min_len = t.value("min_len", c.tracker.min_len);
    }
    c.roles = roles_from_json(s.value("roles", json()), c.roles);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad curate setting: ") + e.what());
  } catch (const ValidationError& e) {
    throw UsageError(std::string("bad curate setting: ") + e.what());
  }
  c.tracker.rate_fps = c.sparse_rate_fps;
  c.random_seed = run.seed;
  c.workers = run.workers;
  c.created_at = run.created_at;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("bad curate setting: ") + e.what());
  }
  return c;
}

ModelConfig model_config_from_run(const RunConfig& run) {
  const json s = run.section("model");
  const std::string preset = s.value("preset", std::string("toy"));
  ModelConfig base;
  if (preset == "toy") {
    base = ModelConfig::toy();
  } else if (preset != "default") {
    throw UsageError("model.preset must be toy or default");
  }
  base.seed = run.seed;
  return model_config_from_json(s, base);
}

}  // namespace omni
