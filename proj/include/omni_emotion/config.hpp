// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "omni_emotion/backends.hpp"
#include "omni_emotion/corpus.hpp"
#include "omni_emotion/curation.hpp"
#include "omni_emotion/model.hpp"

namespace omni {

/// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<RegistryMode> registry_mode;
  std::optional<std::filesystem::path> output_dir;
};

/// One config file with per-subcommand sections. Relative paths resolve
/// against the directory holding the file.
struct RunConfig {
  std::filesystem::path path;
  std::filesystem::path base_dir;
  json raw = json::object();
  std::uint64_t seed = 0;
  int workers = 1;
  RegistryMode registry_mode = RegistryMode::kMock;
  std::string created_at;
  std::optional<std::filesystem::path> output_dir_override;

  /// The named section, or an empty object.
  json section(const std::string& name) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Resolved path under section[key]; a missing key raises UsageError.
  std::filesystem::path require_path(const json& section, const std::string& section_name,
                                     const std::string& key) const;
  std::optional<std::filesystem::path> optional_path(const json& section, const std::string& key) const;
  /// section.output_dir, overridden from the command line when given.
  std::filesystem::path output_dir(const json& section, const std::string& section_name) const;

  /// The raw config plus the effective top-level values.
  json resolved() const;
};

RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// created_at from the config, else SOURCE_DATE_EPOCH, else the epoch.
std::string resolve_created_at(const json& raw);

/// Writes resolved_config.json (with the subcommand) into dir.
std::filesystem::path write_config_snapshot(const RunConfig& config, const std::filesystem::path& dir,
                                            const std::string& subcommand);

std::unique_ptr<BackendRegistry> registry_from_config(const RunConfig& config);
BackendRoles roles_from_json(const json& j, BackendRoles base = {});
CurationConfig curation_config_from_json(const json& section, const RunConfig& run);

/// "model" section: {"preset": "toy"|"default", ...ModelConfig fields}.
ModelConfig model_config_from_run(const RunConfig& run);

}  // namespace omni
