// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace omni {

/// Prompt templates by name (file stem). Placeholders are written {name}.
class TemplateSet {
 public:
  /// The versioned templates compiled into the library.
  static const TemplateSet& builtin();
  /// Builtins overridden by any <name>.tmpl found in dir.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  const std::string& get(const std::string& name) const;
  bool contains(const std::string& name) const { return texts_.count(name) > 0; }

  /// Renders the named template. Every placeholder must be bound.
  std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const;

  /// Hash over all names and texts, stable across runs.
  std::string hash() const;

  void set(const std::string& name, std::string text) { texts_[name] = std::move(text); }

 private:
  std::map<std::string, std::string> texts_;
};

std::string render_template(const std::string& text, const std::map<std::string, std::string>& vars);

/// Raw embedded resource (templates and data/emotion_groups.json) by file
/// name.
const std::string& embedded_resource(const std::string& name);

}  // namespace omni
