// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/templates.hpp"

#include "omni_emotion/error.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

namespace detail {
const std::map<std::string, std::string>& embedded_resources();
}

const std::string& embedded_resource(const std::string& name) {
  const auto& all = detail::embedded_resources();
  auto it = all.find(name);
  if (it == all.end()) throw ConfigError("no embedded resource '" + name + "'");
  return it->second;
}

const TemplateSet& TemplateSet::builtin() {
  static const TemplateSet set = [] {
    TemplateSet s;
    const std::string suffix = ".tmpl";
    for (const auto& [name, text] : detail::embedded_resources()) {
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        s.texts_[name.substr(0, name.size() - suffix.size())] = text;
      }
    }
    return s;
  }();
  return set;
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
  TemplateSet s = builtin();
  if (!std::filesystem::is_directory(dir)) throw ConfigError("template directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".tmpl") s.texts_[entry.path().stem().string()] = read_file(entry.path());
  }
  return s;
}

const std::string& TemplateSet::get(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw ConfigError("unknown prompt template '" + name + "'");
  return it->second;
}

std::string TemplateSet::render(const std::string& name, const std::map<std::string, std::string>& vars) const {
  try {
    return render_template(get(name), vars);
  } catch (const ConfigError& e) {
    throw ConfigError("template '" + name + "': " + e.what());
  }
}

std::string TemplateSet::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& [name, text] : texts_) {
    h = fnv1a64(name, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(text, h);
    h = fnv1a64(std::string_view("\0", 1), h);
  }
  return to_hex(h);
}

std::string render_template(const std::string& text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c != '{') {
      out += c;
      ++i;
      continue;
    }
    const auto close = text.find('}', i + 1);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder");
    const std::string key = text.substr(i + 1, close - i - 1);
    auto it = vars.find(key);
    if (it == vars.end()) throw ConfigError("unbound placeholder {" + key + "}");
    out += it->second;
    i = close + 1;
  }
  return out;
}

}  // namespace omni
