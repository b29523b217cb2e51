// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace omni {

namespace {

std::mutex g_mutex;
std::atomic<LogLevel> g_level{LogLevel::kWarning};

LogSink& sink() {
  static LogSink s = [](LogLevel level, std::string_view m) {
    static constexpr const char* kNames[] = {"debug", "info", "warning", "error"};
    std::cerr << "[omni:" << kNames[static_cast<int>(level)] << "] " << m << '\n';
  };
  return s;
}

}  // namespace

void set_log_sink(LogSink s) {
  std::lock_guard lock(g_mutex);
  sink() = std::move(s);
}

void set_log_level(LogLevel level) { g_level = level; }

void log(LogLevel level, std::string_view message) {
  if (level < g_level.load() || level == LogLevel::kOff) return;
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(level, message);
}

}  // namespace omni
