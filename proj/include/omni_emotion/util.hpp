// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omni {

/// 64-bit FNV-1a. Used for content checksums and template hashes; not a
/// cryptographic digest.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::span<const float> values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string to_hex(std::uint64_t value);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view text, std::string_view prefix);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Seconds since the epoch formatted as ISO-8601 UTC ("2024-01-02T03:04:05Z").
std::string iso8601_utc(std::int64_t epoch_seconds);

/// Mixes a seed with a string key into an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Uniform integer in [0, n). The standard distributions are
/// implementation-defined, so seeded selections use this instead.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

/// Standard normal sample (Box-Muller), portable across standard libraries.
double standard_normal(std::mt19937_64& rng);

template <class T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_below(rng, i)]);
  }
}

}  // namespace omni
