// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace omni {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the omni-emotion executable. args[0] is the program
/// name. Subcommands: curate, train, eval, review-serve.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace omni
