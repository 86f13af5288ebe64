// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace duoclip {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point of the duoclip command line. Reports go to out, logs and errors to err.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace duoclip
