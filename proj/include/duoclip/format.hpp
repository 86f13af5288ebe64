// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0
//
// Small helpers shared by the report writers.

#pragma once

#include <string>
#include <vector>

namespace duoclip {

/// Shortest round-trip decimal form of x.
std::string format_number(double x);

/// Fixed-point with the given number of decimals.
std::string format_fixed(double x, int decimals);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(const std::string& s);

/// Left-aligned text columns separated by two spaces, with a dashed rule under the header.
std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

}  // namespace duoclip
