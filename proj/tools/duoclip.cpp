// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "duoclip/cli.hpp"

int main(int argc, char** argv) { return duoclip::cli_main(argc, argv, std::cout, std::cerr); }
