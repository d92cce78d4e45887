// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "qvdit/cli.hpp"

int main(int argc, char** argv) { return qvdit::run_cli(argc, argv, std::cout, std::cerr); }
