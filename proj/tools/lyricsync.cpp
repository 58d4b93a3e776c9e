// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "lyricsync/cli.hpp"

int main(int argc, char** argv) { return lyricsync::RunCli(argc, argv, std::cout, std::cerr); }
