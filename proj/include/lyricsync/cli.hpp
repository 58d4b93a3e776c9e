// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace lyricsync {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitPartial = 2 };

/// Entry point of the `lyricsync` tool. Subcommands: align, train, eval,
/// triage, synth, bench, serve. Settings are layered defaults < `--config`
/// file (TOML/INI) < flags, and the resolved configuration is logged to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lyricsync
