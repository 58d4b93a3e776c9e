// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

// Bundled data tables, generated from data/ at configure time.
namespace lyricsync::embedded {
extern const std::string_view kVocabV1;
extern const std::string_view kFallbackV1;
extern const std::string_view kEnLexiconV1;
}  // namespace lyricsync::embedded
