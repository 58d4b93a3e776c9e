// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Static SVG renderings of evaluation results.

#pragma once

#include <span>
#include <string>

#include "lyricsync/metrics.hpp"

namespace lyricsync {

/// Bar chart of signed deviations; overflow counts are drawn as edge bars.
std::string HistogramSvg(const DeviationHistogram& histogram, const std::string& title = "Deviation histogram");

/// Precision, recall and F1 against the confidence threshold.
std::string ThresholdSvg(std::span<const TriageRow> rows, const std::string& title = "Triage sweep");

/// Precision against recall over the sweep.
std::string PrCurveSvg(std::span<const TriageRow> rows, const std::string& title = "Precision-recall");

}  // namespace lyricsync
