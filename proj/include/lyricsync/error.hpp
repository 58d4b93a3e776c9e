// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lyricsync {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  // text
  kEmptyLyrics,
  kUnknownLanguage,
  kNoMapping,
  // audio
  kEmptyAudio,
  kCorruptAudio,
  kAlreadyStacked,
  // model
  kTokenOutOfRange,
  kStackFactorMismatch,
  kShapeMismatch,
  kInputTooShort,
  kEmptyEnsemble,
  // training
  kNoSupervisedRows,
  kDataLevelMismatch,
  kDivergedLoss,
  // metrics
  kEmptySong,
  kNonpositiveDuration,
  kEmptyInput,
  // datasets
  kParseError,
  kDuplicateId,
  kUnknownSong,
  kUnknownUnit,
  kIllegalTransition,
  kInvalidOnset,
};

std::string_view ErrorCodeName(ErrorCode code);

/// The single exception type thrown by the library. `code()` identifies the
/// failure class; `what()` carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lyricsync
