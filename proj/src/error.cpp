// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/error.hpp"

namespace lyricsync {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyLyrics: return "EmptyLyrics";
    case ErrorCode::kUnknownLanguage: return "UnknownLanguage";
    case ErrorCode::kNoMapping: return "NoMapping";
    case ErrorCode::kEmptyAudio: return "EmptyAudio";
    case ErrorCode::kCorruptAudio: return "CorruptAudio";
    case ErrorCode::kAlreadyStacked: return "AlreadyStacked";
    case ErrorCode::kTokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::kStackFactorMismatch: return "StackFactorMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInputTooShort: return "InputTooShort";
    case ErrorCode::kEmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::kNoSupervisedRows: return "NoSupervisedRows";
    case ErrorCode::kDataLevelMismatch: return "DataLevelMismatch";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kEmptySong: return "EmptySong";
    case ErrorCode::kNonpositiveDuration: return "NonpositiveDuration";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownSong: return "UnknownSong";
    case ErrorCode::kUnknownUnit: return "UnknownUnit";
    case ErrorCode::kIllegalTransition: return "IllegalTransition";
    case ErrorCode::kInvalidOnset: return "InvalidOnset";
  }
  return "Unknown";
}

}  // namespace lyricsync
