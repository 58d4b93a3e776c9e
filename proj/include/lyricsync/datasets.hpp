// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Flat-file persistence: JSON-lines manifests, per-song label files, and a
// review store with an append-only correction log.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace lyricsync {

enum class SongStatus { kUnlabeled, kMachineLabeled, kVerified, kRejected };

std::string_view StatusName(SongStatus status);
/// Throws kInvalidArgument for unknown names.
SongStatus ParseStatus(std::string_view name);
/// unlabeled -> machine_labeled -> {verified, rejected}; rejected ->
/// machine_labeled; any state may be re-asserted to itself.
bool IsLegalTransition(SongStatus from, SongStatus to);

struct SongRecord {
  std::string id;
  std::string audio_path;          // either this or feature_cache_path
  std::string feature_cache_path;  // stack factor 1 features
  std::string lyrics_path;
  std::string labels_path;  // optional
  std::string language = "en";
  double duration_sec = 0.0;  // 0 when unknown
  SongStatus status = SongStatus::kUnlabeled;
};

/// Relative paths in the manifest are resolved against its directory.
/// Throws kIoError, kParseError (with line number and field), kDuplicateId.
std::vector<SongRecord> LoadManifest(const std::string& path);
/// Writes paths relative to the manifest directory when they live under it.
void WriteManifest(const std::string& path, const std::vector<SongRecord>& records);

struct OnsetLabel {
  double start_sec = 0.0;
  std::string text;
  bool operator==(const OnsetLabel&) const = default;
};

struct SongLabels {
  std::vector<OnsetLabel> sentences;
  std::vector<OnsetLabel> words;
  std::optional<double> duration_sec;

  std::string ToJson(int indent = 2) const;
  static SongLabels FromJson(const std::string& text);
  static SongLabels Load(const std::string& path);
  void Save(const std::string& path) const;
  bool operator==(const SongLabels&) const = default;
};

/// A reference into SongLabels: "word:<i>" or "sentence:<i>".
struct UnitRef {
  bool is_word = true;
  int index = 0;
  static UnitRef Parse(const std::string& text);  // throws kUnknownUnit
  std::string ToString() const;
};

std::string ReadTextFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& text);
/// Writes to a temporary sibling then renames over the target.
void WriteFileAtomic(const std::string& path, const std::string& text);
std::string UtcTimestamp();

struct AuditEntry {
  std::string timestamp;
  std::string song_id;
  std::string kind;  // "correction" or "status"
  std::string reviewer;
  std::string unit_ref;  // corrections only
  double old_onset = 0.0;
  double new_onset = 0.0;
  std::string old_status;  // status changes only
  std::string new_status;
  std::string request_id;

  std::string ToJsonLine() const;
  static AuditEntry FromJsonLine(const std::string& line);
};

/// Applies the correction entries of `log` for `song_id` that follow its most
/// recent machine import, in order, to `labels`.
SongLabels ReplayCorrections(SongLabels labels, const std::vector<AuditEntry>& log, const std::string& song_id);

/// Review store rooted at a directory:
///   manifest.jsonl            song records
///   labels/<id>.json          current labels
///   labels/<id>.machine.json  machine labels as imported
///   alignments/<id>.json      canonical alignment output
///   matrices/<id>.lsam        sentence-level probability matrix (optional)
///   status.json               current statuses
///   corrections.jsonl         append-only audit log
/// Writes are serialised per song; reads may run concurrently.
class ReviewStore {
 public:
  /// Creates the directory layout if absent.
  explicit ReviewStore(std::string root);

  const std::string& root() const { return root_; }
  std::vector<SongRecord> Songs() const;
  std::optional<SongRecord> FindSong(const std::string& id) const;
  SongLabels Labels(const std::string& id) const;
  SongLabels MachineLabels(const std::string& id) const;
  /// Canonical alignment JSON text, empty when absent.
  std::string AlignmentJson(const std::string& id) const;
  std::string MatrixPath(const std::string& id) const;
  std::vector<AuditEntry> AuditLog() const;

  /// Registers or replaces a song record.
  void UpsertSong(const SongRecord& record);
  /// Stores a machine alignment (labels + canonical JSON) and moves the song to
  /// machine_labeled (legal from unlabeled, machine_labeled and rejected).
  void ImportAlignment(const std::string& id, const SongLabels& labels, const std::string& alignment_json);

  struct CorrectionResult {
    OnsetLabel unit;
    bool duplicate = false;  // request id already seen; nothing written
  };
  /// Throws kUnknownSong, kUnknownUnit, kInvalidOnset.
  CorrectionResult RecordCorrection(const std::string& song_id, const std::string& unit_ref, double onset_sec,
                                    const std::string& reviewer, const std::string& request_id = "",
                                    bool mark_verified = false);
  /// Throws kUnknownSong, kIllegalTransition.
  SongStatus SetStatus(const std::string& song_id, SongStatus status, const std::string& reviewer = "",
                       const std::string& request_id = "");

 private:
  std::mutex& SongMutex(const std::string& id);
  std::string LabelsPath(const std::string& id) const;
  void AppendAudit(const AuditEntry& entry);
  void SaveStatuses();
  bool SeenRequest(const std::string& request_id);

  std::string root_;
  mutable std::mutex meta_mutex_;  // records, statuses, request ids, mutex map
  std::mutex audit_mutex_;
  std::map<std::string, SongRecord> records_;
  std::map<std::string, std::unique_ptr<std::mutex>> song_mutexes_;
  std::map<std::string, bool> seen_requests_;
};

}  // namespace lyricsync
