// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/datasets.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view StatusName(SongStatus status) {
  switch (status) {
    case SongStatus::kUnlabeled: return "unlabeled";
    case SongStatus::kMachineLabeled: return "machine_labeled";
    case SongStatus::kVerified: return "verified";
    case SongStatus::kRejected: return "rejected";
  }
  return "unlabeled";
}

SongStatus ParseStatus(std::string_view name) {
  for (auto s : {SongStatus::kUnlabeled, SongStatus::kMachineLabeled, SongStatus::kVerified, SongStatus::kRejected}) {
    if (StatusName(s) == name) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown status '" + std::string(name) + "'");
}

bool IsLegalTransition(SongStatus from, SongStatus to) {
  if (from == to) return true;
  switch (from) {
    case SongStatus::kUnlabeled: return to == SongStatus::kMachineLabeled;
    case SongStatus::kMachineLabeled: return to == SongStatus::kVerified || to == SongStatus::kRejected;
    case SongStatus::kVerified: return false;
    case SongStatus::kRejected: return to == SongStatus::kMachineLabeled;
  }
  return false;
}

// ---------------------------------------------------------------------------
// files

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

void WriteFileAtomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  WriteTextFile(tmp, text);
  fs::rename(tmp, path);
}

std::string UtcTimestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// ---------------------------------------------------------------------------
// manifest

namespace {

std::string Resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

std::string Relativize(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path rel = fs::path(p).lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.string();
  return p;
}

}  // namespace

std::vector<SongRecord> LoadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest " + path);
  const fs::path base = fs::absolute(path).parent_path();
  std::vector<SongRecord> out;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::kParseError, path + ":" + std::to_string(line_no) + ": " + msg);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(e.what());
    }
    if (!j.is_object()) fail("record is not an object");
    auto str = [&](const char* key, bool required) -> std::string {
      if (!j.contains(key)) {
        if (required) fail(std::string("missing field '") + key + "'");
        return "";
      }
      if (!j[key].is_string()) fail(std::string("field '") + key + "' must be a string");
      return j[key].get<std::string>();
    };
    SongRecord r;
    r.id = str("id", true);
    if (r.id.empty()) fail("field 'id' is empty");
    r.audio_path = Resolve(base, str("audio_path", false));
    r.feature_cache_path = Resolve(base, str("feature_cache_path", false));
    if (r.audio_path.empty() && r.feature_cache_path.empty()) fail("missing field 'audio_path' (or 'feature_cache_path')");
    r.lyrics_path = Resolve(base, str("lyrics_path", true));
    r.labels_path = Resolve(base, str("labels_path", false));
    if (j.contains("language")) r.language = str("language", false);
    if (j.contains("duration_sec")) {
      if (!j["duration_sec"].is_number()) fail("field 'duration_sec' must be a number");
      r.duration_sec = j["duration_sec"].get<double>();
    }
    if (j.contains("status")) {
      try {
        r.status = ParseStatus(str("status", false));
      } catch (const Error& e) {
        fail(e.what());
      }
    }
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::kDuplicateId, path + ":" + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void WriteManifest(const std::string& path, const std::vector<SongRecord>& records) {
  const fs::path base = fs::absolute(path).parent_path();
  std::ostringstream ss;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    if (!r.audio_path.empty()) j["audio_path"] = Relativize(base, r.audio_path);
    if (!r.feature_cache_path.empty()) j["feature_cache_path"] = Relativize(base, r.feature_cache_path);
    j["lyrics_path"] = Relativize(base, r.lyrics_path);
    if (!r.labels_path.empty()) j["labels_path"] = Relativize(base, r.labels_path);
    j["language"] = r.language;
    if (r.duration_sec > 0) j["duration_sec"] = r.duration_sec;
    if (r.status != SongStatus::kUnlabeled) j["status"] = StatusName(r.status);
    ss << j.dump() << "\n";
  }
  WriteFileAtomic(path, ss.str());
}

// ---------------------------------------------------------------------------
// labels

std::string SongLabels::ToJson(int indent) const {
  auto units = [](const std::vector<OnsetLabel>& v) {
    json a = json::array();
    for (const auto& u : v) a.push_back({{"start_sec", u.start_sec}, {"text", u.text}});
    return a;
  };
  json j;
  j["sentences"] = units(sentences);
  j["words"] = units(words);
  if (duration_sec) j["duration_sec"] = *duration_sec;
  return j.dump(indent);
}

SongLabels SongLabels::FromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    SongLabels labels;
    auto units = [&](const char* key, std::vector<OnsetLabel>& out) {
      if (!j.contains(key)) return;
      for (const auto& u : j.at(key)) {
        OnsetLabel l;
        l.start_sec = u.at("start_sec").get<double>();
        l.text = u.value("text", "");
        if (!std::isfinite(l.start_sec)) throw Error(ErrorCode::kParseError, "non-finite onset");
        out.push_back(std::move(l));
      }
    };
    if (!j.contains("sentences")) throw Error(ErrorCode::kParseError, "labels missing 'sentences'");
    units("sentences", labels.sentences);
    units("words", labels.words);
    if (j.contains("duration_sec")) labels.duration_sec = j["duration_sec"].get<double>();
    return labels;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("labels: ") + e.what());
  }
}

SongLabels SongLabels::Load(const std::string& path) {
  try {
    return FromJson(ReadTextFile(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParseError) throw Error(ErrorCode::kParseError, path + ": " + e.what());
    throw;
  }
}

void SongLabels::Save(const std::string& path) const { WriteFileAtomic(path, ToJson() + "\n"); }

UnitRef UnitRef::Parse(const std::string& text) {
  const auto colon = text.find(':');
  UnitRef ref;
  if (colon == std::string::npos) throw Error(ErrorCode::kUnknownUnit, "malformed unit ref '" + text + "'");
  const std::string kind = text.substr(0, colon), idx = text.substr(colon + 1);
  if (kind == "word") {
    ref.is_word = true;
  } else if (kind == "sentence") {
    ref.is_word = false;
  } else {
    throw Error(ErrorCode::kUnknownUnit, "unknown unit kind in '" + text + "'");
  }
  if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos || idx.size() > 9) {
    throw Error(ErrorCode::kUnknownUnit, "bad unit index in '" + text + "'");
  }
  ref.index = std::stoi(idx);
  return ref;
}

std::string UnitRef::ToString() const { return (is_word ? "word:" : "sentence:") + std::to_string(index); }

// ---------------------------------------------------------------------------
// audit

std::string AuditEntry::ToJsonLine() const {
  json j;
  j["timestamp"] = timestamp;
  j["song_id"] = song_id;
  j["kind"] = kind;
  j["reviewer"] = reviewer;
  if (kind == "correction") {
    j["unit_ref"] = unit_ref;
    j["old"] = old_onset;
    j["new"] = new_onset;
  } else {
    j["old"] = old_status;
    j["new"] = new_status;
  }
  if (!request_id.empty()) j["request_id"] = request_id;
  return j.dump();
}

AuditEntry AuditEntry::FromJsonLine(const std::string& line) {
  try {
    const json j = json::parse(line);
    AuditEntry e;
    e.timestamp = j.value("timestamp", "");
    e.song_id = j.at("song_id").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.reviewer = j.value("reviewer", "");
    e.request_id = j.value("request_id", "");
    if (e.kind == "correction") {
      e.unit_ref = j.at("unit_ref").get<std::string>();
      e.old_onset = j.at("old").get<double>();
      e.new_onset = j.at("new").get<double>();
    } else {
      e.old_status = j.at("old").get<std::string>();
      e.new_status = j.at("new").get<std::string>();
    }
    return e;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("audit entry: ") + e.what());
  }
}

namespace {
OnsetLabel* ResolveUnit(SongLabels& labels, const UnitRef& ref) {
  auto& units = ref.is_word ? labels.words : labels.sentences;
  if (ref.index < 0 || ref.index >= static_cast<int>(units.size())) return nullptr;
  return &units[static_cast<size_t>(ref.index)];
}
}  // namespace

SongLabels ReplayCorrections(SongLabels labels, const std::vector<AuditEntry>& log, const std::string& song_id) {
  // Corrections made before the latest machine import refer to older labels.
  size_t first = 0;
  for (size_t i = 0; i < log.size(); ++i) {
    if (log[i].song_id == song_id && log[i].kind == "status" && log[i].new_status == "machine_labeled") first = i + 1;
  }
  for (size_t i = first; i < log.size(); ++i) {
    const auto& e = log[i];
    if (e.song_id != song_id || e.kind != "correction") continue;
    OnsetLabel* unit = ResolveUnit(labels, UnitRef::Parse(e.unit_ref));
    if (!unit) throw Error(ErrorCode::kUnknownUnit, "audit refers to missing unit " + e.unit_ref);
    unit->start_sec = e.new_onset;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// store

ReviewStore::ReviewStore(std::string root) : root_(std::move(root)) {
  fs::create_directories(fs::path(root_) / "labels");
  fs::create_directories(fs::path(root_) / "alignments");
  fs::create_directories(fs::path(root_) / "matrices");
  const auto manifest = fs::path(root_) / "manifest.jsonl";
  if (fs::exists(manifest)) {
    for (auto& r : LoadManifest(manifest.string())) records_[r.id] = r;
  }
  const auto status = fs::path(root_) / "status.json";
  if (fs::exists(status)) {
    try {
      const json j = json::parse(ReadTextFile(status.string()));
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto rec = records_.find(it.key());
        if (rec != records_.end()) rec->second.status = ParseStatus(it.value().get<std::string>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, status.string() + ": " + e.what());
    }
  }
  for (const auto& e : AuditLog()) {
    if (!e.request_id.empty()) seen_requests_[e.request_id] = true;
  }
}

std::string ReviewStore::LabelsPath(const std::string& id) const { return (fs::path(root_) / "labels" / (id + ".json")).string(); }

std::string ReviewStore::MatrixPath(const std::string& id) const {
  return (fs::path(root_) / "matrices" / (id + ".lsam")).string();
}

std::vector<SongRecord> ReviewStore::Songs() const {
  std::lock_guard lock(meta_mutex_);
  std::vector<SongRecord> out;
  for (const auto& [id, r] : records_) out.push_back(r);
  return out;
}

std::optional<SongRecord> ReviewStore::FindSong(const std::string& id) const {
  std::lock_guard lock(meta_mutex_);
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

SongLabels ReviewStore::Labels(const std::string& id) const {
  if (!FindSong(id)) throw Error(ErrorCode::kUnknownSong, id);
  const auto path = LabelsPath(id);
  if (!fs::exists(path)) return {};
  return SongLabels::Load(path);
}

SongLabels ReviewStore::MachineLabels(const std::string& id) const {
  if (!FindSong(id)) throw Error(ErrorCode::kUnknownSong, id);
  const auto path = (fs::path(root_) / "labels" / (id + ".machine.json")).string();
  if (!fs::exists(path)) return {};
  return SongLabels::Load(path);
}

std::string ReviewStore::AlignmentJson(const std::string& id) const {
  if (!FindSong(id)) throw Error(ErrorCode::kUnknownSong, id);
  const auto path = fs::path(root_) / "alignments" / (id + ".json");
  return fs::exists(path) ? ReadTextFile(path.string()) : std::string();
}

std::vector<AuditEntry> ReviewStore::AuditLog() const {
  std::vector<AuditEntry> out;
  std::ifstream in(fs::path(root_) / "corrections.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(AuditEntry::FromJsonLine(line));
  }
  return out;
}

std::mutex& ReviewStore::SongMutex(const std::string& id) {
  std::lock_guard lock(meta_mutex_);
  auto& m = song_mutexes_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

void ReviewStore::AppendAudit(const AuditEntry& entry) {
  std::lock_guard lock(audit_mutex_);
  std::ofstream out(fs::path(root_) / "corrections.jsonl", std::ios::app);
  if (!out) throw Error(ErrorCode::kIoError, "cannot append to audit log");
  out << entry.ToJsonLine() << "\n";
  out.flush();
}

void ReviewStore::SaveStatuses() {
  // Caller holds meta_mutex_.
  json j = json::object();
  for (const auto& [id, r] : records_) j[id] = StatusName(r.status);
  WriteFileAtomic((fs::path(root_) / "status.json").string(), j.dump(2) + "\n");
}

bool ReviewStore::SeenRequest(const std::string& request_id) {
  if (request_id.empty()) return false;
  std::lock_guard lock(meta_mutex_);
  return !seen_requests_.emplace(request_id, true).second;
}

void ReviewStore::UpsertSong(const SongRecord& record) {
  std::lock_guard lock(meta_mutex_);
  records_[record.id] = record;
  std::vector<SongRecord> all;
  for (const auto& [id, r] : records_) all.push_back(r);
  WriteManifest((fs::path(root_) / "manifest.jsonl").string(), all);
  SaveStatuses();
}

void ReviewStore::ImportAlignment(const std::string& id, const SongLabels& labels, const std::string& alignment_json) {
  if (!FindSong(id)) throw Error(ErrorCode::kUnknownSong, id);
  std::lock_guard song_lock(SongMutex(id));
  labels.Save(LabelsPath(id));
  labels.Save((fs::path(root_) / "labels" / (id + ".machine.json")).string());
  WriteFileAtomic((fs::path(root_) / "alignments" / (id + ".json")).string(), alignment_json);
  // Older corrections refer to the previous machine labels; replay starts
  // from the latest import, so they are fenced by an explicit status entry.
  SongStatus old;
  {
    std::lock_guard lock(meta_mutex_);
    auto& rec = records_.at(id);
    old = rec.status;
    if (old == SongStatus::kVerified) throw Error(ErrorCode::kIllegalTransition, "song " + id + " is already verified");
    rec.status = SongStatus::kMachineLabeled;
    SaveStatuses();
  }
  AuditEntry e;
  e.timestamp = UtcTimestamp();
  e.song_id = id;
  e.kind = "status";
  e.reviewer = "aligner";
  e.old_status = StatusName(old);
  e.new_status = StatusName(SongStatus::kMachineLabeled);
  AppendAudit(e);
}

ReviewStore::CorrectionResult ReviewStore::RecordCorrection(const std::string& song_id, const std::string& unit_ref,
                                                            double onset_sec, const std::string& reviewer,
                                                            const std::string& request_id, bool mark_verified) {
  const auto record = FindSong(song_id);
  if (!record) throw Error(ErrorCode::kUnknownSong, song_id);
  const UnitRef ref = UnitRef::Parse(unit_ref);
  std::lock_guard song_lock(SongMutex(song_id));
  SongLabels labels = Labels(song_id);
  OnsetLabel* unit = ResolveUnit(labels, ref);
  if (!unit) throw Error(ErrorCode::kUnknownUnit, song_id + " has no " + unit_ref);
  const double duration = labels.duration_sec.value_or(record->duration_sec);
  if (!std::isfinite(onset_sec) || onset_sec < 0.0 || (duration > 0.0 && onset_sec > duration)) {
    throw Error(ErrorCode::kInvalidOnset, "onset " + std::to_string(onset_sec) + " outside [0, duration]");
  }
  if (SeenRequest(request_id)) return {*unit, true};

  AuditEntry e;
  e.timestamp = UtcTimestamp();
  e.song_id = song_id;
  e.kind = "correction";
  e.reviewer = reviewer;
  e.unit_ref = ref.ToString();
  e.old_onset = unit->start_sec;
  e.new_onset = onset_sec;
  e.request_id = request_id;
  unit->start_sec = onset_sec;
  labels.Save(LabelsPath(song_id));
  AppendAudit(e);
  if (mark_verified && record->status == SongStatus::kMachineLabeled) {
    std::lock_guard lock(meta_mutex_);
    records_.at(song_id).status = SongStatus::kVerified;
    SaveStatuses();
    AuditEntry s;
    s.timestamp = e.timestamp;
    s.song_id = song_id;
    s.kind = "status";
    s.reviewer = reviewer;
    s.old_status = StatusName(SongStatus::kMachineLabeled);
    s.new_status = StatusName(SongStatus::kVerified);
    AppendAudit(s);
  }
  return {*unit, false};
}

SongStatus ReviewStore::SetStatus(const std::string& song_id, SongStatus status, const std::string& reviewer,
                                  const std::string& request_id) {
  if (!FindSong(song_id)) throw Error(ErrorCode::kUnknownSong, song_id);
  std::lock_guard song_lock(SongMutex(song_id));
  SongStatus old;
  {
    std::lock_guard lock(meta_mutex_);
    auto& rec = records_.at(song_id);
    old = rec.status;
    if (!IsLegalTransition(old, status)) {
      throw Error(ErrorCode::kIllegalTransition,
                  std::string(StatusName(old)) + " -> " + std::string(StatusName(status)) + " for " + song_id);
    }
    if (old == status) return status;
  }
  if (SeenRequest(request_id)) return status;
  {
    std::lock_guard lock(meta_mutex_);
    records_.at(song_id).status = status;
    SaveStatuses();
  }
  AuditEntry e;
  e.timestamp = UtcTimestamp();
  e.song_id = song_id;
  e.kind = "status";
  e.reviewer = reviewer;
  e.old_status = StatusName(old);
  e.new_status = StatusName(status);
  e.request_id = request_id;
  AppendAudit(e);
  return status;
}

}  // namespace lyricsync
