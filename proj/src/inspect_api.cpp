// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/inspect_api.hpp"

#include <algorithm>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lyricsync/cascade.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

Heatmap MaxPoolHeatmap(const AlignmentMatrix& matrix, int max_dim) {
  if (max_dim < 1) throw Error(ErrorCode::kInvalidArgument, "max_dim must be positive");
  Heatmap h;
  if (matrix.rows == 0 || matrix.cols == 0) return h;
  h.pool_rows = (matrix.rows + max_dim - 1) / max_dim;
  h.pool_cols = (matrix.cols + max_dim - 1) / max_dim;
  h.rows = (matrix.rows + h.pool_rows - 1) / h.pool_rows;
  h.cols = (matrix.cols + h.pool_cols - 1) / h.pool_cols;
  h.values.assign(static_cast<size_t>(h.rows) * h.cols, -std::numeric_limits<double>::infinity());
  for (int r = 0; r < matrix.rows; ++r) {
    double* out = h.values.data() + static_cast<size_t>(r / h.pool_rows) * h.cols;
    for (int c = 0; c < matrix.cols; ++c) {
      double& cell = out[c / h.pool_cols];
      cell = std::max(cell, matrix.prob(r, c));
    }
  }
  return h;
}

std::vector<QueueEntry> ReviewQueue(const ReviewStore& store, double low_confidence) {
  std::map<std::string, std::string> last_reviewed;
  for (const auto& e : store.AuditLog()) {
    if (e.reviewer == "aligner") continue;
    auto& t = last_reviewed[e.song_id];
    t = std::max(t, e.timestamp);
  }
  std::vector<QueueEntry> out;
  for (const auto& rec : store.Songs()) {
    QueueEntry q;
    q.song_id = rec.id;
    q.status = rec.status;
    const std::string json = store.AlignmentJson(rec.id);
    if (!json.empty()) {
      const SongAlignment a = SongAlignment::FromJson(json);
      q.song_confidence = a.song_confidence;
      for (const auto& u : a.words.units) q.n_low_confidence_units += u.confidence < low_confidence;
    }
    if (auto it = last_reviewed.find(rec.id); it != last_reviewed.end()) q.last_reviewed = it->second;
    out.push_back(std::move(q));
  }
  std::sort(out.begin(), out.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.song_confidence.has_value() != b.song_confidence.has_value()) return a.song_confidence.has_value();
    if (a.song_confidence && *a.song_confidence != *b.song_confidence) return *a.song_confidence < *b.song_confidence;
    return a.song_id < b.song_id;
  });
  return out;
}

namespace {

HttpResponse JsonResponse(int status, const ojson& body) { return {status, body.dump() + "\n", "application/json"}; }

HttpResponse ErrorResponse(int status, const std::string& code, const std::string& message) {
  return JsonResponse(status, {{"error", code}, {"message", message}});
}

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownSong:
      return 404;
    case ErrorCode::kUnknownUnit:
    case ErrorCode::kInvalidOnset:
    case ErrorCode::kInvalidArgument:
      return 422;
    case ErrorCode::kIllegalTransition:
      return 409;
    case ErrorCode::kParseError:
      return 400;
    default:
      return 500;
  }
}

ojson LabelsJson(const SongLabels& labels) { return ojson::parse(labels.ToJson()); }

std::vector<std::string> SplitPath(const std::string& path) {
  std::vector<std::string> parts;
  size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    size_t j = path.find('/', i);
    if (j == std::string::npos) j = path.size();
    if (j > i) parts.push_back(httplib::detail::decode_url(path.substr(i, j - i), false));
    i = j;
  }
  return parts;
}

}  // namespace

struct InspectServer::Impl {
  ReviewStore& store;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;

  Impl(ReviewStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

  HttpResponse ListSongs(const std::multimap<std::string, std::string>& query) {
    auto param = [&](const std::string& key) -> std::optional<std::string> {
      auto it = query.find(key);
      return it == query.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
    if (auto order = param("order"); order && *order != "confidence") {
      return ErrorResponse(400, "InvalidArgument", "unsupported order '" + *order + "'");
    }
    std::optional<SongStatus> status;
    if (auto s = param("status"); s && !s->empty()) {
      try {
        status = ParseStatus(*s);
      } catch (const Error& e) {
        return ErrorResponse(400, "InvalidArgument", e.what());
      }
    }
    size_t offset = 0, limit = static_cast<size_t>(options.page_size);
    try {
      if (auto c = param("cursor"); c && !c->empty()) offset = std::stoul(*c);
      if (auto l = param("limit"); l && !l->empty()) limit = std::clamp<size_t>(std::stoul(*l), 1, 1000);
    } catch (const std::exception&) {
      return ErrorResponse(400, "InvalidArgument", "cursor and limit must be non-negative integers");
    }
    std::vector<QueueEntry> queue = ReviewQueue(store, options.low_confidence);
    if (status) std::erase_if(queue, [&](const QueueEntry& q) { return q.status != *status; });
    ojson items = ojson::array();
    for (size_t i = offset; i < queue.size() && i < offset + limit; ++i) {
      const auto& q = queue[i];
      items.push_back({{"song_id", q.song_id},
                       {"song_confidence", q.song_confidence ? ojson(*q.song_confidence) : ojson(nullptr)},
                       {"n_low_confidence_units", q.n_low_confidence_units},
                       {"status", StatusName(q.status)},
                       {"last_reviewed", q.last_reviewed ? ojson(*q.last_reviewed) : ojson(nullptr)}});
    }
    ojson body;
    body["items"] = std::move(items);
    body["next_cursor"] = offset + limit < queue.size() ? ojson(std::to_string(offset + limit)) : ojson(nullptr);
    body["total"] = queue.size();
    return JsonResponse(200, body);
  }

  HttpResponse GetAlignment(const std::string& id) {
    const auto rec = store.FindSong(id);
    if (!rec) return ErrorResponse(404, "UnknownSong", "no song '" + id + "'");
    ojson body;
    const std::string json = store.AlignmentJson(id);
    if (!json.empty()) {
      body = ojson::parse(json);
    } else {
      body["song_id"] = id;
      body["sentences"] = ojson::array();
      body["words"] = ojson::array();
    }
    body["status"] = StatusName(rec->status);
    try {
      body["labels"] = LabelsJson(store.Labels(id));
    } catch (const Error&) {
      body["labels"] = nullptr;
    }
    const std::string matrix_path = store.MatrixPath(id);
    if (fs::exists(matrix_path)) {
      const Heatmap h = MaxPoolHeatmap(ReadMatrix(matrix_path), options.max_heatmap);
      body["heatmap"] = {{"rows", h.rows},           {"cols", h.cols},          {"pool_rows", h.pool_rows},
                         {"pool_cols", h.pool_cols}, {"values", h.values}};
    } else {
      body["heatmap"] = nullptr;
    }
    body["audio_url"] = "/songs/" + id + "/audio";
    return JsonResponse(200, body);
  }

  HttpResponse GetAudio(const std::string& id) {
    const auto rec = store.FindSong(id);
    if (!rec) return ErrorResponse(404, "UnknownSong", "no song '" + id + "'");
    if (rec->audio_path.empty() || !fs::exists(rec->audio_path)) {
      return ErrorResponse(404, "NotFound", "song '" + id + "' has no audio file");
    }
    return {200, ReadTextFile(rec->audio_path), "audio/wav"};
  }

  HttpResponse PostCorrection(const std::string& id, const ojson& body, const std::string& request_id) {
    if (!body.contains("unit_ref") || !body["unit_ref"].is_string()) {
      return ErrorResponse(422, "InvalidArgument", "unit_ref (string) is required");
    }
    if (!body.contains("onset_sec") || !body["onset_sec"].is_number()) {
      return ErrorResponse(422, "InvalidArgument", "onset_sec (number) is required");
    }
    const auto result = store.RecordCorrection(id, body["unit_ref"].get<std::string>(), body["onset_sec"].get<double>(),
                                               body.value("reviewer", std::string("anonymous")), request_id,
                                               body.value("mark_verified", false));
    return JsonResponse(200, {{"song_id", id},
                              {"unit_ref", body["unit_ref"]},
                              {"unit", {{"start_sec", result.unit.start_sec}, {"text", result.unit.text}}},
                              {"duplicate", result.duplicate}});
  }

  HttpResponse PostStatus(const std::string& id, const ojson& body, const std::string& request_id) {
    if (!body.contains("status") || !body["status"].is_string()) {
      return ErrorResponse(422, "InvalidArgument", "status (string) is required");
    }
    const SongStatus status = ParseStatus(body["status"].get<std::string>());
    const SongStatus now = store.SetStatus(id, status, body.value("reviewer", std::string("anonymous")), request_id);
    return JsonResponse(200, {{"song_id", id}, {"status", StatusName(now)}});
  }

  HttpResponse Route(const std::string& method, const std::string& target, const std::string& body,
                     const std::map<std::string, std::string>& headers) {
    const size_t q = target.find('?');
    const std::string path = target.substr(0, q);
    httplib::Params query;
    if (q != std::string::npos) httplib::detail::parse_query_text(target.substr(q + 1), query);
    const auto parts = SplitPath(path);

    if (method == "OPTIONS") return {204, "", "text/plain"};
    if (method == "GET" && parts.size() == 1 && parts[0] == "songs") return ListSongs(query);
    if (method == "GET" && parts.size() == 3 && parts[0] == "songs" && parts[2] == "alignment") {
      return GetAlignment(parts[1]);
    }
    if (method == "GET" && parts.size() == 3 && parts[0] == "songs" && parts[2] == "audio") return GetAudio(parts[1]);
    if (method == "POST" && parts.size() == 3 && parts[0] == "songs" &&
        (parts[2] == "corrections" || parts[2] == "status")) {
      ojson json;
      try {
        json = body.empty() ? ojson::object() : ojson::parse(body);
      } catch (const nlohmann::json::exception& e) {
        return ErrorResponse(400, "ParseError", std::string("invalid JSON body: ") + e.what());
      }
      if (!json.is_object()) return ErrorResponse(400, "ParseError", "body must be a JSON object");
      std::string request_id = json.value("request_id", std::string());
      for (const auto& [k, v] : headers) {
        std::string key = k;
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        if (request_id.empty() && (key == "x-request-id" || key == "idempotency-key")) request_id = v;
      }
      return parts[2] == "corrections" ? PostCorrection(parts[1], json, request_id)
                                       : PostStatus(parts[1], json, request_id);
    }
    if (method == "GET" && (parts.empty() || (parts.size() == 1 && parts[0] == "health"))) {
      return JsonResponse(200, {{"service", "lyricsync-inspect"}, {"status", "ok"}});
    }
    return ErrorResponse(404, "NotFound", method + " " + path);
  }
};

InspectServer::InspectServer(ReviewStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> headers(req.headers.begin(), req.headers.end());
    const HttpResponse r = Handle(req.method, req.target, req.body, headers);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto& s = impl_->server;
  s.set_default_headers({{"Access-Control-Allow-Origin", impl_->options.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type, X-Request-Id, Idempotency-Key"}});
  s.Get(".*", handler);
  s.Post(".*", handler);
  s.Options(".*", handler);
}

InspectServer::~InspectServer() { Stop(); }

HttpResponse InspectServer::Handle(const std::string& method, const std::string& target, const std::string& body,
                                   const std::map<std::string, std::string>& headers) {
  try {
    return impl_->Route(method, target, body, headers);
  } catch (const Error& e) {
    return ErrorResponse(HttpStatusFor(e.code()), std::string(ErrorCodeName(e.code())), e.what());
  } catch (const std::exception& e) {
    return ErrorResponse(500, "InternalError", e.what());
  }
}

int InspectServer::Start() {
  auto& s = impl_->server;
  int port = impl_->options.port;
  if (port == 0) {
    port = s.bind_to_any_port(impl_->options.host);
    if (port < 0) throw Error(ErrorCode::kIoError, "cannot bind " + impl_->options.host);
  } else if (!s.bind_to_port(impl_->options.host, port)) {
    throw Error(ErrorCode::kIoError, "cannot bind " + impl_->options.host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port;
}

void InspectServer::Listen() {
  auto& s = impl_->server;
  if (!s.listen(impl_->options.host, impl_->options.port)) {
    throw Error(ErrorCode::kIoError,
                "cannot listen on " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
}

void InspectServer::Stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace lyricsync
