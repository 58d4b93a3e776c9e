// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// HTTP service behind the review UI: ranked song queue, alignment plus
// heatmap, corrections and status changes. See api/openapi.yaml.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lyricsync/datasets.hpp"
#include "lyricsync/model.hpp"

namespace lyricsync {

struct Heatmap {
  int rows = 0;
  int cols = 0;
  int pool_rows = 1;  // source rows per heatmap cell
  int pool_cols = 1;
  std::vector<double> values;  // row-major, max over each pool cell
};

/// Max-pools a probability matrix so neither side exceeds `max_dim`.
Heatmap MaxPoolHeatmap(const AlignmentMatrix& matrix, int max_dim = 512);

struct QueueEntry {
  std::string song_id;
  std::optional<double> song_confidence;  // absent until aligned
  int n_low_confidence_units = 0;
  SongStatus status = SongStatus::kUnlabeled;
  std::optional<std::string> last_reviewed;
};

/// Ascending confidence, ties by id; songs without an alignment come last.
std::vector<QueueEntry> ReviewQueue(const ReviewStore& store, double low_confidence = 0.5);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::string cors_origin = "*";
  double low_confidence = 0.5;
  int page_size = 50;
  int max_heatmap = 512;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class InspectServer {
 public:
  InspectServer(ReviewStore& store, ServerOptions options = {});
  ~InspectServer();
  InspectServer(const InspectServer&) = delete;
  InspectServer& operator=(const InspectServer&) = delete;

  /// Routes one request without a socket. `target` is path plus query.
  HttpResponse Handle(const std::string& method, const std::string& target, const std::string& body = "",
                      const std::map<std::string, std::string>& headers = {});

  /// Binds and serves on a background thread; returns the bound port.
  /// Throws kIoError when binding fails.
  int Start();
  /// Binds and serves on the calling thread until Stop().
  void Listen();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lyricsync
