#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "hilbandit/service.hpp"

namespace hilbandit::service {

/// REST + server-sent-events front end for a Service.
///
///   POST /api/v1/sessions                 create (body: session config)
///   GET  /api/v1/sessions/{id}            state
///   POST /api/v1/sessions/{id}/advance
///   POST /api/v1/sessions/{id}/action     {"action": k}
///   POST /api/v1/sessions/{id}/survey     {"mental": .., ..., "kind": "query"|"pre"|"post"}
///   GET  /api/v1/sessions/{id}/events     SSE; resume with ?after=N or Last-Event-ID
///   GET  /api/v1/sessions/{id}/export
class HttpServer {
 public:
  explicit HttpServer(Service& service, std::filesystem::path static_dir = {});
  ~HttpServer();

  /// Binds to an ephemeral port and returns it.
  int bind_any(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status used for an error kind.
int http_status(ErrorKind kind);

}  // namespace hilbandit::service
