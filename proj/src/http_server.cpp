#include "hilbandit/http_server.hpp"

#include <atomic>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace hilbandit::service {

using nlohmann::json;

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownSession: return 404;
    case ErrorKind::WrongPhase: return 409;
    case ErrorKind::InvalidAction: return 422;
    case ErrorKind::CapacityExceeded: return 503;
    case ErrorKind::ConfigError:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaVersionMismatch: return 400;
    default: return 500;
  }
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(Service& s) : service(s) {}
};

namespace {

void send_json(httplib::Response& res, const std::string& body, int status = 200) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump(), http_status(e.kind()));
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send_error(res, Error(ErrorKind::ParseError, e.what()));
  }
}

std::string sse_frame(const Event& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.data + "\n\n";
}

}  // namespace

HttpServer::HttpServer(Service& service, std::filesystem::path static_dir) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Impl* impl = impl_.get();
  const std::string base = "/api/v1/sessions";

  srv.Post(base, [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = impl->service.create_session(SessionConfig::from_json(req.body));
      send_json(res, impl->service.get_state(id), 201);
    });
  });
  srv.Get(base, [impl](const httplib::Request&, httplib::Response& res) {
    send_json(res, json{{"sessions", impl->service.session_ids()}}.dump());
  });
  srv.Get(base + R"(/([A-Za-z0-9]+))", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, impl->service.get_state(req.matches[1])); });
  });
  srv.Post(base + R"(/([A-Za-z0-9]+)/advance)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, impl->service.advance(req.matches[1])); });
  });
  srv.Post(base + R"(/([A-Za-z0-9]+)/action)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      send_json(res, impl->service.submit_action(req.matches[1], body.at("action").get<int>()));
    });
  });
  srv.Post(base + R"(/([A-Za-z0-9]+)/survey)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      study::TlxResponse t;
      t.mental = body.at("mental").get<int>();
      t.temporal = body.at("temporal").get<int>();
      t.performance = body.at("performance").get<int>();
      t.effort = body.at("effort").get<int>();
      t.frustration = body.at("frustration").get<int>();
      send_json(res, impl->service.submit_survey(req.matches[1], t, body.value("kind", std::string("query"))));
    });
  });
  srv.Get(base + R"(/([A-Za-z0-9]+)/export)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, impl->service.export_session(req.matches[1])); });
  });
  srv.Get(base + R"(/([A-Za-z0-9]+)/events)", [impl](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      impl->service.phase(id);  // UnknownSession surfaces as 404 before streaming
      std::uint64_t after = 0;
      if (req.has_param("after")) after = std::strtoull(req.get_param_value("after").c_str(), nullptr, 10);
      else if (req.has_header("Last-Event-ID"))
        after = std::strtoull(req.get_header_value("Last-Event-ID").c_str(), nullptr, 10);
      auto cursor = std::make_shared<std::uint64_t>(after);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [impl, id, cursor](size_t, httplib::DataSink& sink) {
        if (impl->stopping) {
          sink.done();
          return true;
        }
        const bool finished = impl->service.session_finished(id);
        const auto events = impl->service.wait_events(id, *cursor, std::chrono::milliseconds(250));
        for (const auto& e : events) {
          const auto frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
          *cursor = e.seq;
        }
        // Close after the terminal event has been delivered.
        if (finished && impl->service.events_since(id, *cursor).empty()) sink.done();
        return true;
      });
    });
  });

  if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) srv.set_mount_point("/", static_dir.string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace hilbandit::service
