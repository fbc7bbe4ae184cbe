#include "clusterscope/http_server.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

#include <httplib.h>

#include "clusterscope/error.hpp"

namespace clusterscope {

int port_from_env(int fallback) {
  const char* raw = std::getenv("CLUSTERSCOPE_PORT");
  if (!raw || !*raw) return fallback;
  int port = 0;
  const char* end = raw + std::strlen(raw);
  const auto res = std::from_chars(raw, end, port);
  if (res.ec != std::errc() || res.ptr != end || port < 0 || port > 65535) return fallback;
  return port;
}

struct HttpServer::Impl {
  Service& service;
  HttpOptions options;
  httplib::Server server;
  bool bound = false;

  Impl(Service& s, HttpOptions o) : service(s), options(std::move(o)) {}

  void dispatch(const httplib::Request& in, httplib::Response& out) {
    Request req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    req.content_type = in.get_header_value("Content-Type");
    if (in.is_multipart_form_data()) {
      // The uploaded file becomes the raw CSV body; plain fields act as query parameters.
      bool have_file = false;
      for (const auto& [name, part] : in.files) {
        if (!have_file && (!part.filename.empty() || name == "file" || name == "csv")) {
          req.body = part.content;
          have_file = true;
        } else {
          req.query.emplace(name, part.content);
        }
      }
      req.content_type = "text/csv";
    } else {
      req.body = in.body;
    }
    const Response res = service.handle(req);
    out.status = res.status;
    if (res.status != 204) out.set_content(res.body, res.content_type);
  }
};

HttpServer::HttpServer(Service& service, HttpOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", impl_->options.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Max-Age", "600"}});
  srv.set_payload_max_length(std::size_t{256} << 20);
  auto handler = [this](const httplib::Request& in, httplib::Response& out) { impl_->dispatch(in, out); };
  srv.Get(".*", handler);
  srv.Post(".*", handler);
  srv.Put(".*", handler);
  srv.Delete(".*", handler);
  srv.Options(".*", handler);
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& out, std::exception_ptr ep) {
    std::string message = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    out.status = 500;
    out.set_content(json{{"error", "internal"}, {"message", message}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& srv = impl_->server;
  int port = impl_->options.port;
  if (port == 0) {
    port = srv.bind_to_any_port(impl_->options.host);
    if (port < 0) throw Error(ErrorCode::Validation, "could not bind " + impl_->options.host);
  } else if (!srv.bind_to_port(impl_->options.host, port)) {
    throw Error(ErrorCode::Validation, "could not bind " + impl_->options.host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  impl_->options.port = port;
  return port;
}

void HttpServer::run() {
  if (!impl_->bound) bind();
  impl_->server.listen_after_bind();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace clusterscope
