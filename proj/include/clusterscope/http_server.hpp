#pragma once

#include <memory>
#include <string>

#include "clusterscope/service.hpp"

namespace clusterscope {

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
};

// Port from CLUSTERSCOPE_PORT, or `fallback` when unset or unparsable.
int port_from_env(int fallback);

class HttpServer {
 public:
  HttpServer(Service& service, HttpOptions options);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port.
  int bind();
  // Blocks until stop().
  void run();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace clusterscope
