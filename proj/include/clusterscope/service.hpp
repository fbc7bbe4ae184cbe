#pragma once

// Session service behind the HTTP API. Transport-free: the HTTP adapter and
// the tests both talk to it through Request / Response values.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "clusterscope/serialize.hpp"

namespace clusterscope {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string content_type;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  json json_body() const { return json::parse(body); }
};

struct ServiceOptions {
  // Root for server-side CSV paths and snapshot files. Empty disables both.
  std::string data_dir;
};

struct Session;

class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& request);

  std::size_t session_count() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_id();

  Response create_session(const Request& req);
  Response delete_session(const std::string& id);
  Response route_session(const std::shared_ptr<Session>& s, const Request& req, const std::string& rest);

  ServiceOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_state_;
};

}  // namespace clusterscope
