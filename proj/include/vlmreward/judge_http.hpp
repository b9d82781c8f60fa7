#pragma once

// OpenAI-compatible /v1/chat/completions backend.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "vlmreward/error.hpp"
#include "vlmreward/judge.hpp"

namespace vlmreward {

struct EndpointUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // full request path ending in /chat/completions
};

// Accepts "http://host:port", ".../v1" or a full ".../v1/chat/completions".
inline EndpointUrl split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ContractError("judge endpoint must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  EndpointUrl out;
  out.origin = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (path.size() >= 17 && path.compare(path.size() - 17, 17, "/chat/completions") == 0) {
    out.path = path;
  } else if (path.size() >= 3 && path.compare(path.size() - 3, 3, "/v1") == 0) {
    out.path = path + "/chat/completions";
  } else {
    out.path = path + "/v1/chat/completions";
  }
  return out;
}

// Bearer token from VLMREWARD_JUDGE_API_KEY, falling back to OPENAI_API_KEY.
inline std::string judge_api_key_from_env() {
  for (const char* name : {"VLMREWARD_JUDGE_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return v;
  }
  return {};
}

class HttpJudgeBackend : public ChatBackend {
 public:
  explicit HttpJudgeBackend(const JudgeConfig& cfg, std::string api_key = judge_api_key_from_env())
      : endpoint_(split_endpoint(cfg.endpoint_url)),
        timeout_(cfg.timeout),
        api_key_(std::move(api_key)) {}

  static nlohmann::json request_body(const ChatRequest& req) {
    return {{"model", req.model},
            {"messages", req.messages_json()},
            {"temperature", req.temperature}};
  }

  std::string complete(const ChatRequest& req) override {
    httplib::Client client(endpoint_.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto res =
        client.Post(endpoint_.path, headers, request_body(req).dump(), "application/json");
    if (!res) {
      throw TransportError("judge request to " + endpoint_.origin + endpoint_.path +
                           " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      // A malformed envelope is treated like an unparseable reply.
      return std::string("<invalid response envelope: ") + e.what() + ">";
    }
  }

 private:
  EndpointUrl endpoint_;
  std::chrono::milliseconds timeout_;
  std::string api_key_;
};

}  // namespace vlmreward
