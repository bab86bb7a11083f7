/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/remote.hpp
 * \brief Token model served over HTTP.
 *
 *  GET  <base>/v1/vocab           -> {"tokens": [...], "eos": int}
 *  POST <base>/v1/next_logprobs   {"tokens": [int...]} -> {"logprobs": [float...]}
 */
#pragma once

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "gadkit/detail/hash.hpp"
#include "gadkit/errors.hpp"
#include "gadkit/lm.hpp"

namespace gadkit {

struct RemoteOptions {
  int timeout_ms = 10000;
  int retries = 2;  // extra attempts after the first failure
  int retry_backoff_ms = 50;

  /// Defaults, with the timeout taken from GADKIT_REMOTE_TIMEOUT_MS when set.
  static RemoteOptions from_environment() {
    RemoteOptions o;
    if (const char* env = std::getenv("GADKIT_REMOTE_TIMEOUT_MS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v <= 0) {
        throw UsageError("GADKIT_REMOTE_TIMEOUT_MS must be a positive integer");
      }
      o.timeout_ms = static_cast<int>(v);
    }
    return o;
  }
};

namespace detail {

struct RemoteEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string base;    // path prefix without trailing '/'
};

inline RemoteEndpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw UsageError("remote model URL must start with http:// ('" + url + "')");
  }
  const auto slash = url.find('/', scheme + 3);
  RemoteEndpoint e;
  e.origin = url.substr(0, slash);
  if (e.origin.size() <= scheme + 3) throw UsageError("remote model URL has no host ('" + url + "')");
  if (slash != std::string::npos) e.base = url.substr(slash);
  while (!e.base.empty() && e.base.back() == '/') e.base.pop_back();
  return e;
}

}  // namespace detail

class RemoteModel final : public TokenModel {
 public:
  /// Connects and fetches the vocabulary.
  static RemoteModel connect(const std::string& url, const RemoteOptions& options = RemoteOptions::from_environment()) {
    const auto endpoint = detail::split_url(url);
    auto client = make_client(endpoint, options);
    const auto body = request(options, [&] { return client->Get(endpoint.base + "/v1/vocab"); });
    Vocabulary vocab = [&] {
      try {
        const auto j = nlohmann::json::parse(body);
        return Vocabulary(j.at("tokens").get<std::vector<std::string>>(), j.at("eos").get<TokenId>());
      } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("malformed vocabulary response: ") + e.what());
      } catch (const UsageError& e) {
        throw ModelError(std::string("invalid vocabulary from server: ") + e.what());
      }
    }();
    return RemoteModel(std::move(vocab), url, endpoint, options, std::move(client));
  }

  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override {
    check_prefix(prefix);
    const std::string payload = nlohmann::json{{"tokens", TokenSeq(prefix.begin(), prefix.end())}}.dump();
    std::lock_guard<std::mutex> lock(*mutex_);
    const auto body = request(options_, [&] {
      return client_->Post(endpoint_.base + "/v1/next_logprobs", payload, "application/json");
    });
    std::vector<double> logs;
    try {
      const auto j = nlohmann::json::parse(body);
      for (const auto& v : j.at("logprobs")) {
        logs.push_back(v.is_null() ? kNegInf : v.get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("malformed next_logprobs response: ") + e.what());
    }
    if (logs.size() != static_cast<std::size_t>(vocabulary().size())) {
      throw ModelError("remote returned " + std::to_string(logs.size()) + " log-probabilities for a vocabulary of " +
                       std::to_string(vocabulary().size()));
    }
    double hi = kNegInf;
    for (double v : logs) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) throw ModelError("remote returned NaN or +inf");
      hi = std::max(hi, v);
    }
    if (hi == kNegInf) throw ModelError("remote returned an all-zero distribution");
    std::vector<double> probs(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) probs[i] = std::exp(logs[i] - hi);
    return normalized_logs(probs, "remote response");
  }

  /// URL plus vocabulary. The server's weights are not observable, so drift is not detected.
  std::string fingerprint() const override {
    detail::Fnv1a h;
    h.update("remote");
    h.update(url_);
    h.update(vocabulary().fingerprint());
    return h.hex();
  }

  const std::string& url() const { return url_; }

 private:
  RemoteModel(Vocabulary vocab, std::string url, detail::RemoteEndpoint endpoint, RemoteOptions options,
              std::unique_ptr<httplib::Client> client)
      : TokenModel(std::move(vocab)),
        url_(std::move(url)),
        endpoint_(std::move(endpoint)),
        options_(options),
        client_(std::move(client)),
        mutex_(std::make_unique<std::mutex>()) {}

  static std::unique_ptr<httplib::Client> make_client(const detail::RemoteEndpoint& e, const RemoteOptions& o) {
    auto client = std::make_unique<httplib::Client>(e.origin);
    if (!client->is_valid()) throw UsageError("unsupported remote model URL '" + e.origin + "'");
    const auto timeout = std::chrono::milliseconds(o.timeout_ms);
    client->set_connection_timeout(timeout);
    client->set_read_timeout(timeout);
    client->set_write_timeout(timeout);
    return client;
  }

  template <typename Call>
  static std::string request(const RemoteOptions& options, Call&& call) {
    std::string last_error;
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options.retry_backoff_ms));
      auto res = call();
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return res->body;
      last_error = "HTTP status " + std::to_string(res->status);
      if (res->status < 500) break;  // client errors are not retried
    }
    throw ModelError("remote model request failed: " + last_error);
  }

  std::string url_;
  detail::RemoteEndpoint endpoint_;
  RemoteOptions options_;
  std::unique_ptr<httplib::Client> client_;
  std::unique_ptr<std::mutex> mutex_;
};

inline RemoteModel connect_remote(const std::string& url,
                                  const RemoteOptions& options = RemoteOptions::from_environment()) {
  return RemoteModel::connect(url, options);
}

}  // namespace gadkit
