// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/service/runtime.hpp"

#include <memory>
#include <string>

namespace oceanql::service {

/// JSON-over-HTTP front end. Sessions are independent; within a session one
/// evaluate runs at a time and further messages wait in a FIFO queue.
class ApiServer {
 public:
  explicit ApiServer(Runtime& runtime);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws
  /// std::runtime_error when binding fails.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// bind() then listen() on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  [[nodiscard]] std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Standard base64 with padding.
std::string base64_encode(std::string_view bytes);
/// Throws FormatError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace oceanql::service
