// SPDX-License-Identifier: Apache-2.0
#include "oceanql/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace oceanql::log {

namespace {

Level initial_level() {
  const char* env = std::getenv("OCEANQL_LOG");
  if (!env) return Level::Warn;
  const std::string v(env);
  if (v == "debug") return Level::Debug;
  if (v == "info") return Level::Info;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Warn;
}

std::atomic<Level>& current() {
  static std::atomic<Level> l{initial_level()};
  return l;
}

constexpr std::string_view name(Level l) {
  switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: return "off";
  }
  return "?";
}

}  // namespace

void set_level(Level l) { current() = l; }
Level level() { return current(); }

void write(Level l, std::string_view message) {
  if (l < current() || l == Level::Off) return;
  static std::mutex mu;
  std::lock_guard lk(mu);
  std::cerr << "[oceanql " << name(l) << "] " << message << '\n';
}

}  // namespace oceanql::log
