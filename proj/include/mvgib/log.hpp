#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <string_view>
#include <utility>

namespace mvgib::log {

using Sink = std::function<void(std::string_view)>;

namespace detail {
inline Sink& warning_sink() {
  static Sink sink = [](std::string_view msg) {
    std::cerr << "[mvgib] warning: " << msg << '\n';
  };
  return sink;
}
}  // namespace detail

inline void warn(std::string_view msg) { detail::warning_sink()(msg); }

/// Replaces the warning sink for the lifetime of the guard.
class ScopedSink {
 public:
  explicit ScopedSink(Sink sink) : previous_(std::move(detail::warning_sink())) {
    detail::warning_sink() = std::move(sink);
  }
  ~ScopedSink() { detail::warning_sink() = std::move(previous_); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  Sink previous_;
};

}  // namespace mvgib::log
