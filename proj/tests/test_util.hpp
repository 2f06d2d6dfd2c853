#pragma once

#include <functional>
#include <optional>

#include "syntempo/error.hpp"

namespace testutil {

// Runs f and reports the ErrorKind it threw, if any.
inline std::optional<syntempo::ErrorKind> thrown_kind(
    const std::function<void()>& f) {
  try {
    f();
  } catch (const syntempo::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace testutil
