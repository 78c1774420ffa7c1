#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>

#include "har/error.hpp"

namespace testutil {

// Runs fn, expecting a har::Error of the given kind whose message contains
// the given fragment.
inline void expect_error(har::ErrorKind kind, const std::string& fragment,
                         const std::function<void()>& fn) {
  bool threw = false;
  try {
    fn();
  } catch (const har::Error& e) {
    threw = true;
    CHECK(e.kind() == kind);
    if (std::string(e.what()).find(fragment) == std::string::npos) {
      FAIL_CHECK("message \"" << e.what() << "\" lacks \"" << fragment
                              << "\"");
    }
  }
  CHECK_MESSAGE(threw, "expected an error containing \"" << fragment << "\"");
}

inline void check_close(double a, double b, double tol) {
  CHECK_MESSAGE(std::abs(a - b) <= tol,
                a << " vs " << b << " (tol " << tol << ")");
}

}  // namespace testutil
