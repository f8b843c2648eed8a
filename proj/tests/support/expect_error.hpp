#pragma once

#include <gtest/gtest.h>

#include <string>

#include "chopnet/error.hpp"

namespace chopnet::testing {

// Runs `fn` and checks that it throws chopnet::Error with `code`. Returns the
// message so callers can check what it names.
template <typename Fn>
std::string expect_error(ErrorCode code, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected " << to_string(code);
  return {};
}

}  // namespace chopnet::testing
