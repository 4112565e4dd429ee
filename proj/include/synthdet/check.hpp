// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace synthdet {

// Error type for all invariant/contract violations raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace synthdet

// Validates a precondition or invariant; throws synthdet::Error with a
// streamed message naming the offending value/record.
#define SD_CHECK(cond, msg_stream)                       \
  do {                                                   \
    if (!(cond)) {                                       \
      std::ostringstream sd_os_;                         \
      sd_os_ << "check failed (" << #cond << "): "       \
             << msg_stream;                              \
      throw ::synthdet::Error(sd_os_.str());             \
    }                                                    \
  } while (0)

#define SD_FAIL(msg_stream)                              \
  do {                                                   \
    std::ostringstream sd_os_;                           \
    sd_os_ << msg_stream;                                \
    throw ::synthdet::Error(sd_os_.str());               \
  } while (0)
