#pragma once

#include <stdexcept>

namespace dtn {

// Caller error: bad arguments, wrong shapes, misuse of a contract.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Transient fetch failure; retrying with the same arguments may succeed.
struct DownloadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cached or downloaded bytes do not match their recorded checksum, or a
// file fails structural decoding.
struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dtn
