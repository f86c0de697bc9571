#pragma once

#include <stdexcept>
#include <string>

namespace chainsight {

// Every failure raised by the library derives from this. The CLI maps any
// of these to the "data error" exit status.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Inputs that do not line up (config, length, feature width).
class shape_error : public error {
public:
  using error::error;
};

// A parameter outside the domain an operation is defined on.
class domain_error : public error {
public:
  using error::error;
};

// Unreadable, truncated or malformed files.
class format_error : public error {
public:
  using error::error;
};

// Requested work does not fit: too many carriers for the free space, an
// enumeration beyond its limit, a partition sum beyond its budget.
class capacity_error : public error {
public:
  using error::error;
};

} // namespace chainsight
