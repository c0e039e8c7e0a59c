#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// The numeric type is fixed per build of the library. The default build uses
// float; a second build with HDPPT_REAL=double backs the gradient checks.
// Each build lives in its own inline namespace so both can link into one
// binary.
#ifndef HDPPT_REAL
#define HDPPT_REAL float
#endif

#ifndef HDPPT_ABI
#define HDPPT_ABI f32
#endif

#define HDPPT_NAMESPACE_BEGIN \
  namespace hdppt {           \
  inline namespace HDPPT_ABI {
#define HDPPT_NAMESPACE_END \
  }                         \
  }

HDPPT_NAMESPACE_BEGIN

using Real = HDPPT_REAL;

// Error classes map onto the CLI exit-status classes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

HDPPT_NAMESPACE_END
