#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mimo {

using Complex = std::complex<double>;
using Index = Eigen::Index;

/// Speed of light in vacuum (m/s), SI exact.
inline constexpr double kSpeedOfLight = 2.99792458e8;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or semantically invalid configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A replica would not fit inside the observation window.
class WindowError : public Error {
public:
  WindowError() : Error("target outside observation window") {}
  explicit WindowError(const std::string &detail)
      : Error("target outside observation window: " + detail) {}
};

/// Two candidate locations share a delay on some path, so the joint
/// reflection-coefficient estimate is not identifiable.
class SingularGramError : public Error {
public:
  SingularGramError()
      : Error("coincident delays; reflection coefficients unidentifiable") {}
};

class CovarianceError : public Error {
public:
  CovarianceError() : Error("invalid noise covariance") {}
};

/// One transmit-receive path: receiver l, transmitter k.
struct PathId {
  int rx = 0;
  int tx = 0;

  friend bool operator==(const PathId &, const PathId &) = default;
};

} // namespace mimo
