#pragma once

#include <stdexcept>
#include <string>

namespace lprt {

/// Invalid domain description (non-unit normal, empty or unbounded region, ...).
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PointOutsideDomain : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidExponent : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two fields (or a field and an operator) live on different discretizations.
class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class QuadratureMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A bound check was requested whose hypotheses (e.g. nu > 0) do not hold.
class HypothesesNotMet : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DegenerateStart : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lprt
