#pragma once

#include <stdexcept>
#include <string>

namespace arcsim {

/// A joint angle outside the ±90° range of a U-joint axis.
class JointLimitError : public std::out_of_range {
 public:
  JointLimitError(const std::string& axis, double value)
      : std::out_of_range("joint limit exceeded on " + axis + " axis: " +
                          std::to_string(value) + " rad"),
        axis_(axis) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ArityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-positive or otherwise invalid time step.
class TimingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A JSON message that does not match its schema.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RegistrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arcsim
