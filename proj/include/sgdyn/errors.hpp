#pragma once

#include <stdexcept>
#include <string>

namespace sgdyn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidMesh : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class RefinementError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

class LinearSolverError : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, int iterations, double residual_norm)
      : Error(what), iterations_(iterations), residual_norm_(residual_norm) {}
  int iterations() const { return iterations_; }
  double residual_norm() const { return residual_norm_; }

 private:
  int iterations_;
  double residual_norm_;
};

// Config errors carry the offending line (0 when unknown) and field name.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0, std::string field = {})
      : Error(what), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgdyn
