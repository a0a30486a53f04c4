#pragma once

#include <stdexcept>
#include <string>

namespace wfrflow {

// Every failure surfaced by the library derives from Error; category() is the
// short tag the CLI prints and maps to an exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
public:
  using Error::Error;
  const char* category() const noexcept override { return "invalid-argument"; }
};

class IoError : public Error {
public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  const char* category() const noexcept override { return "parse"; }
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  const char* category() const noexcept override { return "convergence"; }
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

class EmptySupportError : public Error {
public:
  using Error::Error;
  const char* category() const noexcept override { return "empty-support"; }
};

class MassFloorError : public Error {
public:
  MassFloorError(const std::string& what, double mass)
      : Error(what + " (mass " + std::to_string(mass) + ")"), mass_(mass) {}
  const char* category() const noexcept override { return "mass-floor"; }
  double mass() const noexcept { return mass_; }

private:
  double mass_;
};

class NonFiniteError : public Error {
public:
  using Error::Error;
  const char* category() const noexcept override { return "non-finite"; }
};

}  // namespace wfrflow
