#pragma once

#include <stdexcept>
#include <string>

namespace mixent {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
  Usage,      // bad arguments or preconditions
  Data,       // malformed or unusable input data
  Numerical,  // factorization / convergence failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// A mixture component lost (almost) all of its responsibility mass.
struct EmptyComponent : NumericalError {
  EmptyComponent(int component, double mass)
      : NumericalError("component " + std::to_string(component) +
                       " is empty (responsibility mass " + std::to_string(mass) + ")"),
        component(component) {}
  int component;
};

/// Every EM restart for one (K, family) cell failed.
struct AllInitsFailed : NumericalError {
  explicit AllInitsFailed(const std::string& what) : NumericalError(what) {}
};

}  // namespace mixent
