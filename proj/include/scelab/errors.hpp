#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scelab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Derivative order outside what a coefficient family provides exactly.
class UnsupportedOrder : public Error {
 public:
  explicit UnsupportedOrder(int order, int max_order)
      : Error("unsupported derivative order " + std::to_string(order) +
              " (maximum " + std::to_string(max_order) + ")"),
        order_(order) {}
  int order() const noexcept { return order_; }

 private:
  int order_;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// A characteristic left the finite range the integrators accept.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, double value)
      : Error("trajectory diverged at step " + std::to_string(step) +
              " (state " + std::to_string(value) + ")"),
        step_(step),
        value_(value) {}
  int step() const noexcept { return step_; }
  double value() const noexcept { return value_; }

 private:
  int step_;
  double value_;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

/// Carries every validation problem found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += "; ";
      out += items[i];
    }
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace scelab
