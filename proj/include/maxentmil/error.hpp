#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace maxentmil {

// Argument validation failures use std::invalid_argument directly.

/// Raised when an iterative solver exhausts its budget without meeting its
/// stopping rule.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_grad_norm,
                   std::vector<std::string> failed_bags = {})
      : std::runtime_error(what),
        last_grad_norm_(last_grad_norm),
        failed_bags_(std::move(failed_bags)) {}

  double last_grad_norm() const { return last_grad_norm_; }
  const std::vector<std::string>& failed_bags() const { return failed_bags_; }

 private:
  double last_grad_norm_;
  std::vector<std::string> failed_bags_;
};

/// A request would exceed a configured memory/size budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection sampling cannot make progress (density too peaked for the grid).
class DegenerateDensityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace maxentmil
