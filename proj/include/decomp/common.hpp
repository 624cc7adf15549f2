#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace decomp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Argument outside an operation's stated domain.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// An iteration or integration failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// A constructed object violates one of its invariants.
class ConstructionError : public std::runtime_error {
 public:
  explicit ConstructionError(const std::string& what) : std::runtime_error(what) {}
};

// The profile extraction loop cannot proceed.
class ExtractionError : public std::runtime_error {
 public:
  explicit ExtractionError(const std::string& what) : std::runtime_error(what) {}
};

// Geodesic ball, used for net regions and function supports.
struct Ball {
  Vec center;
  double radius = 0.0;
};

// C2 radial cutoff: identically 1 on [0, 0.6], quintic ramp to 0 at 1.
// The ramp 6u^5 - 15u^4 + 10u^3 has vanishing first and second
// derivatives at both ends, so the template is C2 on [0, inf).
double bump_template(double t);
double bump_template_d1(double t);

// splitmix64 mix; derives per-object RNG streams from one run seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Uniform in [0,1) from the top 53 bits of the engine output. Avoids
// std distribution objects so streams do not depend on the standard
// library implementation.
double uniform01(std::mt19937_64& rng);

inline double sq(double x) { return x * x; }

}  // namespace decomp
