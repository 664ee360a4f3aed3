#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wsr/gradcheck.hpp"

// Named finite-difference checks over every differentiable operator and a
// tiny end-to-end DRSN, all in double precision.
namespace wsr::gradsuite {

inline constexpr double kOperatorTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

struct Case {
  std::string name;
  double tolerance = kOperatorTolerance;
  std::function<ag::GradCheckResult()> run;
};

struct Outcome {
  std::string name;
  double tolerance = 0.0;
  ag::GradCheckResult result;
  bool passed = false;
  std::string error;  // set when the case threw
};

// One case per operator argument, on shapes no larger than 4 x 8 x 16.
// Inputs of kinked operators are kept at least 0.1 away from the kinks.
std::vector<Case> operator_cases(std::uint64_t seed = 7);

// Cross-entropy of a DRSN with L=32, 1 stack, 4 channels, 3 classes:
// one case for the input and one per parameter tensor.
std::vector<Case> model_cases(std::uint64_t seed = 7);

std::vector<Case> all_cases(std::uint64_t seed = 7);

std::vector<Outcome> run_cases(const std::vector<Case>& cases);

}  // namespace wsr::gradsuite
