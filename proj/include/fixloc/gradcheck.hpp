#pragma once

// Finite-difference check of the full localizer at small dimensions.

#include <cstdint>

#include "fixloc/autodiff.hpp"
#include "fixloc/model.hpp"

namespace fixloc {

struct ModelGradCheck {
  ad::GradCheckReport report;
  std::size_t candidate_sets = 0;
  std::size_t max_candidates = 0;
};

/// Builds a seeded model of `hp` and a few mutant-derived candidate sets of at
/// most `max_k` paths each, then compares backprop against central differences
/// on the summed loss.
ModelGradCheck check_model_gradients(const HyperParams& hp, std::uint64_t seed, std::size_t max_k = 6);

}  // namespace fixloc
