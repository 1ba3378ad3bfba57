#pragma once

#include <cstdint>
#include <vector>

#include "noonfi/interferometer_model.hpp"

namespace noonfi {

/// Outcome tallies of repeated probe uses: one count per distribution outcome
/// plus the number of uses where nothing was detected.
struct OutcomeCounts {
  std::vector<std::int64_t> outcomes;
  std::int64_t lost = 0;

  std::int64_t trials() const;
};

/// Multinomial log-likelihood of the counts at phase phi (lost uses included).
double log_likelihood(const OutcomeDistribution& dist, const OutcomeCounts& counts, double phi);

/// Maximum-likelihood phase on [lo, hi]: grid scan then golden-section refinement.
/// The interval must lie within one monotonic branch of the fringe for the
/// estimate to be identifiable.
double estimate_phase_ml(const OutcomeDistribution& dist, const OutcomeCounts& counts, double lo, double hi,
                         double tol = 1e-10, int grid_points = 512);

}  // namespace noonfi
