#include "noonfi/phase_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "noonfi/errors.hpp"

namespace noonfi {

std::int64_t OutcomeCounts::trials() const {
  return std::accumulate(outcomes.begin(), outcomes.end(), lost);
}

double log_likelihood(const OutcomeDistribution& dist, const OutcomeCounts& counts, double phi) {
  if (counts.outcomes.size() != dist.size()) {
    throw DomainError("count vector does not match the distribution's outcomes");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double ll = 0.0;
  auto add = [&](std::int64_t n, double p) {
    if (n == 0) return;
    ll = p > 0.0 ? ll + static_cast<double>(n) * std::log(p) : kNegInf;
  };
  for (std::size_t i = 0; i < dist.size(); ++i) add(counts.outcomes[i], dist.probability(i, phi));
  add(counts.lost, dist.loss_complement(phi));
  return ll;
}

double estimate_phase_ml(const OutcomeDistribution& dist, const OutcomeCounts& counts, double lo, double hi,
                         double tol, int grid_points) {
  if (!(hi > lo)) throw DomainError("estimation interval is empty");
  if (grid_points < 3) throw DomainError("need at least 3 grid points");
  const double step = (hi - lo) / (grid_points - 1);
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double ll = log_likelihood(dist, counts, lo + i * step);
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }
  double a = lo + std::max(best - 1, 0) * step;
  double b = lo + std::min(best + 1, grid_points - 1) * step;
  constexpr double kInvGolden = 0.6180339887498949;
  double x1 = b - kInvGolden * (b - a), x2 = a + kInvGolden * (b - a);
  double f1 = log_likelihood(dist, counts, x1), f2 = log_likelihood(dist, counts, x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvGolden * (b - a);
      f2 = log_likelihood(dist, counts, x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvGolden * (b - a);
      f1 = log_likelihood(dist, counts, x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace noonfi
