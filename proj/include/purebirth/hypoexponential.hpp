#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "purebirth/error.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/summation.hpp"

namespace purebirth {

/// Two rates closer than this (relative) are treated as equal.
inline constexpr double kDistinctRateTolerance = 1e-9;

/// Law of a sum of independent exponential stages with pairwise distinct
/// rates, in partial-fraction form:
///
///   f(t) = sum_k C_k r_k exp(-r_k t),   C_k = prod_{j != k} r_j / (r_j - r_k).
///
/// The C_k alternate in sign and grow quickly with the number of stages, so
/// the form is only numerically useful for short, well-separated rate lists.
class HittingTimeDistribution {
 public:
  /// Throws RepeatedRates when two rates coincide within kDistinctRateTolerance.
  static HittingTimeDistribution from_rates(std::vector<double> rates) {
    if (rates.empty()) throw Error(ErrorKind::OutOfRange, "at least one exponential stage is required");
    for (double r : rates) detail::require_positive(r, "stage rate");

    std::vector<double> sorted = rates;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i] - sorted[i - 1] <= kDistinctRateTolerance * sorted[i]) {
        throw Error(ErrorKind::RepeatedRates,
                    "stage rate " + std::to_string(sorted[i]) +
                        " is repeated; use the forward solver for this model");
      }
    }

    HittingTimeDistribution d;
    d.coefficients_.resize(rates.size());
    for (std::size_t k = 0; k < rates.size(); ++k) {
      double c = 1.0;
      for (std::size_t j = 0; j < rates.size(); ++j) {
        if (j != k) c *= rates[j] / (rates[j] - rates[k]);
      }
      d.coefficients_[k] = c;
    }
    d.rates_ = std::move(rates);
    return d;
  }

  std::span<const double> rates() const noexcept { return rates_; }
  std::span<const double> coefficients() const noexcept { return coefficients_; }
  /// Always true for a constructed distribution; repeated rates are rejected.
  bool distinct() const noexcept { return true; }
  std::size_t stages() const noexcept { return rates_.size(); }

  double density(double t) const {
    if (t < 0.0) return 0.0;
    CompensatedSum s;
    for (std::size_t k = 0; k < rates_.size(); ++k) {
      s += coefficients_[k] * rates_[k] * std::exp(-rates_[k] * t);
    }
    return s.value();
  }

  /// P(T > t).
  double survival(double t) const {
    if (t <= 0.0) return 1.0;
    CompensatedSum s;
    for (std::size_t k = 0; k < rates_.size(); ++k) s += coefficients_[k] * std::exp(-rates_[k] * t);
    return s.value();
  }

  double cdf(double t) const { return 1.0 - survival(t); }

  /// Integral of the density over [0, inf), taken termwise: sum_k C_k.
  double total_mass() const {
    CompensatedSum s;
    for (double c : coefficients_) s += c;
    return s.value();
  }

  /// Termwise first moment sum_k C_k / r_k; equals sum_k 1/r_k.
  double mean() const {
    CompensatedSum s;
    for (std::size_t k = 0; k < rates_.size(); ++k) s += coefficients_[k] / rates_[k];
    return s.value();
  }

 private:
  HittingTimeDistribution() = default;

  std::vector<double> rates_;
  std::vector<double> coefficients_;
};

/// Law of the absorption time from start_state.
inline HittingTimeDistribution hitting_time_distribution(const RateModel& model, State start_state = 1) {
  model.require_transient(start_state);
  return HittingTimeDistribution::from_rates(model.rates_from(start_state));
}

}  // namespace purebirth
