#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "purebirth/error.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/summation.hpp"

namespace purebirth {

__extension__ using uint128 = unsigned __int128;

inline constexpr double euler_gamma = std::numbers::egamma;

/// H_n = 1 + 1/2 + ... + 1/n, summed with compensation from the small end.
inline double harmonic_number(std::int64_t n) {
  if (n < 1) throw Error(ErrorKind::OutOfRange, "harmonic_number needs n >= 1");
  CompensatedSum sum;
  for (std::int64_t k = n; k >= 1; --k) sum += 1.0 / static_cast<double>(k);
  return sum.value();
}

struct AbsorptionTimeReport {
  /// Sum of mean holding times 1/rate(k) over transient states from start_state.
  double exact_mean = 0.0;
  /// Harmonic-number closed form of exact_mean; finite families started at 1.
  std::optional<double> closed_form;
  /// ln N / (p mu); YuleScaled only.
  std::optional<double> approx_mean;
  /// (ln N + gamma) / (p mu); explains most of the gap between the two above.
  std::optional<double> euler_refined;
  /// Sum of 1/rate(k)^2 (holding times are independent exponentials).
  double variance = 0.0;
  State start_state = 1;
  std::string time_unit;
  /// Power-law chain cut off at its cap.
  bool truncated = false;
};

/// ln N / (p mu) for a YuleScaled model.
inline double expected_absorption_time_approx(const RateModel& model) {
  if (model.family() != Family::YuleScaled) {
    throw Error(ErrorKind::WrongFamily, "the logarithmic approximation applies to the yule family only");
  }
  return std::log(static_cast<double>(model.population())) /
         (model.transmission_prob() * model.per_capita_rate());
}

inline AbsorptionTimeReport expected_absorption_time(const RateModel& model, State start_state = 1) {
  model.require_transient(start_state);

  CompensatedSum mean;
  CompensatedSum second;
  const State last = model.last_transient_state();
  for (State k = start_state; k <= last; ++k) {
    const double hold = 1.0 / model.unchecked_rate(k);
    if (!std::isfinite(hold)) {
      throw Error(ErrorKind::Divergent, "rate at state " + std::to_string(k) + " underflows to zero");
    }
    mean += hold;
    second += hold * hold;
  }

  AbsorptionTimeReport report;
  report.exact_mean = mean.value();
  report.variance = second.value();
  report.start_state = start_state;
  report.time_unit = model.time_unit();
  report.truncated = model.truncated();

  if (model.family() != Family::PowerLaw && start_state == 1) {
    const double n = static_cast<double>(model.population());
    const double h = harmonic_number(model.population() - 1);
    const double closed =
        model.family() == Family::YuleScaled
            ? (n - 1.0) / (model.transmission_prob() * model.per_capita_rate() * n) * h
            : (n - 1.0) / (model.transmission_prob() * model.contact_rate()) * h;
    if (std::fabs(closed - report.exact_mean) > 1e-10 * report.exact_mean) {
      throw std::logic_error("harmonic closed form disagrees with the reciprocal-rate sum");
    }
    report.closed_form = closed;
  }

  if (model.family() == Family::YuleScaled) {
    report.approx_mean = expected_absorption_time_approx(model);
    report.euler_refined = (std::log(static_cast<double>(model.population())) + euler_gamma) /
                           (model.transmission_prob() * model.per_capita_rate());
  }
  return report;
}

struct PowerLawReport {
  double exponent = 0.0;
  std::int64_t terms = 0;
  /// (1/c) * sum_{k=1}^{n} k^(-exponent)
  double value = 0.0;
  /// exponent +2: pi^2 / (6c), the n -> infinity limit.
  std::optional<double> limit;
  /// exponent +2: 1/(c n), bounds limit - value.
  std::optional<double> tail_bound;
  /// exponent -2: leading-order n^3 / (3c).
  std::optional<double> growth;
};

/// Expected time through states 1..n of the rate families c k^2 and c / k^2.
inline PowerLawReport powerlaw_expected_time(double c, double exponent, std::int64_t n) {
  detail::require_positive(c, "c");
  if (n < 1) throw Error(ErrorKind::OutOfRange, "n must be at least 1");

  PowerLawReport r;
  r.exponent = exponent;
  r.terms = n;
  if (exponent == 2.0) {
    CompensatedSum sum;
    for (std::int64_t k = n; k >= 1; --k) {
      const double kd = static_cast<double>(k);
      sum += 1.0 / (kd * kd);
    }
    r.value = sum.value() / c;
    r.limit = std::numbers::pi * std::numbers::pi / (6.0 * c);
    r.tail_bound = 1.0 / (c * static_cast<double>(n));
  } else if (exponent == -2.0) {
    if (n > 100'000'000) throw Error(ErrorKind::OutOfRange, "n too large for exact sum of squares");
    uint128 direct = 0;
    for (std::int64_t k = 1; k <= n; ++k) {
      direct += static_cast<uint128>(k) * static_cast<uint128>(k);
    }
    const auto nn = static_cast<uint128>(n);
    const uint128 closed = nn * (nn + 1) * (2 * nn + 1) / 6;
    if (direct != closed) throw std::logic_error("sum of squares disagrees with n(n+1)(2n+1)/6");
    r.value = static_cast<double>(closed) / c;
    const double nd = static_cast<double>(n);
    r.growth = nd * nd * nd / (3.0 * c);
  } else {
    throw Error(ErrorKind::OutOfRange, "powerlaw_expected_time supports exponent +2 or -2");
  }
  return r;
}

}  // namespace purebirth
