#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "purebirth/error.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/summation.hpp"

namespace purebirth {

enum class SolverMethod {
  /// Dormand-Prince 5(4) with per-step error control.
  Adaptive,
  /// Classical fourth-order Runge-Kutta with a fixed step.
  FixedRk4,
};

struct SolverConfig {
  SolverMethod method = SolverMethod::Adaptive;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double max_step = std::numeric_limits<double>::infinity();
  /// Step for FixedRk4; shortened to land exactly on output times.
  double fixed_step = 1e-3;
  std::size_t max_steps = 50'000'000;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw Error(ErrorKind::OutOfRange, "solver tolerances must be positive");
    if (!(max_step > 0.0)) throw Error(ErrorKind::OutOfRange, "max_step must be positive");
    if (method == SolverMethod::FixedRk4 && !(fixed_step > 0.0 && std::isfinite(fixed_step))) {
      throw Error(ErrorKind::OutOfRange, "fixed_step must be positive and finite");
    }
  }
};

/// Entries outside [-kNegativeRoundoff, 1 + kNegativeRoundoff] are a solver failure, not roundoff.
inline constexpr double kNegativeRoundoff = 1e-12;
/// Largest accepted |1 - total probability|.
inline constexpr double kMassTolerance = 1e-8;

struct DistributionSnapshot {
  double time = 0.0;
  /// State of probabilities[0]; every lower state has probability zero.
  State first_state = 1;
  std::vector<double> probabilities;
  double mass_defect = 0.0;
  /// The last entry is a power-law cap holding all mass that escaped upward.
  bool truncated = false;

  State last_state() const noexcept { return first_state + static_cast<State>(probabilities.size()) - 1; }

  double probability(State k) const noexcept {
    if (k < first_state || k > last_state()) return 0.0;
    return probabilities[static_cast<std::size_t>(k - first_state)];
  }

  /// Mass at the absorbing (or cap) state.
  double absorbed() const noexcept { return probabilities.empty() ? 0.0 : probabilities.back(); }
};

inline double mean_state(const DistributionSnapshot& snapshot) {
  CompensatedSum s;
  for (std::size_t i = 0; i < snapshot.probabilities.size(); ++i) {
    const double p = std::clamp(snapshot.probabilities[i], 0.0, 1.0);
    s += static_cast<double>(snapshot.first_state + static_cast<State>(i)) * p;
  }
  return s.value();
}

namespace detail {

/// Right-hand side of the forward equations restricted to states
/// start..absorbing: dp_i = r_{i-1} p_{i-1} - r_i p_i, with r_last = 0.
class BirthGenerator {
 public:
  explicit BirthGenerator(std::vector<double> rates) : rates_(std::move(rates)) {}

  std::size_t size() const noexcept { return rates_.size(); }
  double max_rate() const noexcept { return rates_.empty() ? 0.0 : *std::max_element(rates_.begin(), rates_.end()); }

  void apply(std::span<const double> p, std::span<double> dp) const noexcept {
    double inflow = 0.0;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      const double out = rates_[i] * p[i];
      dp[i] = inflow - out;
      inflow = out;
    }
  }

 private:
  std::vector<double> rates_;
};

class ForwardIntegrator {
 public:
  ForwardIntegrator(const BirthGenerator& gen, const SolverConfig& config)
      : gen_(gen), config_(config), n_(gen.size()), k_(7, std::vector<double>(n_)), tmp_(n_), next_(n_) {
    if (gen.max_rate() > 0.0) h_hint_ = 1.0 / gen.max_rate();
  }

  /// Advances y from t0 to t1 in place.
  void advance(std::vector<double>& y, double t0, double t1) {
    if (t1 <= t0) return;
    if (config_.method == SolverMethod::FixedRk4) {
      rk4(y, t0, t1);
    } else {
      dopri(y, t0, t1);
    }
  }

  /// Largest |1 - sum| seen after any accepted step.
  double worst_step_defect() const noexcept { return worst_defect_; }

 private:
  void check_step_mass(const std::vector<double>& y, double t) {
    CompensatedSum s;
    for (double v : y) s += v;
    const double defect = std::fabs(1.0 - s.value());
    worst_defect_ = std::max(worst_defect_, defect);
    if (!(defect <= kMassTolerance)) {
      throw Error(ErrorKind::ToleranceNotMet, "probability mass drifted by " + std::to_string(defect) +
                                                  " at t=" + std::to_string(t));
    }
  }

  void count_step(double t) {
    if (++steps_ > config_.max_steps) {
      throw Error(ErrorKind::ToleranceNotMet, "step budget exhausted at t=" + std::to_string(t));
    }
  }

  void rk4(std::vector<double>& y, double t0, double t1) {
    const double span = t1 - t0;
    const auto steps = std::max<std::size_t>(static_cast<std::size_t>(std::ceil(span / config_.fixed_step - 1e-9)), 1);
    const double h = span / static_cast<double>(steps);
    auto& k1 = k_[0];
    auto& k2 = k_[1];
    auto& k3 = k_[2];
    auto& k4 = k_[3];
    double t = t0;
    for (std::size_t s = 0; s < steps; ++s) {
      count_step(t);
      gen_.apply(y, k1);
      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + 0.5 * h * k1[i];
      gen_.apply(tmp_, k2);
      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + 0.5 * h * k2[i];
      gen_.apply(tmp_, k3);
      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * k3[i];
      gen_.apply(tmp_, k4);
      for (std::size_t i = 0; i < n_; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      t = (s + 1 == steps) ? t1 : t + h;
      check_step_mass(y, t);
    }
  }

  void dopri(std::vector<double>& y, double t0, double t1) {
    // Dormand-Prince 5(4) tableau.
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;

    auto& k1 = k_[0];
    auto& k2 = k_[1];
    auto& k3 = k_[2];
    auto& k4 = k_[3];
    auto& k5 = k_[4];
    auto& k6 = k_[5];
    auto& k7 = k_[6];

    double t = t0;
    double h = std::min({t1 - t0, config_.max_step, h_hint_});
    if (!(h > 0.0)) h = std::min(t1 - t0, config_.max_step);
    gen_.apply(y, k1);

    while (t < t1) {
      bool last = false;
      if (t + h >= t1 || (t1 - (t + h)) < 1e-12 * std::max(1.0, std::fabs(t1))) {
        h = t1 - t;
        last = true;
      }
      count_step(t);

      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * a21 * k1[i];
      gen_.apply(tmp_, k2);
      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
      gen_.apply(tmp_, k3);
      for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      gen_.apply(tmp_, k4);
      for (std::size_t i = 0; i < n_; ++i) {
        tmp_[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      }
      gen_.apply(tmp_, k5);
      for (std::size_t i = 0; i < n_; ++i) {
        tmp_[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      }
      gen_.apply(tmp_, k6);
      for (std::size_t i = 0; i < n_; ++i) {
        next_[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      }
      gen_.apply(next_, k7);

      double err = 0.0;
      bool out_of_range = false;
      for (std::size_t i = 0; i < n_; ++i) {
        const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double scale = config_.abs_tol + config_.rel_tol * std::max(std::fabs(y[i]), std::fabs(next_[i]));
        err = std::max(err, std::fabs(e) / scale);
        if (next_[i] < -kNegativeRoundoff || next_[i] > 1.0 + kNegativeRoundoff) out_of_range = true;
      }
      if (!std::isfinite(err)) err = std::numeric_limits<double>::max();

      if (err <= 1.0 && !out_of_range) {
        t = last ? t1 : t + h;
        y.swap(next_);
        k1.swap(k7);  // first-same-as-last
        check_step_mass(y, t);
        const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        if (!last) h = std::min(h * grow, config_.max_step);
        h_hint_ = std::min(h * grow, config_.max_step);
      } else {
        const double shrink = out_of_range && err <= 1.0 ? 0.5 : std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
        h *= shrink;
        if (h < 1e-14 * std::max(1.0, std::fabs(t))) {
          throw Error(ErrorKind::ToleranceNotMet, "step size underflow at t=" + std::to_string(t));
        }
      }
    }
  }

  const BirthGenerator& gen_;
  const SolverConfig& config_;
  std::size_t n_;
  std::vector<std::vector<double>> k_;
  std::vector<double> tmp_, next_;
  double worst_defect_ = 0.0;
  double h_hint_ = std::numeric_limits<double>::infinity();
  std::size_t steps_ = 0;
};

inline DistributionSnapshot make_snapshot(const std::vector<double>& y, double t, State first, bool truncated) {
  DistributionSnapshot snap;
  snap.time = t;
  snap.first_state = first;
  snap.truncated = truncated;
  snap.probabilities.resize(y.size());
  CompensatedSum raw;
  double clamped = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = y[i];
    raw += v;
    if (v < -kNegativeRoundoff || v > 1.0 + kNegativeRoundoff || !std::isfinite(v)) {
      throw Error(ErrorKind::ToleranceNotMet, "probability of state " + std::to_string(first + static_cast<State>(i)) +
                                                  " left [0,1] at t=" + std::to_string(t));
    }
    if (v < 0.0) {
      clamped += -v;
      v = 0.0;
    } else if (v > 1.0) {
      clamped += v - 1.0;
      v = 1.0;
    }
    snap.probabilities[i] = v;
  }
  snap.mass_defect = std::fabs(1.0 - raw.value()) + clamped;
  if (!(snap.mass_defect <= kMassTolerance)) {
    throw Error(ErrorKind::ToleranceNotMet, "mass defect " + std::to_string(snap.mass_defect) +
                                                " exceeds tolerance at t=" + std::to_string(t));
  }
  return snap;
}

}  // namespace detail

/// Solves the forward equations from a point mass at start_state and returns
/// one snapshot per requested time. Times must be nonnegative and strictly
/// increasing; integration carries over from one time to the next.
inline std::vector<DistributionSnapshot> forward_probabilities(const RateModel& model, State start_state,
                                                               std::span<const double> times,
                                                               const SolverConfig& config = {}) {
  config.validate();
  model.require_state(start_state);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i])) {
      throw Error(ErrorKind::OutOfRange, "times must be finite and nonnegative");
    }
    if (i > 0 && !(times[i] > times[i - 1])) throw Error(ErrorKind::OutOfRange, "times must be strictly increasing");
  }

  std::vector<double> rates = model.rates_from(start_state);
  rates.push_back(0.0);  // absorbing or cap state
  detail::BirthGenerator gen(std::move(rates));

  std::vector<double> y(gen.size(), 0.0);
  y[0] = 1.0;

  detail::ForwardIntegrator integrator(gen, config);
  std::vector<DistributionSnapshot> out;
  out.reserve(times.size());
  double t = 0.0;
  for (double target : times) {
    integrator.advance(y, t, target);
    t = target;
    out.push_back(detail::make_snapshot(y, t, start_state, model.truncated()));
  }
  return out;
}

inline DistributionSnapshot forward_probabilities(const RateModel& model, State start_state, double t,
                                                  const SolverConfig& config = {}) {
  const double times[] = {t};
  return forward_probabilities(model, start_state, std::span<const double>(times), config).front();
}

/// P(T <= t): forward-solution mass at the absorbing or cap state.
inline double absorption_probability(const RateModel& model, State start_state, double t,
                                     const SolverConfig& config = {}) {
  return forward_probabilities(model, start_state, t, config).absorbed();
}

}  // namespace purebirth
