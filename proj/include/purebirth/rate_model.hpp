#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "purebirth/error.hpp"

namespace purebirth {

/// Number of infected individuals. States start at 1.
using State = std::int64_t;

enum class Family {
  /// Contacts at rate lambda between uniformly chosen pairs, each transmitting
  /// with probability p: rate 2k(N-k) lambda p / (N(N-1)).
  HypergeometricMixing,
  /// Same chain with lambda = N mu.
  YuleScaled,
  /// rate c k^exponent, optionally truncated at a cap state.
  PowerLaw,
};

constexpr std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::HypergeometricMixing: return "hypergeometric";
    case Family::YuleScaled: return "yule";
    case Family::PowerLaw: return "powerlaw";
  }
  return "unknown";
}

inline std::optional<Family> parse_family(std::string_view name) {
  if (name == "hypergeometric" || name == "HypergeometricMixing") return Family::HypergeometricMixing;
  if (name == "yule" || name == "YuleScaled") return Family::YuleScaled;
  if (name == "powerlaw" || name == "PowerLaw") return Family::PowerLaw;
  return std::nullopt;
}

/// Unvalidated parameter record, as read from flags or a config file.
struct RateSpec {
  std::optional<Family> family;
  std::optional<std::int64_t> population;     // N
  std::optional<double> contact_rate;         // lambda
  std::optional<double> per_capita_rate;      // mu
  std::optional<double> transmission_prob;    // p
  std::optional<double> coefficient;          // c
  std::optional<double> exponent;
  std::optional<std::int64_t> state_cap;
  std::string time_unit = "time";
};

class RateModel;
RateModel build_rate_model(const RateSpec& spec);

/// Immutable, validated family of per-state birth rates. Construct through
/// build_rate_model().
class RateModel {
 public:
  Family family() const noexcept { return family_; }
  const std::string& time_unit() const noexcept { return time_unit_; }

  /// Population N for the finite families.
  std::int64_t population() const noexcept { return population_; }
  /// lambda (for YuleScaled this is N mu).
  double contact_rate() const noexcept { return contact_rate_; }
  double per_capita_rate() const noexcept { return per_capita_rate_; }
  double transmission_prob() const noexcept { return transmission_prob_; }
  double coefficient() const noexcept { return coefficient_; }
  double exponent() const noexcept { return exponent_; }
  std::optional<std::int64_t> state_cap() const noexcept { return cap_; }

  /// False only for an uncapped, non-explosive PowerLaw model.
  bool bounded() const noexcept { return family_ != Family::PowerLaw || cap_.has_value(); }
  /// PowerLaw models that stop at a cap rather than a true absorbing state.
  bool truncated() const noexcept { return family_ == Family::PowerLaw && cap_.has_value(); }

  /// N for finite families, the cap for PowerLaw.
  State absorbing_state() const {
    if (!bounded()) {
      throw Error(ErrorKind::CapRequired, "power-law model has no state cap; the state space is unbounded");
    }
    return family_ == Family::PowerLaw ? *cap_ : population_;
  }

  State last_transient_state() const { return absorbing_state() - 1; }

  bool is_transient(State k) const {
    if (k < 1) return false;
    return !bounded() || k < absorbing_state();
  }

  double rate_at(State k) const {
    if (k < 1 || (bounded() && k > absorbing_state())) {
      throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(k) + " outside the model's state space");
    }
    if (bounded() && k == absorbing_state()) return 0.0;
    return unchecked_rate(k);
  }

  /// rate_at() without range checks; k must be transient.
  double unchecked_rate(State k) const noexcept {
    if (family_ == Family::PowerLaw) {
      return coefficient_ * std::pow(static_cast<double>(k), exponent_);
    }
    const auto n = population_;
    // k(N-k) is formed in integers so that rate(k) == rate(N-k) bit for bit.
    const double pairs = static_cast<double>(k * (n - k));
    const double fraction = 2.0 * pairs / (static_cast<double>(n) * static_cast<double>(n - 1));
    return fraction * contact_rate_ * transmission_prob_;
  }

  std::vector<State> transient_states() const {
    const State last = last_transient_state();
    std::vector<State> states;
    states.reserve(static_cast<std::size_t>(last));
    for (State k = 1; k <= last; ++k) states.push_back(k);
    return states;
  }

  /// The rates of states from..last transient state, in order.
  std::vector<double> rates_from(State from) const {
    const State last = last_transient_state();
    std::vector<double> out;
    if (from <= last) out.reserve(static_cast<std::size_t>(last - from + 1));
    for (State k = from; k <= last; ++k) out.push_back(unchecked_rate(k));
    return out;
  }

  void require_transient(State k) const {
    if (!is_transient(k)) {
      throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(k) + " is not transient");
    }
  }

  void require_state(State k) const {
    if (k < 1 || k > absorbing_state()) {
      throw Error(ErrorKind::StateOutOfRange, "state " + std::to_string(k) + " outside [1, " +
                                                  std::to_string(absorbing_state()) + "]");
    }
  }

  /// Same model with a different cap (PowerLaw only).
  RateModel with_cap(std::int64_t cap) const;

 private:
  friend RateModel build_rate_model(const RateSpec& spec);
  RateModel() = default;

  Family family_ = Family::HypergeometricMixing;
  std::int64_t population_ = 0;
  double contact_rate_ = 0.0;
  double per_capita_rate_ = 0.0;
  double transmission_prob_ = 1.0;
  double coefficient_ = 0.0;
  double exponent_ = 0.0;
  std::optional<std::int64_t> cap_;
  std::string time_unit_;
};

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw Error(ErrorKind::OutOfRange, std::string(name) + " must be positive and finite");
  }
}

template <class T>
const T& require_present(const std::optional<T>& v, const char* name, Family f) {
  if (!v) {
    throw Error(ErrorKind::MissingParameter,
                std::string(name) + " is required for the " + std::string(to_string(f)) + " family");
  }
  return *v;
}

}  // namespace detail

inline RateModel build_rate_model(const RateSpec& spec) {
  if (!spec.family) throw Error(ErrorKind::MissingParameter, "family is required");
  const Family f = *spec.family;

  RateModel m;
  m.family_ = f;
  m.time_unit_ = spec.time_unit;

  if (f == Family::PowerLaw) {
    m.coefficient_ = detail::require_present(spec.coefficient, "c", f);
    detail::require_positive(m.coefficient_, "c");
    m.exponent_ = detail::require_present(spec.exponent, "exponent", f);
    if (!std::isfinite(m.exponent_)) throw Error(ErrorKind::OutOfRange, "exponent must be finite");
    if (spec.state_cap) {
      if (*spec.state_cap < 2) {
        throw Error(ErrorKind::OutOfRange, "cap must be at least 2 so that one transient state exists");
      }
      m.cap_ = spec.state_cap;
    } else if (m.exponent_ > 1.0) {
      throw Error(ErrorKind::CapRequired,
                  "power-law exponent > 1 reaches infinitely many states in finite time; set cap");
    }
    return m;
  }

  const auto n = detail::require_present(spec.population, "N", f);
  if (n < 2) throw Error(ErrorKind::OutOfRange, "N must be at least 2, got " + std::to_string(n));
  // k(N-k) must fit in 64 bits.
  if (n > (std::int64_t{1} << 31)) throw Error(ErrorKind::OutOfRange, "N is too large");
  m.population_ = n;

  m.transmission_prob_ = detail::require_present(spec.transmission_prob, "p", f);
  if (!(m.transmission_prob_ > 0.0 && m.transmission_prob_ <= 1.0)) {
    throw Error(ErrorKind::OutOfRange, "p must lie in (0, 1]");
  }

  if (f == Family::HypergeometricMixing) {
    m.contact_rate_ = detail::require_present(spec.contact_rate, "lambda", f);
    detail::require_positive(m.contact_rate_, "lambda");
  } else {
    m.per_capita_rate_ = detail::require_present(spec.per_capita_rate, "mu", f);
    detail::require_positive(m.per_capita_rate_, "mu");
    m.contact_rate_ = static_cast<double>(n) * m.per_capita_rate_;
    detail::require_positive(m.contact_rate_, "N*mu");
  }
  return m;
}

inline RateModel RateModel::with_cap(std::int64_t cap) const {
  if (family_ != Family::PowerLaw) throw Error(ErrorKind::WrongFamily, "only power-law models carry a cap");
  RateSpec spec;
  spec.family = family_;
  spec.coefficient = coefficient_;
  spec.exponent = exponent_;
  spec.state_cap = cap;
  spec.time_unit = time_unit_;
  return build_rate_model(spec);
}

// Free-function spellings of the model queries.
inline double rate_at(const RateModel& model, State k) { return model.rate_at(k); }
inline std::vector<State> transient_states(const RateModel& model) { return model.transient_states(); }

}  // namespace purebirth
