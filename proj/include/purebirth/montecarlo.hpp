#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "purebirth/error.hpp"
#include "purebirth/forward_solver.hpp"
#include "purebirth/random.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/summation.hpp"

namespace purebirth {

struct TrajectoryEvent {
  double time = 0.0;
  State state = 1;

  friend bool operator==(const TrajectoryEvent&, const TrajectoryEvent&) = default;
};

/// One sample path: (0, start) followed by one event per birth.
struct Trajectory {
  std::vector<TrajectoryEvent> events;
  bool absorbed = false;
  double terminal_time = 0.0;
};

/// Checks the pure-birth path invariants against the model the path came from.
inline bool is_valid_trajectory(const Trajectory& path, const RateModel& model, State start_state) {
  if (path.events.empty()) return false;
  if (path.events.front().time != 0.0 || path.events.front().state != start_state) return false;
  for (std::size_t i = 1; i < path.events.size(); ++i) {
    if (!(path.events[i].time > path.events[i - 1].time)) return false;
    if (path.events[i].state != path.events[i - 1].state + 1) return false;
  }
  if (path.terminal_time != path.events.back().time) return false;
  if (path.absorbed != (path.events.back().state == model.absorbing_state())) return false;
  return true;
}

/// Quantile levels reported in every summary.
inline constexpr std::array<double, 5> kSummaryQuantiles = {0.05, 0.25, 0.50, 0.75, 0.95};

struct MonteCarloSummary {
  std::uint64_t replicates = 0;
  std::uint64_t master_seed = 0;
  State start_state = 1;
  double mean = 0.0;
  /// Unbiased sample variance.
  double variance = 0.0;
  double std_error = 0.0;
  /// At the levels in kSummaryQuantiles.
  std::array<double, 5> quantiles{};
  std::string time_unit;
};

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
inline double sorted_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw Error(ErrorKind::OutOfRange, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Summary of terminal times listed in replicate order. The moments are
/// accumulated in that order, so the result does not depend on scheduling.
inline MonteCarloSummary summarize(std::span<const double> times, std::uint64_t master_seed, State start_state,
                                   std::string time_unit) {
  if (times.size() < 2) throw Error(ErrorKind::OutOfRange, "at least two replicates are required");
  const auto n = static_cast<double>(times.size());

  CompensatedSum total;
  for (double x : times) total += x;
  const double mean = total.value() / n;

  CompensatedSum squares;
  for (double x : times) squares += (x - mean) * (x - mean);

  MonteCarloSummary s;
  s.replicates = times.size();
  s.master_seed = master_seed;
  s.start_state = start_state;
  s.mean = mean;
  s.variance = squares.value() / (n - 1.0);
  s.std_error = std::sqrt(s.variance / n);
  s.time_unit = std::move(time_unit);

  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t q = 0; q < kSummaryQuantiles.size(); ++q) s.quantiles[q] = sorted_quantile(sorted, kSummaryQuantiles[q]);
  return s;
}

namespace detail {

inline unsigned resolve_threads(unsigned requested, std::size_t work) {
  unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  if (work < n) n = static_cast<unsigned>(std::max<std::size_t>(work, 1));
  return n;
}

/// Runs body(i) for i in [0, count) over contiguous blocks, one per thread.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  const unsigned workers = resolve_threads(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = count * w / workers;
    const std::size_t end = count * (w + 1) / workers;
    pool.emplace_back([&, begin, end, w] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline void require_simulable(const RateModel& model, State start_state) {
  model.require_state(start_state);
}

}  // namespace detail

/// Exact-event sample path: hold Exponential(rate(k)) in state k, then move
/// to k + 1, until the absorbing or cap state.
inline Trajectory simulate_path(const RateModel& model, State start_state, ReplicateStream& stream) {
  detail::require_simulable(model, start_state);
  const State absorbing = model.absorbing_state();

  Trajectory path;
  path.events.reserve(static_cast<std::size_t>(absorbing - start_state + 1));
  path.events.push_back({0.0, start_state});
  double t = 0.0;
  for (State k = start_state; k < absorbing; ++k) {
    t += stream.exponential(model.unchecked_rate(k));
    path.events.push_back({t, k + 1});
  }
  path.absorbed = true;
  path.terminal_time = t;
  return path;
}

/// Absorption time of one replicate without recording the path; draws the
/// same numbers as simulate_path.
inline double sample_absorption_time(std::span<const double> rates, ReplicateStream& stream) {
  double t = 0.0;
  for (double r : rates) t += stream.exponential(r);
  return t;
}

inline std::vector<double> sample_absorption_times(const RateModel& model, State start_state,
                                                   std::uint64_t replicates, std::uint64_t master_seed,
                                                   unsigned threads = 0) {
  detail::require_simulable(model, start_state);
  const std::vector<double> rates = model.rates_from(start_state);
  std::vector<double> times(replicates);
  detail::parallel_for(replicates, threads, [&](std::size_t i) {
    ReplicateStream stream(master_seed, i);
    times[i] = sample_absorption_time(rates, stream);
  });
  return times;
}

/// Every replicate path, for dumping. Memory grows with replicates x states.
inline std::vector<Trajectory> simulate_paths(const RateModel& model, State start_state, std::uint64_t replicates,
                                              std::uint64_t master_seed, unsigned threads = 0) {
  detail::require_simulable(model, start_state);
  std::vector<Trajectory> paths(replicates);
  detail::parallel_for(replicates, threads, [&](std::size_t i) {
    ReplicateStream stream(master_seed, i);
    paths[i] = simulate_path(model, start_state, stream);
  });
  return paths;
}

inline MonteCarloSummary estimate_absorption_time(const RateModel& model, State start_state,
                                                  std::uint64_t replicates, std::uint64_t master_seed,
                                                  unsigned threads = 0) {
  if (replicates < 2) throw Error(ErrorKind::OutOfRange, "at least two replicates are required");
  const auto times = sample_absorption_times(model, start_state, replicates, master_seed, threads);
  return summarize(times, master_seed, start_state, model.time_unit());
}

/// Counts of replicates per state at a fixed time.
struct StateHistogram {
  double time = 0.0;
  State first_state = 1;
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const noexcept {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  double frequency(State k) const noexcept {
    if (k < first_state || k >= first_state + static_cast<State>(counts.size())) return 0.0;
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts[static_cast<std::size_t>(k - first_state)]) / static_cast<double>(n);
  }
};

inline StateHistogram empirical_distribution_at(const RateModel& model, State start_state, double t,
                                                std::uint64_t replicates, std::uint64_t master_seed,
                                                unsigned threads = 0) {
  detail::require_simulable(model, start_state);
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorKind::OutOfRange, "t must be finite and nonnegative");
  if (replicates < 1) throw Error(ErrorKind::OutOfRange, "at least one replicate is required");

  const std::vector<double> rates = model.rates_from(start_state);
  std::vector<State> final_state(replicates);
  detail::parallel_for(replicates, threads, [&](std::size_t i) {
    ReplicateStream stream(master_seed, i);
    double clock = 0.0;
    std::size_t offset = 0;
    while (offset < rates.size()) {
      clock += stream.exponential(rates[offset]);
      if (clock > t) break;
      ++offset;
    }
    final_state[i] = start_state + static_cast<State>(offset);
  });

  StateHistogram h;
  h.time = t;
  h.first_state = start_state;
  h.counts.assign(rates.size() + 1, 0);
  for (State s : final_state) ++h.counts[static_cast<std::size_t>(s - start_state)];
  return h;
}

/// Half the L1 distance between an empirical histogram and a forward snapshot.
inline double total_variation_distance(const StateHistogram& empirical, const DistributionSnapshot& snapshot) {
  const State lo = std::min(empirical.first_state, snapshot.first_state);
  const State hi = std::max(empirical.first_state + static_cast<State>(empirical.counts.size()) - 1,
                            snapshot.last_state());
  CompensatedSum l1;
  for (State k = lo; k <= hi; ++k) l1 += std::fabs(empirical.frequency(k) - snapshot.probability(k));
  return 0.5 * l1.value();
}

struct ExplosionReport {
  MonteCarloSummary summary;
  std::int64_t cap = 0;
  /// (1/c) sum_{k=start}^{cap-1} 1/k^2, the exact mean time to reach the cap.
  double partial_sum = 0.0;
  /// pi^2 / (6c): the uncapped mean from state 1.
  double limit = 0.0;
  /// Bound on the mass of the sum beyond the cap: 1/(c (cap - 1)).
  double tail_bound = 0.0;
};

/// Cap-hitting times of the explosive chain with rates c k^2.
inline ExplosionReport explosion_study(const RateModel& model, State start_state, std::uint64_t replicates,
                                       std::uint64_t master_seed, std::int64_t cap, unsigned threads = 0) {
  if (model.family() != Family::PowerLaw || model.exponent() != 2.0) {
    throw Error(ErrorKind::WrongFamily, "explosion study needs a power-law model with exponent +2");
  }
  if (cap < start_state + 1) throw Error(ErrorKind::OutOfRange, "cap must exceed the start state");
  const RateModel capped = model.with_cap(cap);
  capped.require_transient(start_state);

  ExplosionReport r;
  r.cap = cap;
  r.summary = estimate_absorption_time(capped, start_state, replicates, master_seed, threads);
  const double c = model.coefficient();
  CompensatedSum partial;
  for (State k = cap - 1; k >= start_state; --k) {
    const double kd = static_cast<double>(k);
    partial += 1.0 / (kd * kd);
  }
  r.partial_sum = partial.value() / c;
  r.limit = std::numbers::pi * std::numbers::pi / (6.0 * c);
  r.tail_bound = 1.0 / (c * static_cast<double>(cap - 1));
  return r;
}

}  // namespace purebirth
