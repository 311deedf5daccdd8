#pragma once

// Command-line front end. Every flag lives on the top-level app and
// subcommands fall through to it, so a config file is one flat list of
// `key = value` lines using the flag names. Flags given on the command line
// override the file.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "purebirth/analytic.hpp"
#include "purebirth/error.hpp"
#include "purebirth/forward_solver.hpp"
#include "purebirth/montecarlo.hpp"
#include "purebirth/rate_model.hpp"
#include "purebirth/table.hpp"
#include "purebirth/version.hpp"

namespace purebirth::cli {

/// Rows with probability at or below this are not emitted by `forward`.
inline constexpr double kForwardRowThreshold = 1e-12;

struct ExperimentConfig {
  std::optional<std::string> family;
  std::optional<std::int64_t> population;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<double> p;
  std::optional<double> c;
  std::optional<double> exponent;
  std::optional<std::int64_t> cap;
  std::int64_t start = 1;
  std::string unit = "time";
  std::uint64_t seed = 1;
  std::uint64_t replicates = 10000;
  unsigned threads = 0;
  std::optional<double> t;
  std::vector<double> t_grid;
  std::optional<std::string> out;
  std::string format = "csv";
  std::string method = "adaptive";
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  std::optional<double> max_step;
  double fixed_step = 1e-3;
  std::optional<std::string> dump_trajectories;
  std::optional<std::string> sweep_param;
  std::vector<double> values;
};

/// Maps the flat config onto a RateSpec. For power-law models, `--N n`
/// without `--cap` means states 1..n are transient (cap = n + 1).
inline RateSpec rate_spec(const ExperimentConfig& cfg) {
  RateSpec spec;
  if (cfg.family) {
    spec.family = parse_family(*cfg.family);
    if (!spec.family) throw Error(ErrorKind::Usage, "unknown family '" + *cfg.family + "'");
  }
  spec.population = cfg.population;
  spec.contact_rate = cfg.lambda;
  spec.per_capita_rate = cfg.mu;
  spec.transmission_prob = cfg.p;
  spec.coefficient = cfg.c;
  spec.exponent = cfg.exponent;
  spec.state_cap = cfg.cap;
  if (spec.family == Family::PowerLaw && !cfg.cap && cfg.population) spec.state_cap = *cfg.population + 1;
  spec.time_unit = cfg.unit;
  return spec;
}

inline SolverConfig solver_config(const ExperimentConfig& cfg) {
  SolverConfig s;
  if (cfg.method == "adaptive") {
    s.method = SolverMethod::Adaptive;
  } else if (cfg.method == "rk4") {
    s.method = SolverMethod::FixedRk4;
  } else {
    throw Error(ErrorKind::Usage, "unknown solver method '" + cfg.method + "'");
  }
  s.abs_tol = cfg.abs_tol;
  s.rel_tol = cfg.rel_tol;
  if (cfg.max_step) s.max_step = *cfg.max_step;
  s.fixed_step = cfg.fixed_step;
  s.validate();
  return s;
}

inline nlohmann::ordered_json model_metadata(const ExperimentConfig& cfg) {
  const RateSpec spec = rate_spec(cfg);
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  auto put = [&m](const char* key, const auto& opt) {
    if (opt) {
      m[key] = *opt;
    } else {
      m[key] = nullptr;
    }
  };
  m["family"] = spec.family ? std::string(to_string(*spec.family)) : std::string();
  put("N", spec.population);
  put("lambda", spec.contact_rate);
  put("mu", spec.per_capita_rate);
  put("p", spec.transmission_prob);
  put("c", spec.coefficient);
  put("exponent", spec.exponent);
  put("cap", spec.state_cap);
  m["time_unit"] = spec.time_unit;
  return m;
}

struct CommandOutput {
  Table table;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

inline Cell opt_cell(const std::optional<double>& v) {
  if (v) return *v;
  return std::monostate{};
}

inline CommandOutput cmd_expect_time(const ExperimentConfig& cfg) {
  const RateModel model = build_rate_model(rate_spec(cfg));
  const AbsorptionTimeReport r = expected_absorption_time(model, cfg.start);

  CommandOutput out;
  out.table.columns = {"family", "start",         "exact_mean", "closed_form", "approx_mean",
                       "euler_refined", "variance", "truncated", "time_unit"};
  out.table.add_row({std::string(to_string(model.family())), std::int64_t{r.start_state}, r.exact_mean,
                     opt_cell(r.closed_form), opt_cell(r.approx_mean), opt_cell(r.euler_refined), r.variance,
                     r.truncated, r.time_unit});
  return out;
}

inline std::vector<double> time_grid(const ExperimentConfig& cfg) {
  std::vector<double> grid = cfg.t_grid;
  if (cfg.t) {
    if (!grid.empty()) throw Error(ErrorKind::Usage, "give either --t or --t-grid, not both");
    grid.push_back(*cfg.t);
  }
  if (grid.empty()) throw Error(ErrorKind::Usage, "forward needs --t or --t-grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw Error(ErrorKind::Usage, "time grid must be strictly increasing");
  }
  return grid;
}

inline CommandOutput cmd_forward(const ExperimentConfig& cfg) {
  const RateModel model = build_rate_model(rate_spec(cfg));
  const SolverConfig solver = solver_config(cfg);
  const std::vector<double> grid = time_grid(cfg);
  const auto snapshots = forward_probabilities(model, cfg.start, std::span<const double>(grid), solver);

  CommandOutput out;
  out.table.columns = {"time", "state", "probability", "absorbing"};
  const State absorbing = model.absorbing_state();
  for (const auto& snap : snapshots) {
    for (State k = snap.first_state; k <= snap.last_state(); ++k) {
      const double prob = snap.probability(k);
      if (prob > kForwardRowThreshold) out.table.add_row({snap.time, std::int64_t{k}, prob, k == absorbing});
    }
  }
  out.metadata["start"] = cfg.start;
  out.metadata["truncated"] = model.truncated();
  out.metadata["solver"] = {{"method", cfg.method}, {"abs_tol", solver.abs_tol}, {"rel_tol", solver.rel_tol}};
  return out;
}

inline void write_trajectories(const std::string& path, const std::vector<Trajectory>& paths) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Usage, "cannot open trajectory file '" + path + "'");
  Table t;
  t.columns = {"replicate", "time", "state"};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (const auto& ev : paths[i].events) t.add_row({std::uint64_t{i}, ev.time, std::int64_t{ev.state}});
  }
  write_csv(f, t);
}

inline void add_summary_columns(Table& t) {
  for (const char* col : {"replicates", "seed", "start", "mean", "std_error", "variance", "q05", "q25", "q50", "q75",
                          "q95"}) {
    t.columns.emplace_back(col);
  }
}

inline std::vector<Cell> summary_cells(const MonteCarloSummary& s) {
  std::vector<Cell> row{s.replicates, s.master_seed, std::int64_t{s.start_state}, s.mean, s.std_error, s.variance};
  for (double q : s.quantiles) row.emplace_back(q);
  return row;
}

inline CommandOutput cmd_simulate(const ExperimentConfig& cfg) {
  const RateModel model = build_rate_model(rate_spec(cfg));
  const MonteCarloSummary s = estimate_absorption_time(model, cfg.start, cfg.replicates, cfg.seed, cfg.threads);
  if (cfg.dump_trajectories) {
    write_trajectories(*cfg.dump_trajectories, simulate_paths(model, cfg.start, cfg.replicates, cfg.seed, cfg.threads));
  }

  CommandOutput out;
  add_summary_columns(out.table);
  out.table.columns.emplace_back("analytic_mean");
  out.table.columns.emplace_back("time_unit");
  auto row = summary_cells(s);
  Cell analytic = std::monostate{};
  if (model.is_transient(cfg.start)) analytic = expected_absorption_time(model, cfg.start).exact_mean;
  row.push_back(analytic);
  row.emplace_back(s.time_unit);
  out.table.add_row(std::move(row));
  out.metadata["seed"] = cfg.seed;
  out.metadata["truncated"] = model.truncated();
  return out;
}

inline CommandOutput cmd_explosion(const ExperimentConfig& cfg) {
  if (cfg.exponent && *cfg.exponent != 2.0) throw Error(ErrorKind::Usage, "explosion uses exponent +2");
  if (!cfg.cap) throw Error(ErrorKind::CapRequired, "explosion needs --cap");
  ExperimentConfig model_cfg = cfg;
  model_cfg.family = "powerlaw";
  model_cfg.exponent = 2.0;
  const RateModel model = build_rate_model(rate_spec(model_cfg));
  const ExplosionReport r = explosion_study(model, cfg.start, cfg.replicates, cfg.seed, *cfg.cap, cfg.threads);

  CommandOutput out;
  out.table.columns = {"cap"};
  add_summary_columns(out.table);
  for (const char* col : {"partial_sum", "limit", "tail_bound", "time_unit"}) out.table.columns.emplace_back(col);
  std::vector<Cell> row{std::int64_t{r.cap}};
  for (auto& cell : summary_cells(r.summary)) row.push_back(std::move(cell));
  row.emplace_back(r.partial_sum);
  row.emplace_back(r.limit);
  row.emplace_back(r.tail_bound);
  row.emplace_back(r.summary.time_unit);
  out.table.add_row(std::move(row));
  out.metadata["seed"] = cfg.seed;
  out.metadata["truncated"] = true;
  return out;
}

inline CommandOutput cmd_sweep(const ExperimentConfig& cfg) {
  if (!cfg.sweep_param) throw Error(ErrorKind::Usage, "sweep needs --sweep-param");
  const std::string& param = *cfg.sweep_param;
  if (param != "N" && param != "p" && param != "mu" && param != "lambda" && param != "c") {
    throw Error(ErrorKind::Usage, "cannot sweep over '" + param + "' (choose N, p, mu, lambda or c)");
  }
  if (cfg.values.empty()) throw Error(ErrorKind::Usage, "sweep range is empty");
  for (std::size_t i = 1; i < cfg.values.size(); ++i) {
    if (!(cfg.values[i] > cfg.values[i - 1])) throw Error(ErrorKind::Usage, "sweep values must be strictly increasing");
  }

  CommandOutput out;
  out.table.columns = {"param", "value", "exact_mean", "approx_mean", "time_unit"};
  for (double v : cfg.values) {
    ExperimentConfig point = cfg;
    if (param == "N") {
      if (v != std::floor(v)) throw Error(ErrorKind::Usage, "N values must be integers");
      point.population = static_cast<std::int64_t>(v);
      if (point.family && parse_family(*point.family) == Family::PowerLaw) point.cap.reset();
    } else if (param == "p") {
      point.p = v;
    } else if (param == "mu") {
      point.mu = v;
    } else if (param == "lambda") {
      point.lambda = v;
    } else {
      point.c = v;
    }

    try {
      const RateModel model = build_rate_model(rate_spec(point));
      Cell exact;
      Cell approx = std::monostate{};
      if (model.family() == Family::PowerLaw && (model.exponent() == 2.0 || model.exponent() == -2.0) &&
          point.start == 1) {
        const PowerLawReport r = powerlaw_expected_time(model.coefficient(), model.exponent(),
                                                        model.last_transient_state());
        exact = r.value;
        approx = r.limit ? *r.limit : *r.growth;
      } else {
        const AbsorptionTimeReport r = expected_absorption_time(model, point.start);
        exact = r.exact_mean;
        approx = opt_cell(r.approx_mean);
      }
      out.table.add_row({param, v, exact, approx, point.unit});
    } catch (const Error& e) {
      throw Error(e.kind(), "at " + param + "=" + format_double(v) + ": " + e.what());
    }
  }
  out.metadata["sweep_param"] = param;
  return out;
}

namespace detail {

inline bool use_color() {
  return std::getenv("NO_COLOR") == nullptr && ::isatty(STDERR_FILENO) == 1;
}

inline void report_error(std::ostream& err, const std::string& message, bool color) {
  if (color) {
    err << "\x1b[31merror:\x1b[0m " << message << '\n';
  } else {
    err << "error: " << message << '\n';
  }
}

}  // namespace detail

/// Parses argv and runs one subcommand. Data goes to `out` (or --out), all
/// diagnostics to `err`. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, bool color = false) {
  CLI::App app{"Pure-birth epidemic chain: expected absorption times, forward equations, simulation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat key = value file using the flag names; flags override it");

  ExperimentConfig cfg;
  app.add_option("--family", cfg.family, "hypergeometric | yule | powerlaw");
  app.add_option("--N", cfg.population, "Population size (power law: number of transient states)");
  app.add_option("--lambda", cfg.lambda, "Contact rate (hypergeometric)");
  app.add_option("--mu", cfg.mu, "Per-capita contact rate (yule)");
  app.add_option("--p", cfg.p, "Transmission probability per contact");
  app.add_option("--c", cfg.c, "Power-law coefficient");
  app.add_option("--exponent", cfg.exponent, "Power-law exponent");
  app.add_option("--cap", cfg.cap, "Power-law cap state");
  app.add_option("--start", cfg.start, "Initial number infected")->capture_default_str();
  app.add_option("--unit", cfg.unit, "Time unit label")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  app.add_option("--replicates", cfg.replicates, "Monte Carlo replicates")->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")->capture_default_str();
  auto* t_opt = app.add_option("--t", cfg.t, "Single time");
  app.add_option("--t-grid", cfg.t_grid, "Comma-separated increasing times")->delimiter(',')->excludes(t_opt);
  app.add_option("--out", cfg.out, "Output path (default standard output)");
  app.add_option("--format", cfg.format, "csv | json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--method", cfg.method, "adaptive | rk4")->check(CLI::IsMember({"adaptive", "rk4"}))
      ->capture_default_str();
  app.add_option("--abs-tol", cfg.abs_tol, "Solver absolute tolerance")->capture_default_str();
  app.add_option("--rel-tol", cfg.rel_tol, "Solver relative tolerance")->capture_default_str();
  app.add_option("--max-step", cfg.max_step, "Largest solver step");
  app.add_option("--fixed-step", cfg.fixed_step, "Step for --method rk4")->capture_default_str();
  app.add_option("--dump-trajectories", cfg.dump_trajectories, "Write every sample path as CSV to this file");
  app.add_option("--sweep-param", cfg.sweep_param, "N | p | mu | lambda | c");
  app.add_option("--values", cfg.values, "Comma-separated increasing sweep values")->delimiter(',');

  std::function<CommandOutput(const ExperimentConfig&)> command;
  std::string command_name;
  auto bind = [&](const char* name, const char* help, CommandOutput (*fn)(const ExperimentConfig&)) {
    app.add_subcommand(name, help)->callback([&, name, fn] {
      command = fn;
      command_name = name;
    });
  };
  bind("expect-time", "Exact and approximate expected absorption time", &cmd_expect_time);
  bind("forward", "State distribution from the forward equations", &cmd_forward);
  bind("simulate", "Monte Carlo absorption-time summary", &cmd_simulate);
  bind("sweep", "Expected absorption time over a parameter grid", &cmd_sweep);
  bind("explosion", "Cap-hitting times of the rate family c k^2", &cmd_explosion);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    detail::report_error(err, e.what(), color);
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (cfg.replicates < 2 && (command_name == "simulate" || command_name == "explosion")) {
      throw Error(ErrorKind::OutOfRange, "--replicates must be at least 2");
    }
    CommandOutput result = command(cfg);
    result.metadata["command"] = command_name;
    result.metadata["model"] = model_metadata(cfg);
    result.metadata["version"] = std::string(kVersion);

    std::ofstream file;
    std::ostream* sink = &out;
    if (cfg.out) {
      file.open(*cfg.out, std::ios::binary);
      if (!file) throw Error(ErrorKind::Usage, "cannot open output file '" + *cfg.out + "'");
      sink = &file;
    }
    if (cfg.format == "json") {
      write_json(*sink, result.table, result.metadata);
    } else {
      write_csv(*sink, result.table);
    }
    sink->flush();
    if (!*sink) throw Error(ErrorKind::Usage, "failed writing output");
  } catch (const Error& e) {
    detail::report_error(err, e.what(), color);
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    detail::report_error(err, e.what(), color);
    return 1;
  }
  return 0;
}

inline int main(int argc, char** argv) {
  return run(argc, argv, std::cout, std::cerr, detail::use_color());
}

}  // namespace purebirth::cli
