#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "purebirth/cli.hpp"

namespace pb = purebirth;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"purebirth"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  std::ostringstream out;
  std::ostringstream err;
  RunResult r;
  r.code = pb::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  ADD_FAILURE() << "missing column " << name;
  return 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("purebirth_cli_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(FormatDouble, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 24.519040192071233, 1e-300, 6.02214076e23, 0.0}) {
    const std::string s = pb::format_double(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
  EXPECT_EQ(pb::format_double(0.5), "0.5");
  EXPECT_EQ(pb::format_double(0.1), "0.10000000000000001");
}

TEST(Table, CsvEscaping) {
  pb::Table t;
  t.columns = {"a", "b"};
  t.add_row({std::string("x,y"), std::string("say \"hi\"")});
  t.add_row({std::monostate{}, true});
  std::ostringstream out;
  pb::write_csv(out, t);
  EXPECT_EQ(out.str(), "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n,true\r\n");
}

TEST(ExpectTime, RecipeA) {
  const auto r = run_cli({"expect-time", "--family", "yule", "--N", "2000", "--mu", "1", "--p", "0.31", "--unit",
                          "hours"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 2u);
  const double approx = std::stod(rows[1][column(rows[0], "approx_mean")]);
  const double exact = std::stod(rows[1][column(rows[0], "exact_mean")]);
  EXPECT_NEAR(approx, 24.52, 0.005);
  EXPECT_NEAR(exact, 26.367029579220894, 1e-10 * exact);
  EXPECT_EQ(rows[1][column(rows[0], "time_unit")], "hours");
}

TEST(ExpectTime, RecipeB) {
  const auto r = run_cli({"expect-time", "--family", "yule", "--N", "6700", "--mu", "3", "--p", "0.31", "--unit",
                          "days"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  EXPECT_NEAR(std::stod(rows[1][column(rows[0], "approx_mean")]), 9.47, 0.005);
}

TEST(ExpectTime, InvalidPopulation) {
  const auto r = run_cli({"expect-time", "--family", "yule", "--N", "1", "--mu", "1", "--p", "0.31"});
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("OutOfRange"), std::string::npos) << r.err;
}

TEST(ExpectTime, MissingParameterAndUnknownFamily) {
  auto r = run_cli({"expect-time", "--family", "hypergeometric", "--N", "10", "--p", "0.31"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("MissingParameter"), std::string::npos);
  r = run_cli({"expect-time", "--family", "sir", "--N", "10"});
  EXPECT_NE(r.code, 0);
  r = run_cli({"expect-time", "--family", "powerlaw", "--c", "1", "--exponent", "2"});
  EXPECT_NE(r.err.find("CapRequired"), std::string::npos);
  r = run_cli({});
  EXPECT_NE(r.code, 0);
}

TEST(ExpectTime, JsonHasMetadataAndRows) {
  const auto r = run_cli({"expect-time", "--family", "hypergeometric", "--N", "3", "--lambda", "1", "--p", "1",
                          "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["metadata"]["command"], "expect-time");
  EXPECT_EQ(doc["metadata"]["model"]["family"], "hypergeometric");
  EXPECT_EQ(doc["metadata"]["model"]["N"], 3);
  EXPECT_EQ(doc["metadata"]["version"], std::string(pb::kVersion));
  ASSERT_EQ(doc["rows"].size(), 1u);
  EXPECT_DOUBLE_EQ(doc["rows"][0]["exact_mean"].get<double>(), 3.0);
  EXPECT_TRUE(doc["rows"][0]["approx_mean"].is_null());
}

TEST(ConfigFile, FlagsOverrideFile) {
  const auto cfg = temp_path("model.ini");
  {
    std::ofstream f(cfg);
    f << "family = yule\nN = 2000\nmu = 1\np = 0.31\nunit = hours\n";
  }
  auto r = run_cli({"expect-time", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = parse_csv(r.out);
  EXPECT_NEAR(std::stod(rows[1][column(rows[0], "approx_mean")]), 24.52, 0.005);

  r = run_cli({"expect-time", "--config", cfg.string(), "--N", "6700", "--mu", "3", "--unit", "days"});
  ASSERT_EQ(r.code, 0) << r.err;
  rows = parse_csv(r.out);
  EXPECT_NEAR(std::stod(rows[1][column(rows[0], "approx_mean")]), 9.47, 0.005);
  EXPECT_EQ(rows[1][column(rows[0], "time_unit")], "days");
  fs::remove(cfg);
}

TEST(Forward, TimeZeroSingleRow) {
  const auto r = run_cli({"forward", "--family", "hypergeometric", "--N", "10", "--lambda", "1", "--p", "0.5",
                          "--start", "2", "--t-grid", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"time", "state", "probability", "absorbing"}));
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[1][1], "2");
  EXPECT_EQ(rows[1][2], "1");
}

TEST(Forward, LinearRateOracleAndAbsorbingRows) {
  const auto r = run_cli({"forward", "--family", "powerlaw", "--c", "1", "--exponent", "1", "--cap", "200",
                          "--t-grid", "0.5,1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  bool found = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double t = std::stod(rows[i][0]);
    const double p = std::stod(rows[i][2]);
    EXPECT_GT(p, 1e-12);
    if (rows[i][1] == "1" && t == 1.0) {
      EXPECT_NEAR(p, std::exp(-1.0), 1e-6);
      found = true;
    }
  }
  EXPECT_TRUE(found);

  // Absorbing-state rows equal absorption_probability at each time.
  const auto hr = run_cli({"forward", "--family", "hypergeometric", "--N", "6", "--lambda", "2", "--p", "1",
                           "--t-grid", "0.5,1.5,4"});
  ASSERT_EQ(hr.code, 0) << hr.err;
  pb::RateSpec s;
  s.family = pb::Family::HypergeometricMixing;
  s.population = 6;
  s.contact_rate = 2.0;
  s.transmission_prob = 1.0;
  const auto model = pb::build_rate_model(s);
  int absorbing_rows = 0;
  for (const auto& row : parse_csv(hr.out)) {
    if (row[3] != "true") continue;
    ++absorbing_rows;
    EXPECT_EQ(row[1], "6");
    EXPECT_NEAR(std::stod(row[2]), pb::absorption_probability(model, 1, std::stod(row[0])), 1e-8);
  }
  EXPECT_EQ(absorbing_rows, 3);
}

TEST(Forward, Errors) {
  auto r = run_cli({"forward", "--family", "hypergeometric", "--N", "6", "--lambda", "2", "--p", "1"});
  EXPECT_EQ(r.code, 2);
  r = run_cli({"forward", "--family", "hypergeometric", "--N", "6", "--lambda", "2", "--p", "1", "--t-grid", "1,0.5"});
  EXPECT_EQ(r.code, 2);
  // An unstable fixed step surfaces ToleranceNotMet with the failing time.
  r = run_cli({"forward", "--family", "powerlaw", "--c", "1", "--exponent", "2", "--cap", "300", "--t", "1.5",
               "--method", "rk4", "--fixed-step", "0.5"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ToleranceNotMet"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("t="), std::string::npos) << r.err;
}

TEST(Simulate, MeanWithinThreeStandardErrors) {
  const auto r = run_cli({"simulate", "--family", "hypergeometric", "--N", "3", "--lambda", "1", "--p", "1",
                          "--replicates", "100000", "--seed", "2718"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  const double mean = std::stod(rows[1][column(rows[0], "mean")]);
  const double se = std::stod(rows[1][column(rows[0], "std_error")]);
  EXPECT_LT(std::fabs(mean - 3.0), 3.0 * se);
  EXPECT_EQ(std::stod(rows[1][column(rows[0], "analytic_mean")]), 3.0);
}

TEST(Simulate, ByteIdenticalAcrossRunsAndThreads) {
  const auto a = temp_path("sim_a.csv");
  const auto b = temp_path("sim_b.csv");
  const auto c = temp_path("sim_c.json");
  const auto d = temp_path("sim_d.json");
  auto args = [](const fs::path& out, const char* threads, const char* format) {
    return run_cli({"simulate", "--family", "yule", "--N", "300", "--mu", "0.5", "--p", "0.31", "--replicates",
                    "3000", "--seed", "99", "--threads", threads, "--format", format, "--out", out.string()});
  };
  ASSERT_EQ(args(a, "1", "csv").code, 0);
  ASSERT_EQ(args(b, "4", "csv").code, 0);
  ASSERT_EQ(args(c, "1", "json").code, 0);
  ASSERT_EQ(args(d, "3", "json").code, 0);
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(c), slurp(d));
  for (const auto& p : {a, b, c, d}) fs::remove(p);
}

TEST(Simulate, TrajectoryDumpTwoRowsPerReplicate) {
  const auto dump = temp_path("paths.csv");
  const auto r = run_cli({"simulate", "--family", "hypergeometric", "--N", "2", "--lambda", "1", "--p", "1",
                          "--replicates", "25", "--dump-trajectories", dump.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(slurp(dump));
  ASSERT_EQ(rows.size(), 1u + 2u * 25u);
  for (std::size_t rep = 0; rep < 25; ++rep) {
    const auto& first = rows[1 + 2 * rep];
    const auto& second = rows[2 + 2 * rep];
    EXPECT_EQ(first[0], std::to_string(rep));
    EXPECT_EQ(first[1], "0");
    EXPECT_EQ(first[2], "1");
    EXPECT_EQ(second[0], std::to_string(rep));
    EXPECT_EQ(second[2], "2");
  }
  fs::remove(dump);
}

TEST(Sweep, InverseProportionalityInP) {
  const auto r = run_cli({"sweep", "--family", "yule", "--N", "500", "--mu", "1", "--sweep-param", "p", "--values",
                          "0.155,0.31,0.62"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  const std::size_t col = column(rows[0], "exact_mean");
  const double x = std::stod(rows[2][col]);
  EXPECT_NEAR(std::stod(rows[1][col]), 2.0 * x, 1e-12 * x);
  EXPECT_NEAR(std::stod(rows[3][col]), 0.5 * x, 1e-12 * x);
}

TEST(Sweep, CubicGrowthOverN) {
  const auto r = run_cli({"sweep", "--family", "powerlaw", "--c", "1", "--exponent", "-2", "--sweep-param", "N",
                          "--values", "10,20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  const std::size_t col = column(rows[0], "exact_mean");
  EXPECT_EQ(std::stod(rows[1][col]), 385.0);
  EXPECT_EQ(std::stod(rows[2][col]), 2870.0);
}

TEST(Sweep, Errors) {
  auto r = run_cli({"sweep", "--family", "yule", "--N", "500", "--mu", "1", "--p", "0.3", "--sweep-param", "N"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty"), std::string::npos);
  r = run_cli({"sweep", "--family", "yule", "--N", "500", "--mu", "1", "--sweep-param", "p", "--values", "0.5,0.2"});
  EXPECT_EQ(r.code, 2);
  r = run_cli({"sweep", "--family", "yule", "--mu", "1", "--p", "0.3", "--sweep-param", "N", "--values", "1,10"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("at N=1"), std::string::npos) << r.err;
}

TEST(Explosion, SummaryAgainstPartialSum) {
  const auto r = run_cli({"explosion", "--c", "1", "--cap", "1000", "--replicates", "10000", "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  const double mean = std::stod(rows[1][column(rows[0], "mean")]);
  const double se = std::stod(rows[1][column(rows[0], "std_error")]);
  const double partial = std::stod(rows[1][column(rows[0], "partial_sum")]);
  EXPECT_NEAR(partial, 1.6439335666815598, 1e-15);
  EXPECT_LT(std::fabs(mean - partial), 3.0 * se);

  EXPECT_NE(run_cli({"explosion", "--c", "1", "--replicates", "10"}).code, 0);
}

TEST(Binary, ExitCodesAndStreams) {
  const std::string tool = PUREBIRTH_TOOL;
  const auto out = temp_path("bin_out.txt");
  const auto err = temp_path("bin_err.txt");
  int rc = std::system((tool + " expect-time --family yule --N 1 --mu 1 --p 0.31 >" + out.string() + " 2>" +
                        err.string())
                           .c_str());
  EXPECT_NE(rc, 0);
  EXPECT_TRUE(slurp(out).empty());
  EXPECT_NE(slurp(err).find("OutOfRange"), std::string::npos);

  rc = std::system((tool + " expect-time --family yule --N 2000 --mu 1 --p 0.31 --unit hours >" + out.string() +
                    " 2>" + err.string())
                       .c_str());
  EXPECT_EQ(rc, 0);
  EXPECT_TRUE(slurp(err).empty());
  EXPECT_NE(slurp(out).find("24.519040192071"), std::string::npos);
  fs::remove(out);
  fs::remove(err);
}
