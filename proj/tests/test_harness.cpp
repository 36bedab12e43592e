#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mwsim/harness.hpp"
#include "test_support.hpp"

using namespace mwsim;
using mwsim::testing::fixture;
namespace fs = std::filesystem;

namespace {

SweepConfig small(const std::string& name) {
  SweepConfig c = fixture(name);
  c.horizon = 200'000;
  c.ystar_horizon = 200'000;
  c.allow_short_horizon = true;
  c.estimators.burn_in_min = 10'000;
  return c;
}

bool mentions(const ValidationReport& r, const std::string& s) {
  return std::any_of(r.errors.begin(), r.errors.end(), [&](const std::string& e) { return e.find(s) != std::string::npos; });
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mwsim_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Row text without the runtime column (and therefore the checksum).
std::string without_runtime(const SweepRow& row) {
  std::string s;
  for (const auto& [k, v] : row.fields)
    if (k != "runtime_s") s += k + "=" + fmt_double(v) + ";";
  return s;
}

/// CSV line with the runtime and checksum columns removed.
std::string strip_runtime(const std::string& line, const std::string& header) {
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) out.push_back(tok);
    return out;
  };
  const auto names = split(header);
  const auto values = split(line);
  std::string out;
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i)
    if (names[i] != "runtime_s" && names[i] != "checksum") out += values[i] + ",";
  return out;
}

}  // namespace

TEST(ValidateConfig, FourValidLoadPoints) {
  const auto r = validate_config(fixture("crp2"));
  EXPECT_TRUE(r.ok()) << r.message();
  ASSERT_EQ(r.loads.size(), 4u);
  EXPECT_NEAR(r.loads[0][0], 0.5 - 0.05 / std::sqrt(2.0), 1e-15);
}

TEST(ValidateConfig, AllFixturesValid) {
  for (const char* f : {"crp2", "face2", "noncrp3"}) {
    const auto r = validate_config(fixture(f));
    EXPECT_TRUE(r.ok()) << f << ": " << r.message();
  }
}

TEST(ValidateConfig, NotMaximalSurfacesDominatingPoint) {
  auto c = fixture("crp2");
  c.lambda_star = {0.4, 0.4};
  const auto r = validate_config(c);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r, "dominated by"));
}

TEST(ValidateConfig, AmaxEqualToSmaxFails) {
  auto c = fixture("crp2");
  c.a_max = {1.0, 1.0};
  const auto r = validate_config(c);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r, "A^max must exceed S^max"));
}

TEST(ValidateConfig, EmptyEpsilonListFails) {
  auto c = fixture("crp2");
  c.epsilons.clear();
  EXPECT_TRUE(mentions(validate_config(c), "empty epsilon schedule"));
}

TEST(ValidateConfig, AggregatesEveryViolation) {
  auto c = fixture("crp2");
  c.epsilons = {0.01, 0.02, -0.5};
  c.a_max = {1.0, 1.0};
  c.horizon = 1000;
  const auto r = validate_config(c);
  EXPECT_TRUE(mentions(r, "strictly decreasing"));
  EXPECT_TRUE(mentions(r, "not positive"));
  EXPECT_TRUE(mentions(r, "A^max"));
  EXPECT_TRUE(mentions(r, "below c/eps^2"));
  EXPECT_GE(r.errors.size(), 4u);
}

TEST(ValidateConfig, TooLargeEpsilonIsInvalidLoad) {
  auto c = fixture("crp2");
  c.epsilons = {2.0, 0.01};
  EXPECT_TRUE(mentions(validate_config(c), "LoadPointInvalid") || mentions(validate_config(c), "not strictly positive"));
}

TEST(ParseConfig, OutcomeListsAndErrors) {
  const auto c = parse_config(nlohmann::json::parse(R"({
    "decisions": [{"outcomes": [{"v": [2, 0], "p": 0.5}, {"v": [0, 0], "p": 0.5}]}, [0, 1]],
    "lambda_star": [0.5, 0.5], "a_max": [2.5, 2.5], "tie_break": "uniform_random",
    "estimators": {"drift_lyapunov": "weighted_square"}})"));
  EXPECT_EQ(c.decisions[0].mean, (Vec{1, 0}));
  EXPECT_EQ(c.tie_break, TieBreak::UniformRandom);
  EXPECT_EQ(c.estimators.drift_lyapunov, Lyapunov::WeightedSquare);
  EXPECT_EQ(c.gamma, (Vec{1, 1}));
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"lambda_star": [1]})")), Error);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"decisions": [[1]], "lambda_star": [1], "a_max": [2], "tie_break": "x"})")), Error);
}

TEST(SweepConfig, HorizonAndBurnIn) {
  const auto c = fixture("crp2");
  EXPECT_EQ(c.horizon_for(0.05), 5'000'000u);
  EXPECT_EQ(c.horizon_for(0.001), 50'000'000u);
  EXPECT_EQ(c.burn_in_for(5'000'000), 1'000'000u);
  EXPECT_EQ(c.burn_in_for(200'000), 100'000u);
}

TEST(RunSweep, DeterministicModuloRuntime) {
  const auto c = small("crp2");
  const auto a = run_sweep(c);
  const auto b = run_sweep(c);
  ASSERT_EQ(a.rows.size(), 4u);
  ASSERT_EQ(b.rows.size(), 4u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(without_runtime(a.rows[i]), without_runtime(b.rows[i]));
  EXPECT_EQ(a.simulated_slots, 5u * 200'000u);
  EXPECT_EQ(a.simulated_slots, a.expected_slots);
}

TEST(RunSweep, ThreadCountDoesNotChangeRows) {
  auto c = small("face2");
  c.replications = 2;
  SweepOptions one, three;
  three.threads = 3;
  const auto a = run_sweep(c, one);
  const auto b = run_sweep(c, three);
  ASSERT_EQ(a.rows.size(), 8u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(without_runtime(a.rows[i]), without_runtime(b.rows[i]));
  EXPECT_EQ(a.simulated_slots, 9u * 200'000u);
}

TEST(RunSweep, WritesArtifacts) {
  const auto root = scratch("artifacts");
  SweepOptions o;
  o.out_root = root;
  o.keep_trajectories = true;
  o.trajectory_thin = 100;
  const auto r = run_sweep(small("noncrp3"), o);
  ASSERT_TRUE(r.directory);
  for (const char* f : {"geometry.json", "rows.csv", "schema.json", "report.json"}) EXPECT_TRUE(fs::exists(*r.directory / f)) << f;
  EXPECT_TRUE(fs::exists(*r.directory / "trajectories" / "ystar.csv"));
  EXPECT_TRUE(fs::exists(*r.directory / "trajectories" / "eps0_rep0.csv"));
  const auto rows = lines(*r.directory / "rows.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], r.rows[0].header());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rows[i + 1], r.rows[i].csv_line());
  const auto schema = nlohmann::json::parse(slurp(*r.directory / "schema.json"));
  EXPECT_EQ(schema["columns"].size(), r.rows[0].fields.size() + 2);
  const auto traj = lines(*r.directory / "trajectories" / "eps0_rep0.csv");
  EXPECT_EQ(traj[0], "t,k,Q0,Q1,Q2,S0,S1,S2,A0,A1,A2,U0,U1,U2,Y0");
  EXPECT_EQ(traj.size(), 1u + 2000u);
  fs::remove_all(root);
}

TEST(RunSweep, ResumeKeepsVerifiedRowsOnly) {
  const auto root = scratch("resume");
  SweepOptions o;
  o.out_root = root;
  const auto c = small("crp2");
  const auto full = run_sweep(c, o);
  const fs::path dir = *full.directory;
  // Simulate a crash: keep header + two rows, corrupt the second, then a torn line.
  auto rows = lines(dir / "rows.csv");
  {
    std::ofstream out(dir / "rows.csv", std::ios::trunc);
    out << rows[0] << '\n' << rows[1] << '\n';
    std::string bad = rows[2];
    bad[bad.size() - 1] = bad.back() == '0' ? '1' : '0';
    out << bad << '\n' << rows[3].substr(0, rows[3].size() / 2);
  }
  SweepOptions resume;
  resume.resume_dir = dir;
  const auto r = run_sweep(c, resume);
  EXPECT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.simulated_slots, r.expected_slots);
  EXPECT_EQ(r.expected_slots, 4u * 200'000u);
  const auto after = lines(dir / "rows.csv");
  ASSERT_EQ(after.size(), 5u);
  EXPECT_EQ(after[1], rows[1]);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_EQ(strip_runtime(after[i], after[0]), strip_runtime(rows[i], rows[0]));
  fs::remove_all(root);
}

TEST(RunSweep, BurnInBeyondHorizonFailsValidation) {
  auto c = small("crp2");
  c.estimators.burn_in_min = 150'000;
  c.horizon = 120'000;  // burn-in exceeds horizon for every point
  EXPECT_THROW(run_sweep(c), Error);  // caught by validation
}

TEST(RunSweep, PerRowFailureIsCaptured) {
  auto c = small("crp2");
  c.estimators.thin = 50'000;  // too few stationary samples for the tail fit
  const auto r = run_sweep(c);
  EXPECT_EQ(r.rows.size(), 0u);
  ASSERT_EQ(r.errors.size(), 4u);
  EXPECT_NE(r.errors[0].message.find("tail fit"), std::string::npos);
}

TEST(CompareToLimit, IdenticalInputsGiveZero) {
  EmpiricalDistribution p(1);
  RandomStream rng(1, 0);
  for (int i = 0; i < 1000; ++i) p.add(Vec{rng.normal()});
  const auto a = compare_distributions(p, p, default_directions(1));
  EXPECT_EQ(a.ks.statistic, 0.0);
  for (double d : a.ks.per_direction) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(a.quantiles_n, a.quantiles_star);
}

TEST(CompareToLimit, SingleDirectionForBothFixtures) {
  auto c2 = small("crp2");
  auto c3 = small("noncrp3");
  const auto a2 = compare_to_limit(c2, 0.005);
  const auto a3 = compare_to_limit(c3, 0.005);
  ASSERT_EQ(a2.directions.size(), 1u);
  ASSERT_EQ(a3.directions.size(), 1u);
  EXPECT_EQ(a2.quantiles_n.front().size(), a2.probabilities.size());
  const auto g2 = mwsim::testing::fixture_geometry("crp2");
  const auto g3 = mwsim::testing::fixture_geometry("noncrp3");
  EXPECT_EQ(g2.perp_basis[0].size(), 2u);
  EXPECT_EQ(g3.perp_basis[0].size(), 3u);
  EXPECT_NEAR(std::abs(dot(g3.perp_basis[0], Vec{1, -1, 0})), std::sqrt(2.0), 1e-12);
  EXPECT_THROW(compare_to_limit(c2, 0.3), Error);
}

TEST(SweepRow, ChecksumDetectsEdits) {
  SweepRow r{"f", {{"a", 1.5}, {"b", 2.0}}};
  const auto line = r.csv_line();
  EXPECT_EQ(r.header(), "fixture,a,b,checksum");
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64("f,1.5,2")));
  EXPECT_EQ(line, std::string("f,1.5,2,") + buf);
}
