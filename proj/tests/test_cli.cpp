#include <gtest/gtest.h>

#include <cmath>

#include "cli_support.hpp"
#include "meb/meb.hpp"

using namespace meb;
using namespace meb::testing;
namespace fs = std::filesystem;

TEST(CliUsage, HelpListsFlagsAndUnknownFlagsFail) {
  const auto help = run_cli("fit --help");
  EXPECT_EQ(help.exit_code, 0);
  for (const char* flag : {"--config", "--data", "--seed", "--out", "--family", "--mode", "--samples", "--burn-in"})
    EXPECT_NE(help.output.find(flag), std::string::npos) << flag;
  EXPECT_EQ(run_cli("cme-solve --config " + fixture("cme_two_state.json") + " --bogus").exit_code, 2);
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("fit").exit_code, 2);
  EXPECT_EQ(run_cli("fit --config /nonexistent.json").exit_code, 2);
}

TEST(CliCmeSolve, TwoStateEnsemble) {
  const auto out = scratch_dir("two_state");
  const auto r = run_fixture("cme-solve", "cme_two_state.json", out);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("lambda[0] = 1.09861228866"), std::string::npos) << r.output;
  const auto sol = load_result<CmeSolution>((out / "cme_solution.json").string());
  EXPECT_NEAR(sol.lambda[0], std::log(3.0), 1e-8);
  const auto t = read_table(out / "cme_table.csv");
  EXPECT_NEAR(t.rows[0][1], 0.75, 1e-10);
  EXPECT_NEAR(t.rows[1][1], 0.25, 1e-10);
}

TEST(CliCmeSolve, NoConstraintIsUniform) {
  const auto out = scratch_dir("uniform");
  ASSERT_EQ(run_fixture("cme-solve", "cme_uniform.json", out).exit_code, 0);
  const auto t = read_table(out / "cme_table.csv");
  ASSERT_EQ(t.rows.size(), 10u);
  for (const auto& row : t.rows) EXPECT_NEAR(row[1], 0.1, 1e-15);
}

TEST(CliCmeSolve, GaussianKernel) {
  const auto out = scratch_dir("gaussian");
  ASSERT_EQ(run_fixture("cme-solve", "cme_gaussian.json", out).exit_code, 0);
  const auto sol = load_result<CmeSolution>((out / "cme_solution.json").string());
  const auto t = read_table(out / "cme_table.csv");
  std::vector<double> q, kern;
  double z = 0.0;
  for (const auto& row : t.rows) {
    q.push_back(row[1]);
    z += kern.emplace_back(std::exp(-sol.lambda[0] * row[0] * row[0]));
  }
  for (auto& v : kern) v /= z;
  EXPECT_LT(relative_entropy(SimplexDistribution(q), SimplexDistribution(kern)), 1e-10);
}

TEST(CliCmeSolve, InfeasibleTargetExitCode) {
  const auto dir = scratch_dir("infeasible_cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"grid": {"states": 2}, "residual": {"type": "energy", "energy": [0, 1]},
                                       "targets": [2.0]})";
  const auto r = run_cli("cme-solve --config " + (dir / "c.json").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.exit_code, 6);
  EXPECT_NE(r.output.find("attainable"), std::string::npos) << r.output;
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_EQ(run_cli("cme-solve --config " + (dir / "bad.json").string()).exit_code, 5);
}

TEST(CliFit, RegressionMatchesLeastSquares) {
  const auto out = scratch_dir("regression");
  const auto r = run_fixture("fit", "fit_regression.json", out);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  // Closed-form simple regression on the fixture data.
  const auto data = read_table(fixture("regression.csv"));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : data.rows) sx += row[0], sy += row[1], sxx += row[0] * row[0], sxy += row[0] * row[1];
  const double n = static_cast<double>(data.rows.size());
  const double b1 = (n * sxy - sx * sy) / (n * sxx - sx * sx), b0 = (sy - b1 * sx) / n;
  const auto summary = load_record((out / "fit_summary.json").string(), "fit_summary").at("payload");
  const auto& params = summary.at("parameters");
  EXPECT_NEAR(params[0].at("map").get<double>(), b0, 1e-3);
  EXPECT_NEAR(params[1].at("map").get<double>(), b1, 1e-3);
  EXPECT_TRUE(fs::exists(out / "parameters.csv"));
  EXPECT_TRUE(fs::exists(out / "fitted.csv"));
  const auto chain = load_result<ChainResult>((out / "chain.json").string());
  EXPECT_EQ(chain.samples.size(), 10000u);
}

TEST(CliFit, QrseFixtureFittedDensityIsNearlySymmetric) {
  const auto out = scratch_dir("qrse");
  const auto r = run_fixture("fit", "fit_qrse.json", out);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto summary = load_record((out / "fit_summary.json").string(), "fit_summary").at("payload");
  const auto& p = summary.at("parameters");
  // Truth has alpha = mu; the fitted gap is within its posterior spread.
  const double gap = p[2].at("map").get<double>() - p[0].at("map").get<double>();
  const double spread = std::hypot(p[0].at("sd").get<double>(), p[2].at("sd").get<double>());
  EXPECT_LT(std::abs(gap), 2.0 * spread);
  EXPECT_FALSE(summary.at("truncated").get<bool>());
  const auto t = read_table(out / "density.csv");
  ASSERT_EQ(t.rows.size(), 240u);
  // Mirror the fitted table about the grid centre (the truth mu = 0).
  double diff = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < 120; ++k) {
    diff += std::abs(t.rows[k][2] - t.rows[239 - k][2]) * 0.1;
    mass += (t.rows[k][2] + t.rows[239 - k][2]) * 0.1;
  }
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_LT(diff, std::abs(gap) * 4.0 + 0.02);
}

TEST(CliFit, StatmechSaddleAndExact) {
  const auto out = scratch_dir("statmech");
  ASSERT_EQ(run_fixture("fit", "fit_statmech.json", out).exit_code, 0);
  const auto s = load_record((out / "fit_summary.json").string()).at("payload").at("parameters")[0];
  EXPECT_LT(s.at("q05").get<double>(), 2.0);
  EXPECT_GT(s.at("q95").get<double>(), 2.0);
  const auto t = read_table(out / "density.csv");
  EXPECT_EQ(t.rows.size(), 4u);
  const auto ex = scratch_dir("statmech_exact");
  const auto r = run_fixture("fit", "fit_statmech_exact.json", ex);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(load_record((ex / "fit_summary.json").string()).at("payload").at("mode"), "exact");
}

TEST(CliFit, FlagOverridesAreEchoed) {
  const auto out = scratch_dir("override");
  ASSERT_EQ(run_fixture("fit", "fit_statmech.json", out, "--samples 500 --burn-in 100 --seed 42").exit_code, 0);
  const auto rec = load_record((out / "chain.json").string(), "chain");
  EXPECT_EQ(rec.at("seed"), 42);
  EXPECT_EQ(rec.at("config").at("mcmc").at("samples"), 500);
  EXPECT_EQ(rec.at("payload").at("samples").size(), 500u);
  EXPECT_EQ(run_fixture("fit", "fit_statmech.json", out, "--family nope").exit_code, 2);
}

TEST(CliEvidence, EquilibriumFarAndNoData) {
  auto gap_of = [](const fs::path& out) {
    return load_record((out / "evidence.json").string(), "evidence_pair").at("payload").at("gap_per_observation");
  };
  const auto eq = scratch_dir("ev_eq"), far = scratch_dir("ev_far"), nd = scratch_dir("ev_nd");
  const auto r = run_fixture("evidence", "evidence_equilibrium.json", eq);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("verdict:"), std::string::npos);
  ASSERT_EQ(run_fixture("evidence", "evidence_far.json", far).exit_code, 0);
  EXPECT_LT(gap_of(eq).get<double>(), 0.01);
  EXPECT_GT(gap_of(far).get<double>(), gap_of(eq).get<double>());
  const auto n0 = run_fixture("evidence", "evidence_nodata.json", nd);
  ASSERT_EQ(n0.exit_code, 0);
  EXPECT_NE(n0.output.find("n/a (N = 0)"), std::string::npos);
  EXPECT_TRUE(gap_of(nd).is_null());
}

TEST(CliEvidence, LargeKRefusesBruteForceButPrintsSaddle) {
  const auto out = scratch_dir("ev_k5");
  const auto r = run_fixture("evidence", "evidence_k5.json", out);
  EXPECT_EQ(r.exit_code, 8);
  EXPECT_NE(r.output.find("saddle-point log evidence = "), std::string::npos);
  EXPECT_NE(r.output.find("refused"), std::string::npos);
  EXPECT_TRUE(load_record((out / "evidence.json").string()).at("payload").at("brute_force").is_null());
}

TEST(CliSampleQ, MatchesQuadratureAndUniform) {
  const auto out = scratch_dir("sample_q");
  ASSERT_EQ(run_fixture("sample-q", "sample_q.json", out).exit_code, 0);
  const auto t = read_table(out / "posterior_mean.csv");
  const auto ref = quadrature_posterior_mean(ObservedCounts({5, 3, 2}), nullptr, 150);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(t.rows[k][1] - ref[k]), 3 * t.rows[k][2]);
  const auto u = scratch_dir("sample_q0");
  ASSERT_EQ(run_fixture("sample-q", "sample_q_nodata.json", u).exit_code, 0);
  for (const auto& row : read_table(u / "posterior_mean.csv").rows) EXPECT_LT(std::abs(row[1] - 0.25), 4 * row[2]);
}

TEST(CliBin, CountsAndGrid) {
  const auto out = scratch_dir("bin");
  ASSERT_EQ(run_fixture("bin", "bin_qrse.json", out).exit_code, 0);
  const auto counts = load_result<ObservedCounts>((out / "counts.json").string());
  EXPECT_EQ(counts.total(), 2000u);
  EXPECT_EQ(load_result<StateGrid>((out / "grid.json").string()).size(), 50u);
}

TEST(CliReproducibility, RerunsAreByteIdentical) {
  for (const auto& [sub, cfg] : std::vector<std::pair<std::string, std::string>>{
           {"sample-q", "sample_q.json"}, {"fit", "fit_statmech.json"}, {"cme-solve", "cme_gaussian.json"}}) {
    const auto a = scratch_dir("rep_a"), b = scratch_dir("rep_b");
    ASSERT_EQ(run_fixture(sub, cfg, a).exit_code, 0);
    ASSERT_EQ(run_fixture(sub, cfg, b).exit_code, 0);
    EXPECT_EQ(directory_contents(a), directory_contents(b)) << cfg;
  }
}
