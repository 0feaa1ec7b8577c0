// meb: batch command-line front end. Every run is a pure function of the
// config file, the input files it names, and the seed. Outputs go to one
// directory as versioned JSON records plus CSV tables.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meb/meb.hpp"

namespace fs = std::filesystem;
using namespace meb;
using namespace meb::models;

namespace {

enum Exit : int {
  kOk = 0,
  kGeneric = 1,
  kUsage = 2,
  kInvalid = 3,
  kIo = 4,
  kParse = 5,
  kInfeasible = 6,
  kConvergence = 7,
  kUnsupported = 8,
  kTuning = 9,
  kVersion = 10,
  kValidity = 11,
};

class ValidityFailure : public Error {
 public:
  using Error::Error;
};

struct Run {
  json cfg;          ///< resolved config, echoed into every record
  fs::path base;     ///< directory relative paths resolve against
  fs::path out;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Config access

const json& need(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string("config: missing '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return need(j, key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("config: '") + key + "' has the wrong type");
  }
}

std::vector<double> get_reals(const json& j, const char* key) { return rec::reals_of(need(j, key)); }

fs::path resolve(const Run& run, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : run.base / path;
}

McmcConfig mcmc_from(Run& run) {
  auto& m = run.cfg["mcmc"];
  if (m.is_null()) m = json::object();
  McmcConfig c;
  if (!m.contains("burn_in")) m["burn_in"] = c.burn_in;
  if (!m.contains("samples")) m["samples"] = c.samples;
  if (!m.contains("thin")) m["thin"] = c.thin;
  c.burn_in = get<std::size_t>(m, "burn_in");
  c.samples = get<std::size_t>(m, "samples");
  c.thin = get<std::size_t>(m, "thin");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Grids, residual specs, counts

// "grid": {"linspace": [lo, hi, n]} | {"cells": [lo, hi, n]} | {"values": [...]} | {"states": K}
StateGrid grid_from(const json& g) {
  if (g.contains("linspace")) {
    const auto& a = g.at("linspace");
    return StateGrid::linspace(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<std::size_t>());
  }
  if (g.contains("cells")) {
    const auto& a = g.at("cells");
    return StateGrid::cells(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<std::size_t>());
  }
  if (g.contains("values")) {
    auto v = get_reals(g, "values");
    return StateGrid(1, v, std::vector<double>(v.size(), 1.0));
  }
  if (g.contains("states")) {
    const auto k = get<std::size_t>(g, "states");
    std::vector<double> v(k);
    for (std::size_t i = 0; i < k; ++i) v[i] = static_cast<double>(i);
    return StateGrid(1, v, std::vector<double>(k, 1.0));
  }
  throw InvalidArgument("config: grid needs one of linspace, cells, values, states");
}

std::vector<double> energy_from(const json& e, const StateGrid& grid) {
  if (e.is_array()) return rec::reals_of(e);
  if (e.is_object() && e.contains("quadratic")) return quadratic_energy(grid, e.at("quadratic").get<double>());
  throw InvalidArgument("config: energy must be a list or {\"quadratic\": center}");
}

// "residual": {"type": "energy", "energy": [...] | {"quadratic": c}}
//           | {"type": "linear", "shift": m}       g(x) = x - m
//           | {"type": "matrix", "rows": [[...], ...]} | {"type": "matrix", "file": "g.csv"}
std::optional<ResidualModel> residual_from(const Run& run, const json& cfg, const StateGrid& grid) {
  if (!cfg.contains("residual") || cfg.at("residual").is_null()) return std::nullopt;
  const auto& r = cfg.at("residual");
  const auto type = get<std::string>(r, "type");
  if (type == "energy") return statmech_residual_model(energy_from(need(r, "energy"), grid));
  if (type == "linear") {
    const double m = r.contains("shift") ? r.at("shift").get<double>() : 0.0;
    std::vector<double> g(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) g[k] = grid.x(k) - m;
    return ResidualModel::from_rows({g});
  }
  if (type == "matrix") {
    std::vector<std::vector<double>> rows;
    if (r.contains("rows")) {
      for (const auto& row : r.at("rows")) rows.push_back(rec::reals_of(row));
    } else {
      // One column per residual dimension, one line per cell.
      const auto obs = read_observations(resolve(run, get<std::string>(r, "file")).string(),
                                         {.malformed = MalformedPolicy::error});
      rows.assign(obs.names.size(), std::vector<double>(obs.rows.size()));
      for (std::size_t k = 0; k < obs.rows.size(); ++k)
        for (std::size_t d = 0; d < obs.names.size(); ++d) rows[d][k] = obs.rows[k][d];
    }
    auto m = ResidualModel::from_rows(rows);
    if (m.size() != grid.size())
      throw DimensionMismatch("config: residual matrix has " + std::to_string(m.size()) + " cells, grid has " +
                              std::to_string(grid.size()));
    return m;
  }
  throw InvalidArgument("config: unknown residual type '" + type + "'");
}

AxisBinning axis_from(const json& b) {
  if (b.contains("edges")) return AxisBinning::edges(get_reals(b, "edges"));
  return AxisBinning::equal_width(get<double>(b, "lo"), get<double>(b, "hi"), get<std::size_t>(b, "cells"));
}

OutOfRange out_of_range_from(const json& cfg, OutOfRange fallback) {
  if (!cfg.contains("out_of_range")) return fallback;
  const auto s = get<std::string>(cfg, "out_of_range");
  if (s == "clamp") return OutOfRange::clamp;
  if (s == "reject") return OutOfRange::reject_row;
  if (s == "error") return OutOfRange::error;
  throw InvalidArgument("config: out_of_range must be clamp, reject or error");
}

const char* to_string(OutOfRange o) {
  return o == OutOfRange::clamp ? "clamp" : o == OutOfRange::reject_row ? "reject" : "error";
}

Observations observations_from(Run& run, bool prepend_constant = false) {
  ReadOptions opt;
  if (run.cfg.contains("columns")) opt.columns = get<std::vector<std::string>>(run.cfg, "columns");
  if (run.cfg.contains("delimiter")) {
    const auto d = get<std::string>(run.cfg, "delimiter");
    if (d.size() != 1 && d != "\\t") throw InvalidArgument("config: delimiter must be one character");
    opt.delimiter = d == "\\t" ? '\t' : d[0];
  }
  if (run.cfg.contains("malformed")) {
    const auto m = get<std::string>(run.cfg, "malformed");
    if (m == "error")
      opt.malformed = MalformedPolicy::error;
    else if (m != "reject")
      throw InvalidArgument("config: malformed must be reject or error");
  }
  opt.prepend_constant = prepend_constant;
  return read_observations(resolve(run, get<std::string>(run.cfg, "data")).string(), opt);
}

// Binning of rows by "binning": one axis object or a list of them.
BinnedData bin_from(Run& run, const std::vector<std::vector<double>>& rows) {
  const auto& b = need(run.cfg, "binning");
  BinningSpec spec;
  if (b.is_array())
    for (const auto& a : b) spec.axes.push_back(axis_from(a));
  else
    spec.axes.push_back(axis_from(b));
  spec.out_of_range = out_of_range_from(run.cfg, OutOfRange::error);
  run.cfg["out_of_range"] = to_string(spec.out_of_range);
  return bin(rows, spec);
}

// Counts inline ("counts": [...]) or by binning the data file.
ObservedCounts counts_from(Run& run, std::optional<StateGrid>& grid) {
  if (run.cfg.contains("counts")) return ObservedCounts(get<std::vector<std::uint64_t>>(run.cfg, "counts"));
  if (run.cfg.contains("data")) {
    auto b = bin_from(run, observations_from(run).rows);
    grid = b.grid;
    return b.counts;
  }
  throw InvalidArgument("config: give either counts or data + binning");
}

// ---------------------------------------------------------------------------
// Output

void ensure_out(const Run& run) {
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec) throw IoError("cannot create output directory '" + run.out.string() + "': " + ec.message());
}

void save(const Run& run, const std::string& name, const std::string& type, json payload, bool seeded) {
  save_record((run.out / name).string(),
              make_record(type, std::move(payload), run.cfg, seeded ? std::optional(run.seed) : std::nullopt));
}

void table(const Run& run, const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& cols) {
  write_table((run.out / name).string(), header, cols);
}

std::vector<std::string> coordinate_names(const StateGrid& g) {
  if (g.dim() == 1) return {"x"};
  std::vector<std::string> h;
  for (std::size_t d = 0; d < g.dim(); ++d) h.push_back("x" + std::to_string(d + 1));
  return h;
}

std::vector<std::vector<double>> coordinate_columns(const StateGrid& g) {
  std::vector<std::vector<double>> c(g.dim(), std::vector<double>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k)
    for (std::size_t d = 0; d < g.dim(); ++d) c[d][k] = g.value(k)[d];
  return c;
}

void check_normalized(const SimplexDistribution& q, const char* what) {
  double s = 0.0;
  for (double v : q.weights()) s += v;
  if (!(std::abs(s - 1.0) < 1e-9)) throw ValidityFailure(std::string(what) + ": distribution is not normalized");
}

std::string num(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// cme-solve

int cmd_cme_solve(Run& run) {
  const auto grid = grid_from(need(run.cfg, "grid"));
  const auto model = residual_from(run, run.cfg, grid);
  CmeSolution sol{.q_hat = SimplexDistribution::uniform(grid.size())};
  if (!model) {
    sol.converged = true;
    sol.log_partition = std::log(static_cast<double>(grid.size()));
    sol.dual_value = sol.log_partition;
    sol.warnings.push_back("no residual model: unconstrained maximum entropy (uniform)");
  } else if (run.cfg.contains("targets")) {
    sol = solve_cme(*model, get_reals(run.cfg, "targets"));
  } else if (run.cfg.contains("tolerances")) {
    sol = cme_from_tolerances(*model, ToleranceSpec(get_reals(run.cfg, "tolerances")));
  } else if (run.cfg.contains("multipliers")) {
    const auto lam = get_reals(run.cfg, "multipliers");
    sol.lambda = lam;
    sol.q_hat = gibbs_from_multipliers(*model, lam);
    sol.achieved_moments = achieved_moments(sol.q_hat, *model);
    sol.log_partition = log_partition(*model, lam);
    sol.dual_value = shannon_entropy(sol.q_hat);
    sol.converged = true;
  } else {
    throw InvalidArgument("config: residual given without targets, tolerances or multipliers");
  }
  check_normalized(sol.q_hat, "cme-solve");
  ensure_out(run);
  save(run, "cme_solution.json", "cme_solution", to_json(sol), false);
  auto cols = coordinate_columns(grid);
  auto header = coordinate_names(grid);
  cols.emplace_back(sol.q_hat.weights().begin(), sol.q_hat.weights().end());
  header.push_back("q_hat");
  table(run, "cme_table.csv", header, cols);

  for (std::size_t d = 0; d < sol.lambda.size(); ++d)
    std::cout << "lambda[" << d << "] = " << num(sol.lambda[d]) << "\n";
  std::cout << "entropy = " << num(shannon_entropy(sol.q_hat)) << "\n";
  std::cout << "log_partition = " << num(sol.log_partition) << "\n";
  for (const auto& w : sol.warnings) std::cerr << "warning: " << w << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

HyperPrior hyperprior_from(Run& run, std::vector<ParameterPrior> defaults) {
  auto& h = run.cfg["hyperprior"];
  if (h.is_null()) {
    h = json::array();
    for (const auto& p : defaults)
      h.push_back({{"name", p.name}, {"scale", to_string(p.scale)}, {"lower", rec::real(p.lower)},
                   {"upper", rec::real(p.upper)}});
  }
  std::vector<ParameterPrior> ps;
  for (const auto& e : h) {
    ParameterPrior p;
    p.name = get<std::string>(e, "name");
    const auto s = get<std::string>(e, "scale");
    if (s == "uniform")
      p.scale = PriorScale::uniform;
    else if (s == "log-uniform")
      p.scale = PriorScale::log_uniform;
    else
      throw InvalidArgument("config: hyperprior scale must be uniform or log-uniform");
    p.lower = rec::real_of(need(e, "lower"));
    p.upper = rec::real_of(need(e, "upper"));
    ps.push_back(std::move(p));
  }
  if (ps.size() != defaults.size())
    throw DimensionMismatch("config: hyperprior has " + std::to_string(ps.size()) + " entries, the family has " +
                            std::to_string(defaults.size()) + " parameters");
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].name != defaults[i].name)
      throw InvalidArgument("config: hyperprior entry " + std::to_string(i) + " must be '" + defaults[i].name + "'");
  return HyperPrior(std::move(ps));
}

EvidenceMode mode_from(Run& run) {
  if (!run.cfg.contains("mode")) run.cfg["mode"] = "saddle";
  const auto m = get<std::string>(run.cfg, "mode");
  if (m == "saddle") return EvidenceMode::saddle;
  if (m == "exact") return EvidenceMode::exact;
  throw InvalidArgument("config: mode must be saddle or exact");
}

json parameter_summary(const ParameterPosterior& post) {
  const auto& c = post.chain;
  const auto mean = c.mean();
  const auto se = c.mc_standard_error();
  json s = json::array();
  for (std::size_t j = 0; j < c.names.size(); ++j) {
    double var = 0.0;
    for (const auto& x : c.samples) var += (x[j] - mean[j]) * (x[j] - mean[j]);
    var /= static_cast<double>(c.samples.size() - 1);
    s.push_back({{"name", c.names[j]},
                 {"mean", rec::real(mean[j])},
                 {"sd", rec::real(std::sqrt(var))},
                 {"mcse", rec::real(se[j])},
                 {"map", rec::real(post.map[j])},
                 {"q05", rec::real(c.quantile(j, 0.05))},
                 {"q50", rec::real(c.quantile(j, 0.5))},
                 {"q95", rec::real(c.quantile(j, 0.95))}});
  }
  return s;
}

void write_parameter_table(const Run& run, const json& summary, const std::vector<double>* extra,
                           const char* extra_name) {
  std::ofstream out(run.out / "parameters.csv", std::ios::binary);
  if (!out) throw IoError("cannot write parameters.csv");
  out << "name,mean,sd,mcse,map,q05,q50,q95" << (extra ? std::string(",") + extra_name : "") << "\n";
  for (std::size_t j = 0; j < summary.size(); ++j) {
    const auto& p = summary[j];
    out << p.at("name").get<std::string>();
    for (const char* k : {"mean", "sd", "mcse", "map", "q05", "q50", "q95"}) out << "," << num(rec::real_of(p.at(k)));
    if (extra) out << "," << num((*extra)[j]);
    out << "\n";
  }
}

void print_summary(const json& summary) {
  std::cout << std::left << std::setw(10) << "param" << std::setw(25) << "mean" << std::setw(25) << "map"
            << "90% interval\n";
  for (const auto& p : summary)
    std::cout << std::setw(10) << p.at("name").get<std::string>() << std::setw(25) << num(rec::real_of(p.at("mean")))
              << std::setw(25) << num(rec::real_of(p.at("map"))) << "[" << num(rec::real_of(p.at("q05"))) << ", "
              << num(rec::real_of(p.at("q95"))) << "]\n";
}

void check_chain(const ChainResult& c) {
  if (!(c.acceptance_rate > 0.02 && c.acceptance_rate < 0.98))
    throw ValidityFailure("fit: chain acceptance rate " + num(c.acceptance_rate) + " is outside (0.02, 0.98)");
}

// (x, data density, fitted density) on a one-dimensional grid.
void density_table(const Run& run, const StateGrid& grid, const ObservedCounts& n, std::span<const double> log_q) {
  std::vector<double> x(grid.size()), data(grid.size()), fitted(grid.size());
  const double total = static_cast<double>(n.total());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    x[k] = grid.x(k);
    data[k] = total > 0 ? static_cast<double>(n[k]) / (total * grid.volume(k)) : 0.0;
    fitted[k] = std::exp(log_q[k]) / grid.volume(k);
  }
  table(run, "density.csv", {"x", "data_density", "fitted_density"}, {x, data, fitted});
}

int fit_statmech(Run& run, const McmcConfig& mc, EvidenceMode mode) {
  std::optional<StateGrid> grid;
  const auto obs = observations_from(run);
  const auto binned = bin_from(run, obs.rows);
  grid = binned.grid;
  const auto energy = energy_from(need(run.cfg, "energy"), *grid);
  StatmechFamily fam(energy);
  double emin = kInf, emax = 0.0;
  for (double e : energy) {
    if (e > 0) emin = std::min(emin, e);
    emax = std::max(emax, e);
  }
  if (!(emax > 0)) throw InvalidArgument("fit: statmech energies are all zero");
  const auto hp = hyperprior_from(run, {{"sigma", PriorScale::log_uniform, 0.1 * std::sqrt(emin), 10.0 * std::sqrt(emax)}});
  ParameterSamplerOptions opt;
  if (mode == EvidenceMode::exact) {
    if (!run.cfg.contains("resolution")) run.cfg["resolution"] = default_quadrature_resolution(fam.state_count());
    opt.quadrature_resolution = get<std::size_t>(run.cfg, "resolution");
  }
  const auto post = sample_parameter_posterior(fam, binned.counts, hp, mode, mc, run.seed, opt);
  check_chain(post.chain);
  const auto lq = fam.log_equilibrium(post.map);
  check_normalized(SimplexDistribution::from_log_weights(lq), "fit");

  ensure_out(run);
  const auto summary = parameter_summary(post);
  save(run, "chain.json", "chain", to_json(post.chain), true);
  save(run, "fit_summary.json", "fit_summary",
       {{"family", "statmech"},
        {"mode", to_string(mode)},
        {"observations", binned.counts.total()},
        {"rejected_rows", obs.rejected + binned.rejected},
        {"acceptance_rate", rec::real(post.chain.acceptance_rate)},
        {"map_log_posterior", rec::real(post.map_log_posterior)},
        {"parameters", summary}},
       true);
  write_parameter_table(run, summary, nullptr, "");
  density_table(run, *grid, binned.counts, lq);
  print_summary(summary);
  return kOk;
}

int fit_regression(Run& run, const McmcConfig& mc, EvidenceMode mode) {
  if (mode != EvidenceMode::saddle) throw UnsupportedDimension("fit: regression supports saddle mode only");
  const auto obs = observations_from(run, true);
  RegressionLatticeOptions lat;
  if (run.cfg.contains("lattice")) {
    const auto& l = run.cfg.at("lattice");
    if (l.contains("step")) lat.step = get<double>(l, "step");
    if (l.contains("half_width")) lat.half_width = get<std::size_t>(l, "half_width");
  }
  RegressionFamily fam(obs.rows, lat);
  run.cfg["lattice"] = {{"step", rec::real(fam.step())}, {"half_width", fam.half_width()}};

  std::vector<double> w(fam.multiplicity().begin(), fam.multiplicity().end());
  const auto ols = weighted_least_squares(fam.design(), fam.response(), w);
  double mean = 0.0, var = 0.0, n = 0.0;
  for (std::size_t i = 0; i < fam.rows(); ++i) mean += w[i] * fam.response()[i], n += w[i];
  mean /= n;
  for (std::size_t i = 0; i < fam.rows(); ++i) var += w[i] * (fam.response()[i] - mean) * (fam.response()[i] - mean);
  const double sd = std::sqrt(var / std::max(1.0, n - 1.0));
  if (!(sd > 0.0)) throw InvalidArgument("fit: response has zero spread");
  const auto names = fam.parameter_names();
  std::vector<ParameterPrior> defaults;
  for (std::size_t i = 0; i < ols.beta.size(); ++i) {
    const double half = 10.0 * (std::abs(ols.beta[i]) + sd);
    defaults.push_back({names[i], PriorScale::uniform, ols.beta[i] - half, ols.beta[i] + half});
  }
  defaults.push_back({"sigma", PriorScale::log_uniform, 1e-3 * sd, 10.0 * sd});
  const auto hp = hyperprior_from(run, defaults);

  const auto fit = fit_regression_map(fam, fam.counts(), hp, mc, run.seed);
  check_chain(fit.posterior.chain);

  ensure_out(run);
  const auto summary = parameter_summary(fit.posterior);
  save(run, "chain.json", "chain", to_json(fit.posterior.chain), true);
  save(run, "fit_summary.json", "fit_summary",
       {{"family", "regression"},
        {"mode", "saddle"},
        {"observations", fam.counts().total()},
        {"rejected_rows", obs.rejected},
        {"acceptance_rate", rec::real(fit.posterior.chain.acceptance_rate)},
        {"map_log_posterior", rec::real(fit.posterior.map_log_posterior)},
        {"parameters", summary},
        {"least_squares",
         {{"beta", rec::reals(ols.beta)},
          {"condition_number", rec::real(ols.condition_number)},
          {"residual_sum_of_squares", rec::real(ols.residual_sum_of_squares)}}},
        {"achieved_moment", rec::real(fit.achieved_moment)},
        {"mean_squared_residual", rec::real(fit.mean_squared_residual)}},
       true);
  std::vector<double> ols_col = ols.beta;
  ols_col.push_back(std::sqrt(2.0 * fit.mean_squared_residual));
  write_parameter_table(run, summary, &ols_col, "least_squares");

  // Observed rows with the fitted hyperplane.
  const std::size_t r = fam.coefficient_count();
  std::vector<std::vector<double>> cols(r + 3, std::vector<double>(fam.rows()));
  std::vector<std::string> header;
  for (std::size_t i = 1; i < r; ++i) header.push_back(obs.names[i - 1]);
  header.insert(header.end(), {obs.names.back(), "fitted", "residual", "multiplicity"});
  for (std::size_t i = 0; i < fam.rows(); ++i) {
    for (std::size_t c = 1; c < r; ++c) cols[c - 1][i] = fam.design()[i][c];
    const double fitted = fam.response()[i] + fam.residual(i, fit.beta);
    cols[r - 1][i] = fam.response()[i];
    cols[r][i] = fitted;
    cols[r + 1][i] = fam.response()[i] - fitted;
    cols[r + 2][i] = w[i];
  }
  table(run, "fitted.csv", header, cols);
  print_summary(summary);
  std::cout << "least squares:";
  for (double b : ols.beta) std::cout << " " << num(b);
  std::cout << "\n";
  return kOk;
}

int fit_qrse_cmd(Run& run, const McmcConfig& mc, EvidenceMode mode) {
  if (mode != EvidenceMode::saddle) throw UnsupportedDimension("fit: qrse supports saddle mode only");
  auto obs = observations_from(run);
  if (obs.names.size() != 1) throw DimensionMismatch("fit: qrse needs exactly one data column");
  std::vector<double> x;
  for (const auto& row : obs.rows) x.push_back(row[0]);
  if (!run.cfg.contains("binning")) {
    const auto g = qrse_default_grid(x);
    run.cfg["binning"] = {{"lo", rec::real(g.x(0) - 0.5 * g.volume(0))},
                          {"hi", rec::real(g.x(g.size() - 1) + 0.5 * g.volume(g.size() - 1))},
                          {"cells", g.size()}};
  }
  if (!run.cfg.contains("out_of_range")) run.cfg["out_of_range"] = "error";
  const auto binned = bin_from(run, obs.rows);
  QrseFamily fam(binned.grid);

  double lo = x[0], hi = x[0], mean = 0.0, var = 0.0;
  for (double v : x) lo = std::min(lo, v), hi = std::max(hi, v), mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size() - 1));
  const auto hp = hyperprior_from(run, {{"mu", PriorScale::uniform, lo, hi},
                                        {"T", PriorScale::log_uniform, std::max(1e-3 * sd, kMinTemperature), 10.0 * sd},
                                        {"alpha", PriorScale::uniform, lo, hi},
                                        {"S", PriorScale::log_uniform, 1e-3 * sd, 10.0 * sd}});
  const auto fit = fit_qrse(fam, binned.counts, hp, mc, run.seed);
  check_chain(fit.posterior.chain);
  const auto dens = qrse_distribution(binned.grid, fit.map);
  check_normalized(dens.q, "fit");
  const double asym = qrse_asymmetry(binned.grid, fit.map);

  ensure_out(run);
  const auto summary = parameter_summary(fit.posterior);
  save(run, "chain.json", "chain", to_json(fit.posterior.chain), true);
  save(run, "fit_summary.json", "fit_summary",
       {{"family", "qrse"},
        {"mode", "saddle"},
        {"observations", binned.counts.total()},
        {"rejected_rows", obs.rejected + binned.rejected},
        {"acceptance_rate", rec::real(fit.posterior.chain.acceptance_rate)},
        {"map_log_posterior", rec::real(fit.posterior.map_log_posterior)},
        {"parameters", summary},
        {"feedback_moment", rec::real(fit.feedback)},
        {"asymmetry_about_mu", rec::real(asym)},
        {"truncated", fit.truncated},
        {"warnings", fit.warnings}},
       true);
  write_parameter_table(run, summary, nullptr, "");
  density_table(run, binned.grid, binned.counts, dens.log_q);
  print_summary(summary);
  std::cout << "feedback moment = " << num(fit.feedback) << "\n";
  std::cout << "asymmetry about mu = " << num(asym) << "\n";
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  return kOk;
}

int cmd_fit(Run& run) {
  const auto family = get<std::string>(run.cfg, "family");
  const auto mc = mcmc_from(run);
  const auto mode = mode_from(run);
  if (family == "statmech") return fit_statmech(run, mc, mode);
  if (family == "regression") return fit_regression(run, mc, mode);
  if (family == "qrse") return fit_qrse_cmd(run, mc, mode);
  throw InvalidArgument("config: family must be statmech, regression or qrse");
}

// ---------------------------------------------------------------------------
// evidence

std::optional<Constraint> constraint_from(const Run& run, const StateGrid& grid) {
  const auto model = residual_from(run, run.cfg, grid);
  if (!model) return std::nullopt;
  return Constraint(*model, ToleranceSpec(get_reals(run.cfg, "tolerances")));
}

StateGrid counts_grid(Run& run, std::optional<StateGrid>& from_data, const ObservedCounts& n) {
  if (run.cfg.contains("grid")) {
    auto g = grid_from(run.cfg.at("grid"));
    if (from_data && g.size() != from_data->size())
      throw DimensionMismatch("config: grid and binning give different cell counts");
    return g;
  }
  if (from_data) return *from_data;
  json s = {{"states", n.size()}};
  run.cfg["grid"] = s;
  return grid_from(s);
}

int cmd_evidence(Run& run) {
  std::optional<StateGrid> binned;
  const auto counts = counts_from(run, binned);
  const auto grid = counts_grid(run, binned, counts);
  if (grid.size() != counts.size()) throw DimensionMismatch("config: counts and grid differ in length");
  const auto c = constraint_from(run, grid);
  const Constraint* cp = c ? &*c : nullptr;

  const auto sp = saddle_point_log_evidence(counts, cp);
  const double n = static_cast<double>(counts.total());
  std::optional<EvidenceReport> bf;
  std::string refused;
  if (counts.size() > kMaxQuadratureStates) {
    refused = "brute-force quadrature refused: K = " + std::to_string(counts.size()) + " exceeds " +
              std::to_string(kMaxQuadratureStates);
  } else {
    if (!run.cfg.contains("resolution")) run.cfg["resolution"] = default_quadrature_resolution(counts.size());
    bf = brute_force_log_evidence(counts, cp, get<std::size_t>(run.cfg, "resolution"));
  }

  ensure_out(run);
  json payload = {{"observations", counts.total()}, {"saddle_point", to_json(sp)}};
  payload["brute_force"] = bf ? to_json(*bf) : json(nullptr);
  if (bf) {
    const double gap = std::abs(bf->log_evidence - sp.log_evidence);
    payload["gap"] = rec::real(gap);
    payload["gap_per_observation"] = n > 0 ? rec::real(gap / n) : json(nullptr);
  }
  if (!refused.empty()) payload["note"] = refused;
  save(run, "evidence.json", "evidence_pair", payload, false);

  std::cout << "saddle-point log evidence = " << num(sp.log_evidence) << "\n";
  if (!bf) {
    std::cerr << "error: " << refused << "\n";
    return kUnsupported;
  }
  const double gap = std::abs(bf->log_evidence - sp.log_evidence);
  std::cout << "brute-force log evidence = " << num(bf->log_evidence) << " (resolution " << bf->resolution << ", "
            << bf->nodes << " nodes)\n";
  std::cout << "gap = " << num(gap) << " nats\n";
  if (n > 0) {
    std::cout << "gap per observation = " << num(gap / n) << " nats\n";
    std::cout << "verdict: per-observation gap " << num(gap / n)
              << " nats between the exact and saddle-point evidence (smaller is closer to equilibrium)\n";
  } else {
    std::cout << "gap per observation = n/a (N = 0)\n";
    std::cout << "verdict: no observations; the gap is the prior normalizer alone\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// sample-q

int cmd_sample_q(Run& run) {
  std::optional<StateGrid> binned;
  const auto counts = counts_from(run, binned);
  const auto grid = counts_grid(run, binned, counts);
  if (grid.size() != counts.size()) throw DimensionMismatch("config: counts and grid differ in length");
  const auto c = constraint_from(run, grid);
  const auto mc = mcmc_from(run);
  const auto chain = sample_hypothesis_posterior(counts, c ? &*c : nullptr, mc, run.seed);
  check_chain(chain);
  const auto mean = chain.mean();
  const auto se = chain.mc_standard_error();
  std::vector<double> q05(mean.size()), q95(mean.size());
  for (std::size_t k = 0; k < mean.size(); ++k) q05[k] = chain.quantile(k, 0.05), q95[k] = chain.quantile(k, 0.95);

  ensure_out(run);
  save(run, "chain.json", "chain", to_json(chain), true);
  save(run, "posterior_mean.json", "posterior_mean",
       {{"mean", rec::reals(mean)}, {"mcse", rec::reals(se)}, {"acceptance_rate", rec::real(chain.acceptance_rate)}},
       true);
  auto cols = coordinate_columns(grid);
  auto header = coordinate_names(grid);
  cols.insert(cols.end(), {mean, se, q05, q95});
  header.insert(header.end(), {"mean", "mcse", "q05", "q95"});
  table(run, "posterior_mean.csv", header, cols);
  for (std::size_t k = 0; k < mean.size(); ++k)
    std::cout << "q[" << k << "] = " << num(mean[k]) << " +- " << num(se[k]) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// bin

int cmd_bin(Run& run) {
  const auto obs = observations_from(run);
  const auto b = bin_from(run, obs.rows);
  ensure_out(run);
  save(run, "grid.json", "grid", to_json(b.grid), false);
  save(run, "counts.json", "counts",
       {{"counts", to_json(b.counts).at("counts")}, {"rejected", obs.rejected + b.rejected}, {"clamped", b.clamped}},
       false);
  auto cols = coordinate_columns(b.grid);
  auto header = coordinate_names(b.grid);
  std::vector<double> n(b.grid.size()), dens(b.grid.size());
  const double total = static_cast<double>(b.counts.total());
  for (std::size_t k = 0; k < b.grid.size(); ++k) {
    n[k] = static_cast<double>(b.counts[k]);
    dens[k] = n[k] / (total * b.grid.volume(k));
  }
  cols.push_back(n);
  cols.push_back(dens);
  header.insert(header.end(), {"count", "density"});
  table(run, "counts.csv", header, cols);
  std::cout << "binned " << b.counts.total() << " rows into " << b.grid.size() << " cells";
  if (obs.rejected + b.rejected) std::cout << ", rejected " << obs.rejected + b.rejected;
  if (b.clamped) std::cout << ", clamped " << b.clamped;
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int run_guarded(const std::function<int()>& f) {
  try {
    return f();
  } catch (const ValidityFailure& e) {
    std::cerr << "validity check failed: " << e.what() << "\n";
    return kValidity;
  } catch (const InfeasibleTarget& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const ConvergenceFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConvergence;
  } catch (const UnsupportedDimension& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnsupported;
  } catch (const TuningFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTuning;
  } catch (const VersionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVersion;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParse;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kGeneric;
  }
}

struct Common {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool with_data) {
  sub->add_option("--config", c.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  if (with_data) sub->add_option("--data", c.data, "data file, overrides the config's \"data\"");
  sub->add_option("--out", c.out, "output directory (default: the config's \"out\", else ./meb-out)");
  sub->add_option("--seed", c.seed, "random seed, overrides the config's \"seed\"");
}

Run load_run(const Common& c) {
  Run run;
  std::ifstream in(c.config);
  if (!in) throw IoError("cannot open '" + c.config + "'");
  try {
    run.cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(c.config + ": " + e.what());
  }
  if (!run.cfg.is_object()) throw ParseError(c.config + ": top level must be an object");
  run.base = fs::path(c.config).parent_path();
  if (!c.data.empty()) {
    run.cfg["data"] = fs::absolute(c.data).string();
  }
  if (c.seed) run.cfg["seed"] = *c.seed;
  if (!run.cfg.contains("seed")) run.cfg["seed"] = 1;
  run.seed = get<std::uint64_t>(run.cfg, "seed");
  // The output location is not part of the computation and is kept out of the records.
  std::string out = c.out;
  if (out.empty()) out = run.cfg.contains("out") ? resolve(run, get<std::string>(run.cfg, "out")).string() : "meb-out";
  run.cfg.erase("out");
  run.out = out;
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meb: maximum-entropy Bayesian inference on coarse-grained data"};
  app.set_version_flag("--version", std::string(MEB_VERSION));
  app.require_subcommand(1);

  Common common;
  std::string family, mode;
  std::optional<std::size_t> samples, burn_in, resolution;

  auto* cme = app.add_subcommand("cme-solve", "solve a constrained maximum entropy problem");
  add_common(cme, common, false);

  auto* fit = app.add_subcommand("fit", "sample the parameter posterior of a model family");
  add_common(fit, common, true);
  fit->add_option("--family", family, "statmech, regression or qrse")
      ->check(CLI::IsMember({"statmech", "regression", "qrse"}));
  fit->add_option("--mode", mode, "saddle or exact evidence")->check(CLI::IsMember({"saddle", "exact"}));
  fit->add_option("--samples", samples, "retained MCMC samples");
  fit->add_option("--burn-in", burn_in, "MCMC burn-in iterations");

  auto* ev = app.add_subcommand("evidence", "brute-force and saddle-point log evidence");
  add_common(ev, common, true);
  ev->add_option("--resolution", resolution, "quadrature lattice resolution")->check(CLI::Range(50, 100000));

  auto* sq = app.add_subcommand("sample-q", "sample the posterior over distributions q");
  add_common(sq, common, true);
  sq->add_option("--samples", samples, "retained MCMC samples");
  sq->add_option("--burn-in", burn_in, "MCMC burn-in iterations");

  auto* bn = app.add_subcommand("bin", "bin observations into counts");
  add_common(bn, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  return run_guarded([&]() -> int {
    Run run = load_run(common);
    if (!family.empty()) run.cfg["family"] = family;
    if (!mode.empty()) run.cfg["mode"] = mode;
    if (samples || burn_in) {
      if (!run.cfg.contains("mcmc")) run.cfg["mcmc"] = json::object();
      if (samples) run.cfg["mcmc"]["samples"] = *samples;
      if (burn_in) run.cfg["mcmc"]["burn_in"] = *burn_in;
    }
    if (resolution) run.cfg["resolution"] = *resolution;
    if (cme->parsed()) return cmd_cme_solve(run);
    if (fit->parsed()) return cmd_fit(run);
    if (ev->parsed()) return cmd_evidence(run);
    if (sq->parsed()) return cmd_sample_q(run);
    return cmd_bin(run);
  });
}
