#pragma once

// Self-describing JSON records. Every record carries a format tag, a
// schema version, its artifact type, the resolved run configuration and
// seed, and the payload. Doubles are written in shortest round-trip form,
// so load(save(x)) is bit-identical; non-finite values are stored as the
// strings "inf", "-inf" and "nan".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meb/cme.hpp"
#include "meb/error.hpp"
#include "meb/mcmc.hpp"
#include "meb/posterior.hpp"
#include "meb/prob.hpp"

#ifndef MEB_VERSION
#define MEB_VERSION "1.0.0"
#endif

namespace meb {

using json = nlohmann::ordered_json;

inline constexpr const char* kRecordFormat = "maxent-bayes-record";
inline constexpr int kRecordVersion = 1;

namespace rec {

inline json real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_of(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("record: expected a number, got " + j.dump());
}

inline json reals(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(real(x));
  return a;
}

inline std::vector<double> reals_of(const json& j) {
  if (!j.is_array()) throw ParseError("record: expected an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(real_of(x));
  return v;
}

inline const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw ParseError(std::string("record: missing field '") + name + "'");
  return j.at(name);
}

}  // namespace rec

// ---------------------------------------------------------------------------
// Payload encoders

inline json to_json(const StateGrid& g) {
  return {{"dim", g.dim()}, {"values", rec::reals(g.raw_values())}, {"widths", rec::reals(g.raw_widths())}};
}
inline StateGrid grid_from_json(const json& j) {
  return StateGrid(rec::field(j, "dim").get<std::size_t>(), rec::reals_of(rec::field(j, "values")),
                   rec::reals_of(rec::field(j, "widths")));
}

inline json to_json(const ObservedCounts& c) {
  return {{"counts", std::vector<std::uint64_t>(c.counts().begin(), c.counts().end())}};
}
inline ObservedCounts counts_from_json(const json& j) {
  return ObservedCounts(rec::field(j, "counts").get<std::vector<std::uint64_t>>());
}

inline json to_json(const SimplexDistribution& q) { return rec::reals(q.weights()); }

inline json to_json(const CmeSolution& s) {
  return {{"lambda", rec::reals(s.lambda)},
          {"q_hat", to_json(s.q_hat)},
          {"achieved_moments", rec::reals(s.achieved_moments)},
          {"target_moments", rec::reals(s.target_moments)},
          {"log_partition", rec::real(s.log_partition)},
          {"dual_value", rec::real(s.dual_value)},
          {"converged", s.converged},
          {"iterations", s.iterations},
          {"gradient_norm", rec::real(s.gradient_norm)},
          {"warnings", s.warnings}};
}
inline CmeSolution cme_solution_from_json(const json& j) {
  CmeSolution s{.lambda = rec::reals_of(rec::field(j, "lambda")),
                .q_hat = SimplexDistribution(rec::reals_of(rec::field(j, "q_hat")))};
  s.achieved_moments = rec::reals_of(rec::field(j, "achieved_moments"));
  s.target_moments = rec::reals_of(rec::field(j, "target_moments"));
  s.log_partition = rec::real_of(rec::field(j, "log_partition"));
  s.dual_value = rec::real_of(rec::field(j, "dual_value"));
  s.converged = rec::field(j, "converged").get<bool>();
  s.iterations = rec::field(j, "iterations").get<int>();
  s.gradient_norm = rec::real_of(rec::field(j, "gradient_norm"));
  s.warnings = rec::field(j, "warnings").get<std::vector<std::string>>();
  return s;
}

inline json to_json(const ChainResult& c) {
  json samples = json::array();
  for (const auto& s : c.samples) samples.push_back(rec::reals(s));
  return {{"names", c.names},
          {"seed", c.seed},
          {"acceptance_rate", rec::real(c.acceptance_rate)},
          {"tuning",
           {{"scale", rec::real(c.tuning.scale)},
            {"proposal_covariance", rec::reals(c.tuning.proposal_covariance)},
            {"burn_in_acceptance", rec::real(c.tuning.burn_in_acceptance)}}},
          {"best_point", rec::reals(c.best_point)},
          {"best_score", rec::real(c.best_score)},
          {"log_density", rec::reals(c.log_density)},
          {"samples", std::move(samples)}};
}
inline ChainResult chain_from_json(const json& j) {
  ChainResult c;
  c.names = rec::field(j, "names").get<std::vector<std::string>>();
  c.seed = rec::field(j, "seed").get<std::uint64_t>();
  c.acceptance_rate = rec::real_of(rec::field(j, "acceptance_rate"));
  const auto& t = rec::field(j, "tuning");
  c.tuning.scale = rec::real_of(rec::field(t, "scale"));
  c.tuning.proposal_covariance = rec::reals_of(rec::field(t, "proposal_covariance"));
  c.tuning.burn_in_acceptance = rec::real_of(rec::field(t, "burn_in_acceptance"));
  c.best_point = rec::reals_of(rec::field(j, "best_point"));
  c.best_score = rec::real_of(rec::field(j, "best_score"));
  c.log_density = rec::reals_of(rec::field(j, "log_density"));
  for (const auto& s : rec::field(j, "samples")) c.samples.push_back(rec::reals_of(s));
  return c;
}

inline json to_json(const EvidenceReport& r) {
  return {{"log_evidence", rec::real(r.log_evidence)},
          {"method", to_string(r.method)},
          {"resolution", r.resolution},
          {"nodes", r.nodes},
          {"q_hat", rec::reals(r.q_hat)},
          {"divergence", rec::real(r.divergence)},
          {"note", r.note}};
}
inline EvidenceReport evidence_from_json(const json& j) {
  EvidenceReport r;
  r.log_evidence = rec::real_of(rec::field(j, "log_evidence"));
  const auto m = rec::field(j, "method").get<std::string>();
  if (m == "brute-force")
    r.method = EvidenceMethod::brute_force;
  else if (m == "saddle-point")
    r.method = EvidenceMethod::saddle_point;
  else
    throw ParseError("record: unknown evidence method '" + m + "'");
  r.resolution = rec::field(j, "resolution").get<std::size_t>();
  r.nodes = rec::field(j, "nodes").get<std::size_t>();
  r.q_hat = rec::reals_of(rec::field(j, "q_hat"));
  r.divergence = rec::real_of(rec::field(j, "divergence"));
  r.note = rec::field(j, "note").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Envelope

inline json make_record(const std::string& type, json payload, json config = json::object(),
                        std::optional<std::uint64_t> seed = std::nullopt) {
  json r;
  r["format"] = kRecordFormat;
  r["version"] = kRecordVersion;
  r["library_version"] = MEB_VERSION;
  r["type"] = type;
  r["seed"] = seed ? json(*seed) : json(nullptr);
  r["config"] = std::move(config);
  r["payload"] = std::move(payload);
  return r;
}

/// Checks the envelope and returns it. An empty `type` accepts any type.
inline const json& check_record(const json& r, const std::string& type = "") {
  if (!r.is_object() || !r.contains("format") || r.at("format") != kRecordFormat)
    throw ParseError("record: not a maxent-bayes record");
  if (!r.contains("version") || !r.at("version").is_number_integer() || r.at("version").get<int>() != kRecordVersion)
    throw VersionMismatch("record: unsupported record version " +
                          (r.contains("version") ? r.at("version").dump() : std::string("<missing>")) +
                          " (this build reads version " + std::to_string(kRecordVersion) + ")");
  if (!type.empty() && rec::field(r, "type") != type)
    throw ParseError("record: expected type '" + type + "', found " + r.at("type").dump());
  rec::field(r, "payload");
  return r;
}

inline std::string dump_record(const json& r) { return r.dump(2) + "\n"; }

inline void save_record(const std::string& path, const json& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << dump_record(r);
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline json parse_record(const std::string& text, const std::string& type = "") {
  json r;
  try {
    r = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("record: malformed JSON: ") + e.what());
  }
  check_record(r, type);
  return r;
}

inline json load_record(const std::string& path, const std::string& type = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_record(ss.str(), type);
}

// Typed save/load for the artifact types.

template <class T>
struct RecordTraits;

#define MEB_RECORD_TRAITS(T, NAME, DECODE)                        \
  template <>                                                     \
  struct RecordTraits<T> {                                        \
    static constexpr const char* type = NAME;                     \
    static T decode(const json& j) { return DECODE(j); }          \
  };

MEB_RECORD_TRAITS(StateGrid, "grid", grid_from_json)
MEB_RECORD_TRAITS(ObservedCounts, "counts", counts_from_json)
MEB_RECORD_TRAITS(CmeSolution, "cme_solution", cme_solution_from_json)
MEB_RECORD_TRAITS(ChainResult, "chain", chain_from_json)
MEB_RECORD_TRAITS(EvidenceReport, "evidence", evidence_from_json)
#undef MEB_RECORD_TRAITS

template <class T>
void save_result(const std::string& path, const T& value, json config = json::object(),
                 std::optional<std::uint64_t> seed = std::nullopt) {
  save_record(path, make_record(RecordTraits<T>::type, to_json(value), std::move(config), seed));
}

template <class T>
T load_result(const std::string& path) {
  const json r = load_record(path, RecordTraits<T>::type);
  return RecordTraits<T>::decode(r.at("payload"));
}

}  // namespace meb
