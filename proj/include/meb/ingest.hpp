#pragma once

// Delimited-text observations, coarse-graining into counts, and plot-ready
// tables.
//
// Bins are half-open [lo, hi) except the last, which is closed, so a value
// on an interior edge belongs to the upper cell.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "meb/error.hpp"
#include "meb/prob.hpp"

namespace meb {

// ---------------------------------------------------------------------------
// Number formatting and parsing

/// Shortest decimal that reads back to the same double; inf/nan spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Reading observations

enum class MalformedPolicy { reject_row, error };

struct ReadOptions {
  /// Columns to extract, by header name; an entry that matches no header
  /// and is a nonnegative integer selects that zero-based column. Empty
  /// selects every column.
  std::vector<std::string> columns{};
  char delimiter = ',';
  MalformedPolicy malformed = MalformedPolicy::reject_row;
  /// Prepend a constant 1 to every row (regression design convention).
  bool prepend_constant = false;
};

struct Observations {
  std::vector<std::string> names;  ///< selected column names, constant excluded
  std::vector<std::vector<double>> rows;
  std::size_t rejected = 0;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string trim_field(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace detail

inline Observations parse_observations(std::istream& in, const ReadOptions& opt,
                                       const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::blank(line)) break;
  }
  if (detail::blank(line)) throw ParseError(source + ": no header row");
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line, opt.delimiter)) header.push_back(detail::trim_field(f));

  std::vector<std::size_t> index;
  Observations obs;
  if (opt.columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) index.push_back(i);
  } else {
    for (const auto& c : opt.columns) {
      const auto it = std::find(header.begin(), header.end(), c);
      if (it != header.end()) {
        index.push_back(static_cast<std::size_t>(it - header.begin()));
        continue;
      }
      std::size_t pos = 0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), pos);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size() || pos >= header.size())
        throw ParseError(source + ": column '" + c + "' is not in the header");
      index.push_back(pos);
    }
  }
  for (auto i : index) obs.names.push_back(header[i]);

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto fields = detail::split_fields(line, opt.delimiter);
    std::vector<double> row;
    row.reserve(index.size() + 1);
    if (opt.prepend_constant) row.push_back(1.0);
    bool ok = true;
    for (auto i : index) {
      const auto v = i < fields.size() ? parse_double(fields[i]) : std::nullopt;
      if (!v) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    if (!ok) {
      if (opt.malformed == MalformedPolicy::error)
        throw ParseError(source + ":" + std::to_string(line_no) + ": missing or non-numeric field");
      ++obs.rejected;
      continue;
    }
    obs.rows.push_back(std::move(row));
  }
  if (obs.rows.empty()) throw ParseError(source + ": no numeric rows");
  return obs;
}

inline Observations read_observations(const std::string& path, const ReadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_observations(in, opt, path);
}

// ---------------------------------------------------------------------------
// Binning

enum class OutOfRange { clamp, reject_row, error };

/// Binning of one coordinate: K equal cells over [lo, hi], or explicit edges.
class AxisBinning {
 public:
  static AxisBinning equal_width(double lo, double hi, std::size_t k) {
    if (k < 2) throw InvalidArgument("AxisBinning: equal-width binning needs K >= 2");
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
      throw InvalidArgument("AxisBinning: need finite lo < hi");
    std::vector<double> e(k + 1);
    const double w = (hi - lo) / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) e[i] = lo + static_cast<double>(i) * w;
    e[k] = hi;
    return AxisBinning(std::move(e));
  }

  static AxisBinning edges(std::vector<double> e) {
    if (e.size() < 2) throw InvalidArgument("AxisBinning: need at least two edges");
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!std::isfinite(e[i])) throw InvalidArgument("AxisBinning: edges must be finite");
      if (i > 0 && !(e[i] > e[i - 1])) throw InvalidArgument("AxisBinning: edges must be strictly increasing");
    }
    return AxisBinning(std::move(e));
  }

  std::size_t cells() const noexcept { return edges_.size() - 1; }
  const std::vector<double>& edge_list() const noexcept { return edges_; }
  double lower() const noexcept { return edges_.front(); }
  double upper() const noexcept { return edges_.back(); }
  double midpoint(std::size_t i) const { return 0.5 * (edges_[i] + edges_[i + 1]); }
  double width(std::size_t i) const { return edges_[i + 1] - edges_[i]; }

  /// Cell of v, or nullopt when v lies outside [lower, upper] or is NaN.
  std::optional<std::size_t> locate(double v) const {
    if (!(v >= lower() && v <= upper())) return std::nullopt;
    if (v == upper()) return cells() - 1;
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), v);
    return static_cast<std::size_t>(it - edges_.begin()) - 1;
  }

 private:
  explicit AxisBinning(std::vector<double> e) : edges_(std::move(e)) {}
  std::vector<double> edges_;
};

struct BinningSpec {
  std::vector<AxisBinning> axes;  ///< one per row coordinate
  OutOfRange out_of_range = OutOfRange::error;
};

struct BinnedData {
  StateGrid grid;
  ObservedCounts counts;
  std::size_t rejected = 0;
  std::size_t clamped = 0;
};

/// Counts over the Cartesian product of the axes, last axis fastest. Cell
/// representatives are bin midpoints and widths are bin widths.
inline BinnedData bin(const std::vector<std::vector<double>>& rows, const BinningSpec& spec) {
  if (rows.empty()) throw InvalidArgument("bin: no rows");
  const std::size_t r = spec.axes.size();
  if (r == 0) throw InvalidArgument("bin: binning spec has no axes");
  std::size_t k = 1;
  for (const auto& a : spec.axes) k *= a.cells();

  std::vector<std::uint64_t> n(k, 0);
  std::size_t rejected = 0, clamped = 0;
  for (std::size_t row = 0; row < rows.size(); ++row) {
    if (rows[row].size() != r)
      throw DimensionMismatch("bin: row " + std::to_string(row) + " has " + std::to_string(rows[row].size()) +
                              " coordinates, spec has " + std::to_string(r));
    std::size_t cell = 0;
    bool reject = false, was_clamped = false;
    for (std::size_t d = 0; d < r && !reject; ++d) {
      const auto& axis = spec.axes[d];
      const double v = rows[row][d];
      auto idx = axis.locate(v);
      if (!idx) {
        if (spec.out_of_range == OutOfRange::error || (std::isnan(v) && spec.out_of_range == OutOfRange::clamp))
          throw InvalidArgument("bin: row " + std::to_string(row) + " coordinate " + std::to_string(d) +
                                " value " + std::to_string(v) + " is outside [" + std::to_string(axis.lower()) +
                                ", " + std::to_string(axis.upper()) + "]");
        if (spec.out_of_range == OutOfRange::reject_row) {
          reject = true;
          continue;
        }
        idx = v < axis.lower() ? 0 : axis.cells() - 1;
        was_clamped = true;
      }
      cell = cell * axis.cells() + *idx;
    }
    if (reject) {
      ++rejected;
      continue;
    }
    if (was_clamped) ++clamped;
    ++n[cell];
  }
  if (rejected == rows.size()) throw InvalidArgument("bin: every row is out of range");

  std::vector<double> values, widths;
  values.reserve(k * r);
  widths.reserve(k * r);
  std::vector<std::size_t> digit(r, 0);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t rem = c;
    for (std::size_t d = r; d-- > 0;) {
      digit[d] = rem % spec.axes[d].cells();
      rem /= spec.axes[d].cells();
    }
    for (std::size_t d = 0; d < r; ++d) {
      values.push_back(spec.axes[d].midpoint(digit[d]));
      widths.push_back(spec.axes[d].width(digit[d]));
    }
  }
  return {StateGrid(r, std::move(values), std::move(widths)), ObservedCounts(std::move(n)), rejected, clamped};
}

// ---------------------------------------------------------------------------
// Tables

/// Writes named columns of equal length as delimited text with a header.
inline void write_table(std::ostream& out, const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& columns, char delimiter = ',') {
  if (header.size() != columns.size()) throw DimensionMismatch("write_table: header and column count differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != rows) throw DimensionMismatch("write_table: columns differ in length");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? std::string(1, delimiter) : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j)
      out << (j ? std::string(1, delimiter) : "") << format_double(columns[j][i]);
    out << '\n';
  }
}

inline void write_table(const std::string& path, const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& columns, char delimiter = ',') {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_table(out, header, columns, delimiter);
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace meb
