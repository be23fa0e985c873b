#ifndef SWOPT_RESULTS_HPP
#define SWOPT_RESULTS_HPP

// Result rows and their delimited-text form.
//
// Header for a trial with J periods:
//
//   scenario, a, b, K, alpha0, rho, p_2, ..., p_J,
//   psi_optimal, psi_balanced, psi_lawrie,
//   pct_additional_balanced, pct_additional_lawrie,
//   psi_mc_se, kkt_min_derivative, status, seed, samples
//
// Numbers use the shortest representation that reads back to the same
// double.  Absent values are empty fields.

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "swopt/errors.hpp"

namespace swopt {

struct ResultRow {
  std::string scenario;
  std::optional<double> a;
  std::optional<double> b;
  int cluster_period_size = 0;
  double alpha0 = 0.0;
  double rho = 0.0;
  int periods = 0;
  Eigen::VectorXd weights;  // p_2..p_J, empty if the cell failed
  std::optional<double> psi_optimal;
  std::optional<double> psi_balanced;
  std::optional<double> psi_lawrie;
  std::optional<double> pct_additional_balanced;
  std::optional<double> pct_additional_lawrie;
  std::optional<double> psi_mc_se;
  std::optional<double> kkt_min_derivative;
  std::string status;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
};

inline std::vector<std::string> result_header(int periods) {
  std::vector<std::string> h = {"scenario", "a", "b", "K", "alpha0", "rho"};
  for (int s = 2; s <= periods; ++s) h.push_back("p_" + std::to_string(s));
  for (const char* c : {"psi_optimal", "psi_balanced", "psi_lawrie",
                        "pct_additional_balanced", "pct_additional_lawrie",
                        "psi_mc_se", "kkt_min_derivative", "status", "seed",
                        "samples"}) {
    h.emplace_back(c);
  }
  return h;
}

namespace detail {

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& x) {
  return x ? format_number(*x) : std::string();
}

inline double parse_number(const std::string& field, const std::string& column) {
  double x = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  const auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("column " + column + ": cannot parse '" + field + "'");
  }
  return x;
}

inline std::optional<double> parse_optional(const std::string& field,
                                            const std::string& column) {
  if (field.empty()) return std::nullopt;
  return parse_number(field, column);
}

inline std::string escape_field(std::string field, char delim) {
  for (char& c : field) {
    if (c == '\n' || c == '\r') c = ' ';
    if (delim == '\t' && c == '\t') c = ' ';
  }
  if (delim == ',' && field.find_first_of(",\"") != std::string::npos) {
    std::string quoted = "\"";
    for (char c : field) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + '"';
  }
  return field;
}

inline std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"' && delim == ',' && fields.back().empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw ConfigError("unterminated quoted field");
  return fields;
}

}  // namespace detail

inline void write_header(std::ostream& out, int periods, char delim = ',') {
  const auto h = result_header(periods);
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) out << delim;
    out << h[i];
  }
  out << '\n';
}

inline void write_row(std::ostream& out, const ResultRow& row, char delim = ',') {
  using detail::format_number;
  using detail::format_optional;
  std::vector<std::string> f = {row.scenario, format_optional(row.a),
                                format_optional(row.b),
                                std::to_string(row.cluster_period_size),
                                format_number(row.alpha0), format_number(row.rho)};
  for (int s = 0; s < row.periods - 1; ++s) {
    f.push_back(s < row.weights.size() ? format_number(row.weights(s)) : std::string());
  }
  for (const auto* x : {&row.psi_optimal, &row.psi_balanced, &row.psi_lawrie,
                        &row.pct_additional_balanced, &row.pct_additional_lawrie,
                        &row.psi_mc_se, &row.kkt_min_derivative}) {
    f.push_back(format_optional(*x));
  }
  f.push_back(row.status);
  f.push_back(std::to_string(row.seed));
  f.push_back(std::to_string(row.samples));
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) out << delim;
    out << detail::escape_field(f[i], delim);
  }
  out << '\n';
}

inline void write_results(std::ostream& out, const std::vector<ResultRow>& rows,
                          int periods, char delim = ',') {
  write_header(out, periods, delim);
  for (const auto& r : rows) write_row(out, r, delim);
}

/// Parses text produced by write_results.  The number of weight columns is
/// taken from the header.
inline std::vector<ResultRow> read_results(std::istream& in, char delim = ',') {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty results file");
  const auto header = detail::split_record(line, delim);
  const int periods = static_cast<int>(header.size()) - 15;
  if (periods < 3 || header != result_header(periods)) {
    throw ConfigError("unrecognised results header");
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_record(line, delim);
    if (f.size() != header.size()) {
      throw ConfigError("row " + std::to_string(rows.size() + 1) + " has " +
                        std::to_string(f.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    ResultRow r;
    std::size_t i = 0;
    auto next = [&] { return f[i++]; };
    auto number = [&] {
      const double x = detail::parse_number(f[i], header[i]);
      ++i;
      return x;
    };
    auto optional = [&] {
      const auto x = detail::parse_optional(f[i], header[i]);
      ++i;
      return x;
    };
    r.scenario = next();
    r.a = optional();
    r.b = optional();
    r.cluster_period_size = static_cast<int>(number());
    r.alpha0 = number();
    r.rho = number();
    r.periods = periods;
    if (!f[i].empty()) {
      r.weights.resize(periods - 1);
      for (int s = 0; s < periods - 1; ++s) r.weights(s) = number();
    } else {
      i += static_cast<std::size_t>(periods - 1);
    }
    for (auto* x : {&r.psi_optimal, &r.psi_balanced, &r.psi_lawrie,
                    &r.pct_additional_balanced, &r.pct_additional_lawrie,
                    &r.psi_mc_se, &r.kkt_min_derivative}) {
      *x = optional();
    }
    r.status = next();
    r.seed = std::stoull(next());
    r.samples = static_cast<std::size_t>(std::stoull(next()));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace swopt

#endif  // SWOPT_RESULTS_HPP
