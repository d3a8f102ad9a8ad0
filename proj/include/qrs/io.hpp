#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qrs/estimators.hpp"
#include "qrs/sweep.hpp"

namespace qrs::io {

/// 17 significant digits: enough for double round trips to be exact.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || tmp.empty())
    throw std::invalid_argument("bad numeric field: '" + tmp + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tmp.c_str(), &end, 10);
  if (end != tmp.c_str() + tmp.size() || tmp.empty())
    throw std::invalid_argument("bad integer field: '" + tmp + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

// ---------------------------------------------------------------------------
// Sweep rows
// ---------------------------------------------------------------------------

inline const char* sweep_csv_header() {
  return "beta,replicate,ar,ar_se,log_z,log_z_beta,tvd,tvd_se,tvd_bound,kl,kl_se,"
         "kl_to_base,n_draws,seed";
}

inline std::string to_csv_line(const DiagnosticsRow& r) {
  std::string out;
  out += format_double(r.beta);
  out += ',';
  out += std::to_string(r.replicate);
  out += ',';
  out += format_double(r.ar);
  out += ',';
  out += format_double(r.ar_se);
  out += ',';
  out += format_double(r.log_z);
  out += ',';
  out += format_double(r.log_z_beta);
  out += ',';
  out += format_double(r.tvd);
  out += ',';
  out += format_double(r.tvd_se);
  out += ',';
  out += format_double(r.tvd_bound);
  out += ',';
  out += format_double(r.kl);
  out += ',';
  out += format_double(r.kl_se);
  out += ',';
  if (r.kl_to_base) out += format_double(*r.kl_to_base);
  out += ',';
  out += std::to_string(r.n_draws);
  out += ',';
  out += std::to_string(r.seed);
  return out;
}

inline std::string to_csv(const std::vector<DiagnosticsRow>& rows) {
  std::string out = sweep_csv_header();
  out += '\n';
  for (const auto& r : rows) {
    out += to_csv_line(r);
    out += '\n';
  }
  return out;
}

inline std::vector<DiagnosticsRow> parse_sweep_csv(std::string_view text) {
  std::vector<DiagnosticsRow> rows;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != sweep_csv_header()) throw std::invalid_argument("unexpected CSV header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 14) throw std::invalid_argument("bad CSV row field count");
    DiagnosticsRow r;
    r.beta = parse_double(f[0]);
    r.replicate = parse_u64(f[1]);
    r.ar = parse_double(f[2]);
    r.ar_se = parse_double(f[3]);
    r.log_z = parse_double(f[4]);
    r.log_z_beta = parse_double(f[5]);
    r.tvd = parse_double(f[6]);
    r.tvd_se = parse_double(f[7]);
    r.tvd_bound = parse_double(f[8]);
    r.kl = parse_double(f[9]);
    r.kl_se = parse_double(f[10]);
    if (!f[11].empty()) r.kl_to_base = parse_double(f[11]);
    r.n_draws = parse_u64(f[12]);
    r.seed = parse_u64(f[13]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string to_json(const std::vector<DiagnosticsRow>& rows) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += "  {";
    out += "\"beta\":" + format_double(r.beta);
    out += ",\"replicate\":" + std::to_string(r.replicate);
    out += ",\"ar\":" + format_double(r.ar);
    out += ",\"ar_se\":" + format_double(r.ar_se);
    out += ",\"log_z\":" + format_double(r.log_z);
    out += ",\"log_z_beta\":" + format_double(r.log_z_beta);
    out += ",\"tvd\":" + format_double(r.tvd);
    out += ",\"tvd_se\":" + format_double(r.tvd_se);
    out += ",\"tvd_bound\":" + format_double(r.tvd_bound);
    out += ",\"kl\":" + format_double(r.kl);
    out += ",\"kl_se\":" + format_double(r.kl_se);
    out += ",\"kl_to_base\":";
    out += r.kl_to_base ? format_double(*r.kl_to_base) : "null";
    out += ",\"n_draws\":" + std::to_string(r.n_draws);
    out += ",\"seed\":" + std::to_string(r.seed);
    out += '}';
    if (i + 1 < rows.size()) out += ',';
    out += '\n';
  }
  out += "]\n";
  return out;
}

// ---------------------------------------------------------------------------
// Summary and comparison tables
// ---------------------------------------------------------------------------

inline const char* summary_csv_header() {
  return "beta,ar_mean,ar_sd,tvd_mean,tvd_sd,tvd_bound_mean,tvd_bound_sd,kl_mean,kl_sd,"
         "log_z_mean,log_z_sd";
}

inline std::string to_csv(const std::vector<SweepSummaryRow>& rows) {
  std::string out = summary_csv_header();
  out += '\n';
  for (const auto& s : rows) {
    out += format_double(s.beta);
    out += ',' + format_double(s.ar_mean) + ',' + format_double(s.ar_sd);
    out += ',' + format_double(s.tvd_mean) + ',' + format_double(s.tvd_sd);
    out += ',' + format_double(s.tvd_bound_mean) + ',' + format_double(s.tvd_bound_sd);
    out += ',' + format_double(s.kl_mean) + ',' + format_double(s.kl_sd);
    out += ',' + format_double(s.log_z_mean) + ',' + format_double(s.log_z_sd);
    out += '\n';
  }
  return out;
}

/// Comparison table mirroring the thinned-chain protocol: divergences exist
/// for QRS rows only; chain rows carry the literal marker `unk`.
inline std::string comparison_csv(const std::vector<ComparisonRow>& rows,
                                  const std::vector<std::string>& moment_names) {
  std::string out = "method,ar_proxy";
  for (const auto& name : moment_names) out += ",moment_" + name;
  out += ",pct_unique,lag1_autocorr,tvd,kl\n";
  for (const auto& r : rows) {
    out += r.method;
    out += ',' + format_double(r.ar_proxy);
    for (const auto& name : moment_names) {
      double v = 0.0;
      for (const auto& [n, m] : r.moments)
        if (n == name) v = m;
      out += ',' + format_double(v);
    }
    out += ',' + format_double(r.pct_unique);
    out += ',' + format_double(r.lag1_autocorr);
    out += ',';
    out += r.tvd ? format_double(*r.tvd) : "unk";
    out += ',';
    out += r.kl ? format_double(*r.kl) : "unk";
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static SVG line plots (display-only convenience, never a test target)
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> xy;
};

/// Minimal log-log polyline plot. Nonpositive values cannot be placed on a
/// log axis and are clamped to the decade below the smallest positive value.
inline std::string svg_line_plot(const std::string& title, const std::string& x_label,
                                 const std::string& y_label,
                                 const std::vector<PlotSeries>& series) {
  const int w = 640, h = 440, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.xy) {
      if (x > 0) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
      if (y > 0) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  if (xmin > xmax) { xmin = 1e-6; xmax = 1.0; }
  if (ymin > ymax) { ymin = 1e-6; ymax = 1.0; }
  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax * 1.0001);
  const double ly0 = std::log10(ymin), ly1 = std::log10(ymax * 1.0001);
  auto px = [&](double x) {
    const double l = std::log10(std::max(x, xmin * 0.1));
    return ml + (l - lx0) / std::max(1e-12, lx1 - lx0) * (w - ml - mr);
  };
  auto py = [&](double y) {
    const double l = std::log10(std::max(y, ymin * 0.1));
    return h - mb - (l - ly0) / std::max(1e-12, ly1 - ly0) * (h - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  for (int d = static_cast<int>(std::ceil(lx0)); d <= static_cast<int>(std::floor(lx1)); ++d) {
    const double x = px(std::pow(10.0, d));
    out << "<line x1='" << x << "' y1='" << h - mb << "' x2='" << x << "' y2='" << h - mb + 5
        << "' stroke='black'/>\n";
    out << "<text x='" << x << "' y='" << h - mb + 18 << "' text-anchor='middle' font-size='11'>1e"
        << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(ly0)); d <= static_cast<int>(std::floor(ly1)); ++d) {
    const double y = py(std::pow(10.0, d));
    out << "<line x1='" << ml - 5 << "' y1='" << y << "' x2='" << ml << "' y2='" << y
        << "' stroke='black'/>\n";
    out << "<text x='" << ml - 8 << "' y='" << y + 4 << "' text-anchor='end' font-size='11'>1e"
        << d << "</text>\n";
  }
  out << "<text x='" << w / 2 << "' y='" << h - 12 << "' text-anchor='middle' font-size='13'>"
      << x_label << "</text>\n";
  out << "<text x='16' y='" << h / 2 << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << h / 2 << ")'>" << y_label << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    out << "<polyline fill='none' stroke='" << colors[si % 4] << "' stroke-width='1.5' points='";
    for (auto [x, y] : series[si].xy) out << px(x) << ',' << py(y) << ' ';
    out << "'/>\n";
    out << "<text x='" << w - mr - 6 << "' y='" << mt + 16 * (si + 1)
        << "' text-anchor='end' font-size='12' fill='" << colors[si % 4] << "'>"
        << series[si].name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace qrs::io
