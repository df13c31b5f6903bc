#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "sim.hpp"
#include "synth.hpp"
#include "tabular.hpp"

namespace banditlab {

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Splits one CSV line, honouring double-quoted fields.
inline std::vector<std::string> split_quoted_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

inline double parse_csv_number(const std::string& s, std::size_t line) {
  const auto v = parse_double(s);
  require(v.has_value(), ErrorCode::NonNumeric, "line " + std::to_string(line) + ": '" + s + "' is not a number");
  return *v;
}

}  // namespace detail

inline void write_curves_csv(std::ostream& os, const ExperimentResult& result, const std::string& run_id) {
  os << "run_id,policy,config_hash,seed,round,reward,rolling_mean,cum_regret\n";
  for (const auto& p : result.policies)
    for (const auto& c : p.curves)
      for (std::size_t t = 0; t < c.rounds(); ++t)
        os << detail::csv_field(run_id) << ',' << detail::csv_field(c.policy) << ',' << c.config_hash << ','
           << c.seed << ',' << t + 1 << ',' << detail::format_double(c.reward[t]) << ','
           << detail::format_double(c.rolling_mean[t]) << ',' << detail::format_double(c.cum_regret[t]) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<PolicyAggregate>& policies) {
  os << "policy,round,mean,std\n";
  for (const auto& p : policies)
    for (std::size_t t = 0; t < p.mean.size(); ++t)
      os << detail::csv_field(p.policy) << ',' << t + 1 << ',' << detail::format_double(p.mean[t]) << ','
         << detail::format_double(p.std[t]) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const ExperimentResult& result) {
  write_aggregate_csv(os, result.policies);
}

/// Final-window summary, one row per policy.
inline void write_summary_csv(std::ostream& os, const ExperimentResult& result) {
  os << "policy,config_hash,seeds,rounds,final_window,final_mean_reward,final_std_reward,mean_final_regret\n";
  for (const auto& p : result.policies)
    os << detail::csv_field(p.policy) << ',' << p.config_hash << ',' << result.seeds.size() << ',' << result.rounds
       << ',' << result.final_window << ',' << detail::format_double(p.final_mean_reward) << ','
       << detail::format_double(p.final_std_reward) << ',' << detail::format_double(p.mean_final_regret) << '\n';
}

inline void write_tune_csv(std::ostream& os, const TuneReport& report) {
  os << "rank,config_index,config_hash,label,final_mean_reward,final_std_reward,mean_final_regret\n";
  for (std::size_t r = 0; r < report.ranking.size(); ++r) {
    const auto& e = report.entries[report.ranking[r]];
    os << r + 1 << ',' << e.index << ',' << e.result.config_hash << ',' << detail::csv_field(e.point.label()) << ','
       << detail::format_double(e.result.final_mean_reward) << ',' << detail::format_double(e.result.final_std_reward) << ','
       << detail::format_double(e.result.mean_final_regret) << '\n';
  }
}

inline void write_roc_csv(std::ostream& os, const std::vector<RocPoint>& points) {
  os << "fpr,tpr\n";
  for (const auto& p : points) os << detail::format_double(p.fpr) << ',' << detail::format_double(p.tpr) << '\n';
}

/// One mean curve with its spread, as stored in an aggregate CSV.
struct Series {
  std::string name;
  std::vector<double> mean;
  std::vector<double> std;
};

/// Reads "policy,round,mean,std"; series keep first-appearance order.
inline std::vector<Series> read_aggregate_csv(std::istream& is, const std::string& source = "aggregate") {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::EmptyFile, source + " is empty");
  const auto header = detail::split_quoted_line(line);
  require(header == std::vector<std::string>{"policy", "round", "mean", "std"}, ErrorCode::InvalidSchema,
          source + ": expected header policy,round,mean,std");
  std::vector<Series> out;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_quoted_line(line);
    require(f.size() == 4, ErrorCode::InvalidSchema, source + " line " + std::to_string(n) + ": expected 4 fields");
    auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.name == f[0]; });
    if (it == out.end()) it = out.insert(out.end(), Series{f[0], {}, {}});
    const auto round = static_cast<std::size_t>(detail::parse_csv_number(f[1], n));
    require(round == it->mean.size() + 1, ErrorCode::InvalidSchema,
            source + " line " + std::to_string(n) + ": rounds must be consecutive from 1");
    it->mean.push_back(detail::parse_csv_number(f[2], n));
    it->std.push_back(detail::parse_csv_number(f[3], n));
  }
  require(!out.empty(), ErrorCode::EmptyFile, source + " has no rows");
  return out;
}

inline std::vector<RocPoint> read_roc_csv(std::istream& is, const std::string& source = "roc") {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::EmptyFile, source + " is empty");
  require(detail::split_quoted_line(line) == std::vector<std::string>{"fpr", "tpr"}, ErrorCode::InvalidSchema,
          source + ": expected header fpr,tpr");
  std::vector<RocPoint> out;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_quoted_line(line);
    require(f.size() == 2, ErrorCode::InvalidSchema, source + " line " + std::to_string(n) + ": expected 2 fields");
    out.push_back(RocPoint{detail::parse_csv_number(f[0], n), detail::parse_csv_number(f[1], n)});
  }
  require(out.size() >= 2, ErrorCode::EmptyFile, source + " needs at least two points");
  return out;
}

inline double trapezoid_auc(const std::vector<RocPoint>& points) {
  double auc = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    auc += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return auc;
}

inline std::vector<Series> to_series(const std::vector<PolicyAggregate>& policies) {
  std::vector<Series> out;
  for (const auto& p : policies) out.push_back(Series{p.policy, p.mean, p.std});
  return out;
}

// ---------------------------------------------------------------------------
// SVG

inline constexpr double kSvgWidth = 960.0;
inline constexpr double kSvgHeight = 540.0;

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return p;
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
  return s;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Round tick step covering [lo, hi] with about `target` ticks.
inline double tick_step(double lo, double hi, int target) {
  const double raw = (hi - lo) / target;
  if (!(raw > 0.0)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

struct Frame {
  double left = 80.0, right = 200.0, top = 50.0, bottom = 60.0;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (kSvgWidth - left - right); }
  double py(double y) const { return kSvgHeight - bottom - (y - y0) / (y1 - y0) * (kSvgHeight - top - bottom); }
};

inline void svg_open(std::ostream& os, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"960\" height=\"540\" "
        "viewBox=\"0 0 960 540\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"960\" height=\"540\" fill=\"#ffffff\"/>\n"
     << "<text x=\"480\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title) << "</text>\n";
}

inline void svg_axes(std::ostream& os, const Frame& f, const std::string& x_label, const std::string& y_label,
                     int x_digits, int y_digits) {
  const double xs = tick_step(f.x0, f.x1, 8), ys = tick_step(f.y0, f.y1, 6);
  os << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (double y = std::ceil(f.y0 / ys - 1e-9) * ys; y <= f.y1 + 1e-9 * ys; y += ys)
    os << "<line x1=\"" << fixed(f.px(f.x0)) << "\" y1=\"" << fixed(f.py(y)) << "\" x2=\"" << fixed(f.px(f.x1))
       << "\" y2=\"" << fixed(f.py(y)) << "\"/>\n";
  os << "</g>\n<g fill=\"#333333\">\n";
  for (double x = std::ceil(f.x0 / xs - 1e-9) * xs; x <= f.x1 + 1e-9 * xs; x += xs)
    os << "<text x=\"" << fixed(f.px(x)) << "\" y=\"" << fixed(kSvgHeight - f.bottom + 18)
       << "\" text-anchor=\"middle\">" << fixed(x, x_digits) << "</text>\n";
  for (double y = std::ceil(f.y0 / ys - 1e-9) * ys; y <= f.y1 + 1e-9 * ys; y += ys)
    os << "<text x=\"" << fixed(f.left - 8) << "\" y=\"" << fixed(f.py(y) + 4) << "\" text-anchor=\"end\">"
       << fixed(y, y_digits) << "</text>\n";
  os << "<text x=\"" << fixed((f.left + kSvgWidth - f.right) / 2) << "\" y=\"" << fixed(kSvgHeight - 18)
     << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n"
     << "<text x=\"20\" y=\"" << fixed((f.top + kSvgHeight - f.bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
     << fixed((f.top + kSvgHeight - f.bottom) / 2) << ")\">" << xml_escape(y_label) << "</text>\n</g>\n";
  os << "<rect x=\"" << fixed(f.left) << "\" y=\"" << fixed(f.top) << "\" width=\""
     << fixed(kSvgWidth - f.left - f.right) << "\" height=\"" << fixed(kSvgHeight - f.top - f.bottom)
     << "\" fill=\"none\" stroke=\"#333333\"/>\n";
}

inline void svg_legend(std::ostream& os, const Frame& f, const std::vector<std::string>& names) {
  const double x = kSvgWidth - f.right + 14;
  const double step = std::min(18.0, (kSvgHeight - f.top - f.bottom) / std::max<double>(1.0, names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 10 + step * static_cast<double>(i);
    const auto& color = palette()[i % palette().size()];
    os << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(x + 18) << "\" y2=\"" << fixed(y)
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << fixed(x + 24) << "\" y=\"" << fixed(y + 4) << "\" font-size=\"" << (step < 14 ? 9 : 11)
       << "\">" << xml_escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

/// Learning curves: mean line per series with a translucent +-1 std ribbon.
inline std::string render_learning_curves(const std::vector<Series>& series, const std::string& title,
                                          const std::string& y_label = "rolling mean reward") {
  require(!series.empty(), ErrorCode::InvalidArgument, "nothing to plot");
  std::size_t rounds = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    require(s.mean.size() == s.std.size() && !s.mean.empty(), ErrorCode::DimensionMismatch,
            "series '" + s.name + "' mean/std lengths");
    rounds = std::max(rounds, s.mean.size());
    for (std::size_t t = 0; t < s.mean.size(); ++t) {
      require(std::isfinite(s.mean[t]) && std::isfinite(s.std[t]), ErrorCode::NonFinite, "series '" + s.name + "'");
      lo = std::min(lo, s.mean[t] - s.std[t]);
      hi = std::max(hi, s.mean[t] + s.std[t]);
    }
  }
  detail::Frame f;
  f.x0 = 1.0;
  f.x1 = std::max<double>(2.0, static_cast<double>(rounds));
  const double pad = std::max(1e-3, 0.05 * (hi - lo));
  f.y0 = std::floor((lo - pad) * 20.0) / 20.0;
  f.y1 = std::ceil((hi + pad) * 20.0) / 20.0;

  std::ostringstream os;
  detail::svg_open(os, title);
  detail::svg_axes(os, f, "round", y_label, 0, 2);
  // at most ~480 vertices per path keeps files small and output deterministic
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const auto& color = palette()[i % palette().size()];
    const std::size_t n = s.mean.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 480);
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < n; t += stride) idx.push_back(t);
    if (idx.back() != n - 1) idx.push_back(n - 1);
    os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (auto t : idx)
      os << detail::fixed(f.px(static_cast<double>(t + 1))) << ',' << detail::fixed(f.py(s.mean[t] + s.std[t])) << ' ';
    for (auto it = idx.rbegin(); it != idx.rend(); ++it)
      os << detail::fixed(f.px(static_cast<double>(*it + 1))) << ','
         << detail::fixed(f.py(s.mean[*it] - s.std[*it])) << ' ';
    os << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto t : idx)
      os << detail::fixed(f.px(static_cast<double>(t + 1))) << ',' << detail::fixed(f.py(s.mean[t])) << ' ';
    os << "\"/>\n";
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  detail::svg_legend(os, f, names);
  os << "</svg>\n";
  return os.str();
}

/// ROC curve on the unit square with the dashed chance diagonal.
inline std::string render_roc(const std::vector<RocPoint>& points, double auc, const std::string& title) {
  require(points.size() >= 2, ErrorCode::InvalidArgument, "roc needs at least two points");
  detail::Frame f;
  f.left = 240.0;
  f.right = 260.0;
  std::ostringstream os;
  detail::svg_open(os, title);
  detail::svg_axes(os, f, "false positive rate", "true positive rate", 1, 1);
  os << "<line x1=\"" << detail::fixed(f.px(0)) << "\" y1=\"" << detail::fixed(f.py(0)) << "\" x2=\""
     << detail::fixed(f.px(1)) << "\" y2=\"" << detail::fixed(f.py(1))
     << "\" stroke=\"#7f7f7f\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"" << palette()[0] << "\" stroke-width=\"2\" points=\"";
  for (const auto& p : points) os << detail::fixed(f.px(p.fpr)) << ',' << detail::fixed(f.py(p.tpr)) << ' ';
  os << "\"/>\n";
  detail::svg_legend(os, f, {"AUC = " + detail::fixed(auc, 3)});
  os << "</svg>\n";
  return os.str();
}

}  // namespace banditlab
