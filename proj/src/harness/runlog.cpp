#include "stereoadapt/harness/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "stereoadapt/error.hpp"

namespace stereoadapt::harness {
namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> parse_field(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedFile, where + ": bad number '" + s + "'");
  }
}

std::optional<double> column_value(const RunLogRow& r, const std::string& column) {
  if (column == "d1_all") return r.d1_all;
  if (column == "epe") return r.epe;
  if (column == "photo_err") return r.photo_err;
  if (column == "loss") return r.loss;
  if (column == "ms") return r.ms;
  throw Error(ErrorCode::kInvalidArgument, "unknown run-log column '" + column + "'");
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string format_run_log(const RunLog& log) {
  std::ostringstream out;
  for (const auto& [k, v] : log.settings) out << "# " << k << " = " << v << '\n';
  out << kRunLogHeader << '\n';
  for (const auto& r : log.rows) {
    out << r.frame << ',' << fmt(r.d1_all) << ',' << fmt(r.epe) << ',' << fmt(r.photo_err) << ',' << fmt(r.loss)
        << ',' << (r.phi > 0 ? std::to_string(r.phi) : "") << ',' << fmt(r.ms) << '\n';
  }
  return out.str();
}

void write_run_log(const std::string& path, const RunLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  out << format_run_log(log);
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

RunLog parse_run_log(const std::string& text, const std::string& origin) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = origin + ":" + std::to_string(lineno);
    if (!header) {
      if (line.rfind("#", 0) == 0) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) log.settings.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
        continue;
      }
      if (line != kRunLogHeader) throw Error(ErrorCode::kMalformedFile, where + ": expected run-log header");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw Error(ErrorCode::kMalformedFile, where + ": expected 7 fields");
    RunLogRow r;
    r.frame = f[0];
    r.d1_all = parse_field(f[1], where);
    r.epe = parse_field(f[2], where);
    r.photo_err = parse_field(f[3], where);
    r.loss = parse_field(f[4], where);
    const auto phi = parse_field(f[5], where);
    r.phi = phi ? static_cast<int>(*phi) : 0;
    r.ms = parse_field(f[6], where);
    log.rows.push_back(std::move(r));
  }
  if (!header) throw Error(ErrorCode::kMalformedFile, origin + ": missing run-log header");
  return log;
}

RunLog read_run_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open run log " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_log(ss.str(), path);
}

std::optional<double> column_mean(const RunLog& log, const std::string& column, std::size_t first_row,
                                  std::size_t end_row) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = first_row; i < std::min(end_row, log.rows.size()); ++i) {
    if (auto v = column_value(log.rows[i], column)) {
      sum += *v;
      ++n;
    }
  }
  if (!n) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<PlotSeries> series_from_logs(const std::vector<std::pair<std::string, RunLog>>& logs,
                                         const std::string& column, int window) {
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "smoothing window must be >= 1");
  std::vector<PlotSeries> out;
  for (const auto& [label, log] : logs) {
    PlotSeries s{label, {}};
    std::vector<double> recent;
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      const auto v = column_value(log.rows[i], column);
      if (!v) continue;
      recent.push_back(*v);
      if (static_cast<int>(recent.size()) > window) recent.erase(recent.begin());
      double mean = 0.0;
      for (double r : recent) mean += r;
      s.points.emplace_back(static_cast<double>(i), mean / static_cast<double>(recent.size()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label) {
  const double W = 800, H = 450, ml = 70, mr = 160, mt = 40, mb = 50;
  double xmax = 1.0, ymax = 0.0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xmax = std::max(xmax, x);
      if (std::isfinite(y)) ymax = std::max(ymax, y);
    }
  }
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.05;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](double x) { return ml + pw * x / xmax; };
  auto py = [&](double y) { return mt + ph * (1.0 - y / ymax); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream svg;
  char buf[128];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape_xml(title) << "</text>\n";
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymax * i / 5.0, xv = xmax * i / 5.0;
    std::snprintf(buf, sizeof(buf), "%.3g", yv);
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml << "\" y2=\"" << py(yv)
        << "\" stroke=\"black\"/><text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.0f", xv);
    svg << "<line x1=\"" << px(xv) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << mt + ph + 5
        << "\" stroke=\"black\"/><text x=\"" << px(xv) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buf << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">frame</text>\n";
  svg << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" transform=\"rotate(-90 16 " << mt + ph / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(y_label)
      << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = colours[k % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[k].points) {
      if (!std::isfinite(y)) continue;
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
      svg << buf;
    }
    svg << "\"/>\n";
    const double ly = mt + 16.0 * static_cast<double>(k) + 8.0;
    svg << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/><text x=\"" << ml + pw + 35 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(series[k].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  out << svg;
}

}  // namespace stereoadapt::harness
