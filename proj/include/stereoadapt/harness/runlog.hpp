#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stereoadapt::harness {

/// CSV columns, in order.
inline constexpr const char* kRunLogHeader = "frame,d1_all,epe,photo_err,loss,phi,ms";

/// One CSV row; absent values are written as empty fields.
struct RunLogRow {
  std::string frame;
  std::optional<double> d1_all;
  std::optional<double> epe;
  std::optional<double> photo_err;
  std::optional<double> loss;
  int phi = 0;  // 0 = no module update
  std::optional<double> ms;
};

/// `settings` become leading `# key = value` comment lines.
struct RunLog {
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<RunLogRow> rows;
};

std::string format_run_log(const RunLog& log);
void write_run_log(const std::string& path, const RunLog& log);
RunLog parse_run_log(const std::string& text, const std::string& origin = "<string>");
RunLog read_run_log(const std::string& path);

/// Mean of a column over rows where it is present; nullopt if none are.
std::optional<double> column_mean(const RunLog& log, const std::string& column, std::size_t first_row = 0,
                                  std::size_t end_row = static_cast<std::size_t>(-1));

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (frame index, value)
};

/// Per-frame curves of `column` (d1_all, epe, photo_err or loss), one
/// polyline per log, smoothed with a trailing moving average of `window`.
std::vector<PlotSeries> series_from_logs(const std::vector<std::pair<std::string, RunLog>>& logs,
                                         const std::string& column, int window);

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label);
void write_svg(const std::string& path, const std::string& svg);

}  // namespace stereoadapt::harness
