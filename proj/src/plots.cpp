#include "dsfpo/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dsfpo/errors.hpp"
#include "dsfpo/world.hpp"

namespace dsfpo {

namespace {

constexpr double kW = 820, kH = 500;
constexpr double kLeft = 70, kRight = 20, kTop = 30, kBottom = 55;
const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};

struct Series {
  std::string label;
  std::vector<double> mean, std;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_curve_svg(const std::string& path, const std::string& title,
                     const std::vector<Series>& series) {
  double lo = 1e300, hi = -1e300;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.mean.size());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      lo = std::min(lo, s.mean[i] - s.std[i]);
      hi = std::max(hi, s.mean[i] + s.std[i]);
    }
  }
  if (n == 0) {
    lo = 0;
    hi = 1;
    n = 1;
  }
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto px = [&](double i) {
    return kLeft + (kW - kLeft - kRight) * (n > 1 ? i / double(n - 1) : 0.5);
  };
  const auto py = [&](double v) { return kH - kBottom - (kH - kTop - kBottom) * (v - lo) / (hi - lo); };

  std::ofstream out(path, std::ios::trunc);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kW << " " << kH
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  // axes
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight
      << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kH - kBottom << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double v = lo + (hi - lo) * tick / 5.0;
    const double y = py(v);
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
        << "\" stroke=\"black\"/><text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    const double it = double(n - 1) * tick / 5.0;
    const double x = px(it);
    out << "<line x1=\"" << x << "\" y1=\"" << kH - kBottom << "\" x2=\"" << x << "\" y2=\""
        << kH - kBottom + 4 << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\""
        << kH - kBottom + 20 << "\" text-anchor=\"middle\">" << int(it) << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\">iteration</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& sr = series[s];
    const char* color = kColors[s % 4];
    // std band
    std::string band = "<polygon fill=\"" + std::string(color) + "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < sr.mean.size(); ++i)
      band += num(px(double(i))) + "," + num(py(sr.mean[i] + sr.std[i])) + " ";
    for (std::size_t i = sr.mean.size(); i-- > 0;)
      band += num(px(double(i))) + "," + num(py(sr.mean[i] - sr.std[i])) + " ";
    out << band << "\"/>\n";
    std::string line = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < sr.mean.size(); ++i)
      line += num(px(double(i))) + "," + num(py(sr.mean[i])) + " ";
    out << line << "\"/>\n";
    out << "<rect x=\"" << kLeft + 12 << "\" y=\"" << kTop + 8 + 20 * double(s)
        << "\" width=\"14\" height=\"14\" fill=\"" << color << "\"/><text x=\"" << kLeft + 32
        << "\" y=\"" << kTop + 20 + 20 * double(s) << "\">" << sr.label << "</text>\n";
  }
  out << "</svg>\n";
}

void write_heatmap_svg(const std::string& path,
                       const std::map<std::string, std::vector<double>>& rows) {
  const double cell_w = 120, cell_h = 50, left = 150, top = 60;
  const double width = left + 4 * cell_w + 20, height = top + double(rows.size()) * cell_h + 20;
  std::ofstream out(path, std::ios::trunc);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">"
      << "skill usage by terrain</text>\n";
  for (int k = 0; k < 4; ++k)
    out << "<text x=\"" << left + cell_w * (k + 0.5) << "\" y=\"" << top - 8
        << "\" text-anchor=\"middle\">skill " << k + 1 << "</text>\n";
  int r = 0;
  for (const auto& [zone, freq] : rows) {
    out << "<text x=\"" << left - 10 << "\" y=\"" << top + cell_h * (r + 0.6)
        << "\" text-anchor=\"end\">" << zone << "</text>\n";
    for (int k = 0; k < 4; ++k) {
      const double f = freq.empty() ? 0.0 : freq[std::size_t(k)];
      const int blue = int(255 - 175 * f);
      const int red = int(255 - 225 * f);
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02xff", red, blue);
      out << "<rect x=\"" << left + cell_w * k << "\" y=\"" << top + cell_h * r << "\" width=\""
          << cell_w - 2 << "\" height=\"" << cell_h - 2 << "\" fill=\"" << (freq.empty() ? "#eeeeee" : color)
          << "\"/>\n";
      char label[32];
      if (freq.empty())
        std::snprintf(label, sizeof label, "n/a");
      else
        std::snprintf(label, sizeof label, "%.2f", f);
      out << "<text x=\"" << left + cell_w * (k + 0.5) << "\" y=\"" << top + cell_h * (r + 0.6)
          << "\" text-anchor=\"middle\">" << label << "</text>\n";
    }
    ++r;
  }
  out << "</svg>\n";
}

}  // namespace

PlotReport emit_plots(const std::vector<std::string>& log_paths, const std::string& out_dir,
                      const std::string& usage_json_path) {
  if (log_paths.empty() && usage_json_path.empty())
    throw ConfigError("plot: no metrics logs given");
  std::filesystem::create_directories(out_dir);
  PlotReport report;

  std::vector<MetricsLog> logs;
  for (const auto& p : log_paths) {
    logs.push_back(read_metrics_log(p));
    report.skipped_lines += logs.back().skipped_lines;
    if (logs.back().skipped_lines > 0)
      report.warnings.push_back(p + ": skipped " + std::to_string(logs.back().skipped_lines) +
                                " malformed lines");
  }
  report.logs = int(logs.size());

  if (!logs.empty()) {
    std::size_t n = logs[0].records.size();
    for (const auto& l : logs) n = std::min(n, l.records.size());
    for (const auto& l : logs)
      if (l.records.size() != n) report.truncated = true;
    if (report.truncated)
      report.warnings.push_back("logs have unequal lengths; truncated to " + std::to_string(n) +
                                " iterations");
    report.truncated_to = int(n);

    // Group by algorithm, preserving first-seen order.
    std::vector<std::string> algos;
    for (const auto& l : logs)
      if (std::find(algos.begin(), algos.end(), l.algo) == algos.end()) algos.push_back(l.algo);

    const auto build = [&](auto&& pick) {
      std::vector<Series> out;
      for (const auto& algo : algos) {
        Series s;
        s.label = algo;
        for (std::size_t i = 0; i < n; ++i) {
          double sum = 0, count = 0;
          for (const auto& l : logs)
            if (l.algo == algo) {
              sum += pick(l.records[i]);
              count += 1;
            }
          const double mean = sum / count;
          double var = 0;
          for (const auto& l : logs)
            if (l.algo == algo) var += (pick(l.records[i]) - mean) * (pick(l.records[i]) - mean);
          s.mean.push_back(mean);
          s.std.push_back(std::sqrt(var / count));
        }
        out.push_back(std::move(s));
      }
      return out;
    };

    const auto reward = build([](const MetricsRecord& r) { return r.mean_reward; });
    const auto eplen = build([](const MetricsRecord& r) { return r.mean_episode_length; });

    const auto write_csv = [&](const std::string& path, const std::vector<Series>& series) {
      std::ofstream csv(path, std::ios::trunc);
      csv << "iteration";
      for (const auto& s : series) csv << "," << s.label << "_mean," << s.label << "_std";
      csv << "\n";
      for (std::size_t i = 0; i < n; ++i) {
        csv << i;
        for (const auto& s : series) {
          char buf[64];
          std::snprintf(buf, sizeof buf, ",%.17g,%.17g", s.mean[i], s.std[i]);
          csv << buf;
        }
        csv << "\n";
      }
    };

    write_curve_svg(out_dir + "/reward_vs_iteration.svg", "mean episode reward", reward);
    write_csv(out_dir + "/reward_vs_iteration.csv", reward);
    write_curve_svg(out_dir + "/episode_length_vs_iteration.svg", "mean episode length", eplen);
    write_csv(out_dir + "/episode_length_vs_iteration.csv", eplen);
    report.files = {out_dir + "/reward_vs_iteration.svg", out_dir + "/reward_vs_iteration.csv",
                    out_dir + "/episode_length_vs_iteration.svg",
                    out_dir + "/episode_length_vs_iteration.csv"};
  }

  if (!usage_json_path.empty()) {
    std::ifstream in(usage_json_path);
    if (!in) throw ConfigError("plot: cannot open usage summary '" + usage_json_path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("plot: bad usage summary: " + std::string(e.what()));
    }
    std::map<std::string, std::vector<double>> rows;
    for (int z = 0; z < kNumZoneKinds; ++z) {
      const auto name = to_string(ZoneKind(z));
      std::vector<double> freq;
      if (j.contains("skill_usage") && j["skill_usage"].contains(name) &&
          !j["skill_usage"][name].is_null())
        freq = j["skill_usage"][name].get<std::vector<double>>();
      rows[name] = std::move(freq);
    }
    write_heatmap_svg(out_dir + "/skill_usage.svg", rows);
    std::ofstream csv(out_dir + "/skill_usage.csv", std::ios::trunc);
    csv << "terrain,skill_1,skill_2,skill_3,skill_4\n";
    for (const auto& [zone, freq] : rows) {
      csv << zone;
      if (freq.empty()) {
        csv << ",,,,\n";
      } else {
        for (double f : freq) {
          char buf[32];
          std::snprintf(buf, sizeof buf, ",%.17g", f);
          csv << buf;
        }
        csv << "\n";
      }
    }
    report.files.push_back(out_dir + "/skill_usage.svg");
    report.files.push_back(out_dir + "/skill_usage.csv");
  }
  return report;
}

}  // namespace dsfpo
