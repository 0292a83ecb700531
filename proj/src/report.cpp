#include "lingrad/report.hpp"

#include "lingrad/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace lingrad {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number \"" + s + "\"");
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad integer \"" + s + "\"");
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void expect_header(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != header)
    throw FormatError("expected CSV header \"" + header + "\"");
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

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

void write_history_csv(std::ostream& out, const TrainRecord& record) {
  out << "epoch,minibatch,psi,epsilon,objective\n";
  for (const auto& m : record.minibatches) {
    out << m.epoch << ',' << m.minibatch << ',' << format_double(m.psi) << ','
        << (m.epsilon ? format_double(*m.epsilon) : std::string()) << ','
        << format_double(m.objective) << '\n';
  }
}

void write_epochs_csv(std::ostream& out, const TrainRecord& record) {
  out << "epoch,test_metric\n";
  for (const auto& e : record.epochs) out << e.epoch << ',' << format_double(e.test_metric) << '\n';
}

void write_verify_csv(std::ostream& out, const std::vector<CheckResult>& checks) {
  out << "check_name,residual,tolerance,pass\n";
  for (const auto& c : checks)
    out << c.name << ',' << format_double(c.residual) << ',' << format_double(c.tolerance) << ','
        << (c.pass ? "true" : "false") << '\n';
}

std::vector<MinibatchRecord> read_history_csv(std::istream& in) {
  expect_header(in, "epoch,minibatch,psi,epsilon,objective");
  std::vector<MinibatchRecord> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5) throw FormatError("history.csv: expected 5 fields in \"" + line + "\"");
    MinibatchRecord r;
    r.epoch = parse_size(f[0]);
    r.minibatch = parse_size(f[1]);
    r.psi = parse_double(f[2]);
    if (!f[3].empty()) r.epsilon = parse_double(f[3]);
    r.objective = parse_double(f[4]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<EpochRecord> read_epochs_csv(std::istream& in) {
  expect_header(in, "epoch,test_metric");
  std::vector<EpochRecord> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 2) throw FormatError("epochs.csv: expected 2 fields in \"" + line + "\"");
    rows.push_back(EpochRecord{parse_size(f[0]), parse_double(f[1])});
  }
  return rows;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_y) {
  constexpr double kW = 720, kH = 440, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto ty = [log_y](double y) { return log_y ? std::log10(y) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, ty(y)), y1 = std::max(y1, ty(y));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    const double gx = kLeft + pw * k / 4.0, gy = kTop + ph * (1 - k / 4.0);
    svg << "<text x=\"" << gx << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
        << format_double(std::round(fx * 1000) / 1000) << "</text>\n";
    const double label = log_y ? std::pow(10.0, fy) : fy;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", label);
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << buf
        << "</text>\n"
        << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << gy << "\" y2=\"" << gy
        << "\" stroke=\"#ddd\"/>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n"
      << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(y_label) << (log_y ? " (log)" : "") << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = kPalette[s % kPalette.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : series[s].points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0)) continue;
      svg << px(x) << ',' << py(y) << ' ';
    }
    svg << "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kLeft + pw + 10 << "\" x2=\"" << kLeft + pw + 30 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kLeft + pw + 36 << "\" y=\"" << ly + 4 << "\">"
        << escape_xml(series[s].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> export_plots(const std::string& dir,
                                      const std::vector<MinibatchRecord>& history,
                                      const std::vector<EpochRecord>& epochs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = (fs::path(dir) / name).string();
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << body;
    written.push_back(path);
  };

  // Position of each minibatch on a fractional-epoch axis.
  std::map<std::size_t, std::size_t> per_epoch;
  for (const auto& m : history) per_epoch[m.epoch] = std::max(per_epoch[m.epoch], m.minibatch + 1);
  auto at = [&](const MinibatchRecord& m) {
    return static_cast<double>(m.epoch - 1) +
           static_cast<double>(m.minibatch) / static_cast<double>(per_epoch[m.epoch]);
  };

  Series objective{"minibatch objective", {}}, test{"test metric", {}};
  Series psi{"stepsize psi", {}}, eps{"epsilon", {}};
  for (const auto& m : history) {
    objective.points.emplace_back(at(m), m.objective);
    psi.points.emplace_back(at(m), m.psi);
    if (m.epsilon) eps.points.emplace_back(at(m), *m.epsilon);
  }
  for (const auto& e : epochs) test.points.emplace_back(static_cast<double>(e.epoch), e.test_metric);

  write("objective.svg", svg_line_chart("Objective", "epoch", "value", {objective, test}, true));
  write("stepsize.svg", svg_line_chart("Stepsize", "epoch", "psi", {psi}, true));
  if (!eps.points.empty())
    write("epsilon.svg", svg_line_chart("Nonlinear measurement", "epoch", "epsilon", {eps}));
  return written;
}

}  // namespace lingrad
