#pragma once

#include "lingrad/trainer.hpp"
#include "lingrad/verify.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lingrad {

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// history.csv: epoch,minibatch,psi,epsilon,objective (epsilon empty when not measured).
void write_history_csv(std::ostream& out, const TrainRecord& record);
// epochs.csv: epoch,test_metric
void write_epochs_csv(std::ostream& out, const TrainRecord& record);
// check_name,residual,tolerance,pass
void write_verify_csv(std::ostream& out, const std::vector<CheckResult>& checks);

// Inverse of the writers above; throws FormatError on a bad header or row.
std::vector<MinibatchRecord> read_history_csv(std::istream& in);
std::vector<EpochRecord> read_epochs_csv(std::istream& in);

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Static SVG line chart. With log_y, non-positive values are dropped.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_y = false);

// Writes objective.svg, stepsize.svg and epsilon.svg (when measured) into `dir`.
std::vector<std::string> export_plots(const std::string& dir,
                                      const std::vector<MinibatchRecord>& history,
                                      const std::vector<EpochRecord>& epochs);

}  // namespace lingrad
