// lingrad: dataset generation, training, identity verification and plots.

#include "lingrad/data.hpp"
#include "lingrad/errors.hpp"
#include "lingrad/report.hpp"
#include "lingrad/trainer.hpp"
#include "lingrad/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lingrad;

namespace {

struct GenDataOptions {
  std::vector<std::size_t> widths{50, 50, 50, 50};
  std::size_t n_train = 50000;
  std::size_t n_test = 10000;
  std::uint64_t seed = 0;
  std::string out = "data";
};

struct TrainOptions {
  std::string dataset = "teacher";
  std::string data_dir;
  std::string mnist_dir;
  std::vector<std::size_t> teacher_widths{50, 50, 50, 50};
  std::vector<std::size_t> widths;
  std::size_t n_train = 50000;
  std::size_t n_test = 10000;
  std::string algorithm = "lingrad";
  std::string tangent = "auto";
  double fd_delta = 1e-6;
  std::string out = "run";
  bool svg = false;
  TrainerConfig config;
};

struct VerifyCliOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string out;
  bool inject_fault = false;
};

struct ExportOptions {
  std::string in = "run";
  std::string out;
};

// Config files are flat key=value lines; keys are long flag names. CLI11 only
// reads config files at the top level, so the subcommand applies them itself
// after parsing, to options the command line left unset.
void add_config(CLI::App* app, std::string& path) {
  app->add_option("--config", path, "Flat key=value file supplying any flag; flags on the command line win");
}

void apply_config(CLI::App* app, const std::string& path) {
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    const std::string key = item.fullname();
    CLI::Option* opt = item.parents.empty() ? app->get_option_no_throw("--" + item.name) : nullptr;
    if (opt == nullptr || key == "config") throw ConfigError("unknown key '" + key + "' in " + path);
    if (opt->count() > 0) continue;
    try {
      for (const auto& v : item.inputs) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("key '" + key + "' in " + path + ": " + e.what());
    }
  }
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << body;
}

int cmd_gen_data(const GenDataOptions& o) {
  fs::create_directories(o.out);
  const auto task = generate_teacher_dataset(o.widths, o.n_train, o.n_test, o.seed);
  const auto train_path = (fs::path(o.out) / "train.lrd").string();
  const auto test_path = (fs::path(o.out) / "test.lrd").string();
  const auto teacher_path = (fs::path(o.out) / "teacher.lrn").string();
  save_dataset(train_path, task.train);
  save_dataset(test_path, task.test);
  save_network(teacher_path, task.teacher);
  std::cout << "seed " << o.seed << " (" << Rng::kName << ")\n"
            << "train   " << train_path << " (" << task.train.size() << " samples)\n"
            << "test    " << test_path << " (" << task.test.size() << " samples)\n"
            << "teacher " << teacher_path << '\n';
  return 0;
}

std::pair<Dataset, Dataset> load_training_data(TrainOptions& o) {
  if (o.dataset == "mnist") {
    if (o.mnist_dir.empty()) throw ConfigError("--mnist-dir is required with --dataset mnist");
    const fs::path d(o.mnist_dir);
    return {load_mnist_idx((d / "train-images-idx3-ubyte").string(),
                           (d / "train-labels-idx1-ubyte").string()),
            load_mnist_idx((d / "t10k-images-idx3-ubyte").string(),
                           (d / "t10k-labels-idx1-ubyte").string())};
  }
  if (!o.data_dir.empty()) {
    const fs::path d(o.data_dir);
    return {load_dataset((d / "train.lrd").string()), load_dataset((d / "test.lrd").string())};
  }
  auto task = generate_teacher_dataset(o.teacher_widths, o.n_train, o.n_test, o.config.seed);
  return {std::move(task.train), std::move(task.test)};
}

int cmd_train(TrainOptions& o) {
  auto& cfg = o.config;
  cfg.algorithm = o.algorithm == "sgd" ? Algorithm::Sgd : Algorithm::LinGrad;
  if (o.tangent == "exact") cfg.tangent = TangentOptions{TangentMode::Exact, o.fd_delta};
  if (o.tangent == "fd") cfg.tangent = TangentOptions{TangentMode::FiniteDifference, o.fd_delta};
  cfg.metric = o.dataset == "mnist" ? Metric::ClassificationError : Metric::NormalizedDistance;
  cfg.validate();

  auto [train_set, test_set] = load_training_data(o);
  auto widths = o.widths;
  if (widths.empty()) {
    if (o.dataset == "mnist") widths = {train_set.input_width(), 30, train_set.output_width()};
    else widths = o.teacher_widths;
  }
  if (widths.size() < 2) throw ConfigError("--widths needs at least two entries");
  Network net = initial_network(widths, cfg.seed);

  fs::create_directories(o.out);
  const auto record = train(cfg, train_set, test_set, net, [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << "  test_metric " << format_double(e.test_metric) << '\n';
  });

  std::ofstream history(fs::path(o.out) / "history.csv");
  write_history_csv(history, record);
  std::ofstream epochs(fs::path(o.out) / "epochs.csv");
  write_epochs_csv(epochs, record);
  save_network((fs::path(o.out) / "network.lrn").string(), net);
  for (const auto& e : record.events) std::cerr << "event: " << e << '\n';
  if (o.svg) {
    history.close();
    epochs.close();
    for (const auto& p : export_plots(o.out, record.minibatches, record.epochs))
      std::cerr << "wrote " << p << '\n';
  }
  std::cout << "wrote " << (fs::path(o.out) / "history.csv").string() << " and "
            << (fs::path(o.out) / "epochs.csv").string() << '\n';
  return 0;
}

int cmd_verify(const VerifyCliOptions& o) {
  std::vector<CheckResult> all;
  for (std::size_t k = 0; k < o.seeds; ++k) {
    auto rows = run_verification(VerifyOptions{o.seed + k, o.inject_fault});
    if (o.seeds > 1)
      for (auto& r : rows) r.name += "@seed" + std::to_string(o.seed + k);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  write_verify_csv(std::cout, all);
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw FormatError("cannot write " + o.out);
    write_verify_csv(out, all);
  }
  bool ok = true;
  for (const auto& c : all) ok = ok && c.pass;
  return ok ? 0 : 1;
}

int cmd_export_plots(const ExportOptions& o) {
  std::ifstream history(fs::path(o.in) / "history.csv");
  std::ifstream epochs(fs::path(o.in) / "epochs.csv");
  if (!history || !epochs) throw FormatError("need history.csv and epochs.csv in " + o.in);
  const auto rows = read_history_csv(history);
  const auto eps = read_epochs_csv(epochs);
  for (const auto& p : export_plots(o.out.empty() ? o.in : o.out, rows, eps))
    std::cout << "wrote " << p << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-range stepsize selection (linGrad) toolkit"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a teacher-network dataset");
  std::string gen_config;
  add_config(gen_cmd, gen_config);
  gen_cmd->add_option("--widths", gen.widths, "Teacher layer widths")->delimiter(',');
  gen_cmd->add_option("--n-train", gen.n_train, "Training samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n-test", gen.n_test, "Test samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output directory");

  TrainOptions tr;
  auto& cfg = tr.config;
  auto* train_cmd = app.add_subcommand("train", "Train with linGrad or fixed-stepsize SGD");
  std::string train_config;
  add_config(train_cmd, train_config);
  train_cmd->add_option("--dataset", tr.dataset)->check(CLI::IsMember({"teacher", "mnist"}));
  train_cmd->add_option("--data", tr.data_dir, "Directory with train.lrd/test.lrd (teacher)");
  train_cmd->add_option("--mnist-dir", tr.mnist_dir, "Directory with the four MNIST IDX files");
  train_cmd->add_option("--teacher-widths", tr.teacher_widths, "Teacher widths when generating")
      ->delimiter(',');
  train_cmd->add_option("--n-train", tr.n_train)->check(CLI::PositiveNumber);
  train_cmd->add_option("--n-test", tr.n_test)->check(CLI::PositiveNumber);
  train_cmd->add_option("--widths", tr.widths, "Student widths (default: teacher or 784,30,10)")
      ->delimiter(',');
  train_cmd->add_option("--algorithm", tr.algorithm)->check(CLI::IsMember({"lingrad", "sgd"}));
  train_cmd->add_option("--epsilon-star", cfg.epsilon_star)->check(CLI::Range(1e-12, 2.0));
  train_cmd->add_option("--batch-size", cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--n-lin", cfg.n_lin)->check(CLI::PositiveNumber);
  train_cmd->add_option("--n-hist", cfg.n_hist, "0 selects max(50, N_b/N_lin)");
  train_cmd->add_option("--psi0", cfg.psi0, "Initial linGrad stepsize")->check(CLI::PositiveNumber);
  train_cmd->add_option("--psi", cfg.sgd_psi, "Fixed SGD stepsize")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--epochs", cfg.epochs)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", cfg.seed);
  train_cmd->add_option("--tangent", tr.tangent)->check(CLI::IsMember({"auto", "exact", "fd"}));
  train_cmd->add_option("--fd-delta", tr.fd_delta)->check(CLI::PositiveNumber);
  train_cmd->add_option("--objective-scale", cfg.objective_scale)->check(CLI::PositiveNumber);
  train_cmd->add_option("--threads", cfg.threads, "Worker threads (0: auto, capped by LINGRAD_THREADS)");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_flag("--svg", tr.svg, "Also write SVG charts");

  VerifyCliOptions ver;
  auto* verify_cmd = app.add_subcommand("verify", "Run the identity verification suite");
  std::string verify_config;
  add_config(verify_cmd, verify_config);
  verify_cmd->add_option("--seed", ver.seed);
  verify_cmd->add_option("--seeds", ver.seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--out", ver.out, "Also write the CSV to this file");
  verify_cmd->add_flag("--inject-fault", ver.inject_fault)->group("");  // test hook

  ExportOptions ex;
  auto* export_cmd = app.add_subcommand("export-plots", "Render SVG charts from a run directory");
  std::string export_config;
  add_config(export_cmd, export_config);
  export_cmd->add_option("--in", ex.in, "Run directory with history.csv and epochs.csv");
  export_cmd->add_option("--out", ex.out, "Output directory (default: --in)");

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto [cmd, path] : {std::pair{gen_cmd, &gen_config}, std::pair{train_cmd, &train_config},
                             std::pair{verify_cmd, &verify_config}, std::pair{export_cmd, &export_config}})
      if (*cmd && !path->empty()) apply_config(cmd, *path);
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*verify_cmd) return cmd_verify(ver);
    if (*export_cmd) return cmd_export_plots(ex);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
