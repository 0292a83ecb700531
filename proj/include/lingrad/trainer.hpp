#pragma once

#include "lingrad/data.hpp"
#include "lingrad/direction.hpp"
#include "lingrad/linrange.hpp"
#include "lingrad/net.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lingrad {

enum class Algorithm { LinGrad, Sgd };
enum class Metric { NormalizedDistance, ClassificationError };

struct TrainerConfig {
  Algorithm algorithm = Algorithm::LinGrad;
  double epsilon_star = 0.3;
  std::size_t batch_size = 10;  // N_s
  std::size_t n_lin = 100;      // measure every n_lin minibatches
  std::size_t n_hist = 0;       // 0 selects max(50, N_b / N_lin)
  double psi0 = 0.1;            // linGrad's initial stepsize
  double sgd_psi = 0.1;         // fixed stepsize for Algorithm::Sgd
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  // Unset: exact for dense networks, fd(1e-6) when the network has residual blocks.
  std::optional<TangentOptions> tangent;
  Metric metric = Metric::NormalizedDistance;
  double objective_scale = 1.0;  // J = scale * 1/2 ||u_I - y||^2
  unsigned threads = 0;          // 0: hardware concurrency, capped by LINGRAD_THREADS

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t effective_n_hist(std::size_t n_batches) const;
  TangentOptions tangent_for(const Network& net) const;
};

// Candidate list L and the windowed-min stepsize.
class StepsizeHistory {
 public:
  StepsizeHistory(double psi0, std::size_t n_hist);

  void append(double candidate);
  double current() const { return current_; }
  std::span<const double> candidates() const { return candidates_; }
  std::size_t window() const { return n_hist_; }

 private:
  std::vector<double> candidates_;
  std::size_t n_hist_;
  double current_;
};

struct MinibatchRecord {
  std::size_t epoch = 0;      // 1-based
  std::size_t minibatch = 0;  // 0-based within the epoch
  double psi = 0.0;           // stepsize applied to the parameters
  std::optional<double> epsilon;
  double objective = 0.0;     // mean objective on the minibatch, before the update
  bool skipped = false;       // zero direction, parameters untouched
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained network
  double test_metric = 0.0;
};

struct TrainRecord {
  std::vector<MinibatchRecord> minibatches;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> events;
};

struct TrainerState {
  TrainerState(Network net, TrainerConfig config, std::size_t n_batches);

  Network net;
  TrainerConfig config;
  StepsizeHistory history;
  TrainRecord record;
  std::size_t epoch = 1;
  std::size_t minibatch = 0;
};

// One linGrad minibatch. The update direction is the mean of per-sample
// steepest directions; when `measure` is set the per-sample nonlinear
// measurements along that direction at the current stepsize are averaged,
// psi* = psi eps*/eps is appended to the history, and psi becomes the windowed
// minimum. Parameters then move once by direction * psi.
MinibatchRecord lingrad_minibatch(TrainerState& state, std::span<const Sample> batch, bool measure);

// Fixed-stepsize SGD through the same update path.
MinibatchRecord sgd_minibatch(TrainerState& state, std::span<const Sample> batch);

// Full run. Shuffles every epoch with the seeded stream, measures on minibatch
// indices divisible by n_lin, evaluates the test metric after each epoch (and
// once before training). `net` is trained in place.
TrainRecord train(const TrainerConfig& config, const Dataset& train_set, const Dataset& test_set,
                  Network& net,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Student initialization: standard-normal parameters from the seed's init stream.
Network initial_network(std::span<const std::size_t> widths, std::uint64_t seed);

double evaluate_metric(Metric metric, const Network& net, const Dataset& ds);

// Worker count honoring LINGRAD_THREADS.
unsigned worker_count(unsigned requested);

}  // namespace lingrad
