#include "lingrad/trainer.hpp"

#include "lingrad/adjoint.hpp"
#include "lingrad/errors.hpp"
#include "lingrad/rng.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>

namespace lingrad {

namespace {

constexpr std::uint64_t kInitStream = 10;
constexpr std::uint64_t kShuffleStream = 11;

// Below this much work per minibatch (samples x parameters) threads cost more than they save.
constexpr std::size_t kParallelThreshold = 200000;

struct SampleWork {
  StateTrajectory traj;
  PerturbationDirection direction;
  double objective = 0.0;
};

unsigned batch_workers(const TrainerState& state, std::size_t batch) {
  if (batch * state.net.parameter_count() < kParallelThreshold) return 1;
  return worker_count(state.config.threads);
}

std::string where(const TrainerState& s) {
  return "epoch " + std::to_string(s.epoch) + " minibatch " + std::to_string(s.minibatch);
}

// Mean over samples of eps_n along `dir` at stepsize psi. Samples whose tangent
// vanishes on every layer are left out of the mean.
double batch_measurement(const TrainerState& state, std::span<const Sample> batch,
                         const std::vector<SampleWork>& work, const PerturbationDirection& dir,
                         double psi, const TangentOptions& opts, unsigned workers) {
  const Network moved = perturbed(state.net, dir, psi);
  std::vector<std::optional<double>> eps(batch.size());
  detail::parallel_for(batch.size(), workers, [&](std::size_t n) {
    const auto tan = compute_tangent(state.net, work[n].traj, dir, psi, opts);
    const auto traj_new = forward(moved, batch[n].x);
    try {
      eps[n] = nonlinear_measurement(work[n].traj, traj_new, tan).epsilon;
    } catch (const DegenerateDirection&) {
    }
  });
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& e : eps)
    if (e) {
      sum += *e;
      ++counted;
    }
  if (counted == 0) throw DegenerateDirection("every sample in the minibatch has a zero tangent");
  return sum / static_cast<double>(counted);
}

MinibatchRecord step(TrainerState& state, std::span<const Sample> batch, bool measure,
                     std::optional<double> fixed_psi) {
  if (batch.empty()) throw ConfigError("minibatch is empty");
  const unsigned workers = batch_workers(state, batch.size());

  std::vector<SampleWork> work(batch.size());
  detail::parallel_for(batch.size(), workers, [&](std::size_t n) {
    auto& w = work[n];
    w.traj = forward(state.net, batch[n].x);
    const auto spec = ObjectiveSpec::quadratic(batch[n].y, state.config.objective_scale);
    const auto grads = objective_gradients(spec, state.net, w.traj);
    w.objective = objective_value(spec, state.net, w.traj);
    w.direction = steepest_direction(adjoint_solve(state.net, w.traj, grads), state.net, w.traj);
  });

  PerturbationDirection dir = work[0].direction;
  double objective = work[0].objective;
  for (std::size_t n = 1; n < work.size(); ++n) {
    dir += work[n].direction;
    objective += work[n].objective;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  dir *= inv;

  MinibatchRecord rec;
  rec.epoch = state.epoch;
  rec.minibatch = state.minibatch;
  rec.objective = objective * inv;

  if (dir.is_zero()) {
    rec.skipped = true;
    rec.psi = fixed_psi.value_or(state.history.current());
    state.record.events.push_back(where(state) + ": zero descent direction, update skipped");
    state.record.minibatches.push_back(rec);
    return rec;
  }

  if (measure) {
    const auto opts = state.config.tangent_for(state.net);
    try {
      const auto est = estimate_linear_range(
          [&](double psi) { return batch_measurement(state, batch, work, dir, psi, opts, workers); },
          state.history.current(), state.config.epsilon_star);
      if (est.retries > 0)
        state.record.events.push_back(where(state) + ": measurement was zero, stepsize escalated " +
                                      std::to_string(est.retries) + " time(s)");
      rec.epsilon = est.epsilon;
      state.history.append(est.psi_star);
    } catch (const DegenerateDirection&) {
      state.record.events.push_back(where(state) + ": degenerate direction, no stepsize candidate");
    } catch (const EscalationExhausted& e) {
      throw EscalationExhausted(where(state) + ": " + e.what());
    }
  }

  rec.psi = fixed_psi.value_or(state.history.current());
  apply_update(state.net, dir, rec.psi);
  state.record.minibatches.push_back(rec);
  return rec;
}

}  // namespace

void TrainerConfig::validate() const {
  if (!(epsilon_star > 0.0 && epsilon_star <= 2.0))
    throw ConfigError("epsilon_star must lie in (0, 2]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n_lin < 1) throw ConfigError("n_lin must be >= 1");
  if (!(psi0 > 0.0) || !std::isfinite(psi0)) throw ConfigError("psi0 must be positive");
  if (!(sgd_psi >= 0.0) || !std::isfinite(sgd_psi)) throw ConfigError("psi must be >= 0");
  if (!(objective_scale > 0.0)) throw ConfigError("objective_scale must be positive");
  if (tangent && tangent->mode == TangentMode::FiniteDifference && !(tangent->delta > 0.0))
    throw ConfigError("tangent delta must be positive");
}

std::size_t TrainerConfig::effective_n_hist(std::size_t n_batches) const {
  if (n_hist > 0) return n_hist;
  return std::max<std::size_t>(50, n_batches / n_lin);
}

TangentOptions TrainerConfig::tangent_for(const Network& net) const {
  if (tangent) return *tangent;
  if (net.has_residual()) return TangentOptions{TangentMode::FiniteDifference, 1e-6};
  return TangentOptions{TangentMode::Exact, 1e-6};
}

StepsizeHistory::StepsizeHistory(double psi0, std::size_t n_hist)
    : n_hist_(std::max<std::size_t>(1, n_hist)), current_(psi0) {}

void StepsizeHistory::append(double candidate) {
  candidates_.push_back(candidate);
  const std::size_t take = std::min(n_hist_, candidates_.size());
  current_ = *std::min_element(candidates_.end() - static_cast<std::ptrdiff_t>(take), candidates_.end());
}

TrainerState::TrainerState(Network n, TrainerConfig c, std::size_t n_batches)
    : net(std::move(n)),
      config(std::move(c)),
      history(config.psi0, config.effective_n_hist(n_batches)) {
  config.validate();
  net.validate();
}

MinibatchRecord lingrad_minibatch(TrainerState& state, std::span<const Sample> batch, bool measure) {
  return step(state, batch, measure, std::nullopt);
}

MinibatchRecord sgd_minibatch(TrainerState& state, std::span<const Sample> batch) {
  return step(state, batch, false, state.config.sgd_psi);
}

double evaluate_metric(Metric metric, const Network& net, const Dataset& ds) {
  return metric == Metric::NormalizedDistance ? metric_normalized_distance(net, ds)
                                              : metric_classification_error(net, ds);
}

Network initial_network(std::span<const std::size_t> widths, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kInitStream);
  return random_dense_network(widths, rng);
}

unsigned worker_count(unsigned requested) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("LINGRAD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

TrainRecord train(const TrainerConfig& config, const Dataset& train_set, const Dataset& test_set,
                  Network& net, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.input_width() != net.input_width() || train_set.output_width() != net.output_width())
    throw ConfigError("training set dimensions (" + std::to_string(train_set.input_width()) + " -> " +
                      std::to_string(train_set.output_width()) + ") do not match the network");
  if (test_set.input_width() != net.input_width() || test_set.output_width() != net.output_width())
    throw ConfigError("test set dimensions do not match the network");
  if (train_set.size() < config.batch_size)
    throw ConfigError("training set is smaller than one minibatch");

  const std::size_t n_batches = train_set.size() / config.batch_size;
  TrainerState state(std::move(net), config, n_batches);
  Rng shuffle_rng = Rng::derive(config.seed, kShuffleStream);

  auto report = [&](std::size_t epoch) {
    EpochRecord e{epoch, evaluate_metric(config.metric, state.net, test_set)};
    state.record.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  };
  report(0);

  std::vector<std::size_t> order(train_set.size());
  std::vector<Sample> batch(config.batch_size);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, shuffle_rng);
    state.epoch = epoch;
    for (std::size_t b = 0; b < n_batches; ++b) {
      state.minibatch = b;
      for (std::size_t k = 0; k < config.batch_size; ++k)
        batch[k] = train_set.samples[order[b * config.batch_size + k]];
      if (config.algorithm == Algorithm::LinGrad)
        lingrad_minibatch(state, batch, b % config.n_lin == 0);
      else
        sgd_minibatch(state, batch);
    }
    report(epoch);
  }
  net = std::move(state.net);
  return std::move(state.record);
}

}  // namespace lingrad
