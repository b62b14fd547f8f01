#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hinite/model.hpp"
#include "hinite/simulate.hpp"

namespace hinite {

struct TrainConfig {
  double learning_rate = 0.001;
  double weight_decay = 0.001;
  int batch_size = 512;
  int max_iterations = 2000;
  int eval_interval = 10;  // iterations between validation checks
  int patience = 50;       // evaluations without improvement before stopping
  std::uint64_t seed = 1;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // shape-matched to the parameters
  long step = 0;
};

AdamState make_adam_state(const ParamStore& params);

// Classic Adam (beta1=0.9, beta2=0.999, eps=1e-8) with L2 weight decay folded
// into the gradients. Throws NumericError naming the parameter on a
// non-finite gradient.
void adam_step(ParamStore& params, AdamState& state,
               const std::vector<std::vector<double>>& grads, const TrainConfig& cfg);

// (1/N) Σ (ŷ_i − y_i)² + γ · HSIC(U_batch, T_batch). The HSIC term is
// omitted entirely when gamma == 0.
Tensor training_loss(Tape& tape, const Tensor& yhat_batch, const Tensor& y_batch,
                     const Tensor& U_batch, std::span<const int> T_batch, double gamma);

// Disjoint, exhaustive seeded shuffle split; floor-based sizes with the
// remainder assigned to train.
SplitLabels split_units(int n, double train_ratio, double val_ratio, double test_ratio,
                        std::uint64_t seed);

struct HistoryRow {
  int iteration = 0;
  double train_loss = 0.0;
  double hsic = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  int iterations_run = 0;
  int best_iteration = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

// Full-graph propagation each iteration with loss terms subsampled to a
// training batch; Adam updates, periodic validation on factual MSE, early
// stopping, best-validation snapshot restored into `model`. Only training
// outcomes reach the loss and only validation outcomes reach early stopping;
// test outcomes are never read.
TrainResult train_model(Model& model, const GraphContext& ctx, const Dataset& data,
                        const TrainConfig& cfg);

}  // namespace hinite
