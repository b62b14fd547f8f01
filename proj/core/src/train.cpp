#include "hinite/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hinite/balance.hpp"

namespace hinite {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
  if (max_iterations < 0) throw ConfigError("train: max_iterations must be >= 0");
  if (eval_interval <= 0) throw ConfigError("train: eval_interval must be positive");
  if (patience <= 0) throw ConfigError("train: patience must be positive");
}

AdamState make_adam_state(const ParamStore& params) {
  AdamState s;
  s.m.reserve(static_cast<std::size_t>(params.count()));
  s.v.reserve(static_cast<std::size_t>(params.count()));
  for (int i = 0; i < params.count(); ++i) {
    const std::size_t sz = params.at(i).value.size();
    s.m.emplace_back(sz, 0.0);
    s.v.emplace_back(sz, 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state,
               const std::vector<std::vector<double>>& grads, const TrainConfig& cfg) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (static_cast<int>(grads.size()) != params.count()) {
    throw DimensionError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.count()) + " parameters");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (int p = 0; p < params.count(); ++p) {
    ParamTensor& par = params.at(p);
    const auto& g = grads[static_cast<std::size_t>(p)];
    auto& m = state.m[static_cast<std::size_t>(p)];
    auto& v = state.v[static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < par.value.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient for parameter " + par.name);
      }
      const double gi = g[i] + cfg.weight_decay * par.value[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      par.value[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
    }
  }
}

Tensor training_loss(Tape& tape, const Tensor& yhat_batch, const Tensor& y_batch,
                     const Tensor& U_batch, std::span<const int> T_batch, double gamma) {
  Tensor err = tape.sub(yhat_batch, y_batch);
  Tensor mse = tape.mean(tape.mul(err, err));
  if (gamma == 0.0) return mse;
  return tape.add(mse, tape.scale(hsic(tape, U_batch, T_batch), gamma));
}

SplitLabels split_units(int n, double train_ratio, double val_ratio, double test_ratio,
                        std::uint64_t seed) {
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ContractViolation("split ratios must sum to 1");
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(std::uniform_int_distribution<int>(0, i)(rng));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const int n_val = static_cast<int>(std::floor(val_ratio * n));
  const int n_test = static_cast<int>(std::floor(test_ratio * n));
  const int n_train = n - n_val - n_test;  // remainder goes to train
  SplitLabels s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

namespace {

std::vector<int> sample_batch(std::span<const int> pool, int k, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  if (k >= n) return std::vector<int>(pool.begin(), pool.end());
  std::vector<int> scratch(pool.begin(), pool.end());
  for (int i = 0; i < k; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(scratch[static_cast<std::size_t>(i)], scratch[static_cast<std::size_t>(j)]);
  }
  scratch.resize(static_cast<std::size_t>(k));
  return scratch;
}

double factual_mse(const Tensor& yhat, std::span<const int> idx, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double e = yhat.values()[static_cast<std::size_t>(idx[k])] - y[k];
    acc += e * e;
  }
  return acc / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train_model(Model& model, const GraphContext& ctx, const Dataset& data,
                        const TrainConfig& cfg) {
  cfg.validate();
  const int n = data.n();
  if (data.split.train.empty()) {
    throw ContractViolation("train: dataset has no training split");
  }
  // Outcomes are copied out by split so nothing below can touch test-set
  // entries even by accident.
  std::vector<double> y_train(data.split.train.size());
  for (std::size_t k = 0; k < data.split.train.size(); ++k) {
    y_train[k] = data.Y[static_cast<std::size_t>(data.split.train[k])];
  }
  std::vector<double> y_val(data.split.val.size());
  for (std::size_t k = 0; k < data.split.val.size(); ++k) {
    y_val[k] = data.Y[static_cast<std::size_t>(data.split.val[k])];
  }
  // Batch positions index into the train split, not into units, so the
  // observed-outcome leaf can be built from y_train alone.
  std::vector<int> train_positions(data.split.train.size());
  std::iota(train_positions.begin(), train_positions.end(), 0);

  const double gamma = model.arch().cfg.gamma;
  const std::string fp = model.arch().fingerprint();
  Rng batch_rng(derive_seed(cfg.seed, "batch:" + fp));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout:" + fp));

  AdamState adam = make_adam_state(model.params());
  TrainResult result;
  std::vector<ParamTensor> best = model.params().tensors();
  int evals_since_best = 0;
  bool stopped = false;

  Tape tape;
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(model.params().count()));

  for (int iter = 1; iter <= cfg.max_iterations && !stopped; ++iter) {
    tape.reset();
    Tensor X = tape.constant(Shape{n, data.d()}, data.X);
    Model::Bound bound = model.bind(tape);
    Model::Forward fwd = model.forward(tape, bound, X, data.T, ctx, /*training=*/true, &dropout_rng);

    std::vector<int> batch_pos = sample_batch(train_positions, cfg.batch_size, batch_rng);
    std::vector<int> batch_units(batch_pos.size());
    std::vector<double> batch_y(batch_pos.size());
    std::vector<int> batch_t(batch_pos.size());
    for (std::size_t k = 0; k < batch_pos.size(); ++k) {
      const int unit = data.split.train[static_cast<std::size_t>(batch_pos[k])];
      batch_units[k] = unit;
      batch_y[k] = y_train[static_cast<std::size_t>(batch_pos[k])];
      batch_t[k] = data.T[static_cast<std::size_t>(unit)];
    }
    Tensor yhat_b = tape.gather_rows(fwd.pred.yhat, batch_units);
    Tensor y_b = tape.constant(Shape{static_cast<int>(batch_y.size()), 1}, batch_y);
    Tensor U_b = tape.gather_rows(fwd.U, batch_units);
    Tensor hs;
    Tensor loss;
    {
      Tensor err = tape.sub(yhat_b, y_b);
      Tensor mse = tape.mean(tape.mul(err, err));
      if (gamma != 0.0) {
        hs = hsic(tape, U_b, batch_t);
        loss = tape.add(mse, tape.scale(hs, gamma));
      } else {
        loss = mse;
      }
    }
    if (!std::isfinite(loss.scalar())) {
      throw NumericError("training diverged at iteration " + std::to_string(iter));
    }
    tape.backward(loss);
    for (int p = 0; p < model.params().count(); ++p) {
      auto g = bound.p[static_cast<std::size_t>(p)].grad();
      grads[static_cast<std::size_t>(p)].assign(g.begin(), g.end());
    }
    adam_step(model.params(), adam, grads, cfg);
    result.iterations_run = iter;

    if (iter % cfg.eval_interval == 0) {
      HistoryRow row;
      row.iteration = iter;
      row.train_loss = loss.scalar();
      row.hsic = hs.valid() ? hs.scalar() : 0.0;
      row.val_mse = std::numeric_limits<double>::quiet_NaN();
      if (!data.split.val.empty()) {
        Tape eval_tape;
        Tensor Xe = eval_tape.constant(Shape{n, data.d()}, data.X);
        Model::Bound be = model.bind(eval_tape);
        Model::Forward fe = model.forward(eval_tape, be, Xe, data.T, ctx, /*training=*/false, nullptr);
        row.val_mse = factual_mse(fe.pred.yhat, data.split.val, y_val);
        if (row.val_mse < result.best_val_mse) {
          result.best_val_mse = row.val_mse;
          result.best_iteration = iter;
          best = model.params().tensors();
          evals_since_best = 0;
        } else {
          ++evals_since_best;
          if (evals_since_best >= cfg.patience) stopped = true;
        }
      }
      result.history.push_back(row);
    }
  }

  if (!data.split.val.empty() && result.best_iteration > 0) {
    model.params().tensors() = std::move(best);
  }
  return result;
}

}  // namespace hinite
