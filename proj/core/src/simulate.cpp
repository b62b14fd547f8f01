#include "hinite/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "hinite/train.hpp"

namespace hinite {

void SimConfig::validate() const {
  if (n <= 0) throw ConfigError("sim: n must be positive");
  if (m <= 0) throw ConfigError("sim: m must be positive");
  if (d <= 0) throw ConfigError("sim: d must be positive");
  if (density < 0.0 || density > 1.0) throw ConfigError("sim: density must lie in [0,1]");
  if (treatment_noise < 0.0) throw ConfigError("sim: treatment_noise must be >= 0");
  const double total = train_ratio + val_ratio + test_ratio;
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("sim: split ratios must sum to 1");
}

HeteroGraph gen_graph(const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<ViewGraph> views;
  views.reserve(static_cast<std::size_t>(cfg.m));
  Rng rng(seed);
  std::bernoulli_distribution edge(cfg.density);
  for (int v = 0; v < cfg.m; ++v) {
    std::vector<std::pair<int, int>> edges;
    if (cfg.density > 0.0) {
      for (int i = 0; i < cfg.n; ++i) {
        for (int j = i + 1; j < cfg.n; ++j) {
          if (edge(rng)) edges.emplace_back(i, j);
        }
      }
    }
    views.push_back(make_view_graph(cfg.n, edges));
  }
  return make_hetero_graph(std::move(views));
}

std::vector<double> gen_covariates(const SimConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> X(static_cast<std::size_t>(cfg.n) * cfg.d);
  for (double& x : X) x = normal(rng);
  return X;
}

namespace {

double draw_weight(Rng& rng, WeightDist dist) {
  if (dist == WeightDist::Gaussian) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

SimWeights gen_weights(const SimConfig& cfg, const HeteroGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  SimWeights w;
  w.w0.resize(static_cast<std::size_t>(cfg.d));
  w.w1.resize(static_cast<std::size_t>(cfg.d));
  w.wt.resize(static_cast<std::size_t>(cfg.d));
  for (double& v : w.w0) v = draw_weight(rng, cfg.weight_dist);
  for (double& v : w.w1) v = draw_weight(rng, cfg.weight_dist);
  std::uniform_real_distribution<double> pm1(-1.0, 1.0);
  for (double& v : w.wt) v = pm1(rng);
  for (int v = 0; v < cfg.m; ++v) w.view_scale_hop1.push_back(draw_weight(rng, cfg.weight_dist));
  for (int v = 0; v < cfg.m; ++v) w.view_scale_hop2.push_back(draw_weight(rng, cfg.weight_dist));
  for (int v = 0; v < cfg.m; ++v) {
    const auto& view = g.views[static_cast<std::size_t>(v)];
    std::vector<double> hop1(view.neighbors.size() * static_cast<std::size_t>(cfg.d + 1));
    for (double& x : hop1) x = draw_weight(rng, cfg.weight_dist);
    w.pair_w_hop1.push_back(std::move(hop1));
    std::vector<double> hop2(view.neighbors.size());
    for (double& x : hop2) x = draw_weight(rng, cfg.weight_dist);
    w.pair_w_hop2.push_back(std::move(hop2));
  }
  return w;
}

std::vector<int> gen_treatments(std::span<const double> X, int n, int d,
                                std::span<const double> wt, double noise, std::uint64_t seed) {
  if (static_cast<int>(wt.size()) != d) {
    throw DimensionError("gen_treatments: wt has " + std::to_string(wt.size()) + " entries for d=" +
                         std::to_string(d));
  }
  Rng rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  std::vector<int> T(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double logit = 0.0;
    for (int k = 0; k < d; ++k) logit += X[static_cast<std::size_t>(i) * d + k] * wt[static_cast<std::size_t>(k)];
    double p = 1.0 / (1.0 + std::exp(-logit));
    if (noise > 0.0) p += jitter(rng);
    p = std::clamp(p, 0.0, 1.0);
    T[static_cast<std::size_t>(i)] = std::bernoulli_distribution(p)(rng) ? 1 : 0;
  }
  return T;
}

std::vector<double> spillover(std::span<const double> X, std::span<const int> T,
                              const HeteroGraph& g, const SimWeights& w, int hops) {
  if (hops != 1 && hops != 2) {
    throw ContractViolation("spillover: hops must be 1 or 2");
  }
  const int n = g.node_count();
  const int m = g.view_count();
  const int d = static_cast<int>(X.size()) / std::max(n, 1);

  std::vector<double> o1(static_cast<std::size_t>(n), 0.0);
  for (int v = 0; v < m; ++v) {
    const auto& view = g.views[static_cast<std::size_t>(v)];
    const double ev = w.view_scale_hop1[static_cast<std::size_t>(v)];
    const auto& pw = w.pair_w_hop1[static_cast<std::size_t>(v)];
    for (int i = 0; i < n; ++i) {
      auto ns = view.neighbors_of(i);
      if (ns.empty()) continue;
      double acc = 0.0;
      for (std::size_t k = 0; k < ns.size(); ++k) {
        const int j = ns[k];
        const std::size_t entry = static_cast<std::size_t>(view.offsets[static_cast<std::size_t>(i)]) + k;
        const double* wij = pw.data() + entry * static_cast<std::size_t>(d + 1);
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += wij[c] * X[static_cast<std::size_t>(j) * d + c];
        dot += wij[d] * static_cast<double>(T[static_cast<std::size_t>(j)]);
        acc += dot;
      }
      o1[static_cast<std::size_t>(i)] += ev * (acc / static_cast<double>(ns.size()));
    }
  }
  if (hops == 1) return o1;

  std::vector<double> o2(static_cast<std::size_t>(n), 0.0);
  for (int v = 0; v < m; ++v) {
    const auto& view = g.views[static_cast<std::size_t>(v)];
    const double ev = w.view_scale_hop2[static_cast<std::size_t>(v)];
    const auto& pw = w.pair_w_hop2[static_cast<std::size_t>(v)];
    for (int i = 0; i < n; ++i) {
      auto ns = view.neighbors_of(i);
      if (ns.empty()) continue;
      double acc = 0.0;
      for (std::size_t k = 0; k < ns.size(); ++k) {
        const std::size_t entry = static_cast<std::size_t>(view.offsets[static_cast<std::size_t>(i)]) + k;
        acc += pw[entry] * o1[static_cast<std::size_t>(ns[k])];
      }
      o2[static_cast<std::size_t>(i)] += ev * (acc / static_cast<double>(ns.size()));
    }
  }
  return o2;
}

OutcomeSet simulate_outcomes(std::span<const double> X, std::span<const int> T,
                             const HeteroGraph& g, const SimWeights& w, std::uint64_t noise_seed) {
  const int n = g.node_count();
  const int d = static_cast<int>(w.w0.size());
  std::vector<double> o1 = spillover(X, T, g, w, 1);
  std::vector<double> o2 = spillover(X, T, g, w, 2);
  Rng rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  OutcomeSet out;
  out.Y.resize(static_cast<std::size_t>(n));
  out.Y0.resize(static_cast<std::size_t>(n));
  out.Y1.resize(static_cast<std::size_t>(n));
  out.tau.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double f0 = 0.0, ft = 0.0;
    for (int k = 0; k < d; ++k) {
      const double x = X[static_cast<std::size_t>(i) * d + k];
      f0 += w.w0[static_cast<std::size_t>(k)] * x;
      ft += w.w1[static_cast<std::size_t>(k)] * x;
    }
    const double base = f0 + o1[static_cast<std::size_t>(i)] + o2[static_cast<std::size_t>(i)] + noise(rng);
    out.Y0[static_cast<std::size_t>(i)] = base;
    out.Y1[static_cast<std::size_t>(i)] = base + ft;
    // Stored as the realized difference so the additive identity holds in
    // floating point; it equals w1.x up to one rounding of `base + ft`.
    out.tau[static_cast<std::size_t>(i)] = out.Y1[static_cast<std::size_t>(i)] - out.Y0[static_cast<std::size_t>(i)];
    out.Y[static_cast<std::size_t>(i)] = T[static_cast<std::size_t>(i)] ? out.Y1[static_cast<std::size_t>(i)]
                                                                        : out.Y0[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<double> observe(const Dataset& data, std::span<const int> T) {
  if (static_cast<int>(T.size()) != data.n()) {
    throw DimensionError("observe: " + std::to_string(T.size()) + " treatments for n=" +
                         std::to_string(data.n()));
  }
  std::vector<double> y(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) {
    y[i] = T[i] ? data.Y1[i] : data.Y0[i];
  }
  return y;
}

Dataset simulate_dataset(const SimConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.cfg = cfg;
  data.graph = gen_graph(cfg, derive_seed(cfg.seed, "graph"));
  data.X = gen_covariates(cfg, derive_seed(cfg.seed, "covariates"));
  data.weights = gen_weights(cfg, data.graph, derive_seed(cfg.seed, "weights"));
  data.T = gen_treatments(data.X, cfg.n, cfg.d, data.weights.wt, cfg.treatment_noise,
                          derive_seed(cfg.seed, "treatments"));
  OutcomeSet out = simulate_outcomes(data.X, data.T, data.graph, data.weights,
                                     derive_seed(cfg.seed, "noise"));
  data.Y = std::move(out.Y);
  data.Y0 = std::move(out.Y0);
  data.Y1 = std::move(out.Y1);
  data.tau = std::move(out.tau);
  data.split = split_units(cfg.n, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                           derive_seed(cfg.seed, "split"));
  return data;
}

}  // namespace hinite
