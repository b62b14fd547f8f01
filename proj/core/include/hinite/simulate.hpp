#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hinite/graph.hpp"

namespace hinite {

enum class WeightDist { Gaussian, Uniform };

struct SimConfig {
  int n = 1000;
  int m = 2;
  int d = 100;
  double density = 0.01;  // per-view edge probability
  WeightDist weight_dist = WeightDist::Gaussian;
  double treatment_noise = 0.1;  // sd of the propensity jitter
  std::uint64_t seed = 1;
  double train_ratio = 0.70, val_ratio = 0.15, test_ratio = 0.15;

  void validate() const;
};

// Frozen draws of every simulation weight, stored with the dataset so
// outcomes can be recomputed independently.
struct SimWeights {
  std::vector<double> w0, w1, wt;  // d each; wt elements are U(-1,1)
  std::vector<double> view_scale_hop1, view_scale_hop2;  // e^v per view
  // Pair weights aligned with the directed CSR enumeration of each view
  // (owner i ascending, neighbor j within). Hop-1 rows are (d+1) wide and
  // apply to [x_j ‖ t_j]; hop-2 entries are scalars applying to o^(1)_j.
  std::vector<std::vector<double>> pair_w_hop1;
  std::vector<std::vector<double>> pair_w_hop2;
};

struct SplitLabels {
  std::vector<int> train, val, test;
};

struct Dataset {
  SimConfig cfg;
  HeteroGraph graph;
  std::vector<double> X;  // n x d row-major
  std::vector<int> T;     // 0/1
  std::vector<double> Y, Y0, Y1, tau;
  SplitLabels split;
  SimWeights weights;

  int n() const { return cfg.n; }
  int m() const { return cfg.m; }
  int d() const { return cfg.d; }
};

// Each view drawn independently as an undirected G(n, density) graph.
HeteroGraph gen_graph(const SimConfig& cfg, std::uint64_t seed);

std::vector<double> gen_covariates(const SimConfig& cfg, std::uint64_t seed);  // iid N(0,1)

SimWeights gen_weights(const SimConfig& cfg, const HeteroGraph& g, std::uint64_t seed);

// t_i ~ Ber(clamp(sigmoid(x_i . w_t) + eps, 0, 1)), eps ~ N(0, noise^2).
std::vector<int> gen_treatments(std::span<const double> X, int n, int d,
                                std::span<const double> wt, double noise, std::uint64_t seed);

// Spillover effect per unit. hops=1 aggregates [x_j ‖ t_j] over each view's
// neighbors; hops=2 aggregates the hop-1 spillovers the same way. Views with
// no neighbors contribute zero.
std::vector<double> spillover(std::span<const double> X, std::span<const int> T,
                              const HeteroGraph& g, const SimWeights& w, int hops);

struct OutcomeSet {
  std::vector<double> Y, Y0, Y1, tau;
};

// y = w0.x + t (w1.x) + o1 + o2 + eps with both potential outcomes sharing
// the spillover and noise terms, so tau_i == Y1_i - Y0_i holds exactly.
OutcomeSet simulate_outcomes(std::span<const double> X, std::span<const int> T,
                             const HeteroGraph& g, const SimWeights& w, std::uint64_t noise_seed);

// Observed outcomes under an alternative assignment, against the same
// potential-outcome pair (consistency).
std::vector<double> observe(const Dataset& data, std::span<const int> T);

// Full pipeline: graph, covariates, weights, treatments, outcomes, splits.
Dataset simulate_dataset(const SimConfig& cfg);

}  // namespace hinite
