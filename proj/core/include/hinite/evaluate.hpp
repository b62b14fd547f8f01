#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hinite/model.hpp"
#include "hinite/simulate.hpp"
#include "hinite/train.hpp"

namespace hinite {

// ε_PEHE = (1/n) Σ (τ_i − τ̂_i)².
double pehe(std::span<const double> tau, std::span<const double> tau_hat);
// ε_ATE = |mean τ − mean τ̂|.
double ate_error(std::span<const double> tau, std::span<const double> tau_hat);

enum class Variant {
  Hinite,     // full model: attention HIA stack on the multi-view graph
  HinitePg,   // full model on the projection graph
  HiniteNhg,  // HIA layers replaced by graph convolutions on the projection
  HiniteNb,   // gamma = 0, no balancing
  GcnProj,    // convolutional interference module on the projection graph
  MgcnC,      // per-view convolution stacks, concatenated
  MgcnM,      // per-view convolution stacks, averaged
  Tarnet,     // no interference module, no balancing
};

inline constexpr std::array<Variant, 8> kAllVariants = {
    Variant::Hinite, Variant::HinitePg, Variant::HiniteNhg, Variant::HiniteNb,
    Variant::GcnProj, Variant::MgcnC, Variant::MgcnM, Variant::Tarnet,
};

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);  // ConfigError listing valid names
bool variant_uses_balance(Variant v);

struct BuiltVariant {
  Model model;
  GraphContext ctx;
};

// Instantiates the architecture and effective graph for a method variant.
// The initialization stream is derived from (seed, architecture fingerprint)
// so structurally identical variants start from identical parameters.
BuiltVariant build_variant(Variant v, const ModelConfig& base, const HeteroGraph& g,
                           std::uint64_t seed);

struct CellResult {
  Variant variant = Variant::Hinite;
  std::uint64_t seed = 0;
  double gamma = 0.0;  // value actually used for this cell
  double pehe = 0.0, sqrt_pehe = 0.0, ate = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;  // diagnostic only, not part of deterministic output
  bool failed = false;
  std::string error;
};

struct VariantSummary {
  Variant variant = Variant::Hinite;
  int cells_ok = 0;
  double pehe_mean = 0.0, pehe_se = 0.0;
  double sqrt_pehe_mean = 0.0, sqrt_pehe_se = 0.0;
  double ate_mean = 0.0, ate_se = 0.0;
};

struct ExperimentReport {
  std::vector<CellResult> cells;  // variant-major, seed-minor
  std::vector<VariantSummary> summary;
};

struct ExperimentConfig {
  SimConfig sim;
  ModelConfig model;  // base dims; views filled per variant
  TrainConfig train;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  // When non-empty, balanced variants pick gamma from this set by validation
  // MSE (per cell); otherwise model.gamma is used as-is.
  std::vector<double> gamma_search;
  int threads = 0;  // 0 = hardware concurrency
};

// Trains every (variant, seed) cell on per-seed datasets shared across
// variants and reports test-split metrics. Cells run concurrently; results
// are deterministic for fixed seeds regardless of thread count. A diverging
// cell is recorded as failed, the rest continue.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Metrics of one trained model on the test split of `data`.
CellResult evaluate_cell(Variant v, Model& model, const GraphContext& ctx, const Dataset& data,
                         const TrainResult& tr);

struct GammaSweepRow {
  double gamma = 0.0;
  double pehe = 0.0, sqrt_pehe = 0.0, ate = 0.0;
  int iterations = 0;
};

// Trains the full model once per gamma on the same dataset and splits.
std::vector<GammaSweepRow> gamma_sweep(const Dataset& data, const ModelConfig& base,
                                       const TrainConfig& train, std::span<const double> gammas);

}  // namespace hinite
