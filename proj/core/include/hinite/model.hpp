#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hinite/graph.hpp"
#include "hinite/rng.hpp"
#include "hinite/tensor.hpp"

namespace hinite {

struct ModelConfig {
  int input_dim = 0;  // covariate width d
  std::vector<int> phi_dims{128, 64, 64};
  std::vector<int> hia_dims{64, 64, 32};
  std::vector<int> head_dims{128, 64, 32};
  std::vector<int> view_attention_dims{128, 128, 64};
  int views = 1;  // m of the effective graph
  double dropout = 0.1;
  double leaky_slope = 0.2;
  double gamma = 1.5;  // balance regularization weight; 0 disables

  void validate() const;
};

enum class InterferenceKind { HiaAttention, GraphConv, None };
// How per-view convolution stacks merge into one representation.
enum class ViewMix { Attention, Concat, Mean };

// Realized architecture. `fingerprint()` identifies the parameter layout and
// is used to derive RNG streams, so two variants that share an architecture
// (e.g. the full model and its gamma=0 ablation) train identically from the
// same seed.
struct Arch {
  InterferenceKind interference = InterferenceKind::HiaAttention;
  ViewMix mix = ViewMix::Attention;
  ModelConfig cfg;

  int phi_out() const { return cfg.phi_dims.back(); }
  int repr_dim() const;        // width of G; 0 when interference is None
  int head_input_dim() const;  // width of [u ‖ g] (or u alone)
  std::string fingerprint() const;
};

struct ParamTensor {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

class ParamStore {
 public:
  int add(std::string name, Shape shape);
  int count() const { return static_cast<int>(params_.size()); }
  ParamTensor& at(int i) { return params_[static_cast<std::size_t>(i)]; }
  const ParamTensor& at(int i) const { return params_[static_cast<std::size_t>(i)]; }
  int find(std::string_view name) const;
  std::vector<ParamTensor>& tensors() { return params_; }
  const std::vector<ParamTensor>& tensors() const { return params_; }

 private:
  std::vector<ParamTensor> params_;
};

// Precomputed per-view edge structures of the effective graph.
struct GraphContext {
  HeteroGraph graph;
  std::vector<NeighborIncidence> incidence;     // per view
  std::vector<std::vector<double>> conv_coeff;  // per view; GraphConv only
};

GraphContext make_graph_context(HeteroGraph g, InterferenceKind kind);

/// Covariate map φ, interference module ψ (attention HIA stack or per-view
/// convolutions), and the two outcome heads. All parameters live in a named
/// ParamStore; forward passes are recorded on a caller-supplied Tape.
class Model {
 public:
  Model(Arch arch, std::uint64_t init_seed);

  const Arch& arch() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Tape leaves for every parameter, aligned with ParamStore indices.
  struct Bound {
    std::vector<Tensor> p;
  };
  Bound bind(Tape& tape) const;

  Tensor phi_forward(Tape& tape, const Bound& b, const Tensor& X, bool training, Rng* rng) const;

  // Edge weights over {i} ∪ N_i^v; each unit's weights sum to 1.
  Tensor node_attention(Tape& tape, const Bound& b, const Tensor& P, const GraphContext& ctx,
                        int view, int layer) const;
  Tensor node_aggregate(Tape& tape, const Bound& b, const Tensor& P, const Tensor& alpha,
                        const GraphContext& ctx, int view, int layer) const;
  // Per-unit view weights, n x m, rows sum to 1.
  Tensor view_attention(Tape& tape, const Bound& b, std::span<const Tensor> view_reprs,
                        int layer) const;
  Tensor view_aggregate(Tape& tape, std::span<const Tensor> view_reprs, const Tensor& beta) const;

  // G = psi(U, T, H). Tcol is the treatment column (n x 1 of 0/1) so tests
  // can make it differentiable.
  Tensor psi_forward(Tape& tape, const Bound& b, const Tensor& U, const Tensor& Tcol,
                     const GraphContext& ctx, bool training, Rng* rng) const;

  struct Prediction {
    Tensor yhat;  // factual head output per unit
    Tensor y0, y1;
  };
  // G may be an invalid Tensor when the architecture has no interference module.
  Prediction predict(Tape& tape, const Bound& b, const Tensor& U, const Tensor& G,
                     std::span<const int> T, bool training, Rng* rng) const;

  struct Forward {
    Tensor U, G;
    Prediction pred;
  };
  Forward forward(Tape& tape, const Bound& b, const Tensor& X, std::span<const int> T,
                  const GraphContext& ctx, bool training, Rng* rng) const;

  // f_y1(u, g) - f_y0(u, g) per unit (dropout off).
  Tensor estimate_ite(Tape& tape, const Bound& b, const Tensor& U, const Tensor& G) const;
  std::vector<double> estimate_ite_values(const GraphContext& ctx, std::span<const double> X,
                                          std::span<const int> T) const;

 private:
  struct Affine {
    int W = -1, b = -1;
  };
  struct HiaLayer {
    std::vector<int> W_view, a_view;  // per view
    int att_W = -1, att_b = -1, att_q = -1;
  };
  struct Head {
    std::vector<Affine> hidden;
    Affine out;
  };

  Tensor head_forward(Tape& tape, const Bound& b, const Head& head, const Tensor& input,
                      bool training, Rng* rng) const;
  Tensor head_input(Tape& tape, const Tensor& U, const Tensor& G) const;
  Tensor attention_logits(Tape& tape, const Bound& b, const Tensor& transformed,
                          const GraphContext& ctx, int view, int layer) const;
  Tensor maybe_dropout(Tape& tape, const Tensor& t, bool training, Rng* rng) const;

  Arch arch_;
  ParamStore params_;
  std::vector<Affine> phi_;
  std::vector<HiaLayer> hia_;             // HiaAttention
  std::vector<std::vector<int>> conv_W_;  // GraphConv: layer -> view -> W
  Head heads_[2];
};

}  // namespace hinite
