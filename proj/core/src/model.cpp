#include "hinite/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hinite {

void ModelConfig::validate() const {
  auto all_positive = [](const std::vector<int>& dims) {
    return !dims.empty() && std::all_of(dims.begin(), dims.end(), [](int d) { return d > 0; });
  };
  if (input_dim <= 0) throw ConfigError("model: input_dim must be positive");
  if (!all_positive(phi_dims)) throw ConfigError("model: phi_dims must be positive");
  if (!all_positive(hia_dims)) throw ConfigError("model: hia_dims must be positive");
  if (!all_positive(head_dims)) throw ConfigError("model: head_dims must be positive");
  if (!all_positive(view_attention_dims)) throw ConfigError("model: view_attention_dims must be positive");
  if (view_attention_dims.size() != hia_dims.size()) {
    throw ConfigError("model: need one view-attention dim per HIA layer");
  }
  if (views < 1) throw ConfigError("model: views must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("model: leaky_slope must lie in (0,1)");
  if (gamma < 0.0) throw ConfigError("model: gamma must be >= 0");
}

int Arch::repr_dim() const {
  if (interference == InterferenceKind::None) return 0;
  const int last = cfg.hia_dims.back();
  if (interference == InterferenceKind::GraphConv && mix == ViewMix::Concat) {
    return last * cfg.views;
  }
  return last;
}

int Arch::head_input_dim() const { return phi_out() + repr_dim(); }

namespace {

std::string join_dims(const std::vector<int>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace

std::string Arch::fingerprint() const {
  std::string kind;
  switch (interference) {
    case InterferenceKind::HiaAttention: kind = "hia"; break;
    case InterferenceKind::GraphConv: kind = mix == ViewMix::Concat ? "conv-cat" : "conv-mean"; break;
    case InterferenceKind::None: kind = "none"; break;
  }
  std::string fp = kind + ":m=" + std::to_string(cfg.views) + ":d=" + std::to_string(cfg.input_dim);
  fp += ":phi=" + join_dims(cfg.phi_dims);
  if (interference != InterferenceKind::None) {
    fp += ":psi=" + join_dims(cfg.hia_dims);
    if (interference == InterferenceKind::HiaAttention) {
      fp += ":va=" + join_dims(cfg.view_attention_dims);
    }
  }
  fp += ":heads=" + join_dims(cfg.head_dims);
  return fp;
}

int ParamStore::add(std::string name, Shape shape) {
  params_.push_back(ParamTensor{std::move(name), shape,
                                std::vector<double>(static_cast<std::size_t>(shape.size()), 0.0)});
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

GraphContext make_graph_context(HeteroGraph g, InterferenceKind kind) {
  GraphContext ctx;
  ctx.graph = std::move(g);
  ctx.incidence.reserve(static_cast<std::size_t>(ctx.graph.view_count()));
  for (const auto& view : ctx.graph.views) {
    ctx.incidence.push_back(self_loop_incidence(view));
  }
  if (kind == InterferenceKind::GraphConv) {
    for (int v = 0; v < ctx.graph.view_count(); ++v) {
      ctx.conv_coeff.push_back(
          gcn_coefficients(ctx.graph.views[static_cast<std::size_t>(v)], ctx.incidence[static_cast<std::size_t>(v)]));
    }
  }
  return ctx;
}

Model::Model(Arch arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
  arch_.cfg.validate();
  const ModelConfig& c = arch_.cfg;

  int in = c.input_dim;
  for (std::size_t l = 0; l < c.phi_dims.size(); ++l) {
    const int out = c.phi_dims[l];
    const std::string base = "phi." + std::to_string(l);
    phi_.push_back(Affine{params_.add(base + ".W", Shape{in, out}), params_.add(base + ".b", Shape{1, out})});
    in = out;
  }

  if (arch_.interference == InterferenceKind::HiaAttention) {
    int pin = arch_.phi_out() + 1;  // treatment appended as one column
    for (std::size_t l = 0; l < c.hia_dims.size(); ++l) {
      const int out = c.hia_dims[l];
      const int va = c.view_attention_dims[l];
      HiaLayer layer;
      for (int v = 0; v < c.views; ++v) {
        const std::string base = "hia." + std::to_string(l) + ".view" + std::to_string(v);
        layer.W_view.push_back(params_.add(base + ".W", Shape{pin, out}));
        layer.a_view.push_back(params_.add(base + ".a", Shape{2 * out, 1}));
      }
      const std::string base = "hia." + std::to_string(l) + ".att";
      layer.att_W = params_.add(base + ".W", Shape{out, va});
      layer.att_b = params_.add(base + ".b", Shape{1, va});
      layer.att_q = params_.add(base + ".q", Shape{va, 1});
      hia_.push_back(std::move(layer));
      pin = out;
    }
  } else if (arch_.interference == InterferenceKind::GraphConv) {
    int pin = arch_.phi_out() + 1;
    for (std::size_t l = 0; l < c.hia_dims.size(); ++l) {
      const int out = c.hia_dims[l];
      std::vector<int> per_view;
      for (int v = 0; v < c.views; ++v) {
        per_view.push_back(params_.add(
            "conv." + std::to_string(l) + ".view" + std::to_string(v) + ".W", Shape{pin, out}));
      }
      conv_W_.push_back(std::move(per_view));
      pin = out;
    }
  }

  for (int h = 0; h < 2; ++h) {
    int hin = arch_.head_input_dim();
    const std::string head = "head" + std::to_string(h);
    for (std::size_t l = 0; l < c.head_dims.size(); ++l) {
      const int out = c.head_dims[l];
      const std::string base = head + "." + std::to_string(l);
      heads_[h].hidden.push_back(
          Affine{params_.add(base + ".W", Shape{hin, out}), params_.add(base + ".b", Shape{1, out})});
      hin = out;
    }
    heads_[h].out = Affine{params_.add(head + ".out.W", Shape{hin, 1}), params_.add(head + ".out.b", Shape{1, 1})};
  }

  // Glorot-uniform matrices, zero biases.
  Rng rng(init_seed);
  for (int i = 0; i < params_.count(); ++i) {
    ParamTensor& p = params_.at(i);
    if (p.name.ends_with(".b")) continue;
    const double limit = std::sqrt(6.0 / (p.shape.rows + p.shape.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : p.value) v = dist(rng);
  }
}

Model::Bound Model::bind(Tape& tape) const {
  Bound b;
  b.p.reserve(static_cast<std::size_t>(params_.count()));
  for (int i = 0; i < params_.count(); ++i) {
    const ParamTensor& p = params_.at(i);
    b.p.push_back(tape.leaf(p.shape, p.value, /*requires_grad=*/true));
  }
  return b;
}

Tensor Model::maybe_dropout(Tape& tape, const Tensor& t, bool training, Rng* rng) const {
  if (!training || arch_.cfg.dropout == 0.0) return t;
  if (rng == nullptr) {
    throw ContractViolation("training forward with dropout needs an RNG");
  }
  return tape.dropout(t, arch_.cfg.dropout, *rng, true);
}

Tensor Model::phi_forward(Tape& tape, const Bound& b, const Tensor& X, bool training, Rng* rng) const {
  if (X.shape().cols != arch_.cfg.input_dim) {
    throw DimensionError("phi: input " + X.shape().str() + " vs configured d=" +
                         std::to_string(arch_.cfg.input_dim));
  }
  Tensor h = X;
  for (const Affine& layer : phi_) {
    h = tape.relu(tape.add_row_bias(tape.matmul(h, b.p[static_cast<std::size_t>(layer.W)]),
                                    b.p[static_cast<std::size_t>(layer.b)]));
    h = maybe_dropout(tape, h, training, rng);
  }
  return h;
}

Tensor Model::attention_logits(Tape& tape, const Bound& b, const Tensor& transformed,
                               const GraphContext& ctx, int view, int layer) const {
  const HiaLayer& hl = hia_[static_cast<std::size_t>(layer)];
  const Tensor& a = b.p[static_cast<std::size_t>(hl.a_view[static_cast<std::size_t>(view)])];
  const int out = transformed.shape().cols;
  std::vector<int> lo(static_cast<std::size_t>(out)), hi(static_cast<std::size_t>(out));
  std::iota(lo.begin(), lo.end(), 0);
  std::iota(hi.begin(), hi.end(), out);
  Tensor a_dst = tape.gather_rows(a, lo);  // weights on Wp_i
  Tensor a_src = tape.gather_rows(a, hi);  // weights on Wp_j
  Tensor s_dst = tape.matmul(transformed, a_dst);
  Tensor s_src = tape.matmul(transformed, a_src);
  const NeighborIncidence& inc = ctx.incidence[static_cast<std::size_t>(view)];
  Tensor raw = tape.add(tape.gather_rows(s_dst, inc.dst), tape.gather_rows(s_src, inc.src));
  return tape.leaky_relu(raw, arch_.cfg.leaky_slope);
}

Tensor Model::node_attention(Tape& tape, const Bound& b, const Tensor& P, const GraphContext& ctx,
                             int view, int layer) const {
  const HiaLayer& hl = hia_[static_cast<std::size_t>(layer)];
  Tensor transformed = tape.matmul(P, b.p[static_cast<std::size_t>(hl.W_view[static_cast<std::size_t>(view)])]);
  Tensor logits = attention_logits(tape, b, transformed, ctx, view, layer);
  return tape.segment_softmax(logits, ctx.incidence[static_cast<std::size_t>(view)].segments);
}

Tensor Model::node_aggregate(Tape& tape, const Bound& b, const Tensor& P, const Tensor& alpha,
                             const GraphContext& ctx, int view, int layer) const {
  const HiaLayer& hl = hia_[static_cast<std::size_t>(layer)];
  Tensor transformed = tape.matmul(P, b.p[static_cast<std::size_t>(hl.W_view[static_cast<std::size_t>(view)])]);
  const NeighborIncidence& inc = ctx.incidence[static_cast<std::size_t>(view)];
  Tensor gathered = tape.gather_rows(transformed, inc.src);
  Tensor weighted = tape.scale_rows(gathered, alpha);
  return tape.relu(tape.segment_sum_rows(weighted, inc.segments));
}

Tensor Model::view_attention(Tape& tape, const Bound& b, std::span<const Tensor> view_reprs,
                             int layer) const {
  const HiaLayer& hl = hia_[static_cast<std::size_t>(layer)];
  Tensor scores;
  for (std::size_t v = 0; v < view_reprs.size(); ++v) {
    Tensor proj = tape.add_row_bias(tape.matmul(view_reprs[v], b.p[static_cast<std::size_t>(hl.att_W)]),
                                    b.p[static_cast<std::size_t>(hl.att_b)]);
    Tensor s = tape.matmul(tape.leaky_relu(proj, arch_.cfg.leaky_slope),
                           b.p[static_cast<std::size_t>(hl.att_q)]);
    scores = v == 0 ? s : tape.concat_cols(scores, s);
  }
  return tape.softmax_rows(scores);
}

Tensor Model::view_aggregate(Tape& tape, std::span<const Tensor> view_reprs, const Tensor& beta) const {
  if (beta.shape().cols != static_cast<int>(view_reprs.size())) {
    throw DimensionError("view_aggregate: beta " + beta.shape().str() + " vs " +
                         std::to_string(view_reprs.size()) + " views");
  }
  Tensor z;
  for (std::size_t v = 0; v < view_reprs.size(); ++v) {
    Tensor term = tape.scale_rows(view_reprs[v], tape.column(beta, static_cast<int>(v)));
    z = v == 0 ? term : tape.add(z, term);
  }
  return z;
}

Tensor Model::psi_forward(Tape& tape, const Bound& b, const Tensor& U, const Tensor& Tcol,
                          const GraphContext& ctx, bool training, Rng* rng) const {
  (void)training;
  (void)rng;
  if (arch_.interference == InterferenceKind::None) {
    throw ContractViolation("psi_forward on an architecture without an interference module");
  }
  const int m = arch_.cfg.views;
  if (ctx.graph.view_count() != m) {
    throw DimensionError("psi: graph has " + std::to_string(ctx.graph.view_count()) +
                         " views, model expects " + std::to_string(m));
  }
  Tensor P0 = tape.concat_cols(U, Tcol);

  if (arch_.interference == InterferenceKind::HiaAttention) {
    Tensor P = P0;
    std::vector<Tensor> per_view(static_cast<std::size_t>(m));
    for (std::size_t l = 0; l < hia_.size(); ++l) {
      const HiaLayer& hl = hia_[l];
      for (int v = 0; v < m; ++v) {
        const NeighborIncidence& inc = ctx.incidence[static_cast<std::size_t>(v)];
        Tensor transformed = tape.matmul(P, b.p[static_cast<std::size_t>(hl.W_view[static_cast<std::size_t>(v)])]);
        Tensor logits = attention_logits(tape, b, transformed, ctx, v, static_cast<int>(l));
        Tensor alpha = tape.segment_softmax(logits, inc.segments);
        Tensor weighted = tape.scale_rows(tape.gather_rows(transformed, inc.src), alpha);
        per_view[static_cast<std::size_t>(v)] = tape.relu(tape.segment_sum_rows(weighted, inc.segments));
      }
      Tensor beta = view_attention(tape, b, per_view, static_cast<int>(l));
      P = view_aggregate(tape, per_view, beta);
    }
    return P;
  }

  // GraphConv: independent per-view stacks, merged at the end.
  std::vector<Tensor> coeff(static_cast<std::size_t>(m));
  for (int v = 0; v < m; ++v) {
    const auto& cv = ctx.conv_coeff[static_cast<std::size_t>(v)];
    coeff[static_cast<std::size_t>(v)] = tape.constant(Shape{static_cast<int>(cv.size()), 1}, cv);
  }
  std::vector<Tensor> per_view(static_cast<std::size_t>(m), P0);
  for (std::size_t l = 0; l < conv_W_.size(); ++l) {
    for (int v = 0; v < m; ++v) {
      const NeighborIncidence& inc = ctx.incidence[static_cast<std::size_t>(v)];
      Tensor transformed =
          tape.matmul(per_view[static_cast<std::size_t>(v)],
                      b.p[static_cast<std::size_t>(conv_W_[l][static_cast<std::size_t>(v)])]);
      Tensor weighted = tape.scale_rows(tape.gather_rows(transformed, inc.src),
                                        coeff[static_cast<std::size_t>(v)]);
      per_view[static_cast<std::size_t>(v)] = tape.relu(tape.segment_sum_rows(weighted, inc.segments));
    }
  }
  if (m == 1) return per_view[0];
  if (arch_.mix == ViewMix::Concat) {
    Tensor g = per_view[0];
    for (int v = 1; v < m; ++v) g = tape.concat_cols(g, per_view[static_cast<std::size_t>(v)]);
    return g;
  }
  Tensor acc = per_view[0];
  for (int v = 1; v < m; ++v) acc = tape.add(acc, per_view[static_cast<std::size_t>(v)]);
  return tape.scale(acc, 1.0 / m);
}

Tensor Model::head_input(Tape& tape, const Tensor& U, const Tensor& G) const {
  if (arch_.interference == InterferenceKind::None) return U;
  if (!G.valid()) {
    throw ContractViolation("head input needs interference representations");
  }
  return tape.concat_cols(U, G);
}

Tensor Model::head_forward(Tape& tape, const Bound& b, const Head& head, const Tensor& input,
                           bool training, Rng* rng) const {
  Tensor h = input;
  for (const Affine& layer : head.hidden) {
    h = tape.relu(tape.add_row_bias(tape.matmul(h, b.p[static_cast<std::size_t>(layer.W)]),
                                    b.p[static_cast<std::size_t>(layer.b)]));
    h = maybe_dropout(tape, h, training, rng);
  }
  return tape.add_row_bias(tape.matmul(h, b.p[static_cast<std::size_t>(head.out.W)]),
                           b.p[static_cast<std::size_t>(head.out.b)]);
}

Model::Prediction Model::predict(Tape& tape, const Bound& b, const Tensor& U, const Tensor& G,
                                 std::span<const int> T, bool training, Rng* rng) const {
  Tensor input = head_input(tape, U, G);
  Prediction pred;
  pred.y0 = head_forward(tape, b, heads_[0], input, training, rng);
  pred.y1 = head_forward(tape, b, heads_[1], input, training, rng);
  const int n = input.shape().rows;
  if (static_cast<int>(T.size()) != n) {
    throw DimensionError("predict: " + std::to_string(T.size()) + " treatments for " +
                         std::to_string(n) + " units");
  }
  std::vector<double> sel1(static_cast<std::size_t>(n)), sel0(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    sel1[static_cast<std::size_t>(i)] = T[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    sel0[static_cast<std::size_t>(i)] = T[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
  }
  Tensor pick1 = tape.constant(Shape{n, 1}, sel1);
  Tensor pick0 = tape.constant(Shape{n, 1}, sel0);
  pred.yhat = tape.add(tape.mul(pred.y1, pick1), tape.mul(pred.y0, pick0));
  return pred;
}

Model::Forward Model::forward(Tape& tape, const Bound& b, const Tensor& X, std::span<const int> T,
                              const GraphContext& ctx, bool training, Rng* rng) const {
  Forward f;
  f.U = phi_forward(tape, b, X, training, rng);
  if (arch_.interference != InterferenceKind::None) {
    const int n = X.shape().rows;
    std::vector<double> tcol(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tcol[static_cast<std::size_t>(i)] = T[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    Tensor Tc = tape.constant(Shape{n, 1}, tcol);
    f.G = psi_forward(tape, b, f.U, Tc, ctx, training, rng);
  }
  f.pred = predict(tape, b, f.U, f.G, T, training, rng);
  return f;
}

Tensor Model::estimate_ite(Tape& tape, const Bound& b, const Tensor& U, const Tensor& G) const {
  Tensor input = head_input(tape, U, G);
  Tensor y1 = head_forward(tape, b, heads_[1], input, /*training=*/false, nullptr);
  Tensor y0 = head_forward(tape, b, heads_[0], input, /*training=*/false, nullptr);
  return tape.sub(y1, y0);
}

std::vector<double> Model::estimate_ite_values(const GraphContext& ctx, std::span<const double> X,
                                               std::span<const int> T) const {
  const int n = static_cast<int>(T.size());
  Tape tape;
  Tensor x = tape.constant(Shape{n, arch_.cfg.input_dim}, X);
  Bound b = bind(tape);
  Forward f = forward(tape, b, x, T, ctx, /*training=*/false, nullptr);
  Tensor tau = estimate_ite(tape, b, f.U, f.G);
  return std::vector<double>(tau.values().begin(), tau.values().end());
}

}  // namespace hinite
