#include "hinite/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace hinite {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

MatMap cmap(std::span<const double> v, const Shape& s) {
  return MatMap(v.data(), s.rows, s.cols);
}

MatMapMut mmap(std::span<double> v, const Shape& s) {
  return MatMapMut(v.data(), s.rows, s.cols);
}

void check_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b)) {
    throw DimensionError(std::string(op) + ": shapes " + a.str() + " and " + b.str() + " differ");
  }
}

void check_segments(const Segments& seg, int entries) {
  if (seg.offsets.size() < 2 || seg.offsets.front() != 0 || seg.offsets.back() != entries) {
    throw ContractViolation("segments do not cover the " + std::to_string(entries) + " entries");
  }
  for (std::size_t s = 0; s + 1 < seg.offsets.size(); ++s) {
    if (seg.offsets[s + 1] <= seg.offsets[s]) {
      throw ContractViolation("empty segment " + std::to_string(s));
    }
  }
}

}  // namespace

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }

std::span<const double> Tensor::values() const { return tape_->node(id_).val; }

std::span<const double> Tensor::grad() const {
  const auto& n = tape_->node(id_);
  if (!n.needs) {
    throw ContractViolation("gradient requested for a node without requires_grad");
  }
  return n.grad;
}

double Tensor::at(int r, int c) const {
  const auto& n = tape_->node(id_);
  return n.val[static_cast<std::size_t>(r) * n.shape.cols + c];
}

double Tensor::scalar() const {
  const auto& n = tape_->node(id_);
  if (n.shape.size() != 1) {
    throw ContractViolation("scalar() on tensor of shape " + n.shape.str());
  }
  return n.val[0];
}

bool Tensor::requires_grad() const { return tape_->node(id_).needs; }

Tensor Tape::alloc(const Shape& shape, bool needs) {
  if (live_ == static_cast<int>(nodes_.size())) {
    nodes_.emplace_back();
  }
  Node& n = nodes_[static_cast<std::size_t>(live_)];
  n.shape = shape;
  n.val.resize(static_cast<std::size_t>(shape.size()));
  n.grad.clear();
  n.aux_i.clear();
  n.aux_d.clear();
  n.needs = needs;
  n.back = nullptr;
  return Tensor(this, live_++);
}

std::span<double> Tape::val_mut(int id) { return node(id).val; }

std::span<double> Tape::grad_of(int id) { return node(id).grad; }

void Tape::reset() { live_ = 0; }

Tensor Tape::leaf(const Shape& shape, std::span<const double> values, bool requires_grad) {
  if (static_cast<long long>(values.size()) != shape.size()) {
    throw DimensionError("leaf: " + std::to_string(values.size()) + " values for shape " + shape.str());
  }
  Tensor t = alloc(shape, requires_grad);
  std::copy(values.begin(), values.end(), node(t.id_).val.begin());
  return t;
}

Tensor Tape::scalar_leaf(double v, bool requires_grad) {
  return leaf(Shape{1, 1}, std::span<const double>(&v, 1), requires_grad);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = node(a.id_).shape;
  const Shape& sb = node(b.id_).shape;
  if (sa.cols != sb.rows) {
    throw DimensionError("matmul: " + sa.str() + " x " + sb.str());
  }
  Tensor out = alloc(Shape{sa.rows, sb.cols}, req(a.id_) || req(b.id_));
  mmap(val_mut(out.id_), node(out.id_).shape).noalias() =
      cmap(node(a.id_).val, sa) * cmap(node(b.id_).val, sb);
  int ia = a.id_, ib = b.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const Shape& sa = node(ia).shape;
    const Shape& sb = node(ib).shape;
    const Shape& so = node(io).shape;
    auto dc = cmap(node(io).grad, so);
    if (req(ia)) {
      mmap(grad_of(ia), sa).noalias() += dc * cmap(node(ib).val, sb).transpose();
    }
    if (req(ib)) {
      mmap(grad_of(ib), sb).noalias() += cmap(node(ia).val, sa).transpose() * dc;
    }
  };
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", node(a.id_).shape, node(b.id_).shape);
  Tensor out = alloc(node(a.id_).shape, req(a.id_) || req(b.id_));
  const auto& va = node(a.id_).val;
  const auto& vb = node(b.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] + vb[i];
  int ia = a.id_, ib = b.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const auto& d = node(io).grad;
    if (req(ia)) {
      auto g = grad_of(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
    if (req(ib)) {
      auto g = grad_of(ib);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
  };
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", node(a.id_).shape, node(b.id_).shape);
  Tensor out = alloc(node(a.id_).shape, req(a.id_) || req(b.id_));
  const auto& va = node(a.id_).val;
  const auto& vb = node(b.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] - vb[i];
  int ia = a.id_, ib = b.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const auto& d = node(io).grad;
    if (req(ia)) {
      auto g = grad_of(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
    if (req(ib)) {
      auto g = grad_of(ib);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] -= d[i];
    }
  };
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", node(a.id_).shape, node(b.id_).shape);
  Tensor out = alloc(node(a.id_).shape, req(a.id_) || req(b.id_));
  const auto& va = node(a.id_).val;
  const auto& vb = node(b.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * vb[i];
  int ia = a.id_, ib = b.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const auto& d = node(io).grad;
    if (req(ia)) {
      auto g = grad_of(ia);
      const auto& vb = node(ib).val;
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * vb[i];
    }
    if (req(ib)) {
      auto g = grad_of(ib);
      const auto& va = node(ia).val;
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * va[i];
    }
  };
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = alloc(node(a.id_).shape, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = c * va[i];
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io, c] {
    if (!req(ia)) return;
    const auto& d = node(io).grad;
    auto g = grad_of(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += c * d[i];
  };
  return out;
}

Tensor Tape::scale_by(const Tensor& a, const Tensor& s) {
  if (node(s.id_).shape.size() != 1) {
    throw DimensionError("scale_by: scale must be 1x1, got " + node(s.id_).shape.str());
  }
  Tensor out = alloc(node(a.id_).shape, req(a.id_) || req(s.id_));
  const double c = node(s.id_).val[0];
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = c * va[i];
  int ia = a.id_, is = s.id_, io = out.id_;
  node(io).back = [this, ia, is, io] {
    const auto& d = node(io).grad;
    const double c = node(is).val[0];
    if (req(ia)) {
      auto g = grad_of(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += c * d[i];
    }
    if (req(is)) {
      const auto& va = node(ia).val;
      double acc = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * va[i];
      grad_of(is)[0] += acc;
    }
  };
  return out;
}

Tensor Tape::add_row_bias(const Tensor& a, const Tensor& bias) {
  const Shape& sa = node(a.id_).shape;
  const Shape& sb = node(bias.id_).shape;
  if (sb.rows != 1 || sb.cols != sa.cols) {
    throw DimensionError("add_row_bias: " + sa.str() + " with bias " + sb.str());
  }
  Tensor out = alloc(sa, req(a.id_) || req(bias.id_));
  const auto& va = node(a.id_).val;
  const auto& vb = node(bias.id_).val;
  auto vo = val_mut(out.id_);
  for (int r = 0; r < sa.rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
    for (int c = 0; c < sa.cols; ++c) vo[base + c] = va[base + c] + vb[static_cast<std::size_t>(c)];
  }
  int ia = a.id_, ib = bias.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    if (req(ia)) {
      auto g = grad_of(ia);
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
    if (req(ib)) {
      auto g = grad_of(ib);
      for (int r = 0; r < sa.rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
        for (int c = 0; c < sa.cols; ++c) g[static_cast<std::size_t>(c)] += d[base + c];
      }
    }
  };
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out = alloc(node(a.id_).shape, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] > 0.0 ? va[i] : 0.0;
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io] {
    if (!req(ia)) return;
    const auto& d = node(io).grad;
    const auto& va = node(ia).val;
    auto g = grad_of(ia);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (va[i] > 0.0) g[i] += d[i];
    }
  };
  return out;
}

Tensor Tape::leaky_relu(const Tensor& a, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ContractViolation("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
  }
  Tensor out = alloc(node(a.id_).shape, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] > 0.0 ? va[i] : slope * va[i];
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io, slope] {
    if (!req(ia)) return;
    const auto& d = node(io).grad;
    const auto& va = node(ia).val;
    auto g = grad_of(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += (va[i] > 0.0 ? 1.0 : slope) * d[i];
  };
  return out;
}

Tensor Tape::exp(const Tensor& a) {
  Tensor out = alloc(node(a.id_).shape, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = std::exp(va[i]);
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io] {
    if (!req(ia)) return;
    const auto& d = node(io).grad;
    const auto& vo = node(io).val;
    auto g = grad_of(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += vo[i] * d[i];
  };
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  const Shape& sa = node(a.id_).shape;
  const Shape& sb = node(b.id_).shape;
  if (sa.rows != sb.rows) {
    throw DimensionError("concat_cols: " + sa.str() + " with " + sb.str());
  }
  Shape so{sa.rows, sa.cols + sb.cols};
  Tensor out = alloc(so, req(a.id_) || req(b.id_));
  const auto& va = node(a.id_).val;
  const auto& vb = node(b.id_).val;
  auto vo = val_mut(out.id_);
  for (int r = 0; r < so.rows; ++r) {
    std::copy_n(va.begin() + static_cast<std::size_t>(r) * sa.cols, sa.cols,
                vo.begin() + static_cast<std::size_t>(r) * so.cols);
    std::copy_n(vb.begin() + static_cast<std::size_t>(r) * sb.cols, sb.cols,
                vo.begin() + static_cast<std::size_t>(r) * so.cols + sa.cols);
  }
  int ia = a.id_, ib = b.id_, io = out.id_;
  node(io).back = [this, ia, ib, io] {
    const Shape& sa = node(ia).shape;
    const Shape& sb = node(ib).shape;
    const Shape& so = node(io).shape;
    const auto& d = node(io).grad;
    for (int r = 0; r < so.rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * so.cols;
      if (req(ia)) {
        auto g = grad_of(ia);
        for (int c = 0; c < sa.cols; ++c) g[static_cast<std::size_t>(r) * sa.cols + c] += d[base + c];
      }
      if (req(ib)) {
        auto g = grad_of(ib);
        for (int c = 0; c < sb.cols; ++c) g[static_cast<std::size_t>(r) * sb.cols + c] += d[base + sa.cols + c];
      }
    }
  };
  return out;
}

Tensor Tape::gather_rows(const Tensor& a, std::span<const int> idx) {
  const Shape& sa = node(a.id_).shape;
  for (int i : idx) {
    if (i < 0 || i >= sa.rows) {
      throw IndexError("gather_rows: row " + std::to_string(i) + " out of " + std::to_string(sa.rows));
    }
  }
  Tensor out = alloc(Shape{static_cast<int>(idx.size()), sa.cols}, req(a.id_));
  Node& no = node(out.id_);
  no.aux_i.assign(idx.begin(), idx.end());
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(va.begin() + static_cast<std::size_t>(idx[k]) * sa.cols, sa.cols,
                vo.begin() + k * sa.cols);
  }
  int ia = a.id_, io = out.id_;
  no.back = [this, ia, io] {
    if (!req(ia)) return;
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    const auto& idx = node(io).aux_i;
    auto g = grad_of(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t src = k * sa.cols;
      const std::size_t dst = static_cast<std::size_t>(idx[k]) * sa.cols;
      for (int c = 0; c < sa.cols; ++c) g[dst + c] += d[src + c];
    }
  };
  return out;
}

Tensor Tape::column(const Tensor& a, int j) {
  const Shape& sa = node(a.id_).shape;
  if (j < 0 || j >= sa.cols) {
    throw IndexError("column: " + std::to_string(j) + " out of " + std::to_string(sa.cols));
  }
  Tensor out = alloc(Shape{sa.rows, 1}, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (int r = 0; r < sa.rows; ++r) vo[static_cast<std::size_t>(r)] = va[static_cast<std::size_t>(r) * sa.cols + j];
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io, j] {
    if (!req(ia)) return;
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    auto g = grad_of(ia);
    for (int r = 0; r < sa.rows; ++r) g[static_cast<std::size_t>(r) * sa.cols + j] += d[static_cast<std::size_t>(r)];
  };
  return out;
}

Tensor Tape::scale_rows(const Tensor& a, const Tensor& w) {
  const Shape& sa = node(a.id_).shape;
  const Shape& sw = node(w.id_).shape;
  if (sw.rows != sa.rows || sw.cols != 1) {
    throw DimensionError("scale_rows: " + sa.str() + " with weights " + sw.str());
  }
  Tensor out = alloc(sa, req(a.id_) || req(w.id_));
  const auto& va = node(a.id_).val;
  const auto& vw = node(w.id_).val;
  auto vo = val_mut(out.id_);
  for (int r = 0; r < sa.rows; ++r) {
    const double c = vw[static_cast<std::size_t>(r)];
    const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
    for (int k = 0; k < sa.cols; ++k) vo[base + k] = c * va[base + k];
  }
  int ia = a.id_, iw = w.id_, io = out.id_;
  node(io).back = [this, ia, iw, io] {
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    const auto& va = node(ia).val;
    const auto& vw = node(iw).val;
    if (req(ia)) {
      auto g = grad_of(ia);
      for (int r = 0; r < sa.rows; ++r) {
        const double c = vw[static_cast<std::size_t>(r)];
        const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
        for (int k = 0; k < sa.cols; ++k) g[base + k] += c * d[base + k];
      }
    }
    if (req(iw)) {
      auto g = grad_of(iw);
      for (int r = 0; r < sa.rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
        double acc = 0.0;
        for (int k = 0; k < sa.cols; ++k) acc += d[base + k] * va[base + k];
        g[static_cast<std::size_t>(r)] += acc;
      }
    }
  };
  return out;
}

Tensor Tape::segment_sum_rows(const Tensor& a, const Segments& seg) {
  const Shape& sa = node(a.id_).shape;
  check_segments(seg, sa.rows);
  Tensor out = alloc(Shape{seg.count(), sa.cols}, req(a.id_));
  Node& no = node(out.id_);
  no.aux_i = seg.offsets;
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  std::fill(vo.begin(), vo.end(), 0.0);
  for (int s = 0; s < seg.count(); ++s) {
    const std::size_t dst = static_cast<std::size_t>(s) * sa.cols;
    for (int e = seg.offsets[s]; e < seg.offsets[s + 1]; ++e) {
      const std::size_t src = static_cast<std::size_t>(e) * sa.cols;
      for (int c = 0; c < sa.cols; ++c) vo[dst + c] += va[src + c];
    }
  }
  int ia = a.id_, io = out.id_;
  no.back = [this, ia, io] {
    if (!req(ia)) return;
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    const auto& off = node(io).aux_i;
    auto g = grad_of(ia);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const std::size_t src = s * sa.cols;
      for (int e = off[s]; e < off[s + 1]; ++e) {
        const std::size_t dst = static_cast<std::size_t>(e) * sa.cols;
        for (int c = 0; c < sa.cols; ++c) g[dst + c] += d[src + c];
      }
    }
  };
  return out;
}

Tensor Tape::segment_softmax(const Tensor& logits, const Segments& seg) {
  const Shape& sa = node(logits.id_).shape;
  if (sa.cols != 1) {
    throw DimensionError("segment_softmax: logits must be Ex1, got " + sa.str());
  }
  check_segments(seg, sa.rows);
  Tensor out = alloc(sa, req(logits.id_));
  Node& no = node(out.id_);
  no.aux_i = seg.offsets;
  const auto& vl = node(logits.id_).val;
  auto vo = val_mut(out.id_);
  for (int s = 0; s < seg.count(); ++s) {
    const int b = seg.offsets[s], e = seg.offsets[s + 1];
    double mx = vl[static_cast<std::size_t>(b)];
    for (int k = b + 1; k < e; ++k) mx = std::max(mx, vl[static_cast<std::size_t>(k)]);
    if (!std::isfinite(mx)) {
      throw ContractViolation("segment_softmax: non-finite logit in segment " + std::to_string(s));
    }
    double z = 0.0;
    for (int k = b; k < e; ++k) {
      const double v = std::exp(vl[static_cast<std::size_t>(k)] - mx);
      vo[static_cast<std::size_t>(k)] = v;
      z += v;
    }
    for (int k = b; k < e; ++k) vo[static_cast<std::size_t>(k)] /= z;
  }
  int il = logits.id_, io = out.id_;
  no.back = [this, il, io] {
    if (!req(il)) return;
    const auto& d = node(io).grad;
    const auto& y = node(io).val;
    const auto& off = node(io).aux_i;
    auto g = grad_of(il);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      double dot = 0.0;
      for (int k = off[s]; k < off[s + 1]; ++k) dot += d[static_cast<std::size_t>(k)] * y[static_cast<std::size_t>(k)];
      for (int k = off[s]; k < off[s + 1]; ++k) {
        g[static_cast<std::size_t>(k)] += y[static_cast<std::size_t>(k)] * (d[static_cast<std::size_t>(k)] - dot);
      }
    }
  };
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  const Shape& sa = node(a.id_).shape;
  Tensor out = alloc(sa, req(a.id_));
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  for (int r = 0; r < sa.rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
    double mx = va[base];
    for (int c = 1; c < sa.cols; ++c) mx = std::max(mx, va[base + c]);
    double z = 0.0;
    for (int c = 0; c < sa.cols; ++c) {
      const double v = std::exp(va[base + c] - mx);
      vo[base + c] = v;
      z += v;
    }
    for (int c = 0; c < sa.cols; ++c) vo[base + c] /= z;
  }
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io] {
    if (!req(ia)) return;
    const Shape& sa = node(ia).shape;
    const auto& d = node(io).grad;
    const auto& y = node(io).val;
    auto g = grad_of(ia);
    for (int r = 0; r < sa.rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * sa.cols;
      double dot = 0.0;
      for (int c = 0; c < sa.cols; ++c) dot += d[base + c] * y[base + c];
      for (int c = 0; c < sa.cols; ++c) g[base + c] += y[base + c] * (d[base + c] - dot);
    }
  };
  return out;
}

Tensor Tape::pairwise_sqdist(const Tensor& a) {
  const Shape& sa = node(a.id_).shape;
  const int n = sa.rows;
  Tensor out = alloc(Shape{n, n}, req(a.id_));
  auto U = cmap(node(a.id_).val, sa);
  auto D = mmap(val_mut(out.id_), node(out.id_).shape);
  Eigen::VectorXd r = U.rowwise().squaredNorm();
  D.noalias() = -2.0 * (U * U.transpose());
  D.colwise() += r;
  D.rowwise() += r.transpose();
  // Exact zeros where they are structural; tiny negatives come from rounding.
  D = D.cwiseMax(0.0);
  D.diagonal().setZero();
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io] {
    if (!req(ia)) return;
    const Shape& sa = node(ia).shape;
    auto U = cmap(node(ia).val, sa);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> S =
        cmap(node(io).grad, node(io).shape);
    S.diagonal().setZero();  // forced-zero diagonal carries no derivative
    S += S.transpose().eval();
    Eigen::VectorXd rowsum = S.rowwise().sum();
    mmap(grad_of(ia), sa).noalias() += 2.0 * (rowsum.asDiagonal() * U - S * U);
  };
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out = alloc(Shape{1, 1}, req(a.id_));
  const auto& va = node(a.id_).val;
  double acc = 0.0;
  for (double v : va) acc += v;
  val_mut(out.id_)[0] = acc;
  int ia = a.id_, io = out.id_;
  node(io).back = [this, ia, io] {
    if (!req(ia)) return;
    const double d = node(io).grad[0];
    auto g = grad_of(ia);
    for (auto& v : g) v += d;
  };
  return out;
}

Tensor Tape::mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(node(a.id_).shape.size());
  return scale(sum(a), inv);
}

Tensor Tape::dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractViolation("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) {
    return a;  // identity, no RNG draw
  }
  Tensor out = alloc(node(a.id_).shape, req(a.id_));
  Node& no = node(out.id_);
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  std::bernoulli_distribution keep_draw(keep);
  const auto& va = node(a.id_).val;
  auto vo = val_mut(out.id_);
  no.aux_d.resize(vo.size());
  for (std::size_t i = 0; i < vo.size(); ++i) {
    no.aux_d[i] = keep_draw(rng) ? inv_keep : 0.0;
    vo[i] = va[i] * no.aux_d[i];
  }
  int ia = a.id_, io = out.id_;
  no.back = [this, ia, io] {
    if (!req(ia)) return;
    const auto& d = node(io).grad;
    const auto& m = node(io).aux_d;
    auto g = grad_of(ia);
    for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i] * m[i];
  };
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) {
    throw ContractViolation("backward: loss lives on another tape");
  }
  if (node(loss.id_).shape.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " + node(loss.id_).shape.str());
  }
  for (int id = 0; id < live_; ++id) {
    Node& n = node(id);
    if (n.needs) {
      n.grad.assign(n.val.size(), 0.0);
    }
  }
  if (!node(loss.id_).needs) {
    return;  // constant loss: all gradients stay zero
  }
  node(loss.id_).grad[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = node(id);
    if (n.needs && n.back) {
      n.back();
    }
  }
}

}  // namespace hinite
