#include "hinite/balance.hpp"

#include <cmath>

namespace hinite {

std::vector<double> centered_treatment_kernel(std::span<const int> T) {
  const int n = static_cast<int>(T.size());
  if (n < 1) {
    throw ContractViolation("centered_treatment_kernel: empty treatment vector");
  }
  const double off = std::exp(-0.5);
  std::vector<double> L(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      L[static_cast<std::size_t>(i) * n + j] = T[static_cast<std::size_t>(i)] == T[static_cast<std::size_t>(j)] ? 1.0 : off;
    }
  }
  std::vector<double> rowsum(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) rowsum[static_cast<std::size_t>(i)] += L[static_cast<std::size_t>(i) * n + j];
    total += rowsum[static_cast<std::size_t>(i)];
  }
  const double inv_n = 1.0 / n;
  const double grand = total / (static_cast<double>(n) * n);
  // MLM written as L_ij - r_i/N - r_j/N + s/N^2; for constant T every term
  // is exactly 1, so the result is exactly zero.
  std::vector<double> C(L.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      C[static_cast<std::size_t>(i) * n + j] = L[static_cast<std::size_t>(i) * n + j] -
                                               rowsum[static_cast<std::size_t>(i)] * inv_n -
                                               rowsum[static_cast<std::size_t>(j)] * inv_n + grand;
    }
  }
  return C;
}

Tensor hsic(Tape& tape, const Tensor& U, std::span<const int> T) {
  const int n = U.shape().rows;
  if (n != static_cast<int>(T.size())) {
    throw DimensionError("hsic: " + std::to_string(n) + " representations vs " +
                         std::to_string(T.size()) + " treatments");
  }
  Tensor dist = tape.pairwise_sqdist(U);
  Tensor K = tape.exp(tape.scale(dist, -0.5));
  std::vector<double> C = centered_treatment_kernel(T);
  Tensor Cc = tape.constant(Shape{n, n}, C);
  return tape.scale(tape.sum(tape.mul(K, Cc)), 1.0 / (static_cast<double>(n) * n));
}

KernelPair kernels(std::span<const double> U, int n, int d, std::span<const int> T) {
  if (static_cast<long long>(U.size()) != static_cast<long long>(n) * d ||
      static_cast<int>(T.size()) != n) {
    throw DimensionError("kernels: inconsistent sizes for n=" + std::to_string(n));
  }
  KernelPair out;
  out.n = n;
  Tape tape;
  Tensor u = tape.constant(Shape{n, d}, U);
  Tensor K = tape.exp(tape.scale(tape.pairwise_sqdist(u), -0.5));
  out.K.assign(K.values().begin(), K.values().end());
  const double off = std::exp(-0.5);
  out.L.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.L[static_cast<std::size_t>(i) * n + j] = T[static_cast<std::size_t>(i)] == T[static_cast<std::size_t>(j)] ? 1.0 : off;
    }
  }
  return out;
}

double hsic_value(std::span<const double> U, int n, int d, std::span<const int> T) {
  Tape tape;
  Tensor u = tape.constant(Shape{n, d}, U);
  return hsic(tape, u, T).scalar();
}

}  // namespace hinite
