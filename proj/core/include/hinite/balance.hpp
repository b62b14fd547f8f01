#pragma once

#include <span>
#include <vector>

#include "hinite/tensor.hpp"

namespace hinite {

// Gaussian kernels with bandwidth fixed at 1:
//   K_ij = exp(-||u_i - u_j||^2 / 2),  L_ij = exp(-(t_i - t_j)^2 / 2).
// Both are symmetric with unit diagonal and entries in (0, 1].
struct KernelPair {
  int n = 0;
  std::vector<double> K;  // n x n row-major
  std::vector<double> L;
};

KernelPair kernels(std::span<const double> U, int n, int d, std::span<const int> T);

// Doubly-centered treatment kernel M L M with M = I - (1/N) 11^T. Constant
// with respect to U; exactly zero when all treatments are equal.
std::vector<double> centered_treatment_kernel(std::span<const int> T);

// HSIC_phi(U, T) = (1/N^2) tr(K M L M) as a differentiable tape scalar.
Tensor hsic(Tape& tape, const Tensor& U, std::span<const int> T);

// Value-only convenience for diagnostics and logging.
double hsic_value(std::span<const double> U, int n, int d, std::span<const int> T);

}  // namespace hinite
