#pragma once

#include <cstddef>
#include <span>

#include "bnnr/tape.hpp"

namespace bnnr {

struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Pool2dAttrs {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

enum class Reduction { mean, sum };

// a[m,k] x b[k,n] -> [m,n]
Var matmul(Var a, Var b);
// x[N,C,H,W] * w[O,C,kh,kw] -> [N,O,Ho,Wo] (cross-correlation, zero padding)
Var conv2d(Var x, Var w, Conv2dAttrs attrs = {});
Var maxpool2d(Var x, Pool2dAttrs attrs = {});
// Subgradient 0 at 0.
Var relu(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Adds b[C] along axis 1 of x[N,C,...].
Var add_bias(Var x, Var b);
Var scale(Var x, double factor);
Var flatten(Var x);
Var square(Var x);
// Defined for x >= 0; the derivative at 0 is taken as 0.
Var sqrt(Var x);
Var softplus(Var x);
Var sum(Var x);

// Cross-entropy of softmax(logits[N,K]) against integer labels, stabilized
// with log-sum-exp. Returns a scalar (batch mean or batch sum).
Var softmax_cross_entropy(Var logits, std::span<const int> labels, Reduction reduction = Reduction::mean);

// Row-wise softmax probabilities (no tape).
Tensor softmax(const Tensor& logits);
double softplus(double x);
double inverse_softplus(double y);

// Dense helpers shared with the layers and attacks.
namespace kernels {
// c[m,n] (+)= a[m,k] b[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);
// c[m,n] (+)= a[k,m]^T b[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);
// c[m,n] (+)= a[m,k] b[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);
}  // namespace kernels

}  // namespace bnnr
