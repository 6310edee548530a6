#pragma once

#include <string_view>

#include "bnnr/ops.hpp"
#include "bnnr/rng.hpp"
#include "bnnr/tape.hpp"

namespace bnnr {

// How a stochastic layer draws its pre-activations.
//   bbb     - one weight sample shared by the whole batch
//   lrt     - local reparameterization: per-unit Gaussian pre-activations
//   flipout - shared perturbation decorrelated by per-example sign flips
//   vi      - plain reparameterized weight sampling; same estimator as bbb
enum class InferenceMethod { bbb, lrt, flipout, vi };

std::string_view to_string(InferenceMethod method);
InferenceMethod parse_inference_method(std::string_view text);

struct PriorSpec {
  double mean = 0.0;
  double std = 1.0;

  void validate() const;
};

// Mean-field Gaussian posterior; sigma = softplus(rho) > 0.
class GaussianVariationalParams {
 public:
  GaussianVariationalParams() = default;
  GaussianVariationalParams(Tensor mu, Tensor rho);

  // mu as given, every rho set so that sigma == initial_sigma.
  static GaussianVariationalParams with_sigma(Tensor mu, double initial_sigma);

  const Tensor& mu() const { return mu_; }
  const Tensor& rho() const { return rho_; }
  Tensor& mu() { return mu_; }
  Tensor& rho() { return rho_; }
  const Shape& shape() const { return mu_.shape(); }
  Tensor sigma() const;

 private:
  Tensor mu_;
  Tensor rho_;
};

struct BoundGaussian {
  Var mu;
  Var rho;
};

BoundGaussian bind(Tape& tape, const GaussianVariationalParams& params, bool requires_grad);

// omega = mu + sigma * eps, eps ~ N(0, I).
Tensor sample_weights(const GaussianVariationalParams& params, Rng& rng);
Var sample_weights(Tape& tape, const BoundGaussian& params, Rng& rng);

enum class LinearKind { dense, conv2d };

// dense weights are [in, out]; conv2d weights are [out, in, k, k].
struct LinearGeometry {
  LinearKind kind = LinearKind::dense;
  Conv2dAttrs conv{};
};

Var linear_forward(const LinearGeometry& geometry, Var input, Var weight);
Var linear_forward(const LinearGeometry& geometry, Var input, Var weight, Var bias);

class StochasticLayer {
 public:
  struct Bound {
    BoundGaussian weight;
    BoundGaussian bias;
  };

  StochasticLayer(LinearGeometry geometry, GaussianVariationalParams weight, GaussianVariationalParams bias,
                  PriorSpec prior, InferenceMethod method);

  const LinearGeometry& geometry() const { return geometry_; }
  LinearKind kind() const { return geometry_.kind; }
  const GaussianVariationalParams& weight() const { return weight_; }
  const GaussianVariationalParams& bias() const { return bias_; }
  GaussianVariationalParams& weight() { return weight_; }
  GaussianVariationalParams& bias() { return bias_; }
  const PriorSpec& prior() const { return prior_; }
  InferenceMethod method() const { return method_; }

  Bound bind(Tape& tape, bool requires_grad) const;

  // Samples with the layer's own method.
  Var forward(Tape& tape, const Bound& bound, Var input, Rng& rng) const;
  // Forward pass with every weight at its posterior mean.
  Var forward_mean(Tape& tape, const Bound& bound, Var input) const;

  double kl() const;
  Var kl(Tape& tape, const Bound& bound) const;

 private:
  LinearGeometry geometry_;
  GaussianVariationalParams weight_;
  GaussianVariationalParams bias_;
  PriorSpec prior_;
  InferenceMethod method_;
};

Var forward_bbb(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input, Rng& rng);
Var forward_lrt(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input, Rng& rng);
Var forward_flipout(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input,
                    Rng& rng);

// Closed-form KL(q || p) summed over all entries.
double kl_gaussian(const GaussianVariationalParams& params, const PriorSpec& prior);
Var kl_gaussian(Tape& tape, const BoundGaussian& params, const PriorSpec& prior);

// nll + beta * kl
double elbo_loss(double nll, double kl, double beta);
Var elbo_loss(Var nll, Var kl, double beta);

}  // namespace bnnr
