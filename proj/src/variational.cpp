#include "bnnr/variational.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bnnr {
namespace {

// Per-(example, channel) random signs broadcast over the remaining axes.
Tensor channel_signs(const Shape& shape, Rng& rng) {
  const std::size_t n = shape.at(0), c = shape.at(1);
  const std::size_t inner = shape_size(shape) / (n * c);
  std::bernoulli_distribution coin(0.5);
  Tensor out(shape);
  for (std::size_t i = 0; i < n * c; ++i) {
    const double s = coin(rng) ? 1.0 : -1.0;
    for (std::size_t p = 0; p < inner; ++p) out[i * inner + p] = s;
  }
  return out;
}

}  // namespace

std::string_view to_string(InferenceMethod method) {
  switch (method) {
    case InferenceMethod::bbb: return "BBB";
    case InferenceMethod::lrt: return "LRT";
    case InferenceMethod::flipout: return "Flipout";
    case InferenceMethod::vi: return "VI";
  }
  return "?";
}

InferenceMethod parse_inference_method(std::string_view text) {
  std::string lower(text);
  for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "bbb") return InferenceMethod::bbb;
  if (lower == "lrt") return InferenceMethod::lrt;
  if (lower == "flipout") return InferenceMethod::flipout;
  if (lower == "vi") return InferenceMethod::vi;
  throw std::invalid_argument("unknown inference method '" + std::string(text) + "'");
}

void PriorSpec::validate() const {
  if (!(std > 0.0) || !std::isfinite(std)) throw std::invalid_argument("prior std must be positive");
  if (!std::isfinite(mean)) throw std::invalid_argument("prior mean must be finite");
}

GaussianVariationalParams::GaussianVariationalParams(Tensor mu, Tensor rho) : mu_(std::move(mu)), rho_(std::move(rho)) {
  if (mu_.shape() != rho_.shape()) {
    throw ShapeError("variational params: mu " + shape_string(mu_.shape()) + " and rho " + shape_string(rho_.shape()) +
                     " differ");
  }
}

GaussianVariationalParams GaussianVariationalParams::with_sigma(Tensor mu, double initial_sigma) {
  Tensor rho(mu.shape(), inverse_softplus(initial_sigma));
  return {std::move(mu), std::move(rho)};
}

Tensor GaussianVariationalParams::sigma() const {
  Tensor out = rho_;
  for (double& v : out.data()) v = softplus(v);
  return out;
}

BoundGaussian bind(Tape& tape, const GaussianVariationalParams& params, bool requires_grad) {
  return {tape.leaf(params.mu(), requires_grad), tape.leaf(params.rho(), requires_grad)};
}

Tensor sample_weights(const GaussianVariationalParams& params, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out = params.mu();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += softplus(params.rho()[i]) * normal(rng);
  return out;
}

Var sample_weights(Tape& tape, const BoundGaussian& params, Rng& rng) {
  const Var eps = tape.constant(randn(params.mu.shape(), rng));
  return add(params.mu, mul(softplus(params.rho), eps));
}

Var linear_forward(const LinearGeometry& geometry, Var input, Var weight) {
  switch (geometry.kind) {
    case LinearKind::dense: return matmul(input, weight);
    case LinearKind::conv2d: return conv2d(input, weight, geometry.conv);
  }
  throw std::invalid_argument("unsupported linear layer kind");
}

Var linear_forward(const LinearGeometry& geometry, Var input, Var weight, Var bias) {
  return add_bias(linear_forward(geometry, input, weight), bias);
}

StochasticLayer::StochasticLayer(LinearGeometry geometry, GaussianVariationalParams weight,
                                 GaussianVariationalParams bias, PriorSpec prior, InferenceMethod method)
    : geometry_(geometry), weight_(std::move(weight)), bias_(std::move(bias)), prior_(prior), method_(method) {
  prior_.validate();
  const std::size_t out_units = geometry_.kind == LinearKind::dense ? weight_.mu().dim(1) : weight_.mu().dim(0);
  if (bias_.mu().rank() != 1 || bias_.mu().dim(0) != out_units) {
    throw ShapeError("stochastic layer: bias " + shape_string(bias_.shape()) + " does not match " +
                     std::to_string(out_units) + " output units");
  }
}

StochasticLayer::Bound StochasticLayer::bind(Tape& tape, bool requires_grad) const {
  return {bnnr::bind(tape, weight_, requires_grad), bnnr::bind(tape, bias_, requires_grad)};
}

Var StochasticLayer::forward(Tape& tape, const Bound& bound, Var input, Rng& rng) const {
  switch (method_) {
    case InferenceMethod::bbb:
    case InferenceMethod::vi: return forward_bbb(*this, tape, bound, input, rng);
    case InferenceMethod::lrt: return forward_lrt(*this, tape, bound, input, rng);
    case InferenceMethod::flipout: return forward_flipout(*this, tape, bound, input, rng);
  }
  throw std::invalid_argument("unknown inference method");
}

Var StochasticLayer::forward_mean(Tape&, const Bound& bound, Var input) const {
  return linear_forward(geometry_, input, bound.weight.mu, bound.bias.mu);
}

double StochasticLayer::kl() const { return kl_gaussian(weight_, prior_) + kl_gaussian(bias_, prior_); }

Var StochasticLayer::kl(Tape& tape, const Bound& bound) const {
  return add(kl_gaussian(tape, bound.weight, prior_), kl_gaussian(tape, bound.bias, prior_));
}

Var forward_bbb(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input, Rng& rng) {
  const Var w = sample_weights(tape, bound.weight, rng);
  const Var b = sample_weights(tape, bound.bias, rng);
  return linear_forward(layer.geometry(), input, w, b);
}

Var forward_lrt(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input, Rng& rng) {
  if (layer.kind() != LinearKind::dense && layer.kind() != LinearKind::conv2d) {
    throw std::invalid_argument("local reparameterization needs a dense or conv2d layer");
  }
  const Var mean = linear_forward(layer.geometry(), input, bound.weight.mu, bound.bias.mu);
  const Var weight_var = square(softplus(bound.weight.rho));
  const Var bias_var = square(softplus(bound.bias.rho));
  const Var var = add_bias(linear_forward(layer.geometry(), square(input), weight_var), bias_var);
  const Var eps = tape.constant(randn(mean.shape(), rng));
  return add(mean, mul(sqrt(var), eps));
}

Var forward_flipout(const StochasticLayer& layer, Tape& tape, const StochasticLayer::Bound& bound, Var input,
                    Rng& rng) {
  const Shape in_shape = input.shape();
  if (in_shape.size() < 2) throw ShapeError("flipout: input needs a batch axis, got " + shape_string(in_shape));
  const Var mean = linear_forward(layer.geometry(), input, bound.weight.mu);
  const Var delta = mul(softplus(bound.weight.rho), tape.constant(randn(bound.weight.mu.shape(), rng)));
  const Var sign_in = tape.constant(channel_signs(in_shape, rng));
  const Var raw = linear_forward(layer.geometry(), mul(input, sign_in), delta);
  const Var sign_out = tape.constant(channel_signs(raw.shape(), rng));
  const Var b = sample_weights(tape, bound.bias, rng);
  return add_bias(add(mean, mul(raw, sign_out)), b);
}

double kl_gaussian(const GaussianVariationalParams& params, const PriorSpec& prior) {
  prior.validate();
  const double prior_var = prior.std * prior.std;
  double total = 0.0;
  for (std::size_t i = 0; i < params.mu().size(); ++i) {
    const double sigma = softplus(params.rho()[i]);
    const double diff = params.mu()[i] - prior.mean;
    total += std::log(prior.std / sigma) + (sigma * sigma + diff * diff) / (2.0 * prior_var) - 0.5;
  }
  return total;
}

Var kl_gaussian(Tape& tape, const BoundGaussian& params, const PriorSpec& prior) {
  prior.validate();
  GaussianVariationalParams values(params.mu.value(), params.rho.value());
  const double value = kl_gaussian(values, prior);
  const Var mu = params.mu;
  const Var rho = params.rho;
  return tape.record("kl_gaussian", Tensor::scalar(value), {mu, rho}, [mu, rho, prior](Tape& t, const Tensor& g) {
    const double scale = g.item();
    const double prior_var = prior.std * prior.std;
    const Tensor& m = t.value(mu);
    const Tensor& r = t.value(rho);
    if (t.wants_grad(mu)) {
      Tensor dmu = m;
      for (std::size_t i = 0; i < dmu.size(); ++i) dmu[i] = scale * (m[i] - prior.mean) / prior_var;
      t.accumulate(mu, dmu);
    }
    if (t.wants_grad(rho)) {
      Tensor drho = r;
      for (std::size_t i = 0; i < drho.size(); ++i) {
        const double sigma = softplus(r[i]);
        const double dsigma = 1.0 / (1.0 + std::exp(-r[i]));
        drho[i] = scale * (-1.0 / sigma + sigma / prior_var) * dsigma;
      }
      t.accumulate(rho, drho);
    }
  });
}

double elbo_loss(double nll, double kl, double beta) {
  if (beta < 0.0) throw std::invalid_argument("KL weight beta must be non-negative");
  return nll + beta * kl;
}

Var elbo_loss(Var nll, Var kl, double beta) {
  if (beta < 0.0) throw std::invalid_argument("KL weight beta must be non-negative");
  return add(nll, scale(kl, beta));
}

}  // namespace bnnr
