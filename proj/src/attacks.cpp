#include "bnnr/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "bnnr/archive.hpp"
#include "bnnr/inference.hpp"

namespace bnnr {
namespace {

void check_batch(const Tensor& x, std::span<const int> y) {
  if (x.rank() < 2) throw ShapeError("attack input must be a batch [N, ...], got " + shape_string(x.shape()));
  if (y.size() != x.dim(0)) {
    throw ShapeError("attack got " + std::to_string(y.size()) + " labels for a batch of " + std::to_string(x.dim(0)));
  }
}

void check_steps(std::size_t steps, double step_size) {
  if (steps == 0) throw std::invalid_argument("attack steps must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("attack step size must be > 0");
}

// x + scale * sign(direction), projected.
Tensor signed_step(const Tensor& current, const Tensor& direction, double scale, const Tensor& origin,
                   const ThreatModel& tm) {
  Tensor next = current;
  auto out = next.data();
  auto d = direction.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * sign(d[i]);
  return project_linf(next, origin, tm);
}

std::size_t sample_size(const Tensor& x) { return x.size() / x.dim(0); }

Tensor sample_shape_tensor(const Tensor& x, std::size_t rows) {
  Shape s = x.shape();
  s[0] = rows;
  return Tensor(s);
}

// Copies row `src_row` of src into row `dst_row` of dst (same per-sample size).
void copy_row(const Tensor& src, std::size_t src_row, Tensor& dst, std::size_t dst_row) {
  const std::size_t n = sample_size(src);
  std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(src_row * n), n,
              dst.data().begin() + static_cast<std::ptrdiff_t>(dst_row * n));
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
  Tensor out = sample_shape_tensor(src, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) copy_row(src, rows[i], out, i);
  return out;
}

double l2_norm_squared(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

}  // namespace

void ThreatModel::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("threat model epsilon must be finite and >= 0, got " + std::to_string(epsilon));
  }
  if (!(pixel_min < pixel_max)) throw std::invalid_argument("threat model pixel bounds must satisfy min < max");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor project_linf(const Tensor& candidate, const Tensor& origin, const ThreatModel& tm) {
  if (candidate.shape() != origin.shape()) {
    throw ShapeError("projection shape mismatch: " + shape_string(candidate.shape()) + " vs " +
                     shape_string(origin.shape()));
  }
  Tensor out = candidate;
  auto o = out.data();
  auto x = origin.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double v = std::min(std::max(o[i], x[i] - tm.epsilon), x[i] + tm.epsilon);
    o[i] = std::min(std::max(v, tm.pixel_min), tm.pixel_max);
  }
  return out;
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("linf_distance size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<AttackResult> package_results(const LabelOracle& oracle, const Tensor& x, const Tensor& x_adv,
                                          std::span<const int> labels, std::size_t queries_per_sample) {
  check_batch(x_adv, labels);
  if (x.shape() != x_adv.shape()) throw ShapeError("adversarial batch shape differs from the clean batch");
  const std::vector<int> predicted = oracle.predict(x_adv);
  std::vector<AttackResult> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i].x_adv = x_adv.slice(i);
    out[i].linf_distance = linf_distance(out[i].x_adv.data(), x.slice(i).data());
    out[i].success = predicted[i] != labels[i];
    out[i].queries = queries_per_sample;
  }
  return out;
}

Tensor stack_adversarials(std::span<const AttackResult> results) {
  if (results.empty()) throw std::invalid_argument("no adversarial results to stack");
  std::vector<Tensor> items;
  items.reserve(results.size());
  for (const auto& r : results) items.push_back(r.x_adv);
  return stack(items);
}

std::vector<AttackResult> fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                               const ThreatModel& tm) {
  tm.validate();
  check_batch(x, y);
  const Tensor g = oracle.cross_entropy_gradient(x, y).gradient;
  return package_results(oracle, x, signed_step(x, g, tm.epsilon, x, tm), y, 1);
}

namespace {

Tensor iterate_sign_steps(const GradientOracle& oracle, Tensor start, const Tensor& x, std::span<const int> y,
                          const ThreatModel& tm, std::size_t steps, double step_size) {
  Tensor current = std::move(start);
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor g = oracle.cross_entropy_gradient(current, y).gradient;
    current = signed_step(current, g, step_size, x, tm);
  }
  return current;
}

}  // namespace

std::vector<AttackResult> bim(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                              const ThreatModel& tm, std::size_t steps, double step_size) {
  tm.validate();
  check_batch(x, y);
  check_steps(steps, step_size);
  return package_results(oracle, x, iterate_sign_steps(oracle, x, x, y, tm, steps, step_size), y, steps);
}

std::vector<AttackResult> pgd(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                              const ThreatModel& tm, std::size_t steps, double step_size, Rng& rng) {
  tm.validate();
  check_batch(x, y);
  check_steps(steps, step_size);
  Tensor start = x;
  if (tm.epsilon > 0.0) {
    const Tensor noise = rand_uniform(x.shape(), -tm.epsilon, tm.epsilon, rng);
    auto s = start.data();
    auto n = noise.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += n[i];
    start = project_linf(start, x, tm);
  }
  return package_results(oracle, x, iterate_sign_steps(oracle, std::move(start), x, y, tm, steps, step_size), y, steps);
}

std::vector<AttackResult> mim_transfer(const GradientOracle& substitute, const Tensor& x, std::span<const int> y,
                                       const ThreatModel& tm, std::size_t steps, double decay) {
  tm.validate();
  check_batch(x, y);
  if (steps == 0) throw std::invalid_argument("attack steps must be >= 1");
  if (!(decay >= 0.0)) throw std::invalid_argument("momentum decay must be >= 0");
  const double step_size = tm.epsilon / static_cast<double>(steps);
  const std::size_t n = x.dim(0);
  const std::size_t per = sample_size(x);
  Tensor momentum(x.shape());
  Tensor current = x;
  for (std::size_t s = 0; s < steps; ++s) {
    const Tensor g = substitute.cross_entropy_gradient(current, y).gradient;
    auto m = momentum.data();
    auto gv = g.data();
    for (std::size_t i = 0; i < n; ++i) {
      double l1 = 0.0;
      for (std::size_t j = 0; j < per; ++j) l1 += std::abs(gv[i * per + j]);
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t k = i * per + j;
        m[k] = decay * m[k] + (l1 > 0.0 ? gv[k] / l1 : 0.0);
      }
    }
    current = signed_step(current, momentum, step_size, x, tm);
  }
  return package_results(substitute, x, current, y, steps);
}

Tensor spsa_gradient(const BatchObjective& objective, const Tensor& x, std::size_t samples, double delta, Rng& rng) {
  if (samples == 0) throw std::invalid_argument("SPSA needs at least one sample");
  if (!(delta > 0.0)) throw std::invalid_argument("SPSA perturbation size must be > 0");
  const std::size_t per = x.size();
  Shape probe_shape{2 * samples};
  probe_shape.insert(probe_shape.end(), x.shape().begin(), x.shape().end());
  Tensor probes(probe_shape);
  const Tensor directions = rademacher({samples, per}, rng);
  auto p = probes.data();
  auto d = directions.data();
  auto xv = x.data();
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < per; ++j) {
      p[(2 * s) * per + j] = xv[j] + delta * d[s * per + j];
      p[(2 * s + 1) * per + j] = xv[j] - delta * d[s * per + j];
    }
  }
  const std::vector<double> f = objective(probes);
  if (f.size() != 2 * samples) throw std::logic_error("SPSA objective returned the wrong number of values");
  Tensor grad(x.shape());
  auto g = grad.data();
  for (std::size_t s = 0; s < samples; ++s) {
    const double diff = (f[2 * s] - f[2 * s + 1]) / (2.0 * delta);
    // Rademacher entries are their own inverse.
    for (std::size_t j = 0; j < per; ++j) g[j] += diff * d[s * per + j];
  }
  for (double& v : g) v /= static_cast<double>(samples);
  return grad;
}

std::vector<AttackResult> spsa(const ScoreOracle& oracle, const Tensor& x, std::span<const int> y,
                               const ThreatModel& tm, const SpsaParams& params, Rng& rng) {
  tm.validate();
  check_batch(x, y);
  if (params.iterations == 0) throw std::invalid_argument("SPSA iterations must be >= 1");
  if (!(params.learning_rate > 0.0)) throw std::invalid_argument("SPSA learning rate must be > 0");
  const std::size_t n = x.dim(0);
  Tensor x_adv = x;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor origin = x.slice(i);
    Tensor current = origin;
    std::vector<int> labels(2 * params.samples_per_iter, y[i]);
    const BatchObjective objective = [&](const Tensor& probes) {
      return cross_entropy_from_probabilities(oracle.probabilities(probes), labels);
    };
    for (std::size_t it = 0; it < params.iterations; ++it) {
      const Tensor g = spsa_gradient(objective, current, params.samples_per_iter, params.perturbation_size, rng);
      current = signed_step(current, g, params.learning_rate, origin, tm);
    }
    std::copy(current.data().begin(), current.data().end(),
              x_adv.data().begin() + static_cast<std::ptrdiff_t>(i * origin.size()));
  }
  return package_results(oracle, x, x_adv, y, params.iterations * params.samples_per_iter * 2);
}

std::vector<AttackResult> square_attack(const ScoreOracle& oracle, const Tensor& x, std::span<const int> y,
                                        const ThreatModel& tm, const SquareParams& params, Rng& rng) {
  tm.validate();
  check_batch(x, y);
  if (x.rank() != 4) throw ShapeError("square attack expects images [N, C, H, W], got " + shape_string(x.shape()));
  if (params.query_budget == 0) throw std::invalid_argument("square attack query budget must be >= 1");
  if (!(params.initial_patch_fraction > 0.0 && params.initial_patch_fraction <= 1.0)) {
    throw std::invalid_argument("square attack initial patch fraction must be in (0, 1]");
  }
  if (params.stagnation_window == 0) throw std::invalid_argument("square attack stagnation window must be >= 1");

  const std::size_t n = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t per = channels * height * width;
  const double eps = tm.epsilon;
  std::bernoulli_distribution coin(0.5);

  // Vertical stripes: one sign per (channel, column).
  Tensor best = x;
  {
    auto b = best.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t w = 0; w < width; ++w) {
          const double s = coin(rng) ? eps : -eps;
          for (std::size_t h = 0; h < height; ++h) b[((i * channels + c) * height + h) * width + w] += s;
        }
      }
    }
    best = project_linf(best, x, tm);
  }

  std::vector<double> best_margin = log_probability_margin(oracle.probabilities(best), y);
  std::vector<std::size_t> queries(n, 1);
  std::vector<double> fraction(n, params.initial_patch_fraction);
  std::vector<std::size_t> rejections(n, 0);
  std::vector<std::vector<double>> traces(n);
  if (params.record_trace) {
    for (std::size_t i = 0; i < n; ++i) traces[i].push_back(best_margin[i]);
  }

  auto is_active = [&](std::size_t i) {
    if (queries[i] >= params.query_budget) return false;
    return !(params.stop_on_success && best_margin[i] < 0.0);
  };

  std::vector<std::size_t> active;
  for (;;) {
    active.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (is_active(i)) active.push_back(i);
    }
    if (active.empty()) break;

    Tensor candidates = gather_rows(best, active);
    auto cand = candidates.data();
    auto xv = x.data();
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      const double area = fraction[i] * static_cast<double>(height * width);
      const std::size_t side =
          std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area))), 1, std::min(height, width));
      std::uniform_int_distribution<std::size_t> row_pick(0, height - side);
      std::uniform_int_distribution<std::size_t> col_pick(0, width - side);
      // Resample a few times if the patch would leave the incumbent unchanged.
      for (int attempt = 0; attempt < 10; ++attempt) {
        const std::size_t r0 = row_pick(rng), c0 = col_pick(rng);
        bool changed = false;
        for (std::size_t c = 0; c < channels; ++c) {
          const double s = coin(rng) ? eps : -eps;
          for (std::size_t h = r0; h < r0 + side; ++h) {
            for (std::size_t w = c0; w < c0 + side; ++w) {
              const std::size_t local = (c * height + h) * width + w;
              const double v = std::clamp(xv[i * per + local] + s, tm.pixel_min, tm.pixel_max);
              double& slot = cand[a * per + local];
              if (slot != v) changed = true;
              slot = v;
            }
          }
        }
        if (changed || eps == 0.0) break;
      }
    }

    const std::vector<int> active_labels = [&] {
      std::vector<int> out;
      for (std::size_t i : active) out.push_back(y[i]);
      return out;
    }();
    const std::vector<double> margin = log_probability_margin(oracle.probabilities(candidates), active_labels);
    auto b = best.data();
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      ++queries[i];
      if (margin[a] < best_margin[i]) {
        best_margin[i] = margin[a];
        std::copy_n(cand.begin() + static_cast<std::ptrdiff_t>(a * per), per,
                    b.begin() + static_cast<std::ptrdiff_t>(i * per));
        rejections[i] = 0;
        if (params.record_trace) traces[i].push_back(margin[a]);
      } else if (++rejections[i] >= params.stagnation_window) {
        fraction[i] /= 2.0;
        rejections[i] = 0;
      }
    }
  }

  std::vector<AttackResult> out = package_results(oracle, x, best, y);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].queries = queries[i];
    out[i].trace = std::move(traces[i]);
  }
  return out;
}

std::vector<AttackResult> cw_min_perturbation(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                                              const CarliniWagnerParams& params) {
  check_batch(x, y);
  if (params.binary_search_steps == 0 || params.inner_steps == 0) {
    throw std::invalid_argument("C&W needs at least one binary search step and one inner step");
  }
  if (!(params.initial_const > 0.0) || !(params.learning_rate > 0.0)) {
    throw std::invalid_argument("C&W constant and learning rate must be > 0");
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  constexpr double kTanhShrink = 0.999999;
  constexpr double kUpperUnset = 1e10;

  const std::size_t n = x.dim(0);
  const std::size_t per = sample_size(x);
  const std::vector<int> labels(y.begin(), y.end());

  // Samples the model already gets wrong need no perturbation.
  const std::vector<int> clean_pred = oracle.predict(x);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < n; ++i) {
    if (clean_pred[i] == labels[i]) todo.push_back(i);
  }

  Tensor best_adv = x;
  std::vector<double> best_l2(n, std::numeric_limits<double>::infinity());

  if (!todo.empty()) {
    const std::size_t m = todo.size();
    const Tensor origin = gather_rows(x, todo);
    std::vector<int> sub_labels;
    for (std::size_t i : todo) sub_labels.push_back(labels[i]);
    const auto ov = origin.data();

    Tensor w0(origin.shape());
    for (std::size_t k = 0; k < ov.size(); ++k) w0.data()[k] = std::atanh((2.0 * ov[k] - 1.0) * kTanhShrink);

    std::vector<double> c(m, params.initial_const), lower(m, 0.0), upper(m, kUpperUnset);

    for (std::size_t bs = 0; bs < params.binary_search_steps; ++bs) {
      Tensor w = w0;
      Tensor adam_m(w.shape()), adam_v(w.shape());
      std::vector<bool> found(m, false);
      for (std::size_t step = 1; step <= params.inner_steps; ++step) {
        Tensor xp(w.shape());
        auto wv = w.data();
        auto xv = xp.data();
        for (std::size_t k = 0; k < wv.size(); ++k) xv[k] = (std::tanh(wv[k]) + 1.0) / 2.0;

        std::vector<std::size_t> other(m);
        std::vector<bool> penalty_active(m);
        ObjectiveGradient og = oracle.gradient(xp, [&](const Tensor& z) {
          const std::size_t k = z.dim(1);
          Tensor cot(z.shape());
          for (std::size_t r = 0; r < m; ++r) {
            const std::size_t yl = static_cast<std::size_t>(sub_labels[r]);
            std::size_t jbest = yl == 0 ? 1 : 0;
            for (std::size_t j = 0; j < k; ++j) {
              if (j != yl && z[r * k + j] > z[r * k + jbest]) jbest = j;
            }
            other[r] = jbest;
            penalty_active[r] = z[r * k + yl] - z[r * k + jbest] > -params.confidence;
            if (penalty_active[r]) {
              cot[r * k + yl] = c[r];
              cot[r * k + jbest] = -c[r];
            }
          }
          return cot;
        });

        // Record successful iterates before stepping.
        const std::vector<int> pred = argmax_rows(og.logits);
        for (std::size_t r = 0; r < m; ++r) {
          if (pred[r] == sub_labels[r]) continue;
          found[r] = true;
          double d2 = 0.0;
          for (std::size_t j = 0; j < per; ++j) {
            const double diff = xv[r * per + j] - ov[r * per + j];
            d2 += diff * diff;
          }
          const std::size_t i = todo[r];
          if (d2 < best_l2[i]) {
            best_l2[i] = d2;
            std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * per), per,
                        best_adv.data().begin() + static_cast<std::ptrdiff_t>(i * per));
          }
        }

        auto gv = og.gradient.data();
        auto am = adam_m.data();
        auto av = adam_v.data();
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (std::size_t k = 0; k < wv.size(); ++k) {
          const double th = std::tanh(wv[k]);
          const double dx = 2.0 * (xv[k] - ov[k]) + gv[k];
          const double g = dx * (1.0 - th * th) / 2.0;
          am[k] = kBeta1 * am[k] + (1.0 - kBeta1) * g;
          av[k] = kBeta2 * av[k] + (1.0 - kBeta2) * g * g;
          wv[k] -= params.learning_rate * (am[k] / bc1) / (std::sqrt(av[k] / bc2) + kAdamEps);
        }
      }
      for (std::size_t r = 0; r < m; ++r) {
        if (found[r]) {
          upper[r] = std::min(upper[r], c[r]);
          c[r] = (lower[r] + upper[r]) / 2.0;
        } else {
          lower[r] = std::max(lower[r], c[r]);
          c[r] = upper[r] < kUpperUnset ? (lower[r] + upper[r]) / 2.0 : c[r] * 10.0;
        }
      }
    }
  }

  std::vector<AttackResult> out = package_results(oracle, x, best_adv, labels);
  for (std::size_t i = 0; i < n; ++i) out[i].queries = 0;
  return out;
}

std::vector<AttackResult> deepfool(const GradientOracle& oracle, const Tensor& x, const DeepFoolParams& params,
                                   std::span<const int> labels) {
  if (x.rank() < 2) throw ShapeError("attack input must be a batch [N, ...], got " + shape_string(x.shape()));
  if (!(params.overshoot >= 0.0)) throw std::invalid_argument("DeepFool overshoot must be >= 0");
  const std::size_t n = x.dim(0);
  const std::size_t per = sample_size(x);
  std::vector<int> source;
  if (labels.empty()) {
    source = oracle.predict(x);
  } else {
    check_batch(x, labels);
    source.assign(labels.begin(), labels.end());
  }

  Tensor current = x;
  Tensor total(x.shape());
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  std::vector<std::size_t> steps_taken(n, 0);

  for (std::size_t step = 0; step <= params.max_steps && !active.empty(); ++step) {
    const Tensor sub = gather_rows(current, active);
    const Tensor logits = oracle.logits(sub);
    const std::size_t k = logits.dim(1);
    const std::vector<int> pred = argmax_rows(logits);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (pred[a] == source[active[a]]) {
        still.push_back(active[a]);
      }
    }
    if (still.empty() || step == params.max_steps) break;

    const Tensor xs = gather_rows(current, still);
    const std::size_t m = still.size();
    std::vector<double> best_ratio(m, std::numeric_limits<double>::infinity());
    Tensor best_dir(xs.shape());
    std::vector<double> best_scale(m, 0.0);

    for (std::size_t cls = 0; cls < k; ++cls) {
      // Gradient of f_cls = Z_cls - Z_source for every row whose source differs from cls.
      const ObjectiveGradient og = oracle.gradient(xs, [&](const Tensor& z) {
        Tensor cot(z.shape());
        for (std::size_t r = 0; r < m; ++r) {
          const std::size_t src = static_cast<std::size_t>(source[still[r]]);
          if (src == cls) continue;
          cot[r * k + cls] = 1.0;
          cot[r * k + src] = -1.0;
        }
        return cot;
      });
      auto gv = og.gradient.data();
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t src = static_cast<std::size_t>(source[still[r]]);
        if (src == cls) continue;
        const double f = og.logits[r * k + cls] - og.logits[r * k + src];
        const std::span<const double> w = gv.subspan(r * per, per);
        const double w2 = l2_norm_squared(w);
        if (w2 <= 0.0) continue;
        const double ratio = std::abs(f) / std::sqrt(w2);
        if (ratio < best_ratio[r]) {
          best_ratio[r] = ratio;
          best_scale[r] = (std::abs(f) + 1e-4) / w2;
          std::copy(w.begin(), w.end(), best_dir.data().begin() + static_cast<std::ptrdiff_t>(r * per));
        }
      }
    }

    auto tv = total.data();
    auto cv = current.data();
    auto xv = x.data();
    auto dv = best_dir.data();
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = still[r];
      ++steps_taken[i];
      if (!std::isfinite(best_ratio[r])) continue;  // flat logits: nothing to follow
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t idx = i * per + j;
        tv[idx] += best_scale[r] * dv[r * per + j];
        cv[idx] = std::clamp(xv[idx] + (1.0 + params.overshoot) * tv[idx], 0.0, 1.0);
      }
    }
    active = std::move(still);
  }

  std::vector<AttackResult> out = package_results(oracle, x, current, source);
  for (std::size_t i = 0; i < n; ++i) out[i].queries = steps_taken[i];
  return out;
}

double mean_linf_distance(std::span<const AttackResult> results) {
  if (results.empty()) throw std::invalid_argument("mean_linf_distance of an empty result list");
  double s = 0.0;
  for (const auto& r : results) s += r.linf_distance;
  return s / static_cast<double>(results.size());
}

AdversarialBatch make_adversarial_batch(std::string attack, double epsilon, std::uint64_t seed,
                                        std::span<const AttackResult> results, std::span<const int> labels) {
  if (results.size() != labels.size()) throw ShapeError("adversarial batch needs one label per result");
  AdversarialBatch b;
  b.attack = std::move(attack);
  b.epsilon = epsilon;
  b.seed = seed;
  b.x_adv = stack_adversarials(results);
  b.labels.assign(labels.begin(), labels.end());
  for (const auto& r : results) {
    b.linf.push_back(r.linf_distance);
    b.success.push_back(r.success);
  }
  return b;
}

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".manifest.json");
}

}  // namespace

void save_adversarial_batch(const std::filesystem::path& path, const AdversarialBatch& batch) {
  const std::size_t n = batch.labels.size();
  if (batch.x_adv.rank() < 1 || batch.x_adv.dim(0) != n || batch.linf.size() != n || batch.success.size() != n) {
    throw ShapeError("adversarial batch fields disagree on the sample count");
  }
  nlohmann::json manifest;
  manifest["attack"] = batch.attack;
  manifest["epsilon"] = batch.epsilon;
  manifest["seed"] = batch.seed;
  manifest["count"] = n;
  manifest["archive"] = path.filename().string();
  manifest["labels"] = batch.labels;
  manifest["linf_distance"] = batch.linf;
  manifest["success"] = batch.success;

  Archive archive;
  archive.kind = ArchiveKind::tensor_batch;
  archive.metadata = nlohmann::json{{"attack", batch.attack}, {"epsilon", batch.epsilon}}.dump();
  archive.entries.push_back({"x_adv", batch.x_adv});
  std::vector<double> label_values(batch.labels.begin(), batch.labels.end());
  archive.entries.push_back({"labels", Tensor({n}, std::move(label_values))});
  write_archive(path, archive);

  std::ofstream out(manifest_path(path));
  if (!out) throw std::runtime_error("cannot write " + manifest_path(path).string());
  out << manifest.dump(2) << '\n';
}

AdversarialBatch load_adversarial_batch(const std::filesystem::path& path) {
  std::ifstream in(manifest_path(path));
  if (!in) throw std::runtime_error("cannot read " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed adversarial manifest " + manifest_path(path).string() + ": " + e.what());
  }
  const Archive archive = read_archive(path);
  if (archive.kind != ArchiveKind::tensor_batch) throw ArchiveError(path.string() + " is not a tensor batch archive");

  AdversarialBatch b;
  try {
    b.attack = manifest.at("attack").get<std::string>();
    b.epsilon = manifest.at("epsilon").get<double>();
    b.seed = manifest.at("seed").get<std::uint64_t>();
    b.labels = manifest.at("labels").get<std::vector<int>>();
    b.linf = manifest.at("linf_distance").get<std::vector<double>>();
    b.success = manifest.at("success").get<std::vector<bool>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("incomplete adversarial manifest " + manifest_path(path).string() + ": " + e.what());
  }
  b.x_adv = archive.at("x_adv");
  const std::size_t n = b.labels.size();
  if (b.x_adv.rank() < 1 || b.x_adv.dim(0) != n || b.linf.size() != n || b.success.size() != n) {
    throw ArchiveError("adversarial manifest and archive disagree on the sample count");
  }
  return b;
}

}  // namespace bnnr
