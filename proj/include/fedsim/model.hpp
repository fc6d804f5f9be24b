#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Desk-scale differentiable models. Both tasks share one two-layer
// perceptron core:
//   multilabel:    input -> hidden (tanh) -> n_labels logits -> sigmoid
//   segmentation:  per pixel, the (2*patch_radius+1)^2 neighborhood (edge
//                  replicated) -> hidden (tanh) -> n_classes logits
// Gradients are written out analytically; finite_diff_check is the oracle.
struct ModelSpec {
  TaskKind kind = TaskKind::multilabel;

  // multilabel
  int input_dim = 0;
  int n_labels = 0;

  // segmentation
  int grid_h = 16;
  int grid_w = 16;
  int patch_radius = 2;
  int n_classes = 4;

  int hidden_dim = 32;

  int in_features() const {
    if (kind == TaskKind::multilabel) return input_dim;
    const int side = 2 * patch_radius + 1;
    return side * side;
  }

  int out_features() const {
    return kind == TaskKind::multilabel ? n_labels : n_classes;
  }

  void validate() const {
    if (hidden_dim <= 0) throw ConfigError("hidden_dim must be positive");
    if (kind == TaskKind::multilabel) {
      if (input_dim <= 0) throw ConfigError("input_dim must be positive");
      if (n_labels < 2) throw ConfigError("multilabel models need n_labels >= 2");
    } else {
      if (grid_h <= 0 || grid_w <= 0) throw ConfigError("grid dims must be positive");
      if (patch_radius < 0) throw ConfigError("patch_radius must be >= 0");
      if (n_classes < 2) throw ConfigError("segmentation needs n_classes >= 2");
    }
  }
};

inline std::shared_ptr<const Layout> make_layout(const ModelSpec& spec) {
  spec.validate();
  const std::size_t in = static_cast<std::size_t>(spec.in_features());
  const std::size_t hid = static_cast<std::size_t>(spec.hidden_dim);
  const std::size_t out = static_cast<std::size_t>(spec.out_features());
  Layout layout;
  std::size_t off = 0;
  layout.push_back({"hidden.weight", off, hid * in});
  off += hid * in;
  layout.push_back({"hidden.bias", off, hid});
  off += hid;
  layout.push_back({"out.weight", off, out * hid});
  off += out * hid;
  layout.push_back({"out.bias", off, out});
  return std::make_shared<const Layout>(std::move(layout));
}

// Uniform Glorot-style init: weights ~ U(-a, a) with a = sqrt(6/(fan_in +
// fan_out)), biases zero. Pure function of (spec, seed).
inline ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  auto layout = make_layout(spec);
  const std::size_t total = layout->back().offset + layout->back().length;
  ParamVector p(layout, std::vector<double>(total, 0.0));
  Rng rng(seed);
  const int in = spec.in_features();
  const int hid = spec.hidden_dim;
  const int out = spec.out_features();
  {
    const double a = std::sqrt(6.0 / (in + hid));
    auto w = p.segment("hidden.weight");
    for (double& v : w) v = rng.uniform(-a, a);
  }
  {
    const double a = std::sqrt(6.0 / (hid + out));
    auto w = p.segment("out.weight");
    for (double& v : w) v = rng.uniform(-a, a);
  }
  return p;
}

namespace detail {

constexpr double kProbEps = 1e-7;  // clamp before logs; BCE is undefined at 0/1

struct MlpView {
  std::span<const double> w1, b1, w2, b2;
  int in = 0, hid = 0, out = 0;
};

inline MlpView mlp_view(const ModelSpec& spec, const ParamVector& p) {
  MlpView v;
  v.in = spec.in_features();
  v.hid = spec.hidden_dim;
  v.out = spec.out_features();
  v.w1 = p.segment("hidden.weight");
  v.b1 = p.segment("hidden.bias");
  v.w2 = p.segment("out.weight");
  v.b2 = p.segment("out.bias");
  if (v.w1.size() != static_cast<std::size_t>(v.hid * v.in) ||
      v.w2.size() != static_cast<std::size_t>(v.out * v.hid))
    throw ShapeError("parameter vector does not match model spec");
  return v;
}

struct MlpGradView {
  std::span<double> w1, b1, w2, b2;
};

inline MlpGradView mlp_grad_view(GradientVector& g) {
  return {g.segment("hidden.weight"), g.segment("hidden.bias"),
          g.segment("out.weight"), g.segment("out.bias")};
}

// h = tanh(W1 x + b1), z = W2 h + b2. Weight rows are output-major.
inline void mlp_forward(const MlpView& m, std::span<const double> x,
                        std::span<double> h, std::span<double> z) {
  for (int j = 0; j < m.hid; ++j) {
    double acc = m.b1[j];
    const double* w = m.w1.data() + static_cast<std::size_t>(j) * m.in;
    for (int i = 0; i < m.in; ++i) acc += w[i] * x[i];
    h[j] = std::tanh(acc);
  }
  for (int k = 0; k < m.out; ++k) {
    double acc = m.b2[k];
    const double* w = m.w2.data() + static_cast<std::size_t>(k) * m.hid;
    for (int j = 0; j < m.hid; ++j) acc += w[j] * h[j];
    z[k] = acc;
  }
}

inline void check_finite(std::span<const double> vals, const char* layer) {
  for (double v : vals) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite activation in layer '") +
                         layer + "'");
  }
}

// Accumulates gradients for one unit (sample or pixel) given dL/dz.
inline void mlp_backward_unit(const MlpView& m, std::span<const double> x,
                              std::span<const double> h,
                              std::span<const double> dz, MlpGradView& g) {
  for (int k = 0; k < m.out; ++k) {
    const double d = dz[k];
    if (d == 0.0) continue;
    double* gw = g.w2.data() + static_cast<std::size_t>(k) * m.hid;
    for (int j = 0; j < m.hid; ++j) gw[j] += d * h[j];
    g.b2[k] += d;
  }
  for (int j = 0; j < m.hid; ++j) {
    double dh = 0.0;
    for (int k = 0; k < m.out; ++k)
      dh += m.w2[static_cast<std::size_t>(k) * m.hid + j] * dz[k];
    const double da = dh * (1.0 - h[j] * h[j]);
    if (da == 0.0) continue;
    double* gw = g.w1.data() + static_cast<std::size_t>(j) * m.in;
    for (int i = 0; i < m.in; ++i) gw[i] += da * x[i];
    g.b1[j] += da;
  }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamp_prob(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

// Gathers the flattened patch around (r, c) with edge-replicated padding.
// Offsets run row-major from (-R,-R) to (R,R).
inline void gather_patch(const Matrix& image_row_major, std::size_t sample,
                         int grid_h, int grid_w, int radius, int r, int c,
                         std::span<double> out) {
  std::size_t k = 0;
  for (int dr = -radius; dr <= radius; ++dr) {
    const int rr = std::clamp(r + dr, 0, grid_h - 1);
    for (int dc = -radius; dc <= radius; ++dc) {
      const int cc = std::clamp(c + dc, 0, grid_w - 1);
      out[k++] = image_row_major(sample, static_cast<std::size_t>(rr) * grid_w + cc);
    }
  }
}

inline void softmax_inplace(std::span<double> z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

inline double log_sum_exp(std::span<const double> z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return zmax + std::log(sum);
}

}  // namespace detail

// Probabilities in (0,1), one row per sample.
inline Matrix forward_multilabel(const ModelSpec& spec, const ParamVector& params,
                                 const Matrix& features) {
  if (spec.kind != TaskKind::multilabel)
    throw ConfigError("forward_multilabel requires a multilabel spec");
  if (features.cols != static_cast<std::size_t>(spec.input_dim))
    throw ShapeError("feature width does not match input_dim");
  const auto m = detail::mlp_view(spec, params);
  Matrix probs(features.rows, spec.n_labels);
  std::vector<double> h(m.hid), z(m.out);
  for (std::size_t s = 0; s < features.rows; ++s) {
    detail::mlp_forward(m, features.row(s), h, z);
    for (int k = 0; k < m.out; ++k) probs(s, k) = detail::sigmoid(z[k]);
  }
  return probs;
}

// Per-pixel class logits for one image, returned as an (H*W) x n_classes
// matrix in row-major pixel order.
inline Matrix forward_segmentation(const ModelSpec& spec, const ParamVector& params,
                                   const Matrix& image) {
  if (spec.kind != TaskKind::segmentation)
    throw ConfigError("forward_segmentation requires a segmentation spec");
  if (image.rows != static_cast<std::size_t>(spec.grid_h) ||
      image.cols != static_cast<std::size_t>(spec.grid_w))
    throw ShapeError("image dimensions do not match the model grid");
  const auto m = detail::mlp_view(spec, params);
  Matrix flat(1, image.rows * image.cols);
  for (std::size_t r = 0; r < image.rows; ++r)
    for (std::size_t c = 0; c < image.cols; ++c)
      flat(0, r * image.cols + c) = image(r, c);
  Matrix logits(image.rows * image.cols, spec.n_classes);
  std::vector<double> u(m.in), h(m.hid), z(m.out);
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) {
      detail::gather_patch(flat, 0, spec.grid_h, spec.grid_w, spec.patch_radius,
                           r, c, u);
      detail::mlp_forward(m, u, h, z);
      for (int k = 0; k < m.out; ++k)
        logits(static_cast<std::size_t>(r) * spec.grid_w + c, k) = z[k];
    }
  }
  return logits;
}

// Mean over samples of the per-sample label-summed binary cross entropy.
// Probabilities are clamped into [eps, 1-eps] before the logs.
inline double bce_loss(const Matrix& probs, const Matrix& targets) {
  if (!probs.same_shape(targets)) throw ShapeError("bce_loss shape mismatch");
  if (probs.rows == 0) throw ShapeError("bce_loss needs at least one sample");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.data.size(); ++i) {
    const double p = detail::clamp_prob(probs.data[i]);
    const double y = targets.data[i];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.rows);
}

struct MaskedCeResult {
  double loss = 0.0;
  bool empty = false;  // every pixel ignored; contributes zero gradient
};

// Softmax cross entropy averaged over pixels with ignore_mask == 0 for one
// image. Logits are (H*W) x C as produced by forward_segmentation.
inline MaskedCeResult masked_ce_loss(const Matrix& logits,
                                     const std::vector<int>& mask_true,
                                     const std::vector<int>& ignore_mask) {
  if (mask_true.size() != logits.rows ||
      (!ignore_mask.empty() && ignore_mask.size() != logits.rows))
    throw ShapeError("masked_ce_loss shape mismatch");
  double total = 0.0;
  std::size_t contributing = 0;
  for (std::size_t q = 0; q < logits.rows; ++q) {
    if (!ignore_mask.empty() && ignore_mask[q] != 0) continue;
    const auto z = logits.row(q);
    const int y = mask_true[q];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      throw ShapeError("mask class id out of range");
    total += detail::log_sum_exp(z) - z[y];
    ++contributing;
  }
  if (contributing == 0) return {0.0, true};
  return {total / static_cast<double>(contributing), false};
}

enum class LossKind { bce, masked_ce };

// Strategy-specific additions to the local objective. The proximal term adds
// (mu/2)*||w - anchor||^2; grad_offset is added verbatim to the gradient
// (control-variate correction). Pointers are non-owning and must outlive the
// call.
struct StrategyTerm {
  double prox_mu = 0.0;
  const ParamVector* prox_anchor = nullptr;
  const ParamVector* grad_offset = nullptr;
};

struct BackpropResult {
  double loss = 0.0;
  GradientVector grad;
  bool empty_loss = false;
};

// Exact analytic gradient of the batch loss (plus aux terms) with respect to
// every parameter. The clamp in bce_loss is honored: a clamped probability
// contributes zero gradient, exactly matching the computed loss surface.
inline BackpropResult backprop(const ModelSpec& spec, const ParamVector& params,
                               const Batch& batch, LossKind loss_kind,
                               const StrategyTerm& aux = {}) {
  const auto m = detail::mlp_view(spec, params);
  BackpropResult res;
  res.grad = zeros_like(params);
  auto g = detail::mlp_grad_view(res.grad);
  std::vector<double> h(m.hid), z(m.out), dz(m.out);

  if (loss_kind == LossKind::bce) {
    if (spec.kind != TaskKind::multilabel || batch.kind != TaskKind::multilabel)
      throw ConfigError("bce loss requires a multilabel model and batch");
    if (batch.features.cols != static_cast<std::size_t>(spec.input_dim) ||
        batch.targets.cols != static_cast<std::size_t>(spec.n_labels) ||
        batch.features.rows != batch.targets.rows || batch.features.rows == 0)
      throw ShapeError("batch does not match model shape");
    const double inv_n = 1.0 / static_cast<double>(batch.features.rows);
    for (std::size_t s = 0; s < batch.features.rows; ++s) {
      const auto x = batch.features.row(s);
      detail::mlp_forward(m, x, h, z);
      detail::check_finite(h, "hidden");
      detail::check_finite(z, "out");
      for (int k = 0; k < m.out; ++k) {
        const double p = detail::sigmoid(z[k]);
        const double pc = detail::clamp_prob(p);
        const double y = batch.targets(s, k);
        res.loss -= (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)) * inv_n;
        // d/dz of the clamped loss: (p - y) while unclamped, 0 once clamped.
        dz[k] = (p > detail::kProbEps && p < 1.0 - detail::kProbEps)
                    ? (p - y) * inv_n
                    : 0.0;
      }
      detail::mlp_backward_unit(m, x, h, dz, g);
    }
  } else {
    if (spec.kind != TaskKind::segmentation || batch.kind != TaskKind::segmentation)
      throw ConfigError("masked_ce loss requires a segmentation model and batch");
    if (batch.grid_h != spec.grid_h || batch.grid_w != spec.grid_w ||
        batch.images.rows == 0)
      throw ShapeError("batch does not match model grid");
    // First pass counts contributing pixels so the mean is taken over the
    // whole batch, matching the loss evaluated by finite differences.
    std::size_t contributing = 0;
    for (std::size_t s = 0; s < batch.images.rows; ++s) {
      const std::vector<int>* ign = batch.has_ignore() ? &batch.ignore[s] : nullptr;
      for (std::size_t q = 0; q < batch.masks[s].size(); ++q)
        if (!ign || (*ign)[q] == 0) ++contributing;
    }
    if (contributing == 0) {
      res.empty_loss = true;
    } else {
      const double inv_m = 1.0 / static_cast<double>(contributing);
      std::vector<double> u(m.in), sm(m.out);
      for (std::size_t s = 0; s < batch.images.rows; ++s) {
        const std::vector<int>& mask = batch.masks[s];
        const std::vector<int>* ign = batch.has_ignore() ? &batch.ignore[s] : nullptr;
        for (int r = 0; r < spec.grid_h; ++r) {
          for (int c = 0; c < spec.grid_w; ++c) {
            const std::size_t q = static_cast<std::size_t>(r) * spec.grid_w + c;
            if (ign && (*ign)[q] != 0) continue;
            detail::gather_patch(batch.images, s, spec.grid_h, spec.grid_w,
                                 spec.patch_radius, r, c, u);
            detail::mlp_forward(m, u, h, z);
            detail::check_finite(h, "hidden");
            detail::check_finite(z, "out");
            const int y = mask[q];
            if (y < 0 || y >= m.out) throw ShapeError("mask class id out of range");
            for (int k = 0; k < m.out; ++k) sm[k] = z[k];
            detail::softmax_inplace(sm);
            res.loss += (detail::log_sum_exp(z) - z[y]) * inv_m;
            for (int k = 0; k < m.out; ++k)
              dz[k] = (sm[k] - (k == y ? 1.0 : 0.0)) * inv_m;
            detail::mlp_backward_unit(m, u, h, dz, g);
          }
        }
      }
    }
  }

  if (aux.prox_mu != 0.0 && aux.prox_anchor != nullptr) {
    require_same_layout(params, *aux.prox_anchor);
    double sq = 0.0;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      const double d = params.values[i] - aux.prox_anchor->values[i];
      sq += d * d;
      res.grad.values[i] += aux.prox_mu * d;
    }
    res.loss += 0.5 * aux.prox_mu * sq;
  }
  if (aux.grad_offset != nullptr) {
    require_same_layout(params, *aux.grad_offset);
    for (std::size_t i = 0; i < params.values.size(); ++i)
      res.grad.values[i] += aux.grad_offset->values[i];
  }
  return res;
}

inline ParamVector sgd_step(const ParamVector& params, const GradientVector& grad,
                            double lr) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  require_same_layout(params, grad);
  ParamVector out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] -= lr * grad.values[i];
  return out;
}

// Central-difference gradient check over a deterministic subsample of at
// least 200 coordinates (all of them for small models). Returns the maximum
// relative error |g_a - g_fd| / max(1, |g_a|, |g_fd|).
inline double finite_diff_check(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, LossKind loss_kind, double eps,
                                const StrategyTerm& aux = {}) {
  if (eps <= 0.0) throw ConfigError("finite difference step must be positive");
  const BackpropResult analytic = backprop(spec, params, batch, loss_kind, aux);
  const std::size_t total = params.values.size();
  const std::size_t n_coords = std::min<std::size_t>(total, 200);
  double worst = 0.0;
  ParamVector probe = params;
  for (std::size_t k = 0; k < n_coords; ++k) {
    const std::size_t i = k * total / n_coords;
    const double saved = probe.values[i];
    probe.values[i] = saved + eps;
    const double lp = backprop(spec, probe, batch, loss_kind, aux).loss;
    probe.values[i] = saved - eps;
    const double lm = backprop(spec, probe, batch, loss_kind, aux).loss;
    probe.values[i] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double ga = analytic.grad.values[i];
    const double denom = std::max({1.0, std::fabs(ga), std::fabs(fd)});
    worst = std::max(worst, std::fabs(ga - fd) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Softmax classifier head. Used by routing strategies to predict the owning
// client of a sample; reuses the perceptron core with n_labels = n classes.

inline Matrix forward_softmax(const ModelSpec& spec, const ParamVector& params,
                              const Matrix& features) {
  if (spec.kind != TaskKind::multilabel)
    throw ConfigError("forward_softmax requires a classifier spec");
  if (features.cols != static_cast<std::size_t>(spec.input_dim))
    throw ShapeError("feature width does not match input_dim");
  const auto m = detail::mlp_view(spec, params);
  Matrix probs(features.rows, m.out);
  std::vector<double> h(m.hid), z(m.out);
  for (std::size_t s = 0; s < features.rows; ++s) {
    detail::mlp_forward(m, features.row(s), h, z);
    detail::softmax_inplace(z);
    for (int k = 0; k < m.out; ++k) probs(s, k) = z[k];
  }
  return probs;
}

struct SoftmaxCeResult {
  double loss = 0.0;
  GradientVector grad;
};

// Cross entropy against label-smoothed one-hot targets:
// t = (1 - smoothing) * onehot + smoothing / K.
inline SoftmaxCeResult backprop_softmax_ce(const ModelSpec& spec,
                                           const ParamVector& params,
                                           const Matrix& features,
                                           const std::vector<int>& class_ids,
                                           double smoothing) {
  if (class_ids.size() != features.rows || features.rows == 0)
    throw ShapeError("class id count does not match feature rows");
  const auto m = detail::mlp_view(spec, params);
  SoftmaxCeResult res;
  res.grad = zeros_like(params);
  auto g = detail::mlp_grad_view(res.grad);
  const double inv_n = 1.0 / static_cast<double>(features.rows);
  const double unif = smoothing / static_cast<double>(m.out);
  std::vector<double> h(m.hid), z(m.out), sm(m.out), dz(m.out);
  for (std::size_t s = 0; s < features.rows; ++s) {
    const auto x = features.row(s);
    detail::mlp_forward(m, x, h, z);
    detail::check_finite(h, "hidden");
    detail::check_finite(z, "out");
    const int y = class_ids[s];
    if (y < 0 || y >= m.out) throw ShapeError("class id out of range");
    const double lse = detail::log_sum_exp(z);
    for (int k = 0; k < m.out; ++k) sm[k] = z[k];
    detail::softmax_inplace(sm);
    for (int k = 0; k < m.out; ++k) {
      const double t = unif + (k == y ? 1.0 - smoothing : 0.0);
      res.loss += t * (lse - z[k]) * inv_n;
      dz[k] = (sm[k] - t) * inv_n;
    }
    detail::mlp_backward_unit(m, x, h, dz, g);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Consistency objective for semi-supervised training. Pseudo-targets are the
// model's own predictions on the clean inputs (held constant); the loss is
// the mean squared difference between those and the predictions on the noisy
// inputs, restricted to units whose clean confidence reaches tau. Units are
// pixels for segmentation and (sample, label) cells for multilabel. When
// only_ignored is set, segmentation units are further restricted to pixels
// with ignore_mask == 1 (the unreliable regions).

struct ConsistencyResult {
  double loss = 0.0;
  GradientVector grad;
  std::size_t kept_units = 0;
};

inline ConsistencyResult backprop_consistency(const ModelSpec& spec,
                                              const ParamVector& params,
                                              const Batch& clean,
                                              const Batch& noisy, double tau,
                                              bool only_ignored = false) {
  if (clean.size() != noisy.size() || clean.size() == 0)
    throw ShapeError("clean/noisy batches must match");
  const auto m = detail::mlp_view(spec, params);
  ConsistencyResult res;
  res.grad = zeros_like(params);
  auto g = detail::mlp_grad_view(res.grad);

  if (spec.kind == TaskKind::multilabel) {
    const Matrix clean_probs = forward_multilabel(spec, params, clean.features);
    // Pass 1: count kept cells.
    std::vector<char> keep(clean_probs.data.size(), 0);
    for (std::size_t i = 0; i < clean_probs.data.size(); ++i) {
      const double p = clean_probs.data[i];
      if (std::max(p, 1.0 - p) >= tau) {
        keep[i] = 1;
        ++res.kept_units;
      }
    }
    if (res.kept_units == 0) return res;
    const double inv = 1.0 / static_cast<double>(res.kept_units);
    std::vector<double> h(m.hid), z(m.out), dz(m.out);
    for (std::size_t s = 0; s < noisy.features.rows; ++s) {
      const auto x = noisy.features.row(s);
      detail::mlp_forward(m, x, h, z);
      detail::check_finite(h, "hidden");
      detail::check_finite(z, "out");
      for (int k = 0; k < m.out; ++k) {
        const std::size_t cell = s * static_cast<std::size_t>(m.out) + k;
        if (!keep[cell]) {
          dz[k] = 0.0;
          continue;
        }
        const double pn = detail::sigmoid(z[k]);
        const double pc = clean_probs.data[cell];
        const double diff = pn - pc;
        res.loss += diff * diff * inv;
        dz[k] = 2.0 * diff * pn * (1.0 - pn) * inv;
      }
      detail::mlp_backward_unit(m, x, h, dz, g);
    }
    return res;
  }

  // Segmentation: per-pixel softmax distributions.
  const std::size_t pixels = static_cast<std::size_t>(spec.grid_h) * spec.grid_w;
  std::vector<std::vector<double>> clean_probs(clean.size());
  std::vector<std::vector<char>> keep(clean.size());
  {
    std::vector<double> u(m.in), h(m.hid), z(m.out);
    for (std::size_t s = 0; s < clean.size(); ++s) {
      clean_probs[s].resize(pixels * m.out);
      keep[s].assign(pixels, 0);
      const std::vector<int>* ign =
          clean.has_ignore() ? &clean.ignore[s] : nullptr;
      for (int r = 0; r < spec.grid_h; ++r) {
        for (int c = 0; c < spec.grid_w; ++c) {
          const std::size_t q = static_cast<std::size_t>(r) * spec.grid_w + c;
          detail::gather_patch(clean.images, s, spec.grid_h, spec.grid_w,
                               spec.patch_radius, r, c, u);
          detail::mlp_forward(m, u, h, z);
          detail::softmax_inplace(z);
          double best = 0.0;
          for (int k = 0; k < m.out; ++k) {
            clean_probs[s][q * m.out + k] = z[k];
            best = std::max(best, z[k]);
          }
          const bool eligible = !only_ignored || (ign && (*ign)[q] != 0);
          if (eligible && best >= tau) {
            keep[s][q] = 1;
            ++res.kept_units;
          }
        }
      }
    }
  }
  if (res.kept_units == 0) return res;
  const double inv = 1.0 / (static_cast<double>(res.kept_units) * m.out);
  std::vector<double> u(m.in), h(m.hid), z(m.out), sm(m.out), dz(m.out);
  for (std::size_t s = 0; s < noisy.size(); ++s) {
    for (int r = 0; r < spec.grid_h; ++r) {
      for (int c = 0; c < spec.grid_w; ++c) {
        const std::size_t q = static_cast<std::size_t>(r) * spec.grid_w + c;
        if (!keep[s][q]) continue;
        detail::gather_patch(noisy.images, s, spec.grid_h, spec.grid_w,
                             spec.patch_radius, r, c, u);
        detail::mlp_forward(m, u, h, z);
        detail::check_finite(h, "hidden");
        detail::check_finite(z, "out");
        for (int k = 0; k < m.out; ++k) sm[k] = z[k];
        detail::softmax_inplace(sm);
        // dL/dz through the softmax Jacobian.
        double dot = 0.0;
        for (int k = 0; k < m.out; ++k) {
          const double diff = sm[k] - clean_probs[s][q * m.out + k];
          res.loss += diff * diff * inv;
          dz[k] = 2.0 * diff * inv;  // dL/dp for now
          dot += dz[k] * sm[k];
        }
        for (int k = 0; k < m.out; ++k) dz[k] = sm[k] * (dz[k] - dot);
        detail::mlp_backward_unit(m, u, h, dz, g);
      }
    }
  }
  return res;
}

// Argmax class per pixel; ties resolve to the lower class id.
inline std::vector<int> predict_segmentation_mask(const ModelSpec& spec,
                                                  const ParamVector& params,
                                                  const Matrix& image) {
  const Matrix logits = forward_segmentation(spec, params, image);
  std::vector<int> mask(logits.rows);
  for (std::size_t q = 0; q < logits.rows; ++q) {
    int best = 0;
    for (std::size_t k = 1; k < logits.cols; ++k)
      if (logits(q, k) > logits(q, best)) best = static_cast<int>(k);
    mask[q] = best;
  }
  return mask;
}

}  // namespace fedsim
