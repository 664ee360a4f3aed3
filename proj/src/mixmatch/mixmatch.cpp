#include "wsr/mixmatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wsr/error.hpp"
#include "wsr/ops.hpp"

namespace wsr::mixmatch {

namespace {

constexpr double kSimplexTol = 1e-6;

template <typename T>
void require_simplex(std::span<const T> p, const char* what) {
  double total = 0.0;
  for (T v : p) {
    if (!(v >= T(0))) throw InvalidArgument(std::string(what) + ": negative or NaN entry");
    total += static_cast<double>(v);
  }
  if (std::abs(total - 1.0) > kSimplexTol)
    throw InvalidArgument(std::string(what) + ": entries sum to " + std::to_string(total));
}

std::size_t plane_len(std::span<const float> x) {
  if (x.size() % 2 != 0) throw ShapeError("signal must hold an I and a Q plane of equal length");
  return x.size() / 2;
}

}  // namespace

void MixMatchConfig::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("T must be positive");
  if (K < 1) throw InvalidArgument("K must be at least 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be positive");
  if (!(lambda_u >= 0.0) || !std::isfinite(lambda_u))
    throw InvalidArgument("lambda_u must be nonnegative");
  if (!(smooth_frac >= 0.0 && smooth_frac < 1.0))
    throw InvalidArgument("smooth_frac must lie in [0, 1)");
  if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0))
    throw InvalidArgument("fixed_lambda must lie in [0, 1]");
}

double MixMatchConfig::lambda_u_at(std::size_t step) const {
  if (rampup_steps == 0 || step >= rampup_steps) return lambda_u;
  return lambda_u * static_cast<double>(step) / static_cast<double>(rampup_steps);
}

void apply_flip(std::span<float> x, FlipMask mask) {
  const std::size_t L = plane_len(x);
  if (mask.i)
    for (std::size_t l = 0; l < L; ++l) x[l] = -x[l];
  if (mask.q)
    for (std::size_t l = L; l < 2 * L; ++l) x[l] = -x[l];
}

FlipMask random_flip(std::span<float> x, Rng& rng) {
  FlipMask mask;
  mask.i = rng.coin();
  mask.q = rng.coin();
  apply_flip(x, mask);
  return mask;
}

void smooth_at(std::span<float> plane, std::span<const std::size_t> indices) {
  const std::size_t L = plane.size();
  if (L < 3) throw InvalidArgument("smoothing needs at least 3 samples");
  std::vector<float> orig(plane.begin(), plane.end());
  for (std::size_t i : indices) {
    if (i == 0 || i + 1 >= L) throw InvalidArgument("smoothing index must be interior");
    plane[i] = (orig[i - 1] + orig[i + 1]) / 2.0f;
  }
}

void random_smooth(std::span<float> x, Rng& rng, double frac) {
  const std::size_t L = plane_len(x);
  if (L < 3) throw InvalidArgument("smoothing needs at least 3 samples");
  if (!(frac >= 0.0 && frac < 1.0)) throw InvalidArgument("smooth fraction must lie in [0, 1)");
  const std::size_t interior = L - 2;
  const auto want = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(L) - 1e-9));
  const std::size_t count = std::min(want, interior);
  if (count == 0) return;

  std::vector<std::size_t> pool(interior);
  for (int plane = 0; plane < 2; ++plane) {
    std::iota(pool.begin(), pool.end(), std::size_t{1});
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + rng.below(interior - i);
      std::swap(pool[i], pool[j]);
    }
    smooth_at(x.subspan(plane * L, L), std::span<const std::size_t>(pool.data(), count));
  }
}

void augment(std::span<float> x, Rng& rng, const MixMatchConfig& cfg) {
  if (cfg.flip) random_flip(x, rng);
  random_smooth(x, rng, cfg.smooth_frac);
}

std::vector<double> sharpen(std::span<const double> p, double T) {
  if (!(T > 0.0)) throw InvalidArgument("sharpen temperature must be positive");
  if (p.empty()) throw InvalidArgument("sharpen of an empty distribution");
  require_simplex(p, "sharpen");

  std::vector<double> out(p.size());
  if (T == 1.0) {
    double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] / total;
    return out;
  }
  // Work relative to the largest entry so tiny temperatures do not underflow
  // every term.
  const double top = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] > 0.0 ? std::pow(p[i] / top, 1.0 / T) : 0.0;
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

// Mean softmax over rows grouped K at a time, then sharpened.
std::vector<std::vector<double>> guess_from_logits(const ag::Tensor<float>& logits,
                                                   std::size_t groups, std::size_t K, double T) {
  const std::size_t C = logits.dim(1);
  std::vector<float> probs(logits.numel());
  ag::softmax_rows<float>(logits.data(), probs, C);

  std::vector<std::vector<double>> guesses(groups);
  std::vector<double> mean(C);
  for (std::size_t g = 0; g < groups; ++g) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c) mean[c] += probs[(g * K + k) * C + c];
    double total = 0.0;
    for (double& v : mean) {
      v /= static_cast<double>(K);
      total += v;
    }
    // Float softmax rows can drift a few ulps off the simplex.
    for (double& v : mean) v /= total;
    guesses[g] = sharpen(mean, T);
  }
  return guesses;
}

}  // namespace

std::vector<double> guess_label(const Forward& model, std::span<const float> u, std::size_t K,
                                double T, Rng& rng, const MixMatchConfig& cfg) {
  if (K < 1) throw InvalidArgument("K must be at least 1");
  const std::size_t L = plane_len(u);
  ag::Tensor<float> batch({K, 2, L});
  auto data = batch.data();
  for (std::size_t k = 0; k < K; ++k) {
    auto row = data.subspan(k * 2 * L, 2 * L);
    std::copy(u.begin(), u.end(), row.begin());
    augment(row, rng, cfg);
  }
  return guess_from_logits(model(nullptr, batch), 1, K, T).front();
}

void mix_with_weight(std::span<const float> x1, std::span<const float> p1,
                     std::span<const float> x2, std::span<const float> p2, double weight,
                     std::span<float> out_x, std::span<float> out_p) {
  if (x1.size() != x2.size() || out_x.size() != x1.size() || p1.size() != p2.size() ||
      out_p.size() != p1.size())
    throw ShapeError("mixup operands differ in size");
  const auto w = static_cast<float>(weight);
  const float v = 1.0f - w;
  for (std::size_t i = 0; i < x1.size(); ++i) out_x[i] = w * x1[i] + v * x2[i];
  for (std::size_t i = 0; i < p1.size(); ++i) out_p[i] = w * p1[i] + v * p2[i];
}

double mixup(std::span<const float> x1, std::span<const float> p1, std::span<const float> x2,
             std::span<const float> p2, double alpha, Rng& rng, std::span<float> out_x,
             std::span<float> out_p, std::optional<double> fixed_lambda) {
  if (!(alpha > 0.0)) throw InvalidArgument("mixup alpha must be positive");
  require_simplex(p1, "mixup label");
  require_simplex(p2, "mixup label");
  const double lambda = fixed_lambda ? *fixed_lambda : rng.beta(alpha, alpha);
  const double weight = mixup_weight(lambda);
  mix_with_weight(x1, p1, x2, p2, weight, out_x, out_p);
  return weight;
}

MixedBatch mixmatch_batch(const Forward& model, const ag::Tensor<float>& x,
                          std::span<const std::uint16_t> labels, std::size_t num_classes,
                          const ag::Tensor<float>& u, const MixMatchConfig& cfg, Rng& rng) {
  cfg.validate();
  if (x.rank() != 3 || x.dim(1) != 2) throw ShapeError("labeled batch must be [B x 2 x L]");
  if (u.shape() != x.shape()) throw ShapeError("labeled and unlabeled batches differ in shape");
  const std::size_t B = x.dim(0);
  const std::size_t K = cfg.K;
  const std::size_t C = num_classes;
  const std::size_t S = 2 * x.dim(2);
  if (B == 0) throw InvalidArgument("empty batch");
  if (labels.size() != B) throw ShapeError("label count differs from batch size");
  if (C < 2) throw InvalidArgument("need at least two classes");

  // Augment: x_b once, then u_b K times, per b.
  ag::Tensor<float> xhat({B, 2, x.dim(2)});
  ag::Tensor<float> uhat({B * K, 2, x.dim(2)});
  for (std::size_t b = 0; b < B; ++b) {
    auto xs = x.data().subspan(b * S, S);
    auto xo = xhat.data().subspan(b * S, S);
    std::copy(xs.begin(), xs.end(), xo.begin());
    augment(xo, rng, cfg);
    auto us = u.data().subspan(b * S, S);
    for (std::size_t k = 0; k < K; ++k) {
      auto uo = uhat.data().subspan((b * K + k) * S, S);
      std::copy(us.begin(), us.end(), uo.begin());
      augment(uo, rng, cfg);
    }
  }

  // Guess labels for all B*K augmented rows in one pass, off the tape.
  auto guesses = guess_from_logits(model(nullptr, uhat), B, K, cfg.T);

  // W = concat(X^, U^) with their label rows; rows [0, B) are X^.
  const std::size_t N = B + B * K;
  std::vector<float> wlabels(N * C, 0.0f);
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= C) throw InvalidArgument("label index out of range");
    wlabels[b * C + labels[b]] = 1.0f;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c)
        wlabels[(B + b * K + k) * C + c] = static_cast<float>(guesses[b][c]);
  }
  auto row_x = [&](std::size_t r) {
    return r < B ? std::span<const float>(xhat.data().subspan(r * S, S))
                 : std::span<const float>(uhat.data().subspan((r - B) * S, S));
  };
  auto row_p = [&](std::size_t r) {
    return std::span<const float>(wlabels.data() + r * C, C);
  };

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  MixedBatch out{ag::Tensor<float>({B, 2, x.dim(2)}), ag::Tensor<float>({B, C}),
                 ag::Tensor<float>({B * K, 2, x.dim(2)}), ag::Tensor<float>({B * K, C}), {}};
  out.mix_weights.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t partner = order[i];
    const bool labeled_row = i < B;
    const std::size_t r = labeled_row ? i : i - B;
    auto ox = (labeled_row ? out.x : out.u).data().subspan(r * S, S);
    auto op = (labeled_row ? out.px : out.qu).data().subspan(r * C, C);
    out.mix_weights.push_back(mixup(row_x(i), row_p(i), row_x(partner), row_p(partner),
                                    cfg.alpha, rng, ox, op, cfg.fixed_lambda));
  }
  return out;
}

SemiLoss semi_loss(ag::Tape<float>* tape, const Forward& model, const MixedBatch& batch,
                   double lambda_u) {
  if (!(lambda_u >= 0.0)) throw InvalidArgument("lambda_u must be nonnegative");
  const std::size_t C = batch.px.dim(1);
  if (batch.qu.dim(1) != C) throw ShapeError("label widths of X^e and U^e differ");

  auto logits_x = model(tape, batch.x);
  auto loss_x = ag::softmax_cross_entropy(tape, logits_x, batch.px);

  auto logits_u = model(tape, batch.u);
  auto probs_u = ag::softmax(tape, logits_u);
  auto sq = ag::square(tape, ag::sub(tape, probs_u, batch.qu));
  const double norm = static_cast<double>(C) * static_cast<double>(batch.qu.dim(0));
  auto loss_u = ag::scale(tape, ag::sum(tape, sq), static_cast<float>(1.0 / norm));

  SemiLoss out;
  out.total = ag::add(tape, loss_x, ag::scale(tape, loss_u, static_cast<float>(lambda_u)));
  out.loss_x = loss_x.item();
  out.loss_u = loss_u.item();
  out.lambda_u = lambda_u;
  return out;
}

}  // namespace wsr::mixmatch
