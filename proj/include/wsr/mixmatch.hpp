#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wsr/rng.hpp"
#include "wsr/tensor.hpp"

namespace wsr::mixmatch {

struct MixMatchConfig {
  double T = 0.5;          // sharpening temperature
  std::size_t K = 2;       // augmentations per unlabeled example
  double alpha = 0.75;     // Beta(alpha, alpha) for MixUp
  double lambda_u = 75.0;  // unlabeled loss weight
  double smooth_frac = 0.05;
  bool flip = true;
  // Linear ramp of lambda_u from 0 over this many steps; 0 keeps it constant.
  std::size_t rampup_steps = 0;
  // Replaces every Beta draw when set. Used by equivalence harnesses.
  std::optional<double> fixed_lambda;
  std::uint64_t seed = 0;

  void validate() const;
  double lambda_u_at(std::size_t step) const;
};

// Model evaluation: tape (may be null) and [B x 2 x L] -> logits [B x C].
using Forward =
    std::function<ag::Tensor<float>(ag::Tape<float>*, const ag::Tensor<float>&)>;

struct FlipMask {
  bool i = false;
  bool q = false;
};

// x is one 2 x L signal: I plane then Q plane.
void apply_flip(std::span<float> x, FlipMask mask);
// Independently negates each plane with probability 1/2.
FlipMask random_flip(std::span<float> x, Rng& rng);

// plane[i] <- (orig[i-1] + orig[i+1]) / 2 for each listed interior index,
// reading only original values.
void smooth_at(std::span<float> plane, std::span<const std::size_t> indices);
// Picks ceil(frac * L) distinct interior indices per plane and smooths them.
void random_smooth(std::span<float> x, Rng& rng, double frac);

// random_flip (when enabled) then random_smooth.
void augment(std::span<float> x, Rng& rng, const MixMatchConfig& cfg);

// p_i^(1/T) / sum_j p_j^(1/T). Input must be on the simplex (1e-6).
std::vector<double> sharpen(std::span<const double> p, double T);

// sharpen of the mean softmax over K augmentations of u. Evaluated without
// a tape, so the result carries no gradient.
std::vector<double> guess_label(const Forward& model, std::span<const float> u, std::size_t K,
                                double T, Rng& rng, const MixMatchConfig& cfg);

// max(lambda, 1 - lambda).
inline double mixup_weight(double lambda) { return lambda > 1.0 - lambda ? lambda : 1.0 - lambda; }

// out = w x1 + (1 - w) x2 for signals and labels alike.
void mix_with_weight(std::span<const float> x1, std::span<const float> p1,
                     std::span<const float> x2, std::span<const float> p2, double weight,
                     std::span<float> out_x, std::span<float> out_p);

// Draws lambda ~ Beta(alpha, alpha) (or cfg.fixed_lambda), mixes with
// max(lambda, 1 - lambda), and returns that weight.
double mixup(std::span<const float> x1, std::span<const float> p1, std::span<const float> x2,
             std::span<const float> p2, double alpha, Rng& rng, std::span<float> out_x,
             std::span<float> out_p, std::optional<double> fixed_lambda = std::nullopt);

struct MixedBatch {
  ag::Tensor<float> x;   // X^e  [B x 2 x L]
  ag::Tensor<float> px;  //      [B x C]
  ag::Tensor<float> u;   // U^e  [BK x 2 x L]
  ag::Tensor<float> qu;  //      [BK x C]
  std::vector<double> mix_weights;  // B + BK weights in X^e then U^e order
};

// One MixMatch pass over a labeled batch (x, labels) and an equal-size
// unlabeled batch u. Randomness is consumed in this order: per b, Aug(x_b)
// then K x Aug(u_b); shuffle of W; per output row, one Beta draw (X^e rows
// first). X^e_i mixes with W_i, U^e_i with W_{i+B}.
MixedBatch mixmatch_batch(const Forward& model, const ag::Tensor<float>& x,
                          std::span<const std::uint16_t> labels, std::size_t num_classes,
                          const ag::Tensor<float>& u, const MixMatchConfig& cfg, Rng& rng);

struct SemiLoss {
  ag::Tensor<float> total;  // L_X + lambda_u L_U, on the tape
  double loss_x = 0.0;
  double loss_u = 0.0;
  double lambda_u = 0.0;
};

// L_X = mean cross-entropy over X^e; L_U = sum ||q - softmax||^2 / (C |U^e|).
SemiLoss semi_loss(ag::Tape<float>* tape, const Forward& model, const MixedBatch& batch,
                   double lambda_u);

}  // namespace wsr::mixmatch
