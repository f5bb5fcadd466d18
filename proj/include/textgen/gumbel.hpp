#pragma once

#include <vector>

#include "textgen/rng.hpp"
#include "textgen/tensor.hpp"

namespace textgen {

// One relaxed categorical draw: logits u, the Gumbel noise g that perturbed
// them, the temperature, and the resulting sample y (soft rows sum to 1; hard
// rows are exact one-hots).
struct GumbelSample {
    Tensor u;
    Tensor g;
    double tau = 1.0;
    Tensor y;
};

// i.i.d. Gumbel(0,1) draws, -log(-log U) with U kept strictly inside (0,1).
Tensor sample_gumbel(Shape shape, Rng& rng);

// softmax((u + g) / tau) over the last axis with fresh noise g. Differentiable
// w.r.t. u; the noise is a constant.
GumbelSample gumbel_softmax(const Tensor& u, double tau, Rng& rng);

// Forward: exact one-hot of the soft sample's argmax (ties toward the lowest
// index). Backward: the soft sample's gradient, straight through.
GumbelSample gumbel_softmax_hard(const Tensor& u, double tau, Rng& rng);

// Deterministic cores with caller-supplied noise; used by the samplers above
// and directly when the noise must be held fixed.
Tensor gumbel_softmax_with_noise(const Tensor& u, const Tensor& g, double tau);
Tensor gumbel_softmax_hard_with_noise(const Tensor& u, const Tensor& g, double tau);

// One Gumbel-max categorical draw: argmax(u + g). Distributed as softmax(u).
int gumbel_argmax(const std::vector<double>& logits, Rng& rng);

// tau(step) = tau_end + (tau_start - tau_end) * exp(-decay * step):
// monotone non-increasing from tau_start toward tau_end.
struct TemperatureSchedule {
    double tau_start = 1.0;
    double tau_end = 0.3;
    double decay = 0.001;

    void validate() const;
};

double anneal(const TemperatureSchedule& schedule, int step);

}  // namespace textgen
