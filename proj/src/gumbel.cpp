#include "textgen/gumbel.hpp"

#include <cmath>
#include <string>

#include "textgen/error.hpp"

namespace textgen {

Tensor sample_gumbel(Shape shape, Rng& rng) {
    const int64_t n = shape_numel(shape);
    std::vector<double> draws(static_cast<size_t>(n));
    for (auto& d : draws) d = rng.gumbel();
    return Tensor::from_data(std::move(shape), std::move(draws));
}

namespace {

void check_logits(const Tensor& u, double tau) {
    if (!(tau > 0.0)) throw ParameterError("tau must be > 0, got " + std::to_string(tau));
    if (!u.defined() || u.numel() == 0) throw ContractError("gumbel_softmax needs logits");
    for (double v : u.data())
        if (!std::isfinite(v)) throw NumericError("gumbel_softmax logits must be finite");
}

}  // namespace

Tensor gumbel_softmax_with_noise(const Tensor& u, const Tensor& g, double tau) {
    check_logits(u, tau);
    return softmax(scale(add(u, g), 1.0 / tau));
}

Tensor gumbel_softmax_hard_with_noise(const Tensor& u, const Tensor& g, double tau) {
    return straight_through_onehot(gumbel_softmax_with_noise(u, g, tau));
}

GumbelSample gumbel_softmax(const Tensor& u, double tau, Rng& rng) {
    check_logits(u, tau);
    GumbelSample s;
    s.u = u;
    s.g = sample_gumbel(u.shape(), rng);
    s.tau = tau;
    s.y = gumbel_softmax_with_noise(u, s.g, tau);
    return s;
}

GumbelSample gumbel_softmax_hard(const Tensor& u, double tau, Rng& rng) {
    GumbelSample s = gumbel_softmax(u, tau, rng);
    s.y = straight_through_onehot(s.y);
    return s;
}

int gumbel_argmax(const std::vector<double>& logits, Rng& rng) {
    if (logits.empty()) throw ContractError("gumbel_argmax needs at least one logit");
    int best = 0;
    double best_v = logits[0] + rng.gumbel();
    for (size_t i = 1; i < logits.size(); ++i) {
        const double v = logits[i] + rng.gumbel();
        if (v > best_v) {
            best_v = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

void TemperatureSchedule::validate() const {
    std::string bad;
    auto flag = [&bad](const std::string& msg) {
        if (!bad.empty()) bad += "; ";
        bad += msg;
    };
    if (!(tau_end > 0.0)) flag("tau_end must be > 0");
    if (!(tau_start > 0.0)) flag("tau_start must be > 0");
    if (tau_end > tau_start) flag("tau_end must not exceed tau_start");
    if (!(decay >= 0.0)) flag("decay must be >= 0");
    if (!bad.empty()) throw ConfigError("invalid TemperatureSchedule: " + bad);
}

double anneal(const TemperatureSchedule& schedule, int step) {
    schedule.validate();
    if (step < 0) throw ParameterError("step must be >= 0");
    const double tau =
        schedule.tau_end + (schedule.tau_start - schedule.tau_end) * std::exp(-schedule.decay * step);
    return std::min(schedule.tau_start, std::max(schedule.tau_end, tau));
}

}  // namespace textgen
