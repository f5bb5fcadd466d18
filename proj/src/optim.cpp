#include "textgen/optim.hpp"

#include <cmath>
#include <string>

#include "textgen/error.hpp"

namespace textgen {

void OptimizerConfig::validate() const {
    std::string bad;
    if (!(lr > 0.0)) bad += " lr";
    if (!(beta1 >= 0.0 && beta1 < 1.0)) bad += " beta1";
    if (!(beta2 >= 0.0 && beta2 < 1.0)) bad += " beta2";
    if (!(eps > 0.0)) bad += " eps";
    if (warmup_steps < 0) bad += " warmup_steps";
    if (batch_size < 1) bad += " batch_size";
    if (!bad.empty()) throw ConfigError("invalid optimizer settings:" + bad);
}

Adam::Adam(std::vector<Tensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
    }
}

double Adam::current_lr() const {
    // lr for the *next* step; steps count from 1
    const int next = t_ + 1;
    if (cfg_.warmup_steps > 0 && next <= cfg_.warmup_steps) {
        return cfg_.lr * static_cast<double>(next) / static_cast<double>(cfg_.warmup_steps);
    }
    return cfg_.lr;
}

void Adam::step() {
    const double lr_t = current_lr();
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        std::vector<double>& w = p.data();
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr_t * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace textgen
