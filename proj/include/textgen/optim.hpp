#pragma once

#include <vector>

#include "textgen/tensor.hpp"

namespace textgen {

struct OptimizerConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_steps = 100;  // linear warmup from 0 to lr
    int batch_size = 8;

    void validate() const;
};

// Adam with bias correction and linear learning-rate warmup.
class Adam {
   public:
    Adam(std::vector<Tensor> params, OptimizerConfig cfg);

    // Applies one update from the accumulated grads. Parameters without a
    // grad (never touched by backward) are left alone.
    void step();

    void zero_grad();

    double current_lr() const;
    int steps_taken() const { return t_; }

   private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    OptimizerConfig cfg_;
    int t_ = 0;
};

}  // namespace textgen
