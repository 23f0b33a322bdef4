#pragma once

#include <vector>

#include "gencal/tensor.hpp"

namespace gencal {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Parameters without a grad are skipped.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    void step();
    void zero_grad();
    long steps() const { return t_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

    /// Deep copy whose state is bound to `params` (same layout).
    Adam rebind(std::vector<Tensor> params) const;

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long t_ = 0;
};

}  // namespace gencal
