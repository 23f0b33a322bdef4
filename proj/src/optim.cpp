#include "gencal/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gencal {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        auto g = p.grad();
        auto x = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            x[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

Adam Adam::rebind(std::vector<Tensor> params) const {
    if (params.size() != params_.size()) throw std::invalid_argument("adam: rebind layout mismatch");
    Adam out(std::move(params), cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (out.params_[i].numel() != params_[i].numel()) throw std::invalid_argument("adam: rebind shape mismatch");
    }
    out.m_ = m_;
    out.v_ = v_;
    out.t_ = t_;
    return out;
}

}  // namespace gencal
