#include "gencal/diffusion.hpp"

#include <cmath>
#include <string>

namespace gencal {

std::size_t NoiseSchedule::index(int t) const {
    if (t < 1 || t > steps()) {
        throw std::out_of_range("noise schedule: step " + std::to_string(t) + " outside [1," +
                                std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(t - 1);
}

NoiseSchedule NoiseSchedule::build(std::vector<double> betas) {
    NoiseSchedule s;
    s.beta_ = std::move(betas);
    double prod = 1.0;
    for (double b : s.beta_) {
        const double prev = prod;
        prod *= 1.0 - b;
        s.alpha_bar_.push_back(prod);
        const double denom = 1.0 - prod;
        s.sigma_.push_back(denom > 0.0 ? std::sqrt((1.0 - prev) / denom * b) : 0.0);
    }
    return s;
}

NoiseSchedule custom_schedule(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("noise schedule: need at least one step");
    for (double b : betas) {
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("noise schedule: every beta must lie in (0, 1)");
    }
    return NoiseSchedule::build(std::move(betas));
}

NoiseSchedule unchecked_schedule(std::vector<double> betas) { return NoiseSchedule::build(std::move(betas)); }

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("linear_schedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    return custom_schedule(std::move(betas));
}

Matrix forward_diffuse(const NoiseSchedule& sched, const Matrix& x0, std::span<const int> t,
                       const Matrix& eps) {
    if (eps.rows != x0.rows || eps.cols != x0.cols || t.size() != x0.rows) {
        throw std::invalid_argument("forward_diffuse: x0, eps and t must describe the same batch");
    }
    Matrix out(x0.rows, x0.cols);
    for (std::size_t r = 0; r < x0.rows; ++r) {
        if (t[r] < 1 || t[r] > sched.steps()) {
            throw std::out_of_range("forward_diffuse: step " + std::to_string(t[r]) + " outside [1," +
                                    std::to_string(sched.steps()) + "]");
        }
        const double ab = sched.alpha_bar(t[r]);
        const double a = std::sqrt(ab);
        const double b = std::sqrt(1.0 - ab);
        for (std::size_t c = 0; c < x0.cols; ++c) out(r, c) = a * x0(r, c) + b * eps(r, c);
    }
    return out;
}

NoisePredictor predictor_of(const Denoiser& g) {
    return [&g](const Tensor& x, std::span<const int> t, std::span<const int> y) {
        return g.predict_noise(x, t, y);
    };
}

DiffusionDraws draw_diffusion(const NoiseSchedule& sched, std::size_t rows, std::size_t cols, Rng& rng) {
    DiffusionDraws d;
    std::uniform_int_distribution<int> step(1, sched.steps());
    d.t.resize(rows);
    for (int& t : d.t) t = step(rng);
    d.eps = standard_normal(rows, cols, rng);
    return d;
}

Tensor ddpm_loss(const NoisePredictor& g, const NoiseSchedule& sched, const Matrix& x0,
                 std::span<const int> labels, const DiffusionDraws& draws) {
    const Matrix x_t = forward_diffuse(sched, x0, draws.t, draws.eps);
    const Tensor pred = g(x_t.to_tensor(), draws.t, labels);
    return mean(pow(sub(draws.eps.to_tensor(), pred), 2.0));
}

Tensor ddpm_loss(const NoisePredictor& g, const NoiseSchedule& sched, const Matrix& x0,
                 std::span<const int> labels, Rng& rng) {
    return ddpm_loss(g, sched, x0, labels, draw_diffusion(sched, x0.rows, x0.cols, rng));
}

std::string to_string(ReverseMode mode) {
    return mode == ReverseMode::standard ? "standard" : "paper_literal";
}

ReverseMode parse_reverse_mode(const std::string& text) {
    if (text == "standard") return ReverseMode::standard;
    if (text == "paper_literal") return ReverseMode::paper_literal;
    throw std::invalid_argument("unknown reverse mode '" + text + "' (expected standard or paper_literal)");
}

Matrix reverse_sample(const NoisePredictor& g, const NoiseSchedule& sched, std::size_t dim,
                      std::span<const int> labels, Rng& rng, ReverseMode mode) {
    Matrix x_T = standard_normal(labels.size(), dim, rng);
    return reverse_sample_from(g, sched, std::move(x_T), labels, rng, mode);
}

Matrix reverse_sample_from(const NoisePredictor& g, const NoiseSchedule& sched, Matrix x,
                           std::span<const int> labels, Rng& rng, ReverseMode mode) {
    if (labels.size() != x.rows) throw std::invalid_argument("reverse_sample: one label per row required");
    NoGradGuard no_grad;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<int> steps(x.rows);
    for (int t = sched.steps(); t >= 1; --t) {
        std::fill(steps.begin(), steps.end(), t);
        const Tensor eps_hat = g(x.to_tensor(), steps, labels);
        const double beta = sched.beta(t);
        const double ab = sched.alpha_bar(t);
        const double eps_coef = beta > 0.0 ? beta / std::sqrt(1.0 - ab) : 0.0;
        const double coeff = mode == ReverseMode::standard ? 1.0 / std::sqrt(1.0 - beta) : 1.0 / ab;
        const double sigma = sched.sigma(t);
        const auto e = eps_hat.data();
        for (std::size_t i = 0; i < x.values.size(); ++i) {
            double v = coeff * (x.values[i] - eps_coef * e[i]);
            if (t > 1 && sigma > 0.0) v += sigma * normal(rng);
            if (!std::isfinite(v)) {
                throw std::runtime_error("reverse_sample: non-finite value at step t=" + std::to_string(t));
            }
            x.values[i] = v;
        }
    }
    return x;
}

}  // namespace gencal
