#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gencal/matrix.hpp"
#include "gencal/nets.hpp"

namespace gencal {

/// beta_t, cumulative alpha_bar_t and posterior stddev sigma(t) for t = 1..T.
/// alpha_bar(0) is defined as 1.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { return beta_.at(index(t)); }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(index(t)); }
    double sigma(int t) const { return sigma_.at(index(t)); }
    std::span<const double> betas() const { return beta_; }

    friend NoiseSchedule custom_schedule(std::vector<double> betas);
    friend NoiseSchedule unchecked_schedule(std::vector<double> betas);

private:
    std::size_t index(int t) const;
    static NoiseSchedule build(std::vector<double> betas);

    std::vector<double> beta_;
    std::vector<double> alpha_bar_;
    std::vector<double> sigma_;
};

/// beta linearly interpolated from beta_start (t=1) to beta_end (t=T).
NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end);
/// Validates 0 < beta_t < 1.
NoiseSchedule custom_schedule(std::vector<double> betas);
/// No validation; degenerate schedules (e.g. all-zero betas) for tests.
NoiseSchedule unchecked_schedule(std::vector<double> betas);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, row-wise t.
Matrix forward_diffuse(const NoiseSchedule& sched, const Matrix& x0, std::span<const int> t,
                       const Matrix& eps);

using NoisePredictor =
    std::function<Tensor(const Tensor& x_t, std::span<const int> t, std::span<const int> labels)>;

NoisePredictor predictor_of(const Denoiser& g);

struct DiffusionDraws {
    std::vector<int> t;
    Matrix eps;
};

/// t ~ Uniform{1..T} per row and eps ~ N(0, I).
DiffusionDraws draw_diffusion(const NoiseSchedule& sched, std::size_t rows, std::size_t cols, Rng& rng);

/// Mean over rows and coordinates of (eps - eps_G(x_t, y, t))^2.
Tensor ddpm_loss(const NoisePredictor& g, const NoiseSchedule& sched, const Matrix& x0,
                 std::span<const int> labels, const DiffusionDraws& draws);
Tensor ddpm_loss(const NoisePredictor& g, const NoiseSchedule& sched, const Matrix& x0,
                 std::span<const int> labels, Rng& rng);

enum class ReverseMode {
    /// mean coefficient 1/sqrt(1 - beta_t)
    standard,
    /// mean coefficient 1/alpha_bar_t
    paper_literal,
};

std::string to_string(ReverseMode mode);
ReverseMode parse_reverse_mode(const std::string& text);

/// Ancestral sampling from x_T ~ N(0, I) down to t = 1 (no noise at the last step).
Matrix reverse_sample(const NoisePredictor& g, const NoiseSchedule& sched, std::size_t dim,
                      std::span<const int> labels, Rng& rng, ReverseMode mode = ReverseMode::standard);
/// Same chain from a caller-supplied x_T.
Matrix reverse_sample_from(const NoisePredictor& g, const NoiseSchedule& sched, Matrix x_T,
                           std::span<const int> labels, Rng& rng,
                           ReverseMode mode = ReverseMode::standard);

}  // namespace gencal
