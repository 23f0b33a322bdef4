#include <cmath>

#include "doctest.h"
#include "gencal/diffusion.hpp"
#include "support.hpp"

using namespace gencal;

namespace {

NoisePredictor zero_predictor() {
    return [](const Tensor& x, std::span<const int>, std::span<const int>) { return Tensor::zeros(x.shape()); };
}

/// The exact noise predictor for data concentrated at the constant c.
NoisePredictor point_mass_predictor(const NoiseSchedule& s, double c) {
    return [&s, c](const Tensor& x, std::span<const int> t, std::span<const int>) {
        std::vector<double> v(x.numel());
        const auto d = x.data();
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double ab = s.alpha_bar(t[r]);
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const std::size_t i = r * x.cols() + j;
                v[i] = (d[i] - std::sqrt(ab) * c) / std::sqrt(1.0 - ab);
            }
        }
        return Tensor::from_data(x.shape(), std::move(v));
    };
}

/// The exact noise predictor for standard normal data: E[eps | x_t] = sqrt(1 - alpha_bar_t) x_t.
NoisePredictor gaussian_predictor(const NoiseSchedule& s) {
    return [&s](const Tensor& x, std::span<const int> t, std::span<const int>) {
        std::vector<double> v(x.data().begin(), x.data().end());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t j = 0; j < x.cols(); ++j) v[r * x.cols() + j] *= std::sqrt(1.0 - s.alpha_bar(t[r]));
        return Tensor::from_data(x.shape(), std::move(v));
    };
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("schedule products") {
    const NoiseSchedule one = linear_schedule(1, 0.1, 0.1);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.9));
    CHECK(one.alpha_bar(0) == 1.0);
    const NoiseSchedule two = custom_schedule({0.1, 0.2});
    CHECK(two.alpha_bar(1) == doctest::Approx(0.9));
    CHECK(two.alpha_bar(2) == doctest::Approx(0.72));
    CHECK(two.sigma(1) == 0.0);
    CHECK(two.sigma(2) == doctest::Approx(std::sqrt(0.1 / 0.28 * 0.2)));
    CHECK_THROWS_AS(two.beta(3), std::out_of_range);
}

TEST_CASE("terminal alpha_bar of the linear schedules") {
    // The classic [1e-4, 0.02] range over only 200 steps leaves a lot of signal.
    double prod = 1.0;
    for (int i = 0; i < 200; ++i) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 199.0);
    const NoiseSchedule classic = linear_schedule(200, 1e-4, 0.02);
    CHECK(classic.alpha_bar(200) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(classic.alpha_bar(200) == doctest::Approx(0.1322).epsilon(1e-3));
    // The default range is rescaled so the chain ends near pure noise.
    CHECK(linear_schedule(200, 5e-4, 0.1).alpha_bar(200) < 0.05);
}

TEST_CASE("schedule validation") {
    CHECK_THROWS(linear_schedule(0, 0.1, 0.2));
    CHECK_THROWS(linear_schedule(10, 0.2, 0.1));
    CHECK_THROWS(linear_schedule(10, 0.0, 0.1));
    CHECK_THROWS(custom_schedule({0.5, 1.0}));
    CHECK_NOTHROW(unchecked_schedule({0.0, 0.0}));
}

TEST_CASE("forward diffusion limits") {
    const NoiseSchedule s = linear_schedule(10, 0.01, 0.2);
    const Matrix x0(2, 3, std::vector<double>{1, 2, 3, -1, 0, 4});
    const std::vector<int> t{3, 10};
    const Matrix det = forward_diffuse(s, x0, t, Matrix(2, 3));
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(det(r, c) == doctest::Approx(std::sqrt(s.alpha_bar(t[r])) * x0(r, c)));

    Rng rng = make_rng(0);
    const Matrix eps = standard_normal(2, 3, rng);
    CHECK(forward_diffuse(unchecked_schedule(std::vector<double>(10, 0.0)), x0, t, eps) == x0);
    CHECK_THROWS_AS(forward_diffuse(s, x0, std::vector<int>{0, 1}, eps), std::out_of_range);
    CHECK_THROWS(forward_diffuse(s, x0, std::vector<int>{1}, eps));
}

TEST_CASE("terminal marginal variance from pure noise") {
    const NoiseSchedule s = linear_schedule(200, 5e-4, 0.1);
    const std::size_t n = 10000;
    Rng rng = make_rng(1);
    const Matrix eps = standard_normal(n, 1, rng);
    const Matrix xt = forward_diffuse(s, Matrix(n, 1), std::vector<int>(n, 200), eps);
    double s1 = 0.0, s2 = 0.0;
    for (double v : xt.values) {
        s1 += v;
        s2 += v * v;
    }
    const double var = s2 / n - (s1 / n) * (s1 / n);
    CHECK(std::abs(var - (1.0 - s.alpha_bar(200))) / (1.0 - s.alpha_bar(200)) < 0.03);
}

TEST_CASE("ddpm loss of exact and zero predictors") {
    const NoiseSchedule s = linear_schedule(50, 5e-4, 0.1);
    Rng rng = make_rng(2);
    const Matrix x0 = standard_normal(1000, 10, rng);
    const std::vector<int> y(1000, 0);
    const DiffusionDraws draws = draw_diffusion(s, 1000, 10, rng);
    const Matrix eps = draws.eps;
    const NoisePredictor exact = [&eps](const Tensor&, std::span<const int>, std::span<const int>) {
        return eps.to_tensor();
    };
    CHECK(ddpm_loss(exact, s, x0, y, draws).item() == 0.0);
    const double zero = ddpm_loss(zero_predictor(), s, x0, y, draws).item();
    CHECK(std::abs(zero - 1.0) < 0.05);
    CHECK(zero >= 0.0);
    for (int t : draws.t) {
        CHECK(t >= 1);
        CHECK(t <= 50);
    }
}

TEST_CASE("ddpm loss gradients with frozen draws") {
    const NoiseSchedule s = linear_schedule(20, 5e-4, 0.1);
    for (unsigned trial = 0; trial < 3; ++trial) {
        Rng rng = make_rng(10 + trial);
        Denoiser g({3, 2, 20, {10, 10}, 4, 4}, rng);
        const Matrix x0 = standard_normal(6, 3, rng);
        const std::vector<int> y{0, 1, 0, 1, 1, 0};
        const DiffusionDraws draws = draw_diffusion(s, 6, 3, rng);
        auto params = values_of(g.named_parameters("G."));
        const auto res = finite_diff_check_params([&] { return ddpm_loss(predictor_of(g), s, x0, y, draws); },
                                                  params, 1e-5, 8, trial);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("zero-beta chain with a zero denoiser is the identity") {
    const NoiseSchedule s = unchecked_schedule(std::vector<double>(25, 0.0));
    Rng rng = make_rng(3);
    const Matrix x_T = standard_normal(4, 3, rng);
    const std::vector<int> y{0, 1, 0, 1};
    for (ReverseMode mode : {ReverseMode::standard, ReverseMode::paper_literal}) {
        Rng r = make_rng(4);
        CHECK(reverse_sample_from(zero_predictor(), s, x_T, y, r, mode) == x_T);
    }
}

TEST_CASE("sampling is seeded") {
    const NoiseSchedule s = linear_schedule(30, 5e-4, 0.1);
    const std::vector<int> y{0, 1, 1};
    Rng a = make_rng(5), b = make_rng(5);
    const auto g = point_mass_predictor(s, 0.5);
    CHECK(reverse_sample(g, s, 4, y, a) == reverse_sample(g, s, 4, y, b));
}

TEST_CASE("one-step chain reconstructs a point mass") {
    const NoiseSchedule s = linear_schedule(1, 0.3, 0.3);
    const double c = 1.7;
    const std::size_t n = 4000;
    Rng rng = make_rng(6);
    const Matrix out = reverse_sample(point_mass_predictor(s, c), s, 1, std::vector<int>(n, 0), rng);
    double m = 0.0;
    for (double v : out.values) m += v;
    m /= n;
    CHECK(std::abs(m - c) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("standard sampling keeps unit-variance data at unit scale; the literal coefficient diverges") {
    for (int steps : {15, 50, 200}) {
        CAPTURE(steps);
        const NoiseSchedule s = linear_schedule(steps, 5e-4, 0.1);
        const auto g = gaussian_predictor(s);
        const std::vector<int> y(500, 0);
        auto rms = [](const Matrix& m) {
            double acc = 0.0;
            for (double v : m.values) acc += v * v;
            return std::sqrt(acc / static_cast<double>(m.values.size()));
        };
        Rng a = make_rng(7), b = make_rng(7);
        const double std_rms = rms(reverse_sample(g, s, 2, y, a, ReverseMode::standard));
        CHECK(std::abs(std_rms - 1.0) < 0.1);

        double lit_rms = INFINITY;
        try {
            lit_rms = rms(reverse_sample(g, s, 2, y, b, ReverseMode::paper_literal));
        } catch (const std::runtime_error&) {
            // overflow to a non-finite value counts as divergence
        }
        CHECK(lit_rms > 10.0 * std_rms);
    }
}

TEST_CASE("reverse mode names") {
    CHECK(parse_reverse_mode("standard") == ReverseMode::standard);
    CHECK(to_string(ReverseMode::paper_literal) == "paper_literal");
    CHECK_THROWS(parse_reverse_mode("ddim"));
}

}
