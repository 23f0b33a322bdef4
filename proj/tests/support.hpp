#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gencal/matrix.hpp"
#include "gencal/tensor.hpp"

namespace testing {

inline gencal::Tensor random_tensor(gencal::Shape shape, std::mt19937_64& rng, double scale = 1.0,
                                    bool requires_grad = false) {
    std::normal_distribution<double> normal(0.0, scale);
    std::vector<double> v(gencal::shape_numel(shape));
    for (double& x : v) x = normal(rng);
    return gencal::Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::vector<int> out(n);
    for (int& y : out) y = pick(rng);
    return out;
}

/// Best agreement over all relabelings, by enumeration.
inline double brute_accuracy(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (perm[static_cast<std::size_t>(pred[i])] == truth[i]) ++hits;
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(pred.size());
}

inline double brute_assignment_cost(const gencal::Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < cost.rows; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
