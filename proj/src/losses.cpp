#include "gencal/losses.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gencal/matrix.hpp"

namespace gencal {

namespace {

void check_labels(const char* op, std::span<const int> labels, std::size_t rows, std::size_t k) {
    if (labels.size() != rows) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(rows) + " rows but " +
                                    std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::out_of_range(std::string(op) + ": label " + std::to_string(y) + " outside [0," +
                                    std::to_string(k) + ")");
        }
    }
}

Tensor normalized(const char* op, const Tensor& feats) {
    try {
        return l2_normalize_rows(feats);
    } catch (const std::domain_error& e) {
        throw std::domain_error(std::string(op) + ": cosine similarity undefined (" + e.what() + ")");
    }
}

/// Weighted total sum(values * weights) with a constant weight matrix.
Tensor weighted_sum(const Tensor& values, std::vector<double> weights) {
    return sum(mul(values, Tensor::from_data(values.shape(), std::move(weights))));
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows();
    const std::size_t m = b.rows();
    const Tensor sq_a = sum(mul(a, a), 1);             // [n,1]
    const Tensor sq_b = sum(mul(b, b), 1);             // [m,1]
    const Tensor ones_m = Tensor::full({1, m}, 1.0);
    const Tensor ones_n = Tensor::full({n, 1}, 1.0);
    const Tensor cross = matmul(a, transpose(b));      // [n,m]
    return sub(add(matmul(sq_a, ones_m), matmul(ones_n, transpose(sq_b))), scale(cross, 2.0));
}

Tensor rbf_kernel(const Tensor& a, const Tensor& b, std::span<const double> bandwidths) {
    const Tensor d2 = pairwise_sq_dist(a, b);
    Tensor total;
    const double w = 1.0 / static_cast<double>(bandwidths.size());
    for (std::size_t i = 0; i < bandwidths.size(); ++i) {
        Tensor k = exp(scale(d2, -1.0 / (2.0 * bandwidths[i])));
        if (bandwidths.size() > 1) k = scale(k, w);
        total = i == 0 ? k : add(total, k);
    }
    return total;
}

}  // namespace

void KernelConfig::validate() const {
    for (double b : bandwidths) {
        if (!(b > 0.0)) throw std::invalid_argument("kernel: bandwidths must be positive");
    }
}

Tensor l_clr(const Tensor& feats, const ContrastiveConfig& cfg) {
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("l_clr: tau must be positive");
    if (feats.dim() != 2 || feats.rows() < 2 || feats.rows() % 2 != 0) {
        throw ShapeError("l_clr: expected [2B, d] paired features, got " + shape_str(feats.shape()));
    }
    const std::size_t two_b = feats.rows();
    const std::size_t b = two_b / 2;
    const Tensor z = normalized("l_clr", feats);
    std::vector<std::size_t> anchors(b);
    std::iota(anchors.begin(), anchors.end(), std::size_t{0});
    const Tensor sim = scale(matmul(index_select(z, anchors), transpose(z)), 1.0 / cfg.tau);  // [B,2B]

    std::vector<double> not_self(b * two_b, 1.0);
    std::vector<double> positive(b * two_b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        not_self[i * two_b + i] = 0.0;
        positive[i * two_b + i + b] = 1.0;
    }
    const Tensor denom = sum(mul(exp(sim), Tensor::from_data({b, two_b}, std::move(not_self))), 1);
    const Tensor pos = sum(mul(sim, Tensor::from_data({b, two_b}, std::move(positive))), 1);
    return sub(sum(log(denom)), sum(pos));
}

Tensor l_ce(const Tensor& probs, std::span<const int> labels) {
    if (probs.dim() != 2) throw ShapeError("l_ce: expected [B, K] probabilities, got " + shape_str(probs.shape()));
    check_labels("l_ce", labels, probs.rows(), probs.cols());
    const Tensor picked = sum(mul(probs, one_hot(labels, probs.cols())), 1);
    return scale(mean(log(clamp_min(picked, 1e-12))), -1.0);
}

double median_bandwidth(const Tensor& a, const Tensor& b) {
    std::vector<std::span<const double>> rows;
    const std::size_t d = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) rows.push_back(a.data().subspan(i * d, d));
    for (std::size_t i = 0; i < b.rows(); ++i) rows.push_back(b.data().subspan(i * d, d));
    std::vector<double> d2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += (rows[i][c] - rows[j][c]) * (rows[i][c] - rows[j][c]);
            d2.push_back(s);
        }
    }
    if (d2.empty()) return 1.0;
    std::sort(d2.begin(), d2.end());
    const std::size_t n = d2.size();
    const double med = n % 2 == 1 ? d2[n / 2] : 0.5 * (d2[n / 2 - 1] + d2[n / 2]);
    return med > 0.0 ? med : 1.0;
}

Tensor l_d(const LabeledBatch& real, const LabeledBatch& gen, const KernelConfig& cfg,
           std::size_t num_classes) {
    cfg.validate();
    if (real.feats.dim() != 2 || gen.feats.dim() != 2 || real.feats.cols() != gen.feats.cols()) {
        throw ShapeError("l_d: feature shapes " + shape_str(real.feats.shape()) + " and " +
                         shape_str(gen.feats.shape()) + " do not conform");
    }
    check_labels("l_d", real.labels, real.feats.rows(), num_classes);
    check_labels("l_d", gen.labels, gen.feats.rows(), num_classes);
    const std::size_t n = real.feats.rows();
    const std::size_t m = gen.feats.rows();

    std::vector<double> nr(num_classes, 0.0), ng(num_classes, 0.0);
    for (int y : real.labels) nr[static_cast<std::size_t>(y)] += 1.0;
    for (int y : gen.labels) ng[static_cast<std::size_t>(y)] += 1.0;
    auto active = [&](int y) { return nr[static_cast<std::size_t>(y)] > 0.0 && ng[static_cast<std::size_t>(y)] > 0.0; };

    std::vector<double> w_rr(n * n, 0.0), w_gg(m * m, 0.0), w_rg(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int yi = real.labels[i];
        if (!active(yi)) continue;
        const double cr = nr[static_cast<std::size_t>(yi)];
        const double cg = ng[static_cast<std::size_t>(yi)];
        for (std::size_t j = 0; j < n; ++j)
            if (real.labels[j] == yi) w_rr[i * n + j] = 1.0 / (cr * cr);
        for (std::size_t j = 0; j < m; ++j)
            if (gen.labels[j] == yi) w_rg[i * m + j] = 1.0 / (cr * cg);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const int yi = gen.labels[i];
        if (!active(yi)) continue;
        const double cg = ng[static_cast<std::size_t>(yi)];
        for (std::size_t j = 0; j < m; ++j)
            if (gen.labels[j] == yi) w_gg[i * m + j] = 1.0 / (cg * cg);
    }

    std::vector<double> bw = cfg.bandwidths;
    if (cfg.median()) bw = {median_bandwidth(real.feats, gen.feats)};

    const Tensor d_r = weighted_sum(rbf_kernel(real.feats, real.feats, bw), std::move(w_rr));
    const Tensor d_g = weighted_sum(rbf_kernel(gen.feats, gen.feats, bw), std::move(w_gg));
    const Tensor d_rg = weighted_sum(rbf_kernel(real.feats, gen.feats, bw), std::move(w_rg));
    return sub(add(d_r, d_g), scale(d_rg, 2.0));
}

Tensor l_cwm(const LabeledBatch& gen) {
    if (gen.feats.dim() != 2 || gen.feats.rows() == 0) {
        throw ShapeError("l_cwm: expected a nonempty [B, d] batch, got " + shape_str(gen.feats.shape()));
    }
    const std::size_t m = gen.feats.rows();
    if (gen.labels.size() != m) throw std::invalid_argument("l_cwm: one label per row required");
    const Tensor z = normalized("l_cwm", gen.feats);
    const Tensor sim = matmul(z, transpose(z));

    double n_diff = 0.0, n_same = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (gen.labels[i] != gen.labels[j]) n_diff += 1.0;
            else if (i != j) n_same += 1.0;
        }
    }
    std::vector<double> w(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (gen.labels[i] != gen.labels[j]) w[i * m + j] = 1.0 / n_diff;
            else if (i != j) w[i * m + j] = -1.0 / n_same;
        }
    }
    return weighted_sum(sim, std::move(w));
}

Tensor l_ml(const Tensor& probs, std::span<const int> labels) {
    if (probs.dim() != 2) throw ShapeError("l_ml: expected [B, K] probabilities, got " + shape_str(probs.shape()));
    const std::size_t b = probs.rows();
    const std::size_t k = probs.cols();
    check_labels("l_ml", labels, b, k);
    const Tensor p_label = sum(mul(probs, one_hot(labels, k)), 1);                  // [B,1]
    const Tensor diff = sub(probs, matmul(p_label, Tensor::full({1, k}, 1.0)));     // [B,K]
    std::vector<double> above(b * k, 0.0);
    const auto p = probs.data();
    for (std::size_t i = 0; i < b; ++i) {
        const double pj = p[i * k + static_cast<std::size_t>(labels[i])];
        for (std::size_t c = 0; c < k; ++c) above[i * k + c] = p[i * k + c] > pj ? 1.0 : 0.0;
    }
    return scale(weighted_sum(pow(diff, 2.0), std::move(above)), 1.0 / static_cast<double>(b));
}

}  // namespace gencal
