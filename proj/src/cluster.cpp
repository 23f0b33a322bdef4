#include "gencal/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace gencal {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

Matrix kmeanspp_seed(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows;
    Matrix centers(k, x.cols);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
        std::copy_n(x.row(pick).begin(), x.cols, centers.row(c).begin());
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(x.row(i), centers.row(c)));
            total += d2[i];
        }
        if (total > 0.0) {
            const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
    }
    return centers;
}

double assign(const Matrix& x, const Matrix& centers, std::vector<int>& out) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < centers.rows; ++c) {
            const double d = sq_dist(x.row(i), centers.row(c));
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        out[i] = arg;
        inertia += best;
    }
    return inertia;
}

void recompute_centroid(const Matrix& x, const std::vector<int>& assign, std::size_t c, Matrix& centers) {
    auto row = centers.row(c);
    std::fill(row.begin(), row.end(), 0.0);
    double count = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        if (assign[i] != static_cast<int>(c)) continue;
        for (std::size_t j = 0; j < x.cols; ++j) row[j] += x(i, j);
        count += 1.0;
    }
    if (count > 0.0)
        for (double& v : row) v /= count;
}

ClusterResult kmeans_once(const Matrix& feats, std::size_t kk, Rng& rng, int max_iter, double tol) {
    ClusterResult res;
    res.centroids = kmeanspp_seed(feats, kk, rng);
    res.assignments.assign(feats.rows, 0);

    for (int it = 0; it < max_iter; ++it) {
        res.inertia_trace.push_back(assign(feats, res.centroids, res.assignments));
        res.iterations = it + 1;
        Matrix next(kk, feats.cols);
        std::vector<std::size_t> counts(kk, 0);
        for (int a : res.assignments) ++counts[static_cast<std::size_t>(a)];
        for (std::size_t c = 0; c < kk; ++c) recompute_centroid(feats, res.assignments, c, next);
        for (std::size_t e = 0; e < kk; ++e) {
            if (counts[e] != 0) continue;
            const auto largest = static_cast<std::size_t>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < feats.rows; ++i) {
                if (res.assignments[i] != static_cast<int>(largest)) continue;
                const double d = sq_dist(feats.row(i), next.row(largest));
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            res.assignments[far] = static_cast<int>(e);
            --counts[largest];
            ++counts[e];
            std::copy_n(feats.row(far).begin(), feats.cols, next.row(e).begin());
            recompute_centroid(feats, res.assignments, largest, next);
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < kk; ++c) shift = std::max(shift, std::sqrt(sq_dist(next.row(c), res.centroids.row(c))));
        res.centroids = std::move(next);
        if (shift < tol) break;
    }
    res.inertia = assign(feats, res.centroids, res.assignments);
    res.inertia_trace.push_back(res.inertia);
    return res;
}

}  // namespace

ClusterResult kmeans(const Matrix& feats, int k, std::uint64_t seed, int max_iter, double tol, int restarts) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");
    const auto kk = static_cast<std::size_t>(k);
    if (feats.rows < kk) {
        throw std::invalid_argument("kmeans: need at least k=" + std::to_string(k) + " points, got " +
                                    std::to_string(feats.rows));
    }
    Rng rng = make_rng(seed, 7);
    ClusterResult best = kmeans_once(feats, kk, rng, max_iter, tol);
    for (int r = 1; r < restarts; ++r) {
        ClusterResult cand = kmeans_once(feats, kk, rng, max_iter, tol);
        if (cand.inertia < best.inertia) best = std::move(cand);
    }
    return best;
}

Assignment hungarian(const Matrix& cost) {
    if (cost.rows != cost.cols) {
        throw std::invalid_argument("hungarian: cost matrix must be square, got " + std::to_string(cost.rows) +
                                    "x" + std::to_string(cost.cols));
    }
    const std::size_t n = cost.rows;
    for (double v : cost.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("hungarian: costs must be finite");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials formulation; p[j] is the row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment a;
    a.row_to_col.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) a.row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    for (std::size_t i = 0; i < n; ++i) a.cost += cost(i, static_cast<std::size_t>(a.row_to_col[i]));
    return a;
}

namespace {

void check_pair(const char* op, std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument(std::string(op) + ": length mismatch " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(truth.size()));
    }
    if (pred.empty()) throw std::invalid_argument(std::string(op) + ": empty partitions");
}

/// Dense contingency over the distinct values actually present.
struct Table {
    std::vector<std::vector<double>> counts;
    std::vector<double> row_sums, col_sums;
    double n = 0.0;
};

Table compact_table(std::span<const int> pred, std::span<const int> truth) {
    std::map<int, std::size_t> pi, ti;
    for (int v : pred) pi.emplace(v, 0);
    for (int v : truth) ti.emplace(v, 0);
    std::size_t idx = 0;
    for (auto& [key, val] : pi) val = idx++;
    idx = 0;
    for (auto& [key, val] : ti) val = idx++;
    Table t;
    t.counts.assign(pi.size(), std::vector<double>(ti.size(), 0.0));
    t.row_sums.assign(pi.size(), 0.0);
    t.col_sums.assign(ti.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::size_t r = pi[pred[i]];
        const std::size_t c = ti[truth[i]];
        t.counts[r][c] += 1.0;
        t.row_sums[r] += 1.0;
        t.col_sums[c] += 1.0;
    }
    t.n = static_cast<double>(pred.size());
    return t;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

Matrix contingency(std::span<const int> pred, std::span<const int> truth, int k) {
    check_pair("contingency", pred, truth);
    const auto kk = static_cast<std::size_t>(k);
    Matrix c(kk, kk);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= k || truth[i] < 0 || truth[i] >= k) {
            throw std::out_of_range("contingency: label outside [0," + std::to_string(k) + ")");
        }
        c(static_cast<std::size_t>(pred[i]), static_cast<std::size_t>(truth[i])) += 1.0;
    }
    return c;
}

double accuracy(std::span<const int> pred, std::span<const int> truth, int k) {
    const Matrix c = contingency(pred, truth, k);
    Matrix cost = c;
    for (double& v : cost.values) v = -v;
    const Assignment a = hungarian(cost);
    return -a.cost / static_cast<double>(pred.size());
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
    check_pair("nmi", pred, truth);
    const Table t = compact_table(pred, truth);
    auto entropy = [&](const std::vector<double>& sums) {
        double h = 0.0;
        for (double s : sums)
            if (s > 0.0) h -= s / t.n * std::log(s / t.n);
        return h;
    };
    const double hp = entropy(t.row_sums);
    const double ht = entropy(t.col_sums);
    if (hp == 0.0 || ht == 0.0) return (hp == 0.0 && ht == 0.0) ? 1.0 : 0.0;
    double mi = 0.0;
    for (std::size_t r = 0; r < t.counts.size(); ++r) {
        for (std::size_t c = 0; c < t.counts[r].size(); ++c) {
            const double nij = t.counts[r][c];
            if (nij > 0.0) mi += nij / t.n * std::log(t.n * nij / (t.row_sums[r] * t.col_sums[c]));
        }
    }
    return mi / std::sqrt(hp * ht);
}

double ari(std::span<const int> pred, std::span<const int> truth) {
    check_pair("ari", pred, truth);
    const Table t = compact_table(pred, truth);
    double index = 0.0;
    for (const auto& row : t.counts)
        for (double nij : row) index += comb2(nij);
    double a = 0.0, b = 0.0;
    for (double s : t.row_sums) a += comb2(s);
    for (double s : t.col_sums) b += comb2(s);
    const double total = comb2(t.n);
    const double expected = total > 0.0 ? a * b / total : 0.0;
    const double max_index = 0.5 * (a + b);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

MetricsRecord evaluate(std::span<const int> pred, std::span<const int> truth, int k) {
    return {accuracy(pred, truth, k), nmi(pred, truth), ari(pred, truth)};
}

std::vector<int> pseudo_labels(const Tensor& probs) {
    if (probs.dim() != 2) throw ShapeError("pseudo_labels: expected [B, K], got " + shape_str(probs.shape()));
    const std::size_t k = probs.cols();
    std::vector<int> out(probs.rows());
    const auto p = probs.data();
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (p[i * k + c] > p[i * k + best]) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace gencal
