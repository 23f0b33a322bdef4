#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gencal/matrix.hpp"

namespace gencal {

struct ClusterResult {
    std::vector<int> assignments;
    Matrix centroids;
    double inertia = 0.0;
    int iterations = 0;
    /// Inertia after each assignment step.
    std::vector<double> inertia_trace;

    friend bool operator==(const ClusterResult&, const ClusterResult&) = default;
};

/// k-means++ seeding followed by Lloyd iterations until the largest
/// centroid shift drops below tol. An emptied cluster takes the point
/// farthest from its centroid in the currently largest cluster. The
/// lowest-inertia result over `restarts` seedings is returned.
ClusterResult kmeans(const Matrix& feats, int k, std::uint64_t seed, int max_iter = 300,
                     double tol = 1e-6, int restarts = 10);

struct Assignment {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres).
Assignment hungarian(const Matrix& cost);

/// counts(p, t) = number of samples with prediction p and truth t.
Matrix contingency(std::span<const int> pred, std::span<const int> truth, int k);

/// Best agreement fraction over one-to-one relabelings of pred.
double accuracy(std::span<const int> pred, std::span<const int> truth, int k);
/// Mutual information normalized by the geometric mean of the entropies.
double nmi(std::span<const int> pred, std::span<const int> truth);
double ari(std::span<const int> pred, std::span<const int> truth);

struct MetricsRecord {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
};

MetricsRecord evaluate(std::span<const int> pred, std::span<const int> truth, int k);

/// Row argmax of a probability matrix; ties resolve to the lowest index.
std::vector<int> pseudo_labels(const Tensor& probs);

}  // namespace gencal
