#pragma once

#include <span>
#include <vector>

#include "gencal/tensor.hpp"

namespace gencal {

struct ContrastiveConfig {
    double tau = 0.5;
};

/// Gaussian RBF kernel exp(-|a-b|^2 / (2 sigma^2)). An empty bandwidth
/// list selects the median heuristic on the pooled batch.
struct KernelConfig {
    std::vector<double> bandwidths;  // sigma^2 values

    bool median() const { return bandwidths.empty(); }
    void validate() const;
};

/// Features with one label per row (pseudo labels for real samples,
/// conditioning labels for generated ones).
struct LabeledBatch {
    Tensor feats;
    std::vector<int> labels;
};

/// Contrastive loss over a [2B, d] batch whose row i + B is the transformed
/// view of row i; summed over the first B anchors.
Tensor l_clr(const Tensor& feats, const ContrastiveConfig& cfg);

/// Batch mean of -log(max(p[i, y_i], 1e-12)).
Tensor l_ce(const Tensor& probs, std::span<const int> labels);

/// Per-class biased kernel MMD between real and generated features,
/// summed over classes present in both batches.
Tensor l_d(const LabeledBatch& real, const LabeledBatch& gen, const KernelConfig& cfg,
           std::size_t num_classes);

/// Mean cross-label cosine similarity minus mean same-label (i != j)
/// cosine similarity. An empty pair set contributes 0.
Tensor l_cwm(const LabeledBatch& gen);

/// Batch mean of sum_k [p_ik > p_ij] (p_ik - p_ij)^2 where j is the row's
/// conditioning label. The indicator is a constant under differentiation.
Tensor l_ml(const Tensor& probs, std::span<const int> labels);

/// sigma^2 picked by the median heuristic: median pairwise squared
/// distance over the pooled rows, falling back to 1 when it is 0.
double median_bandwidth(const Tensor& a, const Tensor& b);

}  // namespace gencal
