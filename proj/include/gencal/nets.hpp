#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gencal/matrix.hpp"

namespace gencal {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Affine map x W + b with W stored [in, out].
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    /// Kaiming fan-in normal weights, zero bias.
    Linear(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }
    Tensor operator()(const Tensor& x) const;
    Linear clone() const { return {weight.clone(), bias.clone()}; }

private:
    Linear(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {}
};

struct FeatureExtractorConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{128, 128};
    std::size_t feature_dim = 32;
    bool normalize = true;
};

/// MLP encoder mapping samples to the feature space; rows are unit-norm
/// when normalization is on.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(const FeatureExtractorConfig& cfg, Rng& rng);

    Tensor operator()(const Tensor& batch) const;
    const FeatureExtractorConfig& config() const { return cfg_; }
    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }
    NamedTensors named_parameters(const std::string& prefix) const;
    FeatureExtractor clone() const;

private:
    FeatureExtractorConfig cfg_;
    std::vector<Linear> layers_;
};

struct ClusteringHeadConfig {
    std::size_t feature_dim = 32;
    std::size_t hidden = 64;
    std::size_t num_classes = 2;
};

/// Two fully-connected layers followed by a row softmax.
class ClusteringHead {
public:
    ClusteringHead() = default;
    ClusteringHead(const ClusteringHeadConfig& cfg, Rng& rng);

    /// Pre-softmax scores.
    Tensor scores(const Tensor& feats) const;
    /// Row-stochastic cluster probabilities.
    Tensor operator()(const Tensor& feats) const { return softmax_rows(scores(feats)); }
    const ClusteringHeadConfig& config() const { return cfg_; }
    Linear& hidden() { return hidden_; }
    Linear& output() { return output_; }
    NamedTensors named_parameters(const std::string& prefix) const;
    ClusteringHead clone() const;

private:
    ClusteringHeadConfig cfg_;
    Linear hidden_;
    Linear output_;
};

struct DenoiserConfig {
    std::size_t data_dim = 0;
    std::size_t num_classes = 2;
    std::size_t max_t = 200;
    std::vector<std::size_t> hidden{256, 256, 256};
    std::size_t time_dim = 32;
    std::size_t label_dim = 32;
};

/// Sinusoidal embedding [sin(t f_0..f_{h-1}), cos(t f_0..f_{h-1})].
Tensor time_embedding(std::span<const int> t, std::size_t dim);

/// Conditional noise predictor: concat(x_t, time embedding, label
/// embedding) through a residual MLP back to the data dimension.
class Denoiser {
public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, Rng& rng);

    Tensor predict_noise(const Tensor& x_t, std::span<const int> t, std::span<const int> labels) const;
    const DenoiserConfig& config() const { return cfg_; }
    Tensor& label_table() { return label_table_; }
    const Tensor& label_table() const { return label_table_; }
    std::vector<Linear>& layers() { return layers_; }
    Linear& output() { return output_; }
    NamedTensors named_parameters(const std::string& prefix) const;
    Denoiser clone() const;

private:
    DenoiserConfig cfg_;
    Tensor label_table_;  // [num_classes, label_dim]
    std::vector<Linear> layers_;
    Linear output_;
};

/// Scalar affine map applied to raw samples before any network sees them.
struct DataNorm {
    double shift = 0.0;
    double scale = 1.0;

    static DataNorm fit(const Matrix& samples);
    Matrix apply(const Matrix& raw) const;
    Matrix invert(const Matrix& normalized) const;
};

struct ModelSet {
    FeatureExtractor feature;
    ClusteringHead head;
    Denoiser denoiser;
    DataNorm norm;

    NamedTensors named_parameters() const;
    std::vector<Tensor> feature_parameters() const;
    std::vector<Tensor> head_parameters() const;
    std::vector<Tensor> denoiser_parameters() const;
    ModelSet clone() const;
};

std::size_t parameter_count(const NamedTensors& params);
std::vector<Tensor> values_of(const NamedTensors& params);

/// FNV-1a over the raw bytes of every value, in order.
std::uint64_t hash_values(std::span<const Tensor> tensors);
std::string hex64(std::uint64_t v);

// Checkpoint layout (all integers little-endian, values IEEE-754 binary64 LE):
//   8 bytes  magic "GENCALCK"
//   u32      format version (kCheckpointVersion)
//   u32      tensor count
//   per tensor: u32 name length, name bytes (UTF-8), u32 ndim, u64 dims[ndim],
//               f64 values[prod(dims)] in row-major order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const NamedTensors& tensors);
void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& is);
NamedTensors read_checkpoint(const std::filesystem::path& path);

/// Serializes a ModelSet (including its DataNorm as tensor "norm").
NamedTensors checkpoint_entries(const ModelSet& models);
/// Copies values from entries into models; names and shapes must match.
void load_checkpoint_entries(ModelSet& models, const NamedTensors& entries);
std::string checkpoint_bytes(const NamedTensors& tensors);

}  // namespace gencal
