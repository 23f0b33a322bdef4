#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gencal/matrix.hpp"

namespace gencal {

enum class DatasetKind { blobs, rings, glyphs };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

/// Generated samples with hidden ground-truth labels. Labels are only ever
/// read by evaluation code.
struct Dataset {
    Matrix samples;
    std::vector<int> labels;
    int num_classes = 0;
    DatasetKind kind = DatasetKind::blobs;
    std::size_t glyph_side = 0;  // nonzero for glyph datasets

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return samples.cols; }
    std::vector<std::size_t> class_counts() const;
    Dataset subset(std::span<const std::size_t> idx) const;
};

/// K unit-variance isotropic Gaussian clusters. Centers are drawn in the
/// box [-separation, separation]^dim with pairwise distance >= separation.
Dataset make_blobs(int k, std::size_t per_class, std::size_t dim, double separation,
                   std::uint64_t seed);

/// Unit-variance blobs around explicitly given centers (one row per class).
Dataset make_blobs_at(const Matrix& centers, std::size_t per_class, std::uint64_t seed);

/// Concentric 2-D rings of radius separation*(k+1) with radial Gaussian noise.
Dataset make_rings(int k, std::size_t per_class, double separation, double noise_sigma,
                   std::uint64_t seed);

inline constexpr int kGlyphTemplateCount = 10;

/// side x side template for glyph `index`, values in {-1, +1}.
std::vector<double> glyph_template(int index, std::size_t side);

Dataset make_glyphs(int k, std::size_t per_class, std::size_t side, double noise_sigma,
                    std::uint64_t seed);

struct AugmentSpec {
    double noise_sigma = 0.0;
    double mask_prob = 0.0;
    double jitter_min = 1.0;
    double jitter_max = 1.0;
    /// Side length for random 90-degree rotations; 0 disables them.
    std::size_t rotate_side = 0;
    /// Clamp output to [-1, 1] (glyph convention).
    bool clamp_unit = false;

    void validate() const;
};

/// Scale jitter, additive noise, coordinate masking, optional rotation,
/// then optional clamping. Each call draws fresh randomness.
std::vector<double> augment(std::span<const double> x, const AugmentSpec& spec, Rng& rng);
Matrix augment_rows(const Matrix& x, const AugmentSpec& spec, Rng& rng);

struct ImbalanceSpec {
    std::vector<double> keep_fraction;

    void validate(int num_classes) const;
};

/// Class k keeps ceil(fraction_k * count_k) samples drawn without
/// replacement; retained samples keep their original order.
Dataset apply_imbalance(const Dataset& d, const ImbalanceSpec& spec, std::uint64_t seed);

/// Stratified split; returns (train, test) index lists in ascending order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const Dataset& d, double test_fraction, std::uint64_t seed);

// CSV: header `label,f0,f1,...`, one sample per line.
void write_csv(std::ostream& os, const Matrix& samples, std::span<const int> labels);
void write_csv(const std::filesystem::path& path, const Matrix& samples, std::span<const int> labels);
Dataset read_csv(std::istream& is);
Dataset read_csv(const std::filesystem::path& path);

}  // namespace gencal
