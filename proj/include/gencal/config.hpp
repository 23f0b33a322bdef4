#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gencal/data.hpp"
#include "gencal/diffusion.hpp"
#include "gencal/losses.hpp"

namespace gencal {

/// Which Stage-II calibration term is removed.
enum class Ablation { full, no_d, no_cwm, no_ml };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& text);

/// How conditioning labels for generated batches are chosen.
enum class GenLabelMode {
    copy,     // the real batch's pseudo-label multiset
    uniform,  // uniform over the K classes
};

struct DatasetConfig {
    DatasetKind kind = DatasetKind::blobs;
    int k = 4;
    std::size_t per_class = 100;
    std::size_t dim = 8;         // blobs
    double separation = 8.0;     // blobs, rings
    std::size_t side = 8;        // glyphs
    double noise = 0.3;          // glyphs, rings
};

struct TrainConfig {
    DatasetConfig dataset;

    std::vector<std::size_t> feature_hidden{128, 128};
    std::size_t feature_dim = 32;
    bool normalize_features = true;
    std::size_t head_hidden = 64;
    std::vector<std::size_t> denoiser_hidden{256, 256, 256};
    std::size_t time_dim = 32;
    std::size_t label_dim = 32;

    int diffusion_steps = 200;
    double beta_start = 5e-4;
    double beta_end = 0.1;
    ReverseMode reverse_mode = ReverseMode::standard;

    ContrastiveConfig contrastive;
    KernelConfig kernel;
    double weight_d = 1.0;
    double weight_cwm = 1.0;
    double weight_ml = 1.0;

    /// rotate_side and clamp_unit are filled in from the dataset kind.
    AugmentSpec augment{0.5, 0.1, 0.8, 1.2, 0, false};
    bool augment_rotate = false;  // glyphs only

    double lr_pretrain = 1e-3;
    double lr_head = 1e-3;
    double lr_ddpm_pre = 1e-3;
    double lr_cluster = 1e-4;
    double lr_denoiser = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    int epochs_pretrain = 50;
    int epochs_head = 20;
    int epochs_ddpm = 60;
    int epochs_stage2 = 5;
    int epochs_refresh = 2;
    int rounds = 5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    bool normalize_data = true;
    GenLabelMode gen_labels = GenLabelMode::copy;
    Ablation ablation = Ablation::full;
    std::optional<ImbalanceSpec> imbalance;
    std::size_t samples_per_class = 16;

    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

/// Malformed config text, unknown key or invalid value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` text; `#` starts a comment. Unknown keys are errors;
/// missing keys keep their defaults.
TrainConfig parse_config(std::istream& is);
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Applies one key (same keys as the file format).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);
std::vector<std::string> config_keys();

std::string format_double(double v);

}  // namespace gencal
