#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gencal/cluster.hpp"
#include "gencal/config.hpp"
#include "gencal/diffusion.hpp"
#include "gencal/nets.hpp"
#include "gencal/optim.hpp"

namespace gencal {

/// A phase produced a non-finite loss; carries phase/epoch/step context.
class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters hashed before and after a phase that must leave them untouched.
struct FreezeCheck {
    std::string phase;
    std::string group;
    std::string before;
    std::string after;

    bool held() const { return before == after; }
};

/// Models plus optimizer state carried from Stage I into every Stage-II round.
struct TrainingState {
    ModelSet models;
    NoiseSchedule schedule;
    std::optional<Adam> cluster_opt;   // F + C, Stage II
    std::optional<Adam> denoiser_opt;  // G, pretraining and refresh

    TrainingState clone() const;
};

struct Stage1Result {
    TrainingState state;
    std::vector<double> clr_trace;
    std::vector<double> ce_trace;
    std::vector<double> ddpm_trace;
    std::vector<int> kmeans_labels;
    std::vector<FreezeCheck> freeze_checks;
};

NoiseSchedule schedule_for(const TrainConfig& cfg);
ModelSet build_models(const TrainConfig& cfg, std::size_t data_dim, Rng& rng);
AugmentSpec augment_for(const TrainConfig& cfg, const Dataset& d);

/// Contrastive pretraining of F, then C on K-means pseudo labels with F
/// frozen, then the denoiser on head pseudo labels with F and C frozen.
Stage1Result stage1(const TrainConfig& cfg, const Dataset& train, Rng& rng);

/// The Stage-II objective for one real batch (already normalized).
struct Stage2Objective {
    Tensor total;
    Tensor l_d;
    Tensor l_cwm;
    Tensor l_ml;
    Tensor real_feats;
    Tensor gen_feats;
    std::vector<int> labels;  // pseudo labels of the real batch
    std::vector<int> cond_labels;
    Matrix generated;
};

Stage2Objective stage2_objective(const TrainConfig& cfg, const ModelSet& models,
                                 const NoiseSchedule& sched, const Matrix& real_batch, Rng& rng);

struct RoundTrace {
    int round = 0;
    std::vector<double> l_d, l_cwm, l_ml, total;
    std::vector<double> ddpm_refresh;
    std::vector<FreezeCheck> freeze_checks;
};

/// Calibration epochs on F and C with the denoiser frozen, then denoiser
/// refresh epochs on current head pseudo labels with F and C frozen.
RoundTrace stage2_round(const TrainConfig& cfg, TrainingState& state, const Dataset& train,
                        Rng& rng, int round);

struct Evaluation {
    MetricsRecord metrics;
    std::vector<int> predictions;
    Matrix features;
};

Evaluation evaluate_models(const ModelSet& models, const Dataset& d);

struct ProjectionRow {
    double pc1 = 0.0;
    double pc2 = 0.0;
    int true_label = 0;
    int pred_label = 0;
};

/// Top-2 principal components; each axis is signed so that its largest
/// loading is positive.
std::vector<std::pair<double, double>> pca2(const Matrix& x);

struct CheckpointMetrics {
    std::string name;
    MetricsRecord metrics;
};

struct RunReport {
    std::vector<std::pair<std::string, std::string>> config;
    std::string dataset_kind;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::vector<std::size_t> train_class_counts;
    std::vector<std::size_t> test_class_counts;
    std::vector<CheckpointMetrics> checkpoints;
    MetricsRecord final_metrics;
    std::vector<double> clr_trace, ce_trace, ddpm_trace;
    std::vector<RoundTrace> rounds;
    std::vector<FreezeCheck> freeze_checks;
    std::size_t feature_params = 0, head_params = 0, denoiser_params = 0;
    std::string stage1_checkpoint_hash;
    std::string final_checkpoint_hash;
    std::vector<ProjectionRow> projection;
    double wall_time_sec = 0.0;
};

struct ExperimentResult {
    RunReport report;
    ModelSet models;
    Matrix generated;  // raw data space
    std::vector<int> generated_labels;
};

struct PreparedData {
    Dataset train;
    Dataset test;
};

/// Generates the configured dataset, splits it and applies any imbalance
/// to the training part only.
PreparedData prepare_data(const TrainConfig& cfg);
Dataset make_dataset(const TrainConfig& cfg);

ExperimentResult run_experiment(const TrainConfig& cfg);

/// Stage-II rounds and final reporting from a finished Stage I.
ExperimentResult finish_experiment(const TrainConfig& cfg, const PreparedData& data,
                                   const Stage1Result& s1);

/// Runs full, no_d, no_cwm and no_ml from one shared Stage I, up to
/// max_parallel arms at a time.
std::vector<ExperimentResult> run_ablation(const TrainConfig& cfg, unsigned max_parallel = 1);

struct ImbalanceOutcome {
    ExperimentResult balanced;
    ExperimentResult imbalanced;
};

ImbalanceOutcome run_imbalance(const TrainConfig& cfg, const ImbalanceSpec& spec,
                               unsigned max_parallel = 1);

}  // namespace gencal
