#include "gencal/pipeline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "gencal/losses.hpp"

namespace gencal {

namespace {

constexpr std::uint64_t kStreamStage1 = 100;
constexpr std::uint64_t kStreamStage2 = 200;
constexpr std::uint64_t kStreamOutput = 300;

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(n, start + batch);
        if (end - start < 2) break;
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

void check_finite(double v, const std::string& phase, int epoch, std::size_t step) {
    if (!std::isfinite(v)) {
        throw TrainingAborted(phase + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
    }
}

AdamConfig adam_config(const TrainConfig& cfg, double lr) {
    return {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
}

std::vector<int> pick(std::span<const int> v, std::span<const std::size_t> idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

Matrix features_of(const FeatureExtractor& f, const Matrix& x) {
    NoGradGuard guard;
    return Matrix::from_tensor(f(x.to_tensor()));
}

std::vector<int> head_labels(const ModelSet& m, const Matrix& x) {
    NoGradGuard guard;
    return pseudo_labels(m.head(m.feature(x.to_tensor())));
}

std::string group_hash(const std::vector<Tensor>& params) {
    return hex64(hash_values(params));
}

std::vector<Tensor> cluster_parameters(const ModelSet& m) {
    auto p = m.feature_parameters();
    auto h = m.head_parameters();
    p.insert(p.end(), h.begin(), h.end());
    return p;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// One pass of DDPM training over the data; returns the mean batch loss.
double ddpm_epoch(const TrainConfig& cfg, ModelSet& m, const NoiseSchedule& sched, Adam& opt,
                  const Matrix& x, std::span<const int> labels, Rng& rng, const std::string& phase,
                  int epoch) {
    const NoisePredictor g = predictor_of(m.denoiser);
    std::vector<double> losses;
    std::size_t step = 0;
    for (const auto& idx : make_batches(x.rows, cfg.batch_size, rng)) {
        const auto y = pick(labels, idx);
        Tensor loss = ddpm_loss(g, sched, x.select_rows(idx), y, rng);
        check_finite(loss.item(), phase, epoch, step++);
        opt.zero_grad();
        backward(loss);
        opt.step();
        losses.push_back(loss.item());
    }
    return mean_of(losses);
}

std::string checkpoint_hash(const ModelSet& m) {
    const std::string bytes = checkpoint_bytes(checkpoint_entries(m));
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return hex64(h);
}

}  // namespace

TrainingState TrainingState::clone() const {
    TrainingState out;
    out.models = models.clone();
    out.schedule = schedule;
    if (cluster_opt) out.cluster_opt.emplace(cluster_opt->rebind(cluster_parameters(out.models)));
    if (denoiser_opt) out.denoiser_opt.emplace(denoiser_opt->rebind(out.models.denoiser_parameters()));
    return out;
}

NoiseSchedule schedule_for(const TrainConfig& cfg) {
    return linear_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
}

ModelSet build_models(const TrainConfig& cfg, std::size_t data_dim, Rng& rng) {
    const auto k = static_cast<std::size_t>(cfg.dataset.k);
    ModelSet m;
    m.feature = FeatureExtractor({data_dim, cfg.feature_hidden, cfg.feature_dim, cfg.normalize_features}, rng);
    m.head = ClusteringHead({cfg.feature_dim, cfg.head_hidden, k}, rng);
    m.denoiser = Denoiser({data_dim, k, static_cast<std::size_t>(cfg.diffusion_steps), cfg.denoiser_hidden,
                           cfg.time_dim, cfg.label_dim},
                          rng);
    return m;
}

AugmentSpec augment_for(const TrainConfig& cfg, const Dataset& d) {
    AugmentSpec spec = cfg.augment;
    const bool glyphs = d.kind == DatasetKind::glyphs;
    spec.clamp_unit = glyphs;
    spec.rotate_side = glyphs && cfg.augment_rotate ? d.glyph_side : 0;
    spec.validate();
    return spec;
}

Stage1Result stage1(const TrainConfig& cfg, const Dataset& train, Rng& rng) {
    cfg.validate();
    Stage1Result out;
    TrainingState& st = out.state;
    st.schedule = schedule_for(cfg);
    st.models = build_models(cfg, train.dim(), rng);
    ModelSet& m = st.models;
    m.norm = cfg.normalize_data ? DataNorm::fit(train.samples) : DataNorm{};
    const Matrix x = m.norm.apply(train.samples);
    const AugmentSpec aug = augment_for(cfg, train);

    {
        Adam opt(m.feature_parameters(), adam_config(cfg, cfg.lr_pretrain));
        for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
            double total = 0.0;
            std::size_t anchors = 0;
            std::size_t step = 0;
            for (const auto& idx : make_batches(x.rows, cfg.batch_size, rng)) {
                const Matrix view = m.norm.apply(augment_rows(train.samples.select_rows(idx), aug, rng));
                const Tensor parts[] = {x.select_rows(idx).to_tensor(), view.to_tensor()};
                Tensor loss = l_clr(m.feature(concat_rows(parts)), cfg.contrastive);
                check_finite(loss.item(), "pretrain_clr", epoch, step++);
                opt.zero_grad();
                backward(loss);
                opt.step();
                total += loss.item();
                anchors += idx.size();
            }
            out.clr_trace.push_back(anchors ? total / static_cast<double>(anchors) : 0.0);
        }
    }

    const std::string f_before = group_hash(m.feature_parameters());
    const Matrix feats = features_of(m.feature, x);
    out.kmeans_labels = kmeans(feats, cfg.dataset.k, cfg.seed).assignments;
    {
        Adam opt(m.head_parameters(), adam_config(cfg, cfg.lr_head));
        for (int epoch = 0; epoch < cfg.epochs_head; ++epoch) {
            std::vector<double> losses;
            std::size_t step = 0;
            for (const auto& idx : make_batches(x.rows, cfg.batch_size, rng)) {
                const auto y = pick(out.kmeans_labels, idx);
                Tensor loss = l_ce(m.head(feats.select_rows(idx).to_tensor()), y);
                check_finite(loss.item(), "head", epoch, step++);
                opt.zero_grad();
                backward(loss);
                opt.step();
                losses.push_back(loss.item());
            }
            out.ce_trace.push_back(mean_of(losses));
        }
    }

    out.freeze_checks.push_back({"head", "F", f_before, group_hash(m.feature_parameters())});
    const std::string c_before = group_hash(m.head_parameters());
    const std::vector<int> pseudo = head_labels(m, x);
    st.denoiser_opt.emplace(m.denoiser_parameters(), adam_config(cfg, cfg.lr_ddpm_pre));
    for (int epoch = 0; epoch < cfg.epochs_ddpm; ++epoch) {
        out.ddpm_trace.push_back(ddpm_epoch(cfg, m, st.schedule, *st.denoiser_opt, x, pseudo, rng, "ddpm_pre", epoch));
    }
    out.freeze_checks.push_back({"ddpm_pre", "F", f_before, group_hash(m.feature_parameters())});
    out.freeze_checks.push_back({"ddpm_pre", "C", c_before, group_hash(m.head_parameters())});
    for (const auto& c : out.freeze_checks) {
        if (!c.held()) throw TrainingAborted("stage1: " + c.group + " changed during " + c.phase);
    }
    return out;
}

Stage2Objective stage2_objective(const TrainConfig& cfg, const ModelSet& models, const NoiseSchedule& sched,
                                 const Matrix& real_batch, Rng& rng) {
    const auto k = static_cast<std::size_t>(cfg.dataset.k);
    Stage2Objective o;
    o.real_feats = models.feature(real_batch.to_tensor());
    {
        NoGradGuard guard;
        o.labels = pseudo_labels(models.head(o.real_feats.detach()));
    }
    if (cfg.gen_labels == GenLabelMode::copy) {
        o.cond_labels = o.labels;
    } else {
        std::uniform_int_distribution<int> pick_class(0, cfg.dataset.k - 1);
        o.cond_labels.resize(o.labels.size());
        for (int& y : o.cond_labels) y = pick_class(rng);
    }
    o.generated = reverse_sample(predictor_of(models.denoiser), sched, real_batch.cols, o.cond_labels, rng,
                                 cfg.reverse_mode);
    o.gen_feats = models.feature(o.generated.to_tensor());
    const Tensor gen_probs = models.head(o.gen_feats);

    o.l_d = l_d({o.real_feats, o.labels}, {o.gen_feats, o.cond_labels}, cfg.kernel, k);
    o.l_cwm = l_cwm({o.gen_feats, o.cond_labels});
    o.l_ml = l_ml(gen_probs, o.cond_labels);

    std::vector<Tensor> terms;
    if (cfg.ablation != Ablation::no_d) terms.push_back(scale(o.l_d, cfg.weight_d));
    if (cfg.ablation != Ablation::no_cwm) terms.push_back(scale(o.l_cwm, cfg.weight_cwm));
    if (cfg.ablation != Ablation::no_ml) terms.push_back(scale(o.l_ml, cfg.weight_ml));
    o.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) o.total = o.total + terms[i];
    return o;
}

RoundTrace stage2_round(const TrainConfig& cfg, TrainingState& state, const Dataset& train, Rng& rng,
                        int round) {
    ModelSet& m = state.models;
    if (!state.cluster_opt) state.cluster_opt.emplace(cluster_parameters(m), adam_config(cfg, cfg.lr_cluster));
    const Matrix x = m.norm.apply(train.samples);
    RoundTrace tr;
    tr.round = round;
    const std::string phase = "stage2_round_" + std::to_string(round);

    const std::string g_before = group_hash(m.denoiser_parameters());
    for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        std::vector<double> d, cwm, ml, total;
        std::size_t step = 0;
        for (const auto& idx : make_batches(x.rows, cfg.batch_size, rng)) {
            Stage2Objective o = stage2_objective(cfg, m, state.schedule, x.select_rows(idx), rng);
            check_finite(o.total.item(), phase, epoch, step++);
            state.cluster_opt->zero_grad();
            backward(o.total);
            state.cluster_opt->step();
            d.push_back(o.l_d.item());
            cwm.push_back(o.l_cwm.item());
            ml.push_back(o.l_ml.item());
            total.push_back(o.total.item());
        }
        tr.l_d.push_back(mean_of(d));
        tr.l_cwm.push_back(mean_of(cwm));
        tr.l_ml.push_back(mean_of(ml));
        tr.total.push_back(mean_of(total));
    }
    tr.freeze_checks.push_back({phase + "_calibrate", "G", g_before, group_hash(m.denoiser_parameters())});

    const std::string f_before = group_hash(m.feature_parameters());
    const std::string c_before = group_hash(m.head_parameters());
    const std::vector<int> pseudo = head_labels(m, x);
    if (!state.denoiser_opt) state.denoiser_opt.emplace(m.denoiser_parameters(), adam_config(cfg, cfg.lr_denoiser));
    state.denoiser_opt->set_lr(cfg.lr_denoiser);
    for (int epoch = 0; epoch < cfg.epochs_refresh; ++epoch) {
        tr.ddpm_refresh.push_back(
            ddpm_epoch(cfg, m, state.schedule, *state.denoiser_opt, x, pseudo, rng, phase + "_refresh", epoch));
    }
    tr.freeze_checks.push_back({phase + "_refresh", "F", f_before, group_hash(m.feature_parameters())});
    tr.freeze_checks.push_back({phase + "_refresh", "C", c_before, group_hash(m.head_parameters())});
    for (const auto& c : tr.freeze_checks) {
        if (!c.held()) throw TrainingAborted(phase + ": " + c.group + " changed during " + c.phase);
    }
    return tr;
}

Evaluation evaluate_models(const ModelSet& models, const Dataset& d) {
    Evaluation ev;
    const Matrix x = models.norm.apply(d.samples);
    {
        NoGradGuard guard;
        const Tensor feats = models.feature(x.to_tensor());
        ev.predictions = pseudo_labels(models.head(feats));
        ev.features = Matrix::from_tensor(feats);
    }
    ev.metrics = evaluate(ev.predictions, d.labels, d.num_classes);
    return ev;
}

std::vector<std::pair<double, double>> pca2(const Matrix& x) {
    if (x.cols < 2) throw std::invalid_argument("pca2: need at least 2 columns, got " + std::to_string(x.cols));
    if (x.rows == 0) return {};
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMat> a(x.values.data(), static_cast<Eigen::Index>(x.rows),
                                     static_cast<Eigen::Index>(x.cols));
    const Eigen::RowVectorXd mu = a.colwise().mean();
    const Eigen::MatrixXd centered = a.rowwise() - mu;
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, x.rows - 1.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index n = cov.cols();
    Eigen::MatrixXd axes(n, 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(n - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        axes.col(c) = v;
    }
    const Eigen::MatrixXd proj = centered * axes;
    std::vector<std::pair<double, double>> out(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        out[i] = {proj(static_cast<Eigen::Index>(i), 0), proj(static_cast<Eigen::Index>(i), 1)};
    }
    return out;
}

Dataset make_dataset(const TrainConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    switch (d.kind) {
        case DatasetKind::blobs:
            return make_blobs(d.k, d.per_class, d.dim, d.separation, cfg.seed);
        case DatasetKind::rings:
            return make_rings(d.k, d.per_class, d.separation, d.noise, cfg.seed);
        case DatasetKind::glyphs:
            return make_glyphs(d.k, d.per_class, d.side, d.noise, cfg.seed);
    }
    throw std::logic_error("make_dataset: unknown kind");
}

PreparedData prepare_data(const TrainConfig& cfg) {
    const Dataset full = make_dataset(cfg);
    const auto [train_idx, test_idx] = split_indices(full, cfg.test_fraction, cfg.seed);
    PreparedData out{full.subset(train_idx), full.subset(test_idx)};
    if (cfg.imbalance) out.train = apply_imbalance(out.train, *cfg.imbalance, cfg.seed);
    return out;
}

ExperimentResult finish_experiment(const TrainConfig& cfg, const PreparedData& data, const Stage1Result& s1) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    ExperimentResult res;
    RunReport& rep = res.report;
    rep.config = config_entries(cfg);
    rep.dataset_kind = to_string(cfg.dataset.kind);
    rep.n_train = data.train.size();
    rep.n_test = data.test.size();
    rep.train_class_counts = data.train.class_counts();
    rep.test_class_counts = data.test.class_counts();
    rep.clr_trace = s1.clr_trace;
    rep.ce_trace = s1.ce_trace;
    rep.ddpm_trace = s1.ddpm_trace;
    rep.freeze_checks = s1.freeze_checks;

    TrainingState st = s1.state.clone();
    rep.stage1_checkpoint_hash = checkpoint_hash(st.models);
    rep.checkpoints.push_back({"stage1", evaluate_models(st.models, data.test).metrics});

    Rng rng = make_rng(cfg.seed, kStreamStage2);
    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundTrace tr = stage2_round(cfg, st, data.train, rng, r);
        rep.freeze_checks.insert(rep.freeze_checks.end(), tr.freeze_checks.begin(), tr.freeze_checks.end());
        rep.rounds.push_back(std::move(tr));
        rep.checkpoints.push_back({"round_" + std::to_string(r), evaluate_models(st.models, data.test).metrics});
    }

    const Evaluation final_eval = evaluate_models(st.models, data.test);
    rep.final_metrics = final_eval.metrics;
    const auto pcs = pca2(final_eval.features);
    rep.projection.resize(pcs.size());
    for (std::size_t i = 0; i < pcs.size(); ++i) {
        rep.projection[i] = {pcs[i].first, pcs[i].second, data.test.labels[i], final_eval.predictions[i]};
    }

    Rng out_rng = make_rng(cfg.seed, kStreamOutput);
    for (int c = 0; c < cfg.dataset.k; ++c) res.generated_labels.insert(res.generated_labels.end(), cfg.samples_per_class, c);
    if (!res.generated_labels.empty()) {
        res.generated = st.models.norm.invert(reverse_sample(predictor_of(st.models.denoiser), st.schedule,
                                                             data.train.dim(), res.generated_labels, out_rng,
                                                             cfg.reverse_mode));
    } else {
        res.generated = Matrix(0, data.train.dim());
    }

    rep.final_checkpoint_hash = checkpoint_hash(st.models);
    rep.feature_params = parameter_count(st.models.feature.named_parameters("F."));
    rep.head_params = parameter_count(st.models.head.named_parameters("C."));
    rep.denoiser_params = parameter_count(st.models.denoiser.named_parameters("G."));
    res.models = std::move(st.models);
    rep.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

ExperimentResult run_experiment(const TrainConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(cfg.seed, kStreamStage1);
    const Stage1Result s1 = stage1(cfg, data.train, rng);
    ExperimentResult res = finish_experiment(cfg, data, s1);
    res.report.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

namespace {

/// Runs jobs[i] for every i with at most max_parallel threads; rethrows the
/// first failure in index order.
template <class Job>
void run_jobs(std::size_t count, unsigned max_parallel, Job job) {
    std::vector<std::exception_ptr> errors(count);
    const std::size_t width = std::max<std::size_t>(1, max_parallel);
    for (std::size_t base = 0; base < count; base += width) {
        const std::size_t end = std::min(count, base + width);
        if (end - base == 1) {
            try {
                job(base);
            } catch (...) {
                errors[base] = std::current_exception();
            }
            continue;
        }
        std::vector<std::thread> threads;
        for (std::size_t i = base; i < end; ++i) {
            threads.emplace_back([&, i] {
                try {
                    job(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<ExperimentResult> run_ablation(const TrainConfig& cfg, unsigned max_parallel) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(cfg.seed, kStreamStage1);
    const Stage1Result s1 = stage1(cfg, data.train, rng);
    const double stage1_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const Ablation variants[] = {Ablation::full, Ablation::no_d, Ablation::no_cwm, Ablation::no_ml};
    std::vector<ExperimentResult> out(std::size(variants));
    run_jobs(out.size(), max_parallel, [&](std::size_t i) {
        TrainConfig arm = cfg;
        arm.ablation = variants[i];
        out[i] = finish_experiment(arm, data, s1);
        out[i].report.wall_time_sec += stage1_sec;
    });
    return out;
}

ImbalanceOutcome run_imbalance(const TrainConfig& cfg, const ImbalanceSpec& spec, unsigned max_parallel) {
    spec.validate(cfg.dataset.k);
    TrainConfig balanced = cfg;
    balanced.imbalance.reset();
    TrainConfig skewed = cfg;
    skewed.imbalance = spec;
    ImbalanceOutcome out;
    run_jobs(2, max_parallel, [&](std::size_t i) {
        if (i == 0)
            out.balanced = run_experiment(balanced);
        else
            out.imbalanced = run_experiment(skewed);
    });
    return out;
}

}  // namespace gencal
