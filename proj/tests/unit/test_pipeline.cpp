#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gencal/pipeline.hpp"
#include "gencal/report.hpp"

using namespace gencal;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.dataset.k = 3;
    c.dataset.per_class = 20;
    c.dataset.dim = 4;
    c.feature_hidden = {16};
    c.feature_dim = 8;
    c.head_hidden = 8;
    c.denoiser_hidden = {16, 16};
    c.time_dim = 8;
    c.label_dim = 4;
    c.diffusion_steps = 10;
    c.epochs_pretrain = 3;
    c.epochs_head = 3;
    c.epochs_ddpm = 3;
    c.epochs_stage2 = 1;
    c.epochs_refresh = 1;
    c.rounds = 2;
    c.batch_size = 16;
    c.samples_per_class = 2;
    return c;
}

bool reaches(const Tensor& root, const Tensor& node) {
    const Graph g = Graph::trace(root);
    return std::find(g.nodes().begin(), g.nodes().end(), node.impl().get()) != g.nodes().end();
}

bool reaches_any(const Tensor& root, const std::vector<Tensor>& params) {
    return std::any_of(params.begin(), params.end(), [&](const Tensor& p) { return reaches(root, p); });
}

std::string without_wall_time(const std::string& json) {
    return json.substr(0, json.find("\"wall_time_sec\""));
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("stage one keeps frozen groups frozen and records traces") {
    const TrainConfig cfg = tiny_config();
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(0, 100);
    const Stage1Result s1 = stage1(cfg, data.train, rng);
    CHECK(s1.clr_trace.size() == 3);
    CHECK(s1.ce_trace.size() == 3);
    CHECK(s1.ddpm_trace.size() == 3);
    CHECK(s1.kmeans_labels.size() == data.train.size());
    REQUIRE(s1.freeze_checks.size() == 3);
    for (const auto& fc : s1.freeze_checks) CHECK(fc.held());
    CHECK(s1.state.denoiser_opt.has_value());
    CHECK_FALSE(s1.state.cluster_opt.has_value());
}

TEST_CASE("stage two objective is the weighted sum of the retained terms") {
    TrainConfig cfg = tiny_config();
    cfg.weight_d = 0.7;
    cfg.weight_cwm = 1.3;
    cfg.weight_ml = 2.0;
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(0, 100);
    const Stage1Result s1 = stage1(cfg, data.train, rng);
    const ModelSet& m = s1.state.models;
    const Matrix batch = m.norm.apply(data.train.samples).select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});

    for (Ablation a : {Ablation::full, Ablation::no_d, Ablation::no_cwm, Ablation::no_ml}) {
        CAPTURE(to_string(a));
        cfg.ablation = a;
        Rng r = make_rng(3);
        const Stage2Objective o = stage2_objective(cfg, m, s1.state.schedule, batch, r);
        const double expected = (a == Ablation::no_d ? 0.0 : 0.7 * o.l_d.item()) +
                                (a == Ablation::no_cwm ? 0.0 : 1.3 * o.l_cwm.item()) +
                                (a == Ablation::no_ml ? 0.0 : 2.0 * o.l_ml.item());
        CHECK(std::abs(o.total.item() - expected) < 1e-10);
        CHECK(o.cond_labels == o.labels);
        CHECK(o.generated.rows == 8);

        // the denoiser is never trained by the calibration objective
        CHECK_FALSE(reaches_any(o.total, m.denoiser_parameters()));
        // only the discrepancy term looks at real features
        CHECK(reaches(o.total, o.real_feats) == (a != Ablation::no_d));
        // the head only receives gradient through the metric term
        CHECK(reaches_any(o.total, m.head_parameters()) == (a != Ablation::no_ml));
        CHECK(reaches_any(o.total, m.feature_parameters()));
    }

    cfg.ablation = Ablation::full;
    cfg.gen_labels = GenLabelMode::uniform;
    Rng r = make_rng(4);
    const Stage2Objective u = stage2_objective(cfg, m, s1.state.schedule, batch, r);
    for (int y : u.cond_labels) CHECK((y >= 0 && y < 3));
}

TEST_CASE("a round freezes the denoiser, then F and C") {
    const TrainConfig cfg = tiny_config();
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(0, 100);
    const Stage1Result s1 = stage1(cfg, data.train, rng);
    TrainingState st = s1.state.clone();
    const std::string f_before = hex64(hash_values(st.models.feature_parameters()));
    const std::string g_before = hex64(hash_values(st.models.denoiser_parameters()));
    Rng r2 = make_rng(0, 200);
    const RoundTrace tr = stage2_round(cfg, st, data.train, r2, 1);
    REQUIRE(tr.freeze_checks.size() == 3);
    for (const auto& fc : tr.freeze_checks) CHECK(fc.held());
    CHECK(tr.freeze_checks[0].group == "G");
    CHECK(tr.l_d.size() == 1);
    CHECK(tr.ddpm_refresh.size() == 1);
    // both groups did move, each in its own phase
    CHECK(hex64(hash_values(st.models.feature_parameters())) != f_before);
    CHECK(hex64(hash_values(st.models.denoiser_parameters())) != g_before);
    // the original stage-one state is untouched by the clone's training
    CHECK(hex64(hash_values(s1.state.models.feature_parameters())) == f_before);
}

TEST_CASE("runs are bitwise reproducible") {
    const TrainConfig cfg = tiny_config();
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    CHECK(without_wall_time(report_json(a.report)) == without_wall_time(report_json(b.report)));
    CHECK(checkpoint_bytes(checkpoint_entries(a.models)) == checkpoint_bytes(checkpoint_entries(b.models)));
    CHECK(a.generated == b.generated);
    CHECK(a.report.checkpoints.size() == 3);
    CHECK(a.report.projection.size() == a.report.n_test);
    CHECK(a.generated.rows == 6);
    CHECK(a.generated_labels == std::vector<int>{0, 0, 1, 1, 2, 2});

    TrainConfig other = cfg;
    other.seed = 1;
    CHECK(run_experiment(other).report.final_checkpoint_hash != a.report.final_checkpoint_hash);
}

TEST_CASE("ablation arms share one stage one") {
    TrainConfig cfg = tiny_config();
    cfg.rounds = 1;
    const auto arms = run_ablation(cfg, 2);
    REQUIRE(arms.size() == 4);
    const char* names[] = {"full", "no_d", "no_cwm", "no_ml"};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(ablation_name(arms[i].report) == names[i]);
        CHECK(arms[i].report.stage1_checkpoint_hash == arms[0].report.stage1_checkpoint_hash);
        CHECK(arms[i].report.checkpoints[0].metrics.acc == arms[0].report.checkpoints[0].metrics.acc);
    }
    cfg.ablation = Ablation::no_cwm;
    const ExperimentResult solo = run_experiment(cfg);
    CHECK(solo.report.final_checkpoint_hash == arms[2].report.final_checkpoint_hash);
}

TEST_CASE("imbalance touches only the training split") {
    TrainConfig cfg = tiny_config();
    cfg.rounds = 1;
    cfg.dataset.per_class = 25;
    const ImbalanceOutcome out = run_imbalance(cfg, {{1.0, 0.5, 0.25}});
    CHECK(out.balanced.report.train_class_counts == std::vector<std::size_t>{20, 20, 20});
    CHECK(out.imbalanced.report.train_class_counts == std::vector<std::size_t>{20, 10, 5});
    CHECK(out.balanced.report.test_class_counts == out.imbalanced.report.test_class_counts);
    CHECK_THROWS(run_imbalance(cfg, {{1.0, 0.5}}));
}

TEST_CASE("contrastive pretraining loss trends down") {
    TrainConfig cfg = tiny_config();
    cfg.dataset.per_class = 40;
    cfg.epochs_pretrain = 30;
    const PreparedData data = prepare_data(cfg);
    Rng rng = make_rng(0, 100);
    const auto trace = stage1(cfg, data.train, rng).clr_trace;
    auto window = [&](std::size_t start) {
        double s = 0.0;
        for (std::size_t i = start; i < start + 5; ++i) s += trace[i];
        return s / 5.0;
    };
    CHECK(window(trace.size() - 5) < window(0));
}

TEST_CASE("non-finite data aborts with phase context") {
    const TrainConfig cfg = tiny_config();
    PreparedData data = prepare_data(cfg);
    data.train.samples(0, 0) = std::nan("");
    Rng rng = make_rng(0, 100);
    CHECK_THROWS_WITH_AS(stage1(cfg, data.train, rng), doctest::Contains("pretrain_clr: non-finite loss at epoch 0"),
                         TrainingAborted);
}

TEST_CASE("principal axes are sign-normalized") {
    const Matrix x(4, 3, std::vector<double>{-3, 0.1, 0, -1, -0.1, 0, 1, -0.1, 0, 3, 0.1, 0});
    const auto p = pca2(x);
    REQUIRE(p.size() == 4);
    CHECK(p[3].first == doctest::Approx(3.0));
    CHECK(p[0].first == doctest::Approx(-3.0));
    Matrix flipped = x;
    for (std::size_t i = 0; i < 4; ++i) flipped(i, 0) = -flipped(i, 0);
    CHECK(pca2(flipped)[0].first == doctest::Approx(3.0));
    CHECK_THROWS(pca2(Matrix(3, 1)));
}

}
