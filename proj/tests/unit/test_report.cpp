#include <filesystem>

#include "doctest.h"
#include "gencal/report.hpp"
#include "json.hpp"

using namespace gencal;
using Json = nlohmann::json;

namespace {

RunReport sample_report() {
    RunReport r;
    r.config = {{"train.seed", "0"}, {"ablation", "no_ml"}};
    r.dataset_kind = "blobs";
    r.n_train = 8;
    r.n_test = 2;
    r.train_class_counts = {4, 4};
    r.test_class_counts = {1, 1};
    r.checkpoints = {{"stage1", {1.0, 1.0, 1.0}}, {"round_1", {0.5, 0.0, -0.5}}};
    r.final_metrics = {0.5, 0.0, -0.5};
    r.clr_trace = {3.0, 2.5};
    r.ce_trace = {1.0};
    r.ddpm_trace = {0.9};
    RoundTrace t;
    t.round = 1;
    t.l_d = {0.1};
    t.l_cwm = {-0.5};
    t.l_ml = {0.01};
    t.total = {-0.39};
    t.ddpm_refresh = {0.5};
    r.rounds = {t};
    r.freeze_checks = {{"head", "F", "aa", "aa"}, {"x", "G", "aa", "bb"}};
    r.feature_params = 10;
    r.head_params = 5;
    r.denoiser_params = 20;
    r.stage1_checkpoint_hash = "0123456789abcdef";
    r.final_checkpoint_hash = "fedcba9876543210";
    r.projection = {{0.5, -1.25, 0, 1}, {1.0 / 3.0, 2.0, 1, 1}};
    r.wall_time_sec = 1.5;
    return r;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("report json layout") {
    const std::string text = report_json(sample_report());
    const Json j = Json::parse(text);
    CHECK(j["format"] == "gencal-report");
    CHECK(j["config"]["ablation"] == "no_ml");
    CHECK(j["checkpoints"].size() == 2);
    CHECK(j["checkpoints"][1]["ari"] == -0.5);
    CHECK(j["final"]["acc"] == 0.5);
    CHECK(j["rounds"][0]["l_cwm"][0] == -0.5);
    CHECK(j["freeze_checks"][0]["held"] == true);
    CHECK(j["freeze_checks"][1]["held"] == false);
    CHECK(j["dataset"]["train_class_counts"] == Json::array({4, 4}));
    CHECK(j["hashes"]["final_checkpoint"] == "fedcba9876543210");
    // wall time is the last field so that it can be cut off
    const auto pos = text.find("\"wall_time_sec\"");
    REQUIRE(pos != std::string::npos);
    CHECK(text.find('"', pos + 16) == std::string::npos);
}

TEST_CASE("projection csv round trip") {
    const RunReport r = sample_report();
    const std::string csv = projection_csv(r.projection);
    CHECK(csv.rfind("pc1,pc2,true_label,pred_label\n", 0) == 0);
    const auto back = parse_projection_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(back[1].pc1 == 1.0 / 3.0);
    CHECK(back[0].pc2 == -1.25);
    CHECK(back[0].pred_label == 1);
    CHECK_THROWS(parse_projection_csv("a,b\n"));
    CHECK_THROWS(parse_projection_csv("pc1,pc2,true_label,pred_label\n1,2\n"));
}

TEST_CASE("summary and delta") {
    ExperimentResult a, b;
    a.report = sample_report();
    b.report = sample_report();
    b.report.config = {{"ablation", "full"}};
    b.report.final_metrics = {1.0, 1.0, 1.0};
    CHECK(summary_csv({b, a}) == "variant,acc,nmi,ari\nfull,1,1,1\nno_ml,0.5,0,-0.5\n");

    ImbalanceOutcome o{b, a};
    const Json d = Json::parse(delta_json(o));
    CHECK(d["acc_balanced"] == 1.0);
    CHECK(d["acc_imbalanced"] == 0.5);
    CHECK(d["drop"] == 0.5);
    CHECK(d.contains("train_class_counts_imbalanced"));
}

TEST_CASE("text io") {
    const auto path = std::filesystem::temp_directory_path() / "gencal_report_io.txt";
    write_text(path, "a\nb");
    CHECK(read_text(path) == "a\nb");
    std::filesystem::remove(path);
    CHECK_THROWS(read_text(path));
}

}
