#include "gencal/report.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gencal {

namespace {

using Json = nlohmann::ordered_json;

Json metrics_json(const MetricsRecord& m) {
    return Json{{"acc", m.acc}, {"nmi", m.nmi}, {"ari", m.ari}};
}

Json freeze_json(const FreezeCheck& c) {
    return Json{{"phase", c.phase}, {"group", c.group}, {"before", c.before}, {"after", c.after}, {"held", c.held()}};
}

}  // namespace

std::string report_json(const RunReport& r) {
    Json j;
    j["format"] = "gencal-report";
    j["version"] = 1;
    Json cfg = Json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = std::move(cfg);
    j["dataset"] = Json{{"kind", r.dataset_kind},
                        {"n_train", r.n_train},
                        {"n_test", r.n_test},
                        {"train_class_counts", r.train_class_counts},
                        {"test_class_counts", r.test_class_counts}};
    j["parameters"] = Json{{"feature", r.feature_params}, {"head", r.head_params}, {"denoiser", r.denoiser_params}};
    Json cps = Json::array();
    for (const auto& c : r.checkpoints) {
        cps.push_back(Json{{"name", c.name}, {"acc", c.metrics.acc}, {"nmi", c.metrics.nmi}, {"ari", c.metrics.ari}});
    }
    j["checkpoints"] = std::move(cps);
    j["final"] = metrics_json(r.final_metrics);
    j["traces"] = Json{{"pretrain_clr", r.clr_trace}, {"head_ce", r.ce_trace}, {"ddpm_pre", r.ddpm_trace}};
    Json rounds = Json::array();
    for (const auto& t : r.rounds) {
        rounds.push_back(Json{{"round", t.round},
                              {"l_d", t.l_d},
                              {"l_cwm", t.l_cwm},
                              {"l_ml", t.l_ml},
                              {"total", t.total},
                              {"ddpm_refresh", t.ddpm_refresh}});
    }
    j["rounds"] = std::move(rounds);
    Json freeze = Json::array();
    for (const auto& c : r.freeze_checks) freeze.push_back(freeze_json(c));
    j["freeze_checks"] = std::move(freeze);
    j["hashes"] = Json{{"stage1_checkpoint", r.stage1_checkpoint_hash}, {"final_checkpoint", r.final_checkpoint_hash}};
    j["wall_time_sec"] = r.wall_time_sec;
    return j.dump(2) + "\n";
}

std::string delta_json(const ImbalanceOutcome& o) {
    const RunReport& b = o.balanced.report;
    const RunReport& i = o.imbalanced.report;
    Json j;
    j["acc_balanced"] = b.final_metrics.acc;
    j["acc_imbalanced"] = i.final_metrics.acc;
    j["drop"] = b.final_metrics.acc - i.final_metrics.acc;
    j["nmi_balanced"] = b.final_metrics.nmi;
    j["nmi_imbalanced"] = i.final_metrics.nmi;
    j["ari_balanced"] = b.final_metrics.ari;
    j["ari_imbalanced"] = i.final_metrics.ari;
    j["train_class_counts_balanced"] = b.train_class_counts;
    j["train_class_counts_imbalanced"] = i.train_class_counts;
    j["test_class_counts"] = i.test_class_counts;
    return j.dump(2) + "\n";
}

std::string projection_csv(const std::vector<ProjectionRow>& rows) {
    std::string out = "pc1,pc2,true_label,pred_label\n";
    for (const auto& r : rows) {
        out += format_double(r.pc1) + "," + format_double(r.pc2) + "," + std::to_string(r.true_label) + "," +
               std::to_string(r.pred_label) + "\n";
    }
    return out;
}

std::vector<ProjectionRow> parse_projection_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "pc1,pc2,true_label,pred_label") {
        throw std::runtime_error("projection csv: bad header");
    }
    std::vector<ProjectionRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, c, d;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ',') ||
            !std::getline(ls, d)) {
            throw std::runtime_error("projection csv: malformed line " + std::to_string(lineno));
        }
        rows.push_back({std::stod(a), std::stod(b), std::stoi(c), std::stoi(d)});
    }
    return rows;
}

std::string ablation_name(const RunReport& report) {
    for (const auto& [k, v] : report.config)
        if (k == "ablation") return v;
    return "full";
}

std::string summary_csv(const std::vector<ExperimentResult>& arms) {
    std::string out = "variant,acc,nmi,ari\n";
    for (const auto& a : arms) {
        const std::string variant = ablation_name(a.report);
        const MetricsRecord& m = a.report.final_metrics;
        out += variant + "," + format_double(m.acc) + "," + format_double(m.nmi) + "," + format_double(m.ari) + "\n";
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    write_text(dir / "report.json", report_json(result.report));
    write_checkpoint(dir / "model.ckpt", checkpoint_entries(result.models));
    write_text(dir / "projection.csv", projection_csv(result.report.projection));
    write_csv(dir / "generated.csv", result.generated, result.generated_labels);
}

}  // namespace gencal
