#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gencal/pipeline.hpp"

namespace gencal {

/// Pretty-printed report; wall_time_sec is the last top-level field so that
/// determinism checks can drop it.
std::string report_json(const RunReport& report);

/// Comparative summary of a balanced/imbalanced pair.
std::string delta_json(const ImbalanceOutcome& outcome);

/// Header `pc1,pc2,true_label,pred_label`.
std::string projection_csv(const std::vector<ProjectionRow>& rows);
std::vector<ProjectionRow> parse_projection_csv(const std::string& text);

/// The echoed `ablation` config value.
std::string ablation_name(const RunReport& report);

/// Header `variant,acc,nmi,ari`, one row per ablation arm.
std::string summary_csv(const std::vector<ExperimentResult>& arms);

/// report.json, model.ckpt, projection.csv and generated.csv.
void write_run_outputs(const std::filesystem::path& dir, const ExperimentResult& result);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace gencal
