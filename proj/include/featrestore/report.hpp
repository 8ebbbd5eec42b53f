#pragma once

// JSON and CSV serialization of evaluation results.

#include "featrestore/evaluation.hpp"

#include "json.hpp"

#include <string>

namespace featrestore {

nlohmann::json to_json(const GateStats& stats);
nlohmann::json to_json(const CellResult& cell);
nlohmann::json to_json(const SweepReport& report);
nlohmann::json to_json(const AblationReport& report);
nlohmann::json to_json(const TrajectoryReport& report);
nlohmann::json to_json(const ProbeConfig& cfg);

/// Wraps a result with the resolved configuration, seed and runtime.
nlohmann::json make_report(const std::string& command, const nlohmann::json& config, std::uint64_t seed,
                           double runtime_seconds, nlohmann::json results);

/// eta,mode,fill,seeds,accuracy_mean,macro_f1_mean (one row per eta/mode/fill).
std::string sweep_csv(const SweepReport& report);
/// block,gate,bin_low,bin_high,count
std::string gate_histogram_csv(const GateStats& stats);
/// row,col,cosine
std::string similarity_csv(const Matrix& sim);
/// step,sample,pc1,pc2 (step = -1 for the final estimate, "truth" rows use step = truth)
std::string trajectory_csv(const TrajectoryReport& report);
/// variant,seed,accuracy,macro_f1,alignment
std::string ablation_csv(const AblationReport& report);

}  // namespace featrestore
