#pragma once

#include "featrestore/data.hpp"
#include "featrestore/metrics.hpp"
#include "featrestore/model.hpp"
#include "featrestore/probe.hpp"
#include "featrestore/restoration.hpp"
#include "featrestore/training.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace featrestore {

// ---- gate statistics ------------------------------------------------------------

constexpr int kGateBins = 10;

struct GateSummary {
    Vector channel_mean;                 ///< per-channel mean over the probe batch
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double fraction_low = 0.0;           ///< share of activations in [0, 0.2]
    std::array<std::size_t, kGateBins> histogram{};  ///< equal-width bins over [0, 1]
    std::size_t count = 0;
    bool in_open_unit_interval = true;   ///< every activation strictly inside (0, 1)
};

struct BlockGateStats {
    GateSummary attn;
    GateSummary mlp;
};

struct GateStats {
    std::vector<BlockGateStats> blocks;
    double overall_mean = 0.0;
    double overall_fraction_low = 0.0;
    bool all_in_open_unit_interval = true;
};

/// Gates depend only on the condition and the timestep; the probe batch is
/// the cartesian product of condition rows and timesteps. Requires full gating.
GateStats gate_statistics(const GatedDiT& model, const Matrix& cond, const std::vector<int>& timesteps);
GateSummary summarize_gates(const Matrix& activations);

// ---- experiment harness -----------------------------------------------------------

struct Benchmark {
    Dataset train;
    Dataset test;
};

struct EvalOptions {
    ProbeConfig probe;
    int ddim_steps = 50;
    int jobs = 1;
};

struct CellKey {
    double eta = 0.0;
    MissingMode mode = MissingMode::missing_both;
    std::uint64_t seed = 0;

    bool operator<(const CellKey& o) const;
    bool operator==(const CellKey&) const = default;
};

struct CellResult {
    CellKey key;
    ProbeScore zero_fill;
    ProbeScore restored;
    PatternCounts test_counts;
    double seconds = 0.0;
};

/// Restorations of every train and test sample in both directions for one
/// noise seed. Each sample's noise is drawn from its own id, so any missing
/// pattern can be completed by lookup.
struct BenchmarkRestorations {
    std::uint64_t seed = 0;
    RestorationCache train;
    RestorationCache test;
};

BenchmarkRestorations restore_benchmark(const Checkpoint& ck, const Benchmark& data, std::uint64_t seed,
                                        int ddim_steps);

/// Fills the missing side of each sample from `cache` (rows aligned with
/// the original complete split) and flags it as restored.
std::vector<SamplePair> complete_from_cache(const std::vector<SamplePair>& samples, const RestorationCache& cache);

std::uint64_t restoration_seed(std::uint64_t cell_seed);

/// One (eta, mode, seed) cell: the pattern is applied to both splits, and a
/// probe is trained on each of the zero-filled and restored train splits and
/// scored on the matching test split.
CellResult evaluate_cell(const Checkpoint& ck, const Benchmark& data, const CellKey& key, const EvalOptions& opts,
                         const BenchmarkRestorations* restorations = nullptr);

/// Mean cosine between restored and true features on the test split, in
/// normalized space, per direction.
struct AlignmentScore {
    double i2t = 0.0;
    double t2i = 0.0;
    double mean() const { return 0.5 * (i2t + t2i); }
};
AlignmentScore restoration_alignment(const Checkpoint& ck, const std::vector<SamplePair>& truth,
                                     const RestorationCache& cache);

struct SweepReport {
    std::vector<CellResult> cells;  ///< sorted by key
    AlignmentScore alignment;       ///< held-out, restoration seed of the first cell seed
};

SweepReport robustness_sweep(const Checkpoint& ck, const Benchmark& data, const std::vector<double>& etas,
                             const std::vector<MissingMode>& modes, const std::vector<std::uint64_t>& seeds,
                             const EvalOptions& opts);

/// Mean over seeds of one fill's accuracy at (eta, mode).
double mean_accuracy(const std::vector<CellResult>& cells, double eta, MissingMode mode, FillMode fill);

struct AblationVariant {
    std::string name;
    GatingMode gating = GatingMode::full;
    bool mutual = true;
};
/// Ours (full, mutual), Gating (full, no mutual), AdaLN, Concat and Base
/// (no mutual); `include_mutual_base` adds Mutual (base, mutual).
std::vector<AblationVariant> default_ablation_variants(bool include_mutual_base = false);

struct AblationRow {
    AblationVariant variant;
    std::uint64_t seed = 0;
    CellResult cell;
    AlignmentScore alignment;
    double train_seconds = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    double mean_accuracy(const std::string& variant) const;
};

/// Trains every variant for every seed from `base` (only gating and mutual
/// differ) and evaluates restored-fill probe accuracy at (eta, mode).
AblationReport ablation_matrix(const Benchmark& data, const TrainConfig& base,
                               const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                               double eta, MissingMode mode, const EvalOptions& opts);

// ---- denoising trajectories -------------------------------------------------------

struct TrajectoryReport {
    Direction direction = Direction::I2T;
    std::vector<int> steps;               ///< captured plan steps; kFinalStep last
    std::vector<std::vector<double>> distance;  ///< [sample][snapshot] L2 to the truth, normalized space
    double monotone_fraction = 0.0;       ///< samples whose distance never increases over all plan steps
    Pca pca;                              ///< fitted on normalized ground-truth targets
    std::vector<Matrix> projected;        ///< per requested snapshot: samples x 2
    std::vector<int> projected_steps;
    Matrix projected_truth;
};

TrajectoryReport trajectory_diagnostic(const Checkpoint& ck, const std::vector<SamplePair>& samples,
                                       Direction direction, std::uint64_t seed, int ddim_steps,
                                       const std::vector<int>& plot_steps);

// ---- desk presets -----------------------------------------------------------------

/// Synthetic 5-cluster benchmark, d = 64, 2000 train / 500 test pairs.
SyntheticSpec desk_benchmark_spec(std::uint64_t seed);
/// Small, fast-converging model and optimizer settings for the desk benchmark.
TrainConfig desk_train_config(std::uint64_t seed);

// ---- reports ---------------------------------------------------------------------

std::string config_hash(const std::string& text);

}  // namespace featrestore
