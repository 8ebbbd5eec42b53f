#pragma once

#include "featrestore/data.hpp"
#include "featrestore/model.hpp"
#include "featrestore/rng.hpp"
#include "featrestore/schedule.hpp"
#include "featrestore/training.hpp"

#include <cstdint>
#include <set>
#include <vector>

namespace featrestore {

/// I2T restores text from an image condition; T2I restores image from text.
enum class Direction { I2T, T2I };

std::string to_string(Direction d);

/// Which model restores the missing side of a sample. Throws for complete
/// samples (nothing to restore).
Direction direction_for(Availability availability);

/// Runs the DDIM plan from the given starting noise. `available` rows are the
/// normalized condition features; returns normalized restored features.
Matrix restore_batch(const Matrix& available, const NoisePredictor& model, const DdimPlan& plan,
                     const NoiseSchedule& sched, const Matrix& x_T);

/// Single-sample restoration; x_T is drawn from rng.
Vector restore_feature(const Vector& available, Direction direction, const NoisePredictor& model,
                       const DdimPlan& plan, const NoiseSchedule& sched, Rng& rng);

/// Marks the terminal (clean) output in record_trajectory's capture set.
constexpr int kFinalStep = -1;

/// Snapshots of x_t (the sampler state entering plan step t), in visiting
/// order, followed by the final x0 estimate.
std::vector<Vector> record_trajectory(const Vector& available, Direction direction,
                                      const NoisePredictor& model, const DdimPlan& plan,
                                      const NoiseSchedule& sched, Rng& rng, const std::set<int>& capture_at);

/// Batched form: element k is the (B x d) state at the k-th captured point.
std::vector<Matrix> record_trajectory_batch(const Matrix& available, const NoisePredictor& model,
                                            const DdimPlan& plan, const NoiseSchedule& sched,
                                            const Matrix& x_T, const std::set<int>& capture_at);

/// The two direction models plus normalization, as loaded from a checkpoint.
struct Restorer {
    const NoisePredictor* i2t = nullptr;
    const NoisePredictor* t2i = nullptr;
    const NoiseSchedule* schedule = nullptr;
    const NormStats* image_norm = nullptr;
    const NormStats* text_norm = nullptr;
    DdimPlan plan;

    static Restorer from_checkpoint(const Checkpoint& ck, int steps);
    const NoisePredictor& model(Direction d) const { return d == Direction::I2T ? *i2t : *t2i; }
};

/// Fills the missing side of a single sample. Complete samples pass through
/// unchanged; the observed side is never modified.
SamplePair complete_sample(const SamplePair& pair, const Restorer& restorer, Rng& rng);

struct CompletionStats {
    std::size_t restored_image = 0;
    std::size_t restored_text = 0;
    std::size_t passed_through = 0;
};

/// Completes every incomplete sample. Sample i's starting noise comes from
/// Rng(derive_seed(global_seed, id)), so results do not depend on batch
/// composition order.
std::vector<SamplePair> complete_dataset(const std::vector<SamplePair>& samples, const Restorer& restorer,
                                         std::uint64_t global_seed, CompletionStats* stats = nullptr);

/// Restores every sample in both directions (each from its own observed
/// feature), in sample order: rows of .image are T2I restorations from text,
/// rows of .text are I2T restorations from image. Denormalized.
struct RestorationCache {
    Matrix image;
    Matrix text;
};
RestorationCache restore_all(const std::vector<SamplePair>& complete_samples, const Restorer& restorer,
                             std::uint64_t global_seed);

/// Starting noise for one sample.
Vector initial_noise(std::uint64_t global_seed, const std::string& id, Direction direction, int dim);

}  // namespace featrestore
