#pragma once

#include "featrestore/adamw.hpp"
#include "featrestore/data.hpp"
#include "featrestore/model.hpp"
#include "featrestore/rng.hpp"
#include "featrestore/schedule.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace featrestore {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when mutual_loss is evaluated at t >= tau.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class LossMode {
    total,        ///< base(i2t) + base(t2i) + mutual where t < tau
    mutual_only,  ///< mutual term alone (degenerate; used for comparison)
};

struct TrainConfig {
    int tau = 50;
    int epochs = 40;
    double lr = 1e-4;
    /// Step decay: the learning rate is multiplied by lr_decay from step
    /// floor(lr_decay_at * total_steps) on. 1.0 keeps it constant.
    double lr_decay = 1.0;
    double lr_decay_at = 0.5;
    int batch_size = 64;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> grad_clip;
    bool mutual_enabled = true;
    /// Stop gradients at the x0 estimate fed to the opposite direction.
    bool detach_x0 = false;
    LossMode loss_mode = LossMode::total;
    /// Diffuse z-scored features (stats from the training split).
    bool normalize = true;

    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    /// Configuration of the I2T model (x = text, condition = image). The T2I
    /// model uses the same configuration with the two feature roles swapped.
    ModelConfig model;

    void validate() const;
    AdamW::Params optimizer_params() const;
    double lr_at(std::uint64_t step, std::uint64_t total_steps) const;
    bool operator==(const TrainConfig&) const = default;
};

/// The T2I counterpart of an I2T model configuration.
ModelConfig swap_roles(const ModelConfig& cfg);

struct TrainState {
    GatedDiT i2t;  ///< restores text from an image condition
    GatedDiT t2i;  ///< restores image from a text condition
    AdamW opt_i2t;
    AdamW opt_t2i;
    std::uint64_t step = 0;
    Rng rng;
};

/// Everything needed to resume training or run inference.
struct Checkpoint {
    TrainConfig config;
    NoiseSchedule schedule;
    NormStats image_norm;
    NormStats text_norm;
    TrainState state;
};

NoiseSchedule make_schedule(const TrainConfig& cfg);
/// Fresh models and optimizer state; normalization stats from `train`.
Checkpoint init_training(const Dataset& train, TrainConfig cfg);

// ---- losses ---------------------------------------------------------------

/// Mean squared error between eps and the prediction at forward_diffuse(x0, eps, t).
double base_loss(const NoisePredictor& model, const Vector& x0, const Vector& cond, int t,
                 const Vector& eps, const NoiseSchedule& sched);

/// Bidirectional consistency term for one complete pair at t < tau: each
/// direction is conditioned on the opposite direction's x0 estimate.
double mutual_loss(const NoisePredictor& i2t, const NoisePredictor& t2i, const SamplePair& pair, int t,
                   const Vector& eps_img, const Vector& eps_txt, const NoiseSchedule& sched, int tau);
double mutual_loss(const TrainState& state, const SamplePair& pair, int t, const Vector& eps_img,
                   const Vector& eps_txt, const NoiseSchedule& sched, int tau);

double total_loss(const NoisePredictor& i2t, const NoisePredictor& t2i, const SamplePair& pair, int t,
                  const Vector& eps_img, const Vector& eps_txt, const NoiseSchedule& sched,
                  const TrainConfig& cfg);
double total_loss(const TrainState& state, const SamplePair& pair, int t, const Vector& eps_img,
                  const Vector& eps_txt, const NoiseSchedule& sched, const TrainConfig& cfg);

/// One batch of (already normalized) complete pairs with its sampled noise.
struct LossBatch {
    Matrix image0;            ///< B x d_image
    Matrix text0;             ///< B x d_text
    Matrix eps_img;
    Matrix eps_txt;
    std::vector<int> t;
};

struct LossBreakdown {
    double base_i2t = 0.0;
    double base_t2i = 0.0;
    double mutual = 0.0;
    double total = 0.0;
    std::size_t mutual_count = 0;  ///< pairs with t < tau that carried the mutual term
};

struct LossOptions {
    int tau = 50;
    bool mutual_enabled = true;
    bool detach_x0 = false;
    LossMode mode = LossMode::total;
};

/// Records the batch-mean total loss on `tape`. Gradients of a later
/// backward() accumulate into grads_i2t / grads_t2i when non-null.
ag::Var build_batch_loss(ag::Tape& tape, const NoisePredictor& i2t, const NoisePredictor& t2i,
                         const LossBatch& batch, const NoiseSchedule& sched, const LossOptions& opts,
                         std::vector<Matrix>* grads_i2t, std::vector<Matrix>* grads_t2i,
                         LossBreakdown* breakdown = nullptr);

LossOptions loss_options(const TrainConfig& cfg);

// ---- optimization -----------------------------------------------------------

struct LossReport {
    std::uint64_t step = 0;
    double lr = 0.0;
    LossBreakdown loss;
    double grad_norm_i2t = 0.0;
    double grad_norm_t2i = 0.0;
};

/// Draws one t per pair and fresh noise per modality from state.rng, then
/// applies one AdamW update to both models. Pairs must be complete and
/// already normalized.
LossReport train_step(TrainState& state, const std::vector<const SamplePair*>& batch,
                      const TrainConfig& cfg, const NoiseSchedule& sched,
                      std::optional<double> lr = std::nullopt);

using StepCallback = std::function<void(const LossReport&)>;

std::uint64_t steps_per_epoch(std::size_t n_pairs, int batch_size);

/// Continues training from ck.state.step up to `max_steps` (or the end of
/// the configured epochs). Epoch order is a function of (seed, epoch), so an
/// interrupted run resumes exactly.
std::vector<LossReport> run_training(Checkpoint& ck, const Dataset& train,
                                     std::optional<std::uint64_t> max_steps = std::nullopt,
                                     const StepCallback& on_step = nullptr);

Checkpoint train(const Dataset& train, const TrainConfig& cfg, std::vector<LossReport>* log = nullptr,
                 const StepCallback& on_step = nullptr);

// ---- checkpoint file ----------------------------------------------------------

constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace featrestore
