#include "featrestore/restoration.hpp"

#include <algorithm>
#include <stdexcept>

namespace featrestore {

std::string to_string(Direction d) { return d == Direction::I2T ? "I2T" : "T2I"; }

Direction direction_for(Availability availability) {
    switch (availability) {
        case Availability::image_only: return Direction::I2T;  // text missing
        case Availability::text_only: return Direction::T2I;   // image missing
        case Availability::complete: break;
    }
    throw std::invalid_argument("complete samples have no missing modality to restore");
}

namespace {

void check_plan(const DdimPlan& plan, const NoiseSchedule& sched) {
    if (plan.steps.empty() || plan.steps.back() != sched.T - 1 || plan.steps.front() < 0) {
        throw ScheduleError("DDIM plan does not match the schedule (last step must be T-1)");
    }
    for (std::size_t i = 1; i < plan.steps.size(); ++i) {
        if (plan.steps[i] <= plan.steps[i - 1]) {
            throw ScheduleError("DDIM plan must be strictly increasing");
        }
    }
}

void check_shapes(const Matrix& available, const NoisePredictor& model, const Matrix& x_T) {
    if (available.cols() != model.cond_dim()) {
        throw std::invalid_argument("available feature width " + std::to_string(available.cols()) +
                                    " does not match the model's condition width " +
                                    std::to_string(model.cond_dim()));
    }
    if (x_T.rows() != available.rows() || x_T.cols() != model.feature_dim()) {
        throw std::invalid_argument("starting noise shape does not match (B x d_feature)");
    }
}

Matrix row_of(const Vector& v) { return v.transpose(); }

}  // namespace

std::vector<Matrix> record_trajectory_batch(const Matrix& available, const NoisePredictor& model,
                                            const DdimPlan& plan, const NoiseSchedule& sched,
                                            const Matrix& x_T, const std::set<int>& capture_at) {
    check_plan(plan, sched);
    check_shapes(available, model, x_T);
    for (int s : capture_at) {
        if (s != kFinalStep && !std::binary_search(plan.steps.begin(), plan.steps.end(), s)) {
            throw std::invalid_argument("capture step " + std::to_string(s) + " is not in the DDIM plan");
        }
    }
    std::vector<Matrix> snapshots;
    Matrix x = x_T;
    const auto batch = static_cast<std::size_t>(available.rows());
    for (int i = plan.count() - 1; i >= 0; --i) {
        const int t = plan.steps[static_cast<std::size_t>(i)];
        const int t_prev = i > 0 ? plan.steps[static_cast<std::size_t>(i - 1)] : kFinalStep;
        if (capture_at.count(t) != 0) snapshots.push_back(x);
        Matrix eps = model.predict_values(x, std::vector<int>(batch, t), available);
        x = ddim_step_rows(x, eps, t, t_prev, sched);
    }
    snapshots.push_back(std::move(x));
    return snapshots;
}

Matrix restore_batch(const Matrix& available, const NoisePredictor& model, const DdimPlan& plan,
                     const NoiseSchedule& sched, const Matrix& x_T) {
    return record_trajectory_batch(available, model, plan, sched, x_T, {}).back();
}

Vector restore_feature(const Vector& available, Direction direction, const NoisePredictor& model,
                       const DdimPlan& plan, const NoiseSchedule& sched, Rng& rng) {
    (void)direction;
    Matrix x_T = row_of(rng.normal_vector(model.feature_dim()));
    return restore_batch(row_of(available), model, plan, sched, x_T).row(0).transpose();
}

std::vector<Vector> record_trajectory(const Vector& available, Direction direction,
                                      const NoisePredictor& model, const DdimPlan& plan,
                                      const NoiseSchedule& sched, Rng& rng, const std::set<int>& capture_at) {
    (void)direction;
    Matrix x_T = row_of(rng.normal_vector(model.feature_dim()));
    auto snaps = record_trajectory_batch(row_of(available), model, plan, sched, x_T, capture_at);
    std::vector<Vector> out;
    out.reserve(snaps.size());
    for (const auto& m : snaps) out.push_back(m.row(0).transpose());
    return out;
}

Restorer Restorer::from_checkpoint(const Checkpoint& ck, int steps) {
    Restorer r;
    r.i2t = &ck.state.i2t;
    r.t2i = &ck.state.t2i;
    r.schedule = &ck.schedule;
    r.image_norm = &ck.image_norm;
    r.text_norm = &ck.text_norm;
    r.plan = make_ddim_plan(ck.schedule, steps);
    return r;
}

Vector initial_noise(std::uint64_t global_seed, const std::string& id, Direction direction, int dim) {
    Rng rng(derive_seed(global_seed, id + (direction == Direction::I2T ? "#i2t" : "#t2i")));
    return rng.normal_vector(dim);
}

SamplePair complete_sample(const SamplePair& pair, const Restorer& r, Rng& rng) {
    pair.validate();
    if (pair.availability == Availability::complete) {
        return pair;
    }
    const Direction dir = direction_for(pair.availability);
    SamplePair out = pair;
    if (dir == Direction::T2I) {
        Vector cond = normalize(*pair.text, *r.text_norm);
        Vector z = restore_feature(cond, dir, *r.t2i, r.plan, *r.schedule, rng);
        out.image = denormalize(z, *r.image_norm);
        out.image_restored = true;
    } else {
        Vector cond = normalize(*pair.image, *r.image_norm);
        Vector z = restore_feature(cond, dir, *r.i2t, r.plan, *r.schedule, rng);
        out.text = denormalize(z, *r.text_norm);
        out.text_restored = true;
    }
    out.availability = Availability::complete;
    return out;
}

namespace {

/// Restores rows `idx` of `samples` in one direction; returns denormalized rows.
Matrix restore_group(const std::vector<const SamplePair*>& group, Direction dir, const Restorer& r,
                     std::uint64_t global_seed) {
    const Modality cond_mod = dir == Direction::I2T ? Modality::image : Modality::text;
    const NormStats& cond_norm = dir == Direction::I2T ? *r.image_norm : *r.text_norm;
    const NormStats& out_norm = dir == Direction::I2T ? *r.text_norm : *r.image_norm;
    const NoisePredictor& model = r.model(dir);
    Matrix cond = normalize_rows(stack(group, cond_mod), cond_norm);
    Matrix x_T(cond.rows(), model.feature_dim());
    for (std::size_t i = 0; i < group.size(); ++i) {
        x_T.row(static_cast<Eigen::Index>(i)) =
            initial_noise(global_seed, group[i]->id, dir, model.feature_dim()).transpose();
    }
    return denormalize_rows(restore_batch(cond, model, r.plan, *r.schedule, x_T), out_norm);
}

}  // namespace

std::vector<SamplePair> complete_dataset(const std::vector<SamplePair>& samples, const Restorer& r,
                                         std::uint64_t global_seed, CompletionStats* stats) {
    std::vector<SamplePair> out = samples;
    std::vector<const SamplePair*> need_image, need_text;
    std::vector<std::size_t> idx_image, idx_text;
    CompletionStats st;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].validate();
        switch (samples[i].availability) {
            case Availability::complete: ++st.passed_through; break;
            case Availability::text_only:
                need_image.push_back(&samples[i]);
                idx_image.push_back(i);
                break;
            case Availability::image_only:
                need_text.push_back(&samples[i]);
                idx_text.push_back(i);
                break;
        }
    }
    if (!need_image.empty()) {
        Matrix restored = restore_group(need_image, Direction::T2I, r, global_seed);
        for (std::size_t k = 0; k < idx_image.size(); ++k) {
            SamplePair& s = out[idx_image[k]];
            s.image = restored.row(static_cast<Eigen::Index>(k)).transpose();
            s.image_restored = true;
            s.availability = Availability::complete;
        }
        st.restored_image = need_image.size();
    }
    if (!need_text.empty()) {
        Matrix restored = restore_group(need_text, Direction::I2T, r, global_seed);
        for (std::size_t k = 0; k < idx_text.size(); ++k) {
            SamplePair& s = out[idx_text[k]];
            s.text = restored.row(static_cast<Eigen::Index>(k)).transpose();
            s.text_restored = true;
            s.availability = Availability::complete;
        }
        st.restored_text = need_text.size();
    }
    if (stats != nullptr) *stats = st;
    return out;
}

RestorationCache restore_all(const std::vector<SamplePair>& complete_samples, const Restorer& r,
                             std::uint64_t global_seed) {
    std::vector<const SamplePair*> all;
    for (const auto& s : complete_samples) {
        if (!s.image || !s.text) {
            throw std::invalid_argument("restore_all needs complete samples");
        }
        all.push_back(&s);
    }
    RestorationCache cache;
    cache.image = restore_group(all, Direction::T2I, r, global_seed);
    cache.text = restore_group(all, Direction::I2T, r, global_seed);
    return cache;
}

}  // namespace featrestore
