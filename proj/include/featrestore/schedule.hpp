#pragma once

#include "featrestore/autograd.hpp"

#include <stdexcept>
#include <vector>

namespace featrestore {

class ScheduleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Variance schedule for a T-step diffusion process. Timesteps are 0-indexed:
/// index t in [0, T) is diffusion step t+1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    /// alpha_bar at index t, with alpha_bar(-1) == 1 (the clean endpoint).
    double alpha_bar_at(int t) const;
    void validate() const;
};

/// Ascending subsequence of timesteps visited by the sampler; last == T-1.
struct DdimPlan {
    std::vector<int> steps;

    int count() const { return static_cast<int>(steps.size()); }
};

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);
/// Builds a schedule from an explicit beta table.
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps
Vector forward_diffuse(const Vector& x0, const Vector& eps, int t, const NoiseSchedule& sched);
/// x_t / sqrt(ab_t) - sqrt(1/ab_t - 1) * eps_hat
Vector estimate_x0(const Vector& x_t, const Vector& eps_hat, int t, const NoiseSchedule& sched);

/// Deterministic (eta = 0) DDIM transition written in terms of the two noise
/// levels. Used directly by tests of the degenerate equal-level step.
Vector ddim_step_between(const Vector& x_t, const Vector& eps_hat, double alpha_bar_t,
                         double alpha_bar_prev);
/// t_prev == -1 denotes the clean endpoint and returns the x0 estimate.
Vector ddim_step(const Vector& x_t, const Vector& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched);

/// steps[i] = (T-1) - (count-1-i) * (T / count)
DdimPlan make_ddim_plan(const NoiseSchedule& sched, int count);

// Row-batched forms used by training and sampling: row i uses timestep t[i].
Matrix forward_diffuse_rows(const Matrix& x0, const Matrix& eps, const std::vector<int>& t,
                            const NoiseSchedule& sched);
Matrix ddim_step_rows(const Matrix& x_t, const Matrix& eps_hat, int t, int t_prev,
                      const NoiseSchedule& sched);

}  // namespace featrestore
