#include "featrestore/schedule.hpp"

#include <cmath>
#include <string>

namespace featrestore {

namespace {

void check_index(const NoiseSchedule& sched, int t) {
    if (t < 0 || t >= sched.T) {
        throw ScheduleError("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(sched.T) + ")");
    }
}

void check_dims(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
}

}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t == -1) {
        return 1.0;
    }
    check_index(*this, t);
    return alpha_bar[static_cast<std::size_t>(t)];
}

void NoiseSchedule::validate() const {
    const auto n = static_cast<std::size_t>(T);
    if (T < 1 || beta.size() != n || alpha.size() != n || alpha_bar.size() != n) {
        throw ScheduleError("schedule tables do not match T");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(beta[i] > 0.0 && beta[i] < 1.0) || !std::isfinite(alpha_bar[i])) {
            throw ScheduleError("beta out of (0,1) at index " + std::to_string(i));
        }
        if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) {
            throw ScheduleError("alpha_bar not strictly decreasing at index " + std::to_string(i));
        }
    }
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) {
        throw ScheduleError("schedule needs at least one step");
    }
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) {
            throw ScheduleError("beta must lie in (0,1)");
        }
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) {
        throw ScheduleError("T must be >= 1");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ScheduleError("need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    return schedule_from_betas(std::move(betas));
}

Vector forward_diffuse(const Vector& x0, const Vector& eps, int t, const NoiseSchedule& sched) {
    check_dims(x0, eps);
    const double ab = sched.alpha_bar_at(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Vector estimate_x0(const Vector& x_t, const Vector& eps_hat, int t, const NoiseSchedule& sched) {
    check_dims(x_t, eps_hat);
    const double ab = sched.alpha_bar_at(t);
    if (!(ab > 0.0)) {
        throw ScheduleError("alpha_bar is zero at timestep " + std::to_string(t));
    }
    return x_t / std::sqrt(ab) - std::sqrt(1.0 / ab - 1.0) * eps_hat;
}

Vector ddim_step_between(const Vector& x_t, const Vector& eps_hat, double alpha_bar_t,
                         double alpha_bar_prev) {
    check_dims(x_t, eps_hat);
    if (!(alpha_bar_t > 0.0)) {
        throw ScheduleError("alpha_bar is zero");
    }
    Vector x0 = x_t / std::sqrt(alpha_bar_t) - std::sqrt(1.0 / alpha_bar_t - 1.0) * eps_hat;
    return std::sqrt(alpha_bar_prev) * x0 + std::sqrt(1.0 - alpha_bar_prev) * eps_hat;
}

Vector ddim_step(const Vector& x_t, const Vector& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched) {
    if (t_prev >= t) {
        throw ScheduleError("ddim_step needs t_prev < t (got t=" + std::to_string(t) +
                            ", t_prev=" + std::to_string(t_prev) + ")");
    }
    return ddim_step_between(x_t, eps_hat, sched.alpha_bar_at(t), sched.alpha_bar_at(t_prev));
}

DdimPlan make_ddim_plan(const NoiseSchedule& sched, int count) {
    if (count < 1 || count > sched.T) {
        throw ScheduleError("plan count " + std::to_string(count) + " outside [1, " +
                            std::to_string(sched.T) + "]");
    }
    const int stride = sched.T / count;
    DdimPlan plan;
    plan.steps.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        plan.steps[static_cast<std::size_t>(i)] = (sched.T - 1) - (count - 1 - i) * stride;
    }
    return plan;
}

Matrix forward_diffuse_rows(const Matrix& x0, const Matrix& eps, const std::vector<int>& t,
                            const NoiseSchedule& sched) {
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols() ||
        static_cast<std::size_t>(x0.rows()) != t.size()) {
        throw std::invalid_argument("forward_diffuse_rows shape mismatch");
    }
    Matrix out(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < x0.rows(); ++r) {
        const double ab = sched.alpha_bar_at(t[static_cast<std::size_t>(r)]);
        out.row(r) = std::sqrt(ab) * x0.row(r) + std::sqrt(1.0 - ab) * eps.row(r);
    }
    return out;
}

Matrix ddim_step_rows(const Matrix& x_t, const Matrix& eps_hat, int t, int t_prev,
                      const NoiseSchedule& sched) {
    if (t_prev >= t) {
        throw ScheduleError("ddim_step needs t_prev < t");
    }
    if (x_t.rows() != eps_hat.rows() || x_t.cols() != eps_hat.cols()) {
        throw std::invalid_argument("ddim_step_rows shape mismatch");
    }
    const double ab = sched.alpha_bar_at(t);
    const double ab_prev = sched.alpha_bar_at(t_prev);
    Matrix x0 = x_t / std::sqrt(ab) - std::sqrt(1.0 / ab - 1.0) * eps_hat;
    return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

}  // namespace featrestore
