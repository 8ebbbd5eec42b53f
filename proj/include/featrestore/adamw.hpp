#pragma once

#include "featrestore/autograd.hpp"
#include "featrestore/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace featrestore {

/// Adam with decoupled weight decay:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
class AdamW {
public:
    struct Params {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
        double weight_decay = 0.01;
        std::optional<double> grad_clip;  ///< global L2 norm clip
    };

    AdamW() = default;
    AdamW(const ParamStore& shape, Params params);

    const Params& params() const { return params_; }
    void set_params(const Params& p) { params_ = p; }

    /// Applies one update in place. Returns the pre-clip global gradient norm.
    double step(ParamStore& weights, std::vector<Matrix>& grads, double lr);

    std::vector<Matrix>& first_moment() { return m_; }
    std::vector<Matrix>& second_moment() { return v_; }
    const std::vector<Matrix>& first_moment() const { return m_; }
    const std::vector<Matrix>& second_moment() const { return v_; }
    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

private:
    Params params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::uint64_t t_ = 0;
};

/// L2 norm over all gradient tensors.
double global_norm(const std::vector<Matrix>& grads);

}  // namespace featrestore
