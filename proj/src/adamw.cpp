#include "featrestore/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace featrestore {

AdamW::AdamW(const ParamStore& shape, Params params)
    : params_(params), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

double global_norm(const std::vector<Matrix>& grads) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    return std::sqrt(sq);
}

double AdamW::step(ParamStore& weights, std::vector<Matrix>& grads, double lr) {
    if (grads.size() != weights.size() || m_.size() != weights.size()) {
        throw std::invalid_argument("adamw parameter/gradient/moment count mismatch");
    }
    const double norm = global_norm(grads);
    if (params_.grad_clip && norm > *params_.grad_clip) {
        const double s = *params_.grad_clip / norm;
        for (auto& g : grads) g *= s;
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Matrix& w = weights.values[i];
        const Matrix& g = grads[i];
        m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * g;
        v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * g.cwiseProduct(g);
        auto update = (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + params_.epsilon);
        w.array() -= lr * (update + params_.weight_decay * w.array());
    }
    return norm;
}

}  // namespace featrestore
