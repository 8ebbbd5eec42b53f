#include "featrestore/adamw.hpp"

#include "doctest.h"

#include <cmath>

using namespace featrestore;

namespace {

ParamStore one_scalar(double w) {
    ParamStore p;
    p.add("w", Matrix::Constant(1, 1, w));
    return p;
}

}  // namespace

TEST_SUITE("adamw") {

TEST_CASE("first step moves by lr along the gradient sign plus decay") {
    ParamStore p = one_scalar(1.0);
    AdamW opt(p, {});
    std::vector<Matrix> g = {Matrix::Constant(1, 1, 0.5)};
    opt.step(p, g, 0.1);
    // m_hat = 0.5, v_hat = 0.25 -> update 0.5 / (0.5 + 1e-8); decay 0.01 * 1.0
    const double expected = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01);
    CHECK(p["w"](0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("multi-step trajectory matches a scalar recurrence") {
    ParamStore p = one_scalar(-0.4);
    AdamW::Params hp;
    hp.beta1 = 0.8;
    hp.beta2 = 0.95;
    hp.weight_decay = 0.1;
    AdamW opt(p, hp);
    const double grads[] = {0.3, -0.2, 0.05, 1.5};
    double w = -0.4, m = 0.0, v = 0.0;
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        m = 0.8 * m + 0.2 * g;
        v = 0.95 * v + 0.05 * g * g;
        const double mh = m / (1 - std::pow(0.8, t));
        const double vh = v / (1 - std::pow(0.95, t));
        w -= 0.01 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * w);
        std::vector<Matrix> gm = {Matrix::Constant(1, 1, g)};
        opt.step(p, gm, 0.01);
        CHECK(p["w"](0, 0) == doctest::Approx(w).epsilon(1e-13));
    }
    CHECK(opt.step_count() == 4);
}

TEST_CASE("zero gradient only applies decoupled decay") {
    ParamStore p = one_scalar(2.0);
    AdamW opt(p, {});
    std::vector<Matrix> g = {Matrix::Zero(1, 1)};
    opt.step(p, g, 0.5);
    CHECK(p["w"](0, 0) == doctest::Approx(2.0 - 0.5 * 0.01 * 2.0).epsilon(1e-15));
}

TEST_CASE("global norm clipping") {
    ParamStore p;
    p.add("a", Matrix::Zero(1, 2));
    AdamW::Params hp;
    hp.grad_clip = 1.0;
    AdamW opt(p, hp);
    std::vector<Matrix> g = {Matrix(1, 2)};
    g[0] << 3.0, 4.0;
    CHECK(opt.step(p, g, 0.1) == doctest::Approx(5.0));
    CHECK(g[0](0, 0) == doctest::Approx(0.6));
    CHECK(global_norm(g) == doctest::Approx(1.0));
}

TEST_CASE("shape mismatch is rejected") {
    ParamStore p = one_scalar(1.0);
    AdamW opt(p, {});
    std::vector<Matrix> g;
    CHECK_THROWS(opt.step(p, g, 0.1));
}

}  // TEST_SUITE
