#include "featrestore/model.hpp"

#include "doctest.h"

#include <cmath>

using namespace featrestore;

namespace {

ModelConfig tiny(GatingMode gating) {
    ModelConfig c;
    c.d_model = 8;
    c.depth = 2;
    c.n_heads = 2;
    c.n_tokens = 2;
    c.d_feature = 6;
    c.d_cond = 4;
    c.cond_tokens = 2;
    c.gate_hidden = 5;
    c.ffn_mult = 2;
    c.gating = gating;
    return c;
}

/// Replaces every parameter with O(0.3) noise so zero-initialized heads are exercised.
void randomize(GatedDiT& model, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& m : model.params().values) m = 0.3 * rng.normal_matrix(m.rows(), m.cols());
}

using Row = Eigen::RowVectorXd;

Row ln(const Row& x, const Matrix& g, const Matrix& b) {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    Row out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = (x(i) - mean) / std::sqrt(var + 1e-5) * g(0, i) + b(0, i);
    return out;
}

Row act(const Row& x, double (*f)(double)) {
    Row out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = f(x(i));
    return out;
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }
double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double gelu(double v) { return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v))); }

/// Direct evaluation for depth 1 with a single feature token and a single
/// condition token, where every attention reduces to its value path.
Row reference_forward(const GatedDiT& model, const Row& x, const Row& cond, int t) {
    const ParamStore& P = model.params();
    const int d = model.config().d_model;
    Row temb(d);
    for (int i = 0; i < d / 2; ++i) {
        const double f = std::pow(10000.0, -static_cast<double>(i) / (d / 2));
        temb(i) = std::cos(t * f);
        temb(d / 2 + i) = std::sin(t * f);
    }
    Row time = act(temb * P["time.w1"] + Row(P["time.b1"]), silu) * P["time.w2"] + Row(P["time.b2"]);
    Row c = cond * P["cond.w"] + Row(P["cond.b"]) + Row(P["cond.pos"]) + time;
    Row pooled = c * P["pool.wv"];
    Row g = act(pooled * P["gate.w1"] + Row(P["gate.b1"]), silu) * P["gate.w2"] + Row(P["gate.b2"]);
    Row za = act(g * P["blocks.0.gate_attn.w"] + Row(P["blocks.0.gate_attn.b"]), sigm);
    Row zm = act(g * P["blocks.0.gate_mlp.w"] + Row(P["blocks.0.gate_mlp.b"]), sigm);

    Row h = x * P["in.w"] + Row(P["in.b"]) + Row(P["in.pos"]);
    Row a = ln(h, P["blocks.0.ln1.g"], P["blocks.0.ln1.b"]);
    Row sa = a * P["blocks.0.attn.wv"] * P["blocks.0.attn.wo"] + Row(P["blocks.0.attn.bo"]);
    h += za.cwiseProduct(sa);
    h += c * P["blocks.0.xattn.wv"] * P["blocks.0.xattn.wo"] + Row(P["blocks.0.xattn.bo"]);
    Row f = ln(h, P["blocks.0.ln2.g"], P["blocks.0.ln2.b"]);
    Row ff = act(f * P["blocks.0.ffn.w1"] + Row(P["blocks.0.ffn.b1"]), gelu) * P["blocks.0.ffn.w2"] +
             Row(P["blocks.0.ffn.b2"]);
    h += zm.cwiseProduct(ff);
    return ln(h, P["final.g"], P["final.b"]) * P["out.w"] + Row(P["out.b"]);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("timestep embedding layout") {
    const Vector e = timestep_embedding(100, 4);
    CHECK(e(0) == doctest::Approx(std::cos(100.0)).epsilon(1e-14));
    CHECK(e(1) == doctest::Approx(std::cos(1.0)).epsilon(1e-14));
    CHECK(e(2) == doctest::Approx(std::sin(100.0)).epsilon(1e-14));
    CHECK(e(3) == doctest::Approx(std::sin(1.0)).epsilon(1e-14));
    CHECK_THROWS_AS(timestep_embedding(1, 3), std::invalid_argument);
}

TEST_CASE("closed-form parameter count matches the constructed model") {
    for (GatingMode g : {GatingMode::full, GatingMode::adaln, GatingMode::concat, GatingMode::base}) {
        for (bool pos : {true, false}) {
            ModelConfig c = tiny(g);
            c.cond_positional = pos;
            Rng rng(1);
            GatedDiT m(c, rng);
            CAPTURE(to_string(g));
            CHECK(m.params().scalar_count() == c.parameter_count());
        }
    }
    ModelConfig big;
    Rng rng(2);
    CHECK(GatedDiT(big, rng).params().scalar_count() == big.parameter_count());
}

TEST_CASE("gating modes round-trip through strings") {
    for (GatingMode g : {GatingMode::full, GatingMode::adaln, GatingMode::concat, GatingMode::base}) {
        CHECK(gating_from_string(to_string(g)) == g);
    }
    CHECK_THROWS_AS(gating_from_string("film"), std::invalid_argument);
}

TEST_CASE("invalid configurations are rejected") {
    ModelConfig c = tiny(GatingMode::full);
    c.d_model = 9;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny(GatingMode::full);
    c.d_feature = 7;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("forward pass matches a direct evaluation") {
    ModelConfig c = tiny(GatingMode::full);
    c.depth = 1;
    c.n_tokens = 1;
    c.cond_tokens = 1;
    c.n_heads = 1;
    Rng rng(3);
    GatedDiT model(c, rng);
    randomize(model, 4);
    Rng data(5);
    const Matrix x = data.normal_matrix(3, c.d_feature);
    const Matrix cond = data.normal_matrix(3, c.d_cond);
    const std::vector<int> t = {0, 417, 999};
    const Matrix out = model.predict_values(x, t, cond);
    for (int b = 0; b < 3; ++b) {
        const Row expect = reference_forward(model, x.row(b), cond.row(b), t[static_cast<std::size_t>(b)]);
        CHECK((out.row(b) - expect).norm() < 1e-12 * std::max(1.0, expect.norm()));
    }
}

TEST_CASE("zero-initialized gates open at one half and the output starts at zero") {
    ModelConfig c = tiny(GatingMode::full);
    Rng rng(6);
    GatedDiT model(c, rng);
    Rng data(7);
    GateCapture cap;
    const Matrix out = model.predict_values(data.normal_matrix(4, c.d_feature), {1, 2, 3, 4},
                                            data.normal_matrix(4, c.d_cond), &cap);
    REQUIRE(cap.attn.size() == 2);
    REQUIRE(cap.mlp.size() == 2);
    for (int l = 0; l < 2; ++l) {
        CHECK((cap.attn[l].array() == 0.5).all());
        CHECK((cap.mlp[l].array() == 0.5).all());
    }
    CHECK(out.isZero(0.0));
}

TEST_CASE("samples in a batch do not interact") {
    for (GatingMode g : {GatingMode::full, GatingMode::adaln, GatingMode::concat, GatingMode::base}) {
        ModelConfig c = tiny(g);
        Rng rng(8);
        GatedDiT model(c, rng);
        randomize(model, 9);
        Rng data(10);
        const Matrix x = data.normal_matrix(3, c.d_feature);
        const Matrix cond = data.normal_matrix(3, c.d_cond);
        const Matrix all = model.predict_values(x, {5, 50, 500}, cond);
        const Matrix one = model.predict_values(x.row(1), {50}, cond.row(1));
        CAPTURE(to_string(g));
        CHECK((all.row(1) - one.row(0)).norm() < 1e-12);
    }
}

TEST_CASE("parameter gradients match finite differences for every gating mode") {
    for (GatingMode g : {GatingMode::full, GatingMode::adaln, GatingMode::concat, GatingMode::base}) {
        ModelConfig c = tiny(g);
        Rng rng(11);
        GatedDiT model(c, rng);
        randomize(model, 12);
        Rng data(13);
        const Matrix x = data.normal_matrix(2, c.d_feature);
        const Matrix cond = data.normal_matrix(2, c.d_cond);
        const Matrix target = data.normal_matrix(2, c.d_feature);
        const std::vector<int> t = {3, 700};
        auto loss = [&](std::vector<Matrix>* grads) {
            ag::Tape tape;
            ag::Var out = model.predict(tape.constant(x), t, tape.constant(cond), grads);
            ag::Var l = ag::sum_squared_error(out, target);
            if (grads != nullptr) tape.backward(l);
            return l.value()(0, 0);
        };
        std::vector<Matrix> grads;
        loss(&grads);
        REQUIRE(grads.size() == model.params().size());
        double worst = 0.0;
        Rng pick(14);
        for (int trial = 0; trial < 60; ++trial) {
            const auto pi = static_cast<std::size_t>(pick.uniform_int(model.params().size()));
            Matrix& w = model.params().values[pi];
            const auto k = static_cast<Eigen::Index>(pick.uniform_int(static_cast<std::uint64_t>(w.size())));
            const double saved = w.data()[k];
            const double h = 1e-5;
            w.data()[k] = saved + h;
            const double up = loss(nullptr);
            w.data()[k] = saved - h;
            const double down = loss(nullptr);
            w.data()[k] = saved;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(numeric - grads[pi].data()[k]) / std::max(1e-3, std::abs(numeric)));
        }
        CAPTURE(to_string(g));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("wrapping parameters with the wrong count is rejected") {
    ModelConfig c = tiny(GatingMode::full);
    Rng rng(15);
    GatedDiT model(c, rng);
    ModelConfig other = c;
    other.gating = GatingMode::base;
    CHECK_THROWS_AS(GatedDiT(other, model.params()), std::invalid_argument);
    CHECK(GatedDiT(c, model.params()) == model);
}

TEST_CASE("shape mismatches are rejected") {
    ModelConfig c = tiny(GatingMode::full);
    Rng rng(16);
    GatedDiT model(c, rng);
    CHECK_THROWS_AS(model.predict_values(Matrix::Zero(1, 5), {1}, Matrix::Zero(1, 4)), std::invalid_argument);
    CHECK_THROWS_AS(model.predict_values(Matrix::Zero(1, 6), {1}, Matrix::Zero(2, 4)), std::invalid_argument);
    CHECK_THROWS_AS(model.predict_values(Matrix::Zero(1, 6), {1, 2}, Matrix::Zero(1, 4)), std::invalid_argument);
}

}  // TEST_SUITE
