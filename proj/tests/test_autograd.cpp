#include "featrestore/autograd.hpp"
#include "featrestore/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <functional>

using namespace featrestore;

namespace {

using Build = std::function<ag::Var(ag::Tape&, const std::vector<ag::Var>&)>;

/// Max relative error between the tape gradient of a scalar function and
/// central finite differences, over every entry of every input.
double fd_error(const Build& f, std::vector<Matrix> inputs, double h = 1e-6) {
    std::vector<Matrix> grads(inputs.size());
    {
        ag::Tape tape;
        std::vector<ag::Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.parameter(inputs[i], &grads[i]));
        tape.backward(f(tape, vars));
    }
    auto eval = [&](const std::vector<Matrix>& in) {
        ag::Tape tape;
        std::vector<ag::Var> vars;
        for (const auto& m : in) vars.push_back(tape.constant(m));
        return f(tape, vars).value()(0, 0);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        REQUIRE(grads[i].rows() == inputs[i].rows());
        for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
            const double saved = inputs[i].data()[k];
            inputs[i].data()[k] = saved + h;
            const double up = eval(inputs);
            inputs[i].data()[k] = saved - h;
            const double down = eval(inputs);
            inputs[i].data()[k] = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = grads[i].data()[k];
            worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric)));
        }
    }
    return worst;
}

/// Reduces any output to a scalar with a fixed random target.
ag::Var reduce(ag::Var out, std::uint64_t seed = 99) {
    Rng rng(seed);
    return ag::sum_squared_error(out, rng.normal_matrix(out.rows(), out.cols()));
}

Matrix rand(Eigen::Index r, Eigen::Index c, std::uint64_t seed) { return Rng(seed).normal_matrix(r, c); }

constexpr double kTol = 1e-7;

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("matmul, add, sub, mul and scale gradients") {
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::matmul(v[0], v[1])); },
                   {rand(3, 4, 1), rand(4, 2, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::add(v[0], v[1])); },
                   {rand(3, 4, 1), rand(3, 4, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::sub(v[0], v[1])); },
                   {rand(3, 4, 1), rand(3, 4, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::mul(v[0], v[1])); },
                   {rand(3, 4, 1), rand(3, 4, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::scale(v[0], -1.7)); }, {rand(2, 3, 3)}) <
          kTol);
    Vector coef(3);
    coef << 0.5, -2.0, 3.0;
    CHECK(fd_error([&](ag::Tape&, const auto& v) { return reduce(ag::scale_rows(v[0], coef)); },
                   {rand(3, 2, 4)}) < kTol);
}

TEST_CASE("row broadcasting and restructuring gradients") {
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::add_row(v[0], v[1])); },
                   {rand(4, 3, 1), rand(1, 3, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::repeat_rows(v[0], 3)); }, {rand(2, 3, 3)}) <
          kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::tile(v[0], 3)); }, {rand(2, 3, 4)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::reshape(v[0], 3, 4)); }, {rand(2, 6, 5)}) <
          kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::concat_groups(v[0], 2, v[1], 1)); },
                   {rand(4, 3, 6), rand(2, 3, 7)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::take_groups(v[0], 3, 1, 2)); },
                   {rand(6, 2, 8)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::gather_rows(v[0], {2, 0, 2})); },
                   {rand(3, 2, 9)}) < kTol);
}

TEST_CASE("activation gradients") {
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::sigmoid(v[0])); }, {rand(3, 4, 1)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::silu(v[0])); }, {rand(3, 4, 2)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::gelu(v[0])); }, {rand(3, 4, 3)}) < kTol);
}

TEST_CASE("layer norm, attention and losses gradients") {
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::layer_norm(v[0], v[1], v[2])); },
                   {rand(4, 5, 1), rand(1, 5, 2), rand(1, 5, 3)}) < 1e-6);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return reduce(ag::attention(v[0], v[1], v[2], 2, 3, 2)); },
                   {rand(4, 4, 4), rand(6, 4, 5), rand(6, 6, 6)}) < kTol);
    CHECK(fd_error([](ag::Tape&, const auto& v) { return ag::cross_entropy(v[0], {0, 2, 1}); }, {rand(3, 3, 7)}) <
          kTol);
}

TEST_CASE("forward values against hand formulas") {
    ag::Tape tape;
    Matrix x(1, 3);
    x << -1.0, 0.0, 2.0;
    ag::Var a = tape.constant(x);
    const Matrix sg = ag::sigmoid(a).value();
    const Matrix ge = ag::gelu(a).value();
    const Matrix si = ag::silu(a).value();
    for (int j = 0; j < 3; ++j) {
        const double v = x(0, j);
        const double s = 1.0 / (1.0 + std::exp(-v));
        CHECK(sg(0, j) == doctest::Approx(s).epsilon(1e-14));
        CHECK(si(0, j) == doctest::Approx(v * s).epsilon(1e-14));
        const double g = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
        CHECK(ge(0, j) == doctest::Approx(g).epsilon(1e-14));
    }

    // Layer norm of (-1, 0, 2): mean 1/3, biased variance 14/9.
    const Matrix ln = ag::layer_norm(a, tape.constant(Matrix::Ones(1, 3)), tape.constant(Matrix::Zero(1, 3)), 0.0)
                          .value();
    const double sd = std::sqrt(14.0 / 9.0);
    CHECK(ln(0, 0) == doctest::Approx((-1.0 - 1.0 / 3.0) / sd).epsilon(1e-12));
    CHECK(ln(0, 2) == doctest::Approx((2.0 - 1.0 / 3.0) / sd).epsilon(1e-12));

    // Cross-entropy of logits (0, ln 3) for label 1: -log(3/4).
    Matrix lg(1, 2);
    lg << 0.0, std::log(3.0);
    CHECK(ag::cross_entropy(tape.constant(lg), {1}).value()(0, 0) == doctest::Approx(-std::log(0.75)));
}

TEST_CASE("single-head attention matches a direct softmax") {
    ag::Tape tape;
    const Matrix q = rand(1, 2, 11), k = rand(3, 2, 12), v = rand(3, 2, 13);
    const Matrix out = ag::attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, 3, 1).value();
    Vector w(3);
    for (int j = 0; j < 3; ++j) w(j) = std::exp(q.row(0).dot(k.row(j)) / std::sqrt(2.0));
    w /= w.sum();
    for (int c = 0; c < 2; ++c) {
        double expect = 0.0;
        for (int j = 0; j < 3; ++j) expect += w(j) * v(j, c);
        CHECK(out(0, c) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("attention keeps samples separate") {
    // Changing sample 1's keys must leave sample 0's output untouched.
    ag::Tape tape;
    const Matrix q = rand(2, 4, 1), v = rand(4, 4, 3);
    Matrix k = rand(4, 4, 2);
    const Matrix before = ag::attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, 2, 2).value();
    k.bottomRows(2).setRandom();
    const Matrix after = ag::attention(tape.constant(q), tape.constant(k), tape.constant(v), 1, 2, 2).value();
    CHECK(before.row(0) == after.row(0));
    CHECK(before.row(1) != after.row(1));
}

TEST_CASE("shape errors and non-scalar backward are rejected") {
    ag::Tape tape;
    ag::Var a = tape.parameter(Matrix::Ones(2, 3), nullptr);
    CHECK_THROWS_AS(ag::matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(tape.backward(a), std::invalid_argument);
}

TEST_CASE("gradients accumulate into the sink across uses") {
    Matrix sink;
    ag::Tape tape;
    ag::Var a = tape.parameter(Matrix::Constant(1, 1, 3.0), &sink);
    // (a + a)^2 summed: d/da = 2 * 2 * (2a) = 24 at a = 3.
    tape.backward(ag::sum_squared_error(ag::add(a, a), Matrix::Zero(1, 1)));
    CHECK(sink(0, 0) == doctest::Approx(24.0));
}

}  // TEST_SUITE
