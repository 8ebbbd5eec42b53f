#include "featrestore/probe.hpp"

#include "doctest.h"

#include <cmath>

using namespace featrestore;

namespace {

/// Class k sits at 4 * e_k in the informative modality; the other modality is noise.
ProbeInputs separable(int n, std::uint64_t seed, bool info_in_image) {
    Rng rng(seed);
    ProbeInputs in;
    in.image = rng.normal_matrix(n, 6) * 0.5;
    in.text = rng.normal_matrix(n, 4) * 0.5;
    for (int i = 0; i < n; ++i) {
        const int k = i % 3;
        in.labels.push_back(k);
        (info_in_image ? in.image : in.text)(i, k) += 4.0;
    }
    return in;
}

ProbeConfig quick() {
    ProbeConfig c;
    c.hidden = 16;
    c.heads = 2;
    c.epochs = 15;
    c.lr = 3e-3;
    c.batch_size = 32;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("a separable problem is solved through either modality") {
    for (bool image : {true, false}) {
        const ProbeModel probe = train_probe(separable(300, 1, image), 3, quick());
        const ProbeScore s = evaluate_probe(probe, separable(150, 2, image));
        CAPTURE(image);
        CHECK(s.accuracy == 1.0);
        CHECK(s.macro_f1 == 1.0);
    }
}

TEST_CASE("training is a function of the seed") {
    const ProbeInputs train = separable(120, 4, true);
    const ProbeInputs test = separable(60, 5, true);
    ProbeConfig c = quick();
    c.epochs = 2;
    const ProbeModel a = train_probe(train, 3, c);
    const ProbeModel b = train_probe(train, 3, c);
    CHECK(a.params() == b.params());
    CHECK(a.predict(test.image, test.text) == b.predict(test.image, test.text));
    c.seed = 99;
    CHECK(!(train_probe(train, 3, c).params() == a.params()));
}

TEST_CASE("probe logit gradients match finite differences") {
    ProbeConfig c = quick();
    Rng rng(6);
    ProbeModel probe(6, 4, 3, c, rng);
    for (auto& m : probe.params().values) m = 0.3 * rng.normal_matrix(m.rows(), m.cols());
    const ProbeInputs in = separable(5, 7, true);
    auto loss = [&](std::vector<Matrix>* grads) {
        ag::Tape tape;
        ag::Var l = ag::cross_entropy(probe.logits(tape, in.image, in.text, grads), in.labels);
        if (grads != nullptr) tape.backward(l);
        return l.value()(0, 0);
    };
    std::vector<Matrix> grads = probe.params().zeros_like();
    loss(&grads);
    double worst = 0.0;
    Rng pick(8);
    for (int trial = 0; trial < 80; ++trial) {
        const auto pi = static_cast<std::size_t>(pick.uniform_int(probe.params().size()));
        Matrix& w = probe.params().values[pi];
        const auto k = static_cast<Eigen::Index>(pick.uniform_int(static_cast<std::uint64_t>(w.size())));
        const double saved = w.data()[k];
        w.data()[k] = saved + 1e-5;
        const double up = loss(nullptr);
        w.data()[k] = saved - 1e-5;
        const double down = loss(nullptr);
        w.data()[k] = saved;
        const double numeric = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(numeric - grads[pi].data()[k]) / std::max(1e-3, std::abs(numeric)));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("zero fill puts the normalized-space zero vector on the missing side") {
    NormStats img{Vector::Constant(2, 1.0), Vector::Constant(2, 2.0)};
    NormStats txt{Vector::Constant(2, -1.0), Vector::Constant(2, 0.5)};
    SamplePair a;
    a.id = "a";
    a.image = Vector::Constant(2, 5.0);
    a.availability = Availability::image_only;
    a.label = 1;
    SamplePair b;
    b.id = "b";
    b.text = Vector::Constant(2, 0.0);
    b.availability = Availability::text_only;
    const ProbeInputs in = make_probe_inputs({a, b}, img, txt, FillMode::zero);
    CHECK(in.image(0, 0) == 2.0);  // (5 - 1) / 2
    CHECK(in.text.row(0).isZero(0.0));
    CHECK(in.image.row(1).isZero(0.0));
    CHECK(in.text(1, 1) == 2.0);   // (0 + 1) / 0.5
    CHECK(in.labels == std::vector<int>{1, 0});

    CHECK_THROWS_AS(make_probe_inputs({a}, img, txt, FillMode::restored), std::invalid_argument);
    SamplePair r = a;
    r.text = Vector::Zero(2);
    r.text_restored = true;
    r.availability = Availability::complete;
    CHECK_THROWS_AS(make_probe_inputs({r}, img, txt, FillMode::zero), std::invalid_argument);
    CHECK_NOTHROW(make_probe_inputs({r}, img, txt, FillMode::restored));
    CHECK(to_string(FillMode::zero) == "zero");
    CHECK(to_string(FillMode::restored) == "restored");
}

TEST_CASE("invalid probe configurations are rejected") {
    ProbeConfig c = quick();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    Rng rng(1);
    CHECK_THROWS_AS(ProbeModel(2, 2, 1, quick(), rng), std::invalid_argument);
}

}  // TEST_SUITE
