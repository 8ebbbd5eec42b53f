#include "featrestore/data.hpp"
#include "featrestore/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <set>

using namespace featrestore;

namespace {

std::vector<SamplePair> complete_samples(int n, int d = 3) {
    std::vector<SamplePair> out;
    for (int i = 0; i < n; ++i) {
        SamplePair s;
        s.id = "p" + std::to_string(i);
        s.image = Vector::Constant(d, i);
        s.text = Vector::Constant(d, -i);
        s.label = i % 2;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("missing pattern counts follow integer floor arithmetic") {
    for (int n : {10, 100, 1000}) {
        for (int eta : {0, 30, 50, 70, 100}) {
            const auto base = complete_samples(n);
            const std::size_t single = static_cast<std::size_t>(eta * n / 100);
            const std::size_t half = static_cast<std::size_t>(eta * n / 200);
            const auto ci = count_availability(apply_missing_pattern(base, eta, MissingMode::missing_image, 1));
            CHECK(ci.text_only == single);
            CHECK(ci.image_only == 0);
            CHECK(ci.complete == n - single);
            const auto ct = count_availability(apply_missing_pattern(base, eta, MissingMode::missing_text, 1));
            CHECK(ct.image_only == single);
            CHECK(ct.text_only == 0);
            const auto cb = count_availability(apply_missing_pattern(base, eta, MissingMode::missing_both, 1));
            CHECK(cb.image_only == half);
            CHECK(cb.text_only == half);
            CHECK(cb.complete == n - 2 * half);
        }
    }
}

TEST_CASE("documented pattern examples") {
    const auto b = count_availability(apply_missing_pattern(complete_samples(1000), 70, MissingMode::missing_both, 3));
    CHECK(b.image_only == 350);
    CHECK(b.text_only == 350);
    CHECK(b.complete == 300);
    const auto t = count_availability(apply_missing_pattern(complete_samples(10), 70, MissingMode::missing_text, 3));
    CHECK(t.image_only == 7);
    const auto z = count_availability(apply_missing_pattern(complete_samples(10), 0, MissingMode::missing_both, 3));
    CHECK(z.complete == 10);
}

TEST_CASE("pattern drops features, is seeded and disjoint") {
    const auto base = complete_samples(200);
    const auto a = apply_missing_pattern(base, 50, MissingMode::missing_both, 11);
    const auto b = apply_missing_pattern(base, 50, MissingMode::missing_both, 11);
    const auto c = apply_missing_pattern(base, 50, MissingMode::missing_both, 12);
    CHECK(a == b);
    CHECK(a != c);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i].validate();
        CHECK(a[i].id == base[i].id);
        if (a[i].image) CHECK(*a[i].image == *base[i].image);
        if (a[i].text) CHECK(*a[i].text == *base[i].text);
    }
    CHECK_THROWS(apply_missing_pattern(base, 101, MissingMode::missing_both, 1));
    CHECK_THROWS(apply_missing_pattern(a, 10, MissingMode::missing_both, 1));
}

TEST_CASE("population statistics of hand-listed scalars") {
    Matrix rows(3, 1);
    rows << 1, 2, 3;
    const NormStats st = fit_norm_stats(rows);
    CHECK(st.mean(0) == doctest::Approx(2.0));
    CHECK(st.std(0) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("constant dimension is floored") {
    Matrix rows(4, 2);
    rows << 1, 5, 2, 5, 3, 5, 4, 5;
    const NormStats st = fit_norm_stats(rows);
    CHECK(st.std(1) == kStdFloor);
    Vector x(2);
    x << 2.5, 5.0;
    CHECK(normalize(x, st)(1) == 0.0);
}

TEST_CASE("normalization round trip and moments") {
    Rng rng(4);
    Matrix rows = rng.normal_matrix(500, 6) * 3.0;
    rows.array() += 7.0;
    const NormStats st = fit_norm_stats(rows);
    const Matrix z = normalize_rows(rows, st);
    for (Eigen::Index j = 0; j < 6; ++j) {
        CHECK(std::abs(z.col(j).mean()) < 1e-8);
        CHECK(std::abs(std::sqrt(z.col(j).array().square().mean()) - 1.0) < 1e-6);
    }
    const Matrix back = denormalize_rows(z, st);
    CHECK((back - rows).norm() / rows.norm() < 1e-10);
    const Vector v = rows.row(3).transpose();
    CHECK((denormalize(normalize(v, st), st) - v).norm() / v.norm() < 1e-10);
    CHECK_THROWS(fit_norm_stats(rng.normal_matrix(1, 3)));
}

TEST_CASE("identity coupling without noise copies text to image") {
    SyntheticSpec spec;
    spec.n_samples = 50;
    spec.d_feature = 8;
    spec.coupling.identity = true;
    spec.coupling.noise_std = 0.0;
    const SyntheticData d = generate_synthetic(spec);
    for (const auto* split : {&d.train, &d.test})
        for (const auto& s : split->samples) CHECK(*s.image == *s.text);
    CHECK(d.train.size() == 40);
    CHECK(d.test.size() == 10);
}

TEST_CASE("synthetic generation is deterministic and follows the coupling") {
    SyntheticSpec spec;
    spec.n_samples = 100;
    spec.d_feature = 6;
    spec.coupling.noise_std = 0.0;
    spec.seed = 5;
    const SyntheticData a = generate_synthetic(spec);
    const SyntheticData b = generate_synthetic(spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    // R is orthogonal and image = phi(R text + offset).
    CHECK((a.rotation.transpose() * a.rotation - Matrix::Identity(6, 6)).norm() < 1e-12);
    const SamplePair& s = a.train.samples[7];
    const Vector u = a.rotation * *s.text + a.offsets.row(s.label).transpose();
    for (Eigen::Index j = 0; j < 6; ++j) {
        CHECK((*s.image)(j) == doctest::Approx(u(j) + spec.coupling.nonlinearity * std::sin(u(j))).epsilon(1e-12));
    }
    std::set<int> labels;
    for (const auto& p : a.train.samples) labels.insert(p.label);
    CHECK(labels.size() == 5);
    SyntheticSpec bad = spec;
    bad.n_clusters = 1;
    CHECK_THROWS(generate_synthetic(bad));
}

TEST_CASE("availability validation and string forms") {
    SamplePair s;
    s.image = Vector::Zero(2);
    s.availability = Availability::complete;
    CHECK_THROWS(s.validate());
    s.availability = Availability::image_only;
    CHECK_NOTHROW(s.validate());
    for (auto a : {Availability::complete, Availability::image_only, Availability::text_only})
        CHECK(availability_from_string(to_string(a)) == a);
    for (auto m : {MissingMode::missing_image, MissingMode::missing_text, MissingMode::missing_both})
        CHECK(missing_mode_from_string(to_string(m)) == m);
    CHECK(missing_mode_from_string("both") == MissingMode::missing_both);
    CHECK_THROWS(missing_mode_from_string("neither"));
}

}  // TEST_SUITE
