#include "featrestore/evaluation.hpp"
#include "featrestore/report.hpp"

#include "doctest.h"

#include <cmath>
#include <numeric>

using namespace featrestore;

namespace {

Benchmark tiny_benchmark() {
    SyntheticSpec spec;
    spec.n_clusters = 3;
    spec.d_feature = 8;
    spec.n_samples = 150;
    spec.seed = 21;
    SyntheticData d = generate_synthetic(spec);
    return {d.train, d.test};
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 32;
    c.lr = 1e-3;
    c.model.d_model = 8;
    c.model.depth = 2;
    c.model.n_heads = 2;
    c.model.n_tokens = 2;
    c.model.cond_tokens = 2;
    c.model.gate_hidden = 8;
    c.model.ffn_mult = 2;
    return c;
}

EvalOptions tiny_options() {
    EvalOptions o;
    o.ddim_steps = 5;
    o.probe.hidden = 8;
    o.probe.heads = 2;
    o.probe.epochs = 2;
    return o;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("gate summaries match hand counts") {
    Matrix a(2, 2);
    a << 0.1, 0.15, 0.5, 0.95;
    const GateSummary s = summarize_gates(a);
    CHECK(s.count == 4);
    CHECK(s.mean == doctest::Approx(0.425));
    CHECK(s.min == 0.1);
    CHECK(s.max == 0.95);
    CHECK(s.fraction_low == 0.5);
    CHECK(s.channel_mean(0) == doctest::Approx(0.3));
    CHECK(s.channel_mean(1) == doctest::Approx(0.55));
    CHECK(s.histogram[1] == 2);
    CHECK(s.histogram[5] == 1);
    CHECK(s.histogram[9] == 1);
    CHECK(s.in_open_unit_interval);
    Matrix edge(1, 2);
    edge << 0.0, 1.0;
    const GateSummary e = summarize_gates(edge);
    CHECK(!e.in_open_unit_interval);
    CHECK(e.histogram[0] == 1);
    CHECK(e.histogram[9] == 1);
}

TEST_CASE("zero-initialized gates report exactly one half, deterministically") {
    const Benchmark data = tiny_benchmark();
    const Checkpoint ck = init_training(data.train, tiny_config());
    Rng rng(3);
    const Matrix cond = rng.normal_matrix(7, 8);
    const std::vector<int> ts = {999, 499, 49};
    const GateStats g = gate_statistics(ck.state.i2t, cond, ts);
    REQUIRE(g.blocks.size() == 2);
    CHECK(g.overall_mean == 0.5);
    CHECK(g.overall_fraction_low == 0.0);
    CHECK(g.all_in_open_unit_interval);
    for (const auto& b : g.blocks) {
        for (const GateSummary* s : {&b.attn, &b.mlp}) {
            CHECK(s->mean == 0.5);
            CHECK(s->count == 7 * 3 * 8);
            CHECK(std::accumulate(s->histogram.begin(), s->histogram.end(), std::size_t{0}) == s->count);
            CHECK(s->histogram[5] == s->count);
        }
    }
    CHECK(to_json(gate_statistics(ck.state.i2t, cond, ts)).dump() == to_json(g).dump());

    TrainConfig base = tiny_config();
    base.model.gating = GatingMode::base;
    const Checkpoint plain = init_training(data.train, base);
    CHECK_THROWS_AS(gate_statistics(plain.state.i2t, cond, ts), std::invalid_argument);
}

TEST_CASE("cells are reproducible and leave the checkpoint untouched") {
    const Benchmark data = tiny_benchmark();
    const Checkpoint ck = train(data.train, tiny_config());
    const auto before = encode_checkpoint(ck);
    const CellKey key{70.0, MissingMode::missing_both, 4};
    const CellResult a = evaluate_cell(ck, data, key, tiny_options());
    const CellResult b = evaluate_cell(ck, data, key, tiny_options());
    CHECK(a.zero_fill.accuracy == b.zero_fill.accuracy);
    CHECK(a.restored.accuracy == b.restored.accuracy);
    CHECK(a.restored.macro_f1 == b.restored.macro_f1);
    CHECK(encode_checkpoint(ck) == before);
    const PatternCounts expect = expected_pattern_counts(data.test.size(), 70.0, MissingMode::missing_both);
    CHECK(a.test_counts.complete == expect.complete);
    CHECK(a.test_counts.image_only == expect.image_only);
    CHECK(a.test_counts.text_only == expect.text_only);

    const BenchmarkRestorations wrong = restore_benchmark(ck, data, restoration_seed(5), 5);
    CHECK_THROWS_AS(evaluate_cell(ck, data, key, tiny_options(), &wrong), std::invalid_argument);
}

TEST_CASE("cache completion fills only the missing side") {
    const Benchmark data = tiny_benchmark();
    const Checkpoint ck = init_training(data.train, tiny_config());
    const BenchmarkRestorations rest = restore_benchmark(ck, data, 9, 3);
    const auto pattern = apply_missing_pattern(data.test.samples, 50.0, MissingMode::missing_both, 1);
    const auto done = complete_from_cache(pattern, rest.test);
    for (std::size_t i = 0; i < done.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        CHECK(done[i].availability == Availability::complete);
        if (pattern[i].availability == Availability::image_only) {
            CHECK(*done[i].text == Vector(rest.test.text.row(r).transpose()));
            CHECK(*done[i].image == *pattern[i].image);
        } else if (pattern[i].availability == Availability::text_only) {
            CHECK(*done[i].image == Vector(rest.test.image.row(r).transpose()));
        } else {
            CHECK(done[i] == pattern[i]);
        }
    }
    CHECK_THROWS_AS(complete_from_cache(data.train.samples, rest.test), std::invalid_argument);
}

TEST_CASE("sweeps cover every cell in key order and do not depend on threads") {
    const Benchmark data = tiny_benchmark();
    const Checkpoint ck = train(data.train, tiny_config());
    EvalOptions o = tiny_options();
    const std::vector<double> etas = {10, 90};
    const std::vector<MissingMode> modes = {MissingMode::missing_text, MissingMode::missing_both};
    const std::vector<std::uint64_t> seeds = {1, 2};
    const SweepReport one = robustness_sweep(ck, data, etas, modes, seeds, o);
    o.jobs = 3;
    const SweepReport many = robustness_sweep(ck, data, etas, modes, seeds, o);
    REQUIRE(one.cells.size() == 8);
    for (std::size_t i = 0; i < one.cells.size(); ++i) {
        CHECK(one.cells[i].key == many.cells[i].key);
        CHECK(one.cells[i].restored.accuracy == many.cells[i].restored.accuracy);
        CHECK(one.cells[i].zero_fill.accuracy == many.cells[i].zero_fill.accuracy);
        if (i > 0) CHECK(one.cells[i - 1].key < one.cells[i].key);
    }
    const double expect =
        0.5 * (one.cells[2].restored.accuracy + one.cells[3].restored.accuracy);
    CHECK(mean_accuracy(one.cells, 10, MissingMode::missing_both, FillMode::restored) == expect);
    CHECK_THROWS_AS(mean_accuracy(one.cells, 30, MissingMode::missing_both, FillMode::zero), std::invalid_argument);
    CHECK(sweep_csv(one).find("eta,mode,fill") == 0);
}

TEST_CASE("ablation variants and rows") {
    const auto v = default_ablation_variants();
    REQUIRE(v.size() == 5);
    CHECK(v[0].name == "Ours");
    CHECK(v[0].mutual);
    CHECK(v[0].gating == GatingMode::full);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(!v[i].mutual);
    CHECK(default_ablation_variants(true).back().name == "Mutual");

    const Benchmark data = tiny_benchmark();
    TrainConfig base = tiny_config();
    base.epochs = 1;
    const std::vector<AblationVariant> two = {v[0], v[4]};
    const AblationReport rep = ablation_matrix(data, base, two, {1, 2}, 70.0, MissingMode::missing_both, tiny_options());
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.rows[0].variant.name == "Ours");
    CHECK(rep.rows[3].variant.name == "Base");
    CHECK(rep.mean_accuracy("Base") ==
          doctest::Approx(0.5 * (rep.rows[2].cell.restored.accuracy + rep.rows[3].cell.restored.accuracy)));
    CHECK_THROWS_AS(rep.mean_accuracy("AdaLN"), std::invalid_argument);
}

TEST_CASE("trajectory diagnostic shapes") {
    const Benchmark data = tiny_benchmark();
    const Checkpoint ck = train(data.train, tiny_config());
    std::vector<SamplePair> some(data.test.samples.begin(), data.test.samples.begin() + 6);
    const TrajectoryReport t = trajectory_diagnostic(ck, some, Direction::T2I, 3, 10, {999, 499, kFinalStep});
    REQUIRE(t.steps.size() == 11);
    CHECK(t.steps.front() == 999);
    CHECK(t.steps.back() == kFinalStep);
    REQUIRE(t.distance.size() == 6);
    CHECK(t.distance[0].size() == 11);
    REQUIRE(t.projected.size() == 3);
    CHECK(t.projected[0].rows() == 6);
    CHECK(t.projected[0].cols() == 2);
    CHECK(t.projected_truth.rows() == 6);
    CHECK(t.monotone_fraction >= 0.0);
    CHECK(t.monotone_fraction <= 1.0);
    CHECK_THROWS_AS(trajectory_diagnostic(ck, some, Direction::T2I, 3, 10, {500}), std::invalid_argument);
}

TEST_CASE("desk presets and config hashes") {
    const SyntheticSpec spec = desk_benchmark_spec(0);
    CHECK(spec.n_clusters == 5);
    CHECK(spec.d_feature == 64);
    CHECK(std::lround(spec.n_samples * spec.train_fraction) == 2000);
    CHECK(spec.n_samples == 2500);
    const TrainConfig cfg = desk_train_config(7);
    CHECK(cfg.seed == 7);
    CHECK_NOTHROW(cfg.validate());
    const std::string h = config_hash("{\"a\":1}");
    CHECK(h.size() == 16);
    CHECK(h == config_hash("{\"a\":1}"));
    CHECK(h != config_hash("{\"a\":2}"));
}

}  // TEST_SUITE
