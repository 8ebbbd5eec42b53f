#include "featrestore/evaluation.hpp"

#include "featrestore/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace featrestore {

GateSummary summarize_gates(const Matrix& activations) {
    GateSummary s;
    s.count = static_cast<std::size_t>(activations.size());
    if (s.count == 0) return s;
    s.channel_mean = activations.colwise().mean().transpose();
    s.mean = activations.mean();
    s.min = activations.minCoeff();
    s.max = activations.maxCoeff();
    std::size_t low = 0;
    for (Eigen::Index r = 0; r < activations.rows(); ++r) {
        for (Eigen::Index c = 0; c < activations.cols(); ++c) {
            const double v = activations(r, c);
            if (!(v > 0.0 && v < 1.0)) s.in_open_unit_interval = false;
            if (v >= 0.0 && v <= 0.2) ++low;
            int bin = static_cast<int>(std::floor(v * kGateBins));
            bin = std::clamp(bin, 0, kGateBins - 1);
            ++s.histogram[static_cast<std::size_t>(bin)];
        }
    }
    s.fraction_low = static_cast<double>(low) / static_cast<double>(s.count);
    return s;
}

GateStats gate_statistics(const GatedDiT& model, const Matrix& cond, const std::vector<int>& timesteps) {
    if (model.config().gating != GatingMode::full) {
        throw std::invalid_argument("gate statistics need a model with full gating");
    }
    if (cond.rows() == 0 || timesteps.empty()) {
        throw std::invalid_argument("gate statistics need a non-empty probe batch");
    }
    const int depth = model.config().depth;
    std::vector<Matrix> attn(static_cast<std::size_t>(depth));
    std::vector<Matrix> mlp(static_cast<std::size_t>(depth));
    for (int t : timesteps) {
        GateCapture cap;
        Matrix x = Matrix::Zero(cond.rows(), model.feature_dim());
        model.predict_values(x, std::vector<int>(static_cast<std::size_t>(cond.rows()), t), cond, &cap);
        for (int l = 0; l < depth; ++l) {
            auto append = [](Matrix& acc, const Matrix& m) {
                Matrix next(acc.rows() + m.rows(), m.cols());
                if (acc.rows() > 0) next.topRows(acc.rows()) = acc;
                next.bottomRows(m.rows()) = m;
                acc = std::move(next);
            };
            append(attn[static_cast<std::size_t>(l)], cap.attn[static_cast<std::size_t>(l)]);
            append(mlp[static_cast<std::size_t>(l)], cap.mlp[static_cast<std::size_t>(l)]);
        }
    }
    GateStats stats;
    double sum = 0.0, low = 0.0, count = 0.0;
    for (int l = 0; l < depth; ++l) {
        BlockGateStats b{summarize_gates(attn[static_cast<std::size_t>(l)]),
                         summarize_gates(mlp[static_cast<std::size_t>(l)])};
        for (const GateSummary* g : {&b.attn, &b.mlp}) {
            sum += g->mean * static_cast<double>(g->count);
            low += g->fraction_low * static_cast<double>(g->count);
            count += static_cast<double>(g->count);
            stats.all_in_open_unit_interval = stats.all_in_open_unit_interval && g->in_open_unit_interval;
        }
        stats.blocks.push_back(std::move(b));
    }
    stats.overall_mean = sum / count;
    stats.overall_fraction_low = low / count;
    return stats;
}

bool CellKey::operator<(const CellKey& o) const {
    return std::make_tuple(eta, static_cast<int>(mode), seed) < std::make_tuple(o.eta, static_cast<int>(o.mode), o.seed);
}

std::uint64_t restoration_seed(std::uint64_t cell_seed) { return derive_seed(cell_seed, "restore"); }

BenchmarkRestorations restore_benchmark(const Checkpoint& ck, const Benchmark& data, std::uint64_t seed,
                                        int ddim_steps) {
    const Restorer r = Restorer::from_checkpoint(ck, ddim_steps);
    BenchmarkRestorations out;
    out.seed = seed;
    out.train = restore_all(data.train.samples, r, seed);
    out.test = restore_all(data.test.samples, r, seed);
    return out;
}

std::vector<SamplePair> complete_from_cache(const std::vector<SamplePair>& samples, const RestorationCache& cache) {
    if (cache.image.rows() != static_cast<Eigen::Index>(samples.size()) ||
        cache.text.rows() != static_cast<Eigen::Index>(samples.size())) {
        throw std::invalid_argument("restoration cache does not match the sample list");
    }
    std::vector<SamplePair> out = samples;
    for (std::size_t i = 0; i < out.size(); ++i) {
        SamplePair& s = out[i];
        const auto r = static_cast<Eigen::Index>(i);
        if (s.availability == Availability::text_only) {
            s.image = cache.image.row(r).transpose();
            s.image_restored = true;
        } else if (s.availability == Availability::image_only) {
            s.text = cache.text.row(r).transpose();
            s.text_restored = true;
        }
        s.availability = Availability::complete;
    }
    return out;
}

CellResult evaluate_cell(const Checkpoint& ck, const Benchmark& data, const CellKey& key, const EvalOptions& opts,
                         const BenchmarkRestorations* restorations) {
    const auto start = std::chrono::steady_clock::now();
    BenchmarkRestorations local;
    const std::uint64_t rseed = restoration_seed(key.seed);
    if (restorations == nullptr) {
        local = restore_benchmark(ck, data, rseed, opts.ddim_steps);
        restorations = &local;
    } else if (restorations->seed != rseed) {
        throw std::invalid_argument("restorations were computed for a different cell seed");
    }
    const auto train = apply_missing_pattern(data.train.samples, key.eta, key.mode, derive_seed(key.seed, "pattern.train"));
    const auto test = apply_missing_pattern(data.test.samples, key.eta, key.mode, derive_seed(key.seed, "pattern.test"));

    ProbeConfig pc = opts.probe;
    pc.seed = derive_seed(key.seed, "probe");
    const int n_classes = data.train.n_classes;
    CellResult res;
    res.key = key;
    res.test_counts = count_availability(test);
    {
        ProbeModel probe = train_probe(make_probe_inputs(train, ck.image_norm, ck.text_norm, FillMode::zero), n_classes, pc);
        res.zero_fill = evaluate_probe(probe, make_probe_inputs(test, ck.image_norm, ck.text_norm, FillMode::zero));
    }
    {
        const auto train_c = complete_from_cache(train, restorations->train);
        const auto test_c = complete_from_cache(test, restorations->test);
        ProbeModel probe =
            train_probe(make_probe_inputs(train_c, ck.image_norm, ck.text_norm, FillMode::restored), n_classes, pc);
        res.restored = evaluate_probe(probe, make_probe_inputs(test_c, ck.image_norm, ck.text_norm, FillMode::restored));
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

AlignmentScore restoration_alignment(const Checkpoint& ck, const std::vector<SamplePair>& truth,
                                     const RestorationCache& cache) {
    if (truth.empty()) throw std::invalid_argument("restoration_alignment: no samples");
    AlignmentScore a;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a.t2i += cosine_alignment(normalize(cache.image.row(r).transpose(), ck.image_norm),
                                  normalize(*truth[i].image, ck.image_norm));
        a.i2t += cosine_alignment(normalize(cache.text.row(r).transpose(), ck.text_norm),
                                  normalize(*truth[i].text, ck.text_norm));
    }
    a.i2t /= static_cast<double>(truth.size());
    a.t2i /= static_cast<double>(truth.size());
    return a;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

SweepReport robustness_sweep(const Checkpoint& ck, const Benchmark& data, const std::vector<double>& etas,
                             const std::vector<MissingMode>& modes, const std::vector<std::uint64_t>& seeds,
                             const EvalOptions& opts) {
    if (etas.empty() || modes.empty() || seeds.empty()) {
        throw std::invalid_argument("robustness_sweep: empty eta, mode or seed list");
    }
    std::vector<BenchmarkRestorations> rest(seeds.size());
    parallel_for(seeds.size(), opts.jobs, [&](std::size_t i) {
        rest[i] = restore_benchmark(ck, data, restoration_seed(seeds[i]), opts.ddim_steps);
    });
    std::vector<std::pair<CellKey, std::size_t>> keys;
    for (double eta : etas)
        for (MissingMode m : modes)
            for (std::size_t s = 0; s < seeds.size(); ++s) keys.push_back({CellKey{eta, m, seeds[s]}, s});
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    SweepReport report;
    report.cells.resize(keys.size());
    parallel_for(keys.size(), opts.jobs, [&](std::size_t i) {
        report.cells[i] = evaluate_cell(ck, data, keys[i].first, opts, &rest[keys[i].second]);
    });
    report.alignment = restoration_alignment(ck, data.test.samples, rest.front().test);
    return report;
}

double mean_accuracy(const std::vector<CellResult>& cells, double eta, MissingMode mode, FillMode fill) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : cells) {
        if (c.key.eta == eta && c.key.mode == mode) {
            sum += fill == FillMode::zero ? c.zero_fill.accuracy : c.restored.accuracy;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("mean_accuracy: no matching cells");
    return sum / n;
}

std::vector<AblationVariant> default_ablation_variants(bool include_mutual_base) {
    std::vector<AblationVariant> v = {
        {"Ours", GatingMode::full, true},    {"Gating", GatingMode::full, false},
        {"AdaLN", GatingMode::adaln, false}, {"Concat", GatingMode::concat, false},
        {"Base", GatingMode::base, false},
    };
    if (include_mutual_base) v.push_back({"Mutual", GatingMode::base, true});
    return v;
}

double AblationReport::mean_accuracy(const std::string& variant) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.variant.name == variant) {
            sum += r.cell.restored.accuracy;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("no ablation rows for variant '" + variant + "'");
    return sum / n;
}

AblationReport ablation_matrix(const Benchmark& data, const TrainConfig& base,
                               const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                               double eta, MissingMode mode, const EvalOptions& opts) {
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({v, s});
    AblationReport report;
    report.rows.resize(jobs.size());
    parallel_for(jobs.size(), opts.jobs, [&](std::size_t i) {
        const AblationVariant& var = variants[jobs[i].first];
        const std::uint64_t seed = seeds[jobs[i].second];
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.model.gating = var.gating;
        cfg.mutual_enabled = var.mutual;
        const auto t0 = std::chrono::steady_clock::now();
        Checkpoint ck = train(data.train, cfg);
        AblationRow row;
        row.variant = var;
        row.seed = seed;
        row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const BenchmarkRestorations rest = restore_benchmark(ck, data, restoration_seed(seed), opts.ddim_steps);
        EvalOptions single = opts;
        single.jobs = 1;
        row.cell = evaluate_cell(ck, data, CellKey{eta, mode, seed}, single, &rest);
        row.alignment = restoration_alignment(ck, data.test.samples, rest.test);
        report.rows[i] = std::move(row);
        log_info("ablation " + var.name + " seed " + std::to_string(seed) + ": acc " +
                 std::to_string(report.rows[i].cell.restored.accuracy));
    });
    return report;
}

TrajectoryReport trajectory_diagnostic(const Checkpoint& ck, const std::vector<SamplePair>& samples,
                                       Direction direction, std::uint64_t seed, int ddim_steps,
                                       const std::vector<int>& plot_steps) {
    if (samples.size() < 2) throw std::invalid_argument("trajectory diagnostic needs at least two samples");
    const Restorer r = Restorer::from_checkpoint(ck, ddim_steps);
    const bool i2t = direction == Direction::I2T;
    const NoisePredictor& model = r.model(direction);
    const Matrix cond = normalize_rows(stack(samples, i2t ? Modality::image : Modality::text),
                                       i2t ? ck.image_norm : ck.text_norm);
    const Matrix truth = normalize_rows(stack(samples, i2t ? Modality::text : Modality::image),
                                        i2t ? ck.text_norm : ck.image_norm);
    Matrix x_T(cond.rows(), model.feature_dim());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        x_T.row(static_cast<Eigen::Index>(i)) = initial_noise(seed, samples[i].id, direction, model.feature_dim()).transpose();
    }
    const std::set<int> all(r.plan.steps.begin(), r.plan.steps.end());
    for (int s : plot_steps) {
        if (s != kFinalStep && all.count(s) == 0) {
            throw std::invalid_argument("plot step " + std::to_string(s) + " is not in the DDIM plan");
        }
    }
    const std::vector<Matrix> snaps = record_trajectory_batch(cond, model, r.plan, *r.schedule, x_T, all);

    TrajectoryReport rep;
    rep.direction = direction;
    rep.steps.assign(r.plan.steps.rbegin(), r.plan.steps.rend());
    rep.steps.push_back(kFinalStep);
    std::size_t monotone = 0;
    for (Eigen::Index i = 0; i < cond.rows(); ++i) {
        std::vector<double> d;
        for (const auto& m : snaps) d.push_back((m.row(i) - truth.row(i)).norm());
        bool ok = true;
        for (std::size_t k = 1; k < d.size(); ++k) ok = ok && d[k] <= d[k - 1];
        monotone += ok ? 1 : 0;
        rep.distance.push_back(std::move(d));
    }
    rep.monotone_fraction = static_cast<double>(monotone) / static_cast<double>(cond.rows());
    rep.pca = fit_pca(truth, 2);
    rep.projected_truth = rep.pca.project(truth);
    for (int s : plot_steps) {
        const auto it = std::find(rep.steps.begin(), rep.steps.end(), s);
        rep.projected.push_back(rep.pca.project(snaps[static_cast<std::size_t>(it - rep.steps.begin())]));
        rep.projected_steps.push_back(s);
    }
    return rep;
}

SyntheticSpec desk_benchmark_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    return spec;
}

TrainConfig desk_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.lr = 3e-3;
    cfg.lr_decay = 0.1;
    cfg.lr_decay_at = 0.8;
    cfg.epochs = 150;
    cfg.model.d_model = 32;
    cfg.model.gate_hidden = 32;
    return cfg;
}

std::string config_hash(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, text)));
    return buf;
}

}  // namespace featrestore
