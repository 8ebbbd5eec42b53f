#include "featrestore/evaluation.hpp"
#include "featrestore/femb.hpp"
#include "featrestore/log.hpp"
#include "featrestore/report.hpp"
#include "featrestore/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace featrestore;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// --seed, then the config file, then FEATRESTORE_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& file) {
    if (flag) return *flag;
    if (file) return *file;
    if (const char* env = std::getenv("FEATRESTORE_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("FEATRESTORE_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 0;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    log_info("wrote " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// A directory holding train.femb / test.femb, or a single FEMB file.
Dataset load_split(const fs::path& data, const std::string& split) {
    if (fs::is_directory(data)) return read_embeddings((data / (split + ".femb")).string());
    if (!fs::exists(data)) throw UsageError("data path does not exist: " + data.string());
    return read_embeddings(data.string());
}

Benchmark load_benchmark(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("--data must be a directory with train.femb and test.femb");
    return Benchmark{load_split(dir, "train"), load_split(dir, "test")};
}

MissingMode parse_mode(const std::string& s) {
    try {
        return missing_mode_from_string(s);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::vector<MissingMode> parse_modes(const std::vector<std::string>& names) {
    std::vector<MissingMode> out;
    for (const auto& n : names) out.push_back(parse_mode(n));
    return out;
}

Direction parse_direction(const std::string& s) {
    if (s == "i2t" || s == "I2T") return Direction::I2T;
    if (s == "t2i" || s == "T2I") return Direction::T2I;
    throw UsageError("direction must be i2t or t2i");
}

// ---- gen-data ------------------------------------------------------------------

struct GenArgs {
    SyntheticSpec spec;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_gen_data(GenArgs& a) {
    const auto t0 = Clock::now();
    a.spec.seed = resolve_seed(a.seed, std::nullopt);
    const SyntheticData d = generate_synthetic(a.spec);
    const fs::path out(a.out);
    fs::create_directories(out);
    write_embeddings(d.train, (out / "train.femb").string());
    write_embeddings(d.test, (out / "test.femb").string());
    const SyntheticSpec& s = a.spec;
    json cfg = {{"clusters", s.n_clusters},      {"dim", s.d_feature},
                {"n", s.n_samples},              {"center_std", s.center_std},
                {"within_std", s.within_std},    {"train_fraction", s.train_fraction},
                {"identity", s.coupling.identity}, {"offset_scale", s.coupling.offset_scale},
                {"nonlinearity", s.coupling.nonlinearity}, {"noise_std", s.coupling.noise_std}};
    json res = {{"train", d.train.size()}, {"test", d.test.size()}};
    write_text(out / "gen-data.json", make_report("gen-data", cfg, s.seed, seconds_since(t0), res).dump(2));
    return 0;
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mutual;
    std::optional<std::string> gating;
    std::optional<int> depth;
    std::optional<int> d_model;
    std::optional<int> tau;
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<double> lr_decay;
    std::optional<double> lr_decay_at;
    std::optional<int> batch_size;
};

TrainConfig resolve_train_config(const TrainArgs& a) {
    TrainConfig cfg;
    std::optional<std::uint64_t> file_seed;
    if (!a.config.empty()) {
        const std::string text = read_text(a.config);
        try {
            cfg = train_config_from_json(text);
            if (json::parse(text).contains("seed")) file_seed = cfg.seed;
        } catch (const json::exception& e) {
            throw UsageError("invalid config file " + a.config + ": " + e.what());
        }
    }
    cfg.seed = resolve_seed(a.seed, file_seed);
    if (a.mutual) cfg.mutual_enabled = *a.mutual == "on";
    if (a.gating) {
        try {
            cfg.model.gating = gating_from_string(*a.gating);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (a.depth) cfg.model.depth = *a.depth;
    if (a.d_model) cfg.model.d_model = *a.d_model;
    if (a.tau) cfg.tau = *a.tau;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.lr) cfg.lr = *a.lr;
    if (a.lr_decay) cfg.lr_decay = *a.lr_decay;
    if (a.lr_decay_at) cfg.lr_decay_at = *a.lr_decay_at;
    if (a.batch_size) cfg.batch_size = *a.batch_size;
    try {
        cfg.validate();
        cfg.model.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

int cmd_train(const TrainArgs& a) {
    const auto t0 = Clock::now();
    TrainConfig cfg = resolve_train_config(a);
    log_info("resolved config:\n" + train_config_to_json(cfg));
    const Dataset data = load_split(a.data, "train");
    std::vector<LossReport> losses;
    const Checkpoint ck = train(data, cfg, &losses, [](const LossReport& r) {
        if (r.step % 100 == 0) {
            log_info("step " + std::to_string(r.step) + " loss " + std::to_string(r.loss.total));
        }
    });
    save_checkpoint(ck, a.out);
    log_info("wrote " + a.out);
    json steps = json::array();
    for (const auto& r : losses) {
        steps.push_back({{"step", r.step},
                         {"total", r.loss.total},
                         {"base_i2t", r.loss.base_i2t},
                         {"base_t2i", r.loss.base_t2i},
                         {"mutual", r.loss.mutual},
                         {"mutual_pairs", r.loss.mutual_count}});
    }
    const json res = {{"checkpoint", a.out}, {"train_pairs", data.size()}, {"loss", steps}};
    write_text(a.out + ".report.json",
               make_report("train", json::parse(train_config_to_json(ck.config)), ck.config.seed, seconds_since(t0), res)
                   .dump(2));
    return 0;
}

// ---- restore ---------------------------------------------------------------------

struct RestoreArgs {
    std::string checkpoint;
    std::string data;
    double eta = 0.0;
    std::string mode = "both";
    int steps = 50;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_restore(const RestoreArgs& a) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    const MissingMode mode = parse_mode(a.mode);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    Dataset data = load_split(a.data, "test");
    if (a.eta > 0.0) {
        data.samples = apply_missing_pattern(std::move(data.samples), a.eta, mode, derive_seed(seed, "pattern"));
    }
    const Restorer r = Restorer::from_checkpoint(ck, a.steps);
    CompletionStats stats;
    data.samples = complete_dataset(data.samples, r, restoration_seed(seed), &stats);
    write_embeddings(data, a.out);
    const json cfg = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"eta", a.eta},
                      {"mode", to_string(mode)},    {"steps", a.steps}};
    const json res = {{"restored_image", stats.restored_image},
                      {"restored_text", stats.restored_text},
                      {"passed_through", stats.passed_through}};
    write_text(a.out + ".report.json", make_report("restore", cfg, seed, seconds_since(t0), res).dump(2));
    return 0;
}

// ---- eval / sweep ----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    double eta = 70.0;
    std::vector<double> etas = {10, 30, 50, 70, 90};
    std::string mode = "both";
    std::vector<std::string> modes = {"both"};
    std::vector<std::uint64_t> seeds;
    std::optional<std::uint64_t> seed;
    int steps = 50;
    int jobs = 1;
    ProbeConfig probe;
    std::string out;
};

json eval_config(const EvalArgs& a) {
    return {{"checkpoint", a.checkpoint}, {"data", a.data}, {"steps", a.steps}, {"probe", to_json(a.probe)}};
}

int cmd_eval(const EvalArgs& a) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Benchmark data = load_benchmark(a.data);
    EvalOptions opts{a.probe, a.steps, 1};
    const CellKey key{a.eta, parse_mode(a.mode), seed};
    const BenchmarkRestorations rest = restore_benchmark(ck, data, restoration_seed(seed), a.steps);
    const CellResult cell = evaluate_cell(ck, data, key, opts, &rest);
    const AlignmentScore align = restoration_alignment(ck, data.test.samples, rest.test);

    // Category-wise similarity of restored text features on the test split.
    const Matrix restored_text = normalize_rows(rest.test.text, ck.text_norm);
    std::vector<int> labels;
    for (const auto& s : data.test.samples) labels.push_back(s.label);
    const Matrix sim = category_similarity_matrix(restored_text, labels, data.test.n_classes);

    json cfg = eval_config(a);
    cfg["eta"] = a.eta;
    cfg["mode"] = to_string(key.mode);
    const json res = {{"cell", to_json(cell)},
                      {"held_out_alignment", {{"i2t", align.i2t}, {"t2i", align.t2i}, {"mean", align.mean()}}}};
    const fs::path out(a.out);
    write_text(out / "eval.json", make_report("eval", cfg, seed, seconds_since(t0), res).dump(2));
    write_text(out / "category_similarity.csv", similarity_csv(sim));
    return 0;
}

int cmd_sweep(const EvalArgs& a) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    std::vector<std::uint64_t> seeds = a.seeds;
    if (seeds.empty()) seeds = {seed, seed + 1, seed + 2};
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Benchmark data = load_benchmark(a.data);
    EvalOptions opts{a.probe, a.steps, a.jobs};
    const SweepReport rep = robustness_sweep(ck, data, a.etas, parse_modes(a.modes), seeds, opts);
    json cfg = eval_config(a);
    cfg["etas"] = a.etas;
    cfg["modes"] = a.modes;
    cfg["seeds"] = seeds;
    const fs::path out(a.out);
    write_text(out / "sweep.json", make_report("sweep", cfg, seed, seconds_since(t0), to_json(rep)).dump(2));
    write_text(out / "sweep.csv", sweep_csv(rep));
    return 0;
}

// ---- ablation --------------------------------------------------------------------

struct AblationArgs {
    TrainArgs train;
    std::vector<std::uint64_t> seeds;
    double eta = 70.0;
    std::string mode = "both";
    bool mutual_base = false;
    int steps = 50;
    int jobs = 1;
    ProbeConfig probe;
    std::string out;
};

int cmd_ablation(const AblationArgs& a) {
    const auto t0 = Clock::now();
    const TrainConfig base = resolve_train_config(a.train);
    std::vector<std::uint64_t> seeds = a.seeds;
    if (seeds.empty()) seeds = {base.seed, base.seed + 1, base.seed + 2};
    const Benchmark data = load_benchmark(a.train.data);
    EvalOptions opts{a.probe, a.steps, a.jobs};
    const AblationReport rep = ablation_matrix(data, base, default_ablation_variants(a.mutual_base), seeds, a.eta,
                                               parse_mode(a.mode), opts);
    json cfg = {{"train", json::parse(train_config_to_json(base))},
                {"seeds", seeds},
                {"eta", a.eta},
                {"mode", a.mode},
                {"steps", a.steps},
                {"probe", to_json(a.probe)}};
    const fs::path out(a.out);
    write_text(out / "ablation.json", make_report("ablation", cfg, base.seed, seconds_since(t0), to_json(rep)).dump(2));
    write_text(out / "ablation.csv", ablation_csv(rep));
    return 0;
}

// ---- gate-stats / trajectory -----------------------------------------------------

struct InspectArgs {
    std::string checkpoint;
    std::string data;
    std::string direction = "i2t";
    std::vector<int> timesteps = {999, 799, 499, 49};
    std::vector<int> plot_steps = {999, 799, 499, 59, kFinalStep};
    int samples = 200;
    int steps = 50;
    std::optional<std::uint64_t> seed;
    std::string out;
};

std::vector<SamplePair> first_complete(const Dataset& d, int n) {
    std::vector<SamplePair> out;
    for (const auto& s : d.samples) {
        if (static_cast<int>(out.size()) >= n) break;
        if (s.image && s.text) out.push_back(s);
    }
    if (out.empty()) throw UsageError("dataset has no complete samples");
    return out;
}

int cmd_gate_stats(const InspectArgs& a) {
    const auto t0 = Clock::now();
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Direction dir = parse_direction(a.direction);
    const auto samples = first_complete(load_split(a.data, "test"), a.samples);
    const bool i2t = dir == Direction::I2T;
    const Matrix cond = normalize_rows(stack(samples, i2t ? Modality::image : Modality::text),
                                       i2t ? ck.image_norm : ck.text_norm);
    const GateStats gs = gate_statistics(i2t ? ck.state.i2t : ck.state.t2i, cond, a.timesteps);
    const json cfg = {{"checkpoint", a.checkpoint}, {"data", a.data},         {"direction", to_string(dir)},
                      {"samples", samples.size()},  {"timesteps", a.timesteps}};
    const fs::path out(a.out);
    write_text(out / "gate_stats.json", make_report("gate-stats", cfg, 0, seconds_since(t0), to_json(gs)).dump(2));
    write_text(out / "gate_histogram.csv", gate_histogram_csv(gs));
    return 0;
}

int cmd_trajectory(const InspectArgs& a) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Direction dir = parse_direction(a.direction);
    const auto samples = first_complete(load_split(a.data, "test"), a.samples);
    const TrajectoryReport rep = trajectory_diagnostic(ck, samples, dir, restoration_seed(seed), a.steps, a.plot_steps);
    const json cfg = {{"checkpoint", a.checkpoint}, {"data", a.data},   {"direction", to_string(dir)},
                      {"samples", samples.size()},  {"steps", a.steps}, {"plot_steps", a.plot_steps}};
    const fs::path out(a.out);
    write_text(out / "trajectory.json", make_report("trajectory", cfg, seed, seconds_since(t0), to_json(rep)).dump(2));
    write_text(out / "trajectory.csv", trajectory_csv(rep));
    return 0;
}

void add_probe_options(CLI::App* cmd, ProbeConfig& p) {
    cmd->add_option("--probe-hidden", p.hidden, "Probe hidden width")->capture_default_str();
    cmd->add_option("--probe-epochs", p.epochs, "Probe training epochs")->capture_default_str();
    cmd->add_option("--probe-lr", p.lr, "Probe learning rate")->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainArgs& t) {
    cmd->add_option("--config", t.config, "JSON file mirroring the training configuration");
    cmd->add_option("--seed", t.seed, "Random seed (default: config, then FEATRESTORE_SEED, then 0)");
    cmd->add_option("--mutual", t.mutual, "Mutual learning term")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--gating", t.gating, "Block conditioning")->check(CLI::IsMember({"full", "adaln", "concat", "base"}));
    cmd->add_option("--depth", t.depth, "Number of transformer blocks");
    cmd->add_option("--d-model", t.d_model, "Transformer width");
    cmd->add_option("--tau", t.tau, "Mutual learning threshold (default 50)");
    cmd->add_option("--epochs", t.epochs, "Training epochs (default 40)");
    cmd->add_option("--lr", t.lr, "AdamW learning rate (default 1e-4)");
    cmd->add_option("--lr-decay", t.lr_decay, "Learning rate multiplier after the decay point (default 1)");
    cmd->add_option("--lr-decay-at", t.lr_decay_at, "Decay point as a fraction of all steps (default 0.5)");
    cmd->add_option("--batch-size", t.batch_size, "Pairs per step (default 64)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-space diffusion restoration of missing modalities"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic paired benchmark");
    c_gen->add_option("--clusters", gen.spec.n_clusters, "Mixture components / classes")->capture_default_str();
    c_gen->add_option("--dim", gen.spec.d_feature, "Feature dimension")->capture_default_str();
    c_gen->add_option("--n", gen.spec.n_samples, "Total samples")->capture_default_str();
    c_gen->add_option("--center-std", gen.spec.center_std, "Spread of the mixture means")->capture_default_str();
    c_gen->add_option("--within-std", gen.spec.within_std, "Within-component std")->capture_default_str();
    c_gen->add_option("--offset-scale", gen.spec.coupling.offset_scale, "Per-class image offset scale")
        ->capture_default_str();
    c_gen->add_option("--nonlinearity", gen.spec.coupling.nonlinearity, "Amplitude of the sine warp")
        ->capture_default_str();
    c_gen->add_option("--noise-std", gen.spec.coupling.noise_std, "Image noise std")->capture_default_str();
    c_gen->add_flag("--identity", gen.spec.coupling.identity, "Image equals text (plus noise)");
    c_gen->add_option("--train-fraction", gen.spec.train_fraction, "Train split share")->capture_default_str();
    c_gen->add_option("--seed", gen.seed, "Random seed");
    c_gen->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the I2T and T2I restoration models");
    add_train_options(c_train, tr);
    c_train->add_option("--data", tr.data, "Training FEMB file or data directory")->required();
    c_train->add_option("--out", tr.out, "Checkpoint path")->required();

    RestoreArgs rs;
    auto* c_restore = app.add_subcommand("restore", "Apply a missing pattern and restore the missing side");
    c_restore->add_option("--checkpoint", rs.checkpoint)->required();
    c_restore->add_option("--data", rs.data, "FEMB file (or directory: test split)")->required();
    c_restore->add_option("--eta", rs.eta, "Missing rate in percent (0 keeps the file's pattern)")
        ->check(CLI::Range(0.0, 100.0));
    c_restore->add_option("--mode", rs.mode, "image | text | both")->capture_default_str();
    c_restore->add_option("--steps", rs.steps, "DDIM steps")->capture_default_str()->check(CLI::PositiveNumber);
    c_restore->add_option("--seed", rs.seed, "Random seed");
    c_restore->add_option("--out", rs.out, "Output FEMB path")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Probe accuracy for one (eta, mode, seed) cell");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    c_eval->add_option("--data", ev.data, "Directory with train.femb and test.femb")->required();
    c_eval->add_option("--eta", ev.eta)->capture_default_str()->check(CLI::Range(0.0, 100.0));
    c_eval->add_option("--mode", ev.mode)->capture_default_str();
    c_eval->add_option("--seed", ev.seed);
    c_eval->add_option("--steps", ev.steps)->capture_default_str()->check(CLI::PositiveNumber);
    c_eval->add_option("--out", ev.out, "Report directory")->required();
    add_probe_options(c_eval, ev.probe);

    EvalArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "Missing-rate robustness sweep");
    c_sweep->add_option("--checkpoint", sw.checkpoint)->required();
    c_sweep->add_option("--data", sw.data, "Directory with train.femb and test.femb")->required();
    c_sweep->add_option("--etas", sw.etas, "Missing rates")->capture_default_str()->delimiter(',');
    c_sweep->add_option("--modes", sw.modes, "image | text | both")->capture_default_str()->delimiter(',');
    c_sweep->add_option("--seeds", sw.seeds, "Cell seeds (default: seed, seed+1, seed+2)")->delimiter(',');
    c_sweep->add_option("--seed", sw.seed);
    c_sweep->add_option("--steps", sw.steps)->capture_default_str()->check(CLI::PositiveNumber);
    c_sweep->add_option("--jobs", sw.jobs, "Parallel cells")->capture_default_str()->check(CLI::PositiveNumber);
    c_sweep->add_option("--out", sw.out, "Report directory")->required();
    add_probe_options(c_sweep, sw.probe);

    AblationArgs ab;
    auto* c_ab = app.add_subcommand("ablation", "Train and compare the gating / mutual-learning variants");
    add_train_options(c_ab, ab.train);
    c_ab->add_option("--data", ab.train.data, "Directory with train.femb and test.femb")->required();
    c_ab->add_option("--seeds", ab.seeds, "Training seeds (default: seed, seed+1, seed+2)")->delimiter(',');
    c_ab->add_option("--eta", ab.eta)->capture_default_str();
    c_ab->add_option("--mode", ab.mode)->capture_default_str();
    c_ab->add_flag("--with-mutual-base", ab.mutual_base, "Also run mutual learning without gating");
    c_ab->add_option("--steps", ab.steps)->capture_default_str()->check(CLI::PositiveNumber);
    c_ab->add_option("--jobs", ab.jobs)->capture_default_str()->check(CLI::PositiveNumber);
    c_ab->add_option("--out", ab.out, "Report directory")->required();
    add_probe_options(c_ab, ab.probe);

    InspectArgs gs;
    auto* c_gs = app.add_subcommand("gate-stats", "Gate activation statistics of a full-gating checkpoint");
    c_gs->add_option("--checkpoint", gs.checkpoint)->required();
    c_gs->add_option("--data", gs.data, "FEMB file or data directory (test split)")->required();
    c_gs->add_option("--direction", gs.direction, "i2t | t2i")->capture_default_str();
    c_gs->add_option("--timesteps", gs.timesteps)->capture_default_str()->delimiter(',');
    c_gs->add_option("--samples", gs.samples)->capture_default_str();
    c_gs->add_option("--out", gs.out, "Report directory")->required();

    InspectArgs tj;
    auto* c_tj = app.add_subcommand("trajectory", "PCA view of intermediate denoising states");
    c_tj->add_option("--checkpoint", tj.checkpoint)->required();
    c_tj->add_option("--data", tj.data, "FEMB file or data directory (test split)")->required();
    c_tj->add_option("--direction", tj.direction, "i2t | t2i")->capture_default_str();
    c_tj->add_option("--plot-steps", tj.plot_steps, "Plan steps to project (-1 = final)")
        ->capture_default_str()
        ->delimiter(',');
    c_tj->add_option("--samples", tj.samples)->capture_default_str();
    c_tj->add_option("--steps", tj.steps)->capture_default_str()->check(CLI::PositiveNumber);
    c_tj->add_option("--seed", tj.seed);
    c_tj->add_option("--out", tj.out, "Report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    set_log_level(quiet ? LogLevel::warn : LogLevel::info);

    try {
        if (c_gen->parsed()) return cmd_gen_data(gen);
        if (c_train->parsed()) return cmd_train(tr);
        if (c_restore->parsed()) return cmd_restore(rs);
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_sweep->parsed()) return cmd_sweep(sw);
        if (c_ab->parsed()) return cmd_ablation(ab);
        if (c_gs->parsed()) return cmd_gate_stats(gs);
        if (c_tj->parsed()) return cmd_trajectory(tj);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
