#include "featrestore/report.hpp"

#include <map>
#include <sstream>

namespace featrestore {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json summary_json(const GateSummary& s) {
    return {{"mean", s.mean},
            {"min", s.min},
            {"max", s.max},
            {"fraction_in_0_0.2", s.fraction_low},
            {"count", s.count},
            {"histogram", s.histogram},
            {"in_open_unit_interval", s.in_open_unit_interval},
            {"channel_mean", vector_json(s.channel_mean)}};
}

json score_json(const ProbeScore& s) { return {{"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}}; }

json alignment_json(const AlignmentScore& a) { return {{"i2t", a.i2t}, {"t2i", a.t2i}, {"mean", a.mean()}}; }

}  // namespace

json to_json(const GateStats& stats) {
    json blocks = json::array();
    for (std::size_t l = 0; l < stats.blocks.size(); ++l) {
        blocks.push_back({{"block", l}, {"attn", summary_json(stats.blocks[l].attn)},
                          {"mlp", summary_json(stats.blocks[l].mlp)}});
    }
    return {{"blocks", blocks},
            {"overall_mean", stats.overall_mean},
            {"overall_fraction_in_0_0.2", stats.overall_fraction_low},
            {"all_in_open_unit_interval", stats.all_in_open_unit_interval}};
}

json to_json(const CellResult& c) {
    return {{"eta", c.key.eta},
            {"mode", to_string(c.key.mode)},
            {"seed", c.key.seed},
            {"zero_fill", score_json(c.zero_fill)},
            {"restored", score_json(c.restored)},
            {"test_counts",
             {{"complete", c.test_counts.complete},
              {"image_only", c.test_counts.image_only},
              {"text_only", c.test_counts.text_only}}},
            {"seconds", c.seconds}};
}

json to_json(const SweepReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells) cells.push_back(to_json(c));
    return {{"cells", cells}, {"held_out_alignment", alignment_json(r.alignment)}};
}

json to_json(const AblationReport& r) {
    json rows = json::array();
    std::map<std::string, int> order;
    for (const auto& row : r.rows) {
        rows.push_back({{"variant", row.variant.name},
                        {"gating", to_string(row.variant.gating)},
                        {"mutual", row.variant.mutual},
                        {"seed", row.seed},
                        {"cell", to_json(row.cell)},
                        {"alignment", alignment_json(row.alignment)},
                        {"train_seconds", row.train_seconds}});
        order.emplace(row.variant.name, 0);
    }
    json means = json::object();
    for (const auto& [name, unused] : order) means[name] = r.mean_accuracy(name);
    return {{"rows", rows}, {"mean_accuracy", means}};
}

json to_json(const TrajectoryReport& r) {
    double mean_first = 0.0, mean_last = 0.0;
    for (const auto& d : r.distance) {
        mean_first += d.front();
        mean_last += d.back();
    }
    const double n = static_cast<double>(r.distance.size());
    return {{"direction", to_string(r.direction)},
            {"samples", r.distance.size()},
            {"steps", r.steps},
            {"monotone_fraction", r.monotone_fraction},
            {"mean_distance_start", mean_first / n},
            {"mean_distance_final", mean_last / n},
            {"pca_explained_variance", vector_json(r.pca.explained_variance)},
            {"plot_steps", r.projected_steps}};
}

json to_json(const ProbeConfig& c) {
    return {{"hidden", c.hidden},         {"heads", c.heads},
            {"epochs", c.epochs},         {"lr", c.lr},
            {"lr_decay", c.lr_decay},     {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay}};
}

json make_report(const std::string& command, const json& config, std::uint64_t seed, double runtime_seconds,
                 json results) {
    return {{"command", command},
            {"seed", seed},
            {"config", config},
            {"config_hash", config_hash(config.dump())},
            {"runtime_seconds", runtime_seconds},
            {"results", std::move(results)}};
}

std::string sweep_csv(const SweepReport& r) {
    struct Acc {
        double acc = 0.0, f1 = 0.0;
        int n = 0;
    };
    std::map<std::tuple<double, int, int>, Acc> rows;
    for (const auto& c : r.cells) {
        for (int fill = 0; fill < 2; ++fill) {
            const ProbeScore& s = fill == 0 ? c.zero_fill : c.restored;
            Acc& a = rows[{c.key.eta, static_cast<int>(c.key.mode), fill}];
            a.acc += s.accuracy;
            a.f1 += s.macro_f1;
            ++a.n;
        }
    }
    std::ostringstream out;
    out.precision(17);
    out << "eta,mode,fill,seeds,accuracy_mean,macro_f1_mean\n";
    for (const auto& [k, a] : rows) {
        out << std::get<0>(k) << ',' << to_string(static_cast<MissingMode>(std::get<1>(k))) << ','
            << to_string(std::get<2>(k) == 0 ? FillMode::zero : FillMode::restored) << ',' << a.n << ','
            << a.acc / a.n << ',' << a.f1 / a.n << '\n';
    }
    return out.str();
}

std::string gate_histogram_csv(const GateStats& stats) {
    std::ostringstream out;
    out << "block,gate,bin_low,bin_high,count\n";
    for (std::size_t l = 0; l < stats.blocks.size(); ++l) {
        for (int g = 0; g < 2; ++g) {
            const GateSummary& s = g == 0 ? stats.blocks[l].attn : stats.blocks[l].mlp;
            for (int b = 0; b < kGateBins; ++b) {
                out << l << ',' << (g == 0 ? "attn" : "mlp") << ',' << static_cast<double>(b) / kGateBins << ','
                    << static_cast<double>(b + 1) / kGateBins << ',' << s.histogram[static_cast<std::size_t>(b)]
                    << '\n';
            }
        }
    }
    return out.str();
}

std::string similarity_csv(const Matrix& sim) {
    std::ostringstream out;
    out.precision(17);
    out << "row,col,cosine\n";
    for (Eigen::Index i = 0; i < sim.rows(); ++i)
        for (Eigen::Index j = 0; j < sim.cols(); ++j) out << i << ',' << j << ',' << sim(i, j) << '\n';
    return out.str();
}

std::string trajectory_csv(const TrajectoryReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "step,sample,pc1,pc2\n";
    for (std::size_t k = 0; k < r.projected.size(); ++k) {
        const Matrix& p = r.projected[k];
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            out << r.projected_steps[k] << ',' << i << ',' << p(i, 0) << ',' << p(i, 1) << '\n';
    }
    for (Eigen::Index i = 0; i < r.projected_truth.rows(); ++i)
        out << "truth," << i << ',' << r.projected_truth(i, 0) << ',' << r.projected_truth(i, 1) << '\n';
    return out.str();
}

std::string ablation_csv(const AblationReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "variant,seed,accuracy,macro_f1,alignment\n";
    for (const auto& row : r.rows) {
        out << row.variant.name << ',' << row.seed << ',' << row.cell.restored.accuracy << ','
            << row.cell.restored.macro_f1 << ',' << row.alignment.mean() << '\n';
    }
    return out.str();
}

}  // namespace featrestore
