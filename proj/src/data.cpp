#include "featrestore/data.hpp"

#include "featrestore/log.hpp"
#include "featrestore/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace featrestore {

std::string to_string(Availability a) {
    switch (a) {
        case Availability::complete: return "complete";
        case Availability::image_only: return "image_only";
        case Availability::text_only: return "text_only";
    }
    return "complete";
}

Availability availability_from_string(const std::string& s) {
    if (s == "complete") return Availability::complete;
    if (s == "image_only") return Availability::image_only;
    if (s == "text_only") return Availability::text_only;
    throw std::invalid_argument("unknown availability '" + s + "'");
}

std::string to_string(MissingMode m) {
    switch (m) {
        case MissingMode::missing_image: return "missing_image";
        case MissingMode::missing_text: return "missing_text";
        case MissingMode::missing_both: return "missing_both";
    }
    return "missing_both";
}

MissingMode missing_mode_from_string(const std::string& s) {
    if (s == "missing_image" || s == "image") return MissingMode::missing_image;
    if (s == "missing_text" || s == "text") return MissingMode::missing_text;
    if (s == "missing_both" || s == "both") return MissingMode::missing_both;
    throw std::invalid_argument("unknown missing mode '" + s + "'");
}

std::string to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

void SamplePair::validate() const {
    const bool ok = (availability == Availability::complete && image && text) ||
                    (availability == Availability::image_only && image && !text) ||
                    (availability == Availability::text_only && !image && text);
    if (!ok) {
        throw std::invalid_argument("sample '" + id + "': availability " + to_string(availability) +
                                    " disagrees with present features");
    }
}

namespace {

Matrix random_orthogonal(Rng& rng, int d) {
    Matrix a = rng.normal_matrix(d, d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    // Fix column signs so the factorization is unique.
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < d; ++i) {
        if (r(i, i) < 0) q.col(i) *= -1.0;
    }
    return q;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_clusters < 2 || spec.d_feature < 1 || spec.n_samples < 2 ||
        !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) || spec.within_std < 0.0 ||
        spec.coupling.noise_std < 0.0) {
        throw std::invalid_argument("degenerate synthetic spec");
    }
    Rng rng(spec.seed);
    const int d = spec.d_feature;
    Matrix centers = rng.normal_matrix(spec.n_clusters, d) * spec.center_std;

    SyntheticData out;
    if (spec.coupling.identity) {
        out.rotation = Matrix::Identity(d, d);
        out.offsets = Matrix::Zero(spec.n_clusters, d);
    } else {
        out.rotation = random_orthogonal(rng, d);
        out.offsets = rng.normal_matrix(spec.n_clusters, d) * spec.coupling.offset_scale;
    }
    const double a = spec.coupling.identity ? 0.0 : spec.coupling.nonlinearity;

    std::vector<SamplePair> all;
    all.reserve(static_cast<std::size_t>(spec.n_samples));
    for (int i = 0; i < spec.n_samples; ++i) {
        SamplePair s;
        s.id = "s" + std::to_string(i);
        s.label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.n_clusters)));
        Vector text = centers.row(s.label).transpose() + rng.normal_vector(d) * spec.within_std;
        Vector u = out.rotation * text + out.offsets.row(s.label).transpose();
        Vector image = u + a * u.array().sin().matrix();
        if (spec.coupling.noise_std > 0.0) {
            image += rng.normal_vector(d) * spec.coupling.noise_std;
        }
        s.text = std::move(text);
        s.image = std::move(image);
        all.push_back(std::move(s));
    }
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * spec.n_samples));
    for (auto* ds : {&out.train, &out.test}) {
        ds->d_image = d;
        ds->d_text = d;
        ds->n_classes = spec.n_clusters;
    }
    out.train.samples.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.samples.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    return out;
}

PatternCounts expected_pattern_counts(std::size_t n, double eta_percent, MissingMode mode) {
    if (!(eta_percent >= 0.0 && eta_percent <= 100.0)) {
        throw std::invalid_argument("missing rate must lie in [0, 100]");
    }
    const double nd = static_cast<double>(n);
    // The small epsilon absorbs representation error in e.g. 0.7 * 10.
    auto floor_count = [&](double pct) {
        return static_cast<std::size_t>(std::floor(pct * nd / 100.0 + 1e-9));
    };
    PatternCounts c;
    switch (mode) {
        case MissingMode::missing_image: c.text_only = floor_count(eta_percent); break;
        case MissingMode::missing_text: c.image_only = floor_count(eta_percent); break;
        case MissingMode::missing_both:
            c.image_only = floor_count(eta_percent / 2.0);
            c.text_only = c.image_only;
            break;
    }
    c.complete = n - c.image_only - c.text_only;
    return c;
}

std::vector<SamplePair> apply_missing_pattern(std::vector<SamplePair> samples, double eta_percent,
                                              MissingMode mode, std::uint64_t seed) {
    const PatternCounts want = expected_pattern_counts(samples.size(), eta_percent, mode);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    for (auto& s : samples) {
        if (!s.image || !s.text) {
            throw std::invalid_argument("apply_missing_pattern needs complete samples");
        }
        s.availability = Availability::complete;
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < want.image_only; ++i, ++k) {
        SamplePair& s = samples[order[k]];
        s.availability = Availability::image_only;
        s.text.reset();
    }
    for (std::size_t i = 0; i < want.text_only; ++i, ++k) {
        SamplePair& s = samples[order[k]];
        s.availability = Availability::text_only;
        s.image.reset();
    }
    return samples;
}

PatternCounts count_availability(const std::vector<SamplePair>& samples) {
    PatternCounts c;
    for (const auto& s : samples) {
        switch (s.availability) {
            case Availability::complete: ++c.complete; break;
            case Availability::image_only: ++c.image_only; break;
            case Availability::text_only: ++c.text_only; break;
        }
    }
    return c;
}

NormStats fit_norm_stats(const Matrix& rows) {
    if (rows.rows() < 2) {
        throw std::invalid_argument("normalization needs at least two samples");
    }
    NormStats st;
    st.mean = rows.colwise().mean().transpose();
    st.std.resize(rows.cols());
    int floored = 0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        double var = (rows.col(j).array() - st.mean(j)).square().mean();
        double sd = std::sqrt(var);
        if (sd < kStdFloor) {
            sd = kStdFloor;
            ++floored;
        }
        st.std(j) = sd;
    }
    if (floored > 0) {
        log_warn(std::to_string(floored) + " feature dimension(s) have ~zero variance; std floored at 1e-6");
    }
    return st;
}

NormStats fit_norm_stats(const std::vector<SamplePair>& train, Modality modality) {
    std::vector<const SamplePair*> present;
    for (const auto& s : train) {
        if (s.has(modality)) present.push_back(&s);
    }
    return fit_norm_stats(stack(present, modality));
}

Vector normalize(const Vector& feat, const NormStats& stats) {
    if (feat.size() != stats.mean.size()) throw std::invalid_argument("normalize: dimension mismatch");
    return ((feat - stats.mean).array() / stats.std.array()).matrix();
}

Vector denormalize(const Vector& feat, const NormStats& stats) {
    if (feat.size() != stats.mean.size()) throw std::invalid_argument("denormalize: dimension mismatch");
    return (feat.array() * stats.std.array()).matrix() + stats.mean;
}

Matrix normalize_rows(const Matrix& rows, const NormStats& stats) {
    if (rows.cols() != stats.mean.size()) throw std::invalid_argument("normalize: dimension mismatch");
    Matrix out = rows.rowwise() - stats.mean.transpose();
    return (out.array().rowwise() / stats.std.transpose().array()).matrix();
}

Matrix denormalize_rows(const Matrix& rows, const NormStats& stats) {
    if (rows.cols() != stats.mean.size()) throw std::invalid_argument("denormalize: dimension mismatch");
    Matrix out = (rows.array().rowwise() * stats.std.transpose().array()).matrix();
    return out.rowwise() + stats.mean.transpose();
}

Matrix stack(const std::vector<const SamplePair*>& samples, Modality modality) {
    if (samples.empty()) return Matrix(0, 0);
    const Eigen::Index d = samples.front()->feature(modality).size();
    Matrix m(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i]->has(modality)) {
            throw std::invalid_argument("sample '" + samples[i]->id + "' lacks " + to_string(modality));
        }
        m.row(static_cast<Eigen::Index>(i)) = samples[i]->feature(modality).transpose();
    }
    return m;
}

Matrix stack(const std::vector<SamplePair>& samples, Modality modality) {
    std::vector<const SamplePair*> ptrs;
    ptrs.reserve(samples.size());
    for (const auto& s : samples) ptrs.push_back(&s);
    return stack(ptrs, modality);
}

}  // namespace featrestore
