#pragma once

#include "featrestore/autograd.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace featrestore {

enum class Modality { image, text };
enum class Availability { complete, image_only, text_only };
enum class MissingMode { missing_image, missing_text, missing_both };

std::string to_string(Availability a);
Availability availability_from_string(const std::string& s);
std::string to_string(MissingMode m);
MissingMode missing_mode_from_string(const std::string& s);
std::string to_string(Modality m);

/// One dataset record. A modality that is not available is absent, never a
/// placeholder vector.
struct SamplePair {
    std::string id;
    std::optional<Vector> image;
    std::optional<Vector> text;
    int label = 0;
    Availability availability = Availability::complete;
    /// Set when the feature was synthesized by restoration.
    bool image_restored = false;
    bool text_restored = false;

    bool has(Modality m) const { return m == Modality::image ? image.has_value() : text.has_value(); }
    const Vector& feature(Modality m) const { return m == Modality::image ? *image : *text; }
    /// Throws if availability disagrees with the present features.
    void validate() const;

    bool operator==(const SamplePair&) const = default;
};

struct Dataset {
    std::vector<SamplePair> samples;
    int d_image = 0;
    int d_text = 0;
    int n_classes = 0;

    std::size_t size() const { return samples.size(); }
    bool operator==(const Dataset&) const = default;
};

/// Fixed cross-modal coupling used by the synthetic generator:
/// image = phi(R text + offset[label]) + noise, phi(u) = u + nonlinearity * sin(u).
struct Coupling {
    bool identity = false;           ///< R = I, offsets = 0, phi = id
    double offset_scale = 0.5;
    double nonlinearity = 0.5;
    double noise_std = 0.1;
};

struct SyntheticSpec {
    int n_clusters = 5;
    int d_feature = 64;
    int n_samples = 2500;
    double center_std = 1.0;         ///< spread of the mixture means
    double within_std = 1.0;         ///< per-component isotropic std
    Coupling coupling;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Dataset train;
    Dataset test;
    Matrix rotation;   ///< R
    Matrix offsets;    ///< n_clusters x d
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Marks floor(eta% * N) samples incomplete (split evenly in missing_both
/// mode) and drops their missing features. Selection is a seeded shuffle.
std::vector<SamplePair> apply_missing_pattern(std::vector<SamplePair> samples, double eta_percent,
                                              MissingMode mode, std::uint64_t seed);

struct PatternCounts {
    std::size_t complete = 0;
    std::size_t image_only = 0;
    std::size_t text_only = 0;
};
PatternCounts count_availability(const std::vector<SamplePair>& samples);
/// Expected counts under the floor rule.
PatternCounts expected_pattern_counts(std::size_t n, double eta_percent, MissingMode mode);

/// Per-dimension z-score statistics (population std, floored at 1e-6).
struct NormStats {
    Vector mean;
    Vector std;

    bool operator==(const NormStats& o) const {
        return mean.size() == o.mean.size() && std.size() == o.std.size() && mean == o.mean && std == o.std;
    }
};

constexpr double kStdFloor = 1e-6;

NormStats fit_norm_stats(const std::vector<SamplePair>& train, Modality modality);
NormStats fit_norm_stats(const Matrix& rows);
Vector normalize(const Vector& feat, const NormStats& stats);
Vector denormalize(const Vector& feat, const NormStats& stats);
Matrix normalize_rows(const Matrix& rows, const NormStats& stats);
Matrix denormalize_rows(const Matrix& rows, const NormStats& stats);

/// Stacks a modality of the given samples into rows (all must be present).
Matrix stack(const std::vector<SamplePair>& samples, Modality modality);
Matrix stack(const std::vector<const SamplePair*>& samples, Modality modality);

}  // namespace featrestore
