#pragma once

#include "featrestore/autograd.hpp"
#include "featrestore/data.hpp"
#include "featrestore/model.hpp"

#include <cstdint>
#include <vector>

namespace featrestore {

struct ProbeConfig {
    int hidden = 64;
    int heads = 4;
    int epochs = 20;
    double lr = 5e-4;
    /// Learning rate is multiplied by this factor for the second half of training.
    double lr_decay = 0.1;
    int batch_size = 64;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ProbeConfig&) const = default;
};

/// Probe inputs: one row per sample, features already in normalized space.
/// A missing modality is represented by whatever the caller filled in.
struct ProbeInputs {
    Matrix image;
    Matrix text;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

/// Lightweight downstream decoder over an image token and a text token:
/// two pre-norm self-attention layers (with feed-forward), one
/// cross-attention layer with the text token querying the image token, and a
/// linear classifier on the text token.
class ProbeModel {
public:
    ProbeModel() = default;
    ProbeModel(int d_image, int d_text, int n_classes, const ProbeConfig& cfg, Rng& rng);

    ag::Var logits(ag::Tape& tape, const Matrix& image, const Matrix& text,
                   std::vector<Matrix>* grads = nullptr) const;
    std::vector<int> predict(const Matrix& image, const Matrix& text) const;

    const ParamStore& params() const { return params_; }
    ParamStore& params() { return params_; }
    int n_classes() const { return n_classes_; }

private:
    ProbeConfig cfg_;
    int n_classes_ = 0;
    ParamStore params_;
};

ProbeModel train_probe(const ProbeInputs& train, int n_classes, const ProbeConfig& cfg);

struct ProbeScore {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};
ProbeScore evaluate_probe(const ProbeModel& probe, const ProbeInputs& data);

enum class FillMode {
    zero,      ///< missing side = normalized-space zero vector
    restored,  ///< missing side = restoration output
};

std::string to_string(FillMode mode);

/// Builds normalized probe inputs. Samples must already be completed when
/// fill == restored; with fill == zero the missing side becomes zeros.
ProbeInputs make_probe_inputs(const std::vector<SamplePair>& samples, const NormStats& image_norm,
                              const NormStats& text_norm, FillMode fill);

}  // namespace featrestore
