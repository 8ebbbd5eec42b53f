#pragma once

#include "featrestore/autograd.hpp"
#include "featrestore/rng.hpp"

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace featrestore {

/// How the condition modulates each block.
enum class GatingMode {
    full,    ///< pooled-condition sigmoid gates on the self-attention and FFN branches
    adaln,   ///< shift/scale of the pre-norm activations from the pooled condition
    concat,  ///< condition tokens appended to the self-attention keys/values
    base,    ///< plain residual blocks
};

std::string to_string(GatingMode mode);
GatingMode gating_from_string(const std::string& s);

struct ModelConfig {
    int d_model = 64;
    int depth = 2;
    int n_heads = 4;
    /// Tokens the restored feature is chunked into.
    int n_tokens = 4;
    int d_feature = 64;
    /// Raw dimension of the condition feature.
    int d_cond = 64;
    /// Tokens the condition feature is chunked into.
    int cond_tokens = 4;
    int gate_hidden = 64;
    int ffn_mult = 4;
    GatingMode gating = GatingMode::full;
    /// Learned position embedding on condition tokens.
    bool cond_positional = true;

    void validate() const;
    /// Closed-form parameter count for this configuration.
    std::size_t parameter_count() const;

    int token_width() const { return d_feature / n_tokens; }
    int cond_token_width() const { return d_cond / cond_tokens; }
    int head_dim() const { return d_model / n_heads; }

    bool operator==(const ModelConfig&) const = default;
};

/// Ordered named parameter tensors.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Matrix> values;

    std::size_t add(const std::string& name, Matrix value);
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Matrix& operator[](const std::string& name) { return values[index_of(name)]; }
    const Matrix& operator[](const std::string& name) const { return values[index_of(name)]; }
    std::size_t size() const { return values.size(); }
    std::size_t scalar_count() const;
    bool all_finite() const;
    /// Zero gradient buffers shaped like the parameters.
    std::vector<Matrix> zeros_like() const;

    bool operator==(const ParamStore& other) const;

private:
    std::unordered_map<std::string, std::size_t> index_;
};

/// Per-block gate activations captured during a forward pass (rows = batch).
struct GateCapture {
    std::vector<Matrix> attn;
    std::vector<Matrix> mlp;
};

/// Noise-prediction network interface: eps_hat(x_t, t | condition).
/// x_t is (B x feature_dim), cond is (B x cond_dim), t holds B timesteps.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual int feature_dim() const = 0;
    virtual int cond_dim() const = 0;
    /// When grads is non-null, parameter gradients of a later backward() are
    /// accumulated into it (one matrix per parameter).
    virtual ag::Var predict(ag::Var x_t, const std::vector<int>& t, ag::Var cond,
                            std::vector<Matrix>* grads = nullptr,
                            GateCapture* capture = nullptr) const = 0;

    /// Convenience inference pass without gradient tracking.
    Matrix predict_values(const Matrix& x_t, const std::vector<int>& t, const Matrix& cond,
                          GateCapture* capture = nullptr) const;
};

/// Sinusoidal timestep encoding: [cos(t f_0..f_{h-1}), sin(t f_0..f_{h-1})],
/// f_i = 10000^(-i/h), h = d/2.
Vector timestep_embedding(int t, int d);

class GatedDiT final : public NoisePredictor {
public:
    GatedDiT() = default;
    GatedDiT(const ModelConfig& cfg, Rng& rng);
    /// Wraps existing parameters (e.g. loaded from a checkpoint).
    GatedDiT(const ModelConfig& cfg, ParamStore params);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    int feature_dim() const override { return cfg_.d_feature; }
    int cond_dim() const override { return cfg_.d_cond; }

    ag::Var predict(ag::Var x_t, const std::vector<int>& t, ag::Var cond,
                    std::vector<Matrix>* grads = nullptr,
                    GateCapture* capture = nullptr) const override;

    // Sub-stages of predict(), exposed for testing. Each binds parameters on
    // the tape of its inputs.
    class Binding;

    /// Condition_emb(tokens) + MLP_time(t_emb), per token. cond_tokens is
    /// (B*cond_tokens x d_cond/cond_tokens).
    ag::Var fuse_condition(Binding& p, ag::Var cond_tokens, const std::vector<int>& t) const;
    /// Attention-pooled modulation vector G (B x d_model).
    ag::Var attention_pool_gate(Binding& p, ag::Var fused) const;
    ag::Var block_forward(Binding& p, ag::Var x, ag::Var fused, ag::Var gate, int block,
                          GateCapture* capture) const;

    bool operator==(const GatedDiT& other) const {
        return cfg_ == other.cfg_ && params_ == other.params_;
    }

private:
    ModelConfig cfg_;
    ParamStore params_;
};

/// Binds a model's parameters onto a tape on first use.
class GatedDiT::Binding {
public:
    Binding(ag::Tape& tape, const ParamStore& params, std::vector<Matrix>* grads);
    ag::Var operator()(const std::string& name);
    ag::Tape& tape() { return tape_; }

private:
    ag::Tape& tape_;
    const ParamStore& params_;
    std::vector<Matrix>* grads_;
    std::vector<ag::Var> bound_;
};

}  // namespace featrestore
