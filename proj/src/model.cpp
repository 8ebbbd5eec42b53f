#include "featrestore/model.hpp"

#include <cmath>
#include <stdexcept>

namespace featrestore {

std::string to_string(GatingMode mode) {
    switch (mode) {
        case GatingMode::full: return "full";
        case GatingMode::adaln: return "adaln";
        case GatingMode::concat: return "concat";
        case GatingMode::base: return "base";
    }
    return "full";
}

GatingMode gating_from_string(const std::string& s) {
    if (s == "full") return GatingMode::full;
    if (s == "adaln") return GatingMode::adaln;
    if (s == "concat") return GatingMode::concat;
    if (s == "base") return GatingMode::base;
    throw std::invalid_argument("unknown gating mode '" + s + "'");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (d_model <= 0 || depth <= 0 || n_heads <= 0 || n_tokens <= 0 || d_feature <= 0 ||
        d_cond <= 0 || cond_tokens <= 0 || gate_hidden <= 0 || ffn_mult <= 0) {
        fail("all sizes must be positive");
    }
    if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_model % 2 != 0) fail("d_model must be even for the timestep encoding");
    if (d_feature % n_tokens != 0) fail("d_feature must be divisible by n_tokens");
    if (d_cond % cond_tokens != 0) fail("d_cond must be divisible by cond_tokens");
}

std::size_t ModelConfig::parameter_count() const {
    const std::size_t d = static_cast<std::size_t>(d_model);
    const std::size_t p = static_cast<std::size_t>(token_width());
    const std::size_t q = static_cast<std::size_t>(cond_token_width());
    const std::size_t n = static_cast<std::size_t>(n_tokens);
    const std::size_t m = static_cast<std::size_t>(cond_tokens);
    const std::size_t h = static_cast<std::size_t>(gate_hidden);
    const std::size_t f = static_cast<std::size_t>(ffn_mult) * d;

    std::size_t total = 0;
    total += p * d + d + n * d;               // input projection + positions
    total += 2 * (d * d + d);                 // MLP_time
    total += q * d + d;                       // Condition_emb
    if (cond_positional) total += m * d;
    const bool pooled = gating == GatingMode::full || gating == GatingMode::adaln;
    if (pooled) {
        total += d + 2 * d * d;               // Q_probe, W_K, W_V
        total += d * h + h + h * d + d;       // MLP_gate
    }
    std::size_t block = 0;
    block += 3 * 2 * d;                       // three layer norms
    block += 2 * (4 * d * d + d);             // self- and cross-attention (q,k,v,o + out bias)
    block += d * f + f + f * d + d;           // FFN
    if (gating == GatingMode::full) block += 2 * (d * d + d);
    if (gating == GatingMode::adaln) block += d * 4 * d + 4 * d;
    total += static_cast<std::size_t>(depth) * block;
    total += 2 * d + d * p + p;               // final norm + output projection
    return total;
}

std::size_t ParamStore::add(const std::string& name, Matrix value) {
    if (index_.count(name) != 0) {
        throw std::invalid_argument("duplicate parameter " + name);
    }
    names.push_back(name);
    values.push_back(std::move(value));
    index_[name] = values.size() - 1;
    return values.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("no parameter named " + name);
    }
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += static_cast<std::size_t>(v.size());
    return n;
}

bool ParamStore::all_finite() const {
    for (const auto& v : values) {
        if (!v.allFinite()) return false;
    }
    return true;
}

std::vector<Matrix> ParamStore::zeros_like() const {
    std::vector<Matrix> out;
    out.reserve(values.size());
    for (const auto& v : values) out.push_back(Matrix::Zero(v.rows(), v.cols()));
    return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (names != other.names) return false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].rows() != other.values[i].rows() || values[i].cols() != other.values[i].cols() ||
            values[i] != other.values[i]) {
            return false;
        }
    }
    return true;
}

Matrix NoisePredictor::predict_values(const Matrix& x_t, const std::vector<int>& t,
                                      const Matrix& cond, GateCapture* capture) const {
    ag::Tape tape;
    ag::Var out = predict(tape.constant(x_t), t, tape.constant(cond), nullptr, capture);
    return out.value();
}

Vector timestep_embedding(int t, int d) {
    if (d <= 0 || d % 2 != 0) {
        throw std::invalid_argument("timestep embedding width must be positive and even");
    }
    const int half = d / 2;
    Vector e(d);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        e(i) = std::cos(static_cast<double>(t) * freq);
        e(half + i) = std::sin(static_cast<double>(t) * freq);
    }
    return e;
}

namespace {

Matrix trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std = 0.02) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.truncated_normal(std);
    return m;
}

std::string blk(int l, const char* name) { return "blocks." + std::to_string(l) + "." + name; }

}  // namespace

GatedDiT::GatedDiT(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const Eigen::Index d = cfg_.d_model;
    const Eigen::Index p = cfg_.token_width();
    const Eigen::Index q = cfg_.cond_token_width();
    const Eigen::Index h = cfg_.gate_hidden;
    const Eigen::Index f = static_cast<Eigen::Index>(cfg_.ffn_mult) * d;
    auto zeros = [](Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); };
    auto ones = [](Eigen::Index r, Eigen::Index c) { return Matrix::Ones(r, c); };

    params_.add("in.w", trunc_normal(rng, p, d));
    params_.add("in.b", zeros(1, d));
    params_.add("in.pos", trunc_normal(rng, cfg_.n_tokens, d));
    params_.add("time.w1", trunc_normal(rng, d, d));
    params_.add("time.b1", zeros(1, d));
    params_.add("time.w2", trunc_normal(rng, d, d));
    params_.add("time.b2", zeros(1, d));
    params_.add("cond.w", trunc_normal(rng, q, d));
    params_.add("cond.b", zeros(1, d));
    if (cfg_.cond_positional) params_.add("cond.pos", trunc_normal(rng, cfg_.cond_tokens, d));
    if (cfg_.gating == GatingMode::full || cfg_.gating == GatingMode::adaln) {
        params_.add("pool.query", trunc_normal(rng, 1, d));
        params_.add("pool.wk", trunc_normal(rng, d, d));
        params_.add("pool.wv", trunc_normal(rng, d, d));
        params_.add("gate.w1", trunc_normal(rng, d, h));
        params_.add("gate.b1", zeros(1, h));
        params_.add("gate.w2", trunc_normal(rng, h, d));
        params_.add("gate.b2", zeros(1, d));
    }
    for (int l = 0; l < cfg_.depth; ++l) {
        params_.add(blk(l, "ln1.g"), ones(1, d));
        params_.add(blk(l, "ln1.b"), zeros(1, d));
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
            params_.add(blk(l, w), trunc_normal(rng, d, d));
        }
        params_.add(blk(l, "attn.bo"), zeros(1, d));
        params_.add(blk(l, "lnx.g"), ones(1, d));
        params_.add(blk(l, "lnx.b"), zeros(1, d));
        for (const char* w : {"xattn.wq", "xattn.wk", "xattn.wv", "xattn.wo"}) {
            params_.add(blk(l, w), trunc_normal(rng, d, d));
        }
        params_.add(blk(l, "xattn.bo"), zeros(1, d));
        params_.add(blk(l, "ln2.g"), ones(1, d));
        params_.add(blk(l, "ln2.b"), zeros(1, d));
        params_.add(blk(l, "ffn.w1"), trunc_normal(rng, d, f));
        params_.add(blk(l, "ffn.b1"), zeros(1, f));
        params_.add(blk(l, "ffn.w2"), trunc_normal(rng, f, d));
        params_.add(blk(l, "ffn.b2"), zeros(1, d));
        if (cfg_.gating == GatingMode::full) {
            // Zero heads: every gate starts at sigmoid(0) = 0.5.
            params_.add(blk(l, "gate_attn.w"), zeros(d, d));
            params_.add(blk(l, "gate_attn.b"), zeros(1, d));
            params_.add(blk(l, "gate_mlp.w"), zeros(d, d));
            params_.add(blk(l, "gate_mlp.b"), zeros(1, d));
        }
        if (cfg_.gating == GatingMode::adaln) {
            // [shift_attn | scale_attn | shift_mlp | scale_mlp], zero = identity modulation.
            params_.add(blk(l, "ada.w"), zeros(d, 4 * d));
            params_.add(blk(l, "ada.b"), zeros(1, 4 * d));
        }
    }
    params_.add("final.g", ones(1, d));
    params_.add("final.b", zeros(1, d));
    params_.add("out.w", zeros(d, p));
    params_.add("out.b", zeros(1, p));
}

GatedDiT::GatedDiT(const ModelConfig& cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    if (params_.scalar_count() != cfg_.parameter_count()) {
        throw std::invalid_argument("parameter count does not match ModelConfig");
    }
}

GatedDiT::Binding::Binding(ag::Tape& tape, const ParamStore& params, std::vector<Matrix>* grads)
    : tape_(tape), params_(params), grads_(grads), bound_(params.size()) {
    if (grads_ != nullptr && grads_->size() != params_.size()) {
        *grads_ = params_.zeros_like();
    }
}

ag::Var GatedDiT::Binding::operator()(const std::string& name) {
    const std::size_t i = params_.index_of(name);
    if (bound_[i].tape == nullptr) {
        bound_[i] = grads_ != nullptr ? tape_.parameter(params_.values[i], &(*grads_)[i])
                                      : tape_.constant(params_.values[i]);
    }
    return bound_[i];
}

namespace {

ag::Var linear(ag::Var x, ag::Var w, ag::Var b) { return ag::add_row(ag::matmul(x, w), b); }

}  // namespace

ag::Var GatedDiT::fuse_condition(Binding& p, ag::Var cond_tokens, const std::vector<int>& t) const {
    ag::Tape& tape = p.tape();
    const Eigen::Index m = cfg_.cond_tokens;
    if (cond_tokens.cols() != cfg_.cond_token_width() || cond_tokens.rows() % m != 0) {
        throw std::invalid_argument("condition token shape does not match ModelConfig");
    }
    const Eigen::Index batch = cond_tokens.rows() / m;
    if (static_cast<Eigen::Index>(t.size()) != batch) {
        throw std::invalid_argument("timestep count does not match batch");
    }
    Matrix temb(batch, cfg_.d_model);
    for (Eigen::Index b = 0; b < batch; ++b) {
        temb.row(b) = timestep_embedding(t[static_cast<std::size_t>(b)], cfg_.d_model).transpose();
    }
    ag::Var time = linear(ag::silu(linear(tape.constant(std::move(temb)), p("time.w1"), p("time.b1"))),
                          p("time.w2"), p("time.b2"));
    ag::Var c = linear(cond_tokens, p("cond.w"), p("cond.b"));
    if (cfg_.cond_positional) {
        c = ag::add(c, ag::tile(p("cond.pos"), batch));
    }
    return ag::add(c, ag::repeat_rows(time, m));
}

ag::Var GatedDiT::attention_pool_gate(Binding& p, ag::Var fused) const {
    const Eigen::Index m = cfg_.cond_tokens;
    const Eigen::Index batch = fused.rows() / m;
    ag::Var keys = ag::matmul(fused, p("pool.wk"));
    ag::Var values = ag::matmul(fused, p("pool.wv"));
    ag::Var query = ag::tile(p("pool.query"), batch);
    ag::Var pooled = ag::attention(query, keys, values, 1, m, 1);
    return linear(ag::silu(linear(pooled, p("gate.w1"), p("gate.b1"))), p("gate.w2"), p("gate.b2"));
}

ag::Var GatedDiT::block_forward(Binding& p, ag::Var x, ag::Var fused, ag::Var gate, int l,
                                GateCapture* capture) const {
    const Eigen::Index n = cfg_.n_tokens;
    const Eigen::Index m = cfg_.cond_tokens;
    const Eigen::Index heads = cfg_.n_heads;
    const Eigen::Index d = cfg_.d_model;
    auto P = [&](const char* name) { return p(blk(l, name)); };

    ag::Var z_attn{}, z_mlp{};
    ag::Var shift_a{}, scale_a{}, shift_m{}, scale_m{};
    if (cfg_.gating == GatingMode::full) {
        z_attn = ag::sigmoid(linear(gate, P("gate_attn.w"), P("gate_attn.b")));
        z_mlp = ag::sigmoid(linear(gate, P("gate_mlp.w"), P("gate_mlp.b")));
        if (capture != nullptr) {
            capture->attn.push_back(z_attn.value());
            capture->mlp.push_back(z_mlp.value());
        }
    } else if (cfg_.gating == GatingMode::adaln) {
        // Modulation rows are split by transposing through a (4 x d) view per sample.
        ag::Var mod = linear(gate, P("ada.w"), P("ada.b"));          // B x 4d
        ag::Var split = ag::reshape(mod, mod.rows() * 4, d);           // (B*4) x d
        shift_a = ag::take_groups(split, 4, 0, 1);
        scale_a = ag::take_groups(split, 4, 1, 1);
        shift_m = ag::take_groups(split, 4, 2, 1);
        scale_m = ag::take_groups(split, 4, 3, 1);
    }
    auto modulate = [&](ag::Var h, ag::Var shift, ag::Var scale) {
        // h * (1 + scale) + shift, broadcast over the sample's tokens
        ag::Var s = ag::repeat_rows(scale, n);
        return ag::add(ag::add(h, ag::mul(h, s)), ag::repeat_rows(shift, n));
    };

    // Self-attention branch.
    ag::Var h = ag::layer_norm(x, P("ln1.g"), P("ln1.b"));
    if (cfg_.gating == GatingMode::adaln) h = modulate(h, shift_a, scale_a);
    ag::Var kv_src = h;
    Eigen::Index gk = n;
    if (cfg_.gating == GatingMode::concat) {
        kv_src = ag::concat_groups(h, n, fused, m);
        gk = n + m;
    }
    ag::Var sa = ag::attention(ag::matmul(h, P("attn.wq")), ag::matmul(kv_src, P("attn.wk")),
                               ag::matmul(kv_src, P("attn.wv")), n, gk, heads);
    sa = linear(sa, P("attn.wo"), P("attn.bo"));
    if (cfg_.gating == GatingMode::full) sa = ag::mul(sa, ag::repeat_rows(z_attn, n));
    x = ag::add(x, sa);

    // Ungated cross-attention to the fused condition.
    ag::Var hx = ag::layer_norm(x, P("lnx.g"), P("lnx.b"));
    ag::Var ca = ag::attention(ag::matmul(hx, P("xattn.wq")), ag::matmul(fused, P("xattn.wk")),
                               ag::matmul(fused, P("xattn.wv")), n, m, heads);
    x = ag::add(x, linear(ca, P("xattn.wo"), P("xattn.bo")));

    // FFN branch.
    ag::Var h2 = ag::layer_norm(x, P("ln2.g"), P("ln2.b"));
    if (cfg_.gating == GatingMode::adaln) h2 = modulate(h2, shift_m, scale_m);
    ag::Var ff = linear(ag::gelu(linear(h2, P("ffn.w1"), P("ffn.b1"))), P("ffn.w2"), P("ffn.b2"));
    if (cfg_.gating == GatingMode::full) ff = ag::mul(ff, ag::repeat_rows(z_mlp, n));
    return ag::add(x, ff);
}

ag::Var GatedDiT::predict(ag::Var x_t, const std::vector<int>& t, ag::Var cond,
                          std::vector<Matrix>* grads, GateCapture* capture) const {
    if (x_t.cols() != cfg_.d_feature) {
        throw std::invalid_argument("x_t width " + std::to_string(x_t.cols()) + " != d_feature " +
                                    std::to_string(cfg_.d_feature));
    }
    if (cond.cols() != cfg_.d_cond || cond.rows() != x_t.rows()) {
        throw std::invalid_argument("condition shape does not match (B x d_cond)");
    }
    const Eigen::Index batch = x_t.rows();
    const Eigen::Index n = cfg_.n_tokens;
    Binding p(*x_t.tape, params_, grads);

    ag::Var tokens = ag::reshape(x_t, batch * n, cfg_.token_width());
    ag::Var x = ag::add(linear(tokens, p("in.w"), p("in.b")), ag::tile(p("in.pos"), batch));

    ag::Var cond_tokens = ag::reshape(cond, batch * cfg_.cond_tokens, cfg_.cond_token_width());
    ag::Var fused = fuse_condition(p, cond_tokens, t);
    ag::Var gate{};
    if (cfg_.gating == GatingMode::full || cfg_.gating == GatingMode::adaln) {
        gate = attention_pool_gate(p, fused);
    }
    for (int l = 0; l < cfg_.depth; ++l) {
        x = block_forward(p, x, fused, gate, l, capture);
    }
    ag::Var out = linear(ag::layer_norm(x, p("final.g"), p("final.b")), p("out.w"), p("out.b"));
    return ag::reshape(out, batch, cfg_.d_feature);
}

}  // namespace featrestore
