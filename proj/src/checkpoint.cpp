// Checkpoint file: "FRST" magic, u16 version, then CRC-checked sections
//   config     JSON TrainConfig (embeds ModelConfig)
//   schedule   u32 T; f64 beta[T], alpha[T], alpha_bar[T]
//   norm       image mean/std, text mean/std (u32 d + f64 values each)
//   model.i2t  named float64 tensors
//   model.t2i
//   optim.i2t  u64 step count; first and second moments
//   optim.t2i
//   state      u64 step; rng engine state (string)

#include "featrestore/binio.hpp"
#include "featrestore/training.hpp"

#include "json.hpp"

namespace featrestore {

using nlohmann::json;

namespace {

json model_to_json(const ModelConfig& m) {
    return {{"d_model", m.d_model},     {"depth", m.depth},
            {"n_heads", m.n_heads},     {"n_tokens", m.n_tokens},
            {"d_feature", m.d_feature}, {"d_cond", m.d_cond},
            {"cond_tokens", m.cond_tokens}, {"gate_hidden", m.gate_hidden},
            {"ffn_mult", m.ffn_mult},   {"gating", to_string(m.gating)},
            {"cond_positional", m.cond_positional}};
}

ModelConfig model_from_json(const json& j, ModelConfig m = {}) {
    m.d_model = j.value("d_model", m.d_model);
    m.depth = j.value("depth", m.depth);
    m.n_heads = j.value("n_heads", m.n_heads);
    m.n_tokens = j.value("n_tokens", m.n_tokens);
    m.d_feature = j.value("d_feature", m.d_feature);
    m.d_cond = j.value("d_cond", m.d_cond);
    m.cond_tokens = j.value("cond_tokens", m.cond_tokens);
    m.gate_hidden = j.value("gate_hidden", m.gate_hidden);
    m.ffn_mult = j.value("ffn_mult", m.ffn_mult);
    if (j.contains("gating")) m.gating = gating_from_string(j["gating"].get<std::string>());
    m.cond_positional = j.value("cond_positional", m.cond_positional);
    return m;
}

void put_vector(ByteWriter& w, const Vector& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

Vector get_vector(ByteReader& r) {
    Vector v(r.u32());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
    return v;
}

void put_matrix(ByteWriter& w, const Matrix& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

Matrix get_matrix(ByteReader& r) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    return m;
}

std::vector<std::uint8_t> encode_params(const ParamStore& p) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
        w.str(p.names[i]);
        put_matrix(w, p.values[i]);
    }
    return w.take();
}

ParamStore decode_params(const std::vector<std::uint8_t>& bytes, const std::string& section) {
    ByteReader r(bytes, "checkpoint section '" + section + "'");
    ParamStore p;
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str();
        p.add(name, get_matrix(r));
    }
    return p;
}

std::vector<std::uint8_t> encode_optimizer(const AdamW& opt) {
    ByteWriter w;
    w.u64(opt.step_count());
    w.u32(static_cast<std::uint32_t>(opt.first_moment().size()));
    for (const auto& m : opt.first_moment()) put_matrix(w, m);
    for (const auto& v : opt.second_moment()) put_matrix(w, v);
    return w.take();
}

AdamW decode_optimizer(const std::vector<std::uint8_t>& bytes, const ParamStore& shape,
                       const AdamW::Params& params, const std::string& section) {
    ByteReader r(bytes, "checkpoint section '" + section + "'");
    AdamW opt(shape, params);
    opt.set_step_count(r.u64());
    const auto n = r.u32();
    if (n != shape.size()) {
        throw FormatError("checkpoint section '" + section + "': moment count does not match parameters");
    }
    for (auto& m : opt.first_moment()) m = get_matrix(r);
    for (auto& v : opt.second_moment()) v = get_matrix(r);
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (opt.first_moment()[i].rows() != shape.values[i].rows() ||
            opt.first_moment()[i].cols() != shape.values[i].cols() ||
            opt.second_moment()[i].rows() != shape.values[i].rows() ||
            opt.second_moment()[i].cols() != shape.values[i].cols()) {
            throw FormatError("checkpoint section '" + section + "': moment shape mismatch for " +
                              shape.names[i]);
        }
    }
    return opt;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
    json j = {{"tau", c.tau},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"lr_decay", c.lr_decay},
              {"lr_decay_at", c.lr_decay_at},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"grad_clip", c.grad_clip ? json(*c.grad_clip) : json(nullptr)},
              {"mutual_enabled", c.mutual_enabled},
              {"detach_x0", c.detach_x0},
              {"loss_mode", c.loss_mode == LossMode::total ? "total" : "mutual_only"},
              {"normalize", c.normalize},
              {"T", c.T},
              {"beta_start", c.beta_start},
              {"beta_end", c.beta_end},
              {"model", model_to_json(c.model)}};
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.tau = j.value("tau", c.tau);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.lr_decay_at = j.value("lr_decay_at", c.lr_decay_at);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("grad_clip") && !j["grad_clip"].is_null()) c.grad_clip = j["grad_clip"].get<double>();
    c.mutual_enabled = j.value("mutual_enabled", c.mutual_enabled);
    c.detach_x0 = j.value("detach_x0", c.detach_x0);
    if (j.contains("loss_mode")) {
        const auto m = j["loss_mode"].get<std::string>();
        if (m == "total") c.loss_mode = LossMode::total;
        else if (m == "mutual_only") c.loss_mode = LossMode::mutual_only;
        else throw std::invalid_argument("unknown loss_mode '" + m + "'");
    }
    c.normalize = j.value("normalize", c.normalize);
    c.T = j.value("T", c.T);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    if (j.contains("model")) c.model = model_from_json(j["model"], c.model);
    return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    ByteWriter out;
    out.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("FRST"), 4));
    out.u16(kCheckpointVersion);

    const std::string cfg = train_config_to_json(ck.config);
    write_section(out, "config", std::vector<std::uint8_t>(cfg.begin(), cfg.end()));

    ByteWriter sched;
    sched.u32(static_cast<std::uint32_t>(ck.schedule.T));
    for (const auto* arr : {&ck.schedule.beta, &ck.schedule.alpha, &ck.schedule.alpha_bar}) {
        for (double v : *arr) sched.f64(v);
    }
    write_section(out, "schedule", sched.data());

    ByteWriter norm;
    put_vector(norm, ck.image_norm.mean);
    put_vector(norm, ck.image_norm.std);
    put_vector(norm, ck.text_norm.mean);
    put_vector(norm, ck.text_norm.std);
    write_section(out, "norm", norm.data());

    write_section(out, "model.i2t", encode_params(ck.state.i2t.params()));
    write_section(out, "model.t2i", encode_params(ck.state.t2i.params()));
    write_section(out, "optim.i2t", encode_optimizer(ck.state.opt_i2t));
    write_section(out, "optim.t2i", encode_optimizer(ck.state.opt_t2i));

    ByteWriter st;
    st.u64(ck.state.step);
    st.str(ck.state.rng.state());
    write_section(out, "state", st.data());
    return out.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader in(bytes, "checkpoint");
    auto magic = in.bytes(4);
    if (std::string(magic.begin(), magic.end()) != "FRST") {
        throw FormatError("checkpoint: bad magic (not an FRST file)");
    }
    const auto version = in.u16();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    {
        auto cfg = read_section(in, "config");
        try {
            ck.config = train_config_from_json(std::string(cfg.begin(), cfg.end()));
            ck.config.validate();
        } catch (const FormatError&) {
            throw;
        } catch (const std::exception& e) {
            throw FormatError(std::string("checkpoint section 'config': ") + e.what());
        }
    }
    {
        auto payload = read_section(in, "schedule");
        ByteReader r(payload, "checkpoint section 'schedule'");
        const auto T = r.u32();
        std::vector<double> arrays[3];
        for (auto& a : arrays) {
            a.resize(T);
            for (auto& v : a) v = r.f64();
        }
        ck.schedule.T = static_cast<int>(T);
        ck.schedule.beta = std::move(arrays[0]);
        ck.schedule.alpha = std::move(arrays[1]);
        ck.schedule.alpha_bar = std::move(arrays[2]);
        try {
            ck.schedule.validate();
        } catch (const std::exception& e) {
            throw FormatError(std::string("checkpoint section 'schedule': ") + e.what());
        }
    }
    {
        auto payload = read_section(in, "norm");
        ByteReader r(payload, "checkpoint section 'norm'");
        ck.image_norm.mean = get_vector(r);
        ck.image_norm.std = get_vector(r);
        ck.text_norm.mean = get_vector(r);
        ck.text_norm.std = get_vector(r);
    }
    const AdamW::Params opt_params = ck.config.optimizer_params();
    try {
        ck.state.i2t = GatedDiT(ck.config.model, decode_params(read_section(in, "model.i2t"), "model.i2t"));
        ck.state.t2i = GatedDiT(swap_roles(ck.config.model), decode_params(read_section(in, "model.t2i"), "model.t2i"));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint model section: ") + e.what());
    }
    ck.state.opt_i2t = decode_optimizer(read_section(in, "optim.i2t"), ck.state.i2t.params(), opt_params, "optim.i2t");
    ck.state.opt_t2i = decode_optimizer(read_section(in, "optim.t2i"), ck.state.t2i.params(), opt_params, "optim.t2i");
    {
        auto payload = read_section(in, "state");
        ByteReader r(payload, "checkpoint section 'state'");
        ck.state.step = r.u64();
        try {
            ck.state.rng.set_state(r.str());
        } catch (const std::exception& e) {
            throw FormatError(std::string("checkpoint section 'state': ") + e.what());
        }
    }
    if (in.remaining() != 0) {
        throw FormatError("checkpoint: trailing bytes after last section");
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace featrestore
