#include "featrestore/probe.hpp"

#include "featrestore/adamw.hpp"
#include "featrestore/metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace featrestore {

void ProbeConfig::validate() const {
    if (hidden <= 0 || heads <= 0 || hidden % heads != 0) {
        throw std::invalid_argument("ProbeConfig: hidden must be a positive multiple of heads");
    }
    if (epochs < 0 || batch_size <= 0 || lr <= 0.0) {
        throw std::invalid_argument("ProbeConfig: epochs >= 0, batch_size > 0, lr > 0 required");
    }
}

std::string to_string(FillMode mode) { return mode == FillMode::zero ? "zero" : "restored"; }

namespace {

Matrix glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double std = std::sqrt(2.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.truncated_normal(std);
    return m;
}

std::string layer(int l, const char* name) { return "sa." + std::to_string(l) + "." + name; }

ag::Var linear(ag::Var x, ag::Var w, ag::Var b) { return ag::add_row(ag::matmul(x, w), b); }

}  // namespace

ProbeModel::ProbeModel(int d_image, int d_text, int n_classes, const ProbeConfig& cfg, Rng& rng)
    : cfg_(cfg), n_classes_(n_classes) {
    cfg_.validate();
    if (n_classes < 2) throw std::invalid_argument("ProbeModel: need at least 2 classes");
    const Eigen::Index h = cfg_.hidden;
    auto zeros = [](Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); };
    auto ones = [](Eigen::Index r, Eigen::Index c) { return Matrix::Ones(r, c); };
    params_.add("image.w", glorot(rng, d_image, h));
    params_.add("image.b", zeros(1, h));
    params_.add("text.w", glorot(rng, d_text, h));
    params_.add("text.b", zeros(1, h));
    params_.add("modality", glorot(rng, 2, h));
    for (int l = 0; l < 2; ++l) {
        params_.add(layer(l, "ln1.g"), ones(1, h));
        params_.add(layer(l, "ln1.b"), zeros(1, h));
        for (const char* w : {"wq", "wk", "wv", "wo"}) params_.add(layer(l, w), glorot(rng, h, h));
        params_.add(layer(l, "bo"), zeros(1, h));
        params_.add(layer(l, "ln2.g"), ones(1, h));
        params_.add(layer(l, "ln2.b"), zeros(1, h));
        params_.add(layer(l, "ffn.w1"), glorot(rng, h, 2 * h));
        params_.add(layer(l, "ffn.b1"), zeros(1, 2 * h));
        params_.add(layer(l, "ffn.w2"), glorot(rng, 2 * h, h));
        params_.add(layer(l, "ffn.b2"), zeros(1, h));
    }
    params_.add("xa.lnq.g", ones(1, h));
    params_.add("xa.lnq.b", zeros(1, h));
    params_.add("xa.lnkv.g", ones(1, h));
    params_.add("xa.lnkv.b", zeros(1, h));
    for (const char* w : {"xa.wq", "xa.wk", "xa.wv", "xa.wo"}) params_.add(w, glorot(rng, h, h));
    params_.add("xa.bo", zeros(1, h));
    params_.add("head.ln.g", ones(1, h));
    params_.add("head.ln.b", zeros(1, h));
    params_.add("head.w", glorot(rng, h, n_classes));
    params_.add("head.b", zeros(1, n_classes));
}

ag::Var ProbeModel::logits(ag::Tape& tape, const Matrix& image, const Matrix& text,
                           std::vector<Matrix>* grads) const {
    if (image.rows() != text.rows()) throw std::invalid_argument("probe: image/text row mismatch");
    GatedDiT::Binding p(tape, params_, grads);
    const Eigen::Index heads = cfg_.heads;
    ag::Var modality = p("modality");
    ag::Var img = ag::add_row(linear(tape.constant(image), p("image.w"), p("image.b")),
                              ag::take_groups(modality, 2, 0, 1));
    ag::Var txt = ag::add_row(linear(tape.constant(text), p("text.w"), p("text.b")),
                              ag::take_groups(modality, 2, 1, 1));
    ag::Var x = ag::concat_groups(img, 1, txt, 1);  // per sample: [image, text]
    for (int l = 0; l < 2; ++l) {
        auto P = [&](const char* n) { return p(layer(l, n)); };
        ag::Var h = ag::layer_norm(x, P("ln1.g"), P("ln1.b"));
        ag::Var a = ag::attention(ag::matmul(h, P("wq")), ag::matmul(h, P("wk")), ag::matmul(h, P("wv")), 2, 2,
                                  heads);
        x = ag::add(x, linear(a, P("wo"), P("bo")));
        ag::Var h2 = ag::layer_norm(x, P("ln2.g"), P("ln2.b"));
        x = ag::add(x, linear(ag::gelu(linear(h2, P("ffn.w1"), P("ffn.b1"))), P("ffn.w2"), P("ffn.b2")));
    }
    ag::Var img_tok = ag::take_groups(x, 2, 0, 1);
    ag::Var txt_tok = ag::take_groups(x, 2, 1, 1);
    ag::Var q = ag::layer_norm(txt_tok, p("xa.lnq.g"), p("xa.lnq.b"));
    ag::Var kv = ag::layer_norm(img_tok, p("xa.lnkv.g"), p("xa.lnkv.b"));
    ag::Var ca = ag::attention(ag::matmul(q, p("xa.wq")), ag::matmul(kv, p("xa.wk")), ag::matmul(kv, p("xa.wv")),
                               1, 1, heads);
    ag::Var y = ag::add(txt_tok, linear(ca, p("xa.wo"), p("xa.bo")));
    return linear(ag::layer_norm(y, p("head.ln.g"), p("head.ln.b")), p("head.w"), p("head.b"));
}

std::vector<int> ProbeModel::predict(const Matrix& image, const Matrix& text) const {
    ag::Tape tape;
    const Matrix& z = logits(tape, image, text).value();
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        Eigen::Index arg;
        z.row(r).maxCoeff(&arg);
        out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    }
    return out;
}

ProbeModel train_probe(const ProbeInputs& train, int n_classes, const ProbeConfig& cfg) {
    if (train.size() == 0) throw std::invalid_argument("train_probe: empty training set");
    Rng rng(derive_seed(cfg.seed, "probe"));
    ProbeModel probe(static_cast<int>(train.image.cols()), static_cast<int>(train.text.cols()), n_classes, cfg,
                     rng);
    AdamW::Params ap;
    ap.weight_decay = cfg.weight_decay;
    AdamW opt(probe.params(), ap);
    std::vector<std::size_t> order(train.size());
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = epoch < cfg.epochs / 2 ? cfg.lr : cfg.lr * cfg.lr_decay;
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Matrix img(static_cast<Eigen::Index>(end - start), train.image.cols());
            Matrix txt(static_cast<Eigen::Index>(end - start), train.text.cols());
            std::vector<int> labels;
            for (std::size_t k = start; k < end; ++k) {
                const auto r = static_cast<Eigen::Index>(k - start);
                img.row(r) = train.image.row(static_cast<Eigen::Index>(order[k]));
                txt.row(r) = train.text.row(static_cast<Eigen::Index>(order[k]));
                labels.push_back(train.labels[order[k]]);
            }
            ag::Tape tape;
            std::vector<Matrix> grads = probe.params().zeros_like();
            ag::Var loss = ag::cross_entropy(probe.logits(tape, img, txt, &grads), labels);
            tape.backward(loss);
            opt.step(probe.params(), grads, lr);
        }
    }
    return probe;
}

ProbeScore evaluate_probe(const ProbeModel& probe, const ProbeInputs& data) {
    const std::vector<int> pred = probe.predict(data.image, data.text);
    return {accuracy(data.labels, pred), macro_f1(data.labels, pred, probe.n_classes())};
}

ProbeInputs make_probe_inputs(const std::vector<SamplePair>& samples, const NormStats& image_norm,
                              const NormStats& text_norm, FillMode fill) {
    ProbeInputs in;
    const auto n = static_cast<Eigen::Index>(samples.size());
    in.image = Matrix::Zero(n, image_norm.mean.size());
    in.text = Matrix::Zero(n, text_norm.mean.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const SamplePair& s = samples[static_cast<std::size_t>(i)];
        const bool restored = s.image_restored || s.text_restored;
        if (fill == FillMode::zero && restored) {
            throw std::invalid_argument("zero-fill inputs requested for an already restored sample");
        }
        if (fill == FillMode::restored && (!s.image || !s.text)) {
            throw std::invalid_argument("sample '" + s.id + "' is incomplete; restore it first");
        }
        if (s.image) in.image.row(i) = normalize(*s.image, image_norm).transpose();
        if (s.text) in.text.row(i) = normalize(*s.text, text_norm).transpose();
        in.labels.push_back(s.label);
    }
    return in;
}

}  // namespace featrestore
