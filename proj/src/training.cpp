#include "featrestore/training.hpp"

#include "featrestore/log.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace featrestore {

void TrainConfig::validate() const {
    if (T < 1) throw std::invalid_argument("TrainConfig: T must be >= 1");
    if (tau < 0 || tau > T) throw std::invalid_argument("TrainConfig: need 0 <= tau <= T");
    if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be non-negative");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(lr_decay > 0.0) || !(lr_decay_at >= 0.0 && lr_decay_at <= 1.0)) {
        throw std::invalid_argument("TrainConfig: need lr_decay > 0 and lr_decay_at in [0, 1]");
    }
    model.validate();
}

double TrainConfig::lr_at(std::uint64_t step, std::uint64_t total_steps) const {
    const auto boundary = static_cast<std::uint64_t>(std::floor(lr_decay_at * static_cast<double>(total_steps)));
    return step >= boundary ? lr * lr_decay : lr;
}

AdamW::Params TrainConfig::optimizer_params() const {
    AdamW::Params p;
    p.beta1 = beta1;
    p.beta2 = beta2;
    p.epsilon = adam_eps;
    p.weight_decay = weight_decay;
    p.grad_clip = grad_clip;
    return p;
}

ModelConfig swap_roles(const ModelConfig& cfg) {
    ModelConfig out = cfg;
    std::swap(out.d_feature, out.d_cond);
    std::swap(out.n_tokens, out.cond_tokens);
    return out;
}

NoiseSchedule make_schedule(const TrainConfig& cfg) {
    return build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
}

Checkpoint init_training(const Dataset& train, TrainConfig cfg) {
    cfg.model.d_feature = train.d_text;
    cfg.model.d_cond = train.d_image;
    cfg.validate();

    Checkpoint ck;
    ck.config = cfg;
    ck.schedule = make_schedule(cfg);

    std::vector<SamplePair> complete;
    for (const auto& s : train.samples) {
        if (s.availability == Availability::complete) complete.push_back(s);
    }
    if (cfg.normalize && complete.size() >= 2) {
        ck.image_norm = fit_norm_stats(complete, Modality::image);
        ck.text_norm = fit_norm_stats(complete, Modality::text);
    } else {
        ck.image_norm = {Vector::Zero(train.d_image), Vector::Ones(train.d_image)};
        ck.text_norm = {Vector::Zero(train.d_text), Vector::Ones(train.d_text)};
    }

    Rng init_i2t(derive_seed(cfg.seed, std::uint64_t{1}));
    Rng init_t2i(derive_seed(cfg.seed, std::uint64_t{2}));
    ck.state.i2t = GatedDiT(cfg.model, init_i2t);
    ck.state.t2i = GatedDiT(swap_roles(cfg.model), init_t2i);
    ck.state.opt_i2t = AdamW(ck.state.i2t.params(), cfg.optimizer_params());
    ck.state.opt_t2i = AdamW(ck.state.t2i.params(), cfg.optimizer_params());
    ck.state.step = 0;
    ck.state.rng = Rng(derive_seed(cfg.seed, std::uint64_t{3}));
    return ck;
}

LossOptions loss_options(const TrainConfig& cfg) {
    LossOptions o;
    o.tau = cfg.tau;
    o.mutual_enabled = cfg.mutual_enabled;
    o.detach_x0 = cfg.detach_x0;
    o.mode = cfg.loss_mode;
    return o;
}

namespace {

Matrix row_of(const Vector& v) { return v.transpose(); }

/// x_t / sqrt(ab) - sqrt(1/ab - 1) * eps_hat, row i at timestep t[i].
ag::Var estimate_x0_rows(ag::Var x_t, ag::Var eps_hat, const std::vector<int>& t,
                         const NoiseSchedule& sched) {
    Vector a(static_cast<Eigen::Index>(t.size()));
    Vector b(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double ab = sched.alpha_bar_at(t[i]);
        a(static_cast<Eigen::Index>(i)) = 1.0 / std::sqrt(ab);
        b(static_cast<Eigen::Index>(i)) = -std::sqrt(1.0 / ab - 1.0);
    }
    return ag::add(ag::scale_rows(x_t, a), ag::scale_rows(eps_hat, b));
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

}  // namespace

ag::Var build_batch_loss(ag::Tape& tape, const NoisePredictor& i2t, const NoisePredictor& t2i,
                         const LossBatch& batch, const NoiseSchedule& sched, const LossOptions& opts,
                         std::vector<Matrix>* grads_i2t, std::vector<Matrix>* grads_t2i,
                         LossBreakdown* breakdown) {
    const Eigen::Index B = batch.image0.rows();
    if (B == 0 || batch.text0.rows() != B || static_cast<Eigen::Index>(batch.t.size()) != B) {
        throw std::invalid_argument("loss batch is empty or inconsistent");
    }
    const double d_img = static_cast<double>(batch.image0.cols());
    const double d_txt = static_cast<double>(batch.text0.cols());
    const double denom_img = static_cast<double>(B) * d_img;
    const double denom_txt = static_cast<double>(B) * d_txt;

    Matrix xt_img = forward_diffuse_rows(batch.image0, batch.eps_img, batch.t, sched);
    Matrix xt_txt = forward_diffuse_rows(batch.text0, batch.eps_txt, batch.t, sched);
    ag::Var v_xt_img = tape.constant(xt_img);
    ag::Var v_xt_txt = tape.constant(xt_txt);

    // Base denoising terms conditioned on the ground-truth opposite modality.
    ag::Var pred_txt = i2t.predict(v_xt_txt, batch.t, tape.constant(batch.image0), grads_i2t);
    ag::Var pred_img = t2i.predict(v_xt_img, batch.t, tape.constant(batch.text0), grads_t2i);
    ag::Var base_i2t = ag::scale(ag::sum_squared_error(pred_txt, batch.eps_txt), 1.0 / denom_txt);
    ag::Var base_t2i = ag::scale(ag::sum_squared_error(pred_img, batch.eps_img), 1.0 / denom_img);

    LossBreakdown bd;
    bd.base_i2t = base_i2t.value()(0, 0);
    bd.base_t2i = base_t2i.value()(0, 0);

    ag::Var total{};
    const bool include_base = opts.mode == LossMode::total;
    const bool include_mutual = opts.mode == LossMode::mutual_only || opts.mutual_enabled;
    if (include_base) {
        total = ag::add(base_i2t, base_t2i);
    }

    std::vector<Eigen::Index> sel;
    if (include_mutual) {
        for (Eigen::Index i = 0; i < B; ++i) {
            if (batch.t[static_cast<std::size_t>(i)] < opts.tau) sel.push_back(i);
        }
    }
    if (!sel.empty()) {
        std::vector<int> t_sel;
        for (auto i : sel) t_sel.push_back(batch.t[static_cast<std::size_t>(i)]);

        ag::Var x0_img = estimate_x0_rows(v_xt_img, pred_img, batch.t, sched);
        ag::Var x0_txt = estimate_x0_rows(v_xt_txt, pred_txt, batch.t, sched);
        ag::Var cond_for_i2t = ag::gather_rows(x0_img, sel);
        ag::Var cond_for_t2i = ag::gather_rows(x0_txt, sel);
        if (opts.detach_x0) {
            cond_for_i2t = tape.constant(cond_for_i2t.value());
            cond_for_t2i = tape.constant(cond_for_t2i.value());
        }
        ag::Var m_txt = i2t.predict(tape.constant(gather(xt_txt, sel)), t_sel, cond_for_i2t, grads_i2t);
        ag::Var m_img = t2i.predict(tape.constant(gather(xt_img, sel)), t_sel, cond_for_t2i, grads_t2i);
        ag::Var mutual =
            ag::add(ag::scale(ag::sum_squared_error(m_txt, gather(batch.eps_txt, sel)), 1.0 / denom_txt),
                    ag::scale(ag::sum_squared_error(m_img, gather(batch.eps_img, sel)), 1.0 / denom_img));
        bd.mutual = mutual.value()(0, 0);
        bd.mutual_count = sel.size();
        total = include_base ? ag::add(total, mutual) : mutual;
    }
    if (total.tape == nullptr) {
        // mutual_only with no pair below tau: a zero loss with no gradient.
        total = tape.constant(Matrix::Zero(1, 1));
    }
    bd.total = total.value()(0, 0);
    if (breakdown != nullptr) *breakdown = bd;
    return total;
}

double base_loss(const NoisePredictor& model, const Vector& x0, const Vector& cond, int t,
                 const Vector& eps, const NoiseSchedule& sched) {
    ag::Tape tape;
    Vector xt = forward_diffuse(x0, eps, t, sched);
    ag::Var pred = model.predict(tape.constant(row_of(xt)), {t}, tape.constant(row_of(cond)));
    return (pred.value().row(0).transpose() - eps).squaredNorm() / static_cast<double>(eps.size());
}

namespace {

LossBatch single_batch(const SamplePair& pair, int t, const Vector& eps_img, const Vector& eps_txt) {
    if (!pair.image || !pair.text) {
        throw std::invalid_argument("loss needs a complete pair");
    }
    LossBatch b;
    b.image0 = row_of(*pair.image);
    b.text0 = row_of(*pair.text);
    b.eps_img = row_of(eps_img);
    b.eps_txt = row_of(eps_txt);
    b.t = {t};
    return b;
}

}  // namespace

double mutual_loss(const NoisePredictor& i2t, const NoisePredictor& t2i, const SamplePair& pair, int t,
                   const Vector& eps_img, const Vector& eps_txt, const NoiseSchedule& sched, int tau) {
    if (t >= tau) {
        throw ContractError("mutual_loss called with t=" + std::to_string(t) + " >= tau=" +
                            std::to_string(tau));
    }
    ag::Tape tape;
    LossOptions o;
    o.tau = tau;
    o.mode = LossMode::mutual_only;
    LossBreakdown bd;
    build_batch_loss(tape, i2t, t2i, single_batch(pair, t, eps_img, eps_txt), sched, o, nullptr, nullptr, &bd);
    return bd.mutual;
}

double mutual_loss(const TrainState& state, const SamplePair& pair, int t, const Vector& eps_img,
                   const Vector& eps_txt, const NoiseSchedule& sched, int tau) {
    return mutual_loss(state.i2t, state.t2i, pair, t, eps_img, eps_txt, sched, tau);
}

double total_loss(const NoisePredictor& i2t, const NoisePredictor& t2i, const SamplePair& pair, int t,
                  const Vector& eps_img, const Vector& eps_txt, const NoiseSchedule& sched,
                  const TrainConfig& cfg) {
    ag::Tape tape;
    ag::Var loss = build_batch_loss(tape, i2t, t2i, single_batch(pair, t, eps_img, eps_txt), sched,
                                    loss_options(cfg), nullptr, nullptr);
    return loss.value()(0, 0);
}

double total_loss(const TrainState& state, const SamplePair& pair, int t, const Vector& eps_img,
                  const Vector& eps_txt, const NoiseSchedule& sched, const TrainConfig& cfg) {
    return total_loss(state.i2t, state.t2i, pair, t, eps_img, eps_txt, sched, cfg);
}

LossReport train_step(TrainState& state, const std::vector<const SamplePair*>& batch,
                      const TrainConfig& cfg, const NoiseSchedule& sched, std::optional<double> lr) {
    if (batch.empty()) {
        throw std::invalid_argument("train_step needs a non-empty batch");
    }
    LossBatch lb;
    lb.image0 = stack(batch, Modality::image);
    lb.text0 = stack(batch, Modality::text);
    const Eigen::Index B = lb.image0.rows();
    lb.eps_img.resize(B, lb.image0.cols());
    lb.eps_txt.resize(B, lb.text0.cols());
    lb.t.resize(static_cast<std::size_t>(B));
    for (Eigen::Index i = 0; i < B; ++i) {
        lb.t[static_cast<std::size_t>(i)] = static_cast<int>(state.rng.uniform_int(static_cast<std::uint64_t>(sched.T)));
        for (Eigen::Index j = 0; j < lb.eps_img.cols(); ++j) lb.eps_img(i, j) = state.rng.normal();
        for (Eigen::Index j = 0; j < lb.eps_txt.cols(); ++j) lb.eps_txt(i, j) = state.rng.normal();
    }

    std::vector<Matrix> g_i2t = state.i2t.params().zeros_like();
    std::vector<Matrix> g_t2i = state.t2i.params().zeros_like();
    LossReport report;
    {
        ag::Tape tape;
        ag::Var loss = build_batch_loss(tape, state.i2t, state.t2i, lb, sched, loss_options(cfg), &g_i2t,
                                        &g_t2i, &report.loss);
        if (!std::isfinite(report.loss.total)) {
            std::ostringstream os;
            os << "non-finite loss at step " << state.step << ": base_i2t=" << report.loss.base_i2t
               << " base_t2i=" << report.loss.base_t2i << " mutual=" << report.loss.mutual
               << " (mutual pairs " << report.loss.mutual_count << "/" << B << ")";
            throw TrainingError(os.str());
        }
        tape.backward(loss);
    }
    report.lr = lr.value_or(cfg.lr);
    report.grad_norm_i2t = state.opt_i2t.step(state.i2t.params(), g_i2t, report.lr);
    report.grad_norm_t2i = state.opt_t2i.step(state.t2i.params(), g_t2i, report.lr);
    report.step = state.step;
    ++state.step;
    return report;
}

std::uint64_t steps_per_epoch(std::size_t n_pairs, int batch_size) {
    return (n_pairs + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

std::vector<LossReport> run_training(Checkpoint& ck, const Dataset& train, std::optional<std::uint64_t> max_steps,
                                     const StepCallback& on_step) {
    const TrainConfig& cfg = ck.config;
    std::vector<SamplePair> pairs;
    for (const auto& s : train.samples) {
        if (s.availability != Availability::complete) continue;
        SamplePair p = s;
        p.image = normalize(*s.image, ck.image_norm);
        p.text = normalize(*s.text, ck.text_norm);
        pairs.push_back(std::move(p));
    }
    std::vector<LossReport> log;
    if (pairs.empty()) {
        return log;
    }
    const std::uint64_t per_epoch = steps_per_epoch(pairs.size(), cfg.batch_size);
    const std::uint64_t total = per_epoch * static_cast<std::uint64_t>(cfg.epochs);
    std::uint64_t end = total;
    if (max_steps) end = std::min(end, *max_steps);

    std::vector<std::size_t> order(pairs.size());
    std::uint64_t cached_epoch = std::numeric_limits<std::uint64_t>::max();
    while (ck.state.step < end) {
        const std::uint64_t epoch = ck.state.step / per_epoch;
        const std::uint64_t offset = ck.state.step % per_epoch;
        if (epoch != cached_epoch) {
            std::iota(order.begin(), order.end(), 0);
            Rng shuffler(derive_seed(cfg.seed ^ 0x5eedULL, epoch));
            shuffler.shuffle(order);
            cached_epoch = epoch;
        }
        const std::size_t lo = static_cast<std::size_t>(offset) * static_cast<std::size_t>(cfg.batch_size);
        const std::size_t hi = std::min(pairs.size(), lo + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const SamplePair*> batch;
        for (std::size_t i = lo; i < hi; ++i) batch.push_back(&pairs[order[i]]);
        LossReport r = train_step(ck.state, batch, cfg, ck.schedule, cfg.lr_at(ck.state.step, total));
        if (on_step) on_step(r);
        log.push_back(r);
    }
    return log;
}

Checkpoint train(const Dataset& train, const TrainConfig& cfg, std::vector<LossReport>* log,
                 const StepCallback& on_step) {
    Checkpoint ck = init_training(train, cfg);
    auto reports = run_training(ck, train, std::nullopt, on_step);
    if (log != nullptr) *log = std::move(reports);
    return ck;
}

}  // namespace featrestore
