#include "himnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "himnet/errors.hpp"

namespace himnet {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("train config: lr must be positive");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train config: patience must be >= 1");
    if (lr_decay <= 0) throw ConfigError("train config: lr_decay must be positive");
    if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
    if (adam_eps <= 0) throw ConfigError("train config: adam_eps must be positive");
    if (grad_clip <= 0) throw ConfigError("train config: grad_clip must be positive");
    if (huber_delta <= 0) throw ConfigError("train config: huber_delta must be positive");
    for (size_t i = 1; i < milestones.size(); ++i)
        if (milestones[i] <= milestones[i - 1])
            throw ConfigError("train config: milestones must be strictly ascending");
}

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> target_mask(const std::vector<double>& target, bool mask_zeros) {
    std::vector<std::uint8_t> mask(target.size(), 1);
    if (mask_zeros)
        for (size_t i = 0; i < target.size(); ++i)
            if (target[i] == 0.0) mask[i] = 0;
    return mask;
}

Tensor mae_loss(const Tensor& pred, const std::vector<double>& target, bool mask_zeros) {
    return masked_mae(pred, target, target_mask(target, mask_zeros));
}

Tensor huber_loss(const Tensor& pred, const std::vector<double>& target, bool mask_zeros,
                  double delta) {
    return masked_huber(pred, target, target_mask(target, mask_zeros), delta);
}

EvalReport metrics(const std::vector<double>& pred, const std::vector<double>& target, long b,
                   long t_out, long n, bool mask_zeros) {
    if (pred.size() != target.size() ||
        static_cast<long>(pred.size()) != b * t_out * n)
        throw ShapeError("metrics: prediction/target sizes disagree with batch shape");
    std::vector<std::uint8_t> mask = target_mask(target, mask_zeros);

    EvalReport report;
    report.per_horizon.resize(t_out);
    std::vector<double> abs_sum(t_out, 0.0), sq_sum(t_out, 0.0), ape_sum(t_out, 0.0);
    std::vector<long> counts(t_out, 0);
    for (long i = 0; i < b; ++i)
        for (long t = 0; t < t_out; ++t)
            for (long j = 0; j < n; ++j) {
                long idx = (i * t_out + t) * n + j;
                if (!mask[idx]) continue;
                double e = pred[idx] - target[idx];
                abs_sum[t] += std::abs(e);
                sq_sum[t] += e * e;
                ape_sum[t] += std::abs(e) / std::abs(target[idx]);
                counts[t]++;
            }
    double tot_abs = 0.0, tot_sq = 0.0, tot_ape = 0.0;
    long tot_cnt = 0;
    for (long t = 0; t < t_out; ++t) {
        if (counts[t] == 0)
            throw TrainingError("metrics: horizon " + std::to_string(t + 1) +
                                " has no valid (unmasked) targets");
        report.per_horizon[t].mae = abs_sum[t] / counts[t];
        report.per_horizon[t].rmse = std::sqrt(sq_sum[t] / counts[t]);
        report.per_horizon[t].mape = 100.0 * ape_sum[t] / counts[t];
        tot_abs += abs_sum[t];
        tot_sq += sq_sum[t];
        tot_ape += ape_sum[t];
        tot_cnt += counts[t];
    }
    report.average.mae = tot_abs / tot_cnt;
    report.average.rmse = std::sqrt(tot_sq / tot_cnt);
    report.average.mape = 100.0 * tot_ape / tot_cnt;
    return report;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

double lr_at_epoch(const TrainConfig& cfg, long epoch) {
    long hit = 0;
    for (long m : cfg.milestones)
        if (m < epoch) ++hit;
    return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(hit));
}

double clip_gradients(ModelState& state, double max_norm) {
    double sq = 0.0;
    for (const auto& name : state.names()) {
        const auto& g = state.param(name).grad();
        for (double v : g) sq += v * v;
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        double scale = max_norm / norm;
        for (const auto& name : state.names()) {
            auto node = state.param(name).node();
            for (auto& v : node->grad) v *= scale;
        }
    }
    return norm;
}

AdamOptimizer::AdamOptimizer(const ModelState& state, double weight_decay, double eps)
    : eps_(eps), weight_decay_(weight_decay) {
    for (const auto& name : state.names()) {
        size_t n = static_cast<size_t>(state.param(name).numel());
        m_[name].assign(n, 0.0);
        v_[name].assign(n, 0.0);
    }
}

void AdamOptimizer::step(ModelState& state, double lr) {
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& name : state.names()) {
        auto node = state.param(name).node();
        node->ensure_grad();
        auto& m = m_[name];
        auto& v = v_[name];
        for (size_t i = 0; i < node->value.size(); ++i) {
            double g = node->grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            double mhat = m[i] / c1;
            double vhat = v[i] / c2;
            node->value[i] -= lr * weight_decay_ * node->value[i];  // decoupled decay
            node->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::restore(long t, std::map<std::string, std::vector<double>> m,
                            std::map<std::string, std::vector<double>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

Tensor loss_for(const TrainConfig& cfg, const Tensor& pred, const std::vector<double>& target) {
    return cfg.loss == LossKind::Mae
               ? mae_loss(pred, target, cfg.mask_zeros)
               : huber_loss(pred, target, cfg.mask_zeros, cfg.huber_delta);
}

void check_pool_economy(const HimNetConfig& cfg, const DataSplit& split) {
    long total_steps = split.train.dataset().n_steps;
    long budget = total_steps * cfg.n_nodes;
    auto check = [&](long k, const char* what) {
        if (k >= budget)
            throw ConfigError(std::string("pool '") + what + "' has k=" + std::to_string(k) +
                              " candidates, not small against T*N=" + std::to_string(budget));
    };
    if (!cfg.ablation.no_tmp) check(cfg.dim_t(), "temporal");
    if (!cfg.ablation.no_smp) check(cfg.dim_s, "spatial");
    if (!cfg.ablation.no_stmp) check(cfg.dim_st, "st_mixed");
}

}  // namespace

TrainResult train(const DataSplit& split, const HimNetConfig& model_cfg, const TrainConfig& cfg) {
    cfg.validate();
    model_cfg.validate();
    if (split.train.empty() || split.val.empty() || split.test.empty())
        throw ConfigError("train: every partition must be non-empty");
    check_pool_economy(model_cfg, split);

    ModelState state = ModelState::init(model_cfg, cfg.seed);
    AdamOptimizer adam(state, cfg.weight_decay, cfg.adam_eps);
    Rng shuffle_rng(cfg.seed ^ 0x517cc1b727220a95ULL);
    const NormStats stats = split.train.stats();

    TrainResult result;
    result.stats = stats;
    result.best_state = state.clone();
    result.best_val_mae = std::numeric_limits<double>::infinity();
    EarlyStopper stopper(cfg.patience);

    std::vector<long> ids(split.train.size());
    std::iota(ids.begin(), ids.end(), 0);

    for (long epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double lr = lr_at_epoch(cfg, epoch);
        shuffle_rng.shuffle(ids);

        double loss_sum = 0.0;
        long steps = 0;
        for (long off = 0; off < static_cast<long>(ids.size()); off += cfg.batch_size) {
            long hi = std::min<long>(off + cfg.batch_size, ids.size());
            std::vector<long> chunk(ids.begin() + off, ids.begin() + hi);
            Batch batch = make_batch(split.train, chunk);
            state.zero_grad();
            Tensor pred = forward_predictions(state, batch, stats);
            Tensor loss = loss_for(cfg, pred, batch.y_raw);
            double lv = loss.item();
            if (!std::isfinite(lv))
                throw TrainingError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", step " + std::to_string(steps + 1));
            backward(loss);
            clip_gradients(state, cfg.grad_clip);
            adam.step(state, lr);
            loss_sum += lv;
            ++steps;
        }

        EvalReport val = evaluate(state, split.val, cfg.batch_size, cfg.mask_zeros);
        EpochRecord rec{epoch, loss_sum / std::max<long>(steps, 1), val.average.mae, lr};
        result.history.push_back(rec);
        result.epochs_run = epoch;

        if (stopper.observe(val.average.mae)) {
            result.best_val_mae = val.average.mae;
            result.best_epoch = epoch;
            result.best_state = state.clone();
        } else if (stopper.should_stop()) {
            break;
        }
    }
    result.final_adam = adam;
    result.rng_state = shuffle_rng.serialize();
    return result;
}

EvalReport evaluate(const ModelState& state, const SampleSet& samples, long batch_size,
                    bool mask_zeros) {
    if (samples.empty()) throw ConfigError("evaluate: empty partition");
    long n = samples.size();
    long t_out = samples.t_out(), nodes = samples.n_nodes();
    std::vector<double> pred(n * t_out * nodes), target(n * t_out * nodes);
    const NormStats stats = samples.stats();
    for (long off = 0; off < n; off += batch_size) {
        long hi = std::min(off + batch_size, n);
        std::vector<long> ids(hi - off);
        std::iota(ids.begin(), ids.end(), off);
        Batch batch = make_batch(samples, ids);
        Tensor out = forward_predictions(state, batch, stats);
        std::copy(out.data().begin(), out.data().end(), pred.begin() + off * t_out * nodes);
        std::copy(batch.y_raw.begin(), batch.y_raw.end(), target.begin() + off * t_out * nodes);
    }
    return metrics(pred, target, n, t_out, nodes, mask_zeros);
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const HimNetConfig& cfg, double tolerance, std::uint64_t seed,
                           const std::string& corrupt_leaf) {
    cfg.validate();
    ModelState state = ModelState::init(cfg, seed);
    Rng rng(seed ^ 0x2545f4914f6cdd1dULL);

    Batch batch;
    batch.b = 2;
    batch.t_in = cfg.t_in;
    batch.t_out = cfg.t_out;
    batch.n = cfg.n_nodes;
    batch.x_norm.resize(batch.b * batch.t_in * batch.n);
    for (auto& v : batch.x_norm) v = rng.normal();
    batch.y_raw.resize(batch.b * batch.t_out * batch.n);
    // Targets sit well away from the model's early outputs so the MAE kink
    // never lands inside a finite-difference stencil.
    for (auto& v : batch.y_raw) v = rng.uniform_in(2.0, 5.0);
    batch.tod_idx.resize(batch.b);
    batch.dow_idx.resize(batch.b);
    for (long i = 0; i < batch.b; ++i) {
        batch.tod_idx[i] = rng.index(cfg.steps_per_day);
        batch.dow_idx[i] = rng.index(cfg.days_per_week);
    }
    NormStats stats{0.5, 1.5};

    auto loss_value = [&]() {
        Tensor pred = forward_predictions(state, batch, stats);
        return mae_loss(pred, batch.y_raw, false).item();
    };

    // Analytic pass.
    state.zero_grad();
    {
        Tensor pred = forward_predictions(state, batch, stats);
        Tensor loss = mae_loss(pred, batch.y_raw, false);
        backward(loss);
    }
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& name : state.names()) analytic[name] = state.param(name).grad();
    if (!corrupt_leaf.empty()) {
        auto it = analytic.find(corrupt_leaf);
        if (it == analytic.end())
            throw ConfigError("grad_check: no leaf named '" + corrupt_leaf + "'");
        for (auto& g : it->second) g += 0.05;
    }

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& name : state.names()) {
        GradCheckEntry entry;
        entry.leaf = name;
        auto& values = state.param(name).node()->value;
        const auto& a = analytic[name];
        for (size_t i = 0; i < values.size(); ++i) {
            double saved = values[i];
            double h = 1e-5 * std::max(1.0, std::abs(saved));
            values[i] = saved + h;
            double lp = loss_value();
            values[i] = saved - h;
            double lm = loss_value();
            values[i] = saved;
            double fd = (lp - lm) / (2.0 * h);
            double denom = std::max(std::abs(a[i]), std::abs(fd));
            double rel;
            if (denom < 1e-5) {
                // both effectively zero; require absolute agreement
                rel = std::abs(a[i] - fd) <= 1e-8 ? 0.0 : 1.0;
            } else {
                rel = std::abs(a[i] - fd) / denom;
            }
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            entry.checked++;
        }
        entry.pass = entry.max_rel_err < tolerance;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace himnet
