#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "himnet/data.hpp"
#include "himnet/model.hpp"
#include "himnet/tensor.hpp"

namespace himnet {

enum class LossKind { Mae, Huber };

struct TrainConfig {
    double lr = 0.001;
    long batch_size = 16;
    long max_epochs = 200;
    long patience = 20;
    std::vector<long> milestones;  // 1-based epochs, ascending
    double lr_decay = 0.1;
    double weight_decay = 0.0;
    double adam_eps = 0.001;
    double grad_clip = 5.0;
    LossKind loss = LossKind::Mae;
    double huber_delta = 1.0;
    std::uint64_t seed = 1;
    // Benchmark datasets encode missing readings as zero; synthetic data has
    // no sentinel, so the caller flips this off there.
    bool mask_zeros = true;

    void validate() const;
};

struct HorizonMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
};

struct EvalReport {
    std::vector<HorizonMetrics> per_horizon;
    HorizonMetrics average;  // pooled over all horizons
};

// Shared mask predicate: loss and metrics must agree on which entries count.
std::vector<std::uint8_t> target_mask(const std::vector<double>& target, bool mask_zeros);

// Masked mean absolute error of de-normalized predictions against raw
// targets; the averaging denominator is the masked count.
Tensor mae_loss(const Tensor& pred, const std::vector<double>& target, bool mask_zeros);
Tensor huber_loss(const Tensor& pred, const std::vector<double>& target, bool mask_zeros,
                  double delta);

// Masked MAE / RMSE / MAPE per horizon step plus the pooled average.
EvalReport metrics(const std::vector<double>& pred, const std::vector<double>& target, long b,
                   long t_out, long n, bool mask_zeros);

double lr_at_epoch(const TrainConfig& cfg, long epoch);  // 1-based

// Strict-improvement early stopping on validation MAE.
class EarlyStopper {
public:
    explicit EarlyStopper(long patience) : patience_(patience) {}

    // Returns true when the observed value improves on the best so far.
    bool observe(double val) {
        if (val < best_) {
            best_ = val;
            bad_ = 0;
            return true;
        }
        ++bad_;
        return false;
    }

    bool should_stop() const { return bad_ >= patience_; }
    double best() const { return best_; }

private:
    double best_ = std::numeric_limits<double>::infinity();
    long bad_ = 0;
    long patience_;
};

// Global gradient-norm clipping; returns the pre-clip norm.
double clip_gradients(ModelState& state, double max_norm);

// Adam with decoupled weight decay.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(const ModelState& state, double weight_decay, double eps);

    void step(ModelState& state, double lr);

    long step_count() const { return t_; }
    const std::map<std::string, std::vector<double>>& moment1() const { return m_; }
    const std::map<std::string, std::vector<double>>& moment2() const { return v_; }
    void restore(long t, std::map<std::string, std::vector<double>> m,
                 std::map<std::string, std::vector<double>> v);

private:
    std::map<std::string, std::vector<double>> m_, v_;
    long t_ = 0;
    double beta1_ = 0.9, beta2_ = 0.999;
    double eps_ = 1e-3, weight_decay_ = 0.0;
};

struct EpochRecord {
    long epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    ModelState best_state;
    double best_val_mae = 0.0;
    long best_epoch = 0;
    long epochs_run = 0;
    std::vector<EpochRecord> history;
    NormStats stats;
    AdamOptimizer final_adam;
    std::string rng_state;
};

TrainResult train(const DataSplit& split, const HimNetConfig& model_cfg, const TrainConfig& cfg);

EvalReport evaluate(const ModelState& state, const SampleSet& samples, long batch_size,
                    bool mask_zeros);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string leaf;
    double max_rel_err = 0.0;
    long checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = true;
};

// Compares analytic gradients of a random-batch MAE loss against central
// finite differences on every element of every trainable leaf. corrupt_leaf
// perturbs that leaf's analytic gradient first, for harness sanity checks.
GradCheckReport grad_check(const HimNetConfig& cfg, double tolerance, std::uint64_t seed,
                           const std::string& corrupt_leaf = "");

}  // namespace himnet
