#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "himnet/data.hpp"
#include "himnet/metaparams.hpp"
#include "himnet/tensor.hpp"

namespace himnet {

// Runtime switches matching the ablated variants: all-ones queries for the
// embedding flags, shared randomly-initialized parameters for the meta flags.
struct AblationFlags {
    bool no_et = false;
    bool no_es = false;
    bool no_est = false;
    bool no_tmp = false;
    bool no_smp = false;
    bool no_stmp = false;

    bool any() const { return no_et || no_es || no_est || no_tmp || no_smp || no_stmp; }
    std::string to_string() const;
    static AblationFlags parse(const std::string& csv);
};

struct HimNetConfig {
    long n_nodes = 0;
    long t_in = 12;
    long t_out = 12;
    long hidden = 64;
    // Graph convolution order: kernels carry order+1 taps for powers 0..order
    // of the adaptive adjacency, with power 0 being the identity.
    long order = 1;
    long dim_tod = 8;
    long dim_dow = 8;
    long dim_s = 16;
    long dim_st = 16;
    long steps_per_day = 288;
    long days_per_week = 7;
    bool meta_bias = true;
    AblationFlags ablation;

    long dim_t() const { return dim_tod + dim_dow; }
    long channels() const { return 1 + hidden; }
    long kernel_numel() const { return (order + 1) * channels() * hidden; }
    // Flattened size of one full GCRU parameter set (3 gates).
    long param_set_size() const {
        return 3 * kernel_numel() + (meta_bias ? 3 * hidden : 0);
    }
    void validate() const;
};

// The published METRLA benchmark setting: 207 sensors, hourly in/out horizons
// at 5-minute steps, hidden 64, 16-dim embeddings (time split 8/8), two-tap
// kernels.
HimNetConfig metrla_config();

// One gate's graph-convolution parameters with context dims broadcastable
// against (B, N): kernels are order+1 tensors [Bw x Nw x C x h].
struct GateParams {
    std::vector<Tensor> kernels;
    Tensor bias;  // [Bw x Nw x h]
};

struct CellParams {
    GateParams reset, update, cand;
};

// Slices a flat generated parameter set [Bw*Nw x S] into per-gate views.
// bias_leaf supplies the [3h] shared biases when they are not meta-generated.
CellParams split_cell_params(const Tensor& flat, long ctx_b, long ctx_n,
                             const HimNetConfig& cfg, const Tensor* bias_leaf);

// Z = sum_k adj^k . U . W_k + b with adj^0 = I.
Tensor graph_conv(const Tensor& u, const Tensor& adj, const std::vector<Tensor>& kernels,
                  const Tensor& bias);

// One GCRU update: gates from graph convolutions over [x, H] and the
// reset-modulated candidate.
Tensor gcru_step(const Tensor& x_t, const Tensor& h_prev, const CellParams& params,
                 const Tensor& adj);

// A materialized minibatch: normalized history, raw targets, last-step time
// indices per sample.
struct Batch {
    long b = 0, t_in = 0, t_out = 0, n = 0;
    std::vector<double> x_norm;  // [B x T x N]
    std::vector<double> y_raw;   // [B x T' x N]
    std::vector<long> tod_idx;   // [B]
    std::vector<long> dow_idx;   // [B]
};

Batch make_batch(const SampleSet& samples, const std::vector<long>& ids);

// All trainable leaves, keyed by stable names used in checkpoints.
class ModelState {
public:
    ModelState() = default;

    static ModelState init(const HimNetConfig& cfg, std::uint64_t seed);

    const HimNetConfig& config() const { return cfg_; }
    const std::vector<std::string>& names() const { return order_; }
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;

    long total_params() const;
    std::vector<std::pair<std::string, long>> param_sizes() const;
    void zero_grad();

    ModelState clone() const;  // deep copy of values

    // Rebuild from checkpoint contents.
    static ModelState from_tensors(const HimNetConfig& cfg,
                                   const std::map<std::string, Tensor>& tensors);

private:
    HimNetConfig cfg_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;

    void add_param(const std::string& name, Tensor t);
};

// Temporal and spatial meta-encoders run in parallel over the static
// adaptive graph; their final hidden states are summed. Returns H [B x N x h].
Tensor encode_hidden(const ModelState& state, const Batch& batch);

// Full forward pass: encode, ST-mixed meta-decoder over the time-varying
// graph, output head, de-normalization. Returns predictions [B x T' x N] in
// original units.
Tensor forward_predictions(const ModelState& state, const Batch& batch, const NormStats& stats);

}  // namespace himnet
