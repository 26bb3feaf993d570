#include "himnet/model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

#include "himnet/embeddings.hpp"
#include "himnet/errors.hpp"

namespace himnet {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string AblationFlags::to_string() const {
    std::string out;
    auto append = [&out](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ",";
        out += name;
    };
    append(no_et, "no_Et");
    append(no_es, "no_Es");
    append(no_est, "no_Est");
    append(no_tmp, "no_TMP");
    append(no_smp, "no_SMP");
    append(no_stmp, "no_STMP");
    return out;
}

AblationFlags AblationFlags::parse(const std::string& csv) {
    AblationFlags f;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t a = tok.find_first_not_of(" \t");
        size_t b = tok.find_last_not_of(" \t");
        if (a == std::string::npos) continue;
        std::string t = tok.substr(a, b - a + 1);
        if (t == "no_Et")
            f.no_et = true;
        else if (t == "no_Es")
            f.no_es = true;
        else if (t == "no_Est")
            f.no_est = true;
        else if (t == "no_TMP")
            f.no_tmp = true;
        else if (t == "no_SMP")
            f.no_smp = true;
        else if (t == "no_STMP")
            f.no_stmp = true;
        else
            throw ConfigError("unknown ablation flag '" + t +
                              "' (expected no_Et, no_Es, no_Est, no_TMP, no_SMP, no_STMP)");
    }
    return f;
}

void HimNetConfig::validate() const {
    auto positive = [](long v, const char* what) {
        if (v < 1) throw ConfigError(std::string("model config: ") + what + " must be >= 1");
    };
    positive(n_nodes, "n_nodes");
    positive(t_in, "t_in");
    positive(t_out, "t_out");
    positive(hidden, "hidden");
    positive(dim_tod, "dim_tod");
    positive(dim_dow, "dim_dow");
    positive(dim_s, "dim_s");
    positive(dim_st, "dim_st");
    positive(steps_per_day, "steps_per_day");
    positive(days_per_week, "days_per_week");
    if (order < 0) throw ConfigError("model config: order must be >= 0");
}

HimNetConfig metrla_config() {
    HimNetConfig cfg;
    cfg.n_nodes = 207;
    cfg.t_in = 12;
    cfg.t_out = 12;
    cfg.hidden = 64;
    cfg.order = 1;
    cfg.dim_tod = 8;
    cfg.dim_dow = 8;
    cfg.dim_s = 16;
    cfg.dim_st = 16;
    cfg.steps_per_day = 288;
    return cfg;
}

// ---------------------------------------------------------------------------
// Parameter slicing
// ---------------------------------------------------------------------------

CellParams split_cell_params(const Tensor& flat, long ctx_b, long ctx_n,
                             const HimNetConfig& cfg, const Tensor* bias_leaf) {
    long s = cfg.param_set_size();
    long rows = ctx_b * ctx_n;
    if (flat.numel() != rows * s)
        throw ShapeError("split_cell_params: flat parameter set " + shape_str(flat.shape()) +
                         " does not match context " + std::to_string(ctx_b) + " x " +
                         std::to_string(ctx_n) + " with S=" + std::to_string(s));
    Tensor f2 = reshape(flat, {rows, s});
    long h = cfg.hidden, c = cfg.channels(), taps = cfg.order + 1;
    long per_tap = c * h;
    long per_gate = taps * per_tap;

    CellParams out;
    GateParams* gates[3] = {&out.reset, &out.update, &out.cand};
    for (int g = 0; g < 3; ++g) {
        for (long k = 0; k < taps; ++k) {
            long lo = g * per_gate + k * per_tap;
            gates[g]->kernels.push_back(
                reshape(slice_last(f2, lo, lo + per_tap), {ctx_b, ctx_n, c, h}));
        }
        if (cfg.meta_bias) {
            long lo = 3 * per_gate + g * h;
            gates[g]->bias = reshape(slice_last(f2, lo, lo + h), {ctx_b, ctx_n, h});
        } else {
            if (bias_leaf == nullptr)
                throw ShapeError("split_cell_params: bias leaf required when meta_bias is off");
            gates[g]->bias = reshape(slice_last(*bias_leaf, g * h, (g + 1) * h), {1, 1, h});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph convolution and the GCRU cell
// ---------------------------------------------------------------------------

namespace {

std::vector<Tensor> graph_powers(const Tensor& u, const Tensor& adj, long order) {
    std::vector<Tensor> powers{u};
    for (long k = 1; k <= order; ++k) powers.push_back(graph_matmul(adj, powers.back()));
    return powers;
}

Tensor conv_from_powers(const std::vector<Tensor>& powers, const GateParams& gate) {
    Tensor acc = ctx_matmul(powers[0], gate.kernels[0]);
    for (size_t k = 1; k < powers.size(); ++k)
        acc = add(acc, ctx_matmul(powers[k], gate.kernels[k]));
    return ctx_add(acc, gate.bias);
}

}  // namespace

Tensor graph_conv(const Tensor& u, const Tensor& adj, const std::vector<Tensor>& kernels,
                  const Tensor& bias) {
    if (kernels.empty()) throw ShapeError("graph_conv: need at least one kernel tap");
    GateParams gate{kernels, bias};
    return conv_from_powers(graph_powers(u, adj, static_cast<long>(kernels.size()) - 1), gate);
}

Tensor gcru_step(const Tensor& x_t, const Tensor& h_prev, const CellParams& params,
                 const Tensor& adj) {
    long order = static_cast<long>(params.reset.kernels.size()) - 1;
    Tensor u1 = concat_last(x_t, h_prev);
    auto p1 = graph_powers(u1, adj, order);
    Tensor r = sigmoid(conv_from_powers(p1, params.reset));
    Tensor u = sigmoid(conv_from_powers(p1, params.update));
    Tensor u2 = concat_last(x_t, mul(r, h_prev));
    Tensor c = tanh_act(conv_from_powers(graph_powers(u2, adj, order), params.cand));
    Tensor h_next = add(mul(u, h_prev), mul(affine(u, -1.0, 1.0), c));
#ifndef NDEBUG
    for (double v : h_next.data()) assert(std::isfinite(v));
#endif
    return h_next;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

Batch make_batch(const SampleSet& samples, const std::vector<long>& ids) {
    Batch batch;
    batch.b = static_cast<long>(ids.size());
    batch.t_in = samples.t_in();
    batch.t_out = samples.t_out();
    batch.n = samples.n_nodes();
    batch.x_norm.resize(batch.b * batch.t_in * batch.n);
    batch.y_raw.resize(batch.b * batch.t_out * batch.n);
    batch.tod_idx.resize(batch.b);
    batch.dow_idx.resize(batch.b);
    for (long i = 0; i < batch.b; ++i) {
        samples.fill_x_norm(ids[i], &batch.x_norm[i * batch.t_in * batch.n]);
        samples.fill_y_raw(ids[i], &batch.y_raw[i * batch.t_out * batch.n]);
        batch.tod_idx[i] = samples.ref(ids[i]).tod_idx;
        batch.dow_idx[i] = samples.ref(ids[i]).dow_idx;
    }
    return batch;
}

// ---------------------------------------------------------------------------
// ModelState
// ---------------------------------------------------------------------------

void ModelState::add_param(const std::string& name, Tensor t) {
    order_.push_back(name);
    params_.emplace(name, std::move(t));
}

Tensor& ModelState::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("model has no parameter '" + name + "'");
    return it->second;
}

const Tensor& ModelState::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("model has no parameter '" + name + "'");
    return it->second;
}

ModelState ModelState::init(const HimNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState st;
    st.cfg_ = cfg;
    Rng rng(seed);
    const AblationFlags& ab = cfg.ablation;
    long s = cfg.param_set_size();
    double kernel_bound = 1.0 / std::sqrt(static_cast<double>(cfg.channels()));

    // Leaves are created in a fixed order so seeded init is reproducible.
    if (!ab.no_tmp && !ab.no_et) {
        st.add_param("embed.d_tod", init_uniform_param({cfg.steps_per_day, cfg.dim_tod},
                                                       1.0 / std::sqrt(double(cfg.dim_tod)), rng));
        st.add_param("embed.d_dow", init_uniform_param({cfg.days_per_week, cfg.dim_dow},
                                                       1.0 / std::sqrt(double(cfg.dim_dow)), rng));
    }
    if (!ab.no_es)
        st.add_param("embed.e_s", init_uniform_param({cfg.n_nodes, cfg.dim_s},
                                                     1.0 / std::sqrt(double(cfg.dim_s)), rng));
    if (!ab.no_tmp)
        st.add_param("pool.temporal",
                     init_uniform_param({cfg.dim_t(), s}, 1.0 / std::sqrt(double(cfg.dim_t())), rng));
    else
        st.add_param("shared.temporal", init_uniform_param({s}, kernel_bound, rng));
    if (!ab.no_smp)
        st.add_param("pool.spatial",
                     init_uniform_param({cfg.dim_s, s}, 1.0 / std::sqrt(double(cfg.dim_s)), rng));
    else
        st.add_param("shared.spatial", init_uniform_param({s}, kernel_bound, rng));
    if (!ab.no_est) {
        double b = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
        st.add_param("proj.w_e", init_uniform_param({cfg.hidden, cfg.dim_st}, b, rng));
        st.add_param("proj.b_e", init_uniform_param({cfg.dim_st}, b, rng));
    }
    if (!ab.no_stmp)
        st.add_param("pool.st_mixed",
                     init_uniform_param({cfg.dim_st, s}, 1.0 / std::sqrt(double(cfg.dim_st)), rng));
    else
        st.add_param("shared.st_mixed", init_uniform_param({s}, kernel_bound, rng));
    if (!cfg.meta_bias) {
        st.add_param("bias.temporal", init_uniform_param({3 * cfg.hidden}, kernel_bound, rng));
        st.add_param("bias.spatial", init_uniform_param({3 * cfg.hidden}, kernel_bound, rng));
        st.add_param("bias.st_mixed", init_uniform_param({3 * cfg.hidden}, kernel_bound, rng));
    }
    {
        double b = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
        st.add_param("head.w", init_uniform_param({cfg.hidden, 1L}, b, rng));
        st.add_param("head.b", init_uniform_param({1L}, b, rng));
    }
    return st;
}

long ModelState::total_params() const {
    long n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

std::vector<std::pair<std::string, long>> ModelState::param_sizes() const {
    std::vector<std::pair<std::string, long>> out;
    for (const auto& name : order_) out.emplace_back(name, params_.at(name).numel());
    return out;
}

void ModelState::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

ModelState ModelState::clone() const {
    ModelState st;
    st.cfg_ = cfg_;
    for (const auto& name : order_) {
        const Tensor& src = params_.at(name);
        st.add_param(name, Tensor::param(src.shape(), src.data()));
    }
    return st;
}

ModelState ModelState::from_tensors(const HimNetConfig& cfg,
                                    const std::map<std::string, Tensor>& tensors) {
    // Initialize to establish the expected leaf set, then overwrite values.
    ModelState st = init(cfg, 0);
    for (const auto& name : st.order_) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw ConfigError("checkpoint is missing parameter '" + name + "'");
        if (it->second.shape() != st.param(name).shape())
            throw ConfigError("checkpoint parameter '" + name + "' has shape " +
                              shape_str(it->second.shape()) + ", model expects " +
                              shape_str(st.param(name).shape()));
        st.param(name).data() = it->second.data();
    }
    for (const auto& [name, t] : tensors)
        if (!st.has(name)) throw ConfigError("checkpoint has unexpected parameter '" + name + "'");
    return st;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

Tensor time_slice(const std::vector<double>& data, long b, long t_total, long n, long t) {
    std::vector<double> step(b * n);
    for (long i = 0; i < b; ++i)
        std::copy_n(&data[(i * t_total + t) * n], n, &step[i * n]);
    return Tensor::from_data({b, n, 1}, std::move(step));
}

}  // namespace

Tensor encode_hidden(const ModelState& state, const Batch& batch) {
    const HimNetConfig& cfg = state.config();
    const AblationFlags& ab = cfg.ablation;
    if (batch.n != cfg.n_nodes)
        throw ShapeError("forward: batch has " + std::to_string(batch.n) + " nodes, model has " +
                         std::to_string(cfg.n_nodes));
    if (batch.t_in != cfg.t_in)
        throw ShapeError("forward: batch history length " + std::to_string(batch.t_in) +
                         " does not match model t_in " + std::to_string(cfg.t_in));
    for (long i = 0; i < batch.b; ++i) {
        if (batch.tod_idx[i] < 0 || batch.tod_idx[i] >= cfg.steps_per_day ||
            batch.dow_idx[i] < 0 || batch.dow_idx[i] >= cfg.days_per_week)
            throw ShapeError("forward: time index out of range at sample " + std::to_string(i));
    }

    const long B = batch.b, N = cfg.n_nodes, h = cfg.hidden;
    const Tensor* bias_t = cfg.meta_bias ? nullptr : &state.param("bias.temporal");
    const Tensor* bias_s = cfg.meta_bias ? nullptr : &state.param("bias.spatial");

    // Static adaptive graph from the spatial embedding. With the embedding
    // ablated the ReLU-Gram softmax degenerates to the uniform matrix.
    Tensor adj = ab.no_es
                     ? Tensor::constant({N, N}, 1.0 / static_cast<double>(N))
                     : adaptive_graph_static(state.param("embed.e_s"));

    // Per-context parameter sets for the two encoders.
    CellParams enc_t_params, enc_s_params;
    if (!ab.no_tmp) {
        Tensor e_t = ab.no_et ? Tensor::constant({B, cfg.dim_t()}, 1.0)
                              : concat_last(rows(state.param("embed.d_tod"), batch.tod_idx),
                                            rows(state.param("embed.d_dow"), batch.dow_idx));
        Tensor theta_t = matmul(e_t, state.param("pool.temporal"));
        enc_t_params = split_cell_params(theta_t, B, 1, cfg, bias_t);
    } else {
        enc_t_params = split_cell_params(state.param("shared.temporal"), 1, 1, cfg, bias_t);
    }
    if (!ab.no_smp) {
        Tensor e_s_query = ab.no_es ? Tensor::constant({N, cfg.dim_s}, 1.0)
                                    : state.param("embed.e_s");
        Tensor theta_s = matmul(e_s_query, state.param("pool.spatial"));
        enc_s_params = split_cell_params(theta_s, 1, N, cfg, bias_s);
    } else {
        enc_s_params = split_cell_params(state.param("shared.spatial"), 1, 1, cfg, bias_s);
    }

    // Two single-layer rollouts from zero state, summed.
    Tensor h_t = Tensor::zeros({B, N, h});
    Tensor h_s = Tensor::zeros({B, N, h});
    for (long t = 0; t < batch.t_in; ++t) {
        Tensor x_t = time_slice(batch.x_norm, B, batch.t_in, N, t);
        h_t = gcru_step(x_t, h_t, enc_t_params, adj);
        h_s = gcru_step(x_t, h_s, enc_s_params, adj);
    }
    return add(h_t, h_s);
}

Tensor forward_predictions(const ModelState& state, const Batch& batch, const NormStats& stats) {
    const HimNetConfig& cfg = state.config();
    const AblationFlags& ab = cfg.ablation;
    if (batch.t_out != cfg.t_out)
        throw ShapeError("forward: batch target length " + std::to_string(batch.t_out) +
                         " does not match model t_out " + std::to_string(cfg.t_out));
    const long B = batch.b, N = cfg.n_nodes;
    const Tensor* bias_st = cfg.meta_bias ? nullptr : &state.param("bias.st_mixed");

    Tensor h_enc = encode_hidden(state, batch);

    // Decoder context: E_st from the combined encoding, reused for the whole
    // rollout (both for the ST-mixed parameters and the time-varying graph).
    Tensor adj_dec;
    CellParams dec_params;
    if (!ab.no_est) {
        Tensor e_st = encode_st(h_enc, state.param("proj.w_e"), state.param("proj.b_e"));
        adj_dec = adaptive_graph_dynamic(e_st);
        if (!ab.no_stmp) {
            Tensor theta_st = matmul(e_st, state.param("pool.st_mixed"));
            dec_params = split_cell_params(theta_st, B, N, cfg, bias_st);
        } else {
            dec_params = split_cell_params(state.param("shared.st_mixed"), 1, 1, cfg, bias_st);
        }
    } else {
        // All-ones spatiotemporal embedding: uniform graph, constant queries.
        adj_dec = Tensor::constant({B, N, N}, 1.0 / static_cast<double>(N));
        if (!ab.no_stmp) {
            Tensor ones = Tensor::constant({B, N, cfg.dim_st}, 1.0);
            Tensor theta_st = matmul(ones, state.param("pool.st_mixed"));
            dec_params = split_cell_params(theta_st, B, N, cfg, bias_st);
        } else {
            dec_params = split_cell_params(state.param("shared.st_mixed"), 1, 1, cfg, bias_st);
        }
    }

    // Autoregressive rollout seeded with the GO symbol (zeros); each hidden
    // state maps to one value per node through the shared affine head.
    Tensor h_dec = h_enc;
    Tensor y_prev = Tensor::zeros({B, N, 1});
    std::vector<Tensor> outputs;
    for (long t = 0; t < batch.t_out; ++t) {
        h_dec = gcru_step(y_prev, h_dec, dec_params, adj_dec);
        Tensor out = add_row(matmul(h_dec, state.param("head.w")), state.param("head.b"));
        outputs.push_back(reshape(out, {B, N}));
        y_prev = reshape(out, {B, N, 1});
    }
    Tensor pred_norm = stack_time(outputs);  // [B x T' x N]
    return affine(pred_norm, stats.std_dev, stats.mean);
}

}  // namespace himnet
