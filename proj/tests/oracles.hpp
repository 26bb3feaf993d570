#pragma once

// Scalar/loop reference implementations used to check the engine-backed
// operations. Everything here is written with naive nested loops and stays
// independent of himnet::Tensor arithmetic.

#include <cmath>
#include <cstdint>
#include <vector>

#include "himnet/model.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec matmul(const Vec& a, long r, long c, const Vec& b, long k) {
    Vec out(r * k, 0.0);
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j)
            for (long m = 0; m < k; ++m) out[i * k + m] += a[i * c + j] * b[j * k + m];
    return out;
}

// vartheta = Q . P, one output row per query row.
inline Vec generate(const Vec& pool, long k, long s, const Vec& query, long rows) {
    Vec out(rows * s, 0.0);
    for (long r = 0; r < rows; ++r)
        for (long i = 0; i < k; ++i)
            for (long j = 0; j < s; ++j) out[r * s + j] += query[r * k + i] * pool[i * s + j];
    return out;
}

// Context-broadcast parameter block: data laid out [bw x nw x ...].
struct CtxParam {
    Vec data;
    long bw = 1;
    long nw = 1;
};

// Z = sum_k A^k U W_k + b computed term by term with explicit powers.
inline Vec graph_conv(const Vec& u, long B, long N, long C, const Vec& adj, bool adj_batched,
                      const std::vector<CtxParam>& taps, long h, const CtxParam& bias) {
    Vec out(B * N * h, 0.0);
    Vec power = u;  // A^0 U = U
    for (size_t k = 0; k < taps.size(); ++k) {
        if (k > 0) {
            Vec next(B * N * C, 0.0);
            for (long b = 0; b < B; ++b) {
                const double* a = adj_batched ? &adj[b * N * N] : adj.data();
                for (long i = 0; i < N; ++i)
                    for (long j = 0; j < N; ++j)
                        for (long c = 0; c < C; ++c)
                            next[(b * N + i) * C + c] += a[i * N + j] * power[(b * N + j) * C + c];
            }
            power = std::move(next);
        }
        const CtxParam& w = taps[k];
        for (long b = 0; b < B; ++b) {
            long bw = w.bw == 1 ? 0 : b;
            for (long n = 0; n < N; ++n) {
                long nw = w.nw == 1 ? 0 : n;
                const double* wmat = &w.data[((bw * w.nw) + nw) * C * h];
                for (long c = 0; c < C; ++c)
                    for (long j = 0; j < h; ++j)
                        out[(b * N + n) * h + j] += power[(b * N + n) * C + c] * wmat[c * h + j];
            }
        }
    }
    for (long b = 0; b < B; ++b) {
        long bw = bias.bw == 1 ? 0 : b;
        for (long n = 0; n < N; ++n) {
            long nw = bias.nw == 1 ? 0 : n;
            const double* brow = &bias.data[((bw * bias.nw) + nw) * h];
            for (long j = 0; j < h; ++j) out[(b * N + n) * h + j] += brow[j];
        }
    }
    return out;
}

struct GateOracle {
    std::vector<CtxParam> taps;
    CtxParam bias;
};

struct CellOracle {
    GateOracle reset, update, cand;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Literal GRU-with-graph-convolutions update.
inline Vec gcru_step(const Vec& x, long c_in, const Vec& h_prev, long B, long N, long h,
                     const Vec& adj, bool adj_batched, const CellOracle& cell) {
    long C = c_in + h;
    Vec u1(B * N * C);
    for (long b = 0; b < B; ++b)
        for (long n = 0; n < N; ++n) {
            for (long c = 0; c < c_in; ++c)
                u1[(b * N + n) * C + c] = x[(b * N + n) * c_in + c];
            for (long j = 0; j < h; ++j)
                u1[(b * N + n) * C + c_in + j] = h_prev[(b * N + n) * h + j];
        }
    Vec r = graph_conv(u1, B, N, C, adj, adj_batched, cell.reset.taps, h, cell.reset.bias);
    Vec u = graph_conv(u1, B, N, C, adj, adj_batched, cell.update.taps, h, cell.update.bias);
    for (auto& v : r) v = sigmoid(v);
    for (auto& v : u) v = sigmoid(v);
    Vec u2(B * N * C);
    for (long b = 0; b < B; ++b)
        for (long n = 0; n < N; ++n) {
            for (long c = 0; c < c_in; ++c)
                u2[(b * N + n) * C + c] = x[(b * N + n) * c_in + c];
            for (long j = 0; j < h; ++j)
                u2[(b * N + n) * C + c_in + j] =
                    r[(b * N + n) * h + j] * h_prev[(b * N + n) * h + j];
        }
    Vec c = graph_conv(u2, B, N, C, adj, adj_batched, cell.cand.taps, h, cell.cand.bias);
    for (auto& v : c) v = std::tanh(v);
    Vec out(B * N * h);
    for (size_t i = 0; i < out.size(); ++i) out[i] = u[i] * h_prev[i] + (1.0 - u[i]) * c[i];
    return out;
}

// Row-softmax(ReLU(E E^T)) for one [N x d] slice.
inline Vec adaptive_graph(const Vec& e, long n, long d) {
    Vec g(n * n, 0.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            double dot = 0.0;
            for (long k = 0; k < d; ++k) dot += e[i * d + k] * e[j * d + k];
            g[i * n + j] = dot > 0.0 ? dot : 0.0;
        }
    for (long i = 0; i < n; ++i) {
        double mx = g[i * n];
        for (long j = 1; j < n; ++j) mx = std::max(mx, g[i * n + j]);
        double sum = 0.0;
        for (long j = 0; j < n; ++j) {
            g[i * n + j] = std::exp(g[i * n + j] - mx);
            sum += g[i * n + j];
        }
        for (long j = 0; j < n; ++j) g[i * n + j] /= sum;
    }
    return g;
}

inline Vec encode_st(const Vec& h_in, long rows, long h, const Vec& w, long d, const Vec& b) {
    Vec out(rows * d, 0.0);
    for (long r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j) {
            double acc = b[j];
            for (long k = 0; k < h; ++k) acc += h_in[r * h + k] * w[k * d + j];
            out[r * d + j] = acc;
        }
    return out;
}

inline double masked_mae(const Vec& pred, const Vec& target, const std::vector<std::uint8_t>& mask) {
    double sum = 0.0;
    long cnt = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            sum += std::abs(pred[i] - target[i]);
            ++cnt;
        }
    return sum / cnt;
}

inline double masked_huber(const Vec& pred, const Vec& target,
                           const std::vector<std::uint8_t>& mask, double delta) {
    double sum = 0.0;
    long cnt = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            double e = std::abs(pred[i] - target[i]);
            sum += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
            ++cnt;
        }
    return sum / cnt;
}

// ---------------------------------------------------------------------------
// Full-model oracle for tiny configurations: the architecture recomposed from
// the scalar pieces above, reading raw parameter values out of a ModelState.
// ---------------------------------------------------------------------------

inline CellOracle split_params(const Vec& flat, long bw, long nw, const himnet::HimNetConfig& cfg,
                               const Vec* bias_leaf) {
    long h = cfg.hidden, c = cfg.channels(), taps = cfg.order + 1;
    long per_tap = c * h, per_gate = taps * per_tap, s = cfg.param_set_size();
    CellOracle cell;
    GateOracle* gates[3] = {&cell.reset, &cell.update, &cell.cand};
    long rows = bw * nw;
    for (int g = 0; g < 3; ++g) {
        for (long k = 0; k < taps; ++k) {
            CtxParam tap;
            tap.bw = bw;
            tap.nw = nw;
            tap.data.resize(rows * per_tap);
            for (long r = 0; r < rows; ++r)
                for (long i = 0; i < per_tap; ++i)
                    tap.data[r * per_tap + i] = flat[r * s + g * per_gate + k * per_tap + i];
            gates[g]->taps.push_back(std::move(tap));
        }
        CtxParam bias;
        if (cfg.meta_bias) {
            bias.bw = bw;
            bias.nw = nw;
            bias.data.resize(rows * h);
            for (long r = 0; r < rows; ++r)
                for (long i = 0; i < h; ++i)
                    bias.data[r * h + i] = flat[r * s + 3 * per_gate + g * h + i];
        } else {
            bias.bw = 1;
            bias.nw = 1;
            bias.data.assign(bias_leaf->begin() + g * h, bias_leaf->begin() + (g + 1) * h);
        }
        gates[g]->bias = std::move(bias);
    }
    return cell;
}

inline Vec himnet_forward(const himnet::ModelState& state, const himnet::Batch& batch,
                          const himnet::NormStats& stats) {
    using himnet::HimNetConfig;
    const HimNetConfig& cfg = state.config();
    const himnet::AblationFlags& ab = cfg.ablation;
    long B = batch.b, N = cfg.n_nodes, h = cfg.hidden, s = cfg.param_set_size();

    auto values = [&](const char* name) -> const Vec& { return state.param(name).data(); };
    const Vec* bias_t = cfg.meta_bias ? nullptr : &values("bias.temporal");
    const Vec* bias_s = cfg.meta_bias ? nullptr : &values("bias.spatial");
    const Vec* bias_st = cfg.meta_bias ? nullptr : &values("bias.st_mixed");

    Vec adj = ab.no_es ? Vec(N * N, 1.0 / N)
                       : adaptive_graph(values("embed.e_s"), N, cfg.dim_s);

    CellOracle enc_t, enc_s;
    if (!ab.no_tmp) {
        Vec e_t(B * cfg.dim_t(), 1.0);
        if (!ab.no_et) {
            const Vec& d_tod = values("embed.d_tod");
            const Vec& d_dow = values("embed.d_dow");
            for (long b = 0; b < B; ++b) {
                for (long j = 0; j < cfg.dim_tod; ++j)
                    e_t[b * cfg.dim_t() + j] = d_tod[batch.tod_idx[b] * cfg.dim_tod + j];
                for (long j = 0; j < cfg.dim_dow; ++j)
                    e_t[b * cfg.dim_t() + cfg.dim_tod + j] =
                        d_dow[batch.dow_idx[b] * cfg.dim_dow + j];
            }
        }
        Vec theta = generate(values("pool.temporal"), cfg.dim_t(), s, e_t, B);
        enc_t = split_params(theta, B, 1, cfg, bias_t);
    } else {
        enc_t = split_params(values("shared.temporal"), 1, 1, cfg, bias_t);
    }
    if (!ab.no_smp) {
        Vec query = ab.no_es ? Vec(N * cfg.dim_s, 1.0) : values("embed.e_s");
        Vec theta = generate(values("pool.spatial"), cfg.dim_s, s, query, N);
        enc_s = split_params(theta, 1, N, cfg, bias_s);
    } else {
        enc_s = split_params(values("shared.spatial"), 1, 1, cfg, bias_s);
    }

    Vec h_t(B * N * h, 0.0), h_s(B * N * h, 0.0);
    for (long t = 0; t < batch.t_in; ++t) {
        Vec x_t(B * N);
        for (long b = 0; b < B; ++b)
            for (long n = 0; n < N; ++n) x_t[b * N + n] = batch.x_norm[(b * batch.t_in + t) * N + n];
        h_t = gcru_step(x_t, 1, h_t, B, N, h, adj, false, enc_t);
        h_s = gcru_step(x_t, 1, h_s, B, N, h, adj, false, enc_s);
    }
    Vec h_enc(B * N * h);
    for (size_t i = 0; i < h_enc.size(); ++i) h_enc[i] = h_t[i] + h_s[i];

    Vec adj_dec;
    bool adj_batched = true;
    CellOracle dec;
    if (!ab.no_est) {
        Vec e_st = encode_st(h_enc, B * N, h, values("proj.w_e"), cfg.dim_st, values("proj.b_e"));
        adj_dec.resize(B * N * N);
        for (long b = 0; b < B; ++b) {
            Vec slice(e_st.begin() + b * N * cfg.dim_st, e_st.begin() + (b + 1) * N * cfg.dim_st);
            Vec g = adaptive_graph(slice, N, cfg.dim_st);
            std::copy(g.begin(), g.end(), adj_dec.begin() + b * N * N);
        }
        if (!ab.no_stmp) {
            Vec theta = generate(values("pool.st_mixed"), cfg.dim_st, s, e_st, B * N);
            dec = split_params(theta, B, N, cfg, bias_st);
        } else {
            dec = split_params(values("shared.st_mixed"), 1, 1, cfg, bias_st);
        }
    } else {
        adj_dec.assign(B * N * N, 1.0 / N);
        if (!ab.no_stmp) {
            Vec ones(B * N * cfg.dim_st, 1.0);
            Vec theta = generate(values("pool.st_mixed"), cfg.dim_st, s, ones, B * N);
            dec = split_params(theta, B, N, cfg, bias_st);
        } else {
            dec = split_params(values("shared.st_mixed"), 1, 1, cfg, bias_st);
        }
    }

    const Vec& head_w = values("head.w");
    const Vec& head_b = values("head.b");
    Vec h_dec = h_enc;
    Vec y_prev(B * N, 0.0);
    Vec pred(B * batch.t_out * N);
    for (long t = 0; t < batch.t_out; ++t) {
        h_dec = gcru_step(y_prev, 1, h_dec, B, N, h, adj_dec, adj_batched, dec);
        for (long b = 0; b < B; ++b)
            for (long n = 0; n < N; ++n) {
                double acc = head_b[0];
                for (long j = 0; j < h; ++j) acc += h_dec[(b * N + n) * h + j] * head_w[j];
                y_prev[b * N + n] = acc;
                pred[(b * batch.t_out + t) * N + n] = acc * stats.std_dev + stats.mean;
            }
    }
    return pred;
}

}  // namespace oracle
