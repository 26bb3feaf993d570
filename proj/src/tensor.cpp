#include "himnet/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace himnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
using StridedCMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

int g_threads = 1;

// Splits [0, n) into contiguous chunks, one worker per chunk. Workers must
// write disjoint output ranges so results are independent of thread count.
template <typename F>
void parallel_for(long n, F&& body) {
    int nt = std::min<long>(g_threads, n);
    if (nt <= 1) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nt));
    long chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        long lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (long i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
    for (const auto& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

// Leading dims collapsed: [d0,..,dk-2] x rows x cols for the last two axes.
long lead_count(const Shape& s, int keep_last) {
    long n = 1;
    for (size_t i = 0; i + keep_last < s.size(); ++i) n *= s[i];
    return n;
}

}  // namespace

int thread_count() { return g_threads; }

void set_thread_count(int n) { g_threads = std::max(1, n); }

long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += " x ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

double Rng::uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_in(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

long Rng::index(long n) {
    return static_cast<long>((static_cast<unsigned __int128>(eng_()) *
                              static_cast<unsigned __int128>(n)) >>
                             64);
}

void Rng::fill_uniform(std::vector<double>& v, double a, double b) {
    for (auto& x : v) x = uniform_in(a, b);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

void Rng::deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw ValueError("Rng::deserialize: malformed state string");
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return constant(std::move(shape), 0.0); }

Tensor Tensor::constant(Shape shape, double v) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<long>(data.size()))
        throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
    Tensor t = from_data(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

double Tensor::at(const Shape& idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw ShapeError("at: rank mismatch");
    long off = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= s[i]) throw ShapeError("at: index out of range");
        off = off * s[i] + idx[i];
    }
    return node_->value[static_cast<size_t>(off)];
}

Tensor make_op(Shape shape, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = any_requires_grad(inputs);
    if (n->requires_grad) {
        n->backprop = std::move(backprop);
    }
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node());
    return Tensor(std::move(n));
}

void backward(const Tensor& root) {
    if (root.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root.requires_grad()) return;

    // Iterative post-order topological sort over grad-requiring nodes.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TensorNode* child = node->inputs[next++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad();
    root.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& n) {
        for (int s = 0; s < 2; ++s) {
            auto& src = n.inputs[s];
            if (!src->requires_grad) continue;
            src->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) src->grad[i] += n.grad[i];
        }
    });
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(),
          "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& n) {
        auto &pa = n.inputs[0], &pb = n.inputs[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
        }
    });
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& n) {
        auto &pa = n.inputs[0], &pb = n.inputs[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->value[i];
        }
    });
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    return out;
}

Tensor affine(const Tensor& a, double s, double c) {
    Tensor out = make_op(a.shape(), {a}, [s](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += s * n.grad[i];
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = s * av[i] + c;
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = make_op(a.shape(), {a}, [](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (pa->value[i] > 0.0) pa->grad[i] += n.grad[i];
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = make_op(a.shape(), {a}, [](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double y = n.value[i];
            pa->grad[i] += n.grad[i] * y * (1.0 - y);
        }
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-av[i]));
    return out;
}

Tensor tanh_act(const Tensor& a) {
    Tensor out = make_op(a.shape(), {a}, [](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double y = n.value[i];
            pa->grad[i] += n.grad[i] * (1.0 - y * y);
        }
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    check(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out = make_op(std::move(shape), {a}, [](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    });
    out.data() = a.data();
    return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    check(a.ndim() == b.ndim() && a.ndim() >= 1, "concat_last: rank mismatch");
    Shape os = a.shape();
    for (int i = 0; i + 1 < a.ndim(); ++i)
        check(a.dim(i) == b.dim(i), "concat_last: leading dims differ");
    long wa = a.dim(a.ndim() - 1), wb = b.dim(b.ndim() - 1);
    os.back() = wa + wb;
    long rows = lead_count(a.shape(), 1);
    Tensor out = make_op(os, {a, b}, [rows, wa, wb](TensorNode& n) {
        auto &pa = n.inputs[0], &pb = n.inputs[1];
        long w = wa + wb;
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < wa; ++j) pa->grad[r * wa + j] += n.grad[r * w + j];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < wb; ++j) pb->grad[r * wb + j] += n.grad[r * w + wa + j];
        }
    });
    const auto &av = a.data(), &bv = b.data();
    auto& ov = out.data();
    for (long r = 0; r < rows; ++r) {
        std::memcpy(&ov[r * (wa + wb)], &av[r * wa], sizeof(double) * wa);
        std::memcpy(&ov[r * (wa + wb) + wa], &bv[r * wb], sizeof(double) * wb);
    }
    return out;
}

Tensor slice_last(const Tensor& a, long lo, long hi) {
    long w = a.dim(a.ndim() - 1);
    check(0 <= lo && lo < hi && hi <= w, "slice_last: range [" + std::to_string(lo) + ", " +
                                             std::to_string(hi) + ") out of width " +
                                             std::to_string(w));
    Shape os = a.shape();
    os.back() = hi - lo;
    long rows = lead_count(a.shape(), 1);
    Tensor out = make_op(os, {a}, [rows, w, lo, hi](TensorNode& n) {
        auto& pa = n.inputs[0];
        pa->ensure_grad();
        long ow = hi - lo;
        for (long r = 0; r < rows; ++r)
            for (long j = 0; j < ow; ++j) pa->grad[r * w + lo + j] += n.grad[r * ow + j];
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (long r = 0; r < rows; ++r)
        std::memcpy(&ov[r * (hi - lo)], &av[r * w + lo], sizeof(double) * (hi - lo));
    return out;
}

Tensor rows(const Tensor& table, const std::vector<long>& idx) {
    check(table.ndim() == 2, "rows: table must be 2-D, got " + shape_str(table.shape()));
    long R = table.dim(0), w = table.dim(1);
    for (long i : idx)
        if (i < 0 || i >= R)
            throw ShapeError("rows: index " + std::to_string(i) + " out of range [0, " +
                             std::to_string(R) + ")");
    Shape os{static_cast<long>(idx.size()), w};
    Tensor out = make_op(os, {table}, [idx, w](TensorNode& n) {
        auto& pt = n.inputs[0];
        pt->ensure_grad();
        for (size_t b = 0; b < idx.size(); ++b)
            for (long j = 0; j < w; ++j) pt->grad[idx[b] * w + j] += n.grad[b * w + j];
    });
    const auto& tv = table.data();
    auto& ov = out.data();
    for (size_t b = 0; b < idx.size(); ++b)
        std::memcpy(&ov[b * w], &tv[idx[b] * w], sizeof(double) * w);
    return out;
}

Tensor stack_time(const std::vector<Tensor>& steps) {
    check(!steps.empty(), "stack_time: no steps");
    check(steps[0].ndim() == 2, "stack_time: steps must be [B x N]");
    long B = steps[0].dim(0), N = steps[0].dim(1);
    long T = static_cast<long>(steps.size());
    std::vector<Tensor> inputs;
    for (const auto& s : steps) {
        check(s.shape() == steps[0].shape(), "stack_time: inconsistent step shapes");
        inputs.push_back(s);
    }
    Tensor out = make_op({B, T, N}, std::move(inputs), [B, T, N](TensorNode& n) {
        for (long t = 0; t < T; ++t) {
            auto& ps = n.inputs[static_cast<size_t>(t)];
            if (!ps->requires_grad) continue;
            ps->ensure_grad();
            for (long b = 0; b < B; ++b)
                for (long j = 0; j < N; ++j)
                    ps->grad[b * N + j] += n.grad[(b * T + t) * N + j];
        }
    });
    auto& ov = out.data();
    for (long t = 0; t < T; ++t) {
        const auto& sv = steps[static_cast<size_t>(t)].data();
        for (long b = 0; b < B; ++b)
            std::memcpy(&ov[(b * T + t) * N], &sv[b * N], sizeof(double) * N);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contractions
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(b.ndim() == 2, "matmul: rhs must be 2-D, got " + shape_str(b.shape()));
    check(a.ndim() >= 2, "matmul: lhs must have rank >= 2");
    long k = a.dim(a.ndim() - 1);
    check(k == b.dim(0), "matmul: inner dims differ, " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    long rows = lead_count(a.shape(), 1);  // collapse all but the last axis
    long n = b.dim(1);
    Shape os = a.shape();
    os.back() = n;

    Tensor out = make_op(os, {a, b}, [rows, k, n](TensorNode& node) {
        auto &pa = node.inputs[0], &pb = node.inputs[1];
        CMap G(node.grad.data(), rows, n);
        if (pa->requires_grad) {
            pa->ensure_grad();
            Map dA(pa->grad.data(), rows, k);
            CMap B(pb->value.data(), k, n);
            dA.noalias() += G * B.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            Map dB(pb->grad.data(), k, n);
            CMap A(pa->value.data(), rows, k);
            dB.noalias() += A.transpose() * G;
        }
    });
    CMap A(a.data().data(), rows, k);
    CMap B(b.data().data(), k, n);
    Map O(out.data().data(), rows, n);
    O.noalias() = A * B;
    return out;
}

Tensor ctx_matmul(const Tensor& u, const Tensor& w) {
    check(u.ndim() == 3, "ctx_matmul: input must be [B x N x C], got " + shape_str(u.shape()));
    check(w.ndim() == 4, "ctx_matmul: kernels must be [Bw x Nw x C x h], got " +
                             shape_str(w.shape()));
    long B = u.dim(0), N = u.dim(1), C = u.dim(2);
    long Bw = w.dim(0), Nw = w.dim(1), h = w.dim(3);
    check(w.dim(2) == C, "ctx_matmul: channel dims differ (" + std::to_string(w.dim(2)) +
                             " vs " + std::to_string(C) + ")");
    check(Bw == 1 || Bw == B, "ctx_matmul: kernel batch dim must be 1 or B");
    check(Nw == 1 || Nw == N, "ctx_matmul: kernel node dim must be 1 or N");

    Tensor out = make_op({B, N, h}, {u, w}, [B, N, C, Bw, Nw, h](TensorNode& node) {
        auto &pu = node.inputs[0], &pw = node.inputs[1];
        if (pu->requires_grad) pu->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        // dU[b,n,:] += G[b,n,:] * W[bw,nw]^T ; dW[bw,nw] += U[b,n]^T (outer) G[b,n]
        for (long b = 0; b < B; ++b) {
            long bw = (Bw == 1) ? 0 : b;
            for (long n = 0; n < N; ++n) {
                long nw = (Nw == 1) ? 0 : n;
                CMap W(&pw->value[((bw * Nw) + nw) * C * h], C, h);
                Eigen::Map<const Eigen::RowVectorXd> g(&node.grad[(b * N + n) * h], h);
                if (pu->requires_grad) {
                    Eigen::Map<Eigen::RowVectorXd> du(&pu->grad[(b * N + n) * C], C);
                    du.noalias() += g * W.transpose();
                }
                if (pw->requires_grad) {
                    Map dW(&pw->grad[((bw * Nw) + nw) * C * h], C, h);
                    Eigen::Map<const Eigen::RowVectorXd> uv(&pu->value[(b * N + n) * C], C);
                    dW.noalias() += uv.transpose() * g;
                }
            }
        }
    });

    const auto& uv = u.data();
    const auto& wv = w.data();
    auto& ov = out.data();
    if (Bw == 1 && Nw == 1) {
        // shared kernel: single GEMM over all (b, n) rows
        CMap U(uv.data(), B * N, C);
        CMap W(wv.data(), C, h);
        Map O(ov.data(), B * N, h);
        O.noalias() = U * W;
    } else if (Bw == B && Nw == 1) {
        // per-sample kernel
        parallel_for(B, [&](long b) {
            CMap U(&uv[b * N * C], N, C);
            CMap W(&wv[b * C * h], C, h);
            Map O(&ov[b * N * h], N, h);
            O.noalias() = U * W;
        });
    } else if (Bw == 1 && Nw == N) {
        // per-node kernel; U[:, n, :] is a strided B x C block
        parallel_for(N, [&](long n) {
            StridedCMap U(&uv[n * C], B, C, Eigen::OuterStride<>(N * C));
            CMap W(&wv[n * C * h], C, h);
            StridedMap O(&ov[n * h], B, h, Eigen::OuterStride<>(N * h));
            O.noalias() = U * W;
        });
    } else {
        // per-(sample, node) kernel
        parallel_for(B, [&](long b) {
            for (long n = 0; n < N; ++n) {
                Eigen::Map<const Eigen::RowVectorXd> uvec(&uv[(b * N + n) * C], C);
                CMap W(&wv[(b * N + n) * C * h], C, h);
                Eigen::Map<Eigen::RowVectorXd> o(&ov[(b * N + n) * h], h);
                o.noalias() = uvec * W;
            }
        });
    }
    return out;
}

Tensor graph_matmul(const Tensor& adj, const Tensor& u) {
    check(u.ndim() == 3, "graph_matmul: input must be [B x N x C]");
    long B = u.dim(0), N = u.dim(1), C = u.dim(2);
    bool batched = adj.ndim() == 3;
    if (batched)
        check(adj.dim(0) == B && adj.dim(1) == N && adj.dim(2) == N,
              "graph_matmul: adjacency " + shape_str(adj.shape()) + " incompatible with input " +
                  shape_str(u.shape()));
    else
        check(adj.ndim() == 2 && adj.dim(0) == N && adj.dim(1) == N,
              "graph_matmul: adjacency " + shape_str(adj.shape()) + " incompatible with input " +
                  shape_str(u.shape()));

    Tensor out = make_op({B, N, C}, {adj, u}, [B, N, C, batched](TensorNode& node) {
        auto &pa = node.inputs[0], &pu = node.inputs[1];
        if (pa->requires_grad) pa->ensure_grad();
        if (pu->requires_grad) pu->ensure_grad();
        for (long b = 0; b < B; ++b) {
            const double* abase = batched ? &pa->value[b * N * N] : pa->value.data();
            CMap A(abase, N, N);
            CMap G(&node.grad[b * N * C], N, C);
            if (pa->requires_grad) {
                double* dabase = batched ? &pa->grad[b * N * N] : pa->grad.data();
                Map dA(dabase, N, N);
                CMap U(&pu->value[b * N * C], N, C);
                dA.noalias() += G * U.transpose();
            }
            if (pu->requires_grad) {
                Map dU(&pu->grad[b * N * C], N, C);
                dU.noalias() += A.transpose() * G;
            }
        }
    });

    const auto& av = adj.data();
    const auto& uv = u.data();
    auto& ov = out.data();
    parallel_for(B, [&](long b) {
        CMap A(batched ? &av[b * N * N] : av.data(), N, N);
        CMap U(&uv[b * N * C], N, C);
        Map O(&ov[b * N * C], N, C);
        O.noalias() = A * U;
    });
    return out;
}

Tensor gram(const Tensor& e) {
    check(e.ndim() >= 2, "gram: need at least 2 dims");
    long N = e.dim(e.ndim() - 2), d = e.dim(e.ndim() - 1);
    long slices = lead_count(e.shape(), 2);
    Shape os = e.shape();
    os.back() = N;

    Tensor out = make_op(os, {e}, [slices, N, d](TensorNode& node) {
        auto& pe = node.inputs[0];
        pe->ensure_grad();
        for (long s = 0; s < slices; ++s) {
            CMap E(&pe->value[s * N * d], N, d);
            CMap G(&node.grad[s * N * N], N, N);
            Map dE(&pe->grad[s * N * d], N, d);
            dE.noalias() += (G + G.transpose()) * E;
        }
    });
    const auto& ev = e.data();
    auto& ov = out.data();
    parallel_for(slices, [&](long s) {
        CMap E(&ev[s * N * d], N, d);
        Map O(&ov[s * N * N], N, N);
        O.noalias() = E * E.transpose();
    });
    return out;
}

Tensor ctx_add(const Tensor& z, const Tensor& bias) {
    check(z.ndim() == 3, "ctx_add: input must be [B x N x h]");
    check(bias.ndim() == 3, "ctx_add: bias must be [Bw x Nw x h]");
    long B = z.dim(0), N = z.dim(1), h = z.dim(2);
    long Bw = bias.dim(0), Nw = bias.dim(1);
    check(bias.dim(2) == h, "ctx_add: feature dims differ");
    check(Bw == 1 || Bw == B, "ctx_add: bias batch dim must be 1 or B");
    check(Nw == 1 || Nw == N, "ctx_add: bias node dim must be 1 or N");

    Tensor out = make_op(z.shape(), {z, bias}, [B, N, h, Bw, Nw](TensorNode& node) {
        auto &pz = node.inputs[0], &pb = node.inputs[1];
        if (pz->requires_grad) {
            pz->ensure_grad();
            for (size_t i = 0; i < node.grad.size(); ++i) pz->grad[i] += node.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (long b = 0; b < B; ++b) {
                long bw = (Bw == 1) ? 0 : b;
                for (long n = 0; n < N; ++n) {
                    long nw = (Nw == 1) ? 0 : n;
                    double* dst = &pb->grad[((bw * Nw) + nw) * h];
                    const double* src = &node.grad[(b * N + n) * h];
                    for (long j = 0; j < h; ++j) dst[j] += src[j];
                }
            }
        }
    });
    const auto& zv = z.data();
    const auto& bv = bias.data();
    auto& ov = out.data();
    for (long b = 0; b < B; ++b) {
        long bw = (Bw == 1) ? 0 : b;
        for (long n = 0; n < N; ++n) {
            long nw = (Nw == 1) ? 0 : n;
            const double* bias_row = &bv[((bw * Nw) + nw) * h];
            const double* zin = &zv[(b * N + n) * h];
            double* o = &ov[(b * N + n) * h];
            for (long j = 0; j < h; ++j) o[j] = zin[j] + bias_row[j];
        }
    }
    return out;
}

Tensor add_row(const Tensor& a, const Tensor& r) {
    check(r.ndim() == 1, "add_row: bias must be 1-D");
    long h = r.dim(0);
    check(a.dim(a.ndim() - 1) == h, "add_row: trailing dim mismatch");
    long rows_n = lead_count(a.shape(), 1);
    Tensor out = make_op(a.shape(), {a, r}, [rows_n, h](TensorNode& node) {
        auto &pa = node.inputs[0], &pr = node.inputs[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < node.grad.size(); ++i) pa->grad[i] += node.grad[i];
        }
        if (pr->requires_grad) {
            pr->ensure_grad();
            for (long rr = 0; rr < rows_n; ++rr)
                for (long j = 0; j < h; ++j) pr->grad[j] += node.grad[rr * h + j];
        }
    });
    const auto& av = a.data();
    const auto& rv = r.data();
    auto& ov = out.data();
    for (long rr = 0; rr < rows_n; ++rr)
        for (long j = 0; j < h; ++j) ov[rr * h + j] = av[rr * h + j] + rv[j];
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

Tensor softmax_last(const Tensor& a) {
    long w = a.dim(a.ndim() - 1);
    long rows_n = lead_count(a.shape(), 1);
    Tensor out = make_op(a.shape(), {a}, [rows_n, w](TensorNode& node) {
        auto& pa = node.inputs[0];
        pa->ensure_grad();
        for (long r = 0; r < rows_n; ++r) {
            const double* y = &node.value[r * w];
            const double* g = &node.grad[r * w];
            double dot = 0.0;
            for (long j = 0; j < w; ++j) dot += g[j] * y[j];
            double* dx = &pa->grad[r * w];
            for (long j = 0; j < w; ++j) dx[j] += y[j] * (g[j] - dot);
        }
    });
    const auto& av = a.data();
    auto& ov = out.data();
    for (long r = 0; r < rows_n; ++r) {
        const double* x = &av[r * w];
        double* y = &ov[r * w];
        double mx = x[0];
        for (long j = 1; j < w; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (long j = 0; j < w; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (long j = 0; j < w; ++j) y[j] /= sum;
    }
    return out;
}

Tensor sum_all(const Tensor& a) {
    Tensor out = make_op({1}, {a}, [](TensorNode& node) {
        auto& pa = node.inputs[0];
        pa->ensure_grad();
        for (auto& g : pa->grad) g += node.grad[0];
    });
    double s = 0.0;
    for (double v : a.data()) s += v;
    out.data()[0] = s;
    return out;
}

namespace {

long masked_count(const std::vector<std::uint8_t>& mask) {
    long m = 0;
    for (auto b : mask) m += b ? 1 : 0;
    return m;
}

}  // namespace

Tensor masked_mae(const Tensor& pred, std::vector<double> target,
                  std::vector<std::uint8_t> mask) {
    check(static_cast<long>(target.size()) == pred.numel(), "masked_mae: target size mismatch");
    check(static_cast<long>(mask.size()) == pred.numel(), "masked_mae: mask size mismatch");
    long m = masked_count(mask);
    if (m == 0) throw ValueError("masked_mae: empty mask (no valid targets in batch)");

    auto tgt = std::make_shared<std::vector<double>>(std::move(target));
    auto msk = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
    Tensor out = make_op({1}, {pred}, [tgt, msk, m](TensorNode& node) {
        auto& pp = node.inputs[0];
        pp->ensure_grad();
        double g = node.grad[0] / static_cast<double>(m);
        for (size_t i = 0; i < pp->value.size(); ++i) {
            if (!(*msk)[i]) continue;
            double e = pp->value[i] - (*tgt)[i];
            pp->grad[i] += g * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0));
        }
    });
    const auto& pv = pred.data();
    double s = 0.0;
    for (size_t i = 0; i < pv.size(); ++i)
        if ((*msk)[i]) s += std::abs(pv[i] - (*tgt)[i]);
    out.data()[0] = s / static_cast<double>(m);
    return out;
}

Tensor masked_huber(const Tensor& pred, std::vector<double> target,
                    std::vector<std::uint8_t> mask, double delta) {
    check(static_cast<long>(target.size()) == pred.numel(), "masked_huber: target size mismatch");
    check(static_cast<long>(mask.size()) == pred.numel(), "masked_huber: mask size mismatch");
    if (delta <= 0.0) throw ValueError("masked_huber: delta must be positive");
    long m = masked_count(mask);
    if (m == 0) throw ValueError("masked_huber: empty mask (no valid targets in batch)");

    auto tgt = std::make_shared<std::vector<double>>(std::move(target));
    auto msk = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
    Tensor out = make_op({1}, {pred}, [tgt, msk, m, delta](TensorNode& node) {
        auto& pp = node.inputs[0];
        pp->ensure_grad();
        double g = node.grad[0] / static_cast<double>(m);
        for (size_t i = 0; i < pp->value.size(); ++i) {
            if (!(*msk)[i]) continue;
            double e = pp->value[i] - (*tgt)[i];
            double de = std::abs(e) <= delta ? e : delta * (e > 0.0 ? 1.0 : -1.0);
            pp->grad[i] += g * de;
        }
    });
    const auto& pv = pred.data();
    double s = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        if (!(*msk)[i]) continue;
        double e = std::abs(pv[i] - (*tgt)[i]);
        s += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
    }
    out.data()[0] = s / static_cast<double>(m);
    return out;
}

}  // namespace himnet
