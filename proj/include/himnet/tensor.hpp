#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace himnet {

using Shape = std::vector<long>;

long shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Number of worker threads used by the heavy forward kernels.
// Thread count never changes results: parallel regions write disjoint slices.
int thread_count();
void set_thread_count(int n);

// Deterministic RNG. std::mt19937_64 has a standard-mandated sequence and
// the transforms below avoid std::*_distribution, whose output is
// implementation-defined; equal seeds give equal streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform();                       // [0, 1)
    double uniform_in(double a, double b);  // [a, b)
    double normal();                        // Box-Muller, stateless between calls
    long index(long n);                     // [0, n)

    void fill_uniform(std::vector<double>& v, double a, double b);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
            std::swap(v[i], v[index(i + 1)]);
        }
    }

    std::string serialize() const;
    void deserialize(const std::string& s);

private:
    std::mt19937_64 eng_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first backward touch
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backprop;  // pushes node.grad into inputs

    long numel() const { return static_cast<long>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantic handle over a shared graph node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor constant(Shape shape, double v);
    static Tensor from_data(Shape shape, std::vector<double> data);
    // Trainable leaf.
    static Tensor param(Shape shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    long dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    long numel() const { return node_->numel(); }

    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& data() const { return node_->value; }
    const std::vector<double>& grad() const;
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }

    double item() const;
    double at(const Shape& idx) const;

    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op(Shape shape, std::vector<Tensor> inputs,
                          std::function<void(TensorNode&)> backprop);
};

Tensor make_op(Shape shape, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop);

// Runs reverse-mode accumulation from a scalar root. Parameter gradients
// accumulate across calls until zero_grad().
void backward(const Tensor& root);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // Hadamard
Tensor affine(const Tensor& a, double s, double c);  // s*a + c
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_act(const Tensor& a);

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& a, long lo, long hi);
// rows(table [R x w], idx) -> [|idx| x w]; grads land only on selected rows.
Tensor rows(const Tensor& table, const std::vector<long>& idx);
// stack_time(steps of [B x N]) -> [B x T x N]
Tensor stack_time(const std::vector<Tensor>& steps);

// ---- contractions ----
// a [.. x m x k] * b [k x n] -> [.. x m x n]; b strictly 2-D.
Tensor matmul(const Tensor& a, const Tensor& b);
// u [B x N x C] with per-context kernels w [Bw x Nw x C x h], Bw in {1,B},
// Nw in {1,N} -> [B x N x h].
Tensor ctx_matmul(const Tensor& u, const Tensor& w);
// adj [N x N] or [B x N x N] applied per sample: out_b = adj(_b) * u_b.
Tensor graph_matmul(const Tensor& adj, const Tensor& u);
// gram(e [.. x N x d]) -> [.. x N x N], G = E * E^T per slice.
Tensor gram(const Tensor& e);
// z [B x N x h] + bias [Bw x Nw x h] broadcast over (B, N).
Tensor ctx_add(const Tensor& z, const Tensor& bias);
// a [.. x h] + r [h]
Tensor add_row(const Tensor& a, const Tensor& r);

// ---- reductions / losses ----
Tensor softmax_last(const Tensor& a);
Tensor sum_all(const Tensor& a);
// Masked mean absolute error against constant targets. mask[i] selects the
// entries that enter the mean; throws ValueError when the mask is empty.
Tensor masked_mae(const Tensor& pred, std::vector<double> target,
                  std::vector<std::uint8_t> mask);
Tensor masked_huber(const Tensor& pred, std::vector<double> target,
                    std::vector<std::uint8_t> mask, double delta);

}  // namespace himnet
