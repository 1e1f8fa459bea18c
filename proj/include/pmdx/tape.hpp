#pragma once

#include <functional>
#include <vector>

#include "pmdx/tensor.hpp"

namespace pmdx {
namespace ad {

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// which is already a topological order, so backward() is a single reverse
// sweep. A fresh tape is built per batch.
class Tape {
public:
    using BackFn = std::function<void(Tape&)>;

    int leaf(const Tensor& value) { return push(value, nullptr); }
    int constant(const Tensor& value) { return push(value, nullptr); }

    int push(Tensor value, BackFn back) {
        nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    Tensor& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
        return n.grad;
    }

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root must
    // be a scalar.
    void backward(int root) {
        if (val(root).size() != 1) throw ShapeError("backward: root must be scalar");
        grad(root)[0] += 1.0;
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && !n.grad.data.empty()) n.back(*this);
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad; // allocated on first touch
        BackFn back;
    };
    std::vector<Node> nodes_;
};

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    Var() = default;
    Var(Tape& t, int i) : tape(&t), id(i) {}

    const Tensor& val() const { return tape->val(id); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

Var make_leaf(Tape& t, const Tensor& v);
Var make_const(Tape& t, const Tensor& v);
Var make_scalar(Tape& t, double v);

// ---- elementwise / reductions -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var vabs(Var a);
Var vsum(Var a);
Var vmean(Var a);
Var sum_sq(Var a);
Var dot(Var a, Var b);
Var detach(Var a);

// ---- vector / matrix ------------------------------------------------------

// y = W x + b, W is [out, in], b is [out].
Var linear(Var x, Var W, Var b);
// Y = X W^T + b applied per row, X is [n, in].
Var linear_rows(Var X, Var W, Var b);
Var matvec(Var M, Var x);    // [n,m]*[m] -> [n]
Var matvec_t(Var M, Var x);  // M^T x: [n,m],[n] -> [m]
// (A^T B) * alpha, A [n,p], B [n,q] -> [p,q].
Var matmul_at_b(Var A, Var B, double alpha);

Var concat(const std::vector<Var>& parts);
Var slice(Var v, int from, int len);
Var stack_rows(const std::vector<Var>& rows);
Var row(Var M, int r);
Var slice_cols(Var M, int from, int len);

// ---- normalization / losses ----------------------------------------------

// x / ||x||; returns zeros (zero gradient) when ||x|| < eps.
Var l2_normalize(Var x, double eps = 1e-12);
// cos(a, b) with the zero-vector guard cos := 0.
Var cosine(Var a, Var b, double eps = 1e-12);
Var softmax(Var x);
Var logsumexp(Var x);
Var pick(Var x, int index);
Var mse(Var a, Var b);

// ---- batch statistics (columns of an [n,m] matrix) -------------------------

Var col_mean(Var M);
Var sub_row(Var M, Var r);   // M - broadcast(r)
Var mul_row(Var M, Var r);   // M * broadcast(r)
// elementwise x > tau ? 1/sqrt(x) : 0 (guarded branch has zero gradient)
Var rsqrt_guard(Var x, double tau = 1e-24);

// ---- 3-D conv stack --------------------------------------------------------

// x [Cin, D, H, W], W [Cout, Cin, 3, 3, 3], zero padding 1, stride 1.
Var conv3d(Var x, Var W, Var b);
// factor-2 average pooling with ceil sizes; size-1 axes pass through.
Var avgpool3d(Var x);
// per-channel standardization over spatial voxels, eps inside the sqrt.
Var instance_norm(Var x, double eps = 1e-5);
Var global_avg_pool(Var x); // [C,D,H,W] -> [C]

} // namespace ad
} // namespace pmdx
