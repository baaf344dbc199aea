#ifndef SPINSUM_AUTODIFF_HPP
#define SPINSUM_AUTODIFF_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace spinsum {

// Dense row-major matrix of doubles. All model math is 64-bit.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

// Handle into a Graph's node list.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over Tensor ops. Values are computed as ops are
// recorded; backward() replays closures in reverse creation order.
class Graph {
public:
    Var leaf(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    Tensor& grad(Var v) { return nodes_[v.id].grad; }

    Var matmul(Var a, Var b);      // A[m,k] * B[k,n]
    Var matmul_nt(Var a, Var b);   // A[m,k] * B[n,k]^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);         // elementwise
    Var scale(Var a, double s);
    Var add_rowwise(Var a, Var bias);  // A[m,n] + bias[1,n]
    Var sigmoid(Var a);
    Var tanh_op(Var a);
    Var gelu(Var a);

    // y = mask .* a + (1-mask) .* b, with mask an [m,1] constant broadcast
    // across columns.
    Var lerp_rows(Var a, Var b, const Tensor& mask);

    // Row-wise softmax over entries with mask != 0; masked entries get
    // probability zero. Every row must have at least one unmasked entry.
    Var masked_softmax_rows(Var a, const Tensor& mask);

    Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);

    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, std::size_t begin, std::size_t end);

    // Rows of `a` at `indices` (repeats allowed; backward accumulates).
    Var gather_rows(Var a, const std::vector<std::size_t>& indices);

    Var mean_all(Var a);  // [1,1]

    // Mean binary cross-entropy of probabilities in (0,1) against 0/1
    // labels. Probabilities at the boundary are clamped to [eps, 1-eps] and
    // counted in *clamped; the clamped entries get zero gradient.
    Var bce(Var scores, const std::vector<double>& labels, double eps = 1e-12,
            std::size_t* clamped = nullptr);

    // Mean over (pos,neg) index pairs of max(0, margin - (x[pos] - x[neg]))
    // with x a column vector. The subgradient at the hinge point is zero.
    Var hinge_pairs(Var x, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                    double margin);

    // Seeds d(loss) = 1 and accumulates gradients for every node. `loss`
    // must be 1x1.
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> backprop;  // empty for leaves
    };

    Var push(Tensor value, std::function<void()> backprop);
    std::vector<Node> nodes_;
};

// Raw matmul helpers shared with non-graph code.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);

}  // namespace spinsum

#endif
