#include "spinsum/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spinsum/error.hpp"

namespace spinsum {

namespace {

void check_shape(bool ok, const std::string& op, const Tensor& a, const Tensor& b) {
    if (!ok) {
        throw InternalError(op + ": shape mismatch " + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols));
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    if (!accumulate) std::fill(out.data.begin(), out.data.end(), 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    // out[i,j] = sum_k a[i,k] * b[j,k]
    if (!accumulate) std::fill(out.data.begin(), out.data.end(), 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[j * b.cols];
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) sum += arow[k] * brow[k];
            out(i, j) += sum;
        }
    }
}

void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    // out[i,j] = sum_k a[k,i] * b[k,j]
    if (!accumulate) std::fill(out.data.begin(), out.data.end(), 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
}

Var Graph::push(Tensor value, std::function<void()> backprop) {
    Node node;
    node.value = std::move(value);
    node.grad = Tensor(node.value.rows, node.value.cols);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor value) { return push(std::move(value), {}); }

Var Graph::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.cols == vb.rows, "matmul", va, vb);
    Tensor out(va.rows, vb.cols);
    matmul_into(va, vb, out, false);
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, b, v]() {
        matmul_nt_into(nodes_[v.id].grad, nodes_[b.id].value, nodes_[a.id].grad, true);
        matmul_tn_into(nodes_[a.id].value, nodes_[v.id].grad, nodes_[b.id].grad, true);
    };
    return v;
}

Var Graph::matmul_nt(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.cols == vb.cols, "matmul_nt", va, vb);
    Tensor out(va.rows, vb.rows);
    matmul_nt_into(va, vb, out, false);
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, b, v]() {
        // dA += dC * B ; dB += dC^T * A
        matmul_into(nodes_[v.id].grad, nodes_[b.id].value, nodes_[a.id].grad, true);
        matmul_tn_into(nodes_[v.id].grad, nodes_[a.id].value, nodes_[b.id].grad, true);
    };
    return v;
}

Var Graph::add(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.same_shape(vb), "add", va, vb);
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, b, v]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            nodes_[a.id].grad.data[i] += g.data[i];
            nodes_[b.id].grad.data[i] += g.data[i];
        }
    };
    return v;
}

Var Graph::sub(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.same_shape(vb), "sub", va, vb);
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= vb.data[i];
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, b, v]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            nodes_[a.id].grad.data[i] += g.data[i];
            nodes_[b.id].grad.data[i] -= g.data[i];
        }
    };
    return v;
}

Var Graph::mul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.same_shape(vb), "mul", va, vb);
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= vb.data[i];
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, b, v]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            nodes_[a.id].grad.data[i] += g.data[i] * nodes_[b.id].value.data[i];
            nodes_[b.id].grad.data[i] += g.data[i] * nodes_[a.id].value.data[i];
        }
    };
    return v;
}

Var Graph::scale(Var a, double s) {
    Tensor out = value(a);
    for (double& x : out.data) x *= s;
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v, s]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) nodes_[a.id].grad.data[i] += s * g.data[i];
    };
    return v;
}

Var Graph::add_rowwise(Var a, Var bias) {
    const Tensor& va = value(a);
    const Tensor& vb = value(bias);
    check_shape(vb.rows == 1 && vb.cols == va.cols, "add_rowwise", va, vb);
    Tensor out = va;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += vb(0, c);
    }
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, bias, v]() {
        const Tensor& g = nodes_[v.id].grad;
        Tensor& ga = nodes_[a.id].grad;
        Tensor& gb = nodes_[bias.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        for (std::size_t r = 0; r < g.rows; ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) gb(0, c) += g(r, c);
        }
    };
    return v;
}

Var Graph::sigmoid(Var a) {
    Tensor out = value(a);
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v]() {
        const Tensor& g = nodes_[v.id].grad;
        const Tensor& y = nodes_[v.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            nodes_[a.id].grad.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
    };
    return v;
}

Var Graph::tanh_op(Var a) {
    Tensor out = value(a);
    for (double& x : out.data) x = std::tanh(x);
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v]() {
        const Tensor& g = nodes_[v.id].grad;
        const Tensor& y = nodes_[v.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            nodes_[a.id].grad.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        }
    };
    return v;
}

Var Graph::gelu(Var a) {
    const Tensor& va = value(a);
    Tensor out = va;
    for (double& x : out.data) {
        double u = kGeluC * (x + kGeluA * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
    }
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v]() {
        const Tensor& g = nodes_[v.id].grad;
        const Tensor& x = nodes_[a.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double xi = x.data[i];
            double u = kGeluC * (xi + kGeluA * xi * xi * xi);
            double t = std::tanh(u);
            double du = kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
            double dy = 0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du;
            nodes_[a.id].grad.data[i] += g.data[i] * dy;
        }
    };
    return v;
}

Var Graph::lerp_rows(Var a, Var b, const Tensor& mask) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_shape(va.same_shape(vb), "lerp_rows", va, vb);
    check_shape(mask.rows == va.rows && mask.cols == 1, "lerp_rows mask", va, mask);
    Tensor out(va.rows, va.cols);
    for (std::size_t r = 0; r < va.rows; ++r) {
        double m = mask(r, 0);
        for (std::size_t c = 0; c < va.cols; ++c) {
            out(r, c) = m * va(r, c) + (1.0 - m) * vb(r, c);
        }
    }
    Var v = push(std::move(out), {});
    Tensor mask_copy = mask;
    nodes_[v.id].backprop = [this, a, b, v, mask_copy]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t r = 0; r < g.rows; ++r) {
            double m = mask_copy(r, 0);
            for (std::size_t c = 0; c < g.cols; ++c) {
                nodes_[a.id].grad(r, c) += m * g(r, c);
                nodes_[b.id].grad(r, c) += (1.0 - m) * g(r, c);
            }
        }
    };
    return v;
}

Var Graph::masked_softmax_rows(Var a, const Tensor& mask) {
    const Tensor& va = value(a);
    check_shape(va.same_shape(mask), "masked_softmax_rows", va, mask);
    Tensor out(va.rows, va.cols);
    for (std::size_t r = 0; r < va.rows; ++r) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < va.cols; ++c) {
            if (mask(r, c) != 0.0) max_logit = std::max(max_logit, va(r, c));
        }
        if (max_logit == -std::numeric_limits<double>::infinity()) {
            throw InternalError("masked_softmax_rows: fully masked row " + std::to_string(r));
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < va.cols; ++c) {
            if (mask(r, c) != 0.0) {
                out(r, c) = std::exp(va(r, c) - max_logit);
                denom += out(r, c);
            }
        }
        for (std::size_t c = 0; c < va.cols; ++c) out(r, c) /= denom;
    }
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v]() {
        const Tensor& g = nodes_[v.id].grad;
        const Tensor& y = nodes_[v.id].value;
        for (std::size_t r = 0; r < g.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols; ++c) dot += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < g.cols; ++c) {
                nodes_[a.id].grad(r, c) += y(r, c) * (g(r, c) - dot);
            }
        }
    };
    return v;
}

Var Graph::layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
    const Tensor& va = value(a);
    const Tensor& vg = value(gamma);
    const Tensor& vb = value(beta);
    check_shape(vg.rows == 1 && vg.cols == va.cols, "layer_norm gamma", va, vg);
    check_shape(vb.rows == 1 && vb.cols == va.cols, "layer_norm beta", va, vb);

    const std::size_t n = va.cols;
    Tensor out(va.rows, n);
    Tensor xhat(va.rows, n);
    std::vector<double> inv_std(va.rows);
    for (std::size_t r = 0; r < va.rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) mean += va(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double d = va(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            xhat(r, c) = (va(r, c) - mean) * inv_std[r];
            out(r, c) = xhat(r, c) * vg(0, c) + vb(0, c);
        }
    }
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, gamma, beta, v, xhat, inv_std]() {
        const Tensor& g = nodes_[v.id].grad;
        const Tensor& vg2 = nodes_[gamma.id].value;
        const std::size_t n = g.cols;
        for (std::size_t r = 0; r < g.rows; ++r) {
            double sum_dxhat = 0.0;
            double sum_dxhat_xhat = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                double dxhat = g(r, c) * vg2(0, c);
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat(r, c);
                nodes_[gamma.id].grad(0, c) += g(r, c) * xhat(r, c);
                nodes_[beta.id].grad(0, c) += g(r, c);
            }
            double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
                double dxhat = g(r, c) * vg2(0, c);
                nodes_[a.id].grad(r, c) +=
                    inv_std[r] *
                    (dxhat - inv_n * sum_dxhat - xhat(r, c) * inv_n * sum_dxhat_xhat);
            }
        }
    };
    return v;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw InternalError("concat_cols: no parts");
    std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    for (Var p : parts) {
        check_shape(value(p).rows == rows, "concat_cols", value(parts[0]), value(p));
        cols += value(p).cols;
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& vp = value(p);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < vp.cols; ++c) out(r, offset + c) = vp(r, c);
        }
        offset += vp.cols;
    }
    Var v = push(std::move(out), {});
    std::vector<Var> parts_copy = parts;
    nodes_[v.id].backprop = [this, parts_copy, v]() {
        const Tensor& g = nodes_[v.id].grad;
        std::size_t offset = 0;
        for (Var p : parts_copy) {
            Tensor& gp = nodes_[p.id].grad;
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < gp.cols; ++c) gp(r, c) += g(r, offset + c);
            }
            offset += gp.cols;
        }
    };
    return v;
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& va = value(a);
    if (begin >= end || end > va.cols) throw InternalError("slice_cols: bad range");
    Tensor out(va.rows, end - begin);
    for (std::size_t r = 0; r < va.rows; ++r) {
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = va(r, c);
    }
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v, begin]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t r = 0; r < g.rows; ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) {
                nodes_[a.id].grad(r, begin + c) += g(r, c);
            }
        }
    };
    return v;
}

Var Graph::gather_rows(Var a, const std::vector<std::size_t>& indices) {
    const Tensor& va = value(a);
    Tensor out(indices.size(), va.cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= va.rows) throw InternalError("gather_rows: index out of range");
        for (std::size_t c = 0; c < va.cols; ++c) out(r, c) = va(indices[r], c);
    }
    Var v = push(std::move(out), {});
    std::vector<std::size_t> idx = indices;
    nodes_[v.id].backprop = [this, a, v, idx]() {
        const Tensor& g = nodes_[v.id].grad;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) {
                nodes_[a.id].grad(idx[r], c) += g(r, c);
            }
        }
    };
    return v;
}

Var Graph::mean_all(Var a) {
    const Tensor& va = value(a);
    Tensor out(1, 1);
    for (double x : va.data) out.data[0] += x;
    out.data[0] /= static_cast<double>(va.size());
    Var v = push(std::move(out), {});
    nodes_[v.id].backprop = [this, a, v]() {
        double g = nodes_[v.id].grad.data[0] / static_cast<double>(nodes_[a.id].value.size());
        for (double& d : nodes_[a.id].grad.data) d += g;
    };
    return v;
}

Var Graph::bce(Var scores, const std::vector<double>& labels, double eps,
               std::size_t* clamped) {
    const Tensor& vs = value(scores);
    if (vs.size() != labels.size()) throw InternalError("bce: score/label size mismatch");
    const std::size_t n = labels.size();
    std::vector<bool> was_clamped(n, false);
    Tensor out(1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = vs.data[i];
        if (s < eps || s > 1.0 - eps) {
            was_clamped[i] = true;
            if (clamped) ++(*clamped);
            s = std::clamp(s, eps, 1.0 - eps);
        }
        out.data[0] -= labels[i] * std::log(s) + (1.0 - labels[i]) * std::log(1.0 - s);
    }
    out.data[0] /= static_cast<double>(n);
    Var v = push(std::move(out), {});
    std::vector<double> y = labels;
    nodes_[v.id].backprop = [this, scores, v, y, was_clamped, eps]() {
        double g = nodes_[v.id].grad.data[0] / static_cast<double>(y.size());
        const Tensor& vs2 = nodes_[scores.id].value;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (was_clamped[i]) continue;
            double s = vs2.data[i];
            nodes_[scores.id].grad.data[i] += g * (-(y[i] / s) + (1.0 - y[i]) / (1.0 - s));
        }
    };
    return v;
}

Var Graph::hinge_pairs(Var x, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                       double margin) {
    const Tensor& vx = value(x);
    if (vx.cols != 1) throw InternalError("hinge_pairs: expected a column vector");
    if (pairs.empty()) throw InternalError("hinge_pairs: empty pair list");
    Tensor out(1, 1);
    for (const auto& [p, n] : pairs) {
        double h = margin - (vx.data[p] - vx.data[n]);
        if (h > 0.0) out.data[0] += h;
    }
    out.data[0] /= static_cast<double>(pairs.size());
    Var v = push(std::move(out), {});
    std::vector<std::pair<std::size_t, std::size_t>> pairs_copy = pairs;
    nodes_[v.id].backprop = [this, x, v, pairs_copy, margin]() {
        double g = nodes_[v.id].grad.data[0] / static_cast<double>(pairs_copy.size());
        const Tensor& vx2 = nodes_[x.id].value;
        for (const auto& [p, n] : pairs_copy) {
            if (margin - (vx2.data[p] - vx2.data[n]) > 0.0) {
                nodes_[x.id].grad.data[p] -= g;
                nodes_[x.id].grad.data[n] += g;
            }
        }
    };
    return v;
}

void Graph::backward(Var loss) {
    const Tensor& v = value(loss);
    if (v.rows != 1 || v.cols != 1) throw InternalError("backward: loss must be 1x1");
    for (Node& node : nodes_) {
        std::fill(node.grad.data.begin(), node.grad.data.end(), 0.0);
    }
    nodes_[loss.id].grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop();
    }
}

}  // namespace spinsum
