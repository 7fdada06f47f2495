#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ctxfront::ad {

// Reverse-mode autodiff over dense row-major tensors. Tensors are cheap
// handles onto shared nodes; ops record a backprop closure only when some
// input requires grad, so inference-mode forwards build no graph.

template <typename Real>
struct Node {
    std::vector<int> shape;
    std::vector<Real> value;
    std::vector<Real> grad; // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node &)> backprop;

    size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    }
};

template <typename Real>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), Real(0), requires_grad);
    }

    static Tensor filled(std::vector<int> shape, Real v, bool requires_grad = false) {
        auto node = std::make_shared<Node<Real>>();
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::runtime_error("tensor: negative dimension");
            n *= static_cast<size_t>(d);
        }
        node->shape = std::move(shape);
        node->value.assign(n, v);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor from_values(std::vector<int> shape, std::vector<Real> values,
                              bool requires_grad = false) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        if (n != values.size()) {
            throw std::runtime_error("tensor: values length does not match shape");
        }
        auto node = std::make_shared<Node<Real>>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(Real v) { return filled({1}, v); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int> &shape() const { return node_->shape; }
    size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    int rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }
    int cols() const {
        return node_->shape.size() == 2 ? node_->shape[1] : node_->shape[0];
    }

    std::vector<Real> &values() { return node_->value; }
    const std::vector<Real> &values() const { return node_->value; }
    std::vector<Real> &grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<Real> &grad() const { return node_->grad; }

    Real item() const {
        if (numel() != 1) throw std::runtime_error("item: tensor is not scalar");
        return node_->value[0];
    }
    Real at(int r, int c) const {
        return node_->value[static_cast<size_t>(r) * cols() + c];
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
    }

    std::shared_ptr<Node<Real>> node() const { return node_; }

    explicit Tensor(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  private:
    std::shared_ptr<Node<Real>> node_;
};

template <typename Real>
bool has_nonfinite(const Tensor<Real> &t) {
    for (Real v : t.values()) {
        if (!std::isfinite(v)) return true;
    }
    return false;
}

namespace detail {

inline std::string shape_str(const std::vector<int> &s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

template <typename Real>
void require_same_shape(const Tensor<Real> &a, const Tensor<Real> &b, const char *op) {
    if (a.shape() != b.shape()) {
        throw std::runtime_error(std::string(op) + ": shape mismatch " +
                                 shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

// Builds a graph node. `backprop` receives the result node; parent grads must
// be touched via ensure_grad before accumulation.
template <typename Real>
Tensor<Real> make_op(std::vector<int> shape, std::vector<Real> value,
                     std::vector<Tensor<Real>> inputs,
                     std::function<void(Node<Real> &)> backprop) {
    auto node = std::make_shared<Node<Real>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool rg = false;
    for (const auto &in : inputs) rg = rg || in.requires_grad();
    node->requires_grad = rg;
    if (rg) {
        node->parents.reserve(inputs.size());
        for (auto &in : inputs) node->parents.push_back(in.node());
        node->backprop = std::move(backprop);
    }
    return Tensor<Real>(std::move(node));
}

} // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real> &a, const Tensor<Real> &b) {
    detail::require_same_shape(a, b, "add");
    std::vector<Real> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a, b}, [an, bn](Node<Real> &out) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] += out.grad[i];
        }
    });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real> &a, const Tensor<Real> &b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<Real> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a, b}, [an, bn](Node<Real> &out) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i) bn->grad[i] -= out.grad[i];
        }
    });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real> &a, const Tensor<Real> &b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<Real> v(a.numel());
    const auto &av = a.values(), &bv = b.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a, b}, [an, bn](Node<Real> &out) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i)
                an->grad[i] += out.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < out.grad.size(); ++i)
                bn->grad[i] += out.grad[i] * an->value[i];
        }
    });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real> &a, Real c) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
    auto an = a.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a}, [an, c](Node<Real> &out) {
        an->ensure_grad();
        for (size_t i = 0; i < out.grad.size(); ++i) an->grad[i] += out.grad[i] * c;
    });
}

// x [T x C] + v (shape [C] or [1 x C]) broadcast over rows.
template <typename Real>
Tensor<Real> add_rows(const Tensor<Real> &x, const Tensor<Real> &v) {
    const int rows = x.rows(), cols = x.cols();
    if (static_cast<int>(v.numel()) != cols) {
        throw std::runtime_error("add_rows: vector length " + std::to_string(v.numel()) +
                                 " != columns " + std::to_string(cols));
    }
    std::vector<Real> out(x.numel());
    const auto &xv = x.values(), &vv = v.values();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(r) * cols + c] = xv[static_cast<size_t>(r) * cols + c] + vv[c];
    auto xn = x.node(), vn = v.node();
    return detail::make_op<Real>(x.shape(), std::move(out), {x, v},
                                 [xn, vn, rows, cols](Node<Real> &o) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    vn->grad[c] += o.grad[static_cast<size_t>(r) * cols + c];
        }
    });
}

// x [T x C] * v (shape [C] or [1 x C]) broadcast over rows.
template <typename Real>
Tensor<Real> mul_rows(const Tensor<Real> &x, const Tensor<Real> &v) {
    const int rows = x.rows(), cols = x.cols();
    if (static_cast<int>(v.numel()) != cols) {
        throw std::runtime_error("mul_rows: vector length " + std::to_string(v.numel()) +
                                 " != columns " + std::to_string(cols));
    }
    std::vector<Real> out(x.numel());
    const auto &xv = x.values(), &vv = v.values();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[static_cast<size_t>(r) * cols + c] = xv[static_cast<size_t>(r) * cols + c] * vv[c];
    auto xn = x.node(), vn = v.node();
    return detail::make_op<Real>(x.shape(), std::move(out), {x, v},
                                 [xn, vn, rows, cols](Node<Real> &o) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    xn->grad[static_cast<size_t>(r) * cols + c] +=
                        o.grad[static_cast<size_t>(r) * cols + c] * vn->value[c];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    vn->grad[c] += o.grad[static_cast<size_t>(r) * cols + c] *
                                   xn->value[static_cast<size_t>(r) * cols + c];
        }
    });
}

// ---- structural ------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real> &a, const Tensor<Real> &b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
        throw std::runtime_error("matmul: shape mismatch " + detail::shape_str(a.shape()) +
                                 " vs " + detail::shape_str(b.shape()));
    }
    const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    std::vector<Real> out(static_cast<size_t>(n) * m, Real(0));
    const auto &av = a.values(), &bv = b.values();
    for (int i = 0; i < n; ++i) {
        Real *orow = &out[static_cast<size_t>(i) * m];
        for (int p = 0; p < k; ++p) {
            const Real aik = av[static_cast<size_t>(i) * k + p];
            const Real *brow = &bv[static_cast<size_t>(p) * m];
            for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return detail::make_op<Real>({n, m}, std::move(out), {a, b},
                                 [an, bn, n, k, m](Node<Real> &o) {
        if (an->requires_grad) {
            an->ensure_grad();
            // dA += dC * B^T
            for (int i = 0; i < n; ++i) {
                const Real *grow = &o.grad[static_cast<size_t>(i) * m];
                Real *arow = &an->grad[static_cast<size_t>(i) * k];
                for (int p = 0; p < k; ++p) {
                    const Real *brow = &bn->value[static_cast<size_t>(p) * m];
                    Real acc = 0;
                    for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
                    arow[p] += acc;
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB += A^T * dC
            for (int i = 0; i < n; ++i) {
                const Real *arow = &an->value[static_cast<size_t>(i) * k];
                const Real *grow = &o.grad[static_cast<size_t>(i) * m];
                for (int p = 0; p < k; ++p) {
                    const Real aip = arow[p];
                    Real *brow = &bn->grad[static_cast<size_t>(p) * m];
                    for (int j = 0; j < m; ++j) brow[j] += aip * grow[j];
                }
            }
        }
    });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real> &a) {
    if (a.shape().size() != 2) throw std::runtime_error("transpose: expected 2-d tensor");
    const int n = a.shape()[0], m = a.shape()[1];
    std::vector<Real> out(a.numel());
    const auto &av = a.values();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out[static_cast<size_t>(j) * n + i] = av[static_cast<size_t>(i) * m + j];
    auto an = a.node();
    return detail::make_op<Real>({m, n}, std::move(out), {a}, [an, n, m](Node<Real> &o) {
        an->ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                an->grad[static_cast<size_t>(i) * m + j] += o.grad[static_cast<size_t>(j) * n + i];
    });
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>> &parts, int axis) {
    if (parts.empty()) throw std::runtime_error("concat: no inputs");
    if (axis != 0 && axis != 1) throw std::runtime_error("concat: axis must be 0 or 1");
    for (const auto &p : parts) {
        if (p.shape().size() != 2) throw std::runtime_error("concat: expected 2-d tensors");
    }
    const int other = axis == 0 ? parts[0].shape()[1] : parts[0].shape()[0];
    int total = 0;
    for (const auto &p : parts) {
        const int o = axis == 0 ? p.shape()[1] : p.shape()[0];
        if (o != other) {
            throw std::runtime_error("concat: mismatched shapes " +
                                     detail::shape_str(parts[0].shape()) + " vs " +
                                     detail::shape_str(p.shape()));
        }
        total += p.shape()[axis];
    }
    const int rows = axis == 0 ? total : other;
    const int cols = axis == 0 ? other : total;
    std::vector<Real> out(static_cast<size_t>(rows) * cols);
    int offset = 0;
    for (const auto &p : parts) {
        const int pr = p.shape()[0], pc = p.shape()[1];
        const auto &pv = p.values();
        if (axis == 0) {
            std::copy(pv.begin(), pv.end(), out.begin() + static_cast<size_t>(offset) * cols);
            offset += pr;
        } else {
            for (int r = 0; r < pr; ++r)
                std::copy(pv.begin() + static_cast<size_t>(r) * pc,
                          pv.begin() + static_cast<size_t>(r + 1) * pc,
                          out.begin() + static_cast<size_t>(r) * cols + offset);
            offset += pc;
        }
    }
    std::vector<std::shared_ptr<Node<Real>>> nodes;
    for (const auto &p : parts) nodes.push_back(p.node());
    return detail::make_op<Real>({rows, cols}, std::move(out), parts,
                                 [nodes, axis, cols](Node<Real> &o) {
        int offset = 0;
        for (auto &pn : nodes) {
            const int pr = pn->shape[0], pc = pn->shape[1];
            if (pn->requires_grad) pn->ensure_grad();
            if (axis == 0) {
                if (pn->requires_grad) {
                    for (size_t i = 0; i < pn->value.size(); ++i)
                        pn->grad[i] += o.grad[static_cast<size_t>(offset) * cols + i];
                }
                offset += pr;
            } else {
                if (pn->requires_grad) {
                    for (int r = 0; r < pr; ++r)
                        for (int c = 0; c < pc; ++c)
                            pn->grad[static_cast<size_t>(r) * pc + c] +=
                                o.grad[static_cast<size_t>(r) * cols + offset + c];
                }
                offset += pc;
            }
        }
    });
}

template <typename Real>
Tensor<Real> concat(const Tensor<Real> &a, const Tensor<Real> &b, int axis) {
    return concat(std::vector<Tensor<Real>>{a, b}, axis);
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real> &a, int axis, int start, int len) {
    if (a.shape().size() != 2) throw std::runtime_error("slice: expected 2-d tensor");
    if (axis != 0 && axis != 1) throw std::runtime_error("slice: axis must be 0 or 1");
    const int n = a.shape()[0], m = a.shape()[1];
    const int limit = a.shape()[axis];
    if (start < 0 || len < 0 || start + len > limit) {
        throw std::runtime_error("slice: range [" + std::to_string(start) + ", " +
                                 std::to_string(start + len) + ") out of bounds for axis size " +
                                 std::to_string(limit));
    }
    const int rows = axis == 0 ? len : n;
    const int cols = axis == 0 ? m : len;
    std::vector<Real> out(static_cast<size_t>(rows) * cols);
    const auto &av = a.values();
    for (int r = 0; r < rows; ++r) {
        const int sr = axis == 0 ? start + r : r;
        const int sc = axis == 0 ? 0 : start;
        std::copy(av.begin() + static_cast<size_t>(sr) * m + sc,
                  av.begin() + static_cast<size_t>(sr) * m + sc + cols,
                  out.begin() + static_cast<size_t>(r) * cols);
    }
    auto an = a.node();
    return detail::make_op<Real>({rows, cols}, std::move(out), {a},
                                 [an, axis, start, m, rows, cols](Node<Real> &o) {
        an->ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const int sr = axis == 0 ? start + r : r;
            const int sc = axis == 0 ? 0 : start;
            for (int c = 0; c < cols; ++c)
                an->grad[static_cast<size_t>(sr) * m + sc + c] +=
                    o.grad[static_cast<size_t>(r) * cols + c];
        }
    });
}

// ---- reductions ------------------------------------------------------------

template <typename Real>
Tensor<Real> reduce_sum(const Tensor<Real> &a) {
    Real acc = 0;
    for (Real v : a.values()) acc += v;
    auto an = a.node();
    return detail::make_op<Real>({1}, {acc}, {a}, [an](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
    });
}

template <typename Real>
Tensor<Real> reduce_mean(const Tensor<Real> &a) {
    const Real inv = Real(1) / static_cast<Real>(a.numel());
    Real acc = 0;
    for (Real v : a.values()) acc += v;
    acc *= inv;
    auto an = a.node();
    return detail::make_op<Real>({1}, {acc}, {a}, [an, inv](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0] * inv;
    });
}

// ---- nonlinearities --------------------------------------------------------

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real> &a) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = Real(1) / (Real(1) + std::exp(-av[i]));
    auto an = a.node();
    Tensor<Real> out = detail::make_op<Real>(a.shape(), std::move(v), {a}, nullptr);
    if (out.requires_grad()) {
        auto on = out.node();
        on->backprop = [an](Node<Real> &o) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) {
                const Real s = o.value[i];
                an->grad[i] += o.grad[i] * s * (Real(1) - s);
            }
        };
    }
    return out;
}

template <typename Real>
Tensor<Real> swish(const Tensor<Real> &a) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) {
        const Real s = Real(1) / (Real(1) + std::exp(-av[i]));
        v[i] = av[i] * s;
    }
    auto an = a.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a}, [an](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            const Real x = an->value[i];
            const Real s = Real(1) / (Real(1) + std::exp(-x));
            an->grad[i] += o.grad[i] * s * (Real(1) + x * (Real(1) - s));
        }
    });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real> &a) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] > Real(0) ? av[i] : Real(0);
    auto an = a.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a}, [an](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (an->value[i] > Real(0)) an->grad[i] += o.grad[i];
    });
}

template <typename Real>
Tensor<Real> abs(const Tensor<Real> &a) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(av[i]);
    auto an = a.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a}, [an](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            if (an->value[i] > Real(0)) an->grad[i] += o.grad[i];
            else if (an->value[i] < Real(0)) an->grad[i] -= o.grad[i];
        }
    });
}

// ln(max(x, eps)); gradient is 1/x above the floor, 0 where floored.
template <typename Real>
Tensor<Real> log_floor(const Tensor<Real> &a, Real eps) {
    std::vector<Real> v(a.numel());
    const auto &av = a.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::log(std::max(av[i], eps));
    auto an = a.node();
    return detail::make_op<Real>(a.shape(), std::move(v), {a}, [an, eps](Node<Real> &o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (an->value[i] > eps) an->grad[i] += o.grad[i] / an->value[i];
    });
}

// Row-wise softmax over the last axis of a 2-d tensor. `additive_mask`, when
// defined, has the same shape and is added to the scores before the softmax;
// it is a constant (no gradient flows into it). Masked entries use -1e9,
// which underflows to an exact zero weight.
template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real> &scores, const Tensor<Real> &additive_mask = {}) {
    if (scores.shape().size() != 2) throw std::runtime_error("softmax: expected 2-d tensor");
    const int n = scores.shape()[0], m = scores.shape()[1];
    if (additive_mask.defined()) detail::require_same_shape(scores, additive_mask, "softmax mask");
    std::vector<Real> v(scores.numel());
    const auto &sv = scores.values();
    for (int i = 0; i < n; ++i) {
        const Real *row = &sv[static_cast<size_t>(i) * m];
        const Real *mrow =
            additive_mask.defined() ? &additive_mask.values()[static_cast<size_t>(i) * m] : nullptr;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < m; ++j) {
            const Real s = mrow ? row[j] + mrow[j] : row[j];
            mx = std::max(mx, s);
        }
        // Raw scores are O(1e4) at most; a max below -1e8 means every key in
        // this row carries the -1e9 mask offset.
        if (mx < Real(-1e8)) {
            throw std::runtime_error("softmax: fully masked row " + std::to_string(i));
        }
        Real denom = 0;
        Real *orow = &v[static_cast<size_t>(i) * m];
        for (int j = 0; j < m; ++j) {
            const Real s = mrow ? row[j] + mrow[j] : row[j];
            orow[j] = std::exp(s - mx);
            denom += orow[j];
        }
        if (denom <= Real(0) || !std::isfinite(denom)) {
            throw std::runtime_error("softmax: fully masked row " + std::to_string(i));
        }
        for (int j = 0; j < m; ++j) orow[j] /= denom;
    }
    auto sn = scores.node();
    Tensor<Real> out = detail::make_op<Real>(scores.shape(), std::move(v), {scores}, nullptr);
    if (out.requires_grad()) {
        auto on = out.node();
        on->backprop = [sn, n, m](Node<Real> &o) {
            sn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real *y = &o.value[static_cast<size_t>(i) * m];
                const Real *dy = &o.grad[static_cast<size_t>(i) * m];
                Real dot = 0;
                for (int j = 0; j < m; ++j) dot += dy[j] * y[j];
                Real *ds = &sn->grad[static_cast<size_t>(i) * m];
                for (int j = 0; j < m; ++j) ds[j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return out;
}

// Per-row layer norm over channels with learned scale/shift.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real> &x, const Tensor<Real> &gamma,
                        const Tensor<Real> &beta, Real eps = Real(1e-5)) {
    if (x.shape().size() != 2) throw std::runtime_error("layer_norm: expected 2-d tensor");
    const int n = x.shape()[0], m = x.shape()[1];
    if (static_cast<int>(gamma.numel()) != m || static_cast<int>(beta.numel()) != m) {
        throw std::runtime_error("layer_norm: scale/shift length != channels");
    }
    std::vector<Real> v(x.numel());
    std::vector<Real> xhat(x.numel());
    std::vector<Real> inv_std(n);
    const auto &xv = x.values(), &gv = gamma.values(), &bv = beta.values();
    for (int i = 0; i < n; ++i) {
        const Real *row = &xv[static_cast<size_t>(i) * m];
        Real mean = 0;
        for (int j = 0; j < m; ++j) mean += row[j];
        mean /= static_cast<Real>(m);
        Real var = 0;
        for (int j = 0; j < m; ++j) {
            const Real d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<Real>(m);
        const Real is = Real(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < m; ++j) {
            const Real xh = (row[j] - mean) * is;
            xhat[static_cast<size_t>(i) * m + j] = xh;
            v[static_cast<size_t>(i) * m + j] = gv[j] * xh + bv[j];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto xh = std::make_shared<std::vector<Real>>(std::move(xhat));
    auto is = std::make_shared<std::vector<Real>>(std::move(inv_std));
    return detail::make_op<Real>(x.shape(), std::move(v), {x, gamma, beta},
                                 [xn, gn, bn, xh, is, n, m](Node<Real> &o) {
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        for (int i = 0; i < n; ++i) {
            const Real *dy = &o.grad[static_cast<size_t>(i) * m];
            const Real *xhr = &(*xh)[static_cast<size_t>(i) * m];
            if (gn->requires_grad || bn->requires_grad) {
                for (int j = 0; j < m; ++j) {
                    if (gn->requires_grad) gn->grad[j] += dy[j] * xhr[j];
                    if (bn->requires_grad) bn->grad[j] += dy[j];
                }
            }
            if (xn->requires_grad) {
                Real mean_g = 0, mean_gx = 0;
                for (int j = 0; j < m; ++j) {
                    const Real g = dy[j] * gn->value[j];
                    mean_g += g;
                    mean_gx += g * xhr[j];
                }
                mean_g /= static_cast<Real>(m);
                mean_gx /= static_cast<Real>(m);
                Real *dx = &xn->grad[static_cast<size_t>(i) * m];
                for (int j = 0; j < m; ++j) {
                    const Real g = dy[j] * gn->value[j];
                    dx[j] += (g - mean_g - xhr[j] * mean_gx) * (*is)[i];
                }
            }
        }
    });
}

// x [T x C] convolved per channel with kernel [K x C], left-padded with K-1
// zeros so frame t only sees frames <= t.
template <typename Real>
Tensor<Real> causal_depthwise_conv1d(const Tensor<Real> &x, const Tensor<Real> &kernel,
                                     const Tensor<Real> &bias) {
    if (x.shape().size() != 2 || kernel.shape().size() != 2) {
        throw std::runtime_error("causal_depthwise_conv1d: expected 2-d tensors");
    }
    const int t_len = x.shape()[0], ch = x.shape()[1];
    const int k_len = kernel.shape()[0];
    if (kernel.shape()[1] != ch || static_cast<int>(bias.numel()) != ch) {
        throw std::runtime_error("causal_depthwise_conv1d: channel mismatch " +
                                 detail::shape_str(x.shape()) + " vs kernel " +
                                 detail::shape_str(kernel.shape()));
    }
    std::vector<Real> v(x.numel());
    const auto &xv = x.values(), &kv = kernel.values(), &bv = bias.values();
    for (int t = 0; t < t_len; ++t) {
        Real *orow = &v[static_cast<size_t>(t) * ch];
        for (int c = 0; c < ch; ++c) orow[c] = bv[c];
        for (int k = 0; k < k_len; ++k) {
            const int src = t - (k_len - 1) + k;
            if (src < 0) continue;
            const Real *xrow = &xv[static_cast<size_t>(src) * ch];
            const Real *krow = &kv[static_cast<size_t>(k) * ch];
            for (int c = 0; c < ch; ++c) orow[c] += krow[c] * xrow[c];
        }
    }
    auto xn = x.node(), kn = kernel.node(), bn = bias.node();
    return detail::make_op<Real>(x.shape(), std::move(v), {x, kernel, bias},
                                 [xn, kn, bn, t_len, ch, k_len](Node<Real> &o) {
        if (xn->requires_grad) xn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int t = 0; t < t_len; ++t) {
            const Real *dy = &o.grad[static_cast<size_t>(t) * ch];
            if (bn->requires_grad)
                for (int c = 0; c < ch; ++c) bn->grad[c] += dy[c];
            for (int k = 0; k < k_len; ++k) {
                const int src = t - (k_len - 1) + k;
                if (src < 0) continue;
                if (xn->requires_grad) {
                    const Real *krow = &kn->value[static_cast<size_t>(k) * ch];
                    Real *dx = &xn->grad[static_cast<size_t>(src) * ch];
                    for (int c = 0; c < ch; ++c) dx[c] += krow[c] * dy[c];
                }
                if (kn->requires_grad) {
                    const Real *xrow = &xn->value[static_cast<size_t>(src) * ch];
                    Real *dk = &kn->grad[static_cast<size_t>(k) * ch];
                    for (int c = 0; c < ch; ++c) dk[c] += xrow[c] * dy[c];
                }
            }
        }
    });
}

// x [T x in] * W [in x out] + b, fused.
template <typename Real>
Tensor<Real> affine(const Tensor<Real> &x, const Tensor<Real> &w, const Tensor<Real> &b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[0]) {
        throw std::runtime_error("affine: shape mismatch " + detail::shape_str(x.shape()) +
                                 " vs W " + detail::shape_str(w.shape()));
    }
    const int n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
    if (static_cast<int>(b.numel()) != m) {
        throw std::runtime_error("affine: bias length != output width");
    }
    std::vector<Real> out(static_cast<size_t>(n) * m);
    const auto &xv = x.values(), &wv = w.values(), &bv = b.values();
    for (int i = 0; i < n; ++i) {
        Real *orow = &out[static_cast<size_t>(i) * m];
        for (int j = 0; j < m; ++j) orow[j] = bv[j];
        for (int p = 0; p < k; ++p) {
            const Real xi = xv[static_cast<size_t>(i) * k + p];
            const Real *wrow = &wv[static_cast<size_t>(p) * m];
            for (int j = 0; j < m; ++j) orow[j] += xi * wrow[j];
        }
    }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return detail::make_op<Real>({n, m}, std::move(out), {x, w, b},
                                 [xn, wn, bn, n, k, m](Node<Real> &o) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real *grow = &o.grad[static_cast<size_t>(i) * m];
                Real *dx = &xn->grad[static_cast<size_t>(i) * k];
                for (int p = 0; p < k; ++p) {
                    const Real *wrow = &wn->value[static_cast<size_t>(p) * m];
                    Real acc = 0;
                    for (int j = 0; j < m; ++j) acc += grow[j] * wrow[j];
                    dx[p] += acc;
                }
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real *xrow = &xn->value[static_cast<size_t>(i) * k];
                const Real *grow = &o.grad[static_cast<size_t>(i) * m];
                for (int p = 0; p < k; ++p) {
                    const Real xi = xrow[p];
                    Real *dw = &wn->grad[static_cast<size_t>(p) * m];
                    for (int j = 0; j < m; ++j) dw[j] += xi * grow[j];
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real *grow = &o.grad[static_cast<size_t>(i) * m];
                for (int j = 0; j < m; ++j) bn->grad[j] += grow[j];
            }
        }
    });
}

// Gated linear unit over the last dim: x [T x 2C] -> a * sigmoid(b).
template <typename Real>
Tensor<Real> glu(const Tensor<Real> &x) {
    if (x.shape().size() != 2 || x.shape()[1] % 2 != 0) {
        throw std::runtime_error("glu: expected 2-d tensor with even channel count, got " +
                                 detail::shape_str(x.shape()));
    }
    const int n = x.shape()[0], c2 = x.shape()[1], c = c2 / 2;
    std::vector<Real> v(static_cast<size_t>(n) * c);
    const auto &xv = x.values();
    for (int i = 0; i < n; ++i) {
        const Real *row = &xv[static_cast<size_t>(i) * c2];
        Real *orow = &v[static_cast<size_t>(i) * c];
        for (int j = 0; j < c; ++j) {
            const Real s = Real(1) / (Real(1) + std::exp(-row[c + j]));
            orow[j] = row[j] * s;
        }
    }
    auto xn = x.node();
    return detail::make_op<Real>({n, c}, std::move(v), {x}, [xn, n, c2, c](Node<Real> &o) {
        xn->ensure_grad();
        for (int i = 0; i < n; ++i) {
            const Real *row = &xn->value[static_cast<size_t>(i) * c2];
            const Real *dy = &o.grad[static_cast<size_t>(i) * c];
            Real *dx = &xn->grad[static_cast<size_t>(i) * c2];
            for (int j = 0; j < c; ++j) {
                const Real s = Real(1) / (Real(1) + std::exp(-row[c + j]));
                dx[j] += dy[j] * s;
                dx[c + j] += dy[j] * row[j] * s * (Real(1) - s);
            }
        }
    });
}

// Inverted dropout; identity when p = 0 (the desk-scale setting).
template <typename Real>
Tensor<Real> dropout(const Tensor<Real> &x, Real p, std::mt19937_64 *rng = nullptr) {
    if (p < Real(0) || p >= Real(1)) throw std::runtime_error("dropout: p must be in [0, 1)");
    if (p == Real(0)) return x;
    if (rng == nullptr) throw std::runtime_error("dropout: rng required when p > 0");
    const Real keep = Real(1) - p;
    auto mask = std::make_shared<std::vector<Real>>(x.numel());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto &m : *mask) m = uni(*rng) < static_cast<double>(p) ? Real(0) : Real(1) / keep;
    std::vector<Real> v(x.numel());
    const auto &xv = x.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * (*mask)[i];
    auto xn = x.node();
    return detail::make_op<Real>(x.shape(), std::move(v), {x}, [xn, mask](Node<Real> &o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i] * (*mask)[i];
    });
}

// Tensor counterpart of the feature-space frame stacking: output frame k
// concatenates input frames [s*k .. s*k+stack-1], repeating the last frame
// past the end. Indexing matches the FeatureMatrix implementation.
template <typename Real>
Tensor<Real> frame_stack(const Tensor<Real> &x, int stack, int subsample) {
    if (x.shape().size() != 2) throw std::runtime_error("frame_stack: expected 2-d tensor");
    const int t_len = x.shape()[0], c = x.shape()[1];
    if (t_len < stack) {
        throw std::runtime_error("frame_stack: need at least " + std::to_string(stack) +
                                 " frames, got " + std::to_string(t_len));
    }
    const int out_t = (t_len + subsample - 1) / subsample;
    const int out_c = stack * c;
    std::vector<Real> v(static_cast<size_t>(out_t) * out_c);
    const auto &xv = x.values();
    for (int k = 0; k < out_t; ++k) {
        for (int j = 0; j < stack; ++j) {
            int src = subsample * k + j;
            if (src >= t_len) src = t_len - 1;
            std::copy(xv.begin() + static_cast<size_t>(src) * c,
                      xv.begin() + static_cast<size_t>(src + 1) * c,
                      v.begin() + static_cast<size_t>(k) * out_c + static_cast<size_t>(j) * c);
        }
    }
    auto xn = x.node();
    return detail::make_op<Real>({out_t, out_c}, std::move(v), {x},
                                 [xn, t_len, c, stack, subsample, out_t, out_c](Node<Real> &o) {
        xn->ensure_grad();
        for (int k = 0; k < out_t; ++k) {
            for (int j = 0; j < stack; ++j) {
                int src = subsample * k + j;
                if (src >= t_len) src = t_len - 1;
                const Real *dy = &o.grad[static_cast<size_t>(k) * out_c + static_cast<size_t>(j) * c];
                Real *dx = &xn->grad[static_cast<size_t>(src) * c];
                for (int i = 0; i < c; ++i) dx[i] += dy[i];
            }
        }
    });
}

// ---- backward --------------------------------------------------------------

template <typename Real>
void backward(const Tensor<Real> &loss) {
    if (loss.numel() != 1) {
        throw std::runtime_error("backward: loss must be scalar, got " +
                                 detail::shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; visitation order is fixed by graph
    // construction order, so accumulation is deterministic.
    std::vector<Node<Real> *> order;
    std::unordered_set<const Node<Real> *> visited;
    struct Frame {
        Node<Real> *node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame &f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node<Real> *p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Real> *n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

} // namespace ctxfront::ad
