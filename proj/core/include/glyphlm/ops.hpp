#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "glyphlm/tensor.hpp"

namespace glyphlm {
namespace detail {

/// C[M,N] += A[M,K] * B[K,N]; the one hot kernel. ikj order keeps the inner
/// loop contiguous over both C and B so it vectorizes without reassociation,
/// and the accumulation order is fixed (bit-stable across runs).
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, int m_dim, int k_dim, int n_dim) {
    for (int m = 0; m < m_dim; ++m) {
        T* crow = c + std::size_t(m) * n_dim;
        const T* arow = a + std::size_t(m) * k_dim;
        for (int k = 0; k < k_dim; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b + std::size_t(k) * n_dim;
            for (int n = 0; n < n_dim; ++n) crow[n] += av * brow[n];
        }
    }
}

/// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, int m_dim, int k_dim, int n_dim) {
    for (int m = 0; m < m_dim; ++m) {
        const T* arow = a + std::size_t(m) * k_dim;
        const T* brow = b + std::size_t(m) * n_dim;
        for (int k = 0; k < k_dim; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            T* crow = c + std::size_t(k) * n_dim;
            for (int n = 0; n < n_dim; ++n) crow[n] += av * brow[n];
        }
    }
}

template <typename T>
std::vector<T> transpose2d(const T* a, int rows, int cols) {
    std::vector<T> out(std::size_t(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[std::size_t(c) * rows + r] = a[std::size_t(r) * cols + c];
    return out;
}

/// C[M,N] += A[M,K] * B[N,K]^T, via an explicit transpose of B so the core
/// kernel stays vectorizable without changing reduction order semantics.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, int m_dim, int k_dim, int n_dim) {
    std::vector<T> bt = transpose2d(b, n_dim, k_dim);  // [K,N]
    gemm_nn_acc(a, bt.data(), c, m_dim, k_dim, n_dim);
}

template <typename T>
void accumulate(Tensor<T>& dst, const T* src, std::size_t n) {
    dst.ensure_grad();
    T* g = dst.grad.data();
    for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
}

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

/// a + b. b may broadcast against a with trailing alignment (missing leading
/// dims or dims of size 1).
template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const bool same = detail::same_shape(a->shape, b->shape);
    std::vector<std::int64_t> bstride;  // stride of b along each axis of a (0 = broadcast)
    if (!same) {
        const int ar = a->rank(), br = b->rank();
        if (br > ar) throw ShapeError("add: rhs rank exceeds lhs " + shape_str(a->shape) + " vs " + shape_str(b->shape));
        bstride.assign(std::size_t(ar), 0);
        std::int64_t stride = 1;
        for (int i = br - 1; i >= 0; --i) {
            const int adim = a->dim(ar - br + i);
            const int bdim = b->dim(i);
            if (bdim != adim && bdim != 1)
                throw ShapeError("add: cannot broadcast " + shape_str(b->shape) + " onto " + shape_str(a->shape));
            bstride[std::size_t(ar - br + i)] = (bdim == 1) ? 0 : stride;
            stride *= bdim;
        }
    }

    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->value.size();
    if (same) {
        for (std::size_t i = 0; i < n; ++i) out->value[i] = a->value[i] + b->value[i];
    } else {
        // generic strided broadcast walk
        const int ar = a->rank();
        std::vector<int> idx(std::size_t(ar), 0);
        const T* ap = a->data();
        const T* bp = b->data();
        std::int64_t boff = 0;
        for (std::size_t i = 0; i < n; ++i) {
            out->value[i] = ap[i] + bp[boff];
            for (int d = ar - 1; d >= 0; --d) {
                auto ud = std::size_t(d);
                boff += bstride[ud];
                if (++idx[ud] < a->dim(d)) break;
                boff -= std::int64_t(idx[ud]) * bstride[ud];
                idx[ud] = 0;
            }
        }
    }

    if (NoGradGuard::grad_enabled() && (a->needs_grad() || b->needs_grad())) {
        out->parents = {a, b};
        out->backward_fn = [a, b, same, bstride](Tensor<T>& self) {
            if (a->needs_grad()) detail::accumulate(*a, self.grad.data(), self.grad.size());
            if (b->needs_grad()) {
                b->ensure_grad();
                if (same) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
                } else {
                    const int ar = a->rank();
                    std::vector<int> idx(std::size_t(ar), 0);
                    std::int64_t boff = 0;
                    for (std::size_t i = 0; i < self.grad.size(); ++i) {
                        b->grad[std::size_t(boff)] += self.grad[i];
                        for (int d = ar - 1; d >= 0; --d) {
                            auto ud = std::size_t(d);
                            boff += bstride[ud];
                            if (++idx[ud] < a->dim(d)) break;
                            boff -= std::int64_t(idx[ud]) * bstride[ud];
                            idx[ud] = 0;
                        }
                    }
                }
            }
        };
    }
    return out;
}

/// Elementwise product; shapes must match.
template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (!detail::same_shape(a->shape, b->shape))
        throw ShapeError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = make_tensor<T>(a->shape);
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * b->value[i];
    if (NoGradGuard::grad_enabled() && (a->needs_grad() || b->needs_grad())) {
        out->parents = {a, b};
        out->backward_fn = [a, b](Tensor<T>& self) {
            if (a->needs_grad()) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * b->value[i];
            }
            if (b->needs_grad()) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i] * a->value[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& a, T c) {
    auto out = make_tensor<T>(a->shape);
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * c;
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a, c](Tensor<T>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * c;
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& a, std::vector<int> new_shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (int i = 0; i < int(new_shape.size()); ++i) {
        if (new_shape[std::size_t(i)] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one -1");
            infer = i;
        } else {
            known *= new_shape[std::size_t(i)];
        }
    }
    if (infer >= 0) {
        if (known == 0 || a->numel() % known)
            throw ShapeError("reshape: cannot infer dim for " + shape_str(new_shape));
        new_shape[std::size_t(infer)] = int(a->numel() / known);
        known *= new_shape[std::size_t(infer)];
    }
    if (known != a->numel())
        throw ShapeError("reshape: numel mismatch " + shape_str(a->shape) + " -> " + shape_str(new_shape));
    auto out = make_tensor<T>(new_shape, a->value);
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a](Tensor<T>& self) { detail::accumulate(*a, self.grad.data(), self.grad.size()); };
    }
    return out;
}

template <typename T>
TensorPtr<T> permute(const TensorPtr<T>& a, const std::vector<int>& axes) {
    const int r = a->rank();
    if (int(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
    std::vector<int> new_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) new_shape[std::size_t(i)] = a->dim(axes[std::size_t(i)]);

    std::vector<std::int64_t> in_stride(std::size_t(r), 1);
    for (int i = r - 2; i >= 0; --i) in_stride[std::size_t(i)] = in_stride[std::size_t(i + 1)] * a->dim(i + 1);
    std::vector<std::int64_t> gather(std::size_t(a->numel()));
    std::vector<int> idx(std::size_t(r), 0);
    for (std::int64_t o = 0; o < a->numel(); ++o) {
        std::int64_t src = 0;
        for (int i = 0; i < r; ++i) src += std::int64_t(idx[std::size_t(i)]) * in_stride[std::size_t(axes[std::size_t(i)])];
        gather[std::size_t(o)] = src;
        for (int d = r - 1; d >= 0; --d) {
            if (++idx[std::size_t(d)] < new_shape[std::size_t(d)]) break;
            idx[std::size_t(d)] = 0;
        }
    }

    auto out = make_tensor<T>(new_shape);
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[std::size_t(gather[i])];
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a, gather](Tensor<T>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[std::size_t(gather[i])] += self.grad[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> concat(const TensorPtr<T>& a, const TensorPtr<T>& b, int axis) {
    const int r = a->rank();
    if (b->rank() != r) throw ShapeError("concat: rank mismatch");
    if (axis < 0 || axis >= r) throw ShapeError("concat: bad axis");
    for (int i = 0; i < r; ++i)
        if (i != axis && a->dim(i) != b->dim(i))
            throw ShapeError("concat: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));

    std::vector<int> new_shape = a->shape;
    new_shape[std::size_t(axis)] += b->dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a->dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a->dim(i);
    const std::int64_t a_block = a->dim(axis) * inner, b_block = b->dim(axis) * inner;

    auto out = make_tensor<T>(new_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        std::memcpy(out->data() + std::size_t(o * (a_block + b_block)), a->data() + std::size_t(o * a_block),
                    std::size_t(a_block) * sizeof(T));
        std::memcpy(out->data() + std::size_t(o * (a_block + b_block) + a_block), b->data() + std::size_t(o * b_block),
                    std::size_t(b_block) * sizeof(T));
    }
    if (NoGradGuard::grad_enabled() && (a->needs_grad() || b->needs_grad())) {
        out->parents = {a, b};
        out->backward_fn = [a, b, outer, a_block, b_block](Tensor<T>& self) {
            if (a->needs_grad()) {
                a->ensure_grad();
                for (std::int64_t o = 0; o < outer; ++o)
                    for (std::int64_t i = 0; i < a_block; ++i)
                        a->grad[std::size_t(o * a_block + i)] += self.grad[std::size_t(o * (a_block + b_block) + i)];
            }
            if (b->needs_grad()) {
                b->ensure_grad();
                for (std::int64_t o = 0; o < outer; ++o)
                    for (std::int64_t i = 0; i < b_block; ++i)
                        b->grad[std::size_t(o * b_block + i)] += self.grad[std::size_t(o * (a_block + b_block) + a_block + i)];
            }
        };
    }
    return out;
}

/// One element of a tensor as a scalar node (used to backpropagate from a
/// single logit).
template <typename T>
TensorPtr<T> select_scalar(const TensorPtr<T>& a, std::int64_t flat_index) {
    if (flat_index < 0 || flat_index >= a->numel()) throw ShapeError("select_scalar: index out of range");
    auto out = make_tensor<T>({1});
    out->value[0] = a->value[std::size_t(flat_index)];
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a, flat_index](Tensor<T>& self) {
            a->ensure_grad();
            a->grad[std::size_t(flat_index)] += self.grad[0];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& a) {
    auto out = make_tensor<T>({1});
    T acc = 0;
    for (T v : a->value) acc += v;
    out->value[0] = acc;
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a](Tensor<T>& self) {
            a->ensure_grad();
            const T g = self.grad[0];
            for (auto& v : a->grad) v += g;
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// x[..., Din] * w[Din, Dout] (+ bias[Dout]); leading dims are flattened.
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias = nullptr) {
    if (w->rank() != 2) throw ShapeError("linear: weight must be 2D");
    const int din = w->dim(0), dout = w->dim(1);
    if (x->dim(x->rank() - 1) != din)
        throw ShapeError("linear: input " + shape_str(x->shape) + " vs weight " + shape_str(w->shape));
    if (bias && (bias->rank() != 1 || bias->dim(0) != dout)) throw ShapeError("linear: bad bias shape");
    const int rows = int(x->numel() / din);

    std::vector<int> out_shape = x->shape;
    out_shape.back() = dout;
    auto out = make_tensor<T>(out_shape);
    if (bias) {
        for (int r = 0; r < rows; ++r)
            std::memcpy(out->data() + std::size_t(r) * dout, bias->data(), std::size_t(dout) * sizeof(T));
    }
    detail::gemm_nn_acc(x->data(), w->data(), out->data(), rows, din, dout);

    if (NoGradGuard::grad_enabled() && (x->needs_grad() || w->needs_grad() || (bias && bias->needs_grad()))) {
        out->parents = {x, w};
        if (bias) out->parents.push_back(bias);
        out->backward_fn = [x, w, bias, rows, din, dout](Tensor<T>& self) {
            if (x->needs_grad()) {
                x->ensure_grad();
                detail::gemm_nt_acc(self.grad.data(), w->data(), x->grad.data(), rows, dout, din);
            }
            if (w->needs_grad()) {
                w->ensure_grad();
                detail::gemm_tn_acc(x->data(), self.grad.data(), w->grad.data(), rows, din, dout);
            }
            if (bias && bias->needs_grad()) {
                bias->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                    const T* g = self.grad.data() + std::size_t(r) * dout;
                    for (int c = 0; c < dout; ++c) bias->grad[std::size_t(c)] += g[c];
                }
            }
        };
    }
    return out;
}

/// Batched matmul a[..., M, K] * b[..., K, N] (b[..., N, K] with trans_b).
/// Batch dims must match exactly; rank 2 means a single matrix.
template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b, bool trans_b = false) {
    const int ra = a->rank(), rb = b->rank();
    if (ra < 2 || rb != ra) throw ShapeError("matmul: rank mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    for (int i = 0; i < ra - 2; ++i)
        if (a->dim(i) != b->dim(i)) throw ShapeError("matmul: batch dims differ");
    const int m_dim = a->dim(ra - 2), k_dim = a->dim(ra - 1);
    const int bk = trans_b ? b->dim(rb - 1) : b->dim(rb - 2);
    const int n_dim = trans_b ? b->dim(rb - 2) : b->dim(rb - 1);
    if (bk != k_dim) throw ShapeError("matmul: inner dims differ " + shape_str(a->shape) + " vs " + shape_str(b->shape));

    std::int64_t batch = 1;
    for (int i = 0; i < ra - 2; ++i) batch *= a->dim(i);
    std::vector<int> out_shape(a->shape.begin(), a->shape.end() - 2);
    out_shape.push_back(m_dim);
    out_shape.push_back(n_dim);

    auto out = make_tensor<T>(out_shape);
    const std::int64_t as = std::int64_t(m_dim) * k_dim, bs = std::int64_t(k_dim) * n_dim, os = std::int64_t(m_dim) * n_dim;
    for (std::int64_t g = 0; g < batch; ++g) {
        const T* ap = a->data() + g * as;
        const T* bp = b->data() + g * bs;
        T* op = out->data() + g * os;
        if (trans_b)
            detail::gemm_nt_acc(ap, bp, op, m_dim, k_dim, n_dim);
        else
            detail::gemm_nn_acc(ap, bp, op, m_dim, k_dim, n_dim);
    }

    if (NoGradGuard::grad_enabled() && (a->needs_grad() || b->needs_grad())) {
        out->parents = {a, b};
        out->backward_fn = [a, b, trans_b, batch, as, bs, os, m_dim, k_dim, n_dim](Tensor<T>& self) {
            for (std::int64_t g = 0; g < batch; ++g) {
                const T* gp = self.grad.data() + g * os;
                if (a->needs_grad()) {
                    a->ensure_grad();
                    T* da = a->grad.data() + g * as;
                    if (trans_b)
                        detail::gemm_nn_acc(gp, b->data() + g * bs, da, m_dim, n_dim, k_dim);
                    else
                        detail::gemm_nt_acc(gp, b->data() + g * bs, da, m_dim, n_dim, k_dim);
                }
                if (b->needs_grad()) {
                    b->ensure_grad();
                    T* db = b->grad.data() + g * bs;
                    if (trans_b)
                        detail::gemm_tn_acc(gp, a->data() + g * as, db, m_dim, n_dim, k_dim);
                    else
                        detail::gemm_tn_acc(a->data() + g * as, gp, db, m_dim, k_dim, n_dim);
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// nonlinearities / normalization
// ---------------------------------------------------------------------------

/// gelu, tanh approximation (0.044715 cubic term).
template <typename T>
TensorPtr<T> gelu(const TensorPtr<T>& a) {
    constexpr double kSqrt2OverPi = 0.7978845608028653558;
    constexpr double kCubic = 0.044715;
    auto out = make_tensor<T>(a->shape);
    for (std::size_t i = 0; i < out->value.size(); ++i) {
        const double x = double(a->value[i]);
        const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
        out->value[i] = T(0.5 * x * (1.0 + std::tanh(u)));
    }
    if (NoGradGuard::grad_enabled() && a->needs_grad()) {
        out->parents = {a};
        out->backward_fn = [a](Tensor<T>& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double x = double(a->value[i]);
                const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
                const double th = std::tanh(u);
                const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * x * x);
                const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
                a->grad[i] += self.grad[i] * T(d);
            }
        };
    }
    return out;
}

/// Layer normalization over the last dimension with learned gain/bias.
template <typename T>
TensorPtr<T> layer_norm(const TensorPtr<T>& x, const TensorPtr<T>& gain, const TensorPtr<T>& bias, T eps = T(1e-5)) {
    const int d = x->dim(x->rank() - 1);
    if (gain->numel() != d || bias->numel() != d) throw ShapeError("layer_norm: gain/bias must match last dim");
    const std::int64_t rows = x->numel() / d;

    auto out = make_tensor<T>(x->shape);
    std::vector<T> inv_std(static_cast<std::size_t>(rows));
    std::vector<T> xhat(x->value.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xi = x->data() + r * d;
        T mean = 0;
        for (int i = 0; i < d; ++i) mean += xi[i];
        mean /= T(d);
        T var = 0;
        for (int i = 0; i < d; ++i) {
            const T c = xi[i] - mean;
            var += c * c;
        }
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[std::size_t(r)] = is;
        T* oi = out->data() + r * d;
        T* xh = xhat.data() + r * d;
        for (int i = 0; i < d; ++i) {
            xh[i] = (xi[i] - mean) * is;
            oi[i] = xh[i] * gain->value[std::size_t(i)] + bias->value[std::size_t(i)];
        }
    }

    if (NoGradGuard::grad_enabled() && (x->needs_grad() || gain->needs_grad() || bias->needs_grad())) {
        out->parents = {x, gain, bias};
        out->backward_fn = [x, gain, bias, rows, d, inv_std = std::move(inv_std), xhat = std::move(xhat)](Tensor<T>& self) {
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* g = self.grad.data() + r * d;
                const T* xh = xhat.data() + std::size_t(r) * std::size_t(d);
                if (gain->needs_grad()) {
                    gain->ensure_grad();
                    for (int i = 0; i < d; ++i) gain->grad[std::size_t(i)] += g[i] * xh[i];
                }
                if (bias->needs_grad()) {
                    bias->ensure_grad();
                    for (int i = 0; i < d; ++i) bias->grad[std::size_t(i)] += g[i];
                }
                if (x->needs_grad()) {
                    x->ensure_grad();
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int i = 0; i < d; ++i) {
                        const T dxh = g[i] * gain->value[std::size_t(i)];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[i];
                    }
                    const T is = inv_std[std::size_t(r)];
                    T* dx = x->grad.data() + r * d;
                    for (int i = 0; i < d; ++i) {
                        const T dxh = g[i] * gain->value[std::size_t(i)];
                        dx[i] += is * (dxh - sum_dxhat / T(d) - xh[i] * sum_dxhat_xhat / T(d));
                    }
                }
            }
        };
    }
    return out;
}

/// Row softmax over the last dimension, max-subtraction stabilized.
/// Rejects non-finite inputs.
template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& x) {
    const int d = x->dim(x->rank() - 1);
    const std::int64_t rows = x->numel() / d;
    for (T v : x->value)
        if (!std::isfinite(double(v))) throw NonFiniteError("softmax: non-finite input");

    auto out = make_tensor<T>(x->shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xi = x->data() + r * d;
        T* oi = out->data() + r * d;
        T mx = xi[0];
        for (int i = 1; i < d; ++i) mx = std::max(mx, xi[i]);
        T denom = 0;
        for (int i = 0; i < d; ++i) {
            oi[i] = std::exp(xi[i] - mx);
            denom += oi[i];
        }
        const T inv = T(1) / denom;
        for (int i = 0; i < d; ++i) oi[i] *= inv;
    }

    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, rows, d](Tensor<T>& self) {
            x->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* y = self.value.data() + r * d;
                const T* g = self.grad.data() + r * d;
                T dot = 0;
                for (int i = 0; i < d; ++i) dot += g[i] * y[i];
                T* dx = x->grad.data() + r * d;
                for (int i = 0; i < d; ++i) dx[i] += y[i] * (g[i] - dot);
            }
        };
    }
    return out;
}

/// Mean over non-pad positions of -log softmax(logits)[target].
/// logits: [..., V] flattened to rows; targets: one id (or pad_id) per row.
template <typename T>
TensorPtr<T> cross_entropy(const TensorPtr<T>& logits, const std::vector<int>& targets, int pad_id) {
    const int v = logits->dim(logits->rank() - 1);
    const std::int64_t rows = logits->numel() / v;
    if (std::int64_t(targets.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
    std::int64_t scored = 0;
    for (int t : targets) {
        if (t == pad_id) continue;
        if (t < 0 || t >= v) throw DataError("cross_entropy: target id " + std::to_string(t) + " outside vocab of " + std::to_string(v));
        ++scored;
    }
    if (scored == 0) throw DataError("cross_entropy: no scored positions");

    auto probs = std::make_shared<std::vector<T>>(logits->value.size());
    double total = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xi = logits->data() + r * v;
        T* pi = probs->data() + r * v;
        T mx = xi[0];
        for (int i = 1; i < v; ++i) mx = std::max(mx, xi[i]);
        T denom = 0;
        for (int i = 0; i < v; ++i) {
            pi[i] = std::exp(xi[i] - mx);
            denom += pi[i];
        }
        const T inv = T(1) / denom;
        for (int i = 0; i < v; ++i) pi[i] *= inv;
        if (targets[std::size_t(r)] != pad_id)
            total += -std::log(double(pi[targets[std::size_t(r)]]));
    }

    auto out = make_tensor<T>({1});
    out->value[0] = T(total / double(scored));

    if (NoGradGuard::grad_enabled() && logits->needs_grad()) {
        out->parents = {logits};
        out->backward_fn = [logits, targets, pad_id, probs, rows, v, scored](Tensor<T>& self) {
            logits->ensure_grad();
            const T coeff = self.grad[0] / T(scored);
            for (std::int64_t r = 0; r < rows; ++r) {
                const int t = targets[std::size_t(r)];
                if (t == pad_id) continue;
                const T* pi = probs->data() + r * v;
                T* dl = logits->grad.data() + r * v;
                for (int i = 0; i < v; ++i) dl[i] += coeff * pi[i];
                dl[t] -= coeff;
            }
        };
    }
    return out;
}

/// table[V, d] gathered by ids into [ids_shape..., d].
template <typename T>
TensorPtr<T> embedding_lookup(const TensorPtr<T>& table, const std::vector<int>& ids, std::vector<int> ids_shape) {
    if (table->rank() != 2) throw ShapeError("embedding_lookup: table must be 2D");
    const int v = table->dim(0), d = table->dim(1);
    if (std::int64_t(ids.size()) != shape_numel<T>(ids_shape)) throw ShapeError("embedding_lookup: ids/shape mismatch");
    for (int id : ids)
        if (id < 0 || id >= v) throw DataError("embedding_lookup: id " + std::to_string(id) + " outside vocab of " + std::to_string(v));

    ids_shape.push_back(d);
    auto out = make_tensor<T>(ids_shape);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out->data() + i * std::size_t(d), table->data() + std::size_t(ids[i]) * std::size_t(d),
                    std::size_t(d) * sizeof(T));

    if (NoGradGuard::grad_enabled() && table->needs_grad()) {
        out->parents = {table};
        out->backward_fn = [table, ids, d](Tensor<T>& self) {
            table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const T* g = self.grad.data() + i * std::size_t(d);
                T* dst = table->grad.data() + std::size_t(ids[i]) * std::size_t(d);
                for (int j = 0; j < d; ++j) dst[j] += g[j];
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// attention layout helpers
// ---------------------------------------------------------------------------

/// [N, T, H*dh] -> [N, H, T, dh]
template <typename T>
TensorPtr<T> split_heads(const TensorPtr<T>& x, int heads) {
    if (x->rank() != 3) throw ShapeError("split_heads: expected [N,T,D]");
    const int n = x->dim(0), t = x->dim(1), dm = x->dim(2);
    if (dm % heads) throw ShapeError("split_heads: d_model not divisible by heads");
    const int dh = dm / heads;
    auto out = make_tensor<T>({n, heads, t, dh});
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < t; ++i)
            for (int h = 0; h < heads; ++h) {
                const T* src = x->data() + ((std::size_t(b) * t + std::size_t(i)) * dm + std::size_t(h) * dh);
                T* dst = out->data() + (((std::size_t(b) * heads + std::size_t(h)) * t + std::size_t(i)) * dh);
                std::memcpy(dst, src, std::size_t(dh) * sizeof(T));
            }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, n, t, heads, dh, dm](Tensor<T>& self) {
            x->ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int i = 0; i < t; ++i)
                    for (int h = 0; h < heads; ++h) {
                        const T* g = self.grad.data() + (((std::size_t(b) * heads + std::size_t(h)) * t + std::size_t(i)) * dh);
                        T* dst = x->grad.data() + ((std::size_t(b) * t + std::size_t(i)) * dm + std::size_t(h) * dh);
                        for (int j = 0; j < dh; ++j) dst[j] += g[j];
                    }
        };
    }
    return out;
}

/// [N, H, T, dh] -> [N, T, H*dh]
template <typename T>
TensorPtr<T> merge_heads(const TensorPtr<T>& x) {
    if (x->rank() != 4) throw ShapeError("merge_heads: expected [N,H,T,dh]");
    const int n = x->dim(0), heads = x->dim(1), t = x->dim(2), dh = x->dim(3);
    const int dm = heads * dh;
    auto out = make_tensor<T>({n, t, dm});
    for (int b = 0; b < n; ++b)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < t; ++i) {
                const T* src = x->data() + (((std::size_t(b) * heads + std::size_t(h)) * t + std::size_t(i)) * dh);
                T* dst = out->data() + ((std::size_t(b) * t + std::size_t(i)) * dm + std::size_t(h) * dh);
                std::memcpy(dst, src, std::size_t(dh) * sizeof(T));
            }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, n, t, heads, dh, dm](Tensor<T>& self) {
            x->ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int h = 0; h < heads; ++h)
                    for (int i = 0; i < t; ++i) {
                        const T* g = self.grad.data() + ((std::size_t(b) * t + std::size_t(i)) * dm + std::size_t(h) * dh);
                        T* dst = x->grad.data() + (((std::size_t(b) * heads + std::size_t(h)) * t + std::size_t(i)) * dh);
                        for (int j = 0; j < dh; ++j) dst[j] += g[j];
                    }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolution / pooling / resampling
// ---------------------------------------------------------------------------

/// x[B,C,H,W] (*) w[O,C,kh,kw] + bias[O], zero padding.
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias, int stride = 1, int pad = 0) {
    if (x->rank() != 4 || w->rank() != 4) throw ShapeError("conv2d: expected 4D input and weight");
    const int b_dim = x->dim(0), c_in = x->dim(1), h = x->dim(2), w_in = x->dim(3);
    const int c_out = w->dim(0), kh = w->dim(2), kw = w->dim(3);
    if (w->dim(1) != c_in) throw ShapeError("conv2d: channel mismatch");
    if (bias && bias->numel() != c_out) throw ShapeError("conv2d: bad bias");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w_in + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output");

    auto out = make_tensor<T>({b_dim, c_out, oh, ow});
    auto at = [](const T* p, int c, int y, int x2, int hh, int ww) {
        return p[(std::size_t(c) * hh + std::size_t(y)) * ww + std::size_t(x2)];
    };
    for (int b = 0; b < b_dim; ++b) {
        const T* xb = x->data() + std::size_t(b) * c_in * h * w_in;
        T* ob = out->data() + std::size_t(b) * c_out * oh * ow;
        for (int o = 0; o < c_out; ++o) {
            const T bv = bias ? bias->value[std::size_t(o)] : T(0);
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2) {
                    T acc = bv;
                    for (int c = 0; c < c_in; ++c)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = y * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = x2 * stride - pad + kx;
                                if (ix < 0 || ix >= w_in) continue;
                                acc += at(xb, c, iy, ix, h, w_in) *
                                       w->value[((std::size_t(o) * c_in + std::size_t(c)) * kh + std::size_t(ky)) * kw + std::size_t(kx)];
                            }
                        }
                    ob[(std::size_t(o) * oh + std::size_t(y)) * ow + std::size_t(x2)] = acc;
                }
        }
    }

    if (NoGradGuard::grad_enabled() && (x->needs_grad() || w->needs_grad() || (bias && bias->needs_grad()))) {
        out->parents = {x, w};
        if (bias) out->parents.push_back(bias);
        out->backward_fn = [x, w, bias, b_dim, c_in, h, w_in, c_out, kh, kw, oh, ow, stride, pad](Tensor<T>& self) {
            if (x->needs_grad()) x->ensure_grad();
            if (w->needs_grad()) w->ensure_grad();
            if (bias && bias->needs_grad()) bias->ensure_grad();
            for (int b = 0; b < b_dim; ++b) {
                const T* xb = x->data() + std::size_t(b) * c_in * h * w_in;
                T* dxb = x->needs_grad() ? x->grad.data() + std::size_t(b) * c_in * h * w_in : nullptr;
                const T* gb = self.grad.data() + std::size_t(b) * c_out * oh * ow;
                for (int o = 0; o < c_out; ++o) {
                    for (int y = 0; y < oh; ++y)
                        for (int x2 = 0; x2 < ow; ++x2) {
                            const T g = gb[(std::size_t(o) * oh + std::size_t(y)) * ow + std::size_t(x2)];
                            if (g == T(0)) continue;
                            if (bias && bias->needs_grad()) bias->grad[std::size_t(o)] += g;
                            for (int c = 0; c < c_in; ++c)
                                for (int ky = 0; ky < kh; ++ky) {
                                    const int iy = y * stride - pad + ky;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const int ix = x2 * stride - pad + kx;
                                        if (ix < 0 || ix >= w_in) continue;
                                        const std::size_t xoff = (std::size_t(c) * h + std::size_t(iy)) * w_in + std::size_t(ix);
                                        const std::size_t woff =
                                            ((std::size_t(o) * c_in + std::size_t(c)) * kh + std::size_t(ky)) * kw + std::size_t(kx);
                                        if (w->needs_grad()) w->grad[woff] += g * xb[xoff];
                                        if (dxb) dxb[xoff] += g * w->value[woff];
                                    }
                                }
                        }
                }
            }
        };
    }
    return out;
}

/// Max pooling; ties go to the first (row-major) max so backward is deterministic.
template <typename T>
TensorPtr<T> max_pool2d(const TensorPtr<T>& x, int k, int stride) {
    if (x->rank() != 4) throw ShapeError("max_pool2d: expected 4D");
    const int b_dim = x->dim(0), c_dim = x->dim(1), h = x->dim(2), w_in = x->dim(3);
    const int oh = (h - k) / stride + 1, ow = (w_in - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("max_pool2d: empty output");
    auto out = make_tensor<T>({b_dim, c_dim, oh, ow});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out->value.size());
    std::size_t oi = 0;
    for (int b = 0; b < b_dim; ++b)
        for (int c = 0; c < c_dim; ++c) {
            const T* plane = x->data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
            const std::int64_t base = (std::int64_t(b) * c_dim + c) * h * w_in;
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                    T best = plane[std::size_t(y * stride) * w_in + std::size_t(x2 * stride)];
                    std::int64_t besti = base + std::int64_t(y * stride) * w_in + x2 * stride;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const T v = plane[std::size_t(y * stride + ky) * w_in + std::size_t(x2 * stride + kx)];
                            if (v > best) {
                                best = v;
                                besti = base + std::int64_t(y * stride + ky) * w_in + (x2 * stride + kx);
                            }
                        }
                    out->value[oi] = best;
                    (*argmax)[oi] = besti;
                }
        }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, argmax](Tensor<T>& self) {
            x->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[std::size_t((*argmax)[i])] += self.grad[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> avg_pool2d(const TensorPtr<T>& x, int k, int stride) {
    if (x->rank() != 4) throw ShapeError("avg_pool2d: expected 4D");
    const int b_dim = x->dim(0), c_dim = x->dim(1), h = x->dim(2), w_in = x->dim(3);
    const int oh = (h - k) / stride + 1, ow = (w_in - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("avg_pool2d: empty output");
    auto out = make_tensor<T>({b_dim, c_dim, oh, ow});
    const T inv = T(1) / T(k * k);
    std::size_t oi = 0;
    for (int b = 0; b < b_dim; ++b)
        for (int c = 0; c < c_dim; ++c) {
            const T* plane = x->data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                    T acc = 0;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc += plane[std::size_t(y * stride + ky) * w_in + std::size_t(x2 * stride + kx)];
                    out->value[oi] = acc * inv;
                }
        }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, b_dim, c_dim, h, w_in, oh, ow, k, stride, inv](Tensor<T>& self) {
            x->ensure_grad();
            std::size_t oi = 0;
            for (int b = 0; b < b_dim; ++b)
                for (int c = 0; c < c_dim; ++c) {
                    T* plane = x->grad.data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
                    for (int y = 0; y < oh; ++y)
                        for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                            const T g = self.grad[oi] * inv;
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    plane[std::size_t(y * stride + ky) * w_in + std::size_t(x2 * stride + kx)] += g;
                        }
                }
        };
    }
    return out;
}

/// Average pool to a fixed output grid; window edges are floor/ceil fractions
/// of the input so any input size (even smaller than the output) works.
template <typename T>
TensorPtr<T> adaptive_avg_pool2d(const TensorPtr<T>& x, int oh, int ow) {
    if (x->rank() != 4) throw ShapeError("adaptive_avg_pool2d: expected 4D");
    const int b_dim = x->dim(0), c_dim = x->dim(1), h = x->dim(2), w_in = x->dim(3);
    auto edges = [](int out_i, int in_dim, int out_dim, int& lo, int& hi) {
        lo = (out_i * in_dim) / out_dim;
        hi = ((out_i + 1) * in_dim + out_dim - 1) / out_dim;
    };
    auto out = make_tensor<T>({b_dim, c_dim, oh, ow});
    std::size_t oi = 0;
    for (int b = 0; b < b_dim; ++b)
        for (int c = 0; c < c_dim; ++c) {
            const T* plane = x->data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                    int y0, y1, x0, x1;
                    edges(y, h, oh, y0, y1);
                    edges(x2, w_in, ow, x0, x1);
                    T acc = 0;
                    for (int iy = y0; iy < y1; ++iy)
                        for (int ix = x0; ix < x1; ++ix) acc += plane[std::size_t(iy) * w_in + std::size_t(ix)];
                    out->value[oi] = acc / T((y1 - y0) * (x1 - x0));
                }
        }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, b_dim, c_dim, h, w_in, oh, ow, edges](Tensor<T>& self) {
            x->ensure_grad();
            std::size_t oi = 0;
            for (int b = 0; b < b_dim; ++b)
                for (int c = 0; c < c_dim; ++c) {
                    T* plane = x->grad.data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
                    for (int y = 0; y < oh; ++y)
                        for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                            int y0, y1, x0, x1;
                            edges(y, h, oh, y0, y1);
                            edges(x2, w_in, ow, x0, x1);
                            const T g = self.grad[oi] / T((y1 - y0) * (x1 - x0));
                            for (int iy = y0; iy < y1; ++iy)
                                for (int ix = x0; ix < x1; ++ix) plane[std::size_t(iy) * w_in + std::size_t(ix)] += g;
                        }
                }
        };
    }
    return out;
}

/// Bilinear resize (half-pixel centers, clamped edges).
template <typename T>
TensorPtr<T> upsample_bilinear(const TensorPtr<T>& x, int oh, int ow) {
    if (x->rank() != 4) throw ShapeError("upsample_bilinear: expected 4D");
    const int b_dim = x->dim(0), c_dim = x->dim(1), h = x->dim(2), w_in = x->dim(3);
    struct Tap {
        int i0, i1;
        T w0, w1;
    };
    auto taps = [](int out_dim, int in_dim) {
        std::vector<Tap> t(static_cast<std::size_t>(out_dim));
        for (int i = 0; i < out_dim; ++i) {
            double src = (double(i) + 0.5) * double(in_dim) / double(out_dim) - 0.5;
            if (src < 0) src = 0;
            if (src > in_dim - 1) src = in_dim - 1;
            const int i0 = int(src);
            const int i1 = std::min(i0 + 1, in_dim - 1);
            const T f = T(src - i0);
            t[std::size_t(i)] = {i0, i1, T(1) - f, f};
        }
        return t;
    };
    const auto ty = taps(oh, h);
    const auto tx = taps(ow, w_in);
    auto out = make_tensor<T>({b_dim, c_dim, oh, ow});
    std::size_t oi = 0;
    for (int b = 0; b < b_dim; ++b)
        for (int c = 0; c < c_dim; ++c) {
            const T* plane = x->data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                    const Tap& a = ty[std::size_t(y)];
                    const Tap& b2 = tx[std::size_t(x2)];
                    out->value[oi] = a.w0 * (b2.w0 * plane[std::size_t(a.i0) * w_in + std::size_t(b2.i0)] +
                                             b2.w1 * plane[std::size_t(a.i0) * w_in + std::size_t(b2.i1)]) +
                                     a.w1 * (b2.w0 * plane[std::size_t(a.i1) * w_in + std::size_t(b2.i0)] +
                                             b2.w1 * plane[std::size_t(a.i1) * w_in + std::size_t(b2.i1)]);
                }
        }
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, b_dim, c_dim, h, w_in, oh, ow, ty, tx](Tensor<T>& self) {
            x->ensure_grad();
            std::size_t oi = 0;
            for (int b = 0; b < b_dim; ++b)
                for (int c = 0; c < c_dim; ++c) {
                    T* plane = x->grad.data() + (std::size_t(b) * c_dim + std::size_t(c)) * h * w_in;
                    for (int y = 0; y < oh; ++y)
                        for (int x2 = 0; x2 < ow; ++x2, ++oi) {
                            const T g = self.grad[oi];
                            const Tap& a = ty[std::size_t(y)];
                            const Tap& b2 = tx[std::size_t(x2)];
                            plane[std::size_t(a.i0) * w_in + std::size_t(b2.i0)] += g * a.w0 * b2.w0;
                            plane[std::size_t(a.i0) * w_in + std::size_t(b2.i1)] += g * a.w0 * b2.w1;
                            plane[std::size_t(a.i1) * w_in + std::size_t(b2.i0)] += g * a.w1 * b2.w0;
                            plane[std::size_t(a.i1) * w_in + std::size_t(b2.i1)] += g * a.w1 * b2.w1;
                        }
                }
        };
    }
    return out;
}

}  // namespace glyphlm
