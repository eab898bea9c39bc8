#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aan/errors.hpp"
#include "aan/tensor.hpp"

namespace aan {

namespace detail {

// c[m×n] += a[m×k] · b[k×n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// da[m×k] += dc[m×n] · b[k×n]ᵀ
inline void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dci = dc + i * n;
        double* dai = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dci[j] * bp[j];
            dai[p] += acc;
        }
    }
}

// db[k×n] += a[m×k]ᵀ · dc[m×n]
inline void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* dci = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            double* dbp = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * dci[j];
        }
    }
}

inline void require_finite(const Tensor& x, const char* op) {
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

inline bool is_suffix(const Shape& full, const Shape& tail) {
    if (tail.size() > full.size()) return false;
    return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

}  // namespace detail

/// Matrix product over the last two axes. `a` is [..., m, k]; `b` is either a
/// shared [k, n] matrix or a batch [..., k, n] with the same leading axes as `a`.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    const std::size_t batch = a.numel() / (m * k);
    const bool shared = b.rank() == 2;
    if (!shared) {
        bool same_lead = b.rank() == a.rank() && std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin());
        if (!same_lead) {
            throw DimensionError("matmul: batch axes differ " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
        }
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(batch * m * n, 0.0);
    if (shared) {
        detail::gemm_nn(a.data().data(), b.data().data(), out.data(), batch * m, k, n);
    } else {
        for (std::size_t s = 0; s < batch; ++s) {
            detail::gemm_nn(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n);
        }
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, "matmul",
                               [batch, m, k, n, shared](detail::Node& self) {
                                   auto& a = *self.inputs[0];
                                   auto& b = *self.inputs[1];
                                   const double* dc = self.grad.data();
                                   if (a.requires_grad) {
                                       a.ensure_grad();
                                       if (shared) {
                                           detail::gemm_nt(dc, b.data.data(), a.grad.data(), batch * m, n, k);
                                       } else {
                                           for (std::size_t s = 0; s < batch; ++s)
                                               detail::gemm_nt(dc + s * m * n, b.data.data() + s * k * n,
                                                               a.grad.data() + s * m * k, m, n, k);
                                       }
                                   }
                                   if (b.requires_grad) {
                                       b.ensure_grad();
                                       if (shared) {
                                           detail::gemm_tn(a.data.data(), dc, b.grad.data(), batch * m, k, n);
                                       } else {
                                           for (std::size_t s = 0; s < batch; ++s)
                                               detail::gemm_tn(a.data.data() + s * m * k, dc + s * m * n,
                                                               b.grad.data() + s * k * n, m, k, n);
                                       }
                                   }
                               });
}

/// Elementwise sum. `b` may also be a trailing sub-shape of `a` (a bias row or
/// a positional table), broadcast over the leading axes.
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!detail::is_suffix(a.shape(), b.shape())) {
        throw DimensionError("add: cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(a.shape()));
    }
    const std::size_t period = b.numel();
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % period];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add", [period](detail::Node& self) {
        auto& a = *self.inputs[0];
        auto& b = *self.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a.grad[i] += self.grad[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) b.grad[i % period] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "sub", [](detail::Node& self) {
        auto& a = *self.inputs[0];
        auto& b = *self.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a.grad[i] += self.grad[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) b.grad[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul", [](detail::Node& self) {
        auto& a = *self.inputs[0];
        auto& b = *self.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a.grad[i] += self.grad[i] * b.data[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) b.grad[i] += self.grad[i] * a.data[i];
        }
    });
}

inline Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
    return Tensor::make_result(x.shape(), std::move(out), {x}, "scale", [factor](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * factor;
    });
}

inline Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return Tensor::make_result(x.shape(), std::move(out), {x}, "relu", [](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (x.data[i] > 0.0) x.grad[i] += self.grad[i];
        }
    });
}

// Elementwise f with derivative df; used for one-off nonlinearities and for
// exercising the gradient checker with deliberately wrong rules.
inline Tensor map_unary(const Tensor& x, std::function<double(double)> f, std::function<double(double)> df,
                        const char* name = "map_unary") {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, name, [df = std::move(df)](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * df(x.data[i]);
    });
}

namespace detail {

inline void softmax_backward(Node& self, std::size_t cols) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    const std::size_t rows = self.data.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.data.data() + r * cols;
        const double* dy = self.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
        double* dx = x.grad.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
}

}  // namespace detail

/// Softmax along the last axis, stabilized by subtracting the row maximum.
inline Tensor softmax_rows(const Tensor& x) {
    detail::require_finite(x, "softmax_rows");
    const std::size_t cols = x.dim(-1);
    const std::size_t rows = x.numel() / cols;
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * cols;
        double* yr = out.data() + r * cols;
        const double mx = *std::max_element(xr, xr + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) yr[j] /= total;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "softmax_rows",
                               [cols](detail::Node& self) { detail::softmax_backward(self, cols); });
}

inline constexpr double kMaskedLogit = -1e9;

/// Softmax over the last axis of logits [..., n_q, n_k] with a shared
/// allow-matrix (row-major n_q × n_k, nonzero = allowed). Forbidden logits get
/// a large negative offset and their weights are then pinned to exactly zero.
inline Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> allow, std::size_t n_q,
                             std::size_t n_k) {
    if (logits.rank() < 2 || logits.dim(-2) != n_q || logits.dim(-1) != n_k || allow.size() != n_q * n_k) {
        throw DimensionError("masked_softmax: mask " + std::to_string(n_q) + "x" + std::to_string(n_k) +
                             " does not fit logits " + shape_str(logits.shape()));
    }
    for (std::size_t i = 0; i < n_q; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n_k; ++j) any = any || allow[i * n_k + j];
        if (!any) throw ContractError("masked_softmax: query row " + std::to_string(i) + " has no allowed key");
    }
    detail::require_finite(logits, "masked_softmax");
    const std::size_t rows = logits.numel() / n_k;
    std::vector<double> out(logits.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint8_t* ar = allow.data() + (r % n_q) * n_k;
        const double* xr = logits.data().data() + r * n_k;
        double* yr = out.data() + r * n_k;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_k; ++j) {
            yr[j] = ar[j] ? xr[j] : xr[j] + kMaskedLogit;
            mx = std::max(mx, yr[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n_k; ++j) total += (yr[j] = std::exp(yr[j] - mx));
        for (std::size_t j = 0; j < n_k; ++j) yr[j] = ar[j] ? yr[j] / total : 0.0;
    }
    // With forbidden weights at exactly zero the plain softmax rule already
    // routes no gradient to them.
    return Tensor::make_result(logits.shape(), std::move(out), {logits}, "masked_softmax",
                               [n_k](detail::Node& self) { detail::softmax_backward(self, n_k); });
}

/// Normalizes each vector along the last axis to zero mean and unit (population)
/// variance, then applies gain and bias of width d.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-9) {
    const std::size_t d = x.dim(-1);
    if (d < 2) throw DimensionError("layer_norm: last axis must have length >= 2, got " + shape_str(x.shape()));
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
        throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                             " do not match width " + std::to_string(d));
    }
    if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mean) * rstd[r];
            out[r * d + j] = xhat[r * d + j] * gain[j] + bias[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
        [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
            auto& x = *self.inputs[0];
            auto& gain = *self.inputs[1];
            auto& bias = *self.inputs[2];
            if (gain.requires_grad) gain.ensure_grad();
            if (bias.requires_grad) bias.ensure_grad();
            if (x.requires_grad) x.ensure_grad();
            std::vector<double> dxhat(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* dy = self.grad.data() + r * d;
                const double* xh = xhat.data() + r * d;
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    if (gain.requires_grad) gain.grad[j] += dy[j] * xh[j];
                    if (bias.requires_grad) bias.grad[j] += dy[j];
                    dxhat[j] = dy[j] * gain.data[j];
                    mean_dxhat += dxhat[j];
                    mean_dxhat_xhat += dxhat[j] * xh[j];
                }
                if (!x.requires_grad) continue;
                mean_dxhat /= static_cast<double>(d);
                mean_dxhat_xhat /= static_cast<double>(d);
                double* dx = x.grad.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) dx[j] += rstd[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        });
}

// Swaps the last two axes.
inline Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) throw DimensionError("transpose: needs rank >= 2, got " + shape_str(x.shape()));
    const std::size_t m = x.dim(-2), n = x.dim(-1);
    const std::size_t batch = x.numel() / (m * n);
    Shape shape = x.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    std::vector<double> out(x.numel());
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[s * m * n + j * m + i] = x[s * m * n + i * n + j];
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "transpose", [batch, m, n](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) x.grad[s * m * n + i * n + j] += self.grad[s * m * n + j * m + i];
    });
}

/// Concatenates tensors that agree on all but the last axis.
inline Tensor concat_last_axis(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_last_axis: nothing to concatenate");
    const Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (Shape(p.shape().begin(), p.shape().end() - 1) != lead) {
            throw DimensionError("concat_last_axis: leading axes differ " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        widths.push_back(p.dim(-1));
        total += p.dim(-1);
    }
    const std::size_t rows = shape_numel(lead);
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < parts.size(); ++t) {
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(parts[t].data().data() + r * widths[t], widths[t], out.data() + r * total + offset);
        offset += widths[t];
    }
    Shape shape = lead;
    shape.push_back(total);
    return Tensor::make_result(std::move(shape), std::move(out), parts, "concat_last_axis",
                               [rows, total, widths](detail::Node& self) {
                                   std::size_t offset = 0;
                                   for (std::size_t t = 0; t < widths.size(); ++t) {
                                       auto& p = *self.inputs[t];
                                       if (p.requires_grad) {
                                           p.ensure_grad();
                                           for (std::size_t r = 0; r < rows; ++r)
                                               for (std::size_t j = 0; j < widths[t]; ++j)
                                                   p.grad[r * widths[t] + j] += self.grad[r * total + offset + j];
                                       }
                                       offset += widths[t];
                                   }
                               });
}

// Columns [begin, end) of the last axis.
inline Tensor slice_last_axis(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t n = x.dim(-1);
    if (begin >= end || end > n) {
        throw DimensionError("slice_last_axis: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    const std::size_t rows = x.numel() / n;
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * n + begin, w, out.data() + r * w);
    Shape shape = x.shape();
    shape.back() = w;
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "slice_last_axis",
                               [rows, n, w, begin](detail::Node& self) {
                                   auto& x = *self.inputs[0];
                                   x.ensure_grad();
                                   for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t j = 0; j < w; ++j) x.grad[r * n + begin + j] += self.grad[r * w + j];
                               });
}

inline Tensor mean_over_axis(const Tensor& x, int axis) {
    const int r = static_cast<int>(x.rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw DimensionError("mean_over_axis: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    const auto& s = x.shape();
    const std::size_t len = s[static_cast<std::size_t>(a)];
    const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + a));
    const std::size_t inner = shape_numel(Shape(s.begin() + a + 1, s.end()));
    Shape shape(s.begin(), s.begin() + a);
    shape.insert(shape.end(), s.begin() + a + 1, s.end());
    if (shape.empty()) shape = {1};
    std::vector<double> out(outer * inner, 0.0);
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i] * inv;
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "mean_over_axis",
                               [outer, len, inner, inv](detail::Node& self) {
                                   auto& x = *self.inputs[0];
                                   x.ensure_grad();
                                   for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t l = 0; l < len; ++l)
                                           for (std::size_t i = 0; i < inner; ++i)
                                               x.grad[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
                               });
}

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_result({1}, {total}, {x}, "sum", [](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (double& g : x.grad) g += self.grad[0];
    });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
    }
    return Tensor::make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x}, "reshape",
                               [](detail::Node& self) {
                                   auto& x = *self.inputs[0];
                                   x.ensure_grad();
                                   for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
                               });
}

// Appends an axis of length d holding d copies of each element.
inline Tensor expand_last(const Tensor& x, std::size_t d) {
    if (d == 0) throw ParameterError("expand_last: width must be positive");
    std::vector<double> out(x.numel() * d);
    for (std::size_t i = 0; i < x.numel(); ++i) std::fill_n(out.data() + i * d, d, x[i]);
    Shape shape = x.shape();
    shape.push_back(d);
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "expand_last", [d](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += self.grad[i * d + j];
            x.grad[i] += acc;
        }
    });
}

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); otherwise the identity.
inline Tensor dropout(const Tensor& x, double rate, bool training, Rng* rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout: training mode needs a generator");
    std::bernoulli_distribution keep(1.0 - rate);
    const double survivor = 1.0 / (1.0 - rate);
    std::vector<double> factor(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        factor[i] = keep(*rng) ? survivor : 0.0;
        out[i] = x[i] * factor[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "dropout", [factor = std::move(factor)](detail::Node& self) {
        auto& x = *self.inputs[0];
        x.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * factor[i];
    });
}

}  // namespace aan
