#pragma once

#include <cmath>
#include <vector>

#include "icdit/tensor.hpp"

namespace icdit {

// Op library for the tensor engine. Shapes are validated up front, values
// are computed with sequential row-major loops (the determinism contract),
// and every op wires a backprop closure that reads self.grad and accumulates
// into self.parents.

namespace detail {

template <class T>
void mm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            ci[j] = T(0);
        }
        const T* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T aip = ai[p];
            const T* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <class T>
void mm_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<size_t>(i) * k;
        T* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) {
                acc += ai[p] * bj[p];
            }
            ci[j] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <class T>
void mm_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<size_t>(i) * k;
        const T* bi = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T aip = ai[p];
            T* cp = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                cp[j] += aip * bi[j];
            }
        }
    }
}

template <class T>
void same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    require(a.shape() == b.shape(), errc::shape_mismatch, std::string(op) + ": shape mismatch");
}

// Treats the last axis as the feature axis and everything before it as rows.
template <class T>
std::pair<int, int> as_rows(const TensorT<T>& a) {
    int d = a.size(a.rank() - 1);
    int rows = static_cast<int>(a.numel() / d);
    return {rows, d};
}

}  // namespace detail

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    detail::same_shape(a, b, "add");
    std::vector<T> v(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] += bv[i];
    }
    return detail::make_result<T>(a.shape(), std::move(v), "add", {a, b}, [](NodeT<T>& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], self.grad);
    });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::same_shape(a, b, "sub");
    std::vector<T> v(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] -= bv[i];
    }
    return detail::make_result<T>(a.shape(), std::move(v), "sub", {a, b}, [](NodeT<T>& self) {
        detail::accumulate(*self.parents[0], self.grad);
        auto& p = *self.parents[1];
        if (p.requires_grad) {
            p.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] -= self.grad[i];
            }
        }
    });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::same_shape(a, b, "mul");
    std::vector<T> v(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] *= bv[i];
    }
    return detail::make_result<T>(a.shape(), std::move(v), "mul", {a, b}, [](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                pa.grad[i] += self.grad[i] * pb.value[i];
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                pb.grad[i] += self.grad[i] * pa.value[i];
            }
        }
    });
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T c) {
    std::vector<T> v(a.data());
    for (auto& x : v) {
        x *= c;
    }
    return detail::make_result<T>(a.shape(), std::move(v), "scale", {a}, [c](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[i] += self.grad[i] * c;
            }
        }
    });
}

template <class T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
    std::vector<T> v(a.data());
    for (auto& x : v) {
        x += c;
    }
    return detail::make_result<T>(a.shape(), std::move(v), "add_scalar", {a}, [](NodeT<T>& self) {
        detail::accumulate(*self.parents[0], self.grad);
    });
}

template <class T>
TensorT<T> neg(const TensorT<T>& a) {
    return scale(a, T(-1));
}

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    require(a.rank() == 2 && b.rank() == 2, errc::shape_mismatch, "matmul: expects 2-d tensors");
    int m = a.size(0), k = a.size(1), k2 = b.size(0), n = b.size(1);
    require(k == k2, errc::shape_mismatch, "matmul: inner dimensions differ");
    std::vector<T> v(static_cast<size_t>(m) * n);
    detail::mm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
    return detail::make_result<T>({m, n}, std::move(v), "matmul", {a, b}, [m, k, n](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            detail::mm_nt_acc(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            detail::mm_tn_acc(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n);
        }
    });
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
    require(a.rank() == 2, errc::shape_mismatch, "transpose: expects a 2-d tensor");
    int m = a.size(0), n = a.size(1);
    std::vector<T> v(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            v[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
        }
    }
    return detail::make_result<T>({n, m}, std::move(v), "transpose", {a}, [m, n](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    p.grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
                }
            }
        }
    });
}

template <class T>
TensorT<T> silu(const TensorT<T>& a) {
    std::vector<T> v(a.data());
    for (auto& x : v) {
        T s = T(1) / (T(1) + std::exp(-x));
        x = x * s;
    }
    return detail::make_result<T>(a.shape(), std::move(v), "silu", {a}, [](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                T x = p.value[i];
                T s = T(1) / (T(1) + std::exp(-x));
                p.grad[i] += self.grad[i] * s * (T(1) + x * (T(1) - s));
            }
        }
    });
}

// Softmax over the last axis, numerically stabilized per row.
template <class T>
TensorT<T> softmax_rows(const TensorT<T>& a) {
    auto [rows, d] = detail::as_rows(a);
    std::vector<T> v(a.data());
    for (int r = 0; r < rows; ++r) {
        T* row = v.data() + static_cast<size_t>(r) * d;
        T mx = row[0];
        for (int j = 1; j < d; ++j) {
            mx = std::max(mx, row[j]);
        }
        T denom = T(0);
        for (int j = 0; j < d; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (int j = 0; j < d; ++j) {
            row[j] /= denom;
        }
    }
    int dd = d;
    int rr = rows;
    return detail::make_result<T>(a.shape(), std::move(v), "softmax", {a}, [rr, dd](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) {
            return;
        }
        p.ensure_grad();
        for (int r = 0; r < rr; ++r) {
            const T* y = self.value.data() + static_cast<size_t>(r) * dd;
            const T* g = self.grad.data() + static_cast<size_t>(r) * dd;
            T dot = T(0);
            for (int j = 0; j < dd; ++j) {
                dot += y[j] * g[j];
            }
            T* out = p.grad.data() + static_cast<size_t>(r) * dd;
            for (int j = 0; j < dd; ++j) {
                out[j] += y[j] * (g[j] - dot);
            }
        }
    });
}

// x / sqrt(mean(x^2) + eps) over the last axis (no learned gain; adaptive
// modulation supplies scaling).
template <class T>
TensorT<T> rms_norm_rows(const TensorT<T>& a, T eps = T(1e-5)) {
    auto [rows, d] = detail::as_rows(a);
    std::vector<T> v(a.data());
    std::vector<T> inv(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        T* row = v.data() + static_cast<size_t>(r) * d;
        T ms = T(0);
        for (int j = 0; j < d; ++j) {
            ms += row[j] * row[j];
        }
        ms = ms / static_cast<T>(d) + eps;
        T s = T(1) / std::sqrt(ms);
        inv[static_cast<size_t>(r)] = s;
        for (int j = 0; j < d; ++j) {
            row[j] *= s;
        }
    }
    int dd = d;
    int rr = rows;
    return detail::make_result<T>(a.shape(), std::move(v), "rms_norm", {a},
                                  [rr, dd, inv = std::move(inv)](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) {
            return;
        }
        p.ensure_grad();
        for (int r = 0; r < rr; ++r) {
            const T* x = p.value.data() + static_cast<size_t>(r) * dd;
            const T* g = self.grad.data() + static_cast<size_t>(r) * dd;
            T s = inv[static_cast<size_t>(r)];
            T dot = T(0);
            for (int j = 0; j < dd; ++j) {
                dot += x[j] * g[j];
            }
            T k = s * s * s * dot / static_cast<T>(dd);
            T* out = p.grad.data() + static_cast<size_t>(r) * dd;
            for (int j = 0; j < dd; ++j) {
                out[j] += s * g[j] - k * x[j];
            }
        }
    });
}

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
    T acc = T(0);
    for (T x : a.data()) {
        acc += x;
    }
    return detail::make_result<T>({1}, {acc}, "sum", {a}, [](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (auto& g : p.grad) {
                g += self.grad[0];
            }
        }
    });
}

template <class T>
TensorT<T> mean(const TensorT<T>& a) {
    T acc = T(0);
    for (T x : a.data()) {
        acc += x;
    }
    T n = static_cast<T>(a.numel());
    return detail::make_result<T>({1}, {acc / n}, "mean", {a}, [n](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            T g = self.grad[0] / n;
            for (auto& gi : p.grad) {
                gi += g;
            }
        }
    });
}

// mean((a - b)^2) over all elements
template <class T>
TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b) {
    detail::same_shape(a, b, "mse");
    T acc = T(0);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) {
        T d = av[i] - bv[i];
        acc += d * d;
    }
    T n = static_cast<T>(a.numel());
    return detail::make_result<T>({1}, {acc / n}, "mse", {a, b}, [n](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        T g = self.grad[0] * T(2) / n;
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < pa.value.size(); ++i) {
                pa.grad[i] += g * (pa.value[i] - pb.value[i]);
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < pb.value.size(); ++i) {
                pb.grad[i] -= g * (pa.value[i] - pb.value[i]);
            }
        }
    });
}

template <class T>
TensorT<T> slice_rows(const TensorT<T>& a, int start, int len) {
    require(a.rank() == 2, errc::shape_mismatch, "slice_rows: expects a 2-d tensor");
    int n = a.size(0), d = a.size(1);
    require(start >= 0 && len >= 1 && start + len <= n, errc::invalid_argument,
            "slice_rows: range out of bounds");
    std::vector<T> v(a.data().begin() + static_cast<size_t>(start) * d,
                     a.data().begin() + static_cast<size_t>(start + len) * d);
    return detail::make_result<T>({len, d}, std::move(v), "slice_rows", {a}, [start, d](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            size_t off = static_cast<size_t>(start) * d;
            for (size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[off + i] += self.grad[i];
            }
        }
    });
}

template <class T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts) {
    require(!parts.empty(), errc::invalid_argument, "concat_rows: empty input");
    int d = parts[0].size(1);
    int total = 0;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.size(1) == d, errc::shape_mismatch, "concat_rows: column mismatch");
        total += p.size(0);
    }
    std::vector<T> v;
    v.reserve(static_cast<size_t>(total) * d);
    std::vector<int> row_counts;
    for (const auto& p : parts) {
        v.insert(v.end(), p.data().begin(), p.data().end());
        row_counts.push_back(p.size(0));
    }
    return detail::make_result<T>({total, d}, std::move(v), "concat_rows", parts,
                                  [row_counts, d](NodeT<T>& self) {
        size_t off = 0;
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
            auto& p = *self.parents[pi];
            size_t count = static_cast<size_t>(row_counts[pi]) * d;
            if (p.requires_grad) {
                p.ensure_grad();
                for (size_t i = 0; i < count; ++i) {
                    p.grad[i] += self.grad[off + i];
                }
            }
            off += count;
        }
    });
}

template <class T>
TensorT<T> slice_cols(const TensorT<T>& a, int start, int len) {
    require(a.rank() == 2, errc::shape_mismatch, "slice_cols: expects a 2-d tensor");
    int n = a.size(0), d = a.size(1);
    require(start >= 0 && len >= 1 && start + len <= d, errc::invalid_argument,
            "slice_cols: range out of bounds");
    std::vector<T> v(static_cast<size_t>(n) * len);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < len; ++j) {
            v[static_cast<size_t>(i) * len + j] = a.data()[static_cast<size_t>(i) * d + start + j];
        }
    }
    return detail::make_result<T>({n, len}, std::move(v), "slice_cols", {a},
                                  [n, d, start, len](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < len; ++j) {
                    p.grad[static_cast<size_t>(i) * d + start + j] +=
                        self.grad[static_cast<size_t>(i) * len + j];
                }
            }
        }
    });
}

template <class T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    require(!parts.empty(), errc::invalid_argument, "concat_cols: empty input");
    int n = parts[0].size(0);
    int total = 0;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.size(0) == n, errc::shape_mismatch, "concat_cols: row mismatch");
        total += p.size(1);
    }
    std::vector<T> v(static_cast<size_t>(n) * total);
    std::vector<int> widths;
    int off = 0;
    for (const auto& p : parts) {
        int w = p.size(1);
        widths.push_back(w);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < w; ++j) {
                v[static_cast<size_t>(i) * total + off + j] = p.data()[static_cast<size_t>(i) * w + j];
            }
        }
        off += w;
    }
    return detail::make_result<T>({n, total}, std::move(v), "concat_cols", parts,
                                  [n, total, widths](NodeT<T>& self) {
        int off2 = 0;
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
            auto& p = *self.parents[pi];
            int w = widths[pi];
            if (p.requires_grad) {
                p.ensure_grad();
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < w; ++j) {
                        p.grad[static_cast<size_t>(i) * w + j] +=
                            self.grad[static_cast<size_t>(i) * total + off2 + j];
                    }
                }
            }
            off2 += w;
        }
    });
}

// Same data, new shape (element count must match); backward is the identity.
template <class T>
TensorT<T> reshape(const TensorT<T>& a, std::vector<int> new_shape) {
    int64_t n = 1;
    for (int d : new_shape) {
        n *= d;
    }
    require(n == a.numel(), errc::shape_mismatch, "reshape: element count mismatch");
    std::vector<T> v(a.data());
    return detail::make_result<T>(std::move(new_shape), std::move(v), "reshape", {a},
                                  [](NodeT<T>& self) { detail::accumulate(*self.parents[0], self.grad); });
}

// 1-d slice over the flattened (row-major) data.
template <class T>
TensorT<T> slice_flat(const TensorT<T>& a, int64_t start, int64_t len) {
    require(start >= 0 && len >= 1 && start + len <= a.numel(), errc::invalid_argument,
            "slice_flat: range out of bounds");
    std::vector<T> v(a.data().begin() + start, a.data().begin() + start + len);
    return detail::make_result<T>({static_cast<int>(len)}, std::move(v), "slice_flat", {a},
                                  [start](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                p.grad[static_cast<size_t>(start) + i] += self.grad[i];
            }
        }
    });
}

// y[i,j] = a[i,j] + v[j]; v may be shaped [d] or [1,d]
template <class T>
TensorT<T> add_rowvec(const TensorT<T>& a, const TensorT<T>& v) {
    int n = a.size(0), d = a.size(1);
    require(a.rank() == 2 && static_cast<int64_t>(d) == v.numel(), errc::shape_mismatch,
            "add_rowvec: feature width mismatch");
    std::vector<T> out(a.data());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            out[static_cast<size_t>(i) * d + j] += v.data()[static_cast<size_t>(j)];
        }
    }
    return detail::make_result<T>(a.shape(), std::move(out), "add_rowvec", {a, v},
                                  [n, d](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pa.requires_grad) {
            detail::accumulate(pa, self.grad);
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    pv.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * d + j];
                }
            }
        }
    });
}

// y[i,j] = a[i,j] * v[j]
template <class T>
TensorT<T> mul_rowvec(const TensorT<T>& a, const TensorT<T>& v) {
    int n = a.size(0), d = a.size(1);
    require(a.rank() == 2 && static_cast<int64_t>(d) == v.numel(), errc::shape_mismatch,
            "mul_rowvec: feature width mismatch");
    std::vector<T> out(a.data());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            out[static_cast<size_t>(i) * d + j] *= v.data()[static_cast<size_t>(j)];
        }
    }
    return detail::make_result<T>(a.shape(), std::move(out), "mul_rowvec", {a, v},
                                  [n, d](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    pa.grad[static_cast<size_t>(i) * d + j] +=
                        self.grad[static_cast<size_t>(i) * d + j] * pv.value[static_cast<size_t>(j)];
                }
            }
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    pv.grad[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * d + j] *
                                                       pa.value[static_cast<size_t>(i) * d + j];
                }
            }
        }
    });
}

}  // namespace icdit
