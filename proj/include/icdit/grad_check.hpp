#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "icdit/ops.hpp"
#include "icdit/positional.hpp"
#include "icdit/rng.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Central-difference gradient checking. The analytic side runs the float
// engine and backpropagates from sum(f(x)); the numeric side evaluates the
// same function instantiated at double precision, so the oracle is limited
// by truncation error rather than float round-off.

struct GradCheckReport {
    double max_rel_err = 0.0;
    int checked_coords = 0;
};

class OpRegistry {
public:
    using FnF32 = std::function<Tensor(const Tensor&)>;
    using FnF64 = std::function<TensorT<double>(const TensorT<double>&)>;

    template <class F>
    void add(const std::string& name, F fn) {
        fns_[name] = {FnF32(fn), FnF64(fn)};
    }

    bool contains(const std::string& name) const { return fns_.count(name) > 0; }

    const std::pair<FnF32, FnF64>& get(const std::string& name) const {
        auto it = fns_.find(name);
        require(it != fns_.end(), errc::unknown_name, "grad_check: unknown function id '" + name + "'");
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : fns_) {
            out.push_back(k);
        }
        return out;
    }

    static OpRegistry& instance() {
        static OpRegistry r;
        return r;
    }

private:
    std::map<std::string, std::pair<FnF32, FnF64>> fns_;
};

// max over checked input coordinates of
//   |analytic - central| / max(|analytic|, |central|, 1e-8)
// max_probes = 0 checks every coordinate; otherwise a seeded subset.
inline GradCheckReport grad_check(const std::string& id, const Tensor& input, double eps,
                                  int max_probes = 0) {
    require(eps >= 1e-5 && eps <= 1e-2, errc::invalid_argument, "grad_check: eps must be in [1e-5, 1e-2]");
    const auto& [f32, f64] = OpRegistry::instance().get(id);

    Tensor x = Tensor::from(input.shape(), input.data(), true);
    Tensor y = f32(x);
    sum(y).backward();
    std::vector<float> analytic = x.grad();
    require(!analytic.empty(), errc::invalid_argument, "grad_check: function does not depend on input");

    std::vector<size_t> coords;
    if (max_probes <= 0 || static_cast<size_t>(max_probes) >= analytic.size()) {
        coords.resize(analytic.size());
        for (size_t i = 0; i < coords.size(); ++i) {
            coords[i] = i;
        }
    } else {
        Rng rng(derive_seed(0x9e3779b9u, id));
        for (int i = 0; i < max_probes; ++i) {
            coords.push_back(static_cast<size_t>(rng.uniform_int(0, static_cast<int>(analytic.size()) - 1)));
        }
    }

    TensorT<double> base = input.cast<double>();
    GradCheckReport report;
    no_grad_scope ng;
    for (size_t c : coords) {
        std::vector<double> plus = base.data();
        std::vector<double> minus = base.data();
        plus[c] += eps;
        minus[c] -= eps;
        auto eval = [&](std::vector<double> data) {
            auto xt = TensorT<double>::from(base.shape(), std::move(data));
            auto out = f64(xt);
            double acc = 0.0;
            for (double v : out.data()) {
                acc += v;
            }
            return acc;
        };
        double central = (eval(std::move(plus)) - eval(std::move(minus))) / (2.0 * eps);
        double a = static_cast<double>(analytic[c]);
        double denom = std::max({std::abs(a), std::abs(central), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, std::abs(a - central) / denom);
        report.checked_coords += 1;
    }
    return report;
}

// Fixed auxiliary tensors for the checked ops are drawn at double precision
// and narrowed, so the float and double instantiations see the same values.
inline Tensor aux_tensor(std::vector<int> shape, uint64_t seed, float stddev = 1.0f) {
    Rng rng(seed);
    auto t64 = TensorT<double>::randn(std::move(shape), rng, static_cast<double>(stddev));
    return t64.cast<float>();
}

inline void register_builtin_ops() {
    auto& reg = OpRegistry::instance();
    if (reg.contains("silu")) {
        return;
    }
    // Permutation-style ops and softmax are weighted by a fixed tensor:
    // their plain sum is input-independent (or blind to index wiring), which
    // would make the check vacuous.
    reg.add("silu", [](const auto& x) { return silu(x); });
    reg.add("softmax", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor(x.shape(), 10).template cast<T>();
        return mul(softmax_rows(x), w);
    });
    reg.add("rms_norm", [](const auto& x) { return rms_norm_rows(x); });
    reg.add("sum_sq", [](const auto& x) { return mul(x, x); });
    reg.add("sum_linear", [](const auto& x) { return x; });
    reg.add("transpose2d", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto y = transpose(x);
        auto w = aux_tensor(y.shape(), 19).template cast<T>();
        return mul(y, w);
    });
    reg.add("matmul_right", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor({x.shape().back(), 6}, 11).template cast<T>();
        return matmul(x, w);
    });
    reg.add("matmul_left", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor({5, x.shape()[0]}, 12).template cast<T>();
        return matmul(w, x);
    });
    reg.add("mul_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor(x.shape(), 13).template cast<T>();
        return mul(x, w);
    });
    reg.add("add_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor(x.shape(), 14).template cast<T>();
        return add(x, w);
    });
    reg.add("sub_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor(x.shape(), 15).template cast<T>();
        return sub(x, w);
    });
    reg.add("mse_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto w = aux_tensor(x.shape(), 16).template cast<T>();
        return mse(x, w);
    });
    reg.add("mean_all", [](const auto& x) { return mean(x); });
    reg.add("scale_half", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        return scale(x, T(0.5));
    });
    reg.add("slice_concat_rows", [](const auto& x) {
        using TT = std::decay_t<decltype(x)>;
        using T = typename TT::value_type;
        int n = x.size(0);
        std::vector<TT> parts{slice_rows(x, n / 2, n - n / 2), slice_rows(x, 0, std::max(1, n / 2))};
        auto y = concat_rows(parts);
        auto w = aux_tensor(y.shape(), 20).template cast<T>();
        return mul(y, w);
    });
    reg.add("slice_concat_cols", [](const auto& x) {
        using TT = std::decay_t<decltype(x)>;
        using T = typename TT::value_type;
        int d = x.size(1);
        std::vector<TT> parts{slice_cols(x, d / 2, d - d / 2), slice_cols(x, 0, std::max(1, d / 2))};
        auto y = concat_cols(parts);
        auto w = aux_tensor(y.shape(), 21).template cast<T>();
        return mul(y, w);
    });
    reg.add("add_rowvec_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto v = aux_tensor({x.size(1)}, 17).template cast<T>();
        return add_rowvec(x, v);
    });
    reg.add("mul_rowvec_fixed", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        auto v = aux_tensor({x.size(1)}, 18).template cast<T>();
        return mul_rowvec(x, v);
    });
    reg.add("rope_1d", [](const auto& x) {
        std::vector<int> pos;
        for (int i = 0; i < x.size(0); ++i) {
            pos.push_back(i - x.size(0) / 2);
        }
        return apply_rope_1d(x, pos);
    });
    reg.add("rope_3d", [](const auto& x) {
        auto grid = build_video_grid(1, 2, (x.size(0) + 1) / 2);
        grid.resize(static_cast<size_t>(x.size(0)));
        return apply_rope_3d(x, grid);
    });
    // One pre-norm attention block (single head, rotary q/k, mlp, residuals)
    // over fixed weights; exercises the composite backward path end to end.
    reg.add("attn_block", [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        int n = x.size(0), d = x.size(1);
        double ps = 1.0 / std::sqrt(static_cast<double>(d));
        auto wq = aux_tensor({d, d}, 41, static_cast<float>(ps)).template cast<T>();
        auto wk = aux_tensor({d, d}, 42, static_cast<float>(ps)).template cast<T>();
        auto wv = aux_tensor({d, d}, 43, static_cast<float>(ps)).template cast<T>();
        auto wo = aux_tensor({d, d}, 44, static_cast<float>(ps)).template cast<T>();
        auto w1 = aux_tensor({d, 2 * d}, 45, static_cast<float>(ps)).template cast<T>();
        auto w2 = aux_tensor({2 * d, d}, 46, static_cast<float>(ps)).template cast<T>();
        std::vector<int> pos;
        for (int i = 0; i < n; ++i) {
            pos.push_back(i - n / 2);
        }
        auto h = rms_norm_rows(x);
        auto q = apply_rope_1d(matmul(h, wq), pos);
        auto k = apply_rope_1d(matmul(h, wk), pos);
        auto v = matmul(h, wv);
        auto att = softmax_rows(scale(matmul(q, transpose(k)), T(1) / static_cast<T>(std::sqrt(static_cast<double>(d)))));
        auto x1 = add(x, matmul(matmul(att, v), wo));
        auto m = matmul(silu(matmul(rms_norm_rows(x1), w1)), w2);
        return add(x1, m);
    });
}

}  // namespace icdit
