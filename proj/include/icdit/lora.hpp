#pragma once

#include <string>

#include "icdit/ops.hpp"
#include "icdit/rng.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Low-rank adapter for a named base weight. In the column convention used
// by lora_apply / merge_lora, base is [d_out, d_in], down is [rank, d_in]
// and up is [d_out, rank]; the effective update is up*down*(alpha/rank).
// up starts at zero so a fresh adapter leaves the base model untouched.
template <class T>
struct LoraAdapterT {
    std::string target_weight_name;
    TensorT<T> down;
    TensorT<T> up;
    int rank = 0;
    T alpha = T(0);

    template <class U>
    LoraAdapterT<U> cast() const {
        LoraAdapterT<U> out;
        out.target_weight_name = target_weight_name;
        out.down = down.template cast<U>();
        out.up = up.template cast<U>();
        out.down.node()->requires_grad = down.requires_grad();
        out.up.node()->requires_grad = up.requires_grad();
        out.rank = rank;
        out.alpha = static_cast<U>(alpha);
        return out;
    }
};

using LoraAdapter = LoraAdapterT<float>;

template <class T>
LoraAdapterT<T> make_lora(const std::string& target, int d_out, int d_in, int rank, T alpha,
                          uint64_t seed) {
    require(rank >= 1, errc::invalid_argument, "lora: rank must be >= 1");
    LoraAdapterT<T> a;
    a.target_weight_name = target;
    a.rank = rank;
    a.alpha = alpha;
    Rng rng(seed);
    auto down64 = TensorT<double>::randn({rank, d_in}, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
    a.down = down64.template cast<T>();
    a.down.node()->requires_grad = true;
    a.up = TensorT<T>::zeros({d_out, rank}, true);
    return a;
}

// y = base*x + (alpha/rank) * up * (down * x), column convention.
template <class T>
TensorT<T> lora_apply(const TensorT<T>& base, const LoraAdapterT<T>& adapter, const TensorT<T>& x) {
    require(base.rank() == 2 && x.rank() == 2, errc::shape_mismatch, "lora_apply: expects matrices");
    require(adapter.down.size(1) == base.size(1) && adapter.up.size(0) == base.size(0),
            errc::shape_mismatch, "lora_apply: adapter does not compose with base");
    TensorT<T> y = matmul(base, x);
    TensorT<T> delta = matmul(adapter.up, matmul(adapter.down, x));
    return add(y, scale(delta, adapter.alpha / static_cast<T>(adapter.rank)));
}

// merged = base + (alpha/rank) * up * down
template <class T>
TensorT<T> merge_lora(const TensorT<T>& base, const LoraAdapterT<T>& adapter) {
    require(adapter.down.size(1) == base.size(1) && adapter.up.size(0) == base.size(0),
            errc::shape_mismatch, "merge_lora: adapter does not compose with base");
    return add(base, scale(matmul(adapter.up, adapter.down), adapter.alpha / static_cast<T>(adapter.rank)));
}

// Row-major counterpart used inside the transformer, where tokens are rows
// and the stored weight maps [n, d_in] -> [n, d_out] via y = x*W.
// delta = (alpha/rank) * (x * down^T) * up^T is the same update transposed.
template <class T>
TensorT<T> lora_linear_rows(const TensorT<T>& x, const TensorT<T>& w, const LoraAdapterT<T>* adapter) {
    TensorT<T> y = matmul(x, w);
    if (adapter == nullptr) {
        return y;
    }
    TensorT<T> delta = matmul(matmul(x, transpose(adapter->down)), transpose(adapter->up));
    return add(y, scale(delta, adapter->alpha / static_cast<T>(adapter->rank)));
}

}  // namespace icdit
