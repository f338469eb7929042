#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "icdit/ops.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Rotary positional encodings. Audio tokens carry signed 1-d positions;
// reference tokens sit on the highest negative integers so they stay
// adjacent to the target interval [0, T) while never colliding with it.
// Video tokens carry (t, h, w) triples over a full grid.

enum class PositionScheme { negative, standard };

struct PositionGrid {
    std::vector<int> audio_positions;                 // reference then target
    std::vector<std::array<int, 3>> video_positions;  // full t*h*w enumeration
    float rope_base = 10000.0f;
};

// Audio positions [-ref_len-gap, ..., -1-gap, 0, ..., target_len-1]. The gap
// defaults to 0 (reference adjacent to the target interval).
inline std::vector<int> build_positions(int ref_len, int target_len, int gap = 0) {
    require(ref_len >= 0, errc::invalid_argument, "build_positions: ref_len must be >= 0");
    require(target_len >= 1, errc::invalid_argument, "build_positions: target_len must be >= 1");
    require(gap >= 0, errc::invalid_argument, "build_positions: gap must be >= 0");
    std::vector<int> pos;
    pos.reserve(static_cast<size_t>(ref_len + target_len));
    for (int i = 0; i < ref_len; ++i) {
        pos.push_back(-ref_len - gap + i);
    }
    for (int i = 0; i < target_len; ++i) {
        pos.push_back(i);
    }
    return pos;
}

// Ablation variant: reference tokens reuse the target-side positions
// [0, ref_len), deliberately overlapping the target interval.
inline std::vector<int> build_positions_standard(int ref_len, int target_len) {
    require(ref_len >= 0, errc::invalid_argument, "build_positions_standard: ref_len must be >= 0");
    require(target_len >= 1, errc::invalid_argument, "build_positions_standard: target_len must be >= 1");
    std::vector<int> pos;
    pos.reserve(static_cast<size_t>(ref_len + target_len));
    for (int i = 0; i < ref_len; ++i) {
        pos.push_back(i);
    }
    for (int i = 0; i < target_len; ++i) {
        pos.push_back(i);
    }
    return pos;
}

inline std::vector<std::array<int, 3>> build_video_grid(int t, int h, int w) {
    require(t >= 1 && h >= 1 && w >= 1, errc::invalid_argument, "build_video_grid: extents must be >= 1");
    std::vector<std::array<int, 3>> grid;
    grid.reserve(static_cast<size_t>(t) * h * w);
    for (int a = 0; a < t; ++a) {
        for (int b = 0; b < h; ++b) {
            for (int c = 0; c < w; ++c) {
                grid.push_back({a, b, c});
            }
        }
    }
    return grid;
}

namespace detail {

// In-place pair rotation kernel shared by forward and backward (backward is
// the rotation by the negated position). Angles are formed in double before
// narrowing.
template <class T>
void rope_rotate_span(T* row, int dim, double position, double base) {
    for (int k = 0; k < dim / 2; ++k) {
        double theta = std::pow(base, -2.0 * k / static_cast<double>(dim));
        double angle = position * theta;
        T c = static_cast<T>(std::cos(angle));
        T s = static_cast<T>(std::sin(angle));
        T x = row[2 * k];
        T y = row[2 * k + 1];
        row[2 * k] = x * c - y * s;
        row[2 * k + 1] = x * s + y * c;
    }
}

}  // namespace detail

// Rotates consecutive feature pairs (x_{2k}, x_{2k+1}) of each token by
// angle p * base^(-2k/d). Norm-preserving; inverse of position -p.
template <class T>
TensorT<T> apply_rope_1d(const TensorT<T>& tokens, const std::vector<int>& positions,
                         float base = 10000.0f) {
    require(tokens.rank() == 2, errc::shape_mismatch, "apply_rope_1d: expects [tokens, features]");
    int n = tokens.size(0), d = tokens.size(1);
    require(d % 2 == 0, errc::invalid_argument, "apply_rope_1d: feature dimension must be even");
    require(static_cast<size_t>(n) == positions.size(), errc::shape_mismatch,
            "apply_rope_1d: position count must match token count");
    std::vector<T> v(tokens.data());
    for (int i = 0; i < n; ++i) {
        detail::rope_rotate_span(v.data() + static_cast<size_t>(i) * d, d,
                                 static_cast<double>(positions[static_cast<size_t>(i)]), base);
    }
    return detail::make_result<T>(tokens.shape(), std::move(v), "rope_1d", {tokens},
                                  [n, d, positions, base](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) {
            return;
        }
        p.ensure_grad();
        std::vector<T> g(self.grad);
        for (int i = 0; i < n; ++i) {
            detail::rope_rotate_span(g.data() + static_cast<size_t>(i) * d, d,
                                     -static_cast<double>(positions[static_cast<size_t>(i)]), base);
        }
        for (size_t i = 0; i < g.size(); ++i) {
            p.grad[i] += g[i];
        }
    });
}

// Factorized 3-d rotary encoding: features are split into three contiguous
// equal groups, one per axis, and each group is rotated by its coordinate
// exactly as in apply_rope_1d.
template <class T>
TensorT<T> apply_rope_3d(const TensorT<T>& tokens, const std::vector<std::array<int, 3>>& grid,
                         float base = 10000.0f) {
    require(tokens.rank() == 2, errc::shape_mismatch, "apply_rope_3d: expects [tokens, features]");
    int n = tokens.size(0), d = tokens.size(1);
    require(d % 6 == 0, errc::invalid_argument, "apply_rope_3d: feature dimension must divide by 6");
    require(static_cast<size_t>(n) == grid.size(), errc::shape_mismatch,
            "apply_rope_3d: grid size must match token count");
    int gdim = d / 3;
    std::vector<T> v(tokens.data());
    for (int i = 0; i < n; ++i) {
        T* row = v.data() + static_cast<size_t>(i) * d;
        for (int axis = 0; axis < 3; ++axis) {
            detail::rope_rotate_span(row + axis * gdim, gdim,
                                     static_cast<double>(grid[static_cast<size_t>(i)][static_cast<size_t>(axis)]),
                                     base);
        }
    }
    return detail::make_result<T>(tokens.shape(), std::move(v), "rope_3d", {tokens},
                                  [n, d, gdim, grid, base](NodeT<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) {
            return;
        }
        p.ensure_grad();
        std::vector<T> g(self.grad);
        for (int i = 0; i < n; ++i) {
            T* row = g.data() + static_cast<size_t>(i) * d;
            for (int axis = 0; axis < 3; ++axis) {
                detail::rope_rotate_span(row + axis * gdim, gdim,
                                         -static_cast<double>(grid[static_cast<size_t>(i)][static_cast<size_t>(axis)]),
                                         base);
            }
        }
        for (size_t i = 0; i < g.size(); ++i) {
            p.grad[i] += g[i];
        }
    });
}

}  // namespace icdit
