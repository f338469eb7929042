#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "icdit/positional.hpp"
#include "icdit/rng.hpp"

using namespace icdit;

namespace {

float dot(const Tensor& a, const Tensor& b) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.data().size(); ++i) {
        acc += a.data()[i] * b.data()[i];
    }
    return acc;
}

float norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_CASE("build_positions lays out reference then target") {
    CHECK(build_positions(3, 4) == std::vector<int>{-3, -2, -1, 0, 1, 2, 3});
    CHECK(build_positions(0, 2) == std::vector<int>{0, 1});
    CHECK(build_positions(1, 1) == std::vector<int>{-1, 0});
    CHECK_THROWS_AS(build_positions(3, 0), error);
}

TEST_CASE("build_positions separation and disjointness over a 1-32 grid") {
    for (int ref = 1; ref <= 32; ++ref) {
        for (int tgt = 1; tgt <= 32; ++tgt) {
            auto pos = build_positions(ref, tgt);
            int max_ref = pos[static_cast<size_t>(ref) - 1];
            int min_tgt = pos[static_cast<size_t>(ref)];
            REQUIRE(min_tgt - max_ref == 1);
            for (int i = 0; i < ref; ++i) {
                REQUIRE(pos[static_cast<size_t>(i)] < 0);
            }
            for (int i = ref; i < ref + tgt; ++i) {
                REQUIRE(pos[static_cast<size_t>(i)] >= 0);
            }
        }
    }
}

TEST_CASE("standard positions overlap the target interval") {
    CHECK(build_positions_standard(2, 3) == std::vector<int>{0, 1, 0, 1, 2});
}

TEST_CASE("rope_1d at position zero is the identity") {
    Rng rng(2);
    Tensor x = Tensor::randn({3, 8}, rng);
    Tensor y = apply_rope_1d(x, {0, 0, 0});
    CHECK(y.data() == x.data());
}

TEST_CASE("rope_1d rotates pairs by p * base^(-2k/d)") {
    Tensor x = Tensor::from({1, 4}, {1.0f, 0.0f, 1.0f, 0.0f});
    Tensor y = apply_rope_1d(x, {1});
    CHECK(y.at(0, 0) == Catch::Approx(std::cos(1.0)).margin(1e-6));
    CHECK(y.at(0, 1) == Catch::Approx(std::sin(1.0)).margin(1e-6));
    CHECK(y.at(0, 2) == Catch::Approx(std::cos(0.01)).margin(1e-6));
    CHECK(y.at(0, 3) == Catch::Approx(std::sin(0.01)).margin(1e-6));
}

TEST_CASE("rope_1d negative position inverts the positive rotation") {
    Rng rng(9);
    Tensor x = Tensor::randn({2, 16}, rng);
    Tensor fwd = apply_rope_1d(x, {5, -7});
    Tensor back = apply_rope_1d(fwd, {-5, 7});
    for (size_t i = 0; i < x.data().size(); ++i) {
        CHECK(back.data()[i] == Catch::Approx(x.data()[i]).margin(1e-6));
    }
}

TEST_CASE("rope_1d rejects odd feature dimension") {
    Tensor x = Tensor::zeros({1, 3});
    CHECK_THROWS_AS(apply_rope_1d(x, {0}), error);
}

TEST_CASE("rope preserves norms and relative positions, negative included") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor q = Tensor::randn({1, 16}, rng);
        Tensor k = Tensor::randn({1, 16}, rng);
        int p = rng.uniform_int(-32, 32);
        int p2 = rng.uniform_int(-32, 32);
        int shift = rng.uniform_int(-16, 16);

        Tensor qe = apply_rope_1d(q, {p});
        CHECK(norm(qe) == Catch::Approx(norm(q)).margin(1e-5));

        float base_dot = dot(apply_rope_1d(q, {p}), apply_rope_1d(k, {p2}));
        float shifted = dot(apply_rope_1d(q, {p + shift}), apply_rope_1d(k, {p2 + shift}));
        CHECK(shifted == Catch::Approx(base_dot).margin(1e-4));
    }
}

TEST_CASE("rope_3d identity at origin and axis separation") {
    Rng rng(13);
    Tensor x = Tensor::randn({2, 12}, rng);
    Tensor y = apply_rope_3d(x, {{0, 0, 0}, {0, 0, 0}});
    CHECK(y.data() == x.data());

    Tensor z = apply_rope_3d(x, {{1, 0, 0}, {1, 0, 0}});
    for (int r = 0; r < 2; ++r) {
        for (int j = 4; j < 12; ++j) {
            CHECK(z.at(r, j) == x.at(r, j));
        }
        bool t_changed = false;
        for (int j = 0; j < 4; ++j) {
            if (z.at(r, j) != x.at(r, j)) {
                t_changed = true;
            }
        }
        CHECK(t_changed);
    }
}

TEST_CASE("rope_3d validates dimension and grid size") {
    Tensor x = Tensor::zeros({1, 8});
    CHECK_THROWS_AS(apply_rope_3d(x, {{0, 0, 0}}), error);
    Tensor ok = Tensor::zeros({2, 12});
    CHECK_THROWS_AS(apply_rope_3d(ok, {{0, 0, 0}}), error);
}

TEST_CASE("rope_3d relative position property") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor q = Tensor::randn({1, 12}, rng);
        Tensor k = Tensor::randn({1, 12}, rng);
        int t1 = rng.uniform_int(0, 4), t2 = rng.uniform_int(0, 4);
        int h = rng.uniform_int(0, 4), w = rng.uniform_int(0, 4);
        int dt = rng.uniform_int(0, 3);

        float base_dot = dot(apply_rope_3d(q, {{t1, h, w}}), apply_rope_3d(k, {{t2, h, w}}));
        float shifted = dot(apply_rope_3d(q, {{t1 + dt, h, w}}), apply_rope_3d(k, {{t2 + dt, h, w}}));
        CHECK(shifted == Catch::Approx(base_dot).margin(1e-5));
    }
}

TEST_CASE("video grid enumerates without duplicates") {
    auto grid = build_video_grid(2, 3, 4);
    REQUIRE(grid.size() == 24);
    for (size_t i = 0; i < grid.size(); ++i) {
        for (size_t j = i + 1; j < grid.size(); ++j) {
            REQUIRE(grid[i] != grid[j]);
        }
    }
}
