#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "icdit/adamw.hpp"

using namespace icdit;

TEST_CASE("adamw zero gradient leaves parameter and moments at rest") {
    Tensor p = Tensor::from({2}, {1.5f, -0.25f});
    OptimState st;
    st.hyper.weight_decay = 0.0f;
    adamw_step(p, {0.0f, 0.0f}, st);
    CHECK(p.data()[0] == 1.5f);
    CHECK(p.data()[1] == -0.25f);
    CHECK(st.m[0] == 0.0f);
    CHECK(st.v[0] == 0.0f);
    CHECK(st.step == 1);
}

TEST_CASE("adamw first step moves by -lr for unit gradient") {
    Tensor p = Tensor::from({1}, {0.0f});
    OptimState st;
    st.hyper.lr = 0.1f;
    st.hyper.eps = 1e-8f;
    st.hyper.weight_decay = 0.0f;
    adamw_step(p, {1.0f}, st);
    // bias-corrected mhat/sqrt(vhat) = 1 on the first step
    CHECK(p.data()[0] == Catch::Approx(-0.1f).margin(1e-6));
}

TEST_CASE("adamw decoupled decay shrinks by (1 - lr*wd)") {
    Tensor p = Tensor::from({1}, {2.0f});
    OptimState st;
    st.hyper.lr = 0.1f;
    st.hyper.weight_decay = 0.01f;
    adamw_step(p, {0.0f}, st);
    CHECK(p.data()[0] == Catch::Approx(1.998f).margin(1e-6));
}

TEST_CASE("adamw with lr = 0 is bit-identical") {
    Tensor p = Tensor::from({4}, {1.0f, -0.0f, 3.25f, -7.5f});
    std::vector<float> before = p.data();
    OptimState st;
    st.hyper.lr = 0.0f;
    st.hyper.weight_decay = 0.5f;
    adamw_step(p, {0.3f, -2.0f, 0.0f, 5.0f}, st);
    CHECK(std::memcmp(before.data(), p.data().data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("adamw validates inputs") {
    Tensor p = Tensor::from({2}, {1.0f, 2.0f});
    OptimState st;
    CHECK_THROWS_AS(adamw_step(p, {1.0f}, st), error);

    OptimState bad;
    bad.hyper.beta1 = 1.0f;
    CHECK_THROWS_AS(adamw_step(p, {1.0f, 1.0f}, bad), error);

    OptimState st2;
    float inf = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(adamw_step(p, {inf, 0.0f}, st2), error);
}

TEST_CASE("adamw step counter increases by one per update") {
    Tensor p = Tensor::from({1}, {1.0f});
    OptimState st;
    for (int i = 1; i <= 5; ++i) {
        adamw_step(p, {0.1f}, st);
        CHECK(st.step == i);
    }
}
