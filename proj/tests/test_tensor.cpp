#include <catch2/catch_amalgamated.hpp>

#include "icdit/ops.hpp"
#include "icdit/rng.hpp"
#include "icdit/tensor.hpp"

using namespace icdit;

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0f, 2.0f}), error);
    CHECK_THROWS_AS(Tensor::from({0}, {}), error);
    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(t.numel() == 4);
    CHECK(t.at(1, 0) == 3.0f);
}

TEST_CASE("elementwise ops and backward") {
    Tensor x = Tensor::from({3}, {1.0f, -2.0f, 0.5f}, true);
    Tensor y = Tensor::from({3}, {2.0f, 3.0f, -1.0f});
    // f = sum(x*x*y), df/dx = 2*x*y
    Tensor f = sum(mul(mul(x, x), y));
    f.backward();
    CHECK(f.item() == Catch::Approx(1.0 * 2 + 4.0 * 3 + 0.25 * -1));
    CHECK(x.grad()[0] == Catch::Approx(4.0f));
    CHECK(x.grad()[1] == Catch::Approx(-12.0f));
    CHECK(x.grad()[2] == Catch::Approx(-1.0f));
}

TEST_CASE("matmul against identity is exact") {
    Rng rng(7);
    Tensor a = Tensor::randn({5, 4}, rng);
    std::vector<float> eye(16, 0.0f);
    for (int i = 0; i < 4; ++i) {
        eye[static_cast<size_t>(i) * 4 + i] = 1.0f;
    }
    Tensor i4 = Tensor::from({4, 4}, eye);
    Tensor out = matmul(a, i4);
    REQUIRE(out.shape() == a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) {
        CHECK(out.data()[i] == a.data()[i]);
    }
}

TEST_CASE("matmul values and gradients") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8}, true);
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == 19.0f);
    CHECK(c.at(1, 1) == 50.0f);
    sum(c).backward();
    // d sum(AB) / dA = ones * B^T
    CHECK(a.grad()[0] == Catch::Approx(11.0f));
    CHECK(a.grad()[1] == Catch::Approx(15.0f));
    CHECK(b.grad()[0] == Catch::Approx(4.0f));
    CHECK(b.grad()[3] == Catch::Approx(6.0f));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(11);
    Tensor x = Tensor::randn({6, 9}, rng, 3.0f);
    Tensor y = softmax_rows(x);
    for (int r = 0; r < 6; ++r) {
        float s = 0.0f;
        for (int j = 0; j < 9; ++j) {
            s += y.at(r, j);
        }
        CHECK(s == Catch::Approx(1.0f).margin(1e-6));
    }
}

TEST_CASE("non-finite results are rejected") {
    Tensor big = Tensor::from({1}, {3e38f});
    CHECK_THROWS_AS(mul(big, big), error);
}

TEST_CASE("slice and concat invert each other") {
    Rng rng(3);
    Tensor x = Tensor::randn({6, 4}, rng);
    Tensor top = slice_rows(x, 0, 2);
    Tensor rest = slice_rows(x, 2, 4);
    Tensor back = concat_rows<float>({top, rest});
    CHECK(back.data() == x.data());

    Tensor left = slice_cols(x, 0, 1);
    Tensor right = slice_cols(x, 1, 3);
    Tensor back2 = concat_cols<float>({left, right});
    CHECK(back2.data() == x.data());
}

TEST_CASE("rowvec broadcasting ops") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor v = Tensor::from({3}, {10, 20, 30}, true);
    Tensor y = add_rowvec(x, v);
    CHECK(y.at(1, 2) == 36.0f);
    sum(y).backward();
    CHECK(v.grad()[0] == 2.0f);

    Tensor z = mul_rowvec(x, v);
    CHECK(z.at(0, 1) == 40.0f);
}

TEST_CASE("no_grad scope suppresses graph building") {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    no_grad_scope ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("rms_norm normalizes rows") {
    Rng rng(5);
    Tensor x = Tensor::randn({4, 8}, rng, 2.5f);
    Tensor y = rms_norm_rows(x);
    for (int r = 0; r < 4; ++r) {
        float ms = 0.0f;
        for (int j = 0; j < 8; ++j) {
            ms += y.at(r, j) * y.at(r, j);
        }
        CHECK(ms / 8.0f == Catch::Approx(1.0f).margin(1e-3));
    }
}
