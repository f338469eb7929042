#include <catch2/catch_amalgamated.hpp>

#include "icdit/grad_check.hpp"

using namespace icdit;

namespace {

Tensor probe_input(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    auto t = TensorT<double>::randn(std::move(shape), rng);
    return t.cast<float>();
}

}  // namespace

TEST_CASE("grad_check on sum of squares matches the hand gradient") {
    register_builtin_ops();
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    Tensor y = mul(x, x);
    sum(y).backward();
    CHECK(x.grad()[0] == Catch::Approx(2.0f));
    CHECK(x.grad()[1] == Catch::Approx(4.0f));

    auto report = grad_check("sum_sq", Tensor::from({2}, {1.0f, 2.0f}), 1e-4);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(report.checked_coords == 2);
}

TEST_CASE("grad_check on a linear function is exact to round-off") {
    register_builtin_ops();
    auto report = grad_check("sum_linear", probe_input({3, 4}, 21), 1e-4);
    CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("grad_check rejects unknown ids and bad eps") {
    register_builtin_ops();
    Tensor x = Tensor::from({1}, {1.0f});
    CHECK_THROWS_AS(grad_check("no_such_op", x, 1e-4), error);
    CHECK_THROWS_AS(grad_check("sum_sq", x, 1e-1), error);
    CHECK_THROWS_AS(grad_check("sum_sq", x, 1e-6), error);
}

TEST_CASE("grad_check passes for every registered builtin op") {
    register_builtin_ops();
    // rank <= 3 inputs with small extents; rope ops need their documented
    // shapes (even / divisible-by-6 widths).
    std::map<std::string, std::vector<int>> shapes = {
        {"silu", {2, 3, 4}},         {"softmax", {5, 7}},
        {"rms_norm", {4, 6}},        {"sum_sq", {2, 4, 3}},
        {"sum_linear", {8}},         {"transpose2d", {5, 3}},
        {"matmul_right", {4, 5}},    {"matmul_left", {6, 3}},
        {"mul_fixed", {2, 2, 2}},    {"add_fixed", {3, 5}},
        {"sub_fixed", {7}},          {"mse_fixed", {4, 4}},
        {"mean_all", {2, 3, 2}},     {"scale_half", {6}},
        {"slice_concat_rows", {6, 3}}, {"slice_concat_cols", {3, 6}},
        {"add_rowvec_fixed", {4, 5}}, {"mul_rowvec_fixed", {5, 4}},
        {"rope_1d", {5, 8}},         {"rope_3d", {4, 12}},
    };
    uint64_t seed = 100;
    for (const auto& name : OpRegistry::instance().names()) {
        auto it = shapes.find(name);
        if (it == shapes.end()) {
            continue;  // model-level registrations are checked elsewhere
        }
        auto report = grad_check(name, probe_input(it->second, seed++), 1e-3);
        INFO("op " << name);
        CHECK(report.max_rel_err < 1e-3);
    }
}
