#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "icdit/model.hpp"

using namespace icdit;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;  // spec toy scale: d=64, 4 heads, 4 blocks, 2x4x4 video
    return cfg;
}

LatentSequence make_seq(Modality m, Role r, std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    return {m, r, Tensor::randn(std::move(shape), rng)};
}

struct Fixture {
    ModelConfig cfg = toy_config();
    Model model = Model::create(cfg);
    LatentSequence video = make_seq(Modality::video, Role::target, {32, 64}, 1);
    LatentSequence ref = make_seq(Modality::audio, Role::reference, {8, 64}, 2);
    LatentSequence audio = make_seq(Modality::audio, Role::target, {16, 64}, 3);

    Conditioning cond() const {
        Conditioning c;
        c.env_code = 3;
        c.style_code = 1;
        c.timestep = 0.5f;
        Rng rng(4);
        c.first_frame = Tensor::randn({16, 64}, rng);
        return c;
    }
};

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("assemble_input produces the ordered joint sequence") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    CHECK(j.total_tokens() == 56);
    REQUIRE(j.audio_positions.size() == 24);
    CHECK(j.audio_positions.front() == -8);
    CHECK(j.audio_positions[7] == -1);
    CHECK(j.audio_positions[8] == 0);
    CHECK(j.audio_positions.back() == 15);

    LatentSequence none{Modality::audio, Role::reference, {}};
    JointInput j2 = assemble_input(f.video, none, f.audio, f.cfg);
    CHECK(j2.total_tokens() == 48);
    CHECK(j2.audio_positions.front() == 0);
    CHECK(j2.audio_positions.size() == 16);

    JointInput j3 = assemble_input(f.video, f.ref, f.audio, f.cfg);
    CHECK(same_bits(j.video_target, j3.video_target));
    CHECK(j.audio_positions == j3.audio_positions);
}

TEST_CASE("assemble_input rejects role and modality mismatches") {
    Fixture f;
    LatentSequence bad_ref{Modality::video, Role::reference, f.ref.tokens};
    CHECK_THROWS_AS(assemble_input(f.video, bad_ref, f.audio, f.cfg), error);
    LatentSequence swapped{Modality::audio, Role::target, f.audio.tokens};
    CHECK_THROWS_AS(assemble_input(f.video, swapped, f.audio, f.cfg), error);
    LatentSequence wrong_first{Modality::audio, Role::target, f.audio.tokens};
    CHECK_THROWS_AS(assemble_input(wrong_first, f.ref, f.audio, f.cfg), error);
}

TEST_CASE("forward emits predictions for target tokens only") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto out = f.model.forward(j, f.cond(), nullptr);
    CHECK(out.eps_video.shape() == std::vector<int>{32, 64});
    CHECK(out.eps_audio.shape() == std::vector<int>{16, 64});
}

TEST_CASE("forward is deterministic") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto a = f.model.forward(j, f.cond(), nullptr);
    auto b = f.model.forward(j, f.cond(), nullptr);
    CHECK(same_bits(a.eps_video, b.eps_video));
    CHECK(same_bits(a.eps_audio, b.eps_audio));
}

TEST_CASE("zero-init adapters reproduce the base model bit-exactly") {
    Fixture f;
    AdapterSet adapters = f.model.create_adapters();
    REQUIRE(adapters.all_up_zero());
    REQUIRE(adapters.adapters.size() == 4u * (2u * 4u + 2u * 4u));  // wq..wo for 8 self + 8 cross modules
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto base = f.model.forward(j, f.cond(), nullptr);
    auto with = f.model.forward(j, f.cond(), &adapters);
    CHECK(same_bits(base.eps_video, with.eps_video));
    CHECK(same_bits(base.eps_audio, with.eps_audio));
}

TEST_CASE("perturbing a reference token moves target audio predictions") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto base = f.model.forward(j, f.cond(), nullptr);

    std::vector<float> bumped = f.ref.tokens.data();
    bumped[5] += 1.0f;
    LatentSequence ref2{Modality::audio, Role::reference, Tensor::from({8, 64}, bumped)};
    JointInput j2 = assemble_input(f.video, ref2, f.audio, f.cfg);
    auto out = f.model.forward(j2, f.cond(), nullptr);

    float delta = 0.0f;
    for (size_t i = 0; i < base.eps_audio.data().size(); ++i) {
        delta += std::abs(base.eps_audio.data()[i] - out.eps_audio.data()[i]);
    }
    CHECK(delta > 0.0f);
}

TEST_CASE("skip_block perturbs the output and validates the block id") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto base = f.model.forward(j, f.cond(), nullptr);
    ForwardOptions opt;
    opt.skip_block = f.cfg.n_blocks - 1;
    auto skipped = f.model.forward(j, f.cond(), nullptr, opt);
    CHECK_FALSE(same_bits(base.eps_video, skipped.eps_video));

    ForwardOptions bad;
    bad.skip_block = 99;
    CHECK_THROWS_AS(f.model.forward(j, f.cond(), nullptr, bad), error);
}

TEST_CASE("disabling cross-modal attention isolates the audio stream") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    ForwardOptions opt;
    opt.disable_cross = true;
    auto a = f.model.forward(j, f.cond(), nullptr, opt);

    std::vector<float> bumped = f.video.tokens.data();
    bumped[100] += 2.0f;
    LatentSequence video2{Modality::video, Role::target, Tensor::from({32, 64}, bumped)};
    JointInput j2 = assemble_input(video2, f.ref, f.audio, f.cfg);
    auto b = f.model.forward(j2, f.cond(), nullptr, opt);
    CHECK(same_bits(a.eps_audio, b.eps_audio));
}

TEST_CASE("zeroed cross-modal weights decouple audio from video") {
    Fixture f;
    for (auto& [name, t] : f.model.params) {
        if (name.rfind("base.cross.", 0) == 0) {
            std::fill(t.raw_data().begin(), t.raw_data().end(), 0.0f);
        }
    }
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    auto a = f.model.forward(j, f.cond(), nullptr);

    std::vector<float> bumped = f.video.tokens.data();
    bumped[0] += 3.0f;
    LatentSequence video2{Modality::video, Role::target, Tensor::from({32, 64}, bumped)};
    JointInput j2 = assemble_input(video2, f.ref, f.audio, f.cfg);
    auto b = f.model.forward(j2, f.cond(), nullptr);
    CHECK(same_bits(a.eps_audio, b.eps_audio));
}

TEST_CASE("empty reference runs the unconditional path") {
    Fixture f;
    LatentSequence none{Modality::audio, Role::reference, {}};
    JointInput j = assemble_input(f.video, none, f.audio, f.cfg);
    Conditioning c = f.cond();
    c.reference_present = false;
    auto out = f.model.forward(j, c, nullptr);
    CHECK(out.eps_audio.shape() == std::vector<int>{16, 64});
}

TEST_CASE("first frame must be a single token row") {
    Fixture f;
    JointInput j = assemble_input(f.video, f.ref, f.audio, f.cfg);
    Conditioning c = f.cond();
    Rng rng(9);
    c.first_frame = Tensor::randn({5, 64}, rng);
    CHECK_THROWS_AS(f.model.forward(j, c, nullptr), error);
}
