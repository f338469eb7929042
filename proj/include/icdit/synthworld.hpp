#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "icdit/model.hpp"
#include "icdit/rng.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Procedural identity world. Every generative factor (speaker identity,
// environment, speaking style, appearance, scene, per-clip nuisance) lives
// in its own orthonormal latent subspace, so each factor is exactly
// recoverable by linear projection and downstream metrics are ground truth.
// References are clean: they carry identity and clip nuisance but no
// environment/style component, so environment information can reach the
// generator only through the text code.

enum class PairMode { same_source, cross_source };

struct WorldConfig {
    int d_model = 64;
    int d_id = 8;
    int n_env = 8;
    int n_style = 4;
    int n_scene = 4;
    int d_nuisance = 8;
    int audio_len = 16;
    int ref_len = 8;
    int video_t = 2;
    int video_h = 4;
    int video_w = 4;
    float id_amp = 1.0f;
    float env_amp = 1.0f;
    float style_amp = 0.7f;
    float scene_amp = 1.0f;
    float nuisance_amp = 0.6f;
    float noise_sigma = 0.02f;
    uint64_t world_seed = 99;

    int video_tokens() const { return video_t * video_h * video_w; }
    int frame_tokens() const { return video_h * video_w; }

    void validate() const {
        require(d_id + n_env + n_style + d_nuisance <= d_model, errc::config_error,
                "audio factor subspaces exceed d_model");
        require(d_id + n_scene + d_nuisance <= d_model, errc::config_error,
                "video factor subspaces exceed d_model");
        require(noise_sigma >= 0.0f, errc::config_error, "noise_sigma must be >= 0");
    }
};

struct IdentitySpec {
    std::vector<float> speaker_signature;     // unit vector, d_id
    std::vector<float> appearance_signature;  // unit vector, d_id
    int64_t id = 0;
};

struct PairSample {
    IdentitySpec identity;
    int env_code = 0;
    int style_code = 0;
    int scene_code = 0;
    PairMode mode = PairMode::same_source;
    Tensor ref_audio;     // [ref_len, d], clean of env/style
    Tensor target_audio;  // [audio_len, d]
    Tensor target_video;  // [video_tokens, d]
    Tensor first_frame;   // [frame_tokens, d], clean re-render of the target clip's t=0 content
    std::vector<float> ref_nuisance_latent;  // ground-truth nuisance component of the reference, [d]
};

namespace detail {

// Orthonormal columns via Gram-Schmidt on seeded Gaussian draws, computed in
// double and narrowed.
inline std::vector<std::vector<float>> orthonormal_columns(int dim, int count, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> cols;
    cols.reserve(static_cast<size_t>(count));
    while (static_cast<int>(cols.size()) < count) {
        std::vector<double> v(static_cast<size_t>(dim));
        for (auto& x : v) {
            x = rng.normal();
        }
        for (const auto& u : cols) {
            double dot = 0.0;
            for (int i = 0; i < dim; ++i) {
                dot += v[static_cast<size_t>(i)] * u[static_cast<size_t>(i)];
            }
            for (int i = 0; i < dim; ++i) {
                v[static_cast<size_t>(i)] -= dot * u[static_cast<size_t>(i)];
            }
        }
        double n2 = 0.0;
        for (double x : v) {
            n2 += x * x;
        }
        if (n2 < 1e-8) {
            continue;  // degenerate draw, try again
        }
        double inv = 1.0 / std::sqrt(n2);
        for (auto& x : v) {
            x *= inv;
        }
        cols.push_back(std::move(v));
    }
    std::vector<std::vector<float>> out(cols.size());
    for (size_t c = 0; c < cols.size(); ++c) {
        out[c].assign(cols[c].begin(), cols[c].end());
    }
    return out;
}

inline std::vector<float> unit_vector(int dim, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(dim));
    double n2 = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    double inv = 1.0 / std::sqrt(n2);
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(v[i] * inv);
    }
    return out;
}

}  // namespace detail

class SynthWorld {
public:
    explicit SynthWorld(const WorldConfig& config) : cfg_(config) {
        cfg_.validate();
        audio_basis_ = detail::orthonormal_columns(cfg_.d_model,
                                                   cfg_.d_id + cfg_.n_env + cfg_.n_style + cfg_.d_nuisance,
                                                   derive_seed(cfg_.world_seed, "audio_basis"));
        video_basis_ = detail::orthonormal_columns(cfg_.d_model, cfg_.d_id + cfg_.n_scene + cfg_.d_nuisance,
                                                   derive_seed(cfg_.world_seed, "video_basis"));
    }

    const WorldConfig& config() const { return cfg_; }

    // audio subspace columns
    const std::vector<float>& speaker_axis(int i) const { return audio_basis_[static_cast<size_t>(i)]; }
    const std::vector<float>& env_axis(int code) const {
        return audio_basis_[static_cast<size_t>(cfg_.d_id + code)];
    }
    const std::vector<float>& style_axis(int code) const {
        return audio_basis_[static_cast<size_t>(cfg_.d_id + cfg_.n_env + code)];
    }
    const std::vector<float>& audio_nuisance_axis(int i) const {
        return audio_basis_[static_cast<size_t>(cfg_.d_id + cfg_.n_env + cfg_.n_style + i)];
    }
    // video subspace columns
    const std::vector<float>& appearance_axis(int i) const { return video_basis_[static_cast<size_t>(i)]; }
    const std::vector<float>& scene_axis(int code) const {
        return video_basis_[static_cast<size_t>(cfg_.d_id + code)];
    }
    const std::vector<float>& video_nuisance_axis(int i) const {
        return video_basis_[static_cast<size_t>(cfg_.d_id + cfg_.n_scene + i)];
    }

    IdentitySpec gen_identity(uint64_t seed) const {
        Rng rng(derive_seed(seed, "identity"));
        IdentitySpec spec;
        spec.speaker_signature = detail::unit_vector(cfg_.d_id, rng);
        spec.appearance_signature = detail::unit_vector(cfg_.d_id, rng);
        spec.id = static_cast<int64_t>(seed);
        return spec;
    }

    // Token means follow the fixed linear mixing; per-token noise is the only
    // within-sample variation. The per-clip nuisance code is expressed in
    // both modalities, so a reference from the target's own clip is
    // consistent with the first frame while a cross-source reference is not.
    PairSample gen_pair(const IdentitySpec& identity, int env_code, int style_code, PairMode mode,
                        Rng& rng) const {
        require(env_code >= 0 && env_code < cfg_.n_env, errc::invalid_argument, "gen_pair: unknown env code");
        require(style_code >= 0 && style_code < cfg_.n_style, errc::invalid_argument,
                "gen_pair: unknown style code");
        PairSample s;
        s.identity = identity;
        s.env_code = env_code;
        s.style_code = style_code;
        s.scene_code = env_code % cfg_.n_scene;
        s.mode = mode;

        std::vector<float> nu_target = detail::unit_vector(cfg_.d_nuisance, rng);
        std::vector<float> nu_other = detail::unit_vector(cfg_.d_nuisance, rng);
        const std::vector<float>& nu_ref = (mode == PairMode::same_source) ? nu_target : nu_other;

        auto mix_audio = [&](bool with_env, const std::vector<float>& nu) {
            std::vector<float> m(static_cast<size_t>(cfg_.d_model), 0.0f);
            for (int i = 0; i < cfg_.d_id; ++i) {
                axpy(m, cfg_.id_amp * identity.speaker_signature[static_cast<size_t>(i)], speaker_axis(i));
            }
            if (with_env) {
                axpy(m, cfg_.env_amp, env_axis(env_code));
                axpy(m, cfg_.style_amp, style_axis(style_code));
            }
            for (int i = 0; i < cfg_.d_nuisance; ++i) {
                axpy(m, cfg_.nuisance_amp * nu[static_cast<size_t>(i)], audio_nuisance_axis(i));
            }
            return m;
        };
        auto mix_video = [&](const std::vector<float>& nu) {
            std::vector<float> m(static_cast<size_t>(cfg_.d_model), 0.0f);
            for (int i = 0; i < cfg_.d_id; ++i) {
                axpy(m, cfg_.id_amp * identity.appearance_signature[static_cast<size_t>(i)], appearance_axis(i));
            }
            axpy(m, cfg_.scene_amp, scene_axis(s.scene_code));
            for (int i = 0; i < cfg_.d_nuisance; ++i) {
                axpy(m, cfg_.nuisance_amp * nu[static_cast<size_t>(i)], video_nuisance_axis(i));
            }
            return m;
        };

        std::vector<float> ref_mean = mix_audio(false, nu_ref);
        std::vector<float> audio_mean = mix_audio(true, nu_target);
        std::vector<float> video_mean = mix_video(nu_target);

        s.ref_nuisance_latent.assign(static_cast<size_t>(cfg_.d_model), 0.0f);
        for (int i = 0; i < cfg_.d_nuisance; ++i) {
            axpy(s.ref_nuisance_latent, cfg_.nuisance_amp * nu_ref[static_cast<size_t>(i)],
                 audio_nuisance_axis(i));
        }

        s.ref_audio = tokens_around(ref_mean, cfg_.ref_len, rng);
        s.target_audio = tokens_around(audio_mean, cfg_.audio_len, rng);
        s.target_video = tokens_around(video_mean, cfg_.video_tokens(), rng);
        s.first_frame = tokens_around(video_mean, cfg_.frame_tokens(), rng);
        return s;
    }

    const WorldConfig& cfg() const { return cfg_; }

private:
    static void axpy(std::vector<float>& y, float a, const std::vector<float>& x) {
        for (size_t i = 0; i < y.size(); ++i) {
            y[i] += a * x[i];
        }
    }

    Tensor tokens_around(const std::vector<float>& mean, int count, Rng& rng) const {
        std::vector<float> data(static_cast<size_t>(count) * cfg_.d_model);
        for (int t = 0; t < count; ++t) {
            for (int j = 0; j < cfg_.d_model; ++j) {
                data[static_cast<size_t>(t) * cfg_.d_model + j] =
                    mean[static_cast<size_t>(j)] + cfg_.noise_sigma * static_cast<float>(rng.normal());
            }
        }
        return Tensor::from({count, cfg_.d_model}, std::move(data));
    }

    WorldConfig cfg_;
    std::vector<std::vector<float>> audio_basis_;
    std::vector<std::vector<float>> video_basis_;
};

struct Dataset {
    WorldConfig world;
    std::vector<PairSample> train;
    std::vector<PairSample> test;
};

// Train/test identities are disjoint (roughly 80/20); each pair draws codes
// uniformly and its mode from the same/cross mix.
inline Dataset gen_split(const WorldConfig& world, int n_identities, int pairs_per_identity,
                         double same_source_mix, uint64_t seed) {
    require(n_identities >= 2, errc::invalid_argument, "gen_split: need at least two identities");
    require(pairs_per_identity >= 1, errc::invalid_argument, "gen_split: need at least one pair each");
    require(same_source_mix >= 0.0 && same_source_mix <= 1.0, errc::invalid_argument,
            "gen_split: mix must be a probability");
    SynthWorld w(world);
    Dataset ds;
    ds.world = world;
    int n_test = std::max(1, n_identities / 5);
    Rng rng(derive_seed(seed, "split"));
    for (int idx = 0; idx < n_identities; ++idx) {
        IdentitySpec identity = w.gen_identity(derive_seed(seed, "id" + std::to_string(idx)));
        bool is_test = idx >= n_identities - n_test;
        for (int p = 0; p < pairs_per_identity; ++p) {
            int env = rng.uniform_int(0, world.n_env - 1);
            int style = rng.uniform_int(0, world.n_style - 1);
            PairMode mode = rng.bernoulli(same_source_mix) ? PairMode::same_source : PairMode::cross_source;
            PairSample s = w.gen_pair(identity, env, style, mode, rng);
            (is_test ? ds.test : ds.train).push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace icdit
