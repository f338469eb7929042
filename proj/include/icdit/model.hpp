#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icdit/lora.hpp"
#include "icdit/ops.hpp"
#include "icdit/positional.hpp"
#include "icdit/rng.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Dual-stream diffusion transformer at desk scale: a video stream over a
// t*h*w token grid with 3-d rotary positions and an audio stream over a 1-d
// token line where in-context reference tokens occupy negative positions.
// Bidirectional cross-modal attention couples the streams after every block
// pair. Base weights stay frozen; training moves only the low-rank adapters
// on the attention projections and the conditioning/modulation parameters.

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_blocks = 4;  // per stream, cross-modal attention after each pair
    int video_t = 2;
    int video_h = 4;
    int video_w = 4;
    int audio_len = 16;  // target audio tokens
    int ref_len = 8;     // reference audio tokens
    int mlp_ratio = 4;
    int lora_rank = 4;
    float lora_alpha = 8.0f;
    float rope_base = 10000.0f;
    int reference_gap = 0;
    int rope_video_cols = 12;  // per-head channels carrying 3-d rotary
    PositionScheme positions = PositionScheme::negative;
    bool ref_bidirectional = true;
    std::string ref_null_mode = "empty";  // "empty" | "null_token"
    int n_env = 8;
    int n_style = 4;
    uint64_t init_seed = 0x1c0ffee;

    int video_tokens() const { return video_t * video_h * video_w; }
    int frame_tokens() const { return video_h * video_w; }
    int head_dim() const { return d_model / n_heads; }

    void validate() const {
        require(d_model % n_heads == 0, errc::config_error, "d_model must divide by n_heads");
        require(head_dim() % 2 == 0, errc::config_error, "head_dim must be even for rotary pairs");
        require(rope_video_cols % 6 == 0 && rope_video_cols <= head_dim(), errc::config_error,
                "rope_video_cols must divide by 6 and fit in head_dim");
        require(n_blocks >= 1 && audio_len >= 1 && video_tokens() >= 1, errc::config_error,
                "model extents must be positive");
        require(ref_null_mode == "empty" || ref_null_mode == "null_token", errc::config_error,
                "ref_null_mode must be 'empty' or 'null_token'");
    }
};

enum class Modality { video, audio };
enum class Role { reference, target, first_frame };

// A token run with its modality/role tag. An undefined tokens tensor stands
// for the empty sequence (used when reference conditioning is dropped).
template <class T>
struct LatentSequenceT {
    Modality modality = Modality::audio;
    Role role = Role::target;
    TensorT<T> tokens;  // [count, d_model]

    bool empty() const { return !tokens.defined(); }
    int count() const { return empty() ? 0 : tokens.size(0); }

    void validate() const {
        if (role == Role::reference) {
            require(modality == Modality::audio, errc::invalid_argument,
                    "reference role is only valid for the audio modality");
        }
    }
};

using LatentSequence = LatentSequenceT<float>;

template <class T>
struct ConditioningT {
    std::optional<int> env_code;
    std::optional<int> style_code;
    T timestep = T(0);
    std::optional<TensorT<T>> first_frame;  // [h*w, d_model] clean tokens
    bool reference_present = true;
};

using Conditioning = ConditioningT<float>;

// Eq.-style joint input [video target; audio reference; audio target] with
// positions attached. Streams stay separate tensors; ordering and lengths
// are the contract.
template <class T>
struct JointInputT {
    TensorT<T> video_target;  // [V, d]
    TensorT<T> audio_ref;     // [R, d], undefined when R = 0
    TensorT<T> audio_target;  // [A, d]
    std::vector<int> audio_positions;                 // length R + A
    std::vector<std::array<int, 3>> video_grid;       // length V
    int ref_len = 0;

    int total_tokens() const {
        return video_target.size(0) + ref_len + audio_target.size(0);
    }
};

using JointInput = JointInputT<float>;

template <class T>
JointInputT<T> assemble_input(const LatentSequenceT<T>& video_target,
                              const LatentSequenceT<T>& audio_ref,
                              const LatentSequenceT<T>& audio_target,
                              const ModelConfig& cfg) {
    video_target.validate();
    audio_ref.validate();
    audio_target.validate();
    require(video_target.modality == Modality::video && video_target.role == Role::target,
            errc::invalid_argument, "assemble_input: first sequence must be the video target");
    require(audio_ref.empty() || (audio_ref.modality == Modality::audio && audio_ref.role == Role::reference),
            errc::invalid_argument, "assemble_input: second sequence must be the audio reference");
    require(audio_target.modality == Modality::audio && audio_target.role == Role::target,
            errc::invalid_argument, "assemble_input: third sequence must be the audio target");
    require(!audio_target.empty() && !video_target.empty(), errc::invalid_argument,
            "assemble_input: target sequences must be non-empty");

    JointInputT<T> joint;
    joint.video_target = video_target.tokens;
    joint.audio_target = audio_target.tokens;
    joint.ref_len = audio_ref.count();
    if (!audio_ref.empty()) {
        joint.audio_ref = audio_ref.tokens;
    }
    if (cfg.positions == PositionScheme::negative) {
        joint.audio_positions = build_positions(joint.ref_len, audio_target.count(), cfg.reference_gap);
    } else {
        joint.audio_positions = build_positions_standard(joint.ref_len, audio_target.count());
    }
    joint.video_grid = build_video_grid(cfg.video_t, cfg.video_h, cfg.video_w);
    require(static_cast<int>(joint.video_grid.size()) == video_target.count(), errc::shape_mismatch,
            "assemble_input: video token count does not match the configured grid");
    return joint;
}

template <class T>
struct AdapterSetT {
    std::map<std::string, LoraAdapterT<T>> adapters;

    const LoraAdapterT<T>* find(const std::string& target) const {
        auto it = adapters.find(target);
        return it == adapters.end() ? nullptr : &it->second;
    }

    bool all_up_zero() const {
        for (const auto& [name, a] : adapters) {
            for (T v : a.up.data()) {
                if (v != T(0)) {
                    return false;
                }
            }
        }
        return true;
    }

    template <class U>
    AdapterSetT<U> cast() const {
        AdapterSetT<U> out;
        for (const auto& [name, a] : adapters) {
            out.adapters.emplace(name, a.template cast<U>());
        }
        return out;
    }
};

using AdapterSet = AdapterSetT<float>;

template <class T>
struct ForwardOutputT {
    TensorT<T> eps_video;  // predictions for the target video tokens
    TensorT<T> eps_audio;  // predictions for the target audio tokens
};

template <class T>
struct ForwardOptionsT {
    std::optional<int> skip_block;  // STG: pass the named video block through
    bool disable_cross = false;     // AV-bimodal contrast: no cross-modal attention
};

using ForwardOptions = ForwardOptionsT<float>;

template <class T>
class ModelT {
public:
    ModelConfig cfg;
    std::map<std::string, TensorT<T>> params;

    static ModelT create(const ModelConfig& config) {
        config.validate();
        ModelT m;
        m.cfg = config;
        const int d = config.d_model;
        const int md = config.mlp_ratio * d;

        auto add_param = [&](const std::string& name, std::vector<int> shape, double stddev,
                             bool trainable) {
            Rng rng(derive_seed(config.init_seed, name));
            TensorT<T> t;
            if (stddev == 0.0) {
                t = TensorT<T>::zeros(std::move(shape), trainable);
            } else {
                auto t64 = TensorT<double>::randn(std::move(shape), rng, stddev);
                t = t64.template cast<T>();
                t.node()->requires_grad = trainable;
            }
            m.params.emplace(name, std::move(t));
        };

        const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
        const double out_std = 0.25 / std::sqrt(static_cast<double>(d));
        for (const std::string& stream : {std::string("video"), std::string("audio")}) {
            for (int b = 0; b < config.n_blocks; ++b) {
                std::string p = "base." + stream + ".b" + std::to_string(b);
                add_param(p + ".attn.wq", {d, d}, proj_std, false);
                add_param(p + ".attn.wk", {d, d}, proj_std, false);
                add_param(p + ".attn.wv", {d, d}, proj_std, false);
                add_param(p + ".attn.wo", {d, d}, out_std, false);
                add_param(p + ".mlp.w1", {d, md}, proj_std, false);
                add_param(p + ".mlp.w2", {md, d}, 0.25 / std::sqrt(static_cast<double>(md)), false);
                add_param("cond." + stream + ".b" + std::to_string(b) + ".mod_w", {d, 6 * d}, 0.0, true);
                add_param("cond." + stream + ".b" + std::to_string(b) + ".mod_b", {6 * d}, 0.0, true);
            }
        }
        for (int b = 0; b < config.n_blocks; ++b) {
            for (const std::string& dir : {std::string("v_from_a"), std::string("a_from_v")}) {
                std::string p = "base.cross.p" + std::to_string(b) + "." + dir;
                add_param(p + ".wq", {d, d}, proj_std, false);
                add_param(p + ".wk", {d, d}, proj_std, false);
                add_param(p + ".wv", {d, d}, proj_std, false);
                add_param(p + ".wo", {d, d}, out_std, false);
            }
            add_param("cond.cross.p" + std::to_string(b) + ".mod_w", {d, 6 * d}, 0.0, true);
            add_param("cond.cross.p" + std::to_string(b) + ".mod_b", {6 * d}, 0.0, true);
        }
        add_param("cond.t_w1", {d, d}, proj_std, true);
        add_param("cond.t_w2", {d, d}, proj_std, true);
        add_param("cond.env_table", {config.n_env, d}, 0.5, true);
        add_param("cond.style_table", {config.n_style, d}, 0.5, true);
        add_param("cond.video.final.mod_w", {d, 2 * d}, 0.0, true);
        add_param("cond.video.final.mod_b", {2 * d}, 0.0, true);
        add_param("cond.audio.final.mod_w", {d, 2 * d}, 0.0, true);
        add_param("cond.audio.final.mod_b", {2 * d}, 0.0, true);
        if (config.ref_null_mode == "null_token") {
            add_param("cond.null_ref", {1, d}, 1.0, true);
        }
        return m;
    }

    AdapterSetT<T> create_adapters() const {
        AdapterSetT<T> set;
        for (const auto& [name, w] : params) {
            if (is_attention_projection(name)) {
                set.adapters.emplace(
                    name, make_lora<T>(name, w.size(1), w.size(0), cfg.lora_rank,
                                       static_cast<T>(cfg.lora_alpha),
                                       derive_seed(cfg.init_seed, name + ".lora")));
            }
        }
        return set;
    }

    static bool is_attention_projection(const std::string& name) {
        if (name.rfind("base.", 0) != 0) {
            return false;
        }
        auto tail = name.substr(name.size() - 3);
        return tail == ".wq" || tail == ".wk" || tail == ".wv" || tail == ".wo";
    }

    const TensorT<T>& param(const std::string& name) const {
        auto it = params.find(name);
        require(it != params.end(), errc::unknown_name, "model: unknown parameter " + name);
        return it->second;
    }

    // Trainable set: conditioning / modulation parameters. Adapters are held
    // separately in the AdapterSet.
    std::vector<std::pair<std::string, TensorT<T>>> cond_parameters() {
        std::vector<std::pair<std::string, TensorT<T>>> out;
        for (auto& [name, t] : params) {
            if (name.rfind("cond.", 0) == 0) {
                out.emplace_back(name, t);
            }
        }
        return out;
    }

    std::vector<std::pair<std::string, TensorT<T>>> base_parameters() const {
        std::vector<std::pair<std::string, TensorT<T>>> out;
        for (const auto& [name, t] : params) {
            if (name.rfind("base.", 0) == 0) {
                out.emplace_back(name, t);
            }
        }
        return out;
    }

    template <class U>
    ModelT<U> cast() const {
        ModelT<U> out;
        out.cfg = cfg;
        for (const auto& [name, t] : params) {
            auto c = t.template cast<U>();
            c.node()->requires_grad = t.requires_grad();
            out.params.emplace(name, std::move(c));
        }
        return out;
    }

    ForwardOutputT<T> forward(const JointInputT<T>& joint, const ConditioningT<T>& cond,
                              const AdapterSetT<T>* adapters,
                              const ForwardOptionsT<T>& opt = {}) const {
        const int d = cfg.d_model;
        require(joint.video_target.size(1) == d && joint.audio_target.size(1) == d,
                errc::shape_mismatch, "forward: token width does not match d_model");
        if (opt.skip_block) {
            require(*opt.skip_block >= 0 && *opt.skip_block < cfg.n_blocks, errc::unknown_name,
                    "forward: skip_block names a non-existent video block");
        }

        TensorT<T> cvec = condition_vector(cond);

        // Video stream: optional clean first-frame row at t=0 positions,
        // then the (noisy) target grid.
        TensorT<T> xv = joint.video_target;
        std::vector<std::array<int, 3>> vgrid = joint.video_grid;
        int ff_rows = 0;
        if (cond.first_frame) {
            require(cond.first_frame->size(0) == cfg.frame_tokens() && cond.first_frame->size(1) == d,
                    errc::shape_mismatch, "forward: first_frame must be one h*w token row");
            ff_rows = cfg.frame_tokens();
            xv = concat_rows<T>({*cond.first_frame, joint.video_target});
            auto ff_grid = build_video_grid(1, cfg.video_h, cfg.video_w);
            ff_grid.insert(ff_grid.end(), joint.video_grid.begin(), joint.video_grid.end());
            vgrid = std::move(ff_grid);
        }

        // Audio stream: reference tokens (clean) ahead of the targets.
        TensorT<T> xa = joint.audio_target;
        std::vector<int> apos = joint.audio_positions;
        int ref_rows = joint.ref_len;
        if (ref_rows > 0) {
            xa = concat_rows<T>({joint.audio_ref, joint.audio_target});
        }

        TensorT<T> audio_mask;
        if (!cfg.ref_bidirectional && ref_rows > 0) {
            audio_mask = reference_only_mask(ref_rows, xa.size(0));
        }

        for (int b = 0; b < cfg.n_blocks; ++b) {
            bool skip = opt.skip_block && *opt.skip_block == b;
            xv = self_block("video.b" + std::to_string(b), xv, cvec, adapters, skip,
                            nullptr, &vgrid, nullptr);
            xa = self_block("audio.b" + std::to_string(b), xa, cvec, adapters, false,
                            &apos, nullptr, audio_mask.defined() ? &audio_mask : nullptr);
            if (!opt.disable_cross) {
                cross_pair(b, xv, xa, cvec, adapters);
            }
        }

        ForwardOutputT<T> out;
        out.eps_video = slice_rows(final_head("video", xv, cvec), ff_rows, joint.video_target.size(0));
        out.eps_audio = slice_rows(final_head("audio", xa, cvec), ref_rows, joint.audio_target.size(0));
        return out;
    }

    // Sinusoidal timestep features -> small MLP, plus learned text-code
    // embeddings; explicit nulls contribute nothing.
    TensorT<T> condition_vector(const ConditioningT<T>& cond) const {
        const int d = cfg.d_model;
        std::vector<T> sin_features(static_cast<size_t>(d));
        for (int i = 0; i < d / 2; ++i) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / (d / 2));
            double arg = static_cast<double>(cond.timestep) * 1000.0 * freq;
            sin_features[static_cast<size_t>(2 * i)] = static_cast<T>(std::sin(arg));
            sin_features[static_cast<size_t>(2 * i + 1)] = static_cast<T>(std::cos(arg));
        }
        TensorT<T> temb = TensorT<T>::from({1, d}, std::move(sin_features));
        TensorT<T> c = matmul(silu(matmul(temb, param("cond.t_w1"))), param("cond.t_w2"));
        if (cond.env_code) {
            require(*cond.env_code >= 0 && *cond.env_code < cfg.n_env, errc::invalid_argument,
                    "forward: env code out of vocabulary");
            c = add(c, slice_rows(param("cond.env_table"), *cond.env_code, 1));
        }
        if (cond.style_code) {
            require(*cond.style_code >= 0 && *cond.style_code < cfg.n_style, errc::invalid_argument,
                    "forward: style code out of vocabulary");
            c = add(c, slice_rows(param("cond.style_table"), *cond.style_code, 1));
        }
        return silu(c);
    }

private:
    static TensorT<T> one_plus(const TensorT<T>& s) { return add_scalar(s, T(1)); }

    static TensorT<T> modulate(const TensorT<T>& h, const TensorT<T>& s, const TensorT<T>& b) {
        return add_rowvec(mul_rowvec(h, add_scalar(s, T(1))), b);
    }

    TensorT<T> reference_only_mask(int ref_rows, int n) const {
        std::vector<T> m(static_cast<size_t>(n) * n, T(0));
        for (int i = 0; i < ref_rows; ++i) {
            for (int j = ref_rows; j < n; ++j) {
                m[static_cast<size_t>(i) * n + j] = T(-1e9);
            }
        }
        return TensorT<T>::from({n, n}, std::move(m));
    }

    std::vector<TensorT<T>> modulation(const std::string& cond_prefix, const TensorT<T>& cvec,
                                       int parts) const {
        TensorT<T> m = add_rowvec(matmul(cvec, param(cond_prefix + ".mod_w")),
                                  param(cond_prefix + ".mod_b"));
        const int d = cfg.d_model;
        std::vector<TensorT<T>> out;
        for (int i = 0; i < parts; ++i) {
            out.push_back(slice_cols(m, i * d, d));
        }
        return out;
    }

    // Per-head rotary application; video heads rotate their first
    // rope_video_cols channels by the (t,h,w) coordinates, audio heads
    // rotate the full head width by the signed 1-d position.
    TensorT<T> rope_head(const TensorT<T>& x, const std::vector<int>* pos1d,
                         const std::vector<std::array<int, 3>>* grid) const {
        if (pos1d != nullptr) {
            return apply_rope_1d(x, *pos1d, cfg.rope_base);
        }
        if (grid != nullptr) {
            int rc = cfg.rope_video_cols;
            if (rc == x.size(1)) {
                return apply_rope_3d(x, *grid, cfg.rope_base);
            }
            TensorT<T> roped = apply_rope_3d(slice_cols(x, 0, rc), *grid, cfg.rope_base);
            return concat_cols<T>({roped, slice_cols(x, rc, x.size(1) - rc)});
        }
        return x;
    }

    TensorT<T> mha(const std::string& prefix, const TensorT<T>& hq, const TensorT<T>& hkv,
                   const std::vector<int>* q_pos, const std::vector<std::array<int, 3>>* q_grid,
                   const std::vector<int>* k_pos, const std::vector<std::array<int, 3>>* k_grid,
                   const AdapterSetT<T>* adapters, const TensorT<T>* mask) const {
        auto proj = [&](const char* w, const TensorT<T>& x) {
            std::string name = prefix + "." + w;
            return lora_linear_rows(x, param(name), adapters ? adapters->find(name) : nullptr);
        };
        TensorT<T> q = proj("wq", hq);
        TensorT<T> k = proj("wk", hkv);
        TensorT<T> v = proj("wv", hkv);

        const int dh = cfg.head_dim();
        const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
        std::vector<TensorT<T>> heads;
        for (int h = 0; h < cfg.n_heads; ++h) {
            TensorT<T> qh = rope_head(slice_cols(q, h * dh, dh), q_pos, q_grid);
            TensorT<T> kh = rope_head(slice_cols(k, h * dh, dh), k_pos, k_grid);
            TensorT<T> vh = slice_cols(v, h * dh, dh);
            TensorT<T> logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
            if (mask != nullptr) {
                logits = add(logits, *mask);
            }
            heads.push_back(matmul(softmax_rows(logits), vh));
        }
        std::string wo = prefix + ".wo";
        return lora_linear_rows(concat_cols(heads), param(wo), adapters ? adapters->find(wo) : nullptr);
    }

    TensorT<T> self_block(const std::string& block, const TensorT<T>& x_in, const TensorT<T>& cvec,
                          const AdapterSetT<T>* adapters, bool skip_attn,
                          const std::vector<int>* pos1d, const std::vector<std::array<int, 3>>* grid,
                          const TensorT<T>* mask) const {
        auto mods = modulation("cond." + block, cvec, 6);
        TensorT<T> x = x_in;
        if (!skip_attn) {
            TensorT<T> h = modulate(rms_norm_rows(x), mods[0], mods[1]);
            TensorT<T> a = mha("base." + block + ".attn", h, h, pos1d, grid, pos1d, grid,
                               adapters, mask);
            x = add(x, mul_rowvec(a, one_plus(mods[2])));
        }
        TensorT<T> h2 = modulate(rms_norm_rows(x), mods[3], mods[4]);
        TensorT<T> m = matmul(silu(matmul(h2, param("base." + block + ".mlp.w1"))),
                              param("base." + block + ".mlp.w2"));
        return add(x, mul_rowvec(m, one_plus(mods[5])));
    }

    void cross_pair(int pair, TensorT<T>& xv, TensorT<T>& xa, const TensorT<T>& cvec,
                    const AdapterSetT<T>* adapters) const {
        auto mods = modulation("cond.cross.p" + std::to_string(pair), cvec, 6);
        TensorT<T> hv = modulate(rms_norm_rows(xv), mods[0], mods[1]);
        TensorT<T> ha = modulate(rms_norm_rows(xa), mods[3], mods[4]);
        std::string p = "base.cross.p" + std::to_string(pair);
        TensorT<T> dv = mha(p + ".v_from_a", hv, ha, nullptr, nullptr, nullptr, nullptr,
                            adapters, nullptr);
        TensorT<T> da = mha(p + ".a_from_v", ha, hv, nullptr, nullptr, nullptr, nullptr,
                            adapters, nullptr);
        xv = add(xv, mul_rowvec(dv, one_plus(mods[2])));
        xa = add(xa, mul_rowvec(da, one_plus(mods[5])));
    }

    // Identity output head behind a modulated final norm.
    TensorT<T> final_head(const std::string& stream, const TensorT<T>& x, const TensorT<T>& cvec) const {
        auto mods = modulation("cond." + stream + ".final", cvec, 2);
        return modulate(rms_norm_rows(x), mods[1], mods[0]);
    }
};

using Model = ModelT<float>;

}  // namespace icdit
