#pragma once

#include <map>
#include <string>
#include <vector>

#include "icdit/adamw.hpp"
#include "icdit/grad_check.hpp"
#include "icdit/model.hpp"
#include "icdit/rng.hpp"
#include "icdit/schedule.hpp"
#include "icdit/synthworld.hpp"

namespace icdit {

// Denoising objective: targets are noised at a uniform t, references enter
// the network clean, and the squared error is taken over target video and
// target audio predictions only. Training moves adapters and conditioning
// parameters; base weights stay frozen.

struct DropoutConfig {
    float p_drop_text = 0.1f;
    float p_drop_reference = 0.1f;
    float p_first_frame = 0.9f;  // keep probability

    void validate() const {
        auto prob = [](float p) { return p >= 0.0f && p <= 1.0f; };
        require(prob(p_drop_text) && prob(p_drop_reference) && prob(p_first_frame),
                errc::invalid_argument, "dropout probabilities must be in [0,1]");
    }
};

// Applies conditioning dropout; always consumes exactly three draws so the
// stream stays aligned regardless of the outcome.
template <class T>
std::pair<ConditioningT<T>, LatentSequenceT<T>> cond_dropout(const ConditioningT<T>& cond,
                                                             const LatentSequenceT<T>& ref,
                                                             const DropoutConfig& cfg, Rng& rng) {
    cfg.validate();
    bool drop_text = rng.bernoulli(cfg.p_drop_text);
    bool drop_ref = rng.bernoulli(cfg.p_drop_reference);
    bool keep_ff = rng.bernoulli(cfg.p_first_frame);
    ConditioningT<T> out = cond;
    LatentSequenceT<T> ref_out = ref;
    if (drop_text) {
        out.env_code.reset();
        out.style_code.reset();
    }
    if (drop_ref) {
        ref_out.tokens = {};
        out.reference_present = false;
    }
    if (!keep_ff) {
        out.first_frame.reset();
    }
    return {out, ref_out};
}

// Pre-drawn randomness for one training example; drawing is separated from
// evaluation so the same draws can be replayed at double precision by the
// gradient oracle.
struct TrainingDraw {
    float t = 0.0f;
    Tensor eps_video;
    Tensor eps_audio;
    bool drop_text = false;
    bool drop_ref = false;
    bool keep_ff = true;
};

inline TrainingDraw draw_for_sample(const PairSample& s, const DropoutConfig& dc, Rng& rng) {
    TrainingDraw d;
    d.t = static_cast<float>(rng.uniform01());
    d.eps_video = Tensor::randn(s.target_video.shape(), rng);
    d.eps_audio = Tensor::randn(s.target_audio.shape(), rng);
    d.drop_text = rng.bernoulli(dc.p_drop_text);
    d.drop_ref = rng.bernoulli(dc.p_drop_reference);
    d.keep_ff = !rng.bernoulli(1.0 - dc.p_first_frame);
    return d;
}

// Mean squared error over the loss-bearing tokens of a batch, evaluated at
// precision T. ModelLike needs .cfg and .forward(joint, cond, adapters).
template <class T, class ModelLike>
TensorT<T> loss_from_draws(const ModelLike& model, const AdapterSetT<T>* adapters,
                           const std::vector<PairSample>& samples,
                           const std::vector<TrainingDraw>& draws, const NoiseSchedule& schedule) {
    require(!samples.empty(), errc::invalid_argument, "training loss: empty batch");
    require(samples.size() == draws.size(), errc::invalid_argument,
            "training loss: draw count mismatch");
    TensorT<T> total;
    for (size_t i = 0; i < samples.size(); ++i) {
        const PairSample& s = samples[i];
        const TrainingDraw& d = draws[i];
        TensorT<T> eps_v = d.eps_video.cast<T>();
        TensorT<T> eps_a = d.eps_audio.cast<T>();
        TensorT<T> z_v = add_noise(s.target_video.cast<T>(), eps_v, static_cast<T>(d.t), schedule);
        TensorT<T> z_a = add_noise(s.target_audio.cast<T>(), eps_a, static_cast<T>(d.t), schedule);

        LatentSequenceT<T> video{Modality::video, Role::target, z_v};
        LatentSequenceT<T> audio{Modality::audio, Role::target, z_a};
        LatentSequenceT<T> ref{Modality::audio, Role::reference, {}};
        if (!d.drop_ref) {
            ref.tokens = s.ref_audio.cast<T>();
        } else if (model.cfg.ref_null_mode == "null_token") {
            if constexpr (requires { model.param("cond.null_ref"); }) {
                ref.tokens = model.param("cond.null_ref");
            }
        }

        ConditioningT<T> cond;
        cond.timestep = static_cast<T>(d.t);
        cond.reference_present = !d.drop_ref;
        if (!d.drop_text) {
            cond.env_code = s.env_code;
            cond.style_code = s.style_code;
        }
        if (d.keep_ff) {
            cond.first_frame = s.first_frame.cast<T>();
        }

        JointInputT<T> joint = assemble_input(video, ref, audio, model.cfg);
        auto out = model.forward(joint, cond, adapters);

        TensorT<T> dv = sub(out.eps_video, eps_v);
        TensorT<T> da = sub(out.eps_audio, eps_a);
        TensorT<T> sq = add(sum(mul(dv, dv)), sum(mul(da, da)));
        TensorT<T> sample_loss = scale(sq, T(1) / static_cast<T>(eps_v.numel() + eps_a.numel()));
        total = total.defined() ? add(total, sample_loss) : sample_loss;
    }
    return scale(total, T(1) / static_cast<T>(samples.size()));
}

// Draws noise/dropout from the seed and evaluates the batch loss on the
// float engine (graph-attached, ready for backward()).
template <class ModelLike>
Tensor training_loss(const std::vector<PairSample>& batch, const ModelLike& model,
                     const AdapterSet* adapters, const NoiseSchedule& schedule,
                     const DropoutConfig& dropout, uint64_t seed) {
    require(!batch.empty(), errc::invalid_argument, "training loss: empty batch");
    dropout.validate();
    Rng rng(derive_seed(seed, "loss"));
    std::vector<TrainingDraw> draws;
    draws.reserve(batch.size());
    for (const auto& s : batch) {
        draws.push_back(draw_for_sample(s, dropout, rng));
    }
    return loss_from_draws<float>(model, adapters, batch, draws, schedule);
}

struct TrainOptions {
    int steps = 2000;
    int batch_size = 4;
    AdamWConfig optim;
    DropoutConfig dropout;
    uint64_t seed = 7;
};

struct TrainResult {
    std::vector<std::pair<int, float>> loss_curve;
};

// Named handles to every trainable tensor (conditioning parameters plus
// adapter factors), in deterministic sorted order.
inline std::vector<std::pair<std::string, Tensor>> trainable_parameters(Model& model,
                                                                        AdapterSet& adapters) {
    std::vector<std::pair<std::string, Tensor>> out = model.cond_parameters();
    for (auto& [name, a] : adapters.adapters) {
        out.emplace_back(name + ".lora_down", a.down);
        out.emplace_back(name + ".lora_up", a.up);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

inline TrainResult train(const Dataset& dataset, Model& model, AdapterSet& adapters,
                         const TrainOptions& opt) {
    require(!dataset.train.empty(), errc::invalid_argument, "train: dataset is empty");
    opt.optim.validate();
    opt.dropout.validate();
    NoiseSchedule schedule;
    auto trainables = trainable_parameters(model, adapters);
    std::map<std::string, OptimState> states;
    for (auto& [name, t] : trainables) {
        states[name].hyper = opt.optim;
    }

    TrainResult result;
    for (int step = 0; step < opt.steps; ++step) {
        Rng rng(derive_seed(opt.seed, "step" + std::to_string(step)));
        std::vector<PairSample> batch;
        std::vector<TrainingDraw> draws;
        for (int b = 0; b < opt.batch_size; ++b) {
            batch.push_back(dataset.train[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int>(dataset.train.size()) - 1))]);
        }
        for (const auto& s : batch) {
            draws.push_back(draw_for_sample(s, opt.dropout, rng));
        }

        Tensor loss;
        try {
            loss = loss_from_draws<float>(model, &adapters, batch, draws, schedule);
        } catch (const error& e) {
            if (e.code() == errc::non_finite) {
                throw error(errc::divergence,
                            "training diverged at step " + std::to_string(step) + ": " + e.what());
            }
            throw;
        }

        for (auto& [name, t] : trainables) {
            t.zero_grad();
        }
        loss.backward();
        for (auto& [name, t] : trainables) {
            if (!t.grad().empty()) {
                adamw_step(t, t.grad(), states[name]);
            }
        }
        result.loss_curve.emplace_back(step, loss.item());
    }
    return result;
}

namespace detail {

// Scatters a flat parameter vector into adapter factors (graph-connected
// through slice/reshape) and evaluates the batch loss, at either precision.
struct TrainingLossProbe {
    ModelConfig mcfg;
    Model m32;
    ModelT<double> m64;
    std::vector<std::string> adapter_names;
    std::vector<PairSample> samples;
    std::vector<TrainingDraw> draws;
    NoiseSchedule schedule;

    template <class TT>
    TT operator()(const TT& x) const {
        using T = typename TT::value_type;
        const ModelT<T>* model = nullptr;
        if constexpr (std::is_same_v<T, float>) {
            model = &m32;
        } else {
            model = &m64;
        }
        AdapterSetT<T> set;
        int64_t off = 0;
        const int d = mcfg.d_model;
        const int r = mcfg.lora_rank;
        for (const auto& name : adapter_names) {
            LoraAdapterT<T> a;
            a.target_weight_name = name;
            a.rank = r;
            a.alpha = static_cast<T>(mcfg.lora_alpha);
            a.down = reshape(slice_flat(x, off, static_cast<int64_t>(r) * d), {r, d});
            off += static_cast<int64_t>(r) * d;
            a.up = reshape(slice_flat(x, off, static_cast<int64_t>(d) * r), {d, r});
            off += static_cast<int64_t>(d) * r;
            set.adapters.emplace(name, std::move(a));
        }
        return loss_from_draws<T>(*model, &set, samples, draws, schedule);
    }
};

}  // namespace detail

// Registers the 2-sample training-loss probe: grad_check then differentiates
// the full model loss with respect to adapter parameters at a generic
// non-zero adapter state.
inline void register_training_loss_probe() {
    auto& reg = OpRegistry::instance();
    if (reg.contains("training_loss_2sample")) {
        return;
    }

    detail::TrainingLossProbe p;
    p.mcfg = ModelConfig{};
    p.mcfg.init_seed = 0xfeed;
    p.m32 = Model::create(p.mcfg);
    p.m64 = p.m32.cast<double>();
    for (const auto& [name, w] : p.m32.params) {
        if (Model::is_attention_projection(name)) {
            p.adapter_names.push_back(name);
        }
    }

    WorldConfig wc;
    SynthWorld world(wc);
    Rng rng(0x5eed);
    IdentitySpec ident = world.gen_identity(404);
    p.samples.push_back(world.gen_pair(ident, 2, 1, PairMode::same_source, rng));
    p.samples.push_back(world.gen_pair(ident, 5, 3, PairMode::cross_source, rng));
    DropoutConfig dc;
    TrainingDraw d0 = draw_for_sample(p.samples[0], dc, rng);
    d0.drop_text = false;
    d0.drop_ref = false;
    d0.keep_ff = true;
    TrainingDraw d1 = draw_for_sample(p.samples[1], dc, rng);
    d1.drop_text = true;  // exercise the null-text branch as well
    d1.drop_ref = false;
    d1.keep_ff = true;
    p.draws = {d0, d1};

    reg.add("training_loss_2sample", p);
}

// A generic (non-zero) adapter state to probe the training loss at; zero-up
// adapters would make every down-factor gradient vanish identically.
inline Tensor training_loss_probe_input() {
    ModelConfig mcfg;
    mcfg.init_seed = 0xfeed;
    Model m = Model::create(mcfg);
    int64_t count = 0;
    for (const auto& [name, w] : m.params) {
        if (Model::is_attention_projection(name)) {
            count += 2LL * mcfg.lora_rank * mcfg.d_model;
        }
    }
    Rng rng(0xabcd);
    auto t64 = TensorT<double>::randn({static_cast<int>(count)}, rng, 0.05);
    return t64.cast<float>();
}

}  // namespace icdit
