#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "revt/augment.hpp"
#include "revt/common.hpp"
#include "revt/nets.hpp"
#include "revt/params.hpp"
#include "revt/rng.hpp"
#include "revt/synthdata.hpp"
#include "revt/tensor.hpp"

namespace revt {

// ---------------------------------------------------------------------------
// Optimizer setups: the two training recipes (AdamW and SGD) at desk scale.
// Iteration counts and warm-up are the paper-scale values divided by 20.
// ---------------------------------------------------------------------------

struct OptimizerSetup {
    enum class Kind { AdamW, Sgd };
    Kind kind = Kind::AdamW;
    std::string id = "adamw";
    double eta0 = 6e-5;
    int tau_max = 2000;
    int warmup_iters = 0;
    double warmup_ratio = 1e-6;
    double beta1 = 0.9, beta2 = 0.999;  // adamw moments
    double momentum = 0.9;              // sgd
    double weight_decay = 0.01;
    int batch_size = 4;
    double eps = 1e-8;
    double head_lr_mult = 10.0;  // decode-head learning-rate multiplier

    void validate() const {
        if (eta0 <= 0.0) throw ConfigError("optimizer: eta0 must be positive");
        if (tau_max < 1) throw ConfigError("optimizer: tau_max must be >= 1");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || momentum < 0 || momentum >= 1)
            throw ConfigError("optimizer: momentum terms must be in [0, 1)");
        if (warmup_iters < 0 || warmup_iters >= tau_max)
            throw ConfigError("optimizer: warm-up must fit inside tau_max");
        if (batch_size < 1) throw ConfigError("optimizer: bad batch size");
    }

    // Table-9 shape at desk scale: iterations and warm-up divided by 20, the
    // initial rate scaled up 5x so the shortened schedule still converges.
    static OptimizerSetup adamw_desk() {
        OptimizerSetup s;
        s.kind = Kind::AdamW;
        s.id = "adamw";
        s.eta0 = 3e-4;
        s.tau_max = 2000;
        s.warmup_iters = 75;
        s.warmup_ratio = 1e-6;
        s.beta1 = 0.9;
        s.beta2 = 0.999;
        s.weight_decay = 0.01;
        s.batch_size = 4;
        return s;
    }

    static OptimizerSetup sgd_desk() {
        OptimizerSetup s;
        s.kind = Kind::Sgd;
        s.id = "sgd";
        s.eta0 = 1e-3;
        s.tau_max = 3000;
        s.warmup_iters = 0;
        s.momentum = 0.9;
        s.weight_decay = 5e-4;
        s.batch_size = 4;
        return s;
    }

    static OptimizerSetup by_id(const std::string& id) {
        if (id == "adamw") return adamw_desk();
        if (id == "sgd") return sgd_desk();
        throw ConfigError("unknown optimizer setup id: " + id);
    }
};

// Polynomial schedule with power 0.9 and an optional linear warm-up that
// reaches eta0 exactly at the warm-up boundary; the polynomial then decays
// over the remaining iterations so the junction is continuous.
inline double lr_at(int tau, const OptimizerSetup& setup) {
    if (tau < 0 || tau > setup.tau_max)
        throw UsageError("lr_at: iteration outside [0, tau_max]");
    if (tau < setup.warmup_iters) {
        const double t = static_cast<double>(tau) / setup.warmup_iters;
        return setup.eta0 * (setup.warmup_ratio + (1.0 - setup.warmup_ratio) * t);
    }
    const double span = static_cast<double>(setup.tau_max - setup.warmup_iters);
    const double frac = static_cast<double>(tau - setup.warmup_iters) / span;
    return setup.eta0 * std::pow(1.0 - frac, 0.9);
}

// ---------------------------------------------------------------------------
// Optimizer steps. The scalar cores run in double precision; tensor updates
// apply them elementwise and cast the parameter back to f32.
// ---------------------------------------------------------------------------

// step is 1-based (bias correction uses beta^step)
inline double adamw_scalar_update(double theta, double g, double& m, double& v, int64_t step,
                                  const OptimizerSetup& s, double lr) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(s.beta1, static_cast<double>(step)));
    const double vhat = v / (1.0 - std::pow(s.beta2, static_cast<double>(step)));
    return theta - lr * (mhat / (std::sqrt(vhat) + s.eps)) - lr * s.weight_decay * theta;
}

// coupled decay: the decay term joins the gradient before momentum
inline double sgd_scalar_update(double theta, double g, double& vel, const OptimizerSetup& s,
                                double lr) {
    vel = s.momentum * vel + g + s.weight_decay * theta;
    return theta - lr * vel;
}

struct OptimizerState {
    std::map<std::string, std::vector<double>> m;  // first moment / sgd velocity
    std::map<std::string, std::vector<double>> v;  // second moment (adamw)
    int64_t steps_done = 0;

    std::vector<double>& buffer(std::map<std::string, std::vector<double>>& which,
                                const std::string& path, size_t n) {
        auto it = which.find(path);
        if (it == which.end()) it = which.emplace(path, std::vector<double>(n, 0.0)).first;
        return it->second;
    }
};

inline void check_grad_finite(const std::string& path, float g, int64_t iter) {
    if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in " + path + " at iteration " +
                            std::to_string(iter));
}

inline void adamw_step(ParamTree& params, OptimizerState& state, int tau,
                       const OptimizerSetup& setup) {
    const double base_lr = lr_at(tau, setup);
    const int64_t step = ++state.steps_done;
    for (auto& [path, e] : params) {
        Tensor& t = e.tensor;
        if (!t.has_grad()) continue;
        const double lr =
            e.part == Part::Decoder ? base_lr * setup.head_lr_mult : base_lr;
        auto& m = state.buffer(state.m, path, static_cast<size_t>(t.numel()));
        auto& v = state.buffer(state.v, path, static_cast<size_t>(t.numel()));
        const std::vector<float>& g = t.grad();
        for (int64_t i = 0; i < t.numel(); ++i) {
            check_grad_finite(path, g[static_cast<size_t>(i)], tau);
            t.data()[i] = static_cast<float>(
                adamw_scalar_update(t.data()[i], g[static_cast<size_t>(i)],
                                    m[static_cast<size_t>(i)], v[static_cast<size_t>(i)], step,
                                    setup, lr));
        }
    }
}

inline void sgd_step(ParamTree& params, OptimizerState& state, int tau,
                     const OptimizerSetup& setup) {
    const double base_lr = lr_at(tau, setup);
    ++state.steps_done;
    for (auto& [path, e] : params) {
        Tensor& t = e.tensor;
        if (!t.has_grad()) continue;
        const double lr =
            e.part == Part::Decoder ? base_lr * setup.head_lr_mult : base_lr;
        auto& vel = state.buffer(state.m, path, static_cast<size_t>(t.numel()));
        const std::vector<float>& g = t.grad();
        for (int64_t i = 0; i < t.numel(); ++i) {
            check_grad_finite(path, g[static_cast<size_t>(i)], tau);
            t.data()[i] = static_cast<float>(sgd_scalar_update(
                t.data()[i], g[static_cast<size_t>(i)], vel[static_cast<size_t>(i)], setup, lr));
        }
    }
}

inline void optimizer_step(ParamTree& params, OptimizerState& state, int tau,
                           const OptimizerSetup& setup) {
    if (setup.kind == OptimizerSetup::Kind::AdamW)
        adamw_step(params, state, tau, setup);
    else
        sgd_step(params, state, tau, setup);
}

// ---------------------------------------------------------------------------
// Base-model training loop
// ---------------------------------------------------------------------------

struct TrainSeeds {
    uint64_t master = 0;
    uint64_t encoder = 0;
    uint64_t decoder = 0;
    uint64_t order = 0;  // batch sampling stream
};

struct TrainJob {
    NetConfig net;
    AugPolicy policy;
    OptimizerSetup setup;
    TrainSeeds seeds;
    const std::vector<SegSample>* data = nullptr;
    const MixerSet* mixers = nullptr;
    std::optional<ParamTree> init_params;  // values copied over matching paths
    int override_tau = -1;                 // train fewer iterations than the setup
};

struct IterStat {
    int iter;
    double lr;
    double loss;
};

struct TrainResult {
    SegModel model;
    json meta;
    std::vector<IterStat> log;
};

inline Tensor stack_batch(const std::vector<Tensor>& chw) {
    const int b = static_cast<int>(chw.size());
    const auto& s = chw[0].shape();
    Tensor out = Tensor::zeros({b, s[0], s[1], s[2]});
    const int64_t n = chw[0].numel();
    for (int i = 0; i < b; ++i) {
        if (chw[static_cast<size_t>(i)].shape() != s)
            throw DimensionError("stack_batch: mixed sample shapes");
        std::copy(chw[static_cast<size_t>(i)].data(), chw[static_cast<size_t>(i)].data() + n,
                  out.data() + i * n);
    }
    return out;
}

// One full training run; emits the final-iteration model only.
inline TrainResult train_base_model(const TrainJob& job) {
    if (!job.data || job.data->empty()) throw UsageError("train: empty dataset");
    job.setup.validate();
    const int tau_max = job.override_tau >= 0 ? job.override_tau : job.setup.tau_max;
    if (tau_max > job.setup.tau_max)
        throw UsageError("train: override_tau exceeds the schedule length");

    TrainResult result;
    result.model = build_model(job.net, job.seeds.encoder, job.seeds.decoder);
    if (job.init_params) {
        for (const auto& [path, e] : *job.init_params) {
            if (!result.model.params.has(path)) continue;
            Tensor& dst = result.model.params.tensor(path);
            if (dst.shape() != e.tensor.shape())
                throw MergeError("warm-start shape mismatch at " + path);
            dst.values() = e.tensor.values();
        }
    }
    for (auto& [path, e] : result.model.params) e.tensor.set_requires_grad(true);

    OptimizerState state;
    RngStream order_rng(job.seeds.order, 0xB47C4);
    const int n = static_cast<int>(job.data->size());
    const int bsz = job.setup.batch_size;

    for (int tau = 0; tau < tau_max; ++tau) {
        std::vector<Tensor> inputs;
        std::vector<uint8_t> labels;
        inputs.reserve(static_cast<size_t>(bsz));
        for (int slot = 0; slot < bsz; ++slot) {
            const int idx = order_rng.uniform_int(0, n - 1);
            RngStream aug_rng(mix_seed(job.seeds.master, 0xA06),
                              mix_seed(static_cast<uint64_t>(tau), static_cast<uint64_t>(slot)));
            AugResult aug = apply_policy(job.policy, (*job.data)[static_cast<size_t>(idx)],
                                         job.mixers, aug_rng);
            inputs.push_back(aug.input);
            labels.insert(labels.end(), aug.labels.data.begin(), aug.labels.data.end());
        }

        double loss_val = 0.0;
        try {
            Tape tape;
            TapeScope scope(tape);
            const Tensor x = stack_batch(inputs);
            Tensor logits = forward_logits(result.model, x);
            // [B,S,H,W] -> [B,H,W,S] rows for the pixelwise loss
            Tensor rows = reshape(transpose(transpose(logits, 1, 2), 2, 3),
                                  {static_cast<int>(labels.size()), logits.dim(1)});
            Tensor loss = cross_entropy(rows, labels, kIgnoreLabel);
            loss_val = loss.item();
            backward(loss);
        } catch (const NumericError& e) {
            throw TrainingError("divergence at iteration " + std::to_string(tau) + ": " +
                                e.what());
        }
        if (!std::isfinite(loss_val))
            throw TrainingError("non-finite loss at iteration " + std::to_string(tau));

        optimizer_step(result.model.params, state, tau, job.setup);
        result.log.push_back({tau, lr_at(tau, job.setup), loss_val});
    }

    result.meta = {{"policy", job.policy.id},
                   {"seeds",
                    {{"master", job.seeds.master},
                     {"encoder", job.seeds.encoder},
                     {"decoder", job.seeds.decoder},
                     {"order", job.seeds.order}}},
                   {"optimizer", job.setup.id},
                   {"iterations", tau_max},
                   {"net", result.model.config.to_json()}};
    return result;
}

}  // namespace revt
