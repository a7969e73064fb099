#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hiwm/common.hpp"
#include "hiwm/datasets.hpp"
#include "hiwm/expert.hpp"
#include "hiwm/intervene.hpp"
#include "hiwm/nn.hpp"
#include "hiwm/records.hpp"
#include "hiwm/rng.hpp"
#include "hiwm/session.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

inline const std::vector<std::size_t> kPolicyLayers{kFeatureDims, 64, 64, 2};
inline constexpr std::size_t kPolicyParamCount = 10 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2;

/// Position features (block, target, pusher) arrive in [0, 1]. The network
/// sees them centred on the workspace and scaled so one unit is 32 mm; the
/// sin/cos entries pass through. This is a fixed affine map in front of the
/// first layer, not a trainable parameter.
inline constexpr double kPositionScale = 16.0;

inline std::array<double, kFeatureDims> policy_input(const std::array<double, kFeatureDims>& f) {
    std::array<double, kFeatureDims> x = f;
    for (std::size_t i : {0, 1, 4, 5, 8, 9}) x[i] = (f[i] - 0.5) * kPositionScale;
    return x;
}

/// Network weights for the 10-64-64-2 policy. Layout follows nn::Mlp: for
/// each layer, W[out][in] row-major, then b[out].
struct PolicyParams {
    nn::Mlp net{kPolicyLayers};
    std::uint64_t init_seed = 0;

    static PolicyParams initialized(std::uint64_t seed) {
        PolicyParams p;
        p.init_seed = seed;
        p.net.init_glorot(seed);
        return p;
    }

    std::vector<double>& weights() { return net.params(); }
    const std::vector<double>& weights() const { return net.params(); }

    friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
        return a.weights() == b.weights() && a.init_seed == b.init_seed;
    }
};

enum class OptimizerKind { Adam, Momentum };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double lr = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 300;
    double corrective_weight = 2.0;  // w
    std::uint64_t shuffle_seed = 0;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (!(lr > 0.0)) throw Error("invalid_config", "learning rate must be > 0");
        if (batch_size == 0) throw Error("invalid_config", "batch size must be > 0");
        if (!(corrective_weight >= 1.0)) throw Error("invalid_config", "corrective weight must be >= 1");
    }

    nlohmann::ordered_json to_json() const {
        return {{"optimizer", optimizer == OptimizerKind::Adam ? "adam" : "momentum"},
                {"lr", lr},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"corrective_weight", corrective_weight},
                {"shuffle_seed", shuffle_seed},
                {"init_seed", init_seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        for (const auto& [k, v] : j.items()) {
            if (k == "optimizer") {
                const auto s = v.get<std::string>();
                if (s != "adam" && s != "momentum") throw Error("invalid_config", "optimizer must be adam or momentum");
                c.optimizer = s == "adam" ? OptimizerKind::Adam : OptimizerKind::Momentum;
            } else if (k == "lr") {
                c.lr = v.get<double>();
            } else if (k == "batch_size") {
                c.batch_size = v.get<std::size_t>();
            } else if (k == "epochs") {
                c.epochs = v.get<std::size_t>();
            } else if (k == "corrective_weight") {
                c.corrective_weight = v.get<double>();
            } else if (k == "shuffle_seed") {
                c.shuffle_seed = v.get<std::uint64_t>();
            } else if (k == "init_seed") {
                c.init_seed = v.get<std::uint64_t>();
            } else {
                throw Error("invalid_config", "unknown train key '" + k + "'");
            }
        }
        c.validate();
        return c;
    }

    std::uint64_t digest() const { return fnv1a64(to_json().dump()); }
};

struct Checkpoint {
    PolicyParams params;
    TrainConfig config;
    std::size_t epoch = 0;
    nlohmann::ordered_json provenance = nlohmann::ordered_json::object();  // dataset digests etc.
};

// ---------------------------------------------------------------------------
// Checkpoint file: "HIWP", u16 version, u16 reserved, u64 config digest,
// u32 length + provenance JSON, u64 weight count, little-endian f64 weights.

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const Checkpoint& c) {
    detail::ByteWriter w;
    w.raw("HIWP");
    w.u16(kCheckpointVersion);
    w.u16(0);
    w.u64(c.config.digest());
    const nlohmann::ordered_json meta{{"config", c.config.to_json()},
                                      {"epoch", c.epoch},
                                      {"init_seed", c.params.init_seed},
                                      {"provenance", c.provenance}};
    const std::string text = meta.dump();
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);
    w.u64(c.params.weights().size());
    for (double v : c.params.weights()) w.f64(v);
    return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    detail::ByteReader r(bytes);
    if (bytes.size() < 4 || r.raw(4) != "HIWP") throw Error("decode_error", "bad checkpoint magic");
    if (r.u16() != kCheckpointVersion) throw Error("decode_error", "unsupported checkpoint version");
    r.u16();
    const std::uint64_t digest = r.u64();
    const std::uint32_t len = r.u32();
    Checkpoint c;
    try {
        const auto meta = nlohmann::json::parse(r.raw(len));
        c.config = TrainConfig::from_json(meta.at("config"));
        c.epoch = meta.at("epoch").get<std::size_t>();
        c.params.init_seed = meta.at("init_seed").get<std::uint64_t>();
        c.provenance = meta.at("provenance");
    } catch (const nlohmann::json::exception& e) {
        throw Error("decode_error", std::string("checkpoint metadata: ") + e.what());
    }
    if (c.config.digest() != digest) throw Error("decode_error", "checkpoint config digest mismatch");
    if (r.u64() != kPolicyParamCount) throw Error("decode_error", "checkpoint weight count is not 4994");
    for (double& v : c.params.weights()) v = r.f64();
    if (r.remaining() != 0) throw Error("decode_error", "trailing bytes after checkpoint weights");
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("io_error", "cannot write " + path.string());
    f << encode_checkpoint(c);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("io_error", "cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

// ---------------------------------------------------------------------------
// Acting

/// Forward pass, output read as a planar delta in units of v_max, then
/// assembled into the 14-D action and clamped.
inline ActionVector policy_act(const PolicyParams& p, const Observation& obs,
                               const WorkspaceBounds& bounds = {}) {
    if (!p.net.params_finite()) throw Error("invalid_params", "policy weights are not finite");
    const auto x = policy_input(obs.features);
    const auto y = p.net.forward(x);
    const Vec2 pusher = obs.ee_poses.planar();
    const Vec2 target = pusher + phys::kVmaxPerTick * Vec2{y[0], y[1]};
    return clamp_and_limit(bounds.hold_action(target), obs.ee_poses, MapperConfig::planar(bounds));
}

inline PolicyFn as_policy(PolicyParams p, WorkspaceBounds bounds = {}) {
    return [p = std::move(p), bounds](const Observation& obs) { return policy_act(p, obs, bounds); };
}

inline ActionVector scripted_expert_act(const Observation& obs) {
    static const ScriptedExpert expert;
    return expert.act(obs);
}

inline PolicyFn expert_policy(const ExpertConfig& cfg = {}) {
    auto e = std::make_shared<ScriptedExpert>(cfg);
    return [e](const Observation& obs) { return e->act(obs); };
}

/// Uniform random planar targets within reach of the pusher.
inline PolicyFn random_policy(std::uint64_t seed, WorkspaceBounds bounds = {}) {
    auto rng = std::make_shared<Rng>(seed);
    return [rng, bounds](const Observation& obs) {
        const Vec2 p = obs.ee_poses.planar();
        const Vec2 d{rng->uniform(-1.0, 1.0), rng->uniform(-1.0, 1.0)};
        return clamp_and_limit(bounds.hold_action(p + phys::kVmaxPerTick * d), obs.ee_poses,
                               MapperConfig::planar(bounds));
    };
}

// ---------------------------------------------------------------------------
// Training

/// Flattened supervised samples: transformed features, planar delta
/// targets in units of v_max, per-sample loss weights.
struct TrainingSet {
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<double> weights;
    std::size_t size = 0;

    void add(const Step& s, double w, const WorkspaceBounds& b = {}) {
        const auto x = policy_input(s.features);
        inputs.insert(inputs.end(), x.begin(), x.end());
        const Vec2 d = (s.action.planar() - pusher_from_features(s.features, b)) * (1.0 / phys::kVmaxPerTick);
        targets.push_back(d.x);
        targets.push_back(d.y);
        weights.push_back(w);
        ++size;
    }

    nn::Batch batch() const { return {inputs, targets, weights, size}; }
};

inline TrainingSet make_training_set(const std::vector<Episode>& eps) {
    TrainingSet ts;
    for (const auto& e : eps)
        for (const auto& s : e.steps) ts.add(s, 1.0);
    return ts;
}

inline TrainingSet make_training_set(const MergedDataset& m) {
    TrainingSet ts;
    std::size_t i = 0;
    for (const auto& e : m.data.episodes)
        for (const auto& s : e.steps) ts.add(s, m.raw_weights[i++]);
    return ts;
}

struct TrainResult {
    Checkpoint final;
    std::vector<Checkpoint> epochs;  // after each epoch, 1-based
    std::vector<double> losses;      // losses[0] before training, then one per epoch
};

/// Minibatch training from `start`. Each epoch reshuffles with one stream
/// seeded by cfg.shuffle_seed. Sample weights scale each sample's loss.
inline TrainResult train_from(const PolicyParams& start, const TrainingSet& data, const TrainConfig& cfg,
                              const nlohmann::ordered_json& provenance, bool keep_epochs = true) {
    cfg.validate();
    if (data.size == 0) throw Error("empty_dataset", "training needs at least one sample");
    PolicyParams p = start;
    TrainResult res;
    res.losses.push_back(nn::loss(p.net, data.batch()));

    nn::Adam adam(p.weights().size(), cfg.lr);
    nn::Momentum momentum(p.weights().size(), cfg.lr);
    Rng rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(data.size);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> bx, bt, bw;
    constexpr std::size_t in = kFeatureDims, out = 2;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        for (std::size_t start_i = 0; start_i < order.size(); start_i += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start_i);
            bx.clear();
            bt.clear();
            bw.clear();
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = order[start_i + k];
                bx.insert(bx.end(), data.inputs.begin() + j * in, data.inputs.begin() + (j + 1) * in);
                bt.insert(bt.end(), data.targets.begin() + j * out, data.targets.begin() + (j + 1) * out);
                bw.push_back(data.weights[j]);
            }
            const auto lg = nn::loss_and_grad(p.net, {bx, bt, bw, n});
            if (cfg.optimizer == OptimizerKind::Adam)
                adam.step(p.weights(), lg.grad);
            else
                momentum.step(p.weights(), lg.grad);
        }
        const double l = nn::loss(p.net, data.batch());
        if (!std::isfinite(l))
            throw Error("divergence", "training loss became non-finite at epoch " + std::to_string(epoch));
        res.losses.push_back(l);
        if (keep_epochs) res.epochs.push_back({p, cfg, epoch, provenance});
    }
    res.final = {p, cfg, cfg.epochs, provenance};
    return res;
}

inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, bool keep_epochs = true) {
    nlohmann::ordered_json prov{{"dataset", ds.manifest().digest}, {"mode", "base"}};
    return train_from(PolicyParams::initialized(cfg.init_seed), make_training_set(ds.episodes), cfg, prov,
                      keep_epochs);
}

/// Fine-tunes `base` on base demos merged with corrective data; human
/// steps of the corrective part carry weight cfg.corrective_weight.
inline TrainResult post_train(const Checkpoint& base, const Dataset& base_ds, const Dataset& corrective,
                              const TrainConfig& cfg, bool keep_epochs = false) {
    const MergedDataset m = merge(base_ds, corrective, cfg.corrective_weight);
    nlohmann::ordered_json prov{{"mode", "post_train"},
                                {"base_checkpoint_provenance", base.provenance},
                                {"base_dataset", base_ds.manifest().digest},
                                {"corrective_dataset", corrective.manifest().digest}};
    return train_from(base.params, make_training_set(m), cfg, prov, keep_epochs);
}

inline std::string loss_csv(const std::vector<double>& losses) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + format_double(losses[i]) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool success = false;
    double final_overlap = 0.0;
    std::size_t ticks = 0;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_overlap = 0.0;
    std::vector<SeedOutcome> outcomes;

    std::size_t successes() const {
        std::size_t n = 0;
        for (const auto& o : outcomes) n += o.success;
        return n;
    }
};

inline EvalResult evaluate_policy(const PolicyFn& policy, const TaskSpec& task, const WmConfig& wm,
                                  const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw Error("invalid_config", "evaluation needs at least one seed");
    EvalResult r;
    for (auto seed : seeds) {
        const Episode ep = run_autonomous_rollout(policy, task, seed, wm);
        r.outcomes.push_back({seed, ep.header.success, ep.header.final_overlap, ep.steps.size()});
        r.success_rate += ep.header.success;
        r.mean_overlap += ep.header.final_overlap;
    }
    r.success_rate /= static_cast<double>(seeds.size());
    r.mean_overlap /= static_cast<double>(seeds.size());
    return r;
}

/// Expert demonstrations in GroundTruth. The expert stands in for a human
/// teleoperator, so every step is labelled Human.
inline Dataset generate_demos(const TaskSpec& task, const std::vector<std::uint64_t>& seeds,
                              const ExpertConfig& ecfg = {}) {
    Dataset ds;
    const PolicyFn expert = expert_policy(ecfg);
    for (auto seed : seeds) {
        Episode ep = run_autonomous_rollout(expert, task, seed);
        ep.header.episode_id = "demo-seed" + std::to_string(seed);
        for (auto& s : ep.steps) s.source = ControlSource::Human;
        ds.episodes.push_back(std::move(ep));
    }
    ds.provenance = {{"source", "scripted_expert"}, {"task", std::string(to_string(task.id))}, {"seeds", seeds}};
    return ds;
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t n) {
    std::vector<std::uint64_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = first + i;
    return out;
}

}  // namespace hiwm
