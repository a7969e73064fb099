#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hiwm/policy.hpp"
#include "oracles.hpp"

using namespace hiwm;

namespace {

// Straight-line forward pass written against the documented layout only.
std::vector<double> reference_forward(const std::vector<double>& p, const std::array<double, 10>& x) {
    std::size_t o = 0;
    std::array<double, 64> h1{}, h2{};
    for (int j = 0; j < 64; ++j) {
        double s = 0;
        for (int i = 0; i < 10; ++i) s += p[o + j * 10 + i] * x[i];
        h1[j] = s;
    }
    o += 640;
    for (int j = 0; j < 64; ++j) h1[j] = std::tanh(h1[j] + p[o + j]);
    o += 64;
    for (int j = 0; j < 64; ++j) {
        double s = 0;
        for (int i = 0; i < 64; ++i) s += p[o + j * 64 + i] * h1[i];
        h2[j] = s;
    }
    o += 4096;
    for (int j = 0; j < 64; ++j) h2[j] = std::tanh(h2[j] + p[o + j]);
    o += 64;
    std::vector<double> y(2);
    for (int j = 0; j < 2; ++j) {
        double s = 0;
        for (int i = 0; i < 64; ++i) s += p[o + j * 64 + i] * h2[i];
        y[j] = s + p[o + 128 + j];
    }
    return y;
}

const Dataset& demos() {
    static const Dataset d = generate_demos({}, seed_range(1000, 50));
    return d;
}

}  // namespace

TEST(Mlp, ParamCountIs4994) {
    EXPECT_EQ(nn::Mlp::param_count(kPolicyLayers), 4994u);
    EXPECT_EQ(kPolicyParamCount, 4994u);
    EXPECT_EQ(PolicyParams::initialized(1).weights().size(), 4994u);
}

TEST(Mlp, ForwardMatchesReference) {
    const auto p = PolicyParams::initialized(3);
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        std::array<double, 10> x{};
        for (auto& v : x) v = rng.uniform(-3, 3);
        const auto a = p.net.forward(x);
        const auto b = reference_forward(p.weights(), x);
        ASSERT_NEAR(a[0], b[0], 1e-12);
        ASSERT_NEAR(a[1], b[1], 1e-12);
    }
}

TEST(Loss, PerfectFitHasZeroLossAndGradient) {
    const auto p = PolicyParams::initialized(2);
    std::vector<double> x(20), t;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i);
    for (int s = 0; s < 2; ++s) {
        const auto y = p.net.forward(std::span<const double>(x).subspan(s * 10, 10));
        t.insert(t.end(), y.begin(), y.end());
    }
    const auto lg = nn::loss_and_grad(p.net, {x, t, {}, 2});
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(lg.grad.size(), 4994u);
    for (double g : lg.grad) ASSERT_EQ(g, 0.0);
}

TEST(Loss, OneDimensionalSanity) {
    nn::Mlp net({1, 1});
    net.params() = {1.0, 0.0};  // w, b
    const std::vector<double> x{2.0}, t{0.0};
    const auto lg = nn::loss_and_grad(net, {x, t, {}, 1});
    EXPECT_DOUBLE_EQ(lg.loss, 4.0);
    EXPECT_DOUBLE_EQ(lg.grad[0], 8.0);
    EXPECT_DOUBLE_EQ(lg.grad[1], 4.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        EXPECT_LE(oracle::max_gradient_error(oracle::GradientCase(seed)), 1e-4) << "seed " << seed;
}

TEST(Loss, DoublingWeightDoublesGradient) {
    const oracle::GradientCase c(4);
    const std::vector<double> x(c.inputs.begin(), c.inputs.begin() + 10), t(c.targets.begin(), c.targets.begin() + 2);
    const std::vector<double> w1{1.0}, w2{2.0};
    const auto g1 = nn::loss_and_grad(c.net, {x, t, w1, 1}).grad;
    const auto g2 = nn::loss_and_grad(c.net, {x, t, w2, 1}).grad;
    for (std::size_t i = 0; i < g1.size(); ++i) ASSERT_EQ(g2[i], 2.0 * g1[i]);
}

TEST(Loss, EmptyBatchRejected) {
    const auto p = PolicyParams::initialized(1);
    EXPECT_THROW(nn::loss_and_grad(p.net, {{}, {}, {}, 0}), Error);
}

TEST(PolicyAct, ZeroWeightsHold) {
    PolicyParams p;
    const SceneState s = init_from_start({}, 4);
    const Observation obs = observe(s, {});
    EXPECT_EQ(policy_act(p, obs), obs.ee_poses);
}

TEST(PolicyAct, PureFunction) {
    const auto p = PolicyParams::initialized(9);
    const Observation obs = observe(init_from_start({}, 5), {});
    EXPECT_EQ(policy_act(p, obs), policy_act(p, obs));
    const auto out = policy_act(p, obs);
    EXPECT_LE(norm(out.planar() - obs.ee_poses.planar()), phys::kVmaxPerTick + 1e-9);
}

TEST(PolicyAct, NonFiniteWeightsRejected) {
    auto p = PolicyParams::initialized(9);
    p.weights()[17] = std::nan("");
    EXPECT_THROW(policy_act(p, observe(init_from_start({}, 5), {})), Error);
}

TEST(Checkpoint, RoundTrip) {
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.lr = 3e-4;
    const Checkpoint c{PolicyParams::initialized(42), cfg, 7, {{"dataset", "abc"}}};
    const auto bytes = encode_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 4), "HIWP");
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.params, c.params);
    EXPECT_EQ(back.epoch, 7u);
    EXPECT_EQ(back.config.lr, 3e-4);
    EXPECT_EQ(back.provenance, c.provenance);

    const auto path = std::filesystem::temp_directory_path() / "hiwm_ckpt_test.hiwp";
    save_checkpoint(path, c);
    EXPECT_EQ(load_checkpoint(path).params, c.params);
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptBytesRejected) {
    const auto bytes = encode_checkpoint({PolicyParams::initialized(1), {}, 0, {}});
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), Error);
    EXPECT_THROW(decode_checkpoint(bytes + "x"), Error);
    std::string bad = bytes;
    bad[0] = 'Z';
    EXPECT_THROW(decode_checkpoint(bad), Error);
    bad = bytes;
    bad[8] ^= 1;  // config digest
    EXPECT_THROW(decode_checkpoint(bad), Error);
    EXPECT_THROW(load_checkpoint("/nonexistent/x.hiwp"), Error);
}

TEST(TrainConfigJson, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(TrainConfig::from_json({{"epoch", 3}}), Error);
    EXPECT_THROW(TrainConfig::from_json({{"lr", -1.0}}), Error);
    EXPECT_THROW(TrainConfig::from_json({{"optimizer", "sgd"}}), Error);
    const auto c = TrainConfig::from_json({{"optimizer", "momentum"}, {"epochs", 3}});
    EXPECT_EQ(c.optimizer, OptimizerKind::Momentum);
    EXPECT_EQ(TrainConfig::from_json(c.to_json()).digest(), c.digest());
}

TEST(Expert, SucceedsOnAtLeast90Percent) {
    EXPECT_GE(evaluate_policy(expert_policy(), {}, {}, seed_range(0, 50)).success_rate, 0.9);
}

TEST(Expert, HoldsWhenAlreadySuccessful) {
    SceneState s = init_from_start({}, 3);
    s.t_pose = s.target_pose;
    const Observation obs = observe(s, {});
    EXPECT_EQ(scripted_expert_act(obs).planar(), obs.ee_poses.planar());
}

TEST(Random, RarelySucceeds) {
    const auto r = evaluate_policy(random_policy(1), {}, {}, seed_range(0, 50));
    EXPECT_LT(r.success_rate, 0.1);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.init_seed = 8;
    const auto r = train(demos(), cfg);
    EXPECT_EQ(r.final.params, PolicyParams::initialized(8));
    EXPECT_EQ(r.losses.size(), 1u);
}

TEST(Train, Deterministic) {
    TrainConfig cfg;
    cfg.epochs = 2;
    EXPECT_EQ(train(demos(), cfg, false).final.params, train(demos(), cfg, false).final.params);
}

TEST(Train, DivergenceAborts) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.optimizer = OptimizerKind::Momentum;
    cfg.lr = 1e6;
    try {
        train(demos(), cfg, false);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "divergence");
    }
}

TEST(Train, EmptyDatasetRejected) { EXPECT_THROW(train(Dataset{}, TrainConfig{}), Error); }

// Fixed-seed gate: 20 epochs should cut the training loss tenfold.
TEST(Train, TwentyEpochsReduceLossTenfold) {
    TrainConfig cfg;
    cfg.epochs = 20;
    const auto r = train(demos(), cfg, false);
    std::printf("loss ratio after 20 epochs: %.4f\n", r.losses.back() / r.losses.front());
    EXPECT_LT(r.losses.back(), 0.1 * r.losses.front());
}

TEST(PostTrain, EmptyCorrectiveZeroEpochsKeepsBase) {
    const Checkpoint base{PolicyParams::initialized(3), {}, 0, {}};
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_EQ(post_train(base, demos(), {}, cfg).final.params, base.params);
}

TEST(PostTrain, WeightOneMatchesPlainMergeTraining) {
    const Checkpoint base{PolicyParams::initialized(3), {}, 0, {}};
    Dataset corr;
    corr.episodes = {demos().episodes[0]};
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.corrective_weight = 1.0;
    Dataset plain = demos();
    plain.episodes.push_back(corr.episodes[0]);
    const auto a = post_train(base, demos(), corr, cfg).final.params;
    const auto b = train_from(base.params, make_training_set(plain.episodes), cfg, {}, false).final.params;
    EXPECT_EQ(a, b);
}

TEST(PostTrain, ProvenanceRecordsBothDatasets) {
    const Checkpoint base{PolicyParams::initialized(3), {}, 0, {{"dataset", "base"}}};
    Dataset corr;
    corr.episodes = {demos().episodes[1]};
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto r = post_train(base, demos(), corr, cfg);
    EXPECT_EQ(r.final.provenance["base_dataset"], demos().manifest().digest);
    EXPECT_EQ(r.final.provenance["corrective_dataset"], corr.manifest().digest);
}
