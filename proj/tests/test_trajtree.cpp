#include <gtest/gtest.h>

#include "hiwm/rng.hpp"
#include "hiwm/trajtree.hpp"

using namespace hiwm;

namespace {

struct Grower {
    TaskSpec task;
    WmConfig wm;
    TrajTree tree;
    SceneState state;

    explicit Grower(std::uint64_t seed)
        : tree(init_from_start(task, seed), observe(init_from_start(task, seed), wm.bounds)),
          state(init_from_start(task, seed)) {}

    std::uint64_t push(Vec2 target, ControlSource src = ControlSource::Policy) {
        const ActionVector a = wm.bounds.hold_action(target);
        state = step(state, a, wm).state;
        return tree.append(a, src, state, observe(state, wm.bounds));
    }
};

}  // namespace

TEST(TrajTree, RootOnly) {
    Grower g(1);
    EXPECT_EQ(g.tree.size(), 1u);
    EXPECT_EQ(g.tree.cursor(), g.tree.root());
    EXPECT_EQ(g.tree.leaves(), std::vector<std::uint64_t>{0});
    EXPECT_EQ(g.tree.branches().size(), 1u);
}

TEST(TrajTree, LinearGrowthKeepsOneBranch) {
    Grower g(2);
    for (int i = 0; i < 10; ++i) g.push({100.0 + i, 100.0});
    EXPECT_EQ(g.tree.size(), 11u);
    EXPECT_EQ(g.tree.branches().size(), 1u);
    EXPECT_EQ(g.tree.branches()[0].leaf, 10u);
    EXPECT_EQ(g.tree.path(10).size(), 11u);
}

TEST(TrajTree, RewindRestoresExactState) {
    Grower g(3);
    std::vector<SceneState> states{g.state};
    const Vec2 block = g.state.t_pose.position();
    for (int i = 0; i < 30; ++i) {
        g.push(block);
        states.push_back(g.state);
    }
    for (std::uint64_t id : {0u, 7u, 19u, 30u}) EXPECT_EQ(g.tree.rewind(id), states[id]);
    EXPECT_EQ(g.tree.cursor(), 30u);
}

TEST(TrajTree, AppendAfterRewindForks) {
    Grower g(4);
    for (int i = 0; i < 5; ++i) g.push({50, 50});
    g.state = g.tree.rewind(2);
    const auto id = g.push({400, 400}, ControlSource::Human);
    EXPECT_EQ(id, 6u);
    EXPECT_EQ(g.tree.branches().size(), 2u);
    EXPECT_EQ(g.tree.branches()[1].fork_node, 2u);
    EXPECT_EQ(g.tree.branch_count_at(2), 2u);
    EXPECT_EQ(g.tree.node(6).branch_id, 1u);
    // The abandoned continuation is preserved.
    EXPECT_TRUE(g.tree.contains(5));
    const auto leaves = g.tree.leaves();
    EXPECT_EQ(leaves, (std::vector<std::uint64_t>{5, 6}));
    EXPECT_EQ(g.tree.path(6), (std::vector<std::uint64_t>{0, 1, 2, 6}));
}

TEST(TrajTree, LinearizeFollowsPath) {
    Grower g(5);
    g.push({10, 10});
    g.push({20, 20}, ControlSource::Human);
    g.push({30, 30}, ControlSource::Human);
    const Episode ep = g.tree.linearize(3, g.task, "proxy:0.8", 5);
    ASSERT_EQ(ep.steps.size(), 3u);
    EXPECT_EQ(ep.header.episode_id, "seed5-leaf3");
    EXPECT_EQ(ep.header.environment, "proxy:0.8");
    EXPECT_EQ(ep.steps[0].source, ControlSource::Policy);
    EXPECT_EQ(ep.steps[2].source, ControlSource::Human);
    EXPECT_EQ(ep.steps[0].features, g.tree.node(0).observation.features);
    EXPECT_EQ(ep.steps[1].action, *g.tree.node(2).incoming_action);
    EXPECT_EQ(ep.count(ControlSource::Human), 2u);
}

TEST(TrajTree, SegmentsSplitOnSourceChange) {
    Grower g(6);
    g.push({10, 10});
    g.push({10, 20});
    g.push({10, 30}, ControlSource::Human);
    g.push({10, 40});
    const auto segs = g.tree.extract_segments(4, g.task);
    ASSERT_EQ(segs.size(), 3u);
    EXPECT_EQ(segs[0].length(), 2u);
    EXPECT_EQ(segs[1].source, ControlSource::Human);
    EXPECT_EQ(segs[1].start_tick, 2u);
    EXPECT_EQ(segs[1].end_tick, 2u);
    EXPECT_EQ(segs[2].start_tick, 3u);
}

TEST(TrajTree, ErrorsOnBadInput) {
    Grower g(7);
    EXPECT_THROW(g.tree.node(99), Error);
    EXPECT_THROW(g.tree.rewind(99), Error);
    EXPECT_THROW(g.tree.mark_failure(99), Error);
    ActionVector bad = g.wm.bounds.hold_action({1, 1});
    bad[0] = INFINITY;
    EXPECT_THROW(g.tree.append(bad, ControlSource::Policy, g.state, observe(g.state, g.wm.bounds)), Error);
    g.push({1, 1});
    EXPECT_THROW(g.tree.append(g.wm.bounds.hold_action({1, 1}), ControlSource::Policy, g.state,
                               observe(g.state, g.wm.bounds), 1),
                 Error);
}

TEST(TrajTree, FailureMarkAppearsInJson) {
    Grower g(8);
    g.push({1, 1});
    g.tree.mark_failure(1);
    const auto j = g.tree.to_json();
    EXPECT_TRUE(j["nodes"][1]["failure"].get<bool>());
    EXPECT_FALSE(j["nodes"][0]["failure"].get<bool>());
}

// Random walks of appends and rewinds: every node's snapshot still equals
// a fresh replay of the actions along its root path.
TEST(TrajTree, RandomRewindsStayConsistent) {
    Grower g(9);
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        if (rng.below(5) == 0) {
            const auto ids = g.tree.nodes();
            auto it = ids.begin();
            std::advance(it, static_cast<long>(rng.below(ids.size())));
            g.state = g.tree.rewind(it->first);
        } else {
            g.push({rng.uniform(0, 512), rng.uniform(0, 512)});
        }
    }
    for (std::uint64_t leaf : g.tree.leaves()) {
        SceneState s = g.tree.state_at(g.tree.root());
        const auto path = g.tree.path(leaf);
        for (std::size_t k = 1; k < path.size(); ++k) s = step(s, *g.tree.node(path[k]).incoming_action, g.wm).state;
        ASSERT_EQ(s, g.tree.state_at(leaf));
    }
}
