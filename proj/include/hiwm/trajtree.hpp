#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hiwm/common.hpp"
#include "hiwm/records.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

struct TrajNode {
    std::uint64_t id = 0;
    std::optional<std::uint64_t> parent;
    std::string snapshot;  // encoded SceneState
    std::optional<ActionVector> incoming_action;
    std::optional<ControlSource> source;
    Observation observation;
    bool failure_mark = false;
    std::uint64_t branch_id = 0;
    std::vector<std::uint64_t> children;
};

struct BranchInfo {
    std::uint64_t branch_id = 0;
    std::uint64_t fork_node = 0;
    std::uint64_t leaf = 0;
};

/// Tree of cached simulator states. Every node stores a full snapshot, so
/// rewinding is a lookup. Rewind moves the cursor only; abandoned
/// continuations stay in the tree and later appends start a new branch.
class TrajTree {
public:
    TrajTree(const SceneState& initial, const Observation& obs, std::uint64_t root_id = 0) {
        TrajNode root;
        root.id = root_id;
        root.snapshot = snapshot(initial);
        root.observation = obs;
        root_ = cursor_ = root_id;
        next_id_ = root_id + 1;
        nodes_.emplace(root_id, std::move(root));
        branches_.push_back({0, root_id, root_id});
    }

    std::uint64_t root() const { return root_; }
    std::uint64_t cursor() const { return cursor_; }
    std::size_t size() const { return nodes_.size(); }
    std::uint64_t next_id() const { return next_id_; }
    const std::vector<BranchInfo>& branches() const { return branches_; }
    const std::map<std::uint64_t, TrajNode>& nodes() const { return nodes_; }

    bool contains(std::uint64_t id) const { return nodes_.count(id) != 0; }

    const TrajNode& node(std::uint64_t id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw Error("unknown_node", "no node with id " + std::to_string(id));
        return it->second;
    }

    SceneState state_at(std::uint64_t id) const { return restore(node(id).snapshot); }

    /// Adds a child of the cursor and advances to it. `id` overrides the
    /// tree-local counter so a session can keep ids unique across trees.
    std::uint64_t append(const ActionVector& action, ControlSource source, const SceneState& next_state,
                         const Observation& next_obs, std::optional<std::uint64_t> id = std::nullopt) {
        if (!action.finite()) throw Error("invalid_action", "edge action must be finite");
        const std::uint64_t nid = id.value_or(next_id_);
        if (contains(nid)) throw Error("duplicate_node", "node id " + std::to_string(nid) + " already used");
        TrajNode& parent = nodes_.at(cursor_);

        std::uint64_t branch = parent.branch_id;
        if (!parent.children.empty()) {
            branch = branches_.size();
            branches_.push_back({branch, cursor_, nid});
        } else {
            branches_[branch].leaf = nid;
        }
        parent.children.push_back(nid);

        TrajNode n;
        n.id = nid;
        n.parent = cursor_;
        n.snapshot = snapshot(next_state);
        n.incoming_action = action;
        n.source = source;
        n.observation = next_obs;
        n.branch_id = branch;
        nodes_.emplace(nid, std::move(n));
        cursor_ = nid;
        next_id_ = std::max(next_id_, nid + 1);
        return nid;
    }

    SceneState rewind(std::uint64_t id) {
        SceneState s = state_at(id);
        cursor_ = id;
        return s;
    }

    std::size_t branch_count_at(std::uint64_t id) const { return node(id).children.size(); }

    void mark_failure(std::uint64_t id, bool mark = true) {
        node(id);
        nodes_.at(id).failure_mark = mark;
    }

    std::vector<std::uint64_t> leaves() const {
        std::vector<std::uint64_t> out;
        for (const auto& [id, n] : nodes_)
            if (n.children.empty()) out.push_back(id);
        return out;
    }

    /// Node ids from the root to `id`, inclusive.
    std::vector<std::uint64_t> path(std::uint64_t id) const {
        std::vector<std::uint64_t> out;
        const TrajNode* n = &node(id);
        out.push_back(n->id);
        while (n->parent) {
            n = &nodes_.at(*n->parent);
            out.push_back(n->id);
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    /// Root-to-leaf steps. Step t carries the observation of the node the
    /// edge leaves from and the edge's action and source.
    Episode linearize(std::uint64_t leaf, const TaskSpec& task, const std::string& environment = "gt",
                      std::uint64_t seed = 0) const {
        const auto ids = path(leaf);
        Episode ep;
        ep.steps.reserve(ids.size() - 1);
        for (std::size_t i = 1; i < ids.size(); ++i) {
            const TrajNode& from = nodes_.at(ids[i - 1]);
            const TrajNode& to = nodes_.at(ids[i]);
            Step s;
            s.tick = i - 1;
            s.features = from.observation.features;
            s.action = *to.incoming_action;
            s.source = *to.source;
            ep.steps.push_back(s);
        }
        const auto result = evaluate_success(state_at(leaf), task);
        ep.header.episode_id = "seed" + std::to_string(seed) + "-leaf" + std::to_string(leaf);
        ep.header.task_id = std::string(to_string(task.id));
        ep.header.seed = seed;
        ep.header.environment = environment;
        ep.header.success = result.success;
        ep.header.final_overlap = result.overlap;
        ep.header.branch_id = node(leaf).branch_id;
        return ep;
    }

    /// Maximal runs of equal source along the root-to-leaf path.
    std::vector<SegmentRecord> extract_segments(std::uint64_t leaf, const TaskSpec& task) const {
        return segments_of(linearize(leaf, task));
    }

    static std::vector<SegmentRecord> segments_of(const Episode& ep) {
        std::vector<SegmentRecord> out;
        for (const auto& s : ep.steps) {
            if (out.empty() || out.back().source != s.source) {
                SegmentRecord seg;
                seg.episode_id = ep.header.episode_id;
                seg.start_tick = s.tick;
                seg.source = s.source;
                seg.success = ep.header.success;
                out.push_back(std::move(seg));
            }
            out.back().steps.push_back(s);
            out.back().end_tick = s.tick;
        }
        return out;
    }

    nlohmann::ordered_json to_json() const {
        using nlohmann::ordered_json;
        ordered_json nodes = ordered_json::array();
        for (const auto& [id, n] : nodes_) {
            const SceneState s = restore(n.snapshot);
            ordered_json j;
            j["id"] = id;
            j["parent"] = n.parent ? ordered_json(*n.parent) : ordered_json(nullptr);
            j["branch"] = n.branch_id;
            j["tick"] = s.tick;
            j["source"] = n.source ? ordered_json(to_string(*n.source)) : ordered_json(nullptr);
            if (n.incoming_action) {
                j["action"] = ordered_json::array({n.incoming_action->values[0], n.incoming_action->values[1]});
            } else {
                j["action"] = nullptr;
            }
            j["failure"] = n.failure_mark;
            j["t_pose"] = {s.t_pose.x, s.t_pose.y, s.t_pose.theta};
            j["pusher"] = {s.pusher_pos.x, s.pusher_pos.y};
            nodes.push_back(std::move(j));
        }
        ordered_json branches = ordered_json::array();
        for (const auto& b : branches_)
            branches.push_back({{"id", b.branch_id}, {"fork", b.fork_node}, {"leaf", b.leaf}});
        return {{"root", root_}, {"cursor", cursor_}, {"nodes", std::move(nodes)}, {"branches", std::move(branches)}};
    }

    /// Digest over structure, snapshots, actions, sources and marks.
    std::uint64_t digest() const {
        Fnv1a64 h;
        auto u64 = [&](std::uint64_t v) { h.update(&v, sizeof v); };
        u64(root_);
        u64(cursor_);
        for (const auto& [id, n] : nodes_) {
            u64(id);
            u64(n.parent ? *n.parent + 1 : 0);
            u64(n.branch_id);
            h.update(n.snapshot);
            if (n.incoming_action) h.update(n.incoming_action->values.data(), sizeof(double) * act::kDims);
            u64(n.source ? static_cast<std::uint64_t>(*n.source) + 1 : 0);
            u64(n.failure_mark);
        }
        return h.value();
    }

private:
    std::map<std::uint64_t, TrajNode> nodes_;
    std::vector<BranchInfo> branches_;
    std::uint64_t root_ = 0;
    std::uint64_t cursor_ = 0;
    std::uint64_t next_id_ = 1;
};

}  // namespace hiwm
