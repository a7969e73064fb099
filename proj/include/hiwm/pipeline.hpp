#pragma once

#include <cstdint>
#include <vector>

#include "hiwm/datasets.hpp"
#include "hiwm/policy.hpp"
#include "hiwm/session.hpp"

namespace hiwm {

/// Session export as a dataset. The server's export_dataset and the
/// in-process auto-operator share this, so equal traces give equal bytes.
inline Dataset session_dataset(const SessionConfig& cfg, std::vector<Episode> episodes) {
    Dataset ds;
    ds.episodes = std::move(episodes);
    ds.provenance = {{"source", "session"},
                     {"task", std::string(to_string(cfg.task.id))},
                     {"environment", cfg.wm.label()}};
    return ds;
}

/// Corrective data from one auto-operator run.
struct HiwmCollection {
    AutoInterventionResult run;
    Dataset corrective;  // segments with their context steps
};

/// Runs the auto-operator over `seeds` until at least `budget_steps`
/// corrective steps (0 = all seeds) and cuts the segments out.
inline HiwmCollection collect_hiwm(const PolicyFn& policy, const SessionConfig& cfg,
                                   const std::vector<std::uint64_t>& seeds, std::size_t budget_steps,
                                   std::size_t context) {
    HiwmCollection out;
    const double jitter = cfg.auto_op.jitter_mm;
    out.run = auto_intervention_session(
        policy, [jitter](std::uint64_t s) { return jittered_expert(s, jitter); }, seeds, cfg, budget_steps, context);
    const auto segs = extract_corrective(out.run.episodes, context);
    out.corrective.episodes = segments_as_episodes(segs, out.run.episodes);
    return out;
}

/// WM-CL baseline: autonomous rollouts in `wm`, kept only when successful,
/// until their step count reaches `budget_steps` or the seeds run out.
inline Dataset collect_wmcl(const PolicyFn& policy, const TaskSpec& task, const WmConfig& wm,
                            const std::vector<std::uint64_t>& seeds, std::size_t budget_steps) {
    std::vector<Episode> rollouts;
    std::size_t kept_steps = 0;
    for (auto seed : seeds) {
        if (budget_steps > 0 && kept_steps >= budget_steps) break;
        rollouts.push_back(run_autonomous_rollout(policy, task, seed, wm));
        if (rollouts.back().header.success) kept_steps += rollouts.back().steps.size();
    }
    Dataset out;
    out.episodes = filter_success(rollouts);
    return out;
}

}  // namespace hiwm
