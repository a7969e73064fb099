#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hiwm/common.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

enum class ControlSource { Policy, Human };

inline const char* to_string(ControlSource s) { return s == ControlSource::Policy ? "policy" : "human"; }

inline ControlSource control_source_from_string(const std::string& s) {
    if (s == "policy") return ControlSource::Policy;
    if (s == "human") return ControlSource::Human;
    throw Error("parse_error", "unknown control source '" + s + "'");
}

/// One transition: the observation features before the action, the action
/// that was applied, and who issued it.
struct Step {
    std::uint64_t tick = 0;
    std::array<double, kFeatureDims> features{};
    ActionVector action;
    ControlSource source = ControlSource::Policy;

    friend bool operator==(const Step&, const Step&) = default;
};

struct EpisodeHeader {
    std::string episode_id;
    std::string task_id = "push_t";
    std::uint64_t seed = 0;
    std::string environment = "gt";  // "gt" or "proxy:<coverage>"
    bool success = false;
    double final_overlap = 0.0;
    std::uint64_t branch_id = 0;

    friend bool operator==(const EpisodeHeader&, const EpisodeHeader&) = default;
};

struct Episode {
    EpisodeHeader header;
    std::vector<Step> steps;

    std::size_t count(ControlSource s) const {
        std::size_t n = 0;
        for (const auto& st : steps) n += st.source == s;
        return n;
    }
    bool has_human() const { return count(ControlSource::Human) > 0; }

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// A contiguous slice of an episode. `source` is the label of the run the
/// segment was cut around; context steps inside `steps` keep their own
/// labels. Ticks are inclusive on both ends.
struct SegmentRecord {
    std::string episode_id;
    std::uint64_t start_tick = 0;
    std::uint64_t end_tick = 0;
    ControlSource source = ControlSource::Policy;
    std::vector<Step> steps;
    bool success = false;

    std::size_t length() const { return steps.size(); }

    friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

}  // namespace hiwm
