#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hiwm/common.hpp"
#include "hiwm/records.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

// ---------------------------------------------------------------------------
// JSON-lines episode format
//
// header: {"kind":"episode","episode_id":..,"task":..,"seed":..,
//          "environment":..,"outcome":"success"|"failure",
//          "final_overlap":..,"branch_id":..,"steps":N}
// step:   {"tick":..,"features":[10],"action":[14],"source":"policy"|"human"}
//
// Doubles are printed with %.17g so reading them back is bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

template <std::size_t N>
void put_array(std::string& out, const std::array<double, N>& v) {
    out += '[';
    for (std::size_t i = 0; i < N; ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    out += ']';
}

inline std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

template <std::size_t N>
std::array<double, N> get_array(const nlohmann::json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != N)
        throw Error("parse_error", std::string("field '") + key + "' must be an array of " + std::to_string(N));
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<double>();
    return out;
}

}  // namespace detail

inline std::string encode_header(const EpisodeHeader& h, std::size_t steps) {
    std::string out = "{\"kind\":\"episode\",\"episode_id\":" + detail::quoted(h.episode_id);
    out += ",\"task\":" + detail::quoted(h.task_id);
    out += ",\"seed\":" + std::to_string(h.seed);
    out += ",\"environment\":" + detail::quoted(h.environment);
    out += std::string(",\"outcome\":\"") + (h.success ? "success" : "failure") + "\"";
    out += ",\"final_overlap\":" + format_double(h.final_overlap);
    out += ",\"branch_id\":" + std::to_string(h.branch_id);
    out += ",\"steps\":" + std::to_string(steps) + "}";
    return out;
}

inline std::string encode_step(const Step& s) {
    std::string out = "{\"tick\":" + std::to_string(s.tick) + ",\"features\":";
    detail::put_array(out, s.features);
    out += ",\"action\":";
    detail::put_array(out, s.action.values);
    out += std::string(",\"source\":\"") + to_string(s.source) + "\"}";
    return out;
}

inline void write_episode(std::ostream& os, const Episode& ep) {
    os << encode_header(ep.header, ep.steps.size()) << '\n';
    for (const auto& s : ep.steps) os << encode_step(s) << '\n';
}

inline std::string encode_episodes(const std::vector<Episode>& eps) {
    std::ostringstream os;
    for (const auto& e : eps) write_episode(os, e);
    return os.str();
}

/// Reads every episode from a JSON-lines stream. Errors name the 1-based
/// line that failed.
inline std::vector<Episode> read_episodes(std::istream& is) {
    std::vector<Episode> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t pending = 0;
    auto fail = [&](const std::string& why) -> Error {
        return Error("parse_error", "line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("malformed JSON: ") + e.what());
        }
        try {
            if (pending == 0) {
                if (!j.is_object() || j.value("kind", "") != "episode") throw fail("expected an episode header");
                Episode ep;
                ep.header.episode_id = j.at("episode_id").get<std::string>();
                ep.header.task_id = j.at("task").get<std::string>();
                ep.header.seed = j.at("seed").get<std::uint64_t>();
                ep.header.environment = j.at("environment").get<std::string>();
                const auto outcome = j.at("outcome").get<std::string>();
                if (outcome != "success" && outcome != "failure") throw fail("outcome must be success or failure");
                ep.header.success = outcome == "success";
                ep.header.final_overlap = j.at("final_overlap").get<double>();
                ep.header.branch_id = j.at("branch_id").get<std::uint64_t>();
                pending = j.at("steps").get<std::size_t>();
                out.push_back(std::move(ep));
            } else {
                Step s;
                s.tick = j.at("tick").get<std::uint64_t>();
                s.features = detail::get_array<kFeatureDims>(j, "features");
                s.action.values = detail::get_array<act::kDims>(j, "action");
                s.source = control_source_from_string(j.at("source").get<std::string>());
                auto& steps = out.back().steps;
                const std::uint64_t expect = steps.size();
                if (s.tick != expect) throw fail("tick " + std::to_string(s.tick) + " out of sequence");
                steps.push_back(s);
                --pending;
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw fail(e.what());
        }
    }
    if (pending != 0) throw Error("parse_error", "unexpected end of file: episode is missing steps");
    return out;
}

inline std::vector<Episode> decode_episodes(const std::string& text) {
    std::istringstream is(text);
    return read_episodes(is);
}

// ---------------------------------------------------------------------------
// Datasets on disk: <dir>/manifest.json + <dir>/episodes.jsonl
// ---------------------------------------------------------------------------

struct DatasetManifest {
    std::string digest;  // FNV-1a-64 of episodes.jsonl, hex
    std::size_t episodes = 0;
    std::size_t policy_steps = 0;
    std::size_t human_steps = 0;
    std::map<std::string, std::size_t> environments;  // env label -> episode count
    nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

    std::size_t steps() const { return policy_steps + human_steps; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json env = nlohmann::ordered_json::object();
        for (const auto& [k, v] : environments) env[k] = v;
        return {{"digest", digest},
                {"episodes", episodes},
                {"steps", {{"policy", policy_steps}, {"human", human_steps}}},
                {"environments", env},
                {"provenance", provenance}};
    }

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.digest = j.at("digest").get<std::string>();
        m.episodes = j.at("episodes").get<std::size_t>();
        m.policy_steps = j.at("steps").at("policy").get<std::size_t>();
        m.human_steps = j.at("steps").at("human").get<std::size_t>();
        for (const auto& [k, v] : j.at("environments").items()) m.environments[k] = v.get<std::size_t>();
        if (j.contains("provenance")) m.provenance = j.at("provenance");
        return m;
    }
};

struct Dataset {
    std::vector<Episode> episodes;
    nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

    std::size_t step_count() const {
        std::size_t n = 0;
        for (const auto& e : episodes) n += e.steps.size();
        return n;
    }

    std::string task_id() const { return episodes.empty() ? std::string() : episodes.front().header.task_id; }

    DatasetManifest manifest() const {
        DatasetManifest m;
        m.digest = hex64(fnv1a64(encode_episodes(episodes)));
        m.episodes = episodes.size();
        for (const auto& e : episodes) {
            m.policy_steps += e.count(ControlSource::Policy);
            m.human_steps += e.count(ControlSource::Human);
            ++m.environments[e.header.environment];
        }
        m.provenance = provenance;
        return m;
    }
};

inline std::string manifest_text(const DatasetManifest& m) { return m.to_json().dump(2) + "\n"; }

inline DatasetManifest write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    const std::string body = encode_episodes(ds.episodes);
    {
        std::ofstream f(dir / "episodes.jsonl", std::ios::binary);
        if (!f) throw Error("io_error", "cannot write " + (dir / "episodes.jsonl").string());
        f << body;
    }
    const DatasetManifest m = ds.manifest();
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw Error("io_error", "cannot write " + (dir / "manifest.json").string());
    f << manifest_text(m);
    return m;
}

/// Loads a dataset and checks the manifest digest against the episode file.
inline Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) throw Error("io_error", "missing " + (dir / "manifest.json").string());
    std::ifstream ef(dir / "episodes.jsonl", std::ios::binary);
    if (!ef) throw Error("io_error", "missing " + (dir / "episodes.jsonl").string());
    std::stringstream body;
    body << ef.rdbuf();
    const std::string text = body.str();

    DatasetManifest m;
    try {
        m = DatasetManifest::from_json(nlohmann::json::parse(mf));
    } catch (const nlohmann::json::exception& e) {
        throw Error("parse_error", std::string("manifest.json: ") + e.what());
    }
    if (m.digest != hex64(fnv1a64(text)))
        throw Error("digest_mismatch", "episodes.jsonl does not match the manifest digest");

    Dataset ds;
    ds.episodes = decode_episodes(text);
    ds.provenance = m.provenance;
    return ds;
}

// ---------------------------------------------------------------------------
// Selection and merging
// ---------------------------------------------------------------------------

inline std::vector<Episode> filter_success(const std::vector<Episode>& eps) {
    std::vector<Episode> out;
    std::copy_if(eps.begin(), eps.end(), std::back_inserter(out), [](const Episode& e) { return e.header.success; });
    return out;
}

/// Every maximal Human run, extended backwards by up to `context` steps of
/// Policy-sourced context. Context never reaches into an earlier Human run.
inline std::vector<SegmentRecord> extract_corrective(const std::vector<Episode>& eps, std::size_t context) {
    std::vector<SegmentRecord> out;
    for (const auto& ep : eps) {
        const auto& st = ep.steps;
        std::size_t i = 0;
        while (i < st.size()) {
            if (st[i].source != ControlSource::Human) {
                ++i;
                continue;
            }
            std::size_t end = i;
            while (end + 1 < st.size() && st[end + 1].source == ControlSource::Human) ++end;
            std::size_t begin = i;
            while (begin > 0 && i - begin < context && st[begin - 1].source == ControlSource::Policy) --begin;

            SegmentRecord seg;
            seg.episode_id = ep.header.episode_id;
            seg.start_tick = st[begin].tick;
            seg.end_tick = st[end].tick;
            seg.source = ControlSource::Human;
            seg.steps.assign(st.begin() + static_cast<std::ptrdiff_t>(begin),
                             st.begin() + static_cast<std::ptrdiff_t>(end) + 1);
            seg.success = ep.header.success;
            out.push_back(std::move(seg));
            i = end + 1;
        }
    }
    return out;
}

/// Wraps segments as stand-alone episodes so they can be stored and merged
/// with the same machinery as full episodes. Ticks are renumbered from 0.
inline std::vector<Episode> segments_as_episodes(const std::vector<SegmentRecord>& segs,
                                                 const std::vector<Episode>& parents) {
    std::map<std::string, const EpisodeHeader*> by_id;
    for (const auto& p : parents) by_id[p.header.episode_id] = &p.header;
    std::vector<Episode> out;
    for (const auto& s : segs) {
        Episode e;
        if (auto it = by_id.find(s.episode_id); it != by_id.end()) e.header = *it->second;
        e.header.episode_id = s.episode_id + "@" + std::to_string(s.start_tick) + "-" + std::to_string(s.end_tick);
        e.header.success = s.success;
        e.steps = s.steps;
        for (std::size_t t = 0; t < e.steps.size(); ++t) e.steps[t].tick = t;
        out.push_back(std::move(e));
    }
    return out;
}

/// Concatenated episodes plus per-step sampling probabilities. Human steps
/// of the corrective part get weight w, everything else weight 1; the plan
/// is normalised to sum to 1.
struct MergedDataset {
    Dataset data;
    std::vector<double> raw_weights;  // per step, in episode order
    std::vector<double> plan;         // raw_weights / sum
    std::size_t base_steps = 0;
};

inline MergedDataset merge(const Dataset& base, const Dataset& corrective, double w) {
    if (!(w >= 1.0)) throw Error("invalid_config", "corrective weight must be >= 1");
    if (!base.episodes.empty() && !corrective.episodes.empty() && base.task_id() != corrective.task_id())
        throw Error("task_mismatch", "cannot merge '" + base.task_id() + "' with '" + corrective.task_id() + "'");

    MergedDataset m;
    m.data.episodes = base.episodes;
    m.data.episodes.insert(m.data.episodes.end(), corrective.episodes.begin(), corrective.episodes.end());
    for (const auto& e : base.episodes)
        for (std::size_t i = 0; i < e.steps.size(); ++i) m.raw_weights.push_back(1.0);
    m.base_steps = m.raw_weights.size();
    for (const auto& e : corrective.episodes)
        for (const auto& s : e.steps) m.raw_weights.push_back(s.source == ControlSource::Human ? w : 1.0);
    if (m.raw_weights.empty()) throw Error("empty_dataset", "merge of two empty datasets");

    const double total = std::accumulate(m.raw_weights.begin(), m.raw_weights.end(), 0.0);
    m.plan.reserve(m.raw_weights.size());
    for (double x : m.raw_weights) m.plan.push_back(x / total);

    m.data.provenance = {{"merge", {{"base", base.manifest().digest},
                                    {"corrective", corrective.manifest().digest},
                                    {"weight", w}}}};
    return m;
}

}  // namespace hiwm
