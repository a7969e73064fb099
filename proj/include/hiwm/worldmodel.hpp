#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "hiwm/common.hpp"
#include "hiwm/geometry.hpp"
#include "hiwm/rng.hpp"

namespace hiwm {

// ---------------------------------------------------------------------------
// Action space

/// Layout of the 14-D dual-arm action: per arm (x, y, z) mm, (roll, pitch,
/// yaw) rad, gripper opening in [0, 1].
namespace act {
inline constexpr std::size_t kDims = 14;
inline constexpr std::size_t kArmStride = 7;
inline constexpr std::size_t kX = 0, kY = 1, kZ = 2, kRoll = 3, kPitch = 4, kYaw = 5, kGripper = 6;
constexpr std::size_t index(std::size_t arm, std::size_t field) { return arm * kArmStride + field; }
}  // namespace act

struct ActionVector {
    std::array<double, act::kDims> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    Vec2 planar(std::size_t arm = 0) const {
        return {values[act::index(arm, act::kX)], values[act::index(arm, act::kY)]};
    }
    void set_planar(Vec2 p, std::size_t arm = 0) {
        values[act::index(arm, act::kX)] = p.x;
        values[act::index(arm, act::kY)] = p.y;
    }
    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
    friend bool operator==(const ActionVector&, const ActionVector&) = default;
};

struct WorkspaceBounds {
    double x_min = 0.0, x_max = 512.0;
    double y_min = 0.0, y_max = 512.0;
    double z_min = 0.0, z_max = 300.0;
    // Hold values used for the dimensions a planar task never moves.
    double hold_z = 20.0;
    double hold_roll = 0.0, hold_pitch = 0.0, hold_yaw = 0.0;
    double hold_gripper = 0.0;
    Vec2 arm1_park{0.0, 0.0};

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }

    void validate() const {
        if (!(x_min < x_max && y_min < y_max && z_min < z_max))
            throw Error("invalid_bounds", "workspace bounds need min < max on every axis");
    }

    Vec2 clamp(Vec2 p) const {
        return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max)};
    }

    /// Action with every dimension at its hold value and arm 0 at `pusher`.
    ActionVector hold_action(Vec2 pusher) const {
        ActionVector a;
        for (std::size_t arm = 0; arm < 2; ++arm) {
            a[act::index(arm, act::kZ)] = hold_z;
            a[act::index(arm, act::kRoll)] = hold_roll;
            a[act::index(arm, act::kPitch)] = hold_pitch;
            a[act::index(arm, act::kYaw)] = hold_yaw;
            a[act::index(arm, act::kGripper)] = hold_gripper;
        }
        a.set_planar(pusher, 0);
        a.set_planar(arm1_park, 1);
        return a;
    }
};

// ---------------------------------------------------------------------------
// Scene

struct Distractor {
    Vec2 center;
    double radius = 0.0;
    friend bool operator==(const Distractor&, const Distractor&) = default;
};

struct SceneState {
    Pose2 t_pose;
    Pose2 t_velocity;  // (vx, vy, omega)
    Vec2 pusher_pos;
    Pose2 target_pose;
    std::vector<Distractor> distractors;
    std::uint64_t tick = 0;
    Rng::State rng_state{};

    friend bool operator==(const SceneState&, const SceneState&) = default;
};

inline constexpr std::size_t kFeatureDims = 10;

struct Observation {
    std::array<double, kFeatureDims> features{};
    ActionVector ee_poses;  // both arms' raw poses in action layout
    std::uint64_t tick = 0;

    friend bool operator==(const Observation&, const Observation&) = default;
};

enum class WmMode { GroundTruth, Proxy };

struct WmConfig {
    WmMode mode = WmMode::GroundTruth;
    double coverage = 1.0;
    std::uint64_t perturb_seed = 0;
    double max_warp_mm = 24.0;
    double param_jitter = 0.1;
    WorkspaceBounds bounds{};

    static WmConfig ground_truth() { return {}; }
    static WmConfig proxy(double coverage, std::uint64_t seed = 0) {
        WmConfig c;
        c.mode = WmMode::Proxy;
        c.coverage = coverage;
        c.perturb_seed = seed;
        return c;
    }

    void validate() const {
        if (!(coverage >= 0.0 && coverage <= 1.0))
            throw Error("invalid_config", "coverage must lie in [0, 1]");
        if (!(max_warp_mm >= 0.0)) throw Error("invalid_config", "max_warp_mm must be >= 0");
        if (!(param_jitter >= 0.0)) throw Error("invalid_config", "param_jitter must be >= 0");
        bounds.validate();
    }

    /// "gt" or "proxy:<coverage>"; used in dataset headers.
    std::string label() const {
        if (mode == WmMode::GroundTruth) return "gt";
        return "proxy:" + format_double(coverage);
    }
};

enum class TaskId { PushT, PushTDistractor };

inline std::string_view to_string(TaskId id) {
    return id == TaskId::PushT ? "push_t" : "push_t_distractor";
}

inline TaskId task_id_from_string(std::string_view s) {
    if (s == "push_t") return TaskId::PushT;
    if (s == "push_t_distractor") return TaskId::PushTDistractor;
    throw Error("invalid_config", "unknown task id: " + std::string(s));
}

/// Start-state distribution and success rule for one task.
struct TaskSpec {
    TaskId id = TaskId::PushT;
    // Block start: COM uniform in the box, heading uniform in the range.
    double block_x_min = 112.0, block_x_max = 400.0;
    double block_y_min = 112.0, block_y_max = 400.0;
    double block_theta_min = -std::numbers::pi, block_theta_max = std::numbers::pi;
    // Target: nominal pose plus uniform jitter.
    Pose2 target{256.0, 256.0, std::numbers::pi / 4.0};
    double target_xy_jitter = 0.0;
    double target_theta_jitter = 0.0;
    // Pusher start: uniform in the box.
    double pusher_min = 32.0, pusher_max = 480.0;
    int distractor_count = 0;
    double distractor_radius_min = 12.0, distractor_radius_max = 28.0;
    double min_clearance_mm = 40.0;
    double success_threshold = 0.9;
    std::uint64_t max_ticks = 900;

    void validate() const {
        if (!(success_threshold > 0.0 && success_threshold <= 1.0))
            throw Error("invalid_config", "success threshold must lie in (0, 1]");
        if (max_ticks == 0) throw Error("invalid_config", "max_ticks must be > 0");
        if (!(block_x_min <= block_x_max && block_y_min <= block_y_max &&
              block_theta_min <= block_theta_max && pusher_min <= pusher_max))
            throw Error("invalid_config", "start distribution ranges are inverted");
        if (distractor_count < 0) throw Error("invalid_config", "distractor_count must be >= 0");
    }

    static TaskSpec push_t() { return {}; }

    /// Distractor discs plus a start distribution shifted towards the
    /// workspace edges with the block turned away from the target heading.
    static TaskSpec push_t_distractor() {
        TaskSpec t;
        t.id = TaskId::PushTDistractor;
        t.block_x_min = 80.0;
        t.block_x_max = 432.0;
        t.block_y_min = 80.0;
        t.block_y_max = 432.0;
        t.distractor_count = 3;
        return t;
    }

    static TaskSpec for_id(TaskId id) { return id == TaskId::PushT ? push_t() : push_t_distractor(); }
};

// ---------------------------------------------------------------------------
// Physics constants

namespace phys {
inline constexpr int kSubsteps = 4;
inline constexpr double kControlHz = 15.0;
inline constexpr double kSubstepDt = 1.0 / 60.0;
inline constexpr double kVmaxPerTick = 20.0;
inline constexpr double kPusherRadius = 15.0;
inline constexpr double kMarginMm = 64.0;
inline constexpr double kLinearDamping = 0.25;
inline constexpr double kAngularDamping = 0.25;
}  // namespace phys

/// Physics parameters of one simulator instance. The proxy jitters them.
struct PhysicsParams {
    double linear_damping = phys::kLinearDamping;
    double angular_damping = phys::kAngularDamping;
    double rotational_compliance = 1.0;  // scales the inverse inertia
};

inline PhysicsParams physics_params(const WmConfig& cfg) {
    PhysicsParams p;
    if (cfg.mode == WmMode::GroundTruth) return p;
    const double scale = (1.0 - cfg.coverage) * cfg.param_jitter;
    Rng rng(cfg.perturb_seed);
    p.linear_damping *= 1.0 + scale * rng.uniform(-1.0, 1.0);
    p.angular_damping *= 1.0 + scale * rng.uniform(-1.0, 1.0);
    p.rotational_compliance *= 1.0 + scale * rng.uniform(-1.0, 1.0);
    return p;
}

/// Normalised Chebyshev distance from the workspace centre, 0 at the centre
/// and 1 on the boundary.
inline double chebyshev_radius(Vec2 p, const WorkspaceBounds& b) {
    const Vec2 c = b.center();
    return std::max(std::abs(p.x - c.x) / (0.5 * b.width()), std::abs(p.y - c.y) / (0.5 * b.height()));
}

/// Boundary warp of the learned-model proxy:
/// (1 - coverage) * max_warp * d(p)^2 along the outward direction.
inline Vec2 warp_offset(Vec2 p, const WmConfig& cfg) {
    if (cfg.mode == WmMode::GroundTruth) return {0.0, 0.0};
    const Vec2 out = p - cfg.bounds.center();
    const double len = norm(out);
    if (len == 0.0) return {0.0, 0.0};
    const double d = chebyshev_radius(p, cfg.bounds);
    const double mag = (1.0 - cfg.coverage) * cfg.max_warp_mm * d * d;
    return (mag / len) * out;
}

inline Vec2 realized_target(Vec2 commanded, const WmConfig& cfg) {
    return commanded + warp_offset(commanded, cfg);
}

// ---------------------------------------------------------------------------
// Observation, success

inline Observation observe(const SceneState& s, const WorkspaceBounds& b) {
    Observation o;
    const double w = b.width(), h = b.height();
    o.features = {(s.t_pose.x - b.x_min) / w,
                  (s.t_pose.y - b.y_min) / h,
                  std::sin(s.t_pose.theta),
                  std::cos(s.t_pose.theta),
                  (s.target_pose.x - b.x_min) / w,
                  (s.target_pose.y - b.y_min) / h,
                  std::sin(s.target_pose.theta),
                  std::cos(s.target_pose.theta),
                  (s.pusher_pos.x - b.x_min) / w,
                  (s.pusher_pos.y - b.y_min) / h};
    o.ee_poses = b.hold_action(s.pusher_pos);
    o.tick = s.tick;
    return o;
}

/// Pusher position recovered from normalised features.
inline Vec2 pusher_from_features(const std::array<double, kFeatureDims>& f, const WorkspaceBounds& b) {
    return {b.x_min + f[8] * b.width(), b.y_min + f[9] * b.height()};
}

struct SuccessResult {
    bool success = false;
    double overlap = 0.0;
};

inline SuccessResult evaluate_success(const SceneState& s, const TaskSpec& task) {
    const double ov = tshape::overlap(s.t_pose, s.target_pose);
    return {ov >= task.success_threshold, ov};
}

inline bool block_in_workspace(const SceneState& s, const WorkspaceBounds& b) {
    return s.t_pose.x >= b.x_min && s.t_pose.x <= b.x_max && s.t_pose.y >= b.y_min &&
           s.t_pose.y <= b.y_max;
}

inline bool block_in_margin(const SceneState& s, const WorkspaceBounds& b) {
    const double m = phys::kMarginMm;
    return s.t_pose.x >= b.x_min - m && s.t_pose.x <= b.x_max + m && s.t_pose.y >= b.y_min - m &&
           s.t_pose.y <= b.y_max + m;
}

inline bool state_finite(const SceneState& s) {
    const double vals[] = {s.t_pose.x,      s.t_pose.y,      s.t_pose.theta,     s.t_velocity.x,
                           s.t_velocity.y,  s.t_velocity.theta, s.pusher_pos.x,  s.pusher_pos.y,
                           s.target_pose.x, s.target_pose.y, s.target_pose.theta};
    for (double v : vals)
        if (!std::isfinite(v)) return false;
    for (const auto& d : s.distractors)
        if (!std::isfinite(d.center.x) || !std::isfinite(d.center.y) || !std::isfinite(d.radius))
            return false;
    return true;
}

/// A state is terminal for the simulator when it is no longer physically
/// meaningful: non-finite, or the block has left the margin bound.
inline bool is_terminal(const SceneState& s, const WorkspaceBounds& b) {
    return !state_finite(s) || !block_in_margin(s, b);
}

// ---------------------------------------------------------------------------
// Start states

inline SceneState init_from_start(const TaskSpec& task, std::uint64_t seed,
                                  const WorkspaceBounds& bounds = {}) {
    task.validate();
    Rng rng(seed);
    const double r = phys::kPusherRadius;
    auto fully_inside = [&](const Pose2& p) {
        for (Vec2 v : tshape::outline()) {
            const Vec2 w = p.to_world(v);
            if (w.x < bounds.x_min || w.x > bounds.x_max || w.y < bounds.y_min || w.y > bounds.y_max)
                return false;
        }
        return true;
    };
    for (int draw = 0; draw < 10000; ++draw) {
        SceneState s;
        s.t_pose = {rng.uniform(task.block_x_min, task.block_x_max),
                    rng.uniform(task.block_y_min, task.block_y_max),
                    rng.uniform(task.block_theta_min, task.block_theta_max)};
        s.target_pose = {task.target.x + rng.uniform(-1.0, 1.0) * task.target_xy_jitter,
                         task.target.y + rng.uniform(-1.0, 1.0) * task.target_xy_jitter,
                         wrap_angle(task.target.theta + rng.uniform(-1.0, 1.0) * task.target_theta_jitter)};
        s.pusher_pos = {rng.uniform(task.pusher_min, task.pusher_max),
                        rng.uniform(task.pusher_min, task.pusher_max)};
        if (!fully_inside(s.t_pose) || !fully_inside(s.target_pose)) continue;
        if (norm(s.t_pose.position() - s.target_pose.position()) < task.min_clearance_mm) continue;
        if (tshape::signed_distance(s.t_pose, s.pusher_pos) - r < task.min_clearance_mm) continue;
        if (norm(s.pusher_pos - s.target_pose.position()) < task.min_clearance_mm) continue;

        bool ok = true;
        for (int i = 0; i < task.distractor_count && ok; ++i) {
            bool placed = false;
            for (int k = 0; k < 200 && !placed; ++k) {
                Distractor d;
                d.radius = rng.uniform(task.distractor_radius_min, task.distractor_radius_max);
                d.center = {rng.uniform(bounds.x_min + d.radius, bounds.x_max - d.radius),
                            rng.uniform(bounds.y_min + d.radius, bounds.y_max - d.radius)};
                const double clear = task.min_clearance_mm + d.radius;
                if (tshape::signed_distance(s.t_pose, d.center) < clear) continue;
                if (tshape::signed_distance(s.target_pose, d.center) < clear) continue;
                if (norm(d.center - s.pusher_pos) < clear + r) continue;
                s.distractors.push_back(d);
                placed = true;
            }
            ok = placed;
        }
        if (!ok) continue;
        s.tick = 0;
        s.rng_state = rng.state();
        return s;
    }
    throw Error("degenerate_task", "start-state rejection sampling failed after 10000 draws");
}

// ---------------------------------------------------------------------------
// Stepping

namespace detail {

inline double segment_distance(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    auto point_seg = [](Vec2 p, Vec2 a, Vec2 b) {
        const Vec2 ab = b - a;
        const double len2 = dot(ab, ab);
        const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
        return norm(p - (a + t * ab));
    };
    const Vec2 d1 = p1 - p0, d2 = q1 - q0;
    const double denom = cross(d1, d2);
    if (denom != 0.0) {
        const double t = cross(q0 - p0, d2) / denom;
        const double u = cross(q0 - p0, d1) / denom;
        if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
    }
    return std::min({point_seg(p0, q0, q1), point_seg(p1, q0, q1), point_seg(q0, p0, p1),
                     point_seg(q1, p0, p1)});
}

/// Whether a pusher disc swept along [a, b] comes within contact of the
/// block resting at `pose`.
inline bool sweep_touches(const Pose2& pose, Vec2 a, Vec2 b, double radius) {
    const Vec2 la = pose.to_local(a), lb = pose.to_local(b);
    if (tshape::contains_local(la) || tshape::contains_local(lb)) return true;
    const auto& o = tshape::outline();
    for (std::size_t i = 0; i < o.size(); ++i)
        if (segment_distance(la, lb, o[i], o[(i + 1) % o.size()]) < radius) return true;
    return false;
}

/// Position-level projection of the block out of the pusher disc, weighted
/// by the generalised inverse mass at the contact point.
inline void resolve_contact(Pose2& pose, Vec2 pusher, const PhysicsParams& pp) {
    const double r = phys::kPusherRadius;
    const Vec2 local = pose.to_local(pusher);
    const auto hit = tshape::closest_on_outline_local(local);
    const bool inside = tshape::contains_local(local);
    if (!inside && hit.distance >= r) return;

    Vec2 n_local;
    if (hit.distance > 0.0)
        n_local = (1.0 / hit.distance) * (inside ? local - hit.point : hit.point - local);
    else
        n_local = -1.0 * hit.outward_normal;
    const double depth = inside ? r + hit.distance : r - hit.distance;

    const Vec2 n = rotate(n_local, pose.theta);
    const Vec2 lever = rotate(hit.point, pose.theta);
    const double inv_inertia = pp.rotational_compliance / tshape::kInertiaPerMass;
    const double rn = cross(lever, n);
    const double lambda = depth / (1.0 + rn * rn * inv_inertia);
    pose.x += lambda * n.x;
    pose.y += lambda * n.y;
    pose.theta += lambda * rn * inv_inertia;
}

}  // namespace detail

struct StepResult {
    SceneState state;
    Observation obs;
};

/// Where the pusher ends one tick: the (warped) commanded target, or v_max
/// along the way to it.
inline Vec2 pusher_tick_end(Vec2 start, const ActionVector& action, const WmConfig& cfg) {
    const Vec2 target = realized_target(cfg.bounds.clamp(action.planar(0)), cfg);
    const Vec2 delta = target - start;
    const double dist = norm(delta);
    return dist <= phys::kVmaxPerTick ? target : start + (phys::kVmaxPerTick / dist) * delta;
}

/// Advances one 1/15 s control tick as four 1/60 s substeps. The action's
/// arm-0 (x, y) is the absolute pusher target; all other dimensions are
/// carried but have no effect on the planar scene.
inline StepResult step(const SceneState& state, const ActionVector& action, const WmConfig& cfg) {
    if (!action.finite()) throw Error("invalid_action", "action contains non-finite values");
    if (is_terminal(state, cfg.bounds)) throw Error("terminal_state", "cannot step a terminal state");

    const PhysicsParams pp = physics_params(cfg);
    SceneState s = state;
    const Vec2 start = s.pusher_pos;
    const Vec2 end = pusher_tick_end(start, action, cfg);

    const double substep_len = phys::kVmaxPerTick / phys::kSubsteps;
    auto advance_pusher = [&] {
        const Vec2 d = end - s.pusher_pos;
        const double len = norm(d);
        s.pusher_pos = len <= substep_len ? end : s.pusher_pos + (substep_len / len) * d;
    };

    if (!detail::sweep_touches(s.t_pose, start, end, phys::kPusherRadius)) {
        // Static friction holds a block the pusher never reaches this tick.
        for (int i = 0; i < phys::kSubsteps; ++i) advance_pusher();
        s.t_velocity = {};
    } else {
        const double dt = phys::kSubstepDt;
        const double m = phys::kMarginMm;
        const auto& b = cfg.bounds;
        for (int i = 0; i < phys::kSubsteps; ++i) {
            advance_pusher();
            const Pose2 prev = s.t_pose;
            s.t_velocity.x *= 1.0 - pp.linear_damping;
            s.t_velocity.y *= 1.0 - pp.linear_damping;
            s.t_velocity.theta *= 1.0 - pp.angular_damping;
            s.t_pose.x += s.t_velocity.x * dt;
            s.t_pose.y += s.t_velocity.y * dt;
            s.t_pose.theta += s.t_velocity.theta * dt;
            detail::resolve_contact(s.t_pose, s.pusher_pos, pp);
            // Rails at the margin bound keep the block on the table.
            s.t_pose.x = std::clamp(s.t_pose.x, b.x_min - m, b.x_max + m);
            s.t_pose.y = std::clamp(s.t_pose.y, b.y_min - m, b.y_max + m);
            s.t_pose.theta = wrap_angle(s.t_pose.theta);
            s.t_velocity = {(s.t_pose.x - prev.x) / dt, (s.t_pose.y - prev.y) / dt,
                            wrap_angle(s.t_pose.theta - prev.theta) / dt};
        }
    }
    s.tick += 1;
    return {s, observe(s, cfg.bounds)};
}

// ---------------------------------------------------------------------------
// Snapshots: "HIWM", u16 version, u16 distractor count, then fixed-order
// little-endian fields.

inline constexpr std::uint16_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotFixedBytes = 4 + 2 + 2 + 11 * 8 + 8 + 4 * 8;

namespace detail {

class ByteWriter {
public:
    void raw(std::string_view s) { out_.append(s); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw Error("decode_error", "buffer truncated");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string snapshot(const SceneState& s) {
    detail::ByteWriter w;
    w.raw("HIWM");
    w.u16(kSnapshotVersion);
    w.u16(static_cast<std::uint16_t>(s.distractors.size()));
    for (double v : {s.t_pose.x, s.t_pose.y, s.t_pose.theta, s.t_velocity.x, s.t_velocity.y,
                     s.t_velocity.theta, s.pusher_pos.x, s.pusher_pos.y, s.target_pose.x,
                     s.target_pose.y, s.target_pose.theta})
        w.f64(v);
    w.u64(s.tick);
    for (auto word : s.rng_state) w.u64(word);
    for (const auto& d : s.distractors) {
        w.f64(d.center.x);
        w.f64(d.center.y);
        w.f64(d.radius);
    }
    return w.take();
}

inline SceneState restore(std::string_view bytes) {
    detail::ByteReader r(bytes);
    if (bytes.size() < 8 || r.raw(4) != "HIWM") throw Error("decode_error", "bad snapshot magic");
    if (r.u16() != kSnapshotVersion) throw Error("decode_error", "unsupported snapshot version");
    const std::size_t n = r.u16();
    if (bytes.size() != kSnapshotFixedBytes + n * 24)
        throw Error("decode_error", "snapshot length does not match its header");
    SceneState s;
    s.t_pose = {r.f64(), r.f64(), r.f64()};
    s.t_velocity = {r.f64(), r.f64(), r.f64()};
    s.pusher_pos = {r.f64(), r.f64()};
    s.target_pose = {r.f64(), r.f64(), r.f64()};
    s.tick = r.u64();
    for (auto& word : s.rng_state) word = r.u64();
    s.distractors.resize(n);
    for (auto& d : s.distractors) d = {{r.f64(), r.f64()}, r.f64()};
    return s;
}

}  // namespace hiwm
