#pragma once

#include <array>
#include <bitset>
#include <cmath>
#include <numbers>
#include <variant>

#include "hiwm/common.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

enum class Axis { X, Y };

/// One keyboard press: move the pusher `step` mm along an axis.
struct KeyStep {
    Axis axis = Axis::X;
    int direction = 1;  // +1 or -1
    double step = 5.0;
};

/// Relative pointer drag in workspace millimetres.
struct PlanarPointer {
    double dx = 0.0;
    double dy = 0.0;
};

/// Absolute pose from a tracked device (VR controller, leader arm), already
/// calibrated into the workspace frame.
struct PoseStream {
    int arm = 0;
    std::array<double, 6> pose{};  // x, y, z, roll, pitch, yaw
    double gripper = 0.0;
};

struct DeviceInput {
    std::variant<KeyStep, PlanarPointer, PoseStream> data;
    double timestamp = 0.0;
};

struct MapperConfig {
    std::bitset<act::kDims> active;  // dims a device may drive
    ActionVector hold;               // values for every inactive dim
    double v_max = phys::kVmaxPerTick;
    WorkspaceBounds bounds;

    /// Arm-0 planar (x, y) control; everything else pinned to hold values.
    static MapperConfig planar(const WorkspaceBounds& b = {}) {
        MapperConfig c;
        c.bounds = b;
        c.active.set(act::index(0, act::kX));
        c.active.set(act::index(0, act::kY));
        c.hold = b.hold_action(b.center());
        return c;
    }

    void validate() const {
        if (active.none()) throw Error("invalid_config", "mapper mask selects no dimensions");
        if (!(v_max > 0.0)) throw Error("invalid_config", "v_max must be > 0");
        for (std::size_t i = 0; i < act::kDims; ++i)
            if (!active.test(i) && !in_bounds(i, hold[i]))
                throw Error("invalid_config", "hold value outside workspace bounds");
    }

    double lower(std::size_t i) const { return range(i)[0]; }
    double upper(std::size_t i) const { return range(i)[1]; }
    bool in_bounds(std::size_t i, double v) const { return v >= lower(i) && v <= upper(i); }

private:
    std::array<double, 2> range(std::size_t i) const {
        switch (i % act::kArmStride) {
            case act::kX: return {bounds.x_min, bounds.x_max};
            case act::kY: return {bounds.y_min, bounds.y_max};
            case act::kZ: return {bounds.z_min, bounds.z_max};
            case act::kGripper: return {0.0, 1.0};
            default: return {-std::numbers::pi, std::numbers::pi};
        }
    }
};

/// Clamps every dimension to its bound, then limits each arm's translation
/// relative to `current` to v_max. The reference point is itself clamped so
/// the limited result stays inside the box and the map is idempotent.
inline ActionVector clamp_and_limit(const ActionVector& target, const ActionVector& current,
                                    const MapperConfig& cfg) {
    ActionVector out = target;
    for (std::size_t i = 0; i < act::kDims; ++i) out[i] = std::clamp(out[i], cfg.lower(i), cfg.upper(i));

    for (std::size_t arm = 0; arm < 2; ++arm) {
        const std::size_t base = act::index(arm, 0);
        std::array<double, 3> ref{}, delta{};
        double n2 = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            ref[k] = std::clamp(current[base + k], cfg.lower(base + k), cfg.upper(base + k));
            delta[k] = out[base + k] - ref[k];
            n2 += delta[k] * delta[k];
        }
        const double n = std::sqrt(n2);
        if (n > cfg.v_max * (1.0 + 1e-12)) {
            const double s = cfg.v_max / n;
            for (std::size_t k = 0; k < 3; ++k) out[base + k] = ref[k] + delta[k] * s;
        }
    }
    return out;
}

/// Converts any device input into the shared 14-D action. Inputs that try
/// to move a masked-out dimension are rejected instead of silently dropped.
inline ActionVector map_input(const DeviceInput& input, const ActionVector& current,
                              const MapperConfig& cfg) {
    ActionVector target = current;
    auto require_active = [&](std::size_t i) {
        if (!cfg.active.test(i))
            throw Error("masked_dimension", "input drives inactive action dimension " + std::to_string(i));
    };

    if (const auto* k = std::get_if<KeyStep>(&input.data)) {
        if (!std::isfinite(k->step) || (k->direction != 1 && k->direction != -1))
            throw Error("invalid_input", "key step needs a finite step and direction +-1");
        const std::size_t i = act::index(0, k->axis == Axis::X ? act::kX : act::kY);
        require_active(i);
        target[i] = current[i] + k->direction * k->step;
    } else if (const auto* p = std::get_if<PlanarPointer>(&input.data)) {
        if (!std::isfinite(p->dx) || !std::isfinite(p->dy))
            throw Error("invalid_input", "pointer delta must be finite");
        const std::size_t ix = act::index(0, act::kX), iy = act::index(0, act::kY);
        if (p->dx != 0.0) require_active(ix);
        if (p->dy != 0.0) require_active(iy);
        target[ix] = current[ix] + p->dx;
        target[iy] = current[iy] + p->dy;
    } else {
        const auto& ps = std::get<PoseStream>(input.data);
        if (ps.arm != 0 && ps.arm != 1) throw Error("invalid_input", "arm index must be 0 or 1");
        for (std::size_t k = 0; k < 7; ++k) {
            const std::size_t i = act::index(static_cast<std::size_t>(ps.arm), k);
            const double v = k < 6 ? ps.pose[k] : ps.gripper;
            if (!std::isfinite(v)) throw Error("invalid_input", "pose stream values must be finite");
            if (!cfg.active.test(i) && v != cfg.hold[i]) require_active(i);
            target[i] = v;
        }
    }

    for (std::size_t i = 0; i < act::kDims; ++i)
        if (!cfg.active.test(i)) target[i] = cfg.hold[i];
    return clamp_and_limit(target, current, cfg);
}

/// True when `a` satisfies the action invariants under `cfg`.
inline bool action_valid(const ActionVector& a, const MapperConfig& cfg) {
    if (!a.finite()) return false;
    for (std::size_t i = 0; i < act::kDims; ++i)
        if (!cfg.in_bounds(i, a[i])) return false;
    return true;
}

}  // namespace hiwm
