#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "hiwm/geometry.hpp"
#include "hiwm/intervene.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

struct ExpertConfig {
    double success_threshold = 0.9;
    double rotation_scale_mm = 60.0;  // converts heading error into mm of cost
    double approach_gap_mm = 6.0;     // stand-off before a push starts
    double contact_tolerance_mm = 5.0;
    double travel_penalty = 0.0015;   // score lost per mm of repositioning
    double push_gain = 0.5;           // push depth per mm of remaining error
    double min_push_mm = 1.5;
    double sample_spacing_mm = 5.0;
    bool orbit_one_way = true;  // orbit counter-clockwise only
    WorkspaceBounds bounds;
};

/// Greedy pusher controller. Each tick it scores candidate contact points
/// on the T outline by how much a push there reduces the pose error, goes
/// around the block to the best one, then pushes through it.
class ScriptedExpert {
public:
    explicit ScriptedExpert(ExpertConfig cfg = {}) : cfg_(cfg), mapper_(MapperConfig::planar(cfg.bounds)) {
        build_candidates();
    }

    const ExpertConfig& config() const { return cfg_; }

    ActionVector act(const Observation& obs) const {
        const auto& f = obs.features;
        const auto& b = cfg_.bounds;
        const Pose2 block{b.x_min + f[0] * b.width(), b.y_min + f[1] * b.height(), std::atan2(f[2], f[3])};
        const Pose2 goal{b.x_min + f[4] * b.width(), b.y_min + f[5] * b.height(), std::atan2(f[6], f[7])};
        const Vec2 pusher = pusher_from_features(f, b);
        return clamp_and_limit(b.hold_action(plan(block, goal, pusher)), obs.ee_poses, mapper_);
    }

    /// Planar pusher target for one tick.
    Vec2 plan(const Pose2& block, const Pose2& goal, Vec2 pusher) const {
        if (tshape::overlap(block, goal) >= cfg_.success_threshold) return pusher;

        const Vec2 err = goal.position() - block.position();
        const double dtheta = wrap_angle(goal.theta - block.theta);
        const double rho = cfg_.rotation_scale_mm;
        const double cost = std::sqrt(dot(err, err) + rho * rho * dtheta * dtheta);
        const double r = phys::kPusherRadius;
        const double inv_inertia = 1.0 / tshape::kInertiaPerMass;
        const auto& b = cfg_.bounds;

        const Candidate* best = nullptr;
        double best_score = -std::numeric_limits<double>::infinity();
        Vec2 best_contact{}, best_normal{};
        for (const auto& c : candidates_) {
            const Vec2 n = rotate(c.normal, block.theta);
            const Vec2 contact = block.to_world(c.point) + r * n;  // pusher centre touching
            const Vec2 approach = contact + cfg_.approach_gap_mm * n;
            if (approach.x < b.x_min || approach.x > b.x_max || approach.y < b.y_min ||
                approach.y > b.y_max)
                continue;
            const Vec2 u = -1.0 * n;
            const Vec2 lever = rotate(c.point, block.theta);
            const double rn = cross(lever, u);
            const double lambda = 1.0 / (1.0 + rn * rn * inv_inertia);
            const double gain = (dot(err, lambda * u) + rho * rho * dtheta * lambda * rn * inv_inertia) / cost;
            const double travel = norm(approach - pusher);
            const double score = gain - cfg_.travel_penalty * travel;
            if (score > best_score) {
                best_score = score;
                best = &c;
                best_contact = contact;
                best_normal = n;
            }
        }
        if (best == nullptr) return pusher;

        // In contact position: push through.
        const Vec2 offset = pusher - best_contact;
        const double along = dot(offset, best_normal);
        const double lateral = norm(offset - along * best_normal);
        const auto touch = tshape::closest_on_outline_local(block.to_local(pusher));
        const bool same_face = dot(rotate(touch.outward_normal, block.theta), best_normal) > 0.99 &&
                               touch.distance < r + cfg_.approach_gap_mm + 1.0;
        if (same_face || (lateral < cfg_.contact_tolerance_mm && along > -r && along < cfg_.approach_gap_mm + 1.0)) {
            const double depth = std::clamp(cfg_.push_gain * cost, cfg_.min_push_mm, phys::kVmaxPerTick);
            return best_contact - depth * best_normal;
        }

        const Vec2 approach = best_contact + cfg_.approach_gap_mm * best_normal;
        return navigate(block, pusher, approach);
    }

private:
    struct Candidate {
        Vec2 point;   // on the outline, body frame
        Vec2 normal;  // outward, body frame
    };

    void build_candidates() {
        const auto& o = tshape::outline();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const Vec2 a = o[i], bb = o[(i + 1) % o.size()];
            const Vec2 ab = bb - a;
            const double len = norm(ab);
            const Vec2 n{ab.y / len, -ab.x / len};
            const int count = std::max(1, static_cast<int>(std::floor(len / cfg_.sample_spacing_mm)));
            for (int k = 0; k < count; ++k) {
                const double t = (k + 0.5) / count;
                const Vec2 p = a + t * ab;
                // Skip points where a disc would touch the neighbouring edge
                // of a concave corner first.
                const Vec2 probe = p + phys::kPusherRadius * n;
                if (tshape::closest_on_outline_local(probe).distance < phys::kPusherRadius - 1e-6) continue;
                candidates_.push_back({p, n});
            }
        }
    }

    /// Moves towards `approach` without sweeping through the block: straight
    /// when clear, otherwise around it on a circle about the COM.
    Vec2 navigate(const Pose2& block, Vec2 pusher, Vec2 approach) const {
        const double r = phys::kPusherRadius;
        const double clear = r + 2.0;
        if (!detail::sweep_touches(block, pusher, approach, clear)) return approach;

        const Vec2 com = block.position();
        const double safe = tshape::bounding_radius() + r + 8.0;
        const Vec2 rel = pusher - com;
        const double dist = norm(rel);
        // Too close to orbit: back straight out along the local normal first.
        if (dist < 1e-9) return pusher + Vec2{safe, 0.0};
        const double phi = std::atan2(rel.y, rel.x);
        const Vec2 arel = approach - com;
        const double phi_a = std::atan2(arel.y, arel.x);
        double dphi = wrap_angle(phi_a - phi);
        if (cfg_.orbit_one_way && dphi < 0.0) dphi += 2.0 * std::numbers::pi;
        const double radius = std::max(dist, safe);
        const double step = std::min(std::abs(dphi), phys::kVmaxPerTick / radius);
        const double next_phi = phi + (dphi >= 0.0 ? step : -step);
        const double next_r = std::min(radius, dist + phys::kVmaxPerTick);
        return com + next_r * Vec2{std::cos(next_phi), std::sin(next_phi)};
    }

    ExpertConfig cfg_;
    MapperConfig mapper_;
    std::vector<Candidate> candidates_;
};

}  // namespace hiwm
