#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hiwm/common.hpp"
#include "hiwm/render.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

// ---------------------------------------------------------------------------
// Correlation

inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw Error("invalid_argument", "pearson_r needs two equal-length series of at least 2 values");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("undefined_correlation", "a series has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Image fidelity

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline void require_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw Error("shape_mismatch", "images differ in size or channel count");
}

/// Sum of squared differences over every channel sample.
inline double squared_error_sum(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        s += d * d;
    }
    return s;
}

inline double psnr_from_mse(double mse) {
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// 10 log10(255^2 / MSE) over all channels; +inf for identical images.
inline double psnr(const Image& a, const Image& b) {
    const double sse = squared_error_sum(a, b);
    return psnr_from_mse(sse / static_cast<double>(a.pixels.size()));
}

/// Rec. 601 luma as doubles (gray images pass through).
inline std::vector<double> luma(const Image& img) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
            out[i] = img.channels == 1 ? img.at(x, y, 0)
                                       : 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
        }
    return out;
}

inline constexpr int kSsimWindow = 8;
inline constexpr int kSsimStride = 4;
inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

/// SSIM of one window from its moments (population variances).
inline double ssim_window(double mu_a, double mu_b, double var_a, double var_b, double cov) {
    return ((2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2)) /
           ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
}

/// Mean SSIM over 8x8 luma windows at stride 4.
inline double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b);
    if (a.width < kSsimWindow || a.height < kSsimWindow)
        throw Error("image_too_small", "SSIM needs images of at least 8x8 pixels");
    const auto la = luma(a), lb = luma(b);
    const double n = kSsimWindow * kSsimWindow;
    double total = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + kSsimWindow <= a.height; y0 += kSsimStride) {
        for (int x0 = 0; x0 + kSsimWindow <= a.width; x0 += kSsimStride) {
            double sa = 0, sb = 0;
            for (int y = y0; y < y0 + kSsimWindow; ++y)
                for (int x = x0; x < x0 + kSsimWindow; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
                    sa += la[i];
                    sb += lb[i];
                }
            const double ma = sa / n, mb = sb / n;
            double va = 0, vb = 0, cov = 0;
            for (int y = y0; y < y0 + kSsimWindow; ++y)
                for (int x = x0; x < x0 + kSsimWindow; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
                    const double da = la[i] - ma, db = lb[i] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            total += ssim_window(ma, mb, va, vb, cov);
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

// ---------------------------------------------------------------------------
// Repeated positioning

struct DeviationMap {
    std::vector<Vec2> targets;
    std::vector<Vec2> proxy_endpoints;
    std::vector<Vec2> gt_endpoints;
    std::vector<double> deviation_mm;

    double mean() const {
        double s = 0.0;
        for (double d : deviation_mm) s += d;
        return deviation_mm.empty() ? 0.0 : s / static_cast<double>(deviation_mm.size());
    }
    double max() const {
        double m = 0.0;
        for (double d : deviation_mm) m = std::max(m, d);
        return m;
    }
};

/// Evenly spaced n x n targets including the workspace corners.
inline std::vector<Vec2> workspace_grid(std::size_t n, const WorkspaceBounds& b = {}) {
    if (n < 2) throw Error("invalid_argument", "grid needs at least 2 points per side");
    std::vector<Vec2> out;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            out.push_back({b.x_min + b.width() * static_cast<double>(i) / static_cast<double>(n - 1),
                           b.y_min + b.height() * static_cast<double>(j) / static_cast<double>(n - 1)});
    return out;
}

/// For each target, a straight-line command sequence from the workspace
/// centre at v_max per tick, then held until the pusher settles. The same
/// commands run through the proxy and the ground truth; the endpoint gap is
/// the positioning deviation. Only the pusher moves, so contact plays no
/// part.
inline DeviationMap positioning_deviation(const WmConfig& proxy, const std::vector<Vec2>& grid) {
    WmConfig gt = proxy;
    gt.mode = WmMode::GroundTruth;
    const auto& b = proxy.bounds;
    DeviationMap m;
    for (Vec2 target : grid) {
        if (target.x < b.x_min || target.x > b.x_max || target.y < b.y_min || target.y > b.y_max)
            throw Error("invalid_argument", "grid target outside the workspace");
        const Vec2 start = b.center();
        const double dist = norm(target - start);
        const std::size_t legs = static_cast<std::size_t>(std::ceil(dist / phys::kVmaxPerTick));
        std::vector<ActionVector> plan;
        for (std::size_t k = 1; k <= legs; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(legs);
            plan.push_back(b.hold_action(start + t * (target - start)));
        }
        for (int hold = 0; hold < 4; ++hold) plan.push_back(b.hold_action(target));

        Vec2 p_proxy = start, p_gt = start;
        for (const auto& a : plan) {
            p_proxy = pusher_tick_end(p_proxy, a, proxy);
            p_gt = pusher_tick_end(p_gt, a, gt);
        }
        m.targets.push_back(target);
        m.proxy_endpoints.push_back(p_proxy);
        m.gt_endpoints.push_back(p_gt);
        m.deviation_mm.push_back(norm(p_proxy - p_gt));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Cost model

/// Per-scene cost parts. Real-world scenes pay setup plus hours of robot,
/// operator and site time; world-model scenes pay operator and compute time.
struct CostComponents {
    double real_setup = 60.0;
    double real_hours = 2.0;
    double robot_rate = 40.0;
    double real_operator_rate = 50.0;
    double site_rate = 30.0;
    double wm_hours = 1.0;
    double wm_operator_rate = 50.0;
    double compute_rate = 10.0;

    double m_real() const { return real_setup + real_hours * (robot_rate + real_operator_rate + site_rate); }
    double m_wm() const { return wm_hours * (wm_operator_rate + compute_rate); }
};

/// Illustrative constants only; every field is a config input.
struct CostModel {
    double f_real = 0.0;
    double f_wm = 8000.0;
    double m_real = 300.0;
    double m_wm = 60.0;

    static CostModel from_components(double f_real, double f_wm, const CostComponents& c) {
        return {f_real, f_wm, c.m_real(), c.m_wm()};
    }

    void validate() const {
        if (!(f_real >= 0 && f_wm >= 0 && m_real >= 0 && m_wm >= 0))
            throw Error("invalid_config", "cost model entries must be >= 0");
    }

    nlohmann::ordered_json to_json() const {
        return {{"f_real", f_real}, {"f_wm", f_wm}, {"m_real", m_real}, {"m_wm", m_wm}};
    }

    static CostModel from_json(const nlohmann::json& j) {
        CostModel c;
        for (const auto& [k, v] : j.items()) {
            if (k == "f_real") c.f_real = v.get<double>();
            else if (k == "f_wm") c.f_wm = v.get<double>();
            else if (k == "m_real") c.m_real = v.get<double>();
            else if (k == "m_wm") c.m_wm = v.get<double>();
            else throw Error("invalid_config", "unknown cost model key '" + k + "'");
        }
        c.validate();
        return c;
    }
};

/// (F_real + N m_real) - (F_wm + N m_wm), in USD.
inline double cost_saved(const CostModel& m, double n_scenes) {
    if (!(n_scenes >= 0.0)) throw Error("invalid_argument", "scene count must be >= 0");
    return (m.f_real + n_scenes * m.m_real) - (m.f_wm + n_scenes * m.m_wm);
}

/// Smallest integer scene count with nonnegative savings, or -1 if the
/// curve never gets there.
inline long long break_even_scenes(const CostModel& m) {
    const double slope = m.m_real - m.m_wm;
    const double at0 = cost_saved(m, 0.0);
    if (at0 >= 0.0) return 0;
    if (slope <= 0.0) return -1;
    long long n = static_cast<long long>(std::ceil(-at0 / slope));
    while (cost_saved(m, static_cast<double>(n)) < 0.0) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Fidelity sweep

inline std::string format_psnr(double v) { return std::isinf(v) ? "inf" : format_double(v); }

struct FidelityRow {
    double coverage = 0.0;
    double psnr = 0.0;  // from MSE pooled over every rendered tick
    double ssim = 0.0;  // mean over ticks
    double mean_deviation_mm = 0.0;
};

/// Replays one open-loop action script in Proxy(coverage) and GroundTruth
/// from the start state of every seed, renders both after every tick and
/// compares the frames.
inline std::vector<FidelityRow> fidelity_sweep(const std::vector<double>& coverages,
                                               const std::vector<ActionVector>& script, const TaskSpec& task,
                                               const std::vector<std::uint64_t>& seeds, std::uint64_t perturb_seed,
                                               const std::vector<Vec2>& grid, const RenderConfig& rcfg = {}) {
    for (std::size_t i = 1; i < coverages.size(); ++i)
        if (coverages[i] < coverages[i - 1]) throw Error("invalid_argument", "coverages must be sorted");
    if (script.empty()) throw Error("invalid_argument", "fidelity sweep needs a non-empty action script");
    if (seeds.empty()) throw Error("invalid_argument", "fidelity sweep needs at least one seed");

    const WmConfig gt;
    std::vector<SceneState> starts;
    std::vector<std::vector<Image>> gt_frames;
    for (auto seed : seeds) {
        starts.push_back(init_from_start(task, seed, gt.bounds));
        SceneState s = starts.back();
        auto& frames = gt_frames.emplace_back();
        for (const auto& a : script) {
            if (is_terminal(s, gt.bounds)) break;
            s = step(s, a, gt).state;
            frames.push_back(render_scene(s, gt.bounds, rcfg));
        }
    }

    std::vector<FidelityRow> rows;
    for (double c : coverages) {
        const WmConfig proxy = WmConfig::proxy(c, perturb_seed);
        double sse = 0.0, ssim_sum = 0.0, samples = 0.0;
        std::size_t frames = 0;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            SceneState s = starts[k];
            for (std::size_t t = 0; t < gt_frames[k].size(); ++t) {
                if (!is_terminal(s, proxy.bounds)) s = step(s, script[t], proxy).state;
                const Image img = render_scene(s, proxy.bounds, rcfg);
                sse += squared_error_sum(img, gt_frames[k][t]);
                samples += static_cast<double>(img.pixels.size());
                ssim_sum += ssim(img, gt_frames[k][t]);
                ++frames;
            }
        }
        if (frames == 0) throw Error("invalid_argument", "no ticks rendered; every start state is terminal");
        FidelityRow row;
        row.coverage = c;
        row.psnr = psnr_from_mse(sse / samples);
        row.ssim = ssim_sum / static_cast<double>(frames);
        row.mean_deviation_mm = positioning_deviation(proxy, grid).mean();
        rows.push_back(row);
    }
    return rows;
}

inline std::string fidelity_csv(const std::vector<FidelityRow>& rows) {
    std::string out = "coverage,psnr_db,ssim,mean_deviation_mm\n";
    for (const auto& r : rows)
        out += format_double(r.coverage) + "," + format_psnr(r.psnr) + "," + format_double(r.ssim) + "," +
               format_double(r.mean_deviation_mm) + "\n";
    return out;
}

inline std::string deviation_csv(const DeviationMap& m) {
    std::string out = "target_x,target_y,proxy_x,proxy_y,gt_x,gt_y,deviation_mm\n";
    for (std::size_t i = 0; i < m.targets.size(); ++i)
        out += format_double(m.targets[i].x) + "," + format_double(m.targets[i].y) + "," +
               format_double(m.proxy_endpoints[i].x) + "," + format_double(m.proxy_endpoints[i].y) + "," +
               format_double(m.gt_endpoints[i].x) + "," + format_double(m.gt_endpoints[i].y) + "," +
               format_double(m.deviation_mm[i]) + "\n";
    return out;
}

inline std::string cost_curve_csv(const CostModel& m, const std::vector<long long>& ns) {
    std::string out = "scenes,cost_real,cost_wm,cost_saved\n";
    for (auto n : ns) {
        const double d = static_cast<double>(n);
        out += std::to_string(n) + "," + format_double(m.f_real + d * m.m_real) + "," +
               format_double(m.f_wm + d * m.m_wm) + "," + format_double(cost_saved(m, d)) + "\n";
    }
    return out;
}

}  // namespace hiwm
