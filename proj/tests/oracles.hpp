#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "hiwm/geometry.hpp"
#include "hiwm/nn.hpp"

namespace hiwm::oracle {

/// Overlap of T(a) with T(b) estimated from `samples` points drawn uniformly
/// inside T(a) (rejection from its bounding box). Uses std::mt19937_64 so it
/// shares no code with the library RNG, and only point-in-T tests, so it
/// shares nothing with the polygon clipper. The estimate is the fraction of
/// those points that also fall in T(b); its standard error is at most
/// 0.5 / sqrt(samples).
inline double monte_carlo_overlap(const Pose2& a, const Pose2& b, std::size_t samples, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const double r = tshape::bounding_radius();
    std::uniform_real_distribution<double> ux(a.x - r, a.x + r), uy(a.y - r, a.y + r);
    std::size_t in_a = 0, in_both = 0;
    while (in_a < samples) {
        const Vec2 p{ux(gen), uy(gen)};
        if (!tshape::contains(a, p)) continue;
        ++in_a;
        in_both += tshape::contains(b, p);
    }
    return samples == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(samples);
}

/// Central finite difference of the batch loss along every coordinate.
inline std::vector<double> finite_difference_grad(nn::Mlp net, const nn::Batch& batch, double h) {
    std::vector<double> g(net.params().size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double keep = net.params()[i];
        net.params()[i] = keep + h;
        const double up = nn::loss(net, batch);
        net.params()[i] = keep - h;
        const double down = nn::loss(net, batch);
        net.params()[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// One random gradient-check configuration: a 10-64-64-2 net with
/// Glorot weights and non-zero biases, and a weighted batch of 8 samples.
struct GradientCase {
    nn::Mlp net{{10, 64, 64, 2}};
    std::vector<double> inputs, targets, weights;

    explicit GradientCase(std::uint64_t seed) {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(-1.0, 1.0), weight(1.0, 3.0);
        net.init_glorot(seed);
        for (double& p : net.params()) p += 0.05 * normal(gen);
        for (int i = 0; i < 8 * 10; ++i) inputs.push_back(2.0 * normal(gen));
        for (int i = 0; i < 8 * 2; ++i) targets.push_back(unit(gen));
        for (int i = 0; i < 8; ++i) weights.push_back(weight(gen));
    }

    nn::Batch batch() const { return {inputs, targets, weights, 8}; }
};

/// Worst relative error between backprop and central differences.
inline double max_gradient_error(const GradientCase& c, double h = 1e-5) {
    const auto analytic = nn::loss_and_grad(c.net, c.batch()).grad;
    const auto numeric = finite_difference_grad(c.net, c.batch(), h);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    return worst;
}

}  // namespace hiwm::oracle
