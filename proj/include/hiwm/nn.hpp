#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hiwm/common.hpp"
#include "hiwm/rng.hpp"

namespace hiwm::nn {

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector. For each layer l (in order) the
/// weight matrix W_l is stored row-major as [out][in], followed by its bias
/// b_l[out]. The 10-64-64-2 policy therefore has
/// 10*64+64 + 64*64+64 + 64*2+2 = 4994 parameters.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw Error("invalid_config", "an MLP needs at least two layer sizes");
        params_.assign(param_count(sizes_), 0.0);
    }

    static std::size_t param_count(const std::vector<std::size_t>& sizes) {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l + 1] * sizes[l] + sizes[l + 1];
        return n;
    }

    /// Glorot-uniform weights, zero biases.
    void init_glorot(std::uint64_t seed) {
        Rng rng(seed);
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            for (std::size_t k = 0; k < in * out; ++k) params_[off + k] = rng.uniform(-limit, limit);
            off += in * out;
            for (std::size_t k = 0; k < out; ++k) params_[off + k] = 0.0;
            off += out;
        }
    }

    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    bool params_finite() const {
        for (double p : params_)
            if (!std::isfinite(p)) return false;
        return true;
    }

    std::vector<double> forward(std::span<const double> x) const {
        std::vector<double> a(x.begin(), x.end()), z;
        std::size_t off = 0;
        const std::size_t layers = sizes_.size() - 1;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            const double* w = params_.data() + off;
            const double* b = w + in * out;
            z.assign(out, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * a[i];
                z[o] = l + 1 < layers ? std::tanh(acc) : acc;
            }
            a.swap(z);
            off += in * out + out;
        }
        return a;
    }

private:
    std::vector<std::size_t> sizes_;
    std::vector<double> params_;
};

/// Row-major batch view: `inputs` is n x in, `targets` n x out.
struct Batch {
    std::span<const double> inputs;
    std::span<const double> targets;
    std::span<const double> weights;  // per sample; empty means all 1
    std::size_t size = 0;
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Weighted squared error L = (1/n) sum_i w_i ||f(x_i) - t_i||^2 and its
/// exact gradient by backpropagation. The loss is not normalised by the
/// weight sum, so scaling one sample's weight scales its contribution.
inline LossGrad loss_and_grad(const Mlp& net, const Batch& batch) {
    const auto& sizes = net.sizes();
    const auto& params = net.params();
    const std::size_t layers = sizes.size() - 1;
    const std::size_t in_dim = sizes.front(), out_dim = sizes.back();
    if (batch.size == 0) throw Error("empty_batch", "loss needs a non-empty batch");

    std::vector<std::size_t> offsets(layers);
    {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            offsets[l] = off;
            off += sizes[l + 1] * sizes[l] + sizes[l + 1];
        }
    }

    LossGrad out;
    out.grad.assign(params.size(), 0.0);
    std::vector<std::vector<double>> acts(layers + 1);
    std::vector<double> delta, prev_delta;
    const double inv_n = 1.0 / static_cast<double>(batch.size);

    for (std::size_t s = 0; s < batch.size; ++s) {
        acts[0].assign(batch.inputs.begin() + s * in_dim, batch.inputs.begin() + (s + 1) * in_dim);
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes[l], o_n = sizes[l + 1];
            const double* w = params.data() + offsets[l];
            const double* b = w + in * o_n;
            auto& next = acts[l + 1];
            next.assign(o_n, 0.0);
            for (std::size_t o = 0; o < o_n; ++o) {
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * acts[l][i];
                next[o] = l + 1 < layers ? std::tanh(acc) : acc;
            }
        }

        const double w_s = batch.weights.empty() ? 1.0 : batch.weights[s];
        const double* t = batch.targets.data() + s * out_dim;
        delta.assign(out_dim, 0.0);
        for (std::size_t d = 0; d < out_dim; ++d) {
            const double e = acts[layers][d] - t[d];
            out.loss += w_s * e * e * inv_n;
            delta[d] = 2.0 * w_s * e * inv_n;
        }

        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = sizes[l], o_n = sizes[l + 1];
            const double* w = params.data() + offsets[l];
            double* gw = out.grad.data() + offsets[l];
            double* gb = gw + in * o_n;
            const auto& a_in = acts[l];
            for (std::size_t o = 0; o < o_n; ++o) {
                gb[o] += delta[o];
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * a_in[i];
            }
            if (l == 0) break;
            prev_delta.assign(in, 0.0);
            for (std::size_t o = 0; o < o_n; ++o)
                for (std::size_t i = 0; i < in; ++i) prev_delta[i] += w[o * in + i] * delta[o];
            // a_in came out of a tanh layer: d tanh = 1 - a^2.
            for (std::size_t i = 0; i < in; ++i) prev_delta[i] *= 1.0 - a_in[i] * a_in[i];
            delta.swap(prev_delta);
        }
    }
    return out;
}

/// Loss only, no gradient.
inline double loss(const Mlp& net, const Batch& batch) {
    const std::size_t in_dim = net.input_dim(), out_dim = net.output_dim();
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size; ++s) {
        const auto y = net.forward(batch.inputs.subspan(s * in_dim, in_dim));
        const double w_s = batch.weights.empty() ? 1.0 : batch.weights[s];
        for (std::size_t d = 0; d < out_dim; ++d) {
            const double e = y[d] - batch.targets[s * out_dim + d];
            total += w_s * e * e;
        }
    }
    return total / static_cast<double>(batch.size);
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

/// SGD with classical momentum.
class Momentum {
public:
    Momentum(std::size_t n, double lr, double mu = 0.9) : lr_(lr), mu_(mu), vel_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            vel_[i] = mu_ * vel_[i] - lr_ * grad[i];
            params[i] += vel_[i];
        }
    }

private:
    double lr_, mu_;
    std::vector<double> vel_;
};

}  // namespace hiwm::nn
