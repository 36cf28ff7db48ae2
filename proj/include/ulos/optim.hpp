#pragma once

// AdamW on a flat parameter vector, with a per-parameter learning-rate scale
// (the SDF network runs at a reduced rate) and warmup + cosine annealing.

#include "ulos/common.hpp"

namespace ulos {

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;

    Eigen::VectorXd m, v;
    std::int64_t t = 0;

    void reset(Eigen::Index n) {
        m = Eigen::VectorXd::Zero(n);
        v = Eigen::VectorXd::Zero(n);
        t = 0;
    }

    // lr_scale: per-parameter multiplier applied to lr (empty = all ones).
    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr,
              const Eigen::VectorXd& lr_scale) {
        if (m.size() != params.size()) reset(params.size());
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            const double scale = lr_scale.size() ? lr_scale[i] : 1.0;
            params[i] -= lr * scale * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
        }
    }
};

// Warmup then cosine annealing to `floor_fraction` of the initial rate.
inline double lr_schedule(double lr0, std::int64_t iter, std::int64_t total, std::int64_t warmup,
                          double floor_fraction = 0.01) {
    if (warmup > 0 && iter < warmup) return lr0 * static_cast<double>(iter + 1) / static_cast<double>(warmup);
    const std::int64_t span = std::max<std::int64_t>(1, total - warmup);
    const double p = std::min(1.0, static_cast<double>(iter - warmup) / static_cast<double>(span));
    const double cosine = 0.5 * (1.0 + std::cos(kPi * p));
    return lr0 * (floor_fraction + (1.0 - floor_fraction) * cosine);
}

}  // namespace ulos
