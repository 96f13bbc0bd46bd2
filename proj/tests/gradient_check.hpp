#pragma once

// Central finite-difference check of backward() on sampled parameters.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hwdrive/neural_net.hpp"

namespace hwdrive::gradcheck {

inline double squared_td_loss(const MlpParams& p, const Vector& x, int a, double y) {
    const double e = forward(p, x)(a) - y;
    return e * e;
}

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// entries whose true derivative is ~0 from turning rounding noise into a
/// large ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    int coordinates = 0;
    int shrunk = 0;   // coordinates that needed a smaller step to stay off a kink
    int skipped = 0;  // coordinates sitting on a kink at every step tried
};

/// Which hidden units are active, computed independently of forward().
inline std::vector<bool> relu_pattern(const MlpParams& p, const Vector& x) {
    std::vector<bool> on;
    Vector h = x;
    for (std::size_t l = 0; l + 1 < p.layer_count(); ++l) {
        const Vector z = p.layer(l).weights * h + p.layer(l).bias;
        for (Eigen::Index i = 0; i < z.size(); ++i) on.push_back(z(i) > 0.0);
        h = z.cwiseMax(0.0);
    }
    return on;
}

/// Compares backward() with central differences at `per_tensor` random
/// coordinates of every weight matrix and bias vector (all of them when the
/// tensor is smaller).
///
/// With ReLU the loss is exactly quadratic in any single parameter between
/// activation kinks, so the central difference has no truncation error and
/// a larger step only cuts the cancellation error of (up - down). A step
/// that flips any unit is not measuring the derivative; it is shrunk tenfold
/// until the activation pattern holds on both sides.
inline GradCheckResult gradient_check(MlpParams p, const Vector& x, int a, double y, std::mt19937_64& rng,
                                      int per_tensor, double h = 1e-4) {
    const MlpGradient g = backward(p, x, a, y);
    const auto base = relu_pattern(p, x);
    GradCheckResult out;
    auto probe = [&](double& param, double analytic) {
        const double keep = param;
        for (double step = h; step >= h * 1e-4; step /= 10.0) {
            param = keep + step;
            const double up = squared_td_loss(p, x, a, y);
            const bool up_ok = relu_pattern(p, x) == base;
            param = keep - step;
            const double down = squared_td_loss(p, x, a, y);
            const bool down_ok = relu_pattern(p, x) == base;
            param = keep;
            if (!(up_ok && down_ok)) {
                if (step == h) ++out.shrunk;
                continue;
            }
            const double numeric = (up - down) / (2.0 * step);
            out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic, numeric));
            ++out.coordinates;
            return;
        }
        ++out.skipped;
    };
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        auto& W = p.layer(l).weights;
        auto& b = p.layer(l).bias;
        const auto& gW = g.layer(l).weights;
        const auto& gb = g.layer(l).bias;
        if (W.size() <= per_tensor) {
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) probe(W(r, c), gW(r, c));
        } else {
            std::uniform_int_distribution<Eigen::Index> rr(0, W.rows() - 1), cc(0, W.cols() - 1);
            for (int i = 0; i < per_tensor; ++i) {
                const auto r = rr(rng), c = cc(rng);
                probe(W(r, c), gW(r, c));
            }
        }
        if (b.size() <= per_tensor) {
            for (Eigen::Index r = 0; r < b.size(); ++r) probe(b(r), gb(r));
        } else {
            std::uniform_int_distribution<Eigen::Index> rr(0, b.size() - 1);
            for (int i = 0; i < per_tensor; ++i) {
                const auto r = rr(rng);
                probe(b(r), gb(r));
            }
        }
    }
    return out;
}

/// Random grid-like input: speeds, free road and off-road markers.
inline Vector random_grid_input(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(n);
    for (int i = 0; i < n; ++i) {
        const double r = u(rng);
        x(i) = r < 0.15 ? -1.0 : (r < 0.6 ? 0.0 : u(rng));
    }
    return x;
}

}  // namespace hwdrive::gradcheck
