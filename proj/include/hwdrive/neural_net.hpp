#pragma once

// Dense feed-forward Q network: ReLU hidden layers, linear output.
//
// The default architecture maps the 528-entry occupancy grid to 7 action
// values through hidden layers of 256 and 128 units. Everything is double
// precision.
//
// Checkpoint format (text, version 1):
//   line 1: `hwdrive-mlp 1`
//   line 2: `layers n0 n1 ... nL`
//   then for each layer l = 1..L: the n_l x n_{l-1} weight matrix in row-major
//   order followed by the n_l biases, one number per line, written with the
//   shortest representation that reads back to the same double.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace hwdrive {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline const std::vector<int> kDefaultLayerSizes = {528, 256, 128, 7};

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
};

/// Parameters (or a gradient with the same shape) of an MLP.
class MlpParams {
public:
    MlpParams() = default;

    explicit MlpParams(const std::vector<int>& sizes) : sizes_(sizes) {
        if (sizes.size() < 2) throw std::invalid_argument("an MLP needs at least input and output sizes");
        for (int n : sizes)
            if (n <= 0) throw std::invalid_argument("layer sizes must be positive");
        for (std::size_t l = 1; l < sizes.size(); ++l) {
            layers_.push_back({Matrix::Zero(sizes[l], sizes[l - 1]), Vector::Zero(sizes[l])});
        }
    }

    /// Uniform fan-in initialisation: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
    static MlpParams initialized(const std::vector<int>& sizes, std::uint64_t seed) {
        MlpParams p(sizes);
        std::mt19937_64 rng(seed);
        for (auto& layer : p.layers_) {
            const double limit = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
        }
        return p;
    }

    const std::vector<int>& sizes() const noexcept { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    const DenseLayer& layer(std::size_t l) const { return layers_.at(l); }
    DenseLayer& layer(std::size_t l) { return layers_.at(l); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    bool same_shape(const MlpParams& o) const { return sizes_ == o.sizes_; }

    bool all_finite() const {
        for (const auto& l : layers_)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    /// Visits every scalar parameter in checkpoint order.
    template <class Fn>
    void for_each(Fn&& fn) {
        for (auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) fn(l.weights(r, c));
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) fn(l.bias(r));
        }
    }
    template <class Fn>
    void for_each(Fn&& fn) const {
        const_cast<MlpParams*>(this)->for_each([&](double& v) { fn(static_cast<const double&>(v)); });
    }

    void set_zero() {
        for (auto& l : layers_) {
            l.weights.setZero();
            l.bias.setZero();
        }
    }

    bool operator==(const MlpParams& o) const {
        if (sizes_ != o.sizes_) return false;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i].weights != o.layers_[i].weights || layers_[i].bias != o.layers_[i].bias) return false;
        return true;
    }

private:
    std::vector<int> sizes_;
    std::vector<DenseLayer> layers_;
};

using MlpGradient = MlpParams;

namespace detail {

inline void check_input(const MlpParams& p, Eigen::Index rows) {
    if (p.layer_count() == 0) throw std::invalid_argument("empty network");
    if (rows != p.input_size())
        throw std::invalid_argument("input has " + std::to_string(rows) + " entries, network expects " +
                                    std::to_string(p.input_size()));
}

}  // namespace detail

/// Q-values for one input.
inline Vector forward(const MlpParams& p, const Vector& x) {
    detail::check_input(p, x.size());
    Vector h = x;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const auto& layer = p.layer(l);
        Vector z = layer.weights * h + layer.bias;
        h = (l + 1 < p.layer_count()) ? Vector(z.cwiseMax(0.0)) : z;
    }
    return h;
}

inline Vector forward(const MlpParams& p, std::span<const double> x) {
    return forward(p, Vector(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()))));
}

/// Q-values for a batch; one input per column.
inline Matrix forward_batch(const MlpParams& p, const Matrix& X) {
    detail::check_input(p, X.rows());
    Matrix h = X;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const auto& layer = p.layer(l);
        Matrix z = layer.weights * h;
        z.colwise() += layer.bias;
        h = (l + 1 < p.layer_count()) ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    return h;
}

/// Gradient of the mean over the batch of (Q(x_i)[a_i] - y_i)^2. Also returns
/// that mean loss.
inline double backward_batch(const MlpParams& p, const Matrix& X, std::span<const int> actions,
                             std::span<const double> targets, MlpGradient& grad) {
    detail::check_input(p, X.rows());
    const auto n = X.cols();
    if (static_cast<Eigen::Index>(actions.size()) != n || static_cast<Eigen::Index>(targets.size()) != n)
        throw std::invalid_argument("batch size mismatch");
    for (int a : actions)
        if (a < 0 || a >= p.output_size()) throw std::out_of_range("action index out of range");
    if (!grad.same_shape(p)) grad = MlpGradient(p.sizes());

    const std::size_t L = p.layer_count();
    std::vector<Matrix> acts;  // input of each layer
    acts.reserve(L + 1);
    acts.push_back(X);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix z = p.layer(l).weights * acts.back();
        z.colwise() += p.layer(l).bias;
        acts.push_back(l + 1 < L ? Matrix(z.cwiseMax(0.0)) : std::move(z));
    }

    Matrix delta = Matrix::Zero(p.output_size(), n);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double err = acts.back()(actions[static_cast<std::size_t>(i)], i) - targets[static_cast<std::size_t>(i)];
        loss += err * err;
        delta(actions[static_cast<std::size_t>(i)], i) = 2.0 * err / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);

    for (std::size_t l = L; l-- > 0;) {
        auto& g = grad.layer(l);
        g.weights.noalias() = delta * acts[l].transpose();
        g.bias = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = p.layer(l).weights.transpose() * delta;
        // ReLU derivative: active where the layer output is positive.
        delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
    return loss;
}

/// Gradient of (Q(x)[action] - td_target)^2 for a single sample.
inline MlpGradient backward(const MlpParams& p, const Vector& x, int action, double td_target) {
    MlpGradient g(p.sizes());
    const int a[1] = {action};
    const double y[1] = {td_target};
    Matrix X = x;
    backward_batch(p, X, a, y, g);
    return g;
}

// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t steps = 0;

    OptimizerState() = default;
    OptimizerState(const MlpParams& like, AdamConfig cfg)
        : config(cfg), first_moment(like.sizes()), second_moment(like.sizes()) {}
};

/// One Adam step in place. Throws on non-finite or mis-shaped gradients and
/// leaves params and state untouched in that case.
inline void sgd_update(MlpParams& params, const MlpGradient& grads, OptimizerState& opt) {
    if (!grads.same_shape(params) || !opt.first_moment.same_shape(params) || !opt.second_moment.same_shape(params))
        throw std::invalid_argument("gradient/optimizer shape does not match parameters");
    if (!grads.all_finite()) throw std::domain_error("non-finite gradient");

    const auto& c = opt.config;
    ++opt.steps;
    const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.steps));
    const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.steps));
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
            p.array() -= c.learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + c.epsilon);
        };
        update(params.layer(l).weights, grads.layer(l).weights, opt.first_moment.layer(l).weights,
               opt.second_moment.layer(l).weights);
        update(params.layer(l).bias, grads.layer(l).bias, opt.first_moment.layer(l).bias,
               opt.second_moment.layer(l).bias);
    }
}

// ---------------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void save_checkpoint(std::ostream& os, const MlpParams& p) {
    os << "hwdrive-mlp 1\nlayers";
    for (int n : p.sizes()) os << ' ' << n;
    os << '\n';
    char buf[64];
    p.for_each([&](double v) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
        if (ec != std::errc{}) throw CheckpointError("cannot format parameter");
        os.write(buf, end - buf);
        os.put('\n');
    });
    if (!os) throw CheckpointError("checkpoint write failed");
}

inline MlpParams load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "hwdrive-mlp 1") throw CheckpointError("not an hwdrive-mlp v1 checkpoint");
    if (!std::getline(is, line)) throw CheckpointError("missing layer header");
    std::istringstream hs(line);
    std::string tag;
    hs >> tag;
    if (tag != "layers") throw CheckpointError("missing layer header");
    std::vector<int> sizes;
    for (int n; hs >> n;) sizes.push_back(n);
    if (!hs.eof() || sizes.size() < 2) throw CheckpointError("bad layer header");
    for (int n : sizes)
        if (n <= 0 || n > (1 << 20)) throw CheckpointError("bad layer size");
    MlpParams p(sizes);
    std::size_t read = 0;
    p.for_each([&](double& v) {
        if (!std::getline(is, line)) throw CheckpointError("truncated checkpoint after " + std::to_string(read) + " values");
        auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc{} || end != line.data() + line.size() || !std::isfinite(v))
            throw CheckpointError("bad parameter value at entry " + std::to_string(read));
        ++read;
    });
    while (std::getline(is, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw CheckpointError("trailing data in checkpoint");
    return p;
}

inline void save_checkpoint(const std::string& path, const MlpParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    save_checkpoint(os, p);
}

inline MlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    return load_checkpoint(is);
}

}  // namespace hwdrive
