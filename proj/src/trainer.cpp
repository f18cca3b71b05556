#include "svnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace svnet {

void MlpShape::validate() const {
    if (in_dim < 1) throw std::invalid_argument("mlp shape: input dimension must be positive");
    if (out_dim < 1) throw std::invalid_argument("mlp shape: output dimension must be positive");
    for (int w : hidden)
        if (w < 1) throw std::invalid_argument("mlp shape: hidden widths must be positive");
}

std::size_t MlpShape::parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layer_count(); ++l)
        n += static_cast<std::size_t>(fan_out(l)) * static_cast<std::size_t>(fan_in(l)) +
             static_cast<std::size_t>(fan_out(l));
    return n;
}

int MlpShape::fan_in(int layer) const {
    return layer == 0 ? in_dim : hidden[static_cast<std::size_t>(layer - 1)];
}

int MlpShape::fan_out(int layer) const {
    return layer == layer_count() - 1 ? out_dim : hidden[static_cast<std::size_t>(layer)];
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    const int nl = shape.layer_count();
    for (int l = 0; l < nl; ++l) {
        const int out = shape.fan_out(l);
        const int in = shape.fan_in(l);
        next.assign(static_cast<std::size_t>(out), 0.0);
        const double* w = weights[static_cast<std::size_t>(l)].data();
        for (int r = 0; r < out; ++r) {
            double acc = biases[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)];
            for (int c = 0; c < in; ++c) acc += w[r * in + c] * cur[static_cast<std::size_t>(c)];
            next[static_cast<std::size_t>(r)] = (l + 1 < nl) ? std::max(acc, 0.0) : acc;
        }
        cur.swap(next);
    }
    return cur;
}

std::vector<std::vector<double>> Mlp::preactivations(std::span<const double> x) const {
    std::vector<std::vector<double>> pre;
    std::vector<double> cur(x.begin(), x.end());
    const int nl = shape.layer_count();
    for (int l = 0; l < nl; ++l) {
        const int out = shape.fan_out(l);
        const int in = shape.fan_in(l);
        std::vector<double> z(static_cast<std::size_t>(out));
        const double* w = weights[static_cast<std::size_t>(l)].data();
        for (int r = 0; r < out; ++r) {
            double acc = biases[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)];
            for (int c = 0; c < in; ++c) acc += w[r * in + c] * cur[static_cast<std::size_t>(c)];
            z[static_cast<std::size_t>(r)] = acc;
        }
        pre.push_back(z);
        if (l + 1 < nl)
            for (double& v : z) v = std::max(v, 0.0);
        cur.swap(z);
    }
    return pre;
}

Mlp mlp_init(const MlpShape& shape, RngStream& stream) {
    shape.validate();
    Mlp mlp;
    mlp.shape = shape;
    const int nl = shape.layer_count();
    mlp.weights.resize(static_cast<std::size_t>(nl));
    mlp.biases.resize(static_cast<std::size_t>(nl));
    for (int l = 0; l < nl; ++l) {
        const int out = shape.fan_out(l);
        const int in = shape.fan_in(l);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        auto& w = mlp.weights[static_cast<std::size_t>(l)];
        w.resize(static_cast<std::size_t>(out) * static_cast<std::size_t>(in));
        for (double& v : w) v = sd * stream.normal();
        mlp.biases[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(out), 0.0);
    }
    return mlp;
}

MlpGradient MlpGradient::zeros_like(const Mlp& mlp) {
    MlpGradient g;
    g.weights.resize(mlp.weights.size());
    g.biases.resize(mlp.biases.size());
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        g.weights[l].assign(mlp.weights[l].size(), 0.0);
        g.biases[l].assign(mlp.biases[l].size(), 0.0);
    }
    return g;
}

void MlpGradient::scale(double s) {
    for (auto& w : weights)
        for (double& v : w) v *= s;
    for (auto& b : biases)
        for (double& v : b) v *= s;
}

double mlp_loss_grad(const Mlp& mlp, std::span<const double> x, std::span<const double> y,
                     MlpGradient& grad) {
    const int nl = mlp.shape.layer_count();

    // forward pass keeping activations (post-ReLU) per layer input
    std::vector<std::vector<double>> act(static_cast<std::size_t>(nl) + 1);
    act[0].assign(x.begin(), x.end());
    std::vector<std::vector<double>> pre(static_cast<std::size_t>(nl));
    for (int l = 0; l < nl; ++l) {
        const int out = mlp.shape.fan_out(l);
        const int in = mlp.shape.fan_in(l);
        const double* w = mlp.weights[static_cast<std::size_t>(l)].data();
        auto& z = pre[static_cast<std::size_t>(l)];
        z.assign(static_cast<std::size_t>(out), 0.0);
        for (int r = 0; r < out; ++r) {
            double acc = mlp.biases[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)];
            for (int c = 0; c < in; ++c)
                acc += w[r * in + c] * act[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)];
            z[static_cast<std::size_t>(r)] = acc;
        }
        auto& a = act[static_cast<std::size_t>(l) + 1];
        a = z;
        if (l + 1 < nl)
            for (double& v : a) v = std::max(v, 0.0);
    }

    const auto& out_act = act[static_cast<std::size_t>(nl)];
    double loss = 0.0;
    std::vector<double> delta(out_act.size());
    for (std::size_t r = 0; r < out_act.size(); ++r) {
        const double diff = out_act[r] - y[r];
        loss += 0.5 * diff * diff;
        delta[r] = diff;
    }

    // backward pass: delta holds dLoss/dz for the current layer
    for (int l = nl - 1; l >= 0; --l) {
        const int out = mlp.shape.fan_out(l);
        const int in = mlp.shape.fan_in(l);
        const double* w = mlp.weights[static_cast<std::size_t>(l)].data();
        auto& gw = grad.weights[static_cast<std::size_t>(l)];
        auto& gb = grad.biases[static_cast<std::size_t>(l)];
        const auto& a_in = act[static_cast<std::size_t>(l)];
        for (int r = 0; r < out; ++r) {
            const double d = delta[static_cast<std::size_t>(r)];
            gb[static_cast<std::size_t>(r)] += d;
            for (int c = 0; c < in; ++c)
                gw[static_cast<std::size_t>(r * in + c)] += d * a_in[static_cast<std::size_t>(c)];
        }
        if (l == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
        for (int c = 0; c < in; ++c) {
            double acc = 0.0;
            for (int r = 0; r < out; ++r)
                acc += w[r * in + c] * delta[static_cast<std::size_t>(r)];
            // ReLU subgradient: 0 at nonpositive preactivation
            if (pre[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(c)] > 0.0)
                prev[static_cast<std::size_t>(c)] = acc;
        }
        delta.swap(prev);
    }
    return loss;
}

void TrainSet::validate(int in_dim) const {
    if (x.size() != y.size())
        throw std::invalid_argument("training set: inputs and labels differ in count");
    if (x.empty()) throw std::invalid_argument("training set: empty");
    for (const auto& row : x)
        if (row.size() != static_cast<std::size_t>(in_dim))
            throw std::invalid_argument("training set: input width does not match the shape");
}

namespace {

struct AdamState {
    MlpGradient m;
    MlpGradient v;
    long step = 0;
};

void adam_update(Mlp& mlp, const MlpGradient& grad, AdamState& state, const AdamConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        auto upd = [&](std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
            }
        };
        upd(mlp.weights[l], grad.weights[l], state.m.weights[l], state.v.weights[l]);
        upd(mlp.biases[l], grad.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

// Fisher-Yates order driven by the stream, identical for every rerun
void shuffle_indices(std::vector<std::size_t>& idx, RngStream& stream) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const double u = stream.uniform();
        std::size_t j = static_cast<std::size_t>(u * static_cast<double>(i));
        if (j >= i) j = i - 1;
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace

TrainResult train_mlp(const TrainSet& data, const MlpShape& shape, const TrainConfig& cfg) {
    shape.validate();
    data.validate(shape.in_dim);
    if (shape.out_dim != 1)
        throw std::invalid_argument("train_mlp: scalar labels need out_dim 1");
    if (cfg.epochs < 1) throw std::invalid_argument("train_mlp: epochs must be positive");
    if (cfg.batch < 1) throw std::invalid_argument("train_mlp: batch must be positive");

    const std::size_t n = data.x.size();
    const std::size_t in_dim = static_cast<std::size_t>(shape.in_dim);

    TrainResult res;
    res.input_shift.assign(in_dim, 0.0);
    res.input_scale.assign(in_dim, 1.0);
    for (std::size_t c = 0; c < in_dim; ++c) {
        double mean = 0.0;
        for (const auto& row : data.x) mean += row[c];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& row : data.x) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<double>(n);
        res.input_shift[c] = mean;
        res.input_scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    {
        double mean = 0.0;
        for (double v : data.y) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : data.y) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        res.label_shift = mean;
        res.label_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    }

    std::vector<std::vector<double>> xs(n, std::vector<double>(in_dim));
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < in_dim; ++c)
            xs[i][c] = (data.x[i][c] - res.input_shift[c]) / res.input_scale[c];
        ys[i] = (data.y[i] - res.label_shift) / res.label_scale;
    }

    const RngKey key = RngKey::from_seed(cfg.seed);
    RngStream init_stream = key.child("init").stream(0);
    res.mlp = mlp_init(shape, init_stream);

    AdamState adam;
    adam.m = MlpGradient::zeros_like(res.mlp);
    adam.v = MlpGradient::zeros_like(res.mlp);
    MlpGradient grad = MlpGradient::zeros_like(res.mlp);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const RngKey shuffle_key = key.child("shuffle");

    res.epoch_rmse.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream order_stream = shuffle_key.stream(static_cast<std::size_t>(epoch));
        shuffle_indices(order, order_stream);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
            grad.scale(0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t s = order[i];
                batch_loss += mlp_loss_grad(res.mlp, xs[s], {&ys[s], 1}, grad);
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_mlp: loss diverged at epoch " +
                                         std::to_string(epoch) + ", batch offset " +
                                         std::to_string(start));
            grad.scale(inv);
            adam_update(res.mlp, grad, adam, cfg.adam);
            epoch_loss += batch_loss;
        }
        // rmse of the pre-update forward passes, in label units
        res.epoch_rmse.push_back(res.label_scale *
                                 std::sqrt(2.0 * epoch_loss / static_cast<double>(n)));
    }

    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = res.mlp.forward(xs[i])[0] - ys[i];
        sq += diff * diff;
    }
    res.train_rmse = res.label_scale * std::sqrt(sq / static_cast<double>(n));
    return res;
}

ReluNetwork to_relu_network(const Mlp& mlp) {
    std::vector<AffineLayer> layers;
    const int nl = mlp.shape.layer_count();
    layers.reserve(static_cast<std::size_t>(nl));
    for (int l = 0; l < nl; ++l) {
        const int out = mlp.shape.fan_out(l);
        const int in = mlp.shape.fan_in(l);
        AffineLayer layer = AffineLayer::zero(out, in);
        const double* w = mlp.weights[static_cast<std::size_t>(l)].data();
        for (int r = 0; r < out; ++r) {
            layer.bias[static_cast<std::size_t>(r)] =
                mlp.biases[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)];
            for (int c = 0; c < in; ++c) layer.set(r, c, w[r * in + c]);
        }
        layers.push_back(std::move(layer));
    }
    return ReluNetwork(std::move(layers));
}

ReluNetwork to_relu_network(const TrainResult& trained) {
    ReluNetwork net = to_relu_network(trained.mlp);

    const int in_dim = trained.mlp.shape.in_dim;
    AffineLayer norm = AffineLayer::zero(in_dim, in_dim);
    for (int c = 0; c < in_dim; ++c) {
        const double s = trained.input_scale[static_cast<std::size_t>(c)];
        norm.set(c, c, 1.0 / s);
        norm.bias[static_cast<std::size_t>(c)] =
            -trained.input_shift[static_cast<std::size_t>(c)] / s;
    }
    net = precompose_affine(net, norm);

    AffineLayer denorm = AffineLayer::zero(1, 1);
    denorm.set(0, 0, trained.label_scale);
    denorm.bias[0] = trained.label_shift;
    return postcompose_affine(denorm, net);
}

}  // namespace svnet
