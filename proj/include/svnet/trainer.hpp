#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svnet/relu_net.hpp"
#include "svnet/rng.hpp"

namespace svnet {

// ============================================================================
// Native trainer for small dense ReLU regressors. Single-threaded and
// deterministic for a fixed seed: initialization, batch order and the Adam
// updates depend on nothing but the seed and the data. Trained parameters
// export losslessly to the sparse network representation with the data
// normalization folded into the boundary layers by exact affine merging.
// ============================================================================

struct MlpShape {
    int in_dim = 1;
    std::vector<int> hidden;
    int out_dim = 1;

    void validate() const;  // throws std::invalid_argument
    int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
    std::size_t parameter_count() const;
    // width of the input to affine layer l (0-based)
    int fan_in(int layer) const;
    int fan_out(int layer) const;
};

// dense parameters; weights[l] is row-major fan_out x fan_in
struct Mlp {
    MlpShape shape;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::vector<double> forward(std::span<const double> x) const;
    // every affine output before its ReLU (the last layer has none),
    // layer-major; used by the finite-difference harness to reject probes
    // that sit on a kink
    std::vector<std::vector<double>> preactivations(std::span<const double> x) const;
};

// He-style initialization: weights N(0, 2 / fan_in), zero biases
Mlp mlp_init(const MlpShape& shape, RngStream& stream);

struct MlpGradient {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static MlpGradient zeros_like(const Mlp& mlp);
    void scale(double s);
};

// squared-error loss 0.5 |f(x) - y|^2 of one sample; the gradient is ADDED
// into grad so batches accumulate
double mlp_loss_grad(const Mlp& mlp, std::span<const double> x, std::span<const double> y,
                     MlpGradient& grad);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int epochs = 200;
    int batch = 256;
    AdamConfig adam;
    std::uint64_t seed = 1;
};

struct TrainSet {
    std::vector<std::vector<double>> x;
    std::vector<double> y;

    void validate(int in_dim) const;  // throws std::invalid_argument
};

struct TrainResult {
    Mlp mlp;                         // operates on normalized inputs/labels
    std::vector<double> input_shift;  // x_hat = (x - shift) / scale
    std::vector<double> input_scale;
    double label_shift = 0.0;
    double label_scale = 1.0;
    std::vector<double> epoch_rmse;  // training rmse per epoch, label units
    double train_rmse = 0.0;         // final pass over the full set, label units
};

// throws std::runtime_error with the epoch/batch position if the loss
// stops being finite
TrainResult train_mlp(const TrainSet& data, const MlpShape& shape, const TrainConfig& cfg);

// exact export: dense layers become sparse affine layers, the input
// normalization merges into the first layer and the label denormalization
// into the last, so the network maps raw inputs to raw label units
ReluNetwork to_relu_network(const TrainResult& trained);
ReluNetwork to_relu_network(const Mlp& mlp);

}  // namespace svnet
