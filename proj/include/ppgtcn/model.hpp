#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppgtcn/autograd.hpp"
#include "ppgtcn/rng.hpp"
#include "ppgtcn/tensor.hpp"

namespace ppgtcn {

enum class LayerKind { Conv, BatchNorm, Relu, Pool, Linear, Head };

/// One layer in a chain topology. Meaning of the fields by kind:
///   Conv:      c_in, c_out, k (kernel), d (dilation), s (stride)
///   BatchNorm: c_in == c_out == channel count
///   Pool:      k = window, s = stride
///   Linear/Head: c_in = input features, c_out = output features
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int c_in = 0;
    int c_out = 0;
    int k = 1;
    int d = 1;
    int s = 1;

    bool operator==(const LayerSpec&) const = default;
};

/// Declarative chain topology. The spec alone determines parameter and MAC
/// counts; weights are held separately in a WeightSet.
struct NetworkSpec {
    int input_channels = 4;
    int input_length = 256;
    std::vector<LayerSpec> layers;

    bool operator==(const NetworkSpec&) const = default;
};

/// Parameter tensors per layer, in declared layer order.
/// Conv/Linear/Head: {W, b}. BatchNorm: {gamma, beta, running_mean,
/// running_var} (the running stats are buffers, not trained parameters).
struct WeightSet {
    std::vector<std::vector<Tensor>> layers;
};

/// Activation geometry at a layer boundary. Linear layers flatten [C,T] to
/// C*T features (t == 1 afterwards).
struct ShapePoint {
    int channels = 0;
    int t = 0;
};

/// Validates the chain and returns the activation shape at every boundary;
/// index 0 is the input shape, index i+1 the output of layer i.
std::vector<ShapePoint> trace_shapes(const NetworkSpec& spec);

/// TEMPONet-derived seed: 3 convolutional blocks (two dilated convs, one
/// strided conv, one average pool, batch norm + ReLU throughout) with output
/// channels 32/64/128, then a 3-layer classifier ending in one regression
/// neuron. Input 4 channels x 256 samples.
NetworkSpec build_seed();

/// Same structure with every width multiplied by `width_mult` (>= 1 channel),
/// for desk-scale experiments.
NetworkSpec build_seed(double width_mult);

/// Deterministic He-uniform initialization for conv/linear weights; batch
/// norm starts at gamma=1, beta=0, running stats (0, 1); biases at zero.
WeightSet init_weights(const NetworkSpec& spec, std::uint64_t seed);

/// Throws DimensionError unless the weight tensors match the spec exactly.
void check_weights(const NetworkSpec& spec, const WeightSet& w);

/// Batched forward. x: [B,C,T]. Returns one BPM estimate per batch item.
/// Train mode uses batch statistics and updates running stats in `w`.
std::vector<float> forward_batch(const NetworkSpec& spec, WeightSet& w, const Tensor& x, Mode mode);

/// Inference on shared read-only weights (safe to call concurrently).
std::vector<float> forward_infer(const NetworkSpec& spec, const WeightSet& w, const Tensor& x);

/// Single window [C,T] -> BPM.
float predict_window(const NetworkSpec& spec, const WeightSet& w, const Tensor& window);

/// Tape forward for training. Watches all parameters and returns their slot
/// ids per layer (same positions as WeightSet::layers). Layers marked in
/// `frozen` keep their state: their batch norms run in infer mode so the
/// running statistics stay bit-identical.
struct TapeForward {
    int pred = -1; // [B,1] slot
    std::vector<std::vector<int>> param_ids;
    std::vector<int> layer_out; // output slot of every layer, in order
};
TapeForward forward_tape(const NetworkSpec& spec, WeightSet& w, GradTape& tape, const Tensor& x,
                         Mode mode, const std::vector<bool>* frozen = nullptr);

/// params = sum over conv (c_out*c_in*k + c_out) + batchnorm 2c +
/// linear/head (in*out + out).
std::int64_t count_params(const NetworkSpec& spec);

/// MACs = conv c_out*c_in*k*t_out + linear in*out, with t tracked through
/// strides and pools. Batch norm and activations are excluded.
std::int64_t count_macs(const NetworkSpec& spec);

/// Versioned human-readable topology descriptor (container payload).
std::string topology_to_text(const NetworkSpec& spec);
NetworkSpec topology_from_text(const std::string& text);

} // namespace ppgtcn
