#pragma once

#include <cstdint>
#include <vector>

#include "ppgtcn/model.hpp"

namespace ppgtcn {

/// Affine int8 quantization parameters. dequant(q) = (q - zero_point)*scale.
struct QuantParams {
    float scale = 1.0f;
    int zero_point = 0;
};

std::int8_t quantize_value(float v, const QuantParams& qp);
float dequantize_value(std::int8_t q, const QuantParams& qp);

/// Min/max activation ranges observed over a calibration set: the network
/// input plus every layer output, in layer order.
struct ActivationRanges {
    struct Range {
        float lo = 0.0f;
        float hi = 0.0f;
    };
    Range input;
    std::vector<Range> layer_out;
};

/// Replaces every conv with dilation d > 1 by an equivalent dilation-1 conv
/// of kernel size d*(K-1)+1: the original taps land at positions 0, d, 2d,
/// ... and the rest are zeros. Forward outputs are unchanged.
struct FlattenResult {
    NetworkSpec spec;
    WeightSet weights;
};
FlattenResult flatten_dilation(const NetworkSpec& spec, const WeightSet& weights);

/// Folds every batch norm into the preceding conv/linear layer (running
/// statistics, inference semantics). The returned topology has no batch-norm
/// layers.
FlattenResult fold_batchnorm(const NetworkSpec& spec, const WeightSet& weights);

/// Per-activation min/max over the calibration windows (infer mode). Widened
/// symmetrically to a minimum width of 1e-3 where degenerate.
ActivationRanges calibrate(const NetworkSpec& spec, const WeightSet& weights,
                           const std::vector<Tensor>& windows);

/// One quantized conv/linear layer: symmetric per-tensor int8 weights,
/// int32 bias at scale in_scale*w_scale, and the fixed-point requantization
/// multiplier (mult, shift) mapping accumulators onto the output grid.
struct QuantRecord {
    int topo_index = 0;
    float w_scale = 1.0f;
    QuantParams in_qp, out_qp;
    std::int32_t mult = 0;
    std::int32_t shift = 0;
    std::uint8_t fuse_relu = 0;
    std::vector<std::int8_t> w;
    std::vector<std::int32_t> bias;
};

/// Full-integer int8 model: folded + flattened topology (dilation 1
/// everywhere, no batch norm) plus per-layer quantization records.
struct QuantizedModel {
    NetworkSpec topology;
    QuantParams input_qp;
    std::vector<QuantRecord> records;
};

/// Post-training quantization of a flattened float model (throws
/// PreconditionError naming flatten_dilation if any dilation > 1 remains).
/// Batch norm is folded first; weights are symmetric per-tensor int8,
/// activations asymmetric int8 from the calibration windows.
QuantizedModel quantize_model(const NetworkSpec& spec, const WeightSet& weights,
                              const std::vector<Tensor>& calibration);

/// Integer inference. window: [C,T]. Deterministic and bit-reproducible.
float infer_int8(const QuantizedModel& model, const Tensor& window);

std::vector<float> infer_int8_batch(const QuantizedModel& model,
                                    const std::vector<Tensor>& windows);

/// Fixed-point multiply used for requantization (round-to-nearest, exact
/// integer semantics; exposed for tests).
std::int32_t requantize(std::int32_t acc, std::int32_t mult, std::int32_t shift);

} // namespace ppgtcn
