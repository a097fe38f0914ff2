#include "ppgtcn/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppgtcn/data.hpp"
#include "ppgtcn/kernels.hpp"

namespace ppgtcn {

namespace {

constexpr float kMinRangeWidth = 1e-3f;
constexpr float kBnEps = 1e-5f;

std::int32_t round_half_away_i32(double v) {
    const double r = v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
    if (r > static_cast<double>(std::numeric_limits<std::int32_t>::max())) {
        return std::numeric_limits<std::int32_t>::max();
    }
    if (r < static_cast<double>(std::numeric_limits<std::int32_t>::min())) {
        return std::numeric_limits<std::int32_t>::min();
    }
    return static_cast<std::int32_t>(r);
}

/// Activation qparams: asymmetric, nudged zero point, minimum range width.
QuantParams activation_qparams(ActivationRanges::Range r) {
    float lo = r.lo, hi = r.hi;
    const float width = hi - lo;
    if (width < kMinRangeWidth) {
        const float pad = (kMinRangeWidth - width) * 0.5f;
        lo -= pad;
        hi += pad;
    }
    QuantParams qp;
    qp.scale = (hi - lo) / 255.0f;
    const double zp_real = -128.0 - static_cast<double>(lo) / qp.scale;
    qp.zero_point =
        static_cast<int>(std::clamp<double>(std::floor(zp_real + 0.5), -128.0, 127.0));
    return qp;
}

/// Symmetric per-tensor weight scale (zero point 0, codes in [-127, 127]).
float weight_scale(const Tensor& w) {
    float amax = 0.0f;
    for (std::size_t i = 0; i < w.numel(); ++i) amax = std::max(amax, std::fabs(w[i]));
    return amax > 0.0f ? amax / 127.0f : 1.0f;
}

std::int32_t srdhm(std::int32_t a, std::int32_t b) {
    const bool overflow =
        a == b && a == std::numeric_limits<std::int32_t>::min();
    const std::int64_t ab = static_cast<std::int64_t>(a) * b;
    const std::int64_t nudge = ab >= 0 ? (1ll << 30) : (1 - (1ll << 30));
    const std::int32_t r = static_cast<std::int32_t>((ab + nudge) >> 31);
    return overflow ? std::numeric_limits<std::int32_t>::max() : r;
}

std::int32_t rounding_divide_by_pot(std::int32_t x, int exponent) {
    if (exponent <= 0) return x;
    const std::int32_t mask = (std::int32_t(1) << exponent) - 1;
    const std::int32_t remainder = x & mask;
    const std::int32_t threshold = (mask >> 1) + (x < 0 ? 1 : 0);
    return (x >> exponent) + (remainder > threshold ? 1 : 0);
}

void quantize_multiplier(double m, std::int32_t* mult, std::int32_t* shift) {
    if (m <= 0.0) {
        *mult = 0;
        *shift = 0;
        return;
    }
    int exp = 0;
    const double q = std::frexp(m, &exp); // m = q * 2^exp, q in [0.5, 1)
    std::int64_t qi = static_cast<std::int64_t>(std::llround(q * (1ll << 31)));
    if (qi == (1ll << 31)) {
        qi /= 2;
        ++exp;
    }
    *mult = static_cast<std::int32_t>(qi);
    *shift = exp;
}

bool is_affine(LayerKind k) {
    return k == LayerKind::Conv || k == LayerKind::Linear || k == LayerKind::Head;
}

} // namespace

std::int8_t quantize_value(float v, const QuantParams& qp) {
    const double q = static_cast<double>(v) / qp.scale;
    const double r = q >= 0.0 ? std::floor(q + 0.5) : std::ceil(q - 0.5);
    const double code = std::clamp(r + qp.zero_point, -128.0, 127.0);
    return static_cast<std::int8_t>(code);
}

float dequantize_value(std::int8_t q, const QuantParams& qp) {
    return (static_cast<int>(q) - qp.zero_point) * qp.scale;
}

std::int32_t requantize(std::int32_t acc, std::int32_t mult, std::int32_t shift) {
    const int left = shift > 0 ? shift : 0;
    const int right = shift > 0 ? 0 : -shift;
    std::int64_t shifted = static_cast<std::int64_t>(acc) << left;
    shifted = std::clamp<std::int64_t>(shifted, std::numeric_limits<std::int32_t>::min(),
                                       std::numeric_limits<std::int32_t>::max());
    return rounding_divide_by_pot(srdhm(static_cast<std::int32_t>(shifted), mult), right);
}

FlattenResult flatten_dilation(const NetworkSpec& spec, const WeightSet& weights) {
    check_weights(spec, weights);
    FlattenResult out;
    out.spec = spec;
    out.weights = weights;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& layer = spec.layers[l];
        if (layer.kind != LayerKind::Conv || layer.d <= 1) continue;
        const int k2 = layer.d * (layer.k - 1) + 1;
        Tensor w({layer.c_out, layer.c_in, k2});
        const Tensor& old = weights.layers[l][0];
        for (int m = 0; m < layer.c_out; ++m) {
            for (int c = 0; c < layer.c_in; ++c) {
                for (int i = 0; i < layer.k; ++i) {
                    w.at3(m, c, layer.d * i) = old.at3(m, c, i);
                }
            }
        }
        out.spec.layers[l].k = k2;
        out.spec.layers[l].d = 1;
        out.weights.layers[l][0] = std::move(w);
    }
    trace_shapes(out.spec);
    return out;
}

FlattenResult fold_batchnorm(const NetworkSpec& spec, const WeightSet& weights) {
    check_weights(spec, weights);
    FlattenResult out;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& layer = spec.layers[l];
        if (layer.kind == LayerKind::BatchNorm) {
            throw PreconditionError(
                "fold_batchnorm: batch norm without a preceding conv/linear layer");
        }
        if (is_affine(layer.kind) && l + 1 < spec.layers.size() &&
            spec.layers[l + 1].kind == LayerKind::BatchNorm) {
            const auto& bn = weights.layers[l + 1];
            const Tensor& gamma = bn[0];
            const Tensor& beta = bn[1];
            const Tensor& rm = bn[2];
            const Tensor& rv = bn[3];
            Tensor w = weights.layers[l][0];
            Tensor b = weights.layers[l][1];
            const int c_out = layer.c_out;
            const std::size_t slice = w.numel() / static_cast<std::size_t>(c_out);
            for (int c = 0; c < c_out; ++c) {
                const float inv = 1.0f / std::sqrt(rv[c] + kBnEps);
                const float a = gamma[c] * inv;
                float* row = w.data() + static_cast<std::size_t>(c) * slice;
                for (std::size_t i = 0; i < slice; ++i) row[i] *= a;
                b[c] = (b[c] - rm[c]) * a + beta[c];
            }
            out.spec.layers.push_back(layer);
            out.weights.layers.push_back({std::move(w), std::move(b)});
            ++l; // skip the folded batch norm
        } else {
            out.spec.layers.push_back(layer);
            out.weights.layers.push_back(weights.layers[l]);
        }
    }
    out.spec.input_channels = spec.input_channels;
    out.spec.input_length = spec.input_length;
    trace_shapes(out.spec);
    return out;
}

ActivationRanges calibrate(const NetworkSpec& spec, const WeightSet& weights,
                           const std::vector<Tensor>& windows) {
    if (windows.empty()) throw ArgumentError("calibrate: empty calibration set");
    check_weights(spec, weights);

    ActivationRanges ranges;
    ranges.layer_out.resize(spec.layers.size());
    bool first = true;

    constexpr std::size_t kChunk = 64;
    WeightSet scratch = weights;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        const std::size_t end = std::min(windows.size(), start + kChunk);
        std::vector<int> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(start + i);
        const Tensor x = stack_windows(windows, idx);

        GradTape tape;
        const TapeForward fwd = forward_tape(spec, scratch, tape, x, Mode::Infer);

        auto update = [first](ActivationRanges::Range& r, const Tensor& t) {
            float lo = first ? t[0] : std::min(r.lo, t[0]);
            float hi = first ? t[0] : std::max(r.hi, t[0]);
            for (std::size_t i = 0; i < t.numel(); ++i) {
                lo = std::min(lo, t[i]);
                hi = std::max(hi, t[i]);
            }
            r.lo = lo;
            r.hi = hi;
        };
        update(ranges.input, x);
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            update(ranges.layer_out[l], tape.value(fwd.layer_out[l]));
        }
        first = false;
    }
    return ranges;
}

QuantizedModel quantize_model(const NetworkSpec& spec, const WeightSet& weights,
                              const std::vector<Tensor>& calibration) {
    for (const LayerSpec& l : spec.layers) {
        if (l.kind == LayerKind::Conv && l.d > 1) {
            throw PreconditionError(
                "quantize_model: model still has dilation > 1; run flatten_dilation first");
        }
    }
    if (calibration.empty()) throw ArgumentError("quantize_model: empty calibration set");

    FlattenResult folded = fold_batchnorm(spec, weights);
    const ActivationRanges ranges = calibrate(folded.spec, folded.weights, calibration);

    QuantizedModel model;
    model.topology = folded.spec;
    model.input_qp = activation_qparams(ranges.input);

    QuantParams cur_qp = model.input_qp;
    for (std::size_t l = 0; l < folded.spec.layers.size(); ++l) {
        const LayerSpec& layer = folded.spec.layers[l];
        if (layer.kind == LayerKind::Relu || layer.kind == LayerKind::Pool) continue;
        if (!is_affine(layer.kind)) {
            throw PreconditionError("quantize_model: unsupported layer in folded topology");
        }

        const bool fuse_relu = l + 1 < folded.spec.layers.size() &&
                               folded.spec.layers[l + 1].kind == LayerKind::Relu;
        const std::size_t out_range_idx = fuse_relu ? l + 1 : l;

        QuantRecord rec;
        rec.topo_index = static_cast<int>(l);
        rec.fuse_relu = fuse_relu ? 1 : 0;
        rec.in_qp = cur_qp;
        rec.out_qp = activation_qparams(ranges.layer_out[out_range_idx]);

        const Tensor& w = folded.weights.layers[l][0];
        const Tensor& b = folded.weights.layers[l][1];
        rec.w_scale = weight_scale(w);
        rec.w.resize(w.numel());
        for (std::size_t i = 0; i < w.numel(); ++i) {
            const double q = static_cast<double>(w[i]) / rec.w_scale;
            const double r = q >= 0.0 ? std::floor(q + 0.5) : std::ceil(q - 0.5);
            rec.w[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
        }
        const double bias_scale = static_cast<double>(rec.in_qp.scale) * rec.w_scale;
        rec.bias.resize(b.numel());
        for (std::size_t i = 0; i < b.numel(); ++i) {
            rec.bias[i] = round_half_away_i32(static_cast<double>(b[i]) / bias_scale);
        }
        quantize_multiplier(bias_scale / rec.out_qp.scale, &rec.mult, &rec.shift);

        cur_qp = rec.out_qp;
        model.records.push_back(std::move(rec));
    }
    return model;
}

namespace {

struct Int8Buffer {
    std::vector<std::int8_t> data;
    int channels = 0;
    int t = 0;
};

void requant_store(const std::vector<std::int32_t>& acc, const QuantRecord& rec,
                   std::vector<std::int8_t>& out) {
    out.resize(acc.size());
    const int lo = rec.fuse_relu ? rec.out_qp.zero_point : -128;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const std::int32_t q = requantize(acc[i], rec.mult, rec.shift) + rec.out_qp.zero_point;
        out[i] = static_cast<std::int8_t>(std::clamp(q, lo, 127));
    }
}

} // namespace

float infer_int8(const QuantizedModel& model, const Tensor& window) {
    if (window.rank() != 2 || window.dim(0) != model.topology.input_channels ||
        window.dim(1) != model.topology.input_length) {
        throw DimensionError("infer_int8: window " + window.shape_string() +
                             " does not match model input");
    }

    Int8Buffer buf;
    buf.channels = window.dim(0);
    buf.t = window.dim(1);
    buf.data.resize(window.numel());
    for (std::size_t i = 0; i < window.numel(); ++i) {
        buf.data[i] = quantize_value(window[i], model.input_qp);
    }

    const auto& k = kernels::active();
    std::size_t next_rec = 0;
    const QuantRecord* last = nullptr;
    bool skip_relu = false;

    for (std::size_t l = 0; l < model.topology.layers.size(); ++l) {
        const LayerSpec& layer = model.topology.layers[l];
        switch (layer.kind) {
            case LayerKind::Conv: {
                const QuantRecord& rec = model.records.at(next_rec++);
                kernels::Conv1dShape s;
                s.c_in = layer.c_in;
                s.c_out = layer.c_out;
                s.k = layer.k;
                s.dilation = 1;
                s.stride = layer.s;
                s.t_in = buf.t;
                s.t_out = kernels::conv_out_len(buf.t, layer.s);
                std::vector<std::int32_t> acc(static_cast<std::size_t>(s.c_out) * s.t_out);
                k.conv1d_int8(s, buf.data.data(), rec.in_qp.zero_point, rec.w.data(),
                              rec.bias.data(), acc.data());
                requant_store(acc, rec, buf.data);
                buf.channels = s.c_out;
                buf.t = s.t_out;
                last = &rec;
                skip_relu = rec.fuse_relu;
                break;
            }
            case LayerKind::Relu: {
                if (skip_relu) {
                    skip_relu = false;
                    break;
                }
                // Unfused relu: clamp at the zero point of the current grid.
                const int zp = last ? last->out_qp.zero_point : model.input_qp.zero_point;
                for (auto& v : buf.data) {
                    if (v < zp) v = static_cast<std::int8_t>(zp);
                }
                break;
            }
            case LayerKind::Pool: {
                const int t_out = (buf.t - layer.k) / layer.s + 1;
                std::vector<std::int8_t> out(static_cast<std::size_t>(buf.channels) * t_out);
                for (int c = 0; c < buf.channels; ++c) {
                    const std::int8_t* row =
                        buf.data.data() + static_cast<std::size_t>(c) * buf.t;
                    std::int8_t* orow = out.data() + static_cast<std::size_t>(c) * t_out;
                    for (int to = 0; to < t_out; ++to) {
                        std::int32_t sum = 0;
                        for (int j = 0; j < layer.k; ++j) sum += row[to * layer.s + j];
                        // round half away from zero
                        const std::int32_t q =
                            sum >= 0 ? (2 * sum + layer.k) / (2 * layer.k)
                                     : -((-2 * sum + layer.k) / (2 * layer.k));
                        orow[to] = static_cast<std::int8_t>(std::clamp(q, -128, 127));
                    }
                }
                buf.data = std::move(out);
                buf.t = t_out;
                break;
            }
            case LayerKind::Linear:
            case LayerKind::Head: {
                const QuantRecord& rec = model.records.at(next_rec++);
                const int in = layer.c_in;
                const int out_f = layer.c_out;
                if (static_cast<int>(buf.data.size()) != in) {
                    throw DimensionError("infer_int8: feature mismatch at layer " +
                                         std::to_string(l));
                }
                std::vector<std::int32_t> acc(static_cast<std::size_t>(out_f));
                k.linear_int8(in, out_f, buf.data.data(), rec.in_qp.zero_point, rec.w.data(),
                              rec.bias.data(), acc.data());
                requant_store(acc, rec, buf.data);
                buf.channels = out_f;
                buf.t = 1;
                last = &rec;
                skip_relu = rec.fuse_relu;
                break;
            }
            case LayerKind::BatchNorm:
                throw PreconditionError("infer_int8: quantized topology contains batch norm");
        }
    }
    if (!last || buf.data.size() != 1) {
        throw PreconditionError("infer_int8: topology does not end in a single output");
    }
    return dequantize_value(buf.data[0], last->out_qp);
}

std::vector<float> infer_int8_batch(const QuantizedModel& model,
                                    const std::vector<Tensor>& windows) {
    std::vector<float> out;
    out.reserve(windows.size());
    for (const Tensor& w : windows) out.push_back(infer_int8(model, w));
    return out;
}

} // namespace ppgtcn
