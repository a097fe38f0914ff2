#include "ppgtcn/model.hpp"

#include <cmath>
#include <sstream>

#include "ppgtcn/kernels.hpp"

namespace ppgtcn {

namespace {

int rounded_width(double v) {
    const int r = static_cast<int>(std::lround(v));
    return r < 1 ? 1 : r;
}

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::Relu: return "relu";
        case LayerKind::Pool: return "pool";
        case LayerKind::Linear: return "linear";
        case LayerKind::Head: return "head";
    }
    return "?";
}

} // namespace

std::vector<ShapePoint> trace_shapes(const NetworkSpec& spec) {
    if (spec.input_channels < 1 || spec.input_length < 1) {
        throw DimensionError("network input shape must be positive");
    }
    std::vector<ShapePoint> out;
    out.reserve(spec.layers.size() + 1);
    ShapePoint cur{spec.input_channels, spec.input_length};
    out.push_back(cur);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + kind_name(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::Conv: {
                if (l.k < 1 || l.d < 1 || l.s < 1 || l.c_out < 1) {
                    throw DimensionError(where + ": bad conv geometry");
                }
                if (l.c_in != cur.channels) {
                    throw DimensionError(where + ": c_in " + std::to_string(l.c_in) +
                                         " != incoming channels " + std::to_string(cur.channels));
                }
                cur = {l.c_out, kernels::conv_out_len(cur.t, l.s)};
                break;
            }
            case LayerKind::BatchNorm: {
                if (l.c_in != cur.channels) {
                    throw DimensionError(where + ": channel count " + std::to_string(l.c_in) +
                                         " != incoming channels " + std::to_string(cur.channels));
                }
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Pool: {
                if (l.k < 1 || l.s < 1) throw DimensionError(where + ": bad pool geometry");
                if (l.k > cur.t) {
                    throw ArgumentError(where + ": window " + std::to_string(l.k) +
                                        " larger than sequence " + std::to_string(cur.t));
                }
                cur = {cur.channels, (cur.t - l.k) / l.s + 1};
                break;
            }
            case LayerKind::Linear:
            case LayerKind::Head: {
                const int features = cur.channels * cur.t;
                if (l.c_in != features) {
                    throw DimensionError(where + ": in " + std::to_string(l.c_in) +
                                         " != incoming features " + std::to_string(features));
                }
                if (l.c_out < 1) throw DimensionError(where + ": bad output width");
                cur = {l.c_out, 1};
                break;
            }
        }
        out.push_back(cur);
    }
    if (!spec.layers.empty()) {
        const LayerSpec& last = spec.layers.back();
        if (last.kind == LayerKind::Head && last.c_out != 1) {
            throw DimensionError("regression head must have a single output");
        }
    }
    return out;
}

NetworkSpec build_seed() { return build_seed(1.0); }

NetworkSpec build_seed(double width_mult) {
    NetworkSpec spec;
    spec.input_channels = 4;
    spec.input_length = 256;

    const int block_channels[3] = {rounded_width(32 * width_mult), rounded_width(64 * width_mult),
                                   rounded_width(128 * width_mult)};
    const int block_dilation[3] = {2, 4, 8};

    int c = spec.input_channels;
    auto conv_bn_relu = [&spec, &c](int c_out, int k, int d, int s) {
        spec.layers.push_back({LayerKind::Conv, c, c_out, k, d, s});
        spec.layers.push_back({LayerKind::BatchNorm, c_out, c_out, 1, 1, 1});
        spec.layers.push_back({LayerKind::Relu, c_out, c_out, 1, 1, 1});
        c = c_out;
    };

    for (int b = 0; b < 3; ++b) {
        const int ch = block_channels[b];
        const int d = block_dilation[b];
        conv_bn_relu(ch, 3, d, 1);
        conv_bn_relu(ch, 3, d, 1);
        conv_bn_relu(ch, 5, 1, 2);
        spec.layers.push_back({LayerKind::Pool, ch, ch, 2, 1, 2});
    }

    // After three blocks: t = 256 -> 128 -> 64 | 32 -> 16 | 8 -> 4.
    const int flat = c * 4;
    const int h1 = rounded_width(256 * width_mult);
    const int h2 = rounded_width(128 * width_mult);
    spec.layers.push_back({LayerKind::Linear, flat, h1, 1, 1, 1});
    spec.layers.push_back({LayerKind::BatchNorm, h1, h1, 1, 1, 1});
    spec.layers.push_back({LayerKind::Relu, h1, h1, 1, 1, 1});
    spec.layers.push_back({LayerKind::Linear, h1, h2, 1, 1, 1});
    spec.layers.push_back({LayerKind::BatchNorm, h2, h2, 1, 1, 1});
    spec.layers.push_back({LayerKind::Relu, h2, h2, 1, 1, 1});
    spec.layers.push_back({LayerKind::Head, h2, 1, 1, 1, 1});

    trace_shapes(spec);
    return spec;
}

WeightSet init_weights(const NetworkSpec& spec, std::uint64_t seed) {
    trace_shapes(spec);
    Rng rng(seed);
    WeightSet w;
    w.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Conv: {
                Tensor W({l.c_out, l.c_in, l.k});
                const float bound = std::sqrt(6.0f / static_cast<float>(l.c_in * l.k));
                for (auto& v : W.vec()) v = rng.uniform_f(-bound, bound);
                w.layers[i] = {std::move(W), Tensor({l.c_out})};
                break;
            }
            case LayerKind::Linear:
            case LayerKind::Head: {
                Tensor W({l.c_out, l.c_in});
                const float bound = std::sqrt(6.0f / static_cast<float>(l.c_in));
                for (auto& v : W.vec()) v = rng.uniform_f(-bound, bound);
                w.layers[i] = {std::move(W), Tensor({l.c_out})};
                break;
            }
            case LayerKind::BatchNorm: {
                w.layers[i] = {Tensor::full({l.c_in}, 1.0f), Tensor({l.c_in}), Tensor({l.c_in}),
                               Tensor::full({l.c_in}, 1.0f)};
                break;
            }
            default:
                break;
        }
    }
    return w;
}

void check_weights(const NetworkSpec& spec, const WeightSet& w) {
    if (w.layers.size() != spec.layers.size()) {
        throw DimensionError("weight set has " + std::to_string(w.layers.size()) +
                             " layers, spec has " + std::to_string(spec.layers.size()));
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const auto& p = w.layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + kind_name(l.kind) + ")";
        auto expect = [&](std::size_t count) {
            if (p.size() != count) {
                throw DimensionError(where + ": expected " + std::to_string(count) +
                                     " parameter tensors, found " + std::to_string(p.size()));
            }
        };
        switch (l.kind) {
            case LayerKind::Conv:
                expect(2);
                if (p[0].shape() != std::vector<int>{l.c_out, l.c_in, l.k} ||
                    p[1].shape() != std::vector<int>{l.c_out}) {
                    throw DimensionError(where + ": weight shape " + p[0].shape_string() +
                                         " does not match spec");
                }
                break;
            case LayerKind::Linear:
            case LayerKind::Head:
                expect(2);
                if (p[0].shape() != std::vector<int>{l.c_out, l.c_in} ||
                    p[1].shape() != std::vector<int>{l.c_out}) {
                    throw DimensionError(where + ": weight shape " + p[0].shape_string() +
                                         " does not match spec");
                }
                break;
            case LayerKind::BatchNorm:
                expect(4);
                for (const auto& t : p) {
                    if (t.shape() != std::vector<int>{l.c_in}) {
                        throw DimensionError(where + ": per-channel tensor " + t.shape_string() +
                                             " does not match channels " + std::to_string(l.c_in));
                    }
                }
                break;
            default:
                expect(0);
                break;
        }
    }
}

TapeForward forward_tape(const NetworkSpec& spec, WeightSet& w, GradTape& tape, const Tensor& x,
                         Mode mode, const std::vector<bool>* frozen) {
    check_weights(spec, w);
    if (frozen && frozen->size() != spec.layers.size()) {
        throw DimensionError("freeze mask length does not match layer count");
    }
    if (x.rank() != 3 || x.dim(1) != spec.input_channels || x.dim(2) != spec.input_length) {
        throw DimensionError("input " + x.shape_string() + " does not match network input [B," +
                             std::to_string(spec.input_channels) + "," +
                             std::to_string(spec.input_length) + "]");
    }

    TapeForward fwd;
    fwd.param_ids.resize(spec.layers.size());
    int cur = tape.push_value(x);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        auto& params = w.layers[i];
        switch (l.kind) {
            case LayerKind::Conv: {
                const int wid = tape.watch(params[0]);
                const int bid = tape.watch(params[1]);
                fwd.param_ids[i] = {wid, bid};
                cur = ops::conv1d_causal(tape, cur, wid, bid, l.d, l.s);
                break;
            }
            case LayerKind::BatchNorm: {
                const int gid = tape.watch(params[0]);
                const int bid = tape.watch(params[1]);
                fwd.param_ids[i] = {gid, bid};
                const Mode layer_mode =
                    (frozen && (*frozen)[i]) ? Mode::Infer : mode;
                cur = ops::batchnorm(tape, cur, gid, bid, params[2], params[3], layer_mode);
                break;
            }
            case LayerKind::Relu:
                cur = ops::relu(tape, cur);
                break;
            case LayerKind::Pool:
                cur = ops::avgpool1d(tape, cur, l.k, l.s);
                break;
            case LayerKind::Linear:
            case LayerKind::Head: {
                cur = ops::flatten(tape, cur);
                const int wid = tape.watch(params[0]);
                const int bid = tape.watch(params[1]);
                fwd.param_ids[i] = {wid, bid};
                cur = ops::linear(tape, cur, wid, bid);
                break;
            }
        }
        fwd.layer_out.push_back(cur);
    }
    fwd.pred = cur;
    return fwd;
}

std::vector<float> forward_batch(const NetworkSpec& spec, WeightSet& w, const Tensor& x,
                                 Mode mode) {
    GradTape tape;
    const TapeForward fwd = forward_tape(spec, w, tape, x, mode);
    const Tensor& pred = tape.value(fwd.pred);
    return pred.vec();
}

std::vector<float> forward_infer(const NetworkSpec& spec, const WeightSet& w, const Tensor& x) {
    // Infer mode never mutates the weights; the cast keeps the hot path shared.
    return forward_batch(spec, const_cast<WeightSet&>(w), x, Mode::Infer);
}

float predict_window(const NetworkSpec& spec, const WeightSet& w, const Tensor& window) {
    if (window.rank() != 2) {
        throw DimensionError("predict_window expects [C,T], got " + window.shape_string());
    }
    Tensor batched({1, window.dim(0), window.dim(1)}, window.vec());
    return forward_infer(spec, w, batched)[0];
}

std::int64_t count_params(const NetworkSpec& spec) {
    trace_shapes(spec);
    std::int64_t n = 0;
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                n += static_cast<std::int64_t>(l.c_out) * l.c_in * l.k + l.c_out;
                break;
            case LayerKind::BatchNorm:
                n += 2ll * l.c_in;
                break;
            case LayerKind::Linear:
            case LayerKind::Head:
                n += static_cast<std::int64_t>(l.c_in) * l.c_out + l.c_out;
                break;
            default:
                break;
        }
    }
    return n;
}

std::int64_t count_macs(const NetworkSpec& spec) {
    const auto shapes = trace_shapes(spec);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                n += static_cast<std::int64_t>(l.c_out) * l.c_in * l.k * shapes[i + 1].t;
                break;
            case LayerKind::Linear:
            case LayerKind::Head:
                n += static_cast<std::int64_t>(l.c_in) * l.c_out;
                break;
            default:
                break;
        }
    }
    return n;
}

std::string topology_to_text(const NetworkSpec& spec) {
    std::ostringstream os;
    os << "ppgtcn-topology v1\n";
    os << "input " << spec.input_channels << " " << spec.input_length << "\n";
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                os << "conv " << l.c_in << " " << l.c_out << " " << l.k << " " << l.d << " "
                   << l.s << "\n";
                break;
            case LayerKind::BatchNorm:
                os << "batchnorm " << l.c_in << "\n";
                break;
            case LayerKind::Relu:
                os << "relu " << l.c_in << "\n";
                break;
            case LayerKind::Pool:
                os << "pool " << l.c_in << " " << l.k << " " << l.s << "\n";
                break;
            case LayerKind::Linear:
                os << "linear " << l.c_in << " " << l.c_out << "\n";
                break;
            case LayerKind::Head:
                os << "head " << l.c_in << " " << l.c_out << "\n";
                break;
        }
    }
    os << "end\n";
    return os.str();
}

NetworkSpec topology_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    auto fail = [](const std::string& what) { return ArgumentError("topology: " + what); };

    if (!std::getline(is, line) || line != "ppgtcn-topology v1") {
        throw fail("missing or unsupported header");
    }
    NetworkSpec spec;
    bool have_input = false, have_end = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end") {
            have_end = true;
            break;
        }
        if (word == "input") {
            if (!(ls >> spec.input_channels >> spec.input_length)) throw fail("bad input line");
            have_input = true;
            continue;
        }
        if (!have_input) throw fail("layer before input line");
        LayerSpec l;
        if (word == "conv") {
            l.kind = LayerKind::Conv;
            if (!(ls >> l.c_in >> l.c_out >> l.k >> l.d >> l.s)) throw fail("bad conv line");
        } else if (word == "batchnorm") {
            l.kind = LayerKind::BatchNorm;
            if (!(ls >> l.c_in)) throw fail("bad batchnorm line");
            l.c_out = l.c_in;
        } else if (word == "relu") {
            l.kind = LayerKind::Relu;
            if (!(ls >> l.c_in)) throw fail("bad relu line");
            l.c_out = l.c_in;
        } else if (word == "pool") {
            l.kind = LayerKind::Pool;
            if (!(ls >> l.c_in >> l.k >> l.s)) throw fail("bad pool line");
            l.c_out = l.c_in;
        } else if (word == "linear") {
            l.kind = LayerKind::Linear;
            if (!(ls >> l.c_in >> l.c_out)) throw fail("bad linear line");
        } else if (word == "head") {
            l.kind = LayerKind::Head;
            if (!(ls >> l.c_in >> l.c_out)) throw fail("bad head line");
        } else {
            throw fail("unknown layer kind '" + word + "'");
        }
        spec.layers.push_back(l);
    }
    if (!have_input || !have_end) throw fail("truncated descriptor");
    trace_shapes(spec);
    return spec;
}

} // namespace ppgtcn
