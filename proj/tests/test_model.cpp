#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ppgtcn/kernels.hpp"
#include "ppgtcn/model.hpp"
#include "oracles.hpp"

using namespace ppgtcn;

namespace {

/// Random valid chain topology for counter fuzzing.
NetworkSpec random_spec(Rng& rng) {
    NetworkSpec spec;
    spec.input_channels = 1 + static_cast<int>(rng.index(4));
    spec.input_length = 24 + static_cast<int>(rng.index(48));

    int c = spec.input_channels;
    int t = spec.input_length;
    const int blocks = 1 + static_cast<int>(rng.index(3));
    for (int b = 0; b < blocks; ++b) {
        const int c_out = 1 + static_cast<int>(rng.index(6));
        const int k = 1 + static_cast<int>(rng.index(5));
        const int d = 1 + static_cast<int>(rng.index(4));
        const int s = 1 + static_cast<int>(rng.index(2));
        spec.layers.push_back({LayerKind::Conv, c, c_out, k, d, s});
        c = c_out;
        t = kernels::conv_out_len(t, s);
        if (rng.uniform() < 0.7) {
            spec.layers.push_back({LayerKind::BatchNorm, c, c, 1, 1, 1});
        }
        if (rng.uniform() < 0.7) {
            spec.layers.push_back({LayerKind::Relu, c, c, 1, 1, 1});
        }
        if (t >= 4 && rng.uniform() < 0.5) {
            spec.layers.push_back({LayerKind::Pool, c, c, 2, 1, 2});
            t = (t - 2) / 2 + 1;
        }
    }
    int features = c * t;
    const int linears = static_cast<int>(rng.index(3));
    for (int i = 0; i < linears; ++i) {
        const int out = 1 + static_cast<int>(rng.index(10));
        spec.layers.push_back({LayerKind::Linear, features, out, 1, 1, 1});
        features = out;
    }
    spec.layers.push_back({LayerKind::Head, features, 1, 1, 1, 1});
    return spec;
}

/// Enumeration oracle: instantiate every trained tensor and add up elements.
std::int64_t count_params_oracle(const NetworkSpec& spec) {
    const WeightSet w = init_weights(spec, 1234);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerKind kind = spec.layers[i].kind;
        if (kind == LayerKind::Conv || kind == LayerKind::Linear || kind == LayerKind::Head) {
            n += static_cast<std::int64_t>(w.layers[i][0].numel());
            n += static_cast<std::int64_t>(w.layers[i][1].numel());
        } else if (kind == LayerKind::BatchNorm) {
            n += static_cast<std::int64_t>(w.layers[i][0].numel()); // gamma
            n += static_cast<std::int64_t>(w.layers[i][1].numel()); // beta
        }
    }
    return n;
}

/// Enumeration oracle for MACs: run a dummy input through the tape and read
/// the actual activation shapes at every conv/linear.
std::int64_t count_macs_oracle(const NetworkSpec& spec) {
    WeightSet w = init_weights(spec, 99);
    GradTape tape;
    Tensor x({1, spec.input_channels, spec.input_length});
    const TapeForward fwd = forward_tape(spec, w, tape, x, Mode::Infer);
    std::int64_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::Conv) {
            const Tensor& out = tape.value(fwd.layer_out[i]);
            n += static_cast<std::int64_t>(l.c_out) * l.c_in * l.k * out.dim(2);
        } else if (l.kind == LayerKind::Linear || l.kind == LayerKind::Head) {
            n += static_cast<std::int64_t>(l.c_in) * l.c_out;
        }
    }
    return n;
}

} // namespace

TEST_CASE("seed network has the published block structure") {
    const NetworkSpec seed = build_seed();
    CHECK(seed.input_channels == 4);
    CHECK(seed.input_length == 256);

    // Block output channels 32/64/128, three convs per block.
    std::vector<int> block_channels;
    for (std::size_t i = 0; i < seed.layers.size(); ++i) {
        if (seed.layers[i].kind == LayerKind::Pool) {
            block_channels.push_back(seed.layers[i].c_in);
        }
    }
    CHECK(block_channels == std::vector<int>{32, 64, 128});

    // The classifier holds the bulk of the parameters (three linear layers).
    std::int64_t classifier = 0;
    int linear_count = 0;
    for (const LayerSpec& l : seed.layers) {
        if (l.kind == LayerKind::Linear || l.kind == LayerKind::Head) {
            classifier += static_cast<std::int64_t>(l.c_in) * l.c_out + l.c_out;
            ++linear_count;
        }
    }
    CHECK(linear_count == 3);
    CHECK(classifier > 100000);

    // Single regression neuron at the end.
    CHECK(seed.layers.back().kind == LayerKind::Head);
    CHECK(seed.layers.back().c_out == 1);

    // Width scaling shrinks every conv.
    const NetworkSpec small = build_seed(0.25);
    std::vector<int> small_channels;
    for (const LayerSpec& l : small.layers) {
        if (l.kind == LayerKind::Pool) small_channels.push_back(l.c_in);
    }
    CHECK(small_channels == std::vector<int>{8, 16, 32});
}

TEST_CASE("forward with zero weights and biases is exactly zero") {
    const NetworkSpec spec = build_seed(0.125);
    WeightSet w = init_weights(spec, 1);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerKind kind = spec.layers[i].kind;
        if (kind == LayerKind::Conv || kind == LayerKind::Linear || kind == LayerKind::Head) {
            for (auto& v : w.layers[i][0].vec()) v = 0.0f;
            for (auto& v : w.layers[i][1].vec()) v = 0.0f;
        }
    }
    Rng rng(2);
    Tensor x({2, 4, 256});
    oracles::fill_uniform(x, rng, -1.0f, 1.0f);
    for (float p : forward_infer(spec, w, x)) CHECK(p == 0.0f);
}

TEST_CASE("infer mode forward is bit-exactly repeatable") {
    const NetworkSpec spec = build_seed(0.125);
    const WeightSet w = init_weights(spec, 3);
    Rng rng(4);
    Tensor x({3, 4, 256});
    oracles::fill_uniform(x, rng, -1.0f, 1.0f);
    const auto a = forward_infer(spec, w, x);
    const auto b = forward_infer(spec, w, x);
    CHECK(a == b);
}

TEST_CASE("forward is invariant to batch composition in infer mode") {
    const NetworkSpec spec = build_seed(0.125);
    const WeightSet w = init_weights(spec, 5);
    Rng rng(6);
    Tensor batch({4, 4, 256});
    oracles::fill_uniform(batch, rng, -1.0f, 1.0f);
    const auto together = forward_infer(spec, w, batch);
    for (int i = 0; i < 4; ++i) {
        Tensor one({1, 4, 256});
        std::copy(batch.data() + i * 4 * 256, batch.data() + (i + 1) * 4 * 256, one.data());
        CHECK(forward_infer(spec, w, one)[0] == together[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("forward matches a manual layer-by-layer composition on a toy spec") {
    // conv -> head, composed by hand from the raw kernels.
    NetworkSpec spec;
    spec.input_channels = 2;
    spec.input_length = 8;
    spec.layers.push_back({LayerKind::Conv, 2, 3, 3, 2, 1});
    spec.layers.push_back({LayerKind::Head, 3 * 8, 1, 1, 1, 1});
    WeightSet w = init_weights(spec, 7);

    Rng rng(8);
    Tensor x({1, 2, 8});
    oracles::fill_uniform(x, rng, -1.0f, 1.0f);

    const float got = predict_window(spec, w, Tensor({2, 8}, x.vec()));

    kernels::Conv1dShape s{2, 3, 3, 2, 1, 8, 8};
    std::vector<float> conv_out(3 * 8);
    kernels::active().conv1d_fwd(s, x.data(), w.layers[0][0].data(), w.layers[0][1].data(),
                                 conv_out.data());
    std::vector<float> pred(1);
    kernels::active().linear_fwd(24, 1, conv_out.data(), w.layers[1][0].data(),
                                 w.layers[1][1].data(), pred.data());
    CHECK(got == pred[0]);
}

TEST_CASE("count_params closed form on a single conv") {
    NetworkSpec spec;
    spec.input_channels = 1;
    spec.input_length = 4;
    spec.layers.push_back({LayerKind::Conv, 1, 1, 2, 1, 1});
    CHECK(count_params(spec) == 3); // 2 weights + bias
    CHECK(count_macs(spec) == 8);   // c_out*c_in*K*T_out = 1*1*2*4
}

TEST_CASE("counters equal exhaustive enumeration on random specs") {
    Rng rng(2024);
    for (int i = 0; i < 50; ++i) {
        const NetworkSpec spec = random_spec(rng);
        CHECK(count_params(spec) == count_params_oracle(spec));
        CHECK(count_macs(spec) == count_macs_oracle(spec));
    }
}

TEST_CASE("removing one conv channel frees the closed-form parameter count") {
    const NetworkSpec spec = build_seed(0.25);
    // First conv of block 2: it has a batch norm and a conv consumer.
    int idx = -1;
    int seen = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Conv && ++seen == 4) {
            idx = static_cast<int>(i);
            break;
        }
    }
    REQUIRE(idx >= 0);

    NetworkSpec smaller = spec;
    smaller.layers[static_cast<std::size_t>(idx)].c_out -= 1;
    int consumer_k = 0, consumer_cout = 0;
    for (std::size_t i = static_cast<std::size_t>(idx) + 1; i < smaller.layers.size(); ++i) {
        LayerSpec& l = smaller.layers[i];
        if (l.kind == LayerKind::BatchNorm || l.kind == LayerKind::Relu ||
            l.kind == LayerKind::Pool) {
            l.c_in -= 1;
            l.c_out -= 1;
            continue;
        }
        REQUIRE(l.kind == LayerKind::Conv);
        consumer_k = l.k;
        consumer_cout = l.c_out;
        l.c_in -= 1;
        break;
    }

    const LayerSpec& pruned = spec.layers[static_cast<std::size_t>(idx)];
    const std::int64_t expected_delta = static_cast<std::int64_t>(pruned.c_in) * pruned.k + 1 +
                                        static_cast<std::int64_t>(consumer_k) * consumer_cout + 2;
    CHECK(count_params(spec) - count_params(smaller) == expected_delta);
}

TEST_CASE("count_params equals instantiated element count on random specs") {
    Rng rng(31337);
    for (int i = 0; i < 20; ++i) {
        const NetworkSpec spec = random_spec(rng);
        CHECK(count_params(spec) == count_params_oracle(spec));
    }
}

TEST_CASE("topology text round-trips and rejects junk") {
    const NetworkSpec seed = build_seed(0.5);
    const std::string text = topology_to_text(seed);
    const NetworkSpec parsed = topology_from_text(text);
    CHECK(parsed == seed);

    CHECK_THROWS_AS(topology_from_text("bogus"), ArgumentError);
    CHECK_THROWS_AS(topology_from_text("ppgtcn-topology v1\ninput 4 256\n"), ArgumentError);
    CHECK_THROWS_AS(topology_from_text("ppgtcn-topology v1\ninput 4 256\nwarp 2\nend\n"),
                    ArgumentError);
}

TEST_CASE("weight/spec mismatch raises a dimension error") {
    const NetworkSpec spec = build_seed(0.125);
    WeightSet w = init_weights(spec, 1);
    w.layers[0][0] = Tensor({3, 3, 3});
    Tensor x({1, 4, 256});
    CHECK_THROWS_AS(forward_infer(spec, w, x), DimensionError);
}
