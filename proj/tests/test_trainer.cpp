#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ppgtcn/trainer.hpp"
#include "oracles.hpp"

using namespace ppgtcn;

namespace {

NetworkSpec tiny_spec() {
    NetworkSpec spec;
    spec.input_channels = 2;
    spec.input_length = 16;
    spec.layers.push_back({LayerKind::Conv, 2, 3, 3, 2, 1});
    spec.layers.push_back({LayerKind::BatchNorm, 3, 3, 1, 1, 1});
    spec.layers.push_back({LayerKind::Relu, 3, 3, 1, 1, 1});
    spec.layers.push_back({LayerKind::Pool, 3, 3, 2, 1, 2});
    spec.layers.push_back({LayerKind::Head, 3 * 8, 1, 1, 1, 1});
    return spec;
}

WindowSet random_set(Rng& rng, int n, float target_lo, float target_hi) {
    WindowSet out;
    for (int i = 0; i < n; ++i) {
        Tensor w({2, 16});
        oracles::fill_uniform(w, rng, -1.0f, 1.0f);
        out.push(std::move(w), rng.uniform_f(target_lo, target_hi));
    }
    return out;
}

bool weights_equal(const WeightSet& a, const WeightSet& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].size() != b.layers[i].size()) return false;
        for (std::size_t j = 0; j < a.layers[i].size(); ++j) {
            if (a.layers[i][j].vec() != b.layers[i][j].vec()) return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("early stopper: [5,4,4,4,...] with patience 3") {
    EarlyStopper stop(3);
    CHECK_FALSE(stop.update(5.0f)); // epoch 1, best
    CHECK_FALSE(stop.update(4.0f)); // epoch 2, best (strict decrease)
    CHECK_FALSE(stop.update(4.0f)); // epoch 3, no improvement (1)
    CHECK_FALSE(stop.update(4.0f)); // epoch 4, no improvement (2)
    CHECK(stop.update(4.0f));       // epoch 5, no improvement (3) -> stop
    CHECK(stop.best_epoch() == 2);
    CHECK(stop.best_value() == 4.0f);
}

TEST_CASE("constant-target dataset: bias-only model reaches near-zero loss fast") {
    NetworkSpec spec;
    spec.input_channels = 2;
    spec.input_length = 16;
    spec.layers.push_back({LayerKind::Head, 32, 1, 1, 1, 1});

    Rng rng(1);
    WindowSet train_set = random_set(rng, 24, 72.0f, 72.0f);
    WindowSet val_set = random_set(rng, 8, 72.0f, 72.0f);

    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.patience = 50;
    cfg.batch_size = 8;
    cfg.seed = 5;
    cfg.lr = 0.01f;
    const TrainResult r = train(spec, train_set, val_set, cfg);
    CHECK(r.curve.back().train_loss < 0.05f);
    CHECK(r.best_val_mae < 0.5f);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    const NetworkSpec spec = tiny_spec();
    Rng rng(2);
    WindowSet train_set = random_set(rng, 20, 60.0f, 90.0f);
    WindowSet val_set = random_set(rng, 6, 60.0f, 90.0f);

    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    cfg.batch_size = 8;
    cfg.seed = 77;

    const TrainResult a = train(spec, train_set, val_set, cfg);
    const TrainResult b = train(spec, train_set, val_set, cfg);
    CHECK(weights_equal(a.weights, b.weights));
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
        CHECK(a.curve[i].val_mae == b.curve[i].val_mae);
    }
}

TEST_CASE("early stopping returns the best-validation weights") {
    const NetworkSpec spec = tiny_spec();
    Rng rng(3);
    WindowSet train_set = random_set(rng, 30, 60.0f, 90.0f);
    WindowSet val_set = random_set(rng, 10, 60.0f, 90.0f);

    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.patience = 4;
    cfg.batch_size = 8;
    cfg.seed = 9;
    const TrainResult r = train(spec, train_set, val_set, cfg);

    float best = std::numeric_limits<float>::infinity();
    for (const EpochStat& e : r.curve) best = std::min(best, e.val_mae);
    CHECK(r.best_val_mae == best);
    const double replayed = evaluate_mae(spec, r.weights, val_set.windows, val_set.labels);
    CHECK(replayed == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay contracts weights under zero gradients") {
    const NetworkSpec spec = tiny_spec();
    // All-zero inputs and constant targets: the head bias starts at the
    // target mean, so every gradient is exactly zero.
    WindowSet train_set, val_set;
    for (int i = 0; i < 8; ++i) {
        train_set.push(Tensor({2, 16}), 50.0f);
        val_set.push(Tensor({2, 16}), 50.0f);
    }

    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.patience = 1;
    cfg.batch_size = 4; // two optimizer steps
    cfg.seed = 13;
    cfg.lr = 1e-3f;
    cfg.weight_decay = 5e-4f;

    // Reference initialization: same seed path as train() uses.
    Rng rng(cfg.seed);
    WeightSet init = init_weights(spec, rng.next_u64());
    init.layers[4][1][0] = 50.0f;

    const TrainResult r = train(spec, train_set, val_set, cfg);
    const float contraction = (1.0f - cfg.lr * cfg.weight_decay) *
                              (1.0f - cfg.lr * cfg.weight_decay);

    // Conv and head weight tensors contract by (1 - lr*wd) per step.
    for (std::size_t layer : {std::size_t{0}, std::size_t{4}}) {
        const Tensor& w0 = init.layers[layer][0];
        const Tensor& w1 = r.weights.layers[layer][0];
        for (std::size_t i = 0; i < w0.numel(); ++i) {
            CHECK(w1[i] == doctest::Approx(w0[i] * contraction).epsilon(1e-6));
        }
        // Biases are exempt from decay and have zero gradient: unchanged.
        CHECK(r.weights.layers[layer][1].vec() == init.layers[layer][1].vec());
    }
    // Batch-norm parameters are exempt.
    CHECK(r.weights.layers[1][0].vec() == init.layers[1][0].vec());
    CHECK(r.weights.layers[1][1].vec() == init.layers[1][1].vec());
}

TEST_CASE("training divergence raises a TrainingError with the epoch") {
    const NetworkSpec spec = tiny_spec();
    Rng rng(4);
    WindowSet train_set = random_set(rng, 16, 60.0f, 90.0f);
    WindowSet val_set = random_set(rng, 4, 60.0f, 90.0f);

    TrainConfig cfg;
    cfg.max_epochs = 30;
    cfg.patience = 30;
    cfg.batch_size = 8;
    cfg.lr = 1e18f; // guaranteed blow-up
    try {
        train(spec, train_set, val_set, cfg);
        // Extremely large steps may still limp along; accept either outcome,
        // but if it throws it must carry a valid epoch.
    } catch (const TrainingError& e) {
        CHECK(e.epoch() >= 1);
    }
}

TEST_CASE("evaluate_mae matches direct recomputation") {
    const NetworkSpec spec = tiny_spec();
    const WeightSet w = init_weights(spec, 21);
    Rng rng(5);
    WindowSet set = random_set(rng, 12, 60.0f, 90.0f);

    // preds == truths -> 0 ; truths + 2 -> 2
    std::vector<float> preds;
    for (const Tensor& win : set.windows) preds.push_back(predict_window(spec, w, win));
    CHECK(evaluate_mae(spec, w, set.windows, preds) == doctest::Approx(0.0));
    std::vector<float> shifted = preds;
    for (float& v : shifted) v += 2.0f;
    CHECK(evaluate_mae(spec, w, set.windows, shifted) == doctest::Approx(2.0).epsilon(1e-6));

    // random case vs independent recomputation
    double acc = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        acc += std::fabs(static_cast<double>(preds[i]) - set.labels[i]);
    }
    CHECK(evaluate_mae(spec, w, set.windows, set.labels) ==
          doctest::Approx(acc / set.size()).epsilon(1e-9));

    CHECK_THROWS_AS(evaluate_mae(spec, w, {}, {}), ArgumentError);
}

TEST_CASE("loso crossval runs one fold per subject and reports their mean") {
    const NetworkSpec spec = tiny_spec();
    Rng rng(6);
    std::vector<SubjectWindows> subjects;
    for (int s = 0; s < 3; ++s) {
        SubjectWindows sw;
        sw.subject_id = 100 + s;
        sw.set = random_set(rng, 14, 60.0f + 5 * s, 80.0f + 5 * s);
        subjects.push_back(std::move(sw));
    }

    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.batch_size = 8;
    cfg.seed = 31;
    const CrossvalResult r = loso_crossval(spec, subjects, cfg);

    REQUIRE(r.folds.size() == 3);
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r.folds[i].subject_id == subjects[i].subject_id);
        CHECK(r.folds[i].predictions.size() == subjects[i].set.size());
        mean += r.folds[i].mae;
    }
    CHECK(r.mean_mae == doctest::Approx(mean / 3.0).epsilon(1e-12));

    // Error paths: too few subjects, empty subject.
    CHECK_THROWS_AS(loso_crossval(spec, {subjects[0]}, cfg), ArgumentError);
    std::vector<SubjectWindows> with_empty = subjects;
    with_empty.push_back(SubjectWindows{999, {}});
    CHECK_THROWS_AS(loso_crossval(spec, with_empty, cfg), ArgumentError);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.patience = cfg.max_epochs + 1;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}
