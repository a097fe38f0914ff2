#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ppgtcn/data.hpp"
#include "ppgtcn/model.hpp"

namespace ppgtcn {

struct TrainConfig {
    float lr = 1e-3f;
    float weight_decay = 5e-4f;
    int batch_size = 128;
    int max_epochs = 500;
    int patience = 20;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochStat {
    int epoch = 0; // 1-indexed
    float train_loss = 0.0f;
    float val_mae = 0.0f;
};

struct TrainResult {
    WeightSet weights; // weights of the best validation epoch
    std::vector<EpochStat> curve;
    int best_epoch = 0;
    float best_val_mae = 0.0f;
};

/// Per-layer gradient tensors, aligned with the trained parameters of each
/// layer (conv/linear: {gW, gb}; batchnorm: {ggamma, gbeta}; others empty).
using WeightGrads = std::vector<std::vector<Tensor>>;

/// Returns the penalty value and accumulates its (sub)gradient into grads.
using PenaltyFn =
    std::function<double(const NetworkSpec&, const WeightSet&, WeightGrads&)>;

struct TrainOptions {
    const WeightSet* init = nullptr; // fresh seeded init when null
    std::vector<bool> frozen_layers; // per-layer freeze mask (empty = none)
    PenaltyFn penalty;               // optional sparsifying regularizer
};

/// Consecutive-non-improvement early stopping (strict decrease counts as
/// improvement). update() returns true when training should stop.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    bool update(float val) {
        ++epoch_;
        if (val < best_) {
            best_ = val;
            best_epoch_ = epoch_;
            since_best_ = 0;
            return false;
        }
        ++since_best_;
        return since_best_ >= patience_;
    }

    int best_epoch() const noexcept { return best_epoch_; }
    float best_value() const noexcept { return best_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    float best_ = std::numeric_limits<float>::infinity();
};

/// Adam with decoupled weight decay (conv/linear weight tensors only; biases
/// and batch-norm parameters are exempt). LogCosh data loss. Stops when the
/// validation MAE has not strictly improved for `patience` epochs and returns
/// the best epoch's weights.
TrainResult train(const NetworkSpec& spec, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const TrainOptions& options = {});

/// Mean absolute deviation in BPM over a window set.
double evaluate_mae(const NetworkSpec& spec, const WeightSet& weights,
                    const std::vector<Tensor>& windows, const std::vector<float>& truths);

struct FoldResult {
    int subject_id = 0;
    std::vector<float> predictions;
    double mae = 0.0;
};

struct CrossvalResult {
    std::vector<FoldResult> folds;
    double mean_mae = 0.0;
};

/// Leave-one-subject-out: for each subject, train on all others (one of them
/// held out as the early-stopping validation subject, seeded choice) and test
/// on the held-out subject. Folds run in parallel; results are ordered by
/// input position regardless of scheduling.
CrossvalResult loso_crossval(const NetworkSpec& spec, const std::vector<SubjectWindows>& subjects,
                             const TrainConfig& cfg);

void write_training_curve_csv(const std::string& path, const std::vector<EpochStat>& curve);

} // namespace ppgtcn
