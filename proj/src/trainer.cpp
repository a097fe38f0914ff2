#include "ppgtcn/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "ppgtcn/rng.hpp"

namespace ppgtcn {

namespace {

bool is_trained(LayerKind k) {
    return k == LayerKind::Conv || k == LayerKind::BatchNorm || k == LayerKind::Linear ||
           k == LayerKind::Head;
}

// Decoupled weight decay applies to weight matrices only.
bool decays(LayerKind k, std::size_t param_index) {
    return (k == LayerKind::Conv || k == LayerKind::Linear || k == LayerKind::Head) &&
           param_index == 0;
}

struct AdamState {
    std::vector<std::vector<Tensor>> m, v;
    long step = 0;

    explicit AdamState(const NetworkSpec& spec, const WeightSet& w) {
        m.resize(w.layers.size());
        v.resize(w.layers.size());
        for (std::size_t i = 0; i < w.layers.size(); ++i) {
            if (!is_trained(spec.layers[i].kind)) continue;
            for (std::size_t j = 0; j < 2; ++j) {
                m[i].emplace_back(w.layers[i][j].shape());
                v[i].emplace_back(w.layers[i][j].shape());
            }
        }
    }
};

constexpr float kBeta1 = 0.9f;
constexpr float kBeta2 = 0.999f;
constexpr float kAdamEps = 1e-8f;

void adam_step(const NetworkSpec& spec, WeightSet& w, const WeightGrads& grads, AdamState& st,
               const TrainConfig& cfg, const std::vector<bool>& frozen) {
    ++st.step;
    const float bc1 = 1.0f - std::pow(kBeta1, static_cast<float>(st.step));
    const float bc2 = 1.0f - std::pow(kBeta2, static_cast<float>(st.step));
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        if (!is_trained(spec.layers[i].kind)) continue;
        if (!frozen.empty() && frozen[i]) continue;
        for (std::size_t j = 0; j < 2; ++j) {
            Tensor& p = w.layers[i][j];
            const Tensor& g = grads[i][j];
            Tensor& m = st.m[i][j];
            Tensor& v = st.v[i][j];
            const bool decay = decays(spec.layers[i].kind, j);
            for (std::size_t n = 0; n < p.numel(); ++n) {
                m[n] = kBeta1 * m[n] + (1.0f - kBeta1) * g[n];
                v[n] = kBeta2 * v[n] + (1.0f - kBeta2) * g[n] * g[n];
                const float mhat = m[n] / bc1;
                const float vhat = v[n] / bc2;
                p[n] -= cfg.lr * mhat / (std::sqrt(vhat) + kAdamEps);
                if (decay) p[n] -= cfg.lr * cfg.weight_decay * p[n];
            }
        }
    }
}

WeightGrads extract_grads(const NetworkSpec& spec, GradTape& tape, const TapeForward& fwd) {
    WeightGrads grads(fwd.param_ids.size());
    for (std::size_t i = 0; i < fwd.param_ids.size(); ++i) {
        if (!is_trained(spec.layers[i].kind)) continue;
        for (int id : fwd.param_ids[i]) grads[i].push_back(tape.grad(id));
    }
    return grads;
}

int find_head(const NetworkSpec& spec) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Head) return static_cast<int>(i);
    }
    return -1;
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0) || !(weight_decay >= 0) || batch_size < 1 || max_epochs < 1 || patience < 1) {
        throw ArgumentError("train config fields must be positive");
    }
    if (patience > max_epochs) {
        throw ArgumentError("patience must not exceed max_epochs");
    }
}

TrainResult train(const NetworkSpec& spec, const WindowSet& train_set, const WindowSet& val_set,
                  const TrainConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    if (train_set.empty()) throw ArgumentError("train: empty training set");
    if (val_set.empty()) throw ArgumentError("train: empty validation set");
    if (train_set.windows.size() != train_set.labels.size()) {
        throw DimensionError("train: window/label count mismatch");
    }
    if (!options.frozen_layers.empty() && options.frozen_layers.size() != spec.layers.size()) {
        throw DimensionError("train: freeze mask length does not match layer count");
    }

    Rng rng(cfg.seed);
    WeightSet weights;
    if (options.init) {
        weights = *options.init;
        check_weights(spec, weights);
    } else {
        weights = init_weights(spec, rng.next_u64());
        // Start the regression head at the mean target so the first epochs
        // fit structure instead of crawling the output bias into range.
        const int head = find_head(spec);
        if (head >= 0) {
            double mean = 0.0;
            for (float y : train_set.labels) mean += y;
            weights.layers[head][1][0] = static_cast<float>(mean / train_set.labels.size());
        }
    }

    AdamState adam(spec, weights);
    EarlyStopper stopper(cfg.patience);
    TrainResult result;
    result.weights = weights;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            Tensor x = stack_windows(train_set.windows, batch);
            Tensor y({static_cast<int>(batch.size())});
            for (std::size_t i = 0; i < batch.size(); ++i) {
                y[i] = train_set.labels[static_cast<std::size_t>(batch[i])];
            }

            GradTape tape;
            const std::vector<bool>* frozen =
                options.frozen_layers.empty() ? nullptr : &options.frozen_layers;
            const TapeForward fwd = forward_tape(spec, weights, tape, x, Mode::Train, frozen);
            const int loss_id = ops::logcosh_loss(tape, fwd.pred, y);
            tape.backward(loss_id);

            WeightGrads grads = extract_grads(spec, tape, fwd);
            double penalty_value = 0.0;
            if (options.penalty) penalty_value = options.penalty(spec, weights, grads);

            const float data_loss = tape.value(loss_id)[0];
            if (!std::isfinite(data_loss)) {
                throw TrainingError("training diverged (non-finite loss)", epoch);
            }
            epoch_loss += (data_loss + penalty_value) * static_cast<double>(batch.size());
            seen += batch.size();

            adam_step(spec, weights, grads, adam, cfg, options.frozen_layers);
        }

        const double val_mae = evaluate_mae(spec, weights, val_set.windows, val_set.labels);
        result.curve.push_back(
            {epoch, static_cast<float>(epoch_loss / seen), static_cast<float>(val_mae)});

        const bool stop = stopper.update(static_cast<float>(val_mae));
        if (stopper.best_epoch() == epoch) result.weights = weights;
        if (stop) break;
    }

    result.best_epoch = stopper.best_epoch();
    result.best_val_mae = stopper.best_value();
    return result;
}

double evaluate_mae(const NetworkSpec& spec, const WeightSet& weights,
                    const std::vector<Tensor>& windows, const std::vector<float>& truths) {
    if (windows.empty()) throw ArgumentError("evaluate_mae: empty window set");
    if (windows.size() != truths.size()) {
        throw DimensionError("evaluate_mae: window/truth count mismatch");
    }
    constexpr std::size_t kChunk = 256;
    double acc = 0.0;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        const std::size_t end = std::min(windows.size(), start + kChunk);
        std::vector<int> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(start + i);
        const Tensor x = stack_windows(windows, idx);
        const std::vector<float> preds = forward_infer(spec, weights, x);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            acc += std::fabs(static_cast<double>(preds[i]) - truths[start + i]);
        }
    }
    return acc / static_cast<double>(windows.size());
}

CrossvalResult loso_crossval(const NetworkSpec& spec, const std::vector<SubjectWindows>& subjects,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (subjects.size() < 2) throw ArgumentError("loso_crossval: need at least 2 subjects");
    for (const auto& s : subjects) {
        if (s.set.empty()) {
            throw ArgumentError("loso_crossval: subject " + std::to_string(s.subject_id) +
                                " has zero windows");
        }
    }

    CrossvalResult result;
    result.folds.resize(subjects.size());

    auto run_fold = [&](std::size_t test_idx) {
        Rng fold_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (test_idx + 1)));
        // Pick the early-stopping validation subject among the others.
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            if (i != test_idx) others.push_back(i);
        }
        const std::size_t val_idx = others[fold_rng.index(others.size())];

        WindowSet train_pool;
        for (std::size_t i : others) {
            if (i == val_idx && others.size() > 1) continue;
            train_pool.append(subjects[i].set);
        }

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = fold_rng.next_u64();
        const TrainResult tr = train(spec, train_pool, subjects[val_idx].set, fold_cfg);

        FoldResult fold;
        fold.subject_id = subjects[test_idx].subject_id;
        const auto& test = subjects[test_idx].set;
        constexpr std::size_t kChunk = 256;
        for (std::size_t start = 0; start < test.size(); start += kChunk) {
            const std::size_t end = std::min(test.size(), start + kChunk);
            std::vector<int> idx(end - start);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(start + i);
            const auto preds = forward_infer(spec, tr.weights, stack_windows(test.windows, idx));
            fold.predictions.insert(fold.predictions.end(), preds.begin(), preds.end());
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            acc += std::fabs(static_cast<double>(fold.predictions[i]) - test.labels[i]);
        }
        fold.mae = acc / static_cast<double>(test.size());
        result.folds[test_idx] = std::move(fold);
    };

    const unsigned workers =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                           static_cast<unsigned>(subjects.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < subjects.size(); ++i) run_fold(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= subjects.size()) return;
                    try {
                        run_fold(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    double mean = 0.0;
    for (const auto& f : result.folds) mean += f.mae;
    result.mean_mae = mean / static_cast<double>(result.folds.size());
    return result;
}

void write_training_curve_csv(const std::string& path, const std::vector<EpochStat>& curve) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot open curve file: " + path);
    out << "epoch,train_loss,val_mae\n";
    char line[96];
    for (const EpochStat& e : curve) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f\n", e.epoch, e.train_loss, e.val_mae);
        out << line;
    }
}

} // namespace ppgtcn
