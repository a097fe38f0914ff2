#include "ppgtcn/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace ppgtcn {

WindowSet make_windows(const Streams& streams) {
    const std::size_t n = streams.ppg.size();
    for (const auto& a : streams.accel) {
        if (a.size() != n) throw ArgumentError("make_windows: accel stream length mismatch");
    }
    if (streams.hr.size() != n) throw ArgumentError("make_windows: hr stream length mismatch");
    if (n < kWindowSamples) {
        throw ArgumentError("make_windows: stream of " + std::to_string(n) +
                            " samples is shorter than one window (" +
                            std::to_string(kWindowSamples) + ")");
    }

    WindowSet out;
    const std::size_t count = (n - kWindowSamples) / kWindowHop + 1;
    for (std::size_t wi = 0; wi < count; ++wi) {
        const std::size_t start = wi * kWindowHop;
        Tensor w({kInputChannels, kWindowSamples});
        double label = 0.0;
        for (int t = 0; t < kWindowSamples; ++t) {
            w.at2(0, t) = streams.ppg[start + t];
            w.at2(1, t) = streams.accel[0][start + t];
            w.at2(2, t) = streams.accel[1][start + t];
            w.at2(3, t) = streams.accel[2][start + t];
            label += streams.hr[start + t];
        }
        out.push(std::move(w), static_cast<float>(label / kWindowSamples));
    }
    return out;
}

NormStats compute_norm_stats(const WindowSet& training_windows) {
    if (training_windows.empty()) throw ArgumentError("compute_norm_stats: empty window set");
    NormStats stats;
    for (int c = 0; c < kInputChannels; ++c) {
        double sum = 0.0, sq = 0.0;
        std::size_t count = 0;
        for (const Tensor& w : training_windows.windows) {
            const int t_len = w.dim(1);
            for (int t = 0; t < t_len; ++t) {
                const double v = w.at2(c, t);
                sum += v;
                sq += v * v;
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
        stats.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean);
        stats.stdev[static_cast<std::size_t>(c)] =
            static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return stats;
}

Tensor normalize_window(const Tensor& window, const NormStats& stats) {
    if (window.rank() != 2 || window.dim(0) != kInputChannels) {
        throw DimensionError("normalize_window: expected [4,T], got " + window.shape_string());
    }
    Tensor out(window.shape());
    const int t_len = window.dim(1);
    for (int c = 0; c < kInputChannels; ++c) {
        const float inv = 1.0f / stats.stdev[static_cast<std::size_t>(c)];
        const float mu = stats.mean[static_cast<std::size_t>(c)];
        for (int t = 0; t < t_len; ++t) out.at2(c, t) = (window.at2(c, t) - mu) * inv;
    }
    return out;
}

void apply_norm(WindowSet& windows, const NormStats& stats) {
    for (Tensor& w : windows.windows) w = normalize_window(w, stats);
}

HRPostProcessor::HRPostProcessor(int history, float fraction)
    : capacity_(history), fraction_(fraction) {
    if (history < 1) throw ArgumentError("post-processor history must hold >= 1 value");
    if (!(fraction >= 0.0f)) throw ArgumentError("post-processor fraction must be >= 0");
}

float HRPostProcessor::history_mean() const {
    double acc = 0.0;
    for (float v : history_) acc += v;
    return history_.empty() ? 0.0f : static_cast<float>(acc / history_.size());
}

float HRPostProcessor::process(float raw_bpm) {
    if (!std::isfinite(raw_bpm)) throw ArgumentError("postprocess: prediction must be finite");
    float out = raw_bpm;
    if (!history_.empty()) {
        const float m = history_mean();
        const float band = fraction_ * m;
        const float delta = raw_bpm - m;
        if (std::fabs(delta) > band) {
            out = m + std::copysign(band, delta);
        }
    }
    history_.push_back(out);
    if (static_cast<int>(history_.size()) > capacity_) history_.pop_front();
    return out;
}

TrainConfig finetune_defaults() {
    TrainConfig cfg;
    cfg.lr = 1e-4f;
    cfg.max_epochs = 50;
    cfg.patience = 10;
    return cfg;
}

std::vector<bool> first_block_mask(const NetworkSpec& spec) {
    std::vector<bool> mask(spec.layers.size(), false);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        mask[i] = true;
        if (spec.layers[i].kind == LayerKind::Pool) break;
    }
    return mask;
}

FinetuneResult finetune(const NetworkSpec& spec, const WeightSet& weights,
                        const WindowSet& subject_windows, const TrainConfig& cfg) {
    const std::size_t n = subject_windows.size();
    if (n < 8) {
        throw ArgumentError("finetune: subject has " + std::to_string(n) +
                            " windows, need at least 8");
    }
    const int split = static_cast<int>(std::lround(0.25 * static_cast<double>(n)));

    WindowSet head, tail;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i) < split) {
            head.push(subject_windows.windows[i], subject_windows.labels[i]);
        } else {
            tail.push(subject_windows.windows[i], subject_windows.labels[i]);
        }
    }

    TrainOptions opts;
    opts.init = &weights;
    opts.frozen_layers = first_block_mask(spec);
    // Small-data protocol: early stopping watches the adaptation split itself.
    const TrainResult tr = train(spec, head, head, cfg, opts);

    FinetuneResult out;
    out.weights = tr.weights;
    out.split_index = split;
    out.holdout_mae = evaluate_mae(spec, out.weights, tail.windows, tail.labels);
    return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot open trace csv: " + path);
    out << "subject,window,raw_bpm,post_bpm,truth_bpm\n";
    char line[128];
    for (const TraceRow& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%d,%.4f,%.4f,%.4f\n", r.subject_id, r.window_index,
                      r.raw_bpm, r.post_bpm, r.truth_bpm);
        out << line;
    }
}

} // namespace ppgtcn
