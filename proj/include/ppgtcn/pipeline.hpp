#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <vector>

#include "ppgtcn/data.hpp"
#include "ppgtcn/trainer.hpp"

namespace ppgtcn {

inline constexpr int kSampleRateHz = 32;
inline constexpr int kWindowSamples = 256; // 8 s at 32 Hz
inline constexpr int kWindowHop = 64;      // 75% overlap -> 2 s hop
inline constexpr int kInputChannels = 4;   // 0 = PPG, 1..3 = accelerometer

/// Raw per-subject sensor streams at 32 Hz, equal lengths.
struct Streams {
    std::vector<float> ppg;
    std::array<std::vector<float>, 3> accel;
    std::vector<float> hr; // ground truth BPM per sample

    std::size_t length() const noexcept { return ppg.size(); }
};

/// Slices the streams into [4 x 256] windows with hop 64; the label is the
/// mean ground-truth HR inside the window. No normalization is applied here.
WindowSet make_windows(const Streams& streams);

/// Per-channel z-score statistics, computed on the training split only and
/// stored in the checkpoint.
struct NormStats {
    std::array<float, kInputChannels> mean{};
    std::array<float, kInputChannels> stdev{};
};

NormStats compute_norm_stats(const WindowSet& training_windows);
void apply_norm(WindowSet& windows, const NormStats& stats);
Tensor normalize_window(const Tensor& window, const NormStats& stats);

/// Physiological clipper: keeps a ring buffer of the last N accepted
/// predictions; a new prediction farther than `fraction` of their mean is
/// clipped to mean +- fraction*mean. Cold start passes through. The clipped
/// value (not the raw one) enters the history.
class HRPostProcessor {
public:
    explicit HRPostProcessor(int history = 10, float fraction = 0.10f);

    float process(float raw_bpm);

    int capacity() const noexcept { return capacity_; }
    float fraction() const noexcept { return fraction_; }
    std::size_t history_size() const noexcept { return history_.size(); }
    float history_mean() const;

private:
    int capacity_;
    float fraction_;
    std::deque<float> history_;
};

TrainConfig finetune_defaults(); // lr 1e-4, 50 epochs, patience 10

/// Per-layer mask covering the first convolutional block (everything up to
/// and including the first pooling layer).
std::vector<bool> first_block_mask(const NetworkSpec& spec);

struct FinetuneResult {
    WeightSet weights;
    double holdout_mae = 0.0; // over the chronologically last 75%
    int split_index = 0;      // first held-out window
};

/// Fine-tunes on the chronologically first 25% of a subject's windows with
/// the first conv block frozen, then reports MAE on the remaining 75%.
/// Requires at least 8 windows.
FinetuneResult finetune(const NetworkSpec& spec, const WeightSet& weights,
                        const WindowSet& subject_windows, const TrainConfig& cfg);

/// Prediction trace rows for CSV emission.
struct TraceRow {
    int subject_id = 0;
    int window_index = 0;
    float raw_bpm = 0.0f;
    float post_bpm = 0.0f;
    float truth_bpm = 0.0f;
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);

} // namespace ppgtcn
