#pragma once

#include <string>
#include <vector>

#include "ppgtcn/trainer.hpp"

namespace ppgtcn {

enum class RegularizerKind { Size, Flops };

/// Channel-width search knobs: regularizer kind, strength, pruning threshold,
/// and uniform expansion factor.
struct RegularizerConfig {
    RegularizerKind kind = RegularizerKind::Size;
    double strength = 0.0;      // lambda >= 0
    double prune_threshold = 0; // tau >= 0
    double expansion = 1.0;     // omega >= 1

    void validate() const;
};

/// Per-output-channel cost coefficient of each conv layer (0 for other
/// layers). Size: own parameters (c_in*k + 1) plus the batch-norm pair plus
/// the consumer conv's per-input-channel weights. Flops: own MACs per output
/// channel (k*c_in*t_out) plus the consumer conv's MACs per input channel.
std::vector<double> channel_costs(const NetworkSpec& spec, RegularizerKind kind);

/// penalty = lambda * sum over conv layers l, output channels c of
/// cost(l) * ||W_{l,c}||_2. Accumulates the subgradient into `grads` when
/// non-null (zero at ||.|| == 0).
double group_lasso_penalty(const NetworkSpec& spec, const WeightSet& weights,
                           const RegularizerConfig& config, WeightGrads* grads);

/// Removes conv output channels with ||W_{l,c}||_2 < tau (strict; ties are
/// retained) and rewires consumers: following batch-norm entries, the next
/// conv's input slices, or the flattened linear's input columns. At least one
/// channel survives per layer.
struct PruneResult {
    NetworkSpec spec;
    WeightSet weights;
};
PruneResult prune(const NetworkSpec& spec, const WeightSet& weights, double tau);

/// Multiplies every conv channel count by omega (rounded to nearest, min 1).
/// Weights are not carried over; callers reinitialize.
NetworkSpec expand(const NetworkSpec& spec, double omega);

struct SearchPoint {
    RegularizerConfig config;
    NetworkSpec spec;
    WeightSet weights;
    double mae = 0.0;
    std::int64_t params = 0;
    std::int64_t macs = 0;
};

struct SearchData {
    const WindowSet* train = nullptr;
    const WindowSet* val = nullptr;  // early-stopping subject
    const WindowSet* eval = nullptr; // MAE reported on this set
};

/// For each grid point: train the seed with the group-Lasso penalty, prune at
/// tau, optionally expand by omega (fresh weights), then retrain without the
/// penalty (warm-started when not expanded) and record MAE/params/MACs.
/// Degenerate or diverging points are recorded with MAE = +inf, never fatal.
std::vector<SearchPoint> morph_search(const NetworkSpec& seed, const SearchData& data,
                                      const std::vector<RegularizerConfig>& grid,
                                      const TrainConfig& cfg, int iterations = 1);

enum class ParetoAxis { Params, Macs };

/// Points not dominated in (MAE, axis), ascending by the axis. Points with
/// non-finite MAE are excluded.
std::vector<SearchPoint> pareto_front(const std::vector<SearchPoint>& points, ParetoAxis axis);

std::string regularizer_kind_name(RegularizerKind kind);
RegularizerKind regularizer_kind_from(const std::string& name);

void write_search_csv(const std::string& path, const std::vector<SearchPoint>& points);

} // namespace ppgtcn
