#include "ppgtcn/nas.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "ppgtcn/rng.hpp"

namespace ppgtcn {

namespace {

bool channel_preserving(LayerKind k) {
    return k == LayerKind::BatchNorm || k == LayerKind::Relu || k == LayerKind::Pool;
}

/// Index of the next conv consumer of layer l's output, or -1 when the chain
/// reaches a linear/head (or the end) first.
int consumer_conv(const NetworkSpec& spec, std::size_t l) {
    for (std::size_t i = l + 1; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Conv) return static_cast<int>(i);
        if (!channel_preserving(spec.layers[i].kind)) return -1;
    }
    return -1;
}

bool followed_by_batchnorm(const NetworkSpec& spec, std::size_t l) {
    return l + 1 < spec.layers.size() && spec.layers[l + 1].kind == LayerKind::BatchNorm;
}

double channel_norm(const Tensor& w, int c) {
    const int slice = w.dim(1) * w.dim(2);
    const float* p = w.data() + static_cast<std::size_t>(c) * slice;
    double acc = 0.0;
    for (int i = 0; i < slice; ++i) acc += static_cast<double>(p[i]) * p[i];
    return std::sqrt(acc);
}

} // namespace

void RegularizerConfig::validate() const {
    if (strength < 0) throw ArgumentError("regularizer strength must be >= 0");
    if (prune_threshold < 0) throw ArgumentError("pruning threshold must be >= 0");
    if (expansion < 1.0) throw ArgumentError("expansion factor must be >= 1");
}

std::vector<double> channel_costs(const NetworkSpec& spec, RegularizerKind kind) {
    const auto shapes = trace_shapes(spec);
    std::vector<double> costs(spec.layers.size(), 0.0);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& layer = spec.layers[l];
        if (layer.kind != LayerKind::Conv) continue;
        const int next = consumer_conv(spec, l);
        if (kind == RegularizerKind::Size) {
            double c = static_cast<double>(layer.c_in) * layer.k + 1.0;
            if (followed_by_batchnorm(spec, l)) c += 2.0;
            if (next >= 0) {
                c += static_cast<double>(spec.layers[next].k) * spec.layers[next].c_out;
            }
            costs[l] = c;
        } else {
            double c = static_cast<double>(layer.k) * layer.c_in * shapes[l + 1].t;
            if (next >= 0) {
                c += static_cast<double>(spec.layers[next].k) * spec.layers[next].c_out *
                     shapes[static_cast<std::size_t>(next) + 1].t;
            }
            costs[l] = c;
        }
    }
    return costs;
}

double group_lasso_penalty(const NetworkSpec& spec, const WeightSet& weights,
                           const RegularizerConfig& config, WeightGrads* grads) {
    config.validate();
    check_weights(spec, weights);
    if (config.strength == 0.0) return 0.0;

    const auto costs = channel_costs(spec, config.kind);
    double penalty = 0.0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (spec.layers[l].kind != LayerKind::Conv) continue;
        const Tensor& w = weights.layers[l][0];
        const int slice = w.dim(1) * w.dim(2);
        for (int c = 0; c < w.dim(0); ++c) {
            const double norm = channel_norm(w, c);
            penalty += config.strength * costs[l] * norm;
            if (grads && norm > 0.0) {
                const double scale = config.strength * costs[l] / norm;
                const float* src = w.data() + static_cast<std::size_t>(c) * slice;
                float* dst = (*grads)[l][0].data() + static_cast<std::size_t>(c) * slice;
                for (int i = 0; i < slice; ++i) {
                    dst[i] += static_cast<float>(scale * src[i]);
                }
            }
        }
    }
    return penalty;
}

PruneResult prune(const NetworkSpec& spec, const WeightSet& weights, double tau) {
    if (tau < 0) throw ArgumentError("pruning threshold must be >= 0");
    check_weights(spec, weights);
    const auto shapes = trace_shapes(spec);

    // Phase 1: per conv layer, the surviving output channels (decided on the
    // trained tensors; strict < prunes, so tau == 0 keeps everything).
    std::vector<std::vector<int>> keep(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (spec.layers[l].kind != LayerKind::Conv) continue;
        const Tensor& w = weights.layers[l][0];
        std::vector<int>& k = keep[l];
        int best = 0;
        double best_norm = -1.0;
        for (int c = 0; c < w.dim(0); ++c) {
            const double norm = channel_norm(w, c);
            if (!(norm < tau)) k.push_back(c);
            if (norm > best_norm) {
                best_norm = norm;
                best = c;
            }
        }
        if (k.empty()) k.push_back(best);
    }

    // Phase 2: rebuild the chain, rewiring each layer's input to the
    // producer's surviving channels.
    PruneResult out;
    out.spec = spec;
    out.weights.layers.resize(spec.layers.size());

    std::vector<int> in_keep(static_cast<std::size_t>(spec.input_channels));
    for (std::size_t i = 0; i < in_keep.size(); ++i) in_keep[i] = static_cast<int>(i);
    bool flattened = false;

    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& layer = spec.layers[l];
        LayerSpec& new_layer = out.spec.layers[l];
        const auto& params = weights.layers[l];
        switch (layer.kind) {
            case LayerKind::Conv: {
                const std::vector<int>& out_keep = keep[l];
                Tensor w({static_cast<int>(out_keep.size()), static_cast<int>(in_keep.size()),
                          layer.k});
                Tensor b({static_cast<int>(out_keep.size())});
                for (std::size_t mi = 0; mi < out_keep.size(); ++mi) {
                    for (std::size_t li = 0; li < in_keep.size(); ++li) {
                        for (int i = 0; i < layer.k; ++i) {
                            w.at3(static_cast<int>(mi), static_cast<int>(li), i) =
                                params[0].at3(out_keep[mi], in_keep[li], i);
                        }
                    }
                    b[mi] = params[1][static_cast<std::size_t>(out_keep[mi])];
                }
                new_layer.c_in = static_cast<int>(in_keep.size());
                new_layer.c_out = static_cast<int>(out_keep.size());
                out.weights.layers[l] = {std::move(w), std::move(b)};
                in_keep = out_keep;
                break;
            }
            case LayerKind::BatchNorm: {
                const int c = static_cast<int>(in_keep.size());
                std::vector<Tensor> rebuilt;
                for (const Tensor& t : params) {
                    Tensor nt({c});
                    for (int i = 0; i < c; ++i) nt[i] = t[static_cast<std::size_t>(in_keep[i])];
                    rebuilt.push_back(std::move(nt));
                }
                new_layer.c_in = new_layer.c_out = c;
                out.weights.layers[l] = std::move(rebuilt);
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Pool: {
                new_layer.c_in = new_layer.c_out = static_cast<int>(in_keep.size());
                break;
            }
            case LayerKind::Linear:
            case LayerKind::Head: {
                if (!flattened) {
                    // Input features are [channel][t] blocks of the producer.
                    const int t = shapes[l].t;
                    const int old_channels = shapes[l].channels;
                    (void)old_channels;
                    Tensor w({layer.c_out, static_cast<int>(in_keep.size()) * t});
                    for (int o = 0; o < layer.c_out; ++o) {
                        for (std::size_t ci = 0; ci < in_keep.size(); ++ci) {
                            for (int j = 0; j < t; ++j) {
                                w.at2(o, static_cast<int>(ci) * t + j) =
                                    params[0].at2(o, in_keep[ci] * t + j);
                            }
                        }
                    }
                    new_layer.c_in = static_cast<int>(in_keep.size()) * t;
                    out.weights.layers[l] = {std::move(w), params[1]};
                    flattened = true;
                } else {
                    out.weights.layers[l] = params;
                }
                // Linear widths are untouched by pruning.
                std::vector<int> all(static_cast<std::size_t>(layer.c_out));
                for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
                in_keep = std::move(all);
                break;
            }
        }
    }

    trace_shapes(out.spec);
    check_weights(out.spec, out.weights);
    return out;
}

NetworkSpec expand(const NetworkSpec& spec, double omega) {
    if (omega < 1.0) throw ArgumentError("expansion factor must be >= 1");
    NetworkSpec out = spec;
    const auto shapes = trace_shapes(spec);

    int cur = spec.input_channels;
    bool flattened = false;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        LayerSpec& layer = out.layers[l];
        switch (layer.kind) {
            case LayerKind::Conv: {
                layer.c_in = cur;
                const int widened = static_cast<int>(std::lround(layer.c_out * omega));
                layer.c_out = widened < 1 ? 1 : widened;
                cur = layer.c_out;
                break;
            }
            case LayerKind::BatchNorm:
            case LayerKind::Relu:
            case LayerKind::Pool:
                layer.c_in = layer.c_out = cur;
                break;
            case LayerKind::Linear:
            case LayerKind::Head:
                if (!flattened) {
                    layer.c_in = cur * shapes[l].t;
                    flattened = true;
                } else {
                    layer.c_in = cur;
                }
                cur = layer.c_out;
                break;
        }
    }
    trace_shapes(out);
    return out;
}

std::vector<SearchPoint> morph_search(const NetworkSpec& seed, const SearchData& data,
                                      const std::vector<RegularizerConfig>& grid,
                                      const TrainConfig& cfg, int iterations) {
    if (grid.empty()) throw ArgumentError("morph_search: empty grid");
    if (!data.train || !data.val || !data.eval) {
        throw ArgumentError("morph_search: train/val/eval sets are required");
    }
    if (iterations < 1) throw ArgumentError("morph_search: iterations must be >= 1");
    for (const auto& g : grid) g.validate();
    trace_shapes(seed);

    std::vector<SearchPoint> points(grid.size());

    auto run_point = [&](std::size_t pi) {
        const RegularizerConfig& rc = grid[pi];
        SearchPoint& point = points[pi];
        point.config = rc;

        TrainConfig point_cfg = cfg;
        point_cfg.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * (pi + 1));

        try {
            NetworkSpec spec = seed;
            WeightSet carried;
            bool have_carried = false;

            for (int it = 0; it < iterations; ++it) {
                TrainOptions opts;
                if (have_carried) opts.init = &carried;
                if (rc.strength > 0.0) {
                    opts.penalty = [&rc](const NetworkSpec& s, const WeightSet& w,
                                         WeightGrads& g) {
                        return group_lasso_penalty(s, w, rc, &g);
                    };
                }
                TrainResult shrink = train(spec, *data.train, *data.val, point_cfg, opts);
                PruneResult pruned = prune(spec, shrink.weights, rc.prune_threshold);
                spec = std::move(pruned.spec);
                carried = std::move(pruned.weights);
                have_carried = true;
                if (rc.expansion > 1.0) {
                    spec = expand(spec, rc.expansion);
                    have_carried = false; // expansion reinitializes
                }
            }

            TrainOptions final_opts;
            if (have_carried) final_opts.init = &carried;
            TrainResult final_tr = train(spec, *data.train, *data.val, point_cfg, final_opts);

            point.spec = spec;
            point.weights = std::move(final_tr.weights);
            point.mae = evaluate_mae(point.spec, point.weights, data.eval->windows,
                                     data.eval->labels);
        } catch (const TrainingError&) {
            // Diverged point: keep it in the output, excluded from the front.
            point.spec = seed;
            point.weights = WeightSet{};
            point.mae = std::numeric_limits<double>::infinity();
        }
        point.params = count_params(point.spec);
        point.macs = count_macs(point.spec);
    };

    const unsigned workers = std::min<unsigned>(
        std::max(1u, std::thread::hardware_concurrency()), static_cast<unsigned>(grid.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) run_point(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= grid.size()) return;
                    try {
                        run_point(i);
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
    return points;
}

std::vector<SearchPoint> pareto_front(const std::vector<SearchPoint>& points, ParetoAxis axis) {
    if (points.empty()) throw ArgumentError("pareto_front: empty point set");
    auto metric = [axis](const SearchPoint& p) {
        return axis == ParetoAxis::Params ? p.params : p.macs;
    };
    std::vector<SearchPoint> front;
    for (const SearchPoint& p : points) {
        if (!std::isfinite(p.mae)) continue;
        bool dominated = false;
        for (const SearchPoint& q : points) {
            if (!std::isfinite(q.mae)) continue;
            if (q.mae <= p.mae && metric(q) <= metric(p) &&
                (q.mae < p.mae || metric(q) < metric(p))) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.push_back(p);
    }
    std::sort(front.begin(), front.end(), [&](const SearchPoint& a, const SearchPoint& b) {
        if (metric(a) != metric(b)) return metric(a) < metric(b);
        return a.mae < b.mae;
    });
    return front;
}

std::string regularizer_kind_name(RegularizerKind kind) {
    return kind == RegularizerKind::Size ? "size" : "flops";
}

RegularizerKind regularizer_kind_from(const std::string& name) {
    if (name == "size") return RegularizerKind::Size;
    if (name == "flops") return RegularizerKind::Flops;
    throw ArgumentError("unknown regularizer kind '" + name + "' (size|flops)");
}

void write_search_csv(const std::string& path, const std::vector<SearchPoint>& points) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot open search csv: " + path);
    out << "kind,lambda,tau,omega,params,macs,mae\n";
    char line[160];
    for (const SearchPoint& p : points) {
        std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%.9g,%lld,%lld,%.6f\n",
                      regularizer_kind_name(p.config.kind).c_str(), p.config.strength,
                      p.config.prune_threshold, p.config.expansion,
                      static_cast<long long>(p.params), static_cast<long long>(p.macs), p.mae);
        out << line;
    }
}

} // namespace ppgtcn
