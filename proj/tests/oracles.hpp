#pragma once

// Independent test oracles. Everything here is double-precision brute force,
// deliberately separate from the library kernels it checks.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "ppgtcn/rng.hpp"
#include "ppgtcn/tensor.hpp"

namespace oracles {

/// Direct nested-loop causal dilated convolution with left zero padding:
/// y[m][to] = b[m] + sum_i sum_l x[l][to*s - d*i] * w[m][l][i].
inline std::vector<double> conv1d(const std::vector<double>& x, int c_in, int t_in,
                                  const std::vector<double>& w, int c_out, int k,
                                  const std::vector<double>& bias, int d, int s) {
    const int t_out = (t_in + s - 1) / s;
    std::vector<double> y(static_cast<std::size_t>(c_out) * t_out, 0.0);
    for (int m = 0; m < c_out; ++m) {
        for (int to = 0; to < t_out; ++to) {
            double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(m)];
            for (int i = 0; i < k; ++i) {
                for (int l = 0; l < c_in; ++l) {
                    const int ti = to * s - d * i;
                    if (ti >= 0) {
                        acc += x[static_cast<std::size_t>(l) * t_in + ti] *
                               w[(static_cast<std::size_t>(m) * c_in + l) * k + i];
                    }
                }
            }
            y[static_cast<std::size_t>(m) * t_out + to] = acc;
        }
    }
    return y;
}

/// Relative error with a unit floor: exact for O(1) magnitudes, absolute for
/// sub-unit ones.
inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

/// Central finite differences per element of `param` against the analytic
/// gradient, with `loss` recomputing the full forward pass. The divisor is
/// the step actually realized in float32. Returns the max relative error.
inline double fd_max_rel_error(ppgtcn::Tensor& param, const ppgtcn::Tensor& analytic_grad,
                               const std::function<double()>& loss, double h = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const float saved = param[i];
        const float plus = static_cast<float>(saved + h);
        const float minus = static_cast<float>(saved - h);
        param[i] = plus;
        const double lp = loss();
        param[i] = minus;
        const double lm = loss();
        param[i] = saved;
        const double fd = (lp - lm) / (static_cast<double>(plus) - minus);
        worst = std::max(worst, rel_err(fd, analytic_grad[i]));
    }
    return worst;
}

/// Double-precision sum of a float tensor (test-side loss reduction; its
/// gradient is identical to the library's sum op, which seeds ones).
inline double dsum(const ppgtcn::Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) acc += t[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Double-precision reference layer ops for gradient checks. Finite
// differences probe these exact-arithmetic references (whose forward the
// float kernels are separately verified against), which keeps the h = 1e-3
// central-difference noise far below the 1e-4 gate.
// ---------------------------------------------------------------------------

/// Rank-3 double tensor [a][b][c] ([B,C,T] activations; [Cout,Cin,K] weights;
/// vectors use b == c == 1).
struct D3 {
    int a = 1, b = 1, c = 1;
    std::vector<double> v;

    D3() = default;
    D3(int a_, int b_, int c_) : a(a_), b(b_), c(c_), v(static_cast<std::size_t>(a_) * b_ * c_) {}

    static D3 from(const ppgtcn::Tensor& t) {
        D3 d;
        const auto& s = t.shape();
        d.a = s.empty() ? 1 : s[0];
        d.b = s.size() > 1 ? s[1] : 1;
        d.c = s.size() > 2 ? s[2] : 1;
        d.v.assign(t.vec().begin(), t.vec().end());
        return d;
    }

    double& at(int i, int j, int k) { return v[(static_cast<std::size_t>(i) * b + j) * c + k]; }
    double at(int i, int j, int k) const {
        return v[(static_cast<std::size_t>(i) * b + j) * c + k];
    }
    double sum() const {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc;
    }
};

inline D3 conv1d_ref(const D3& x, const D3& w, const D3& bias, int d, int s) {
    const int t_out = (x.c + s - 1) / s;
    D3 y(x.a, w.a, t_out);
    for (int n = 0; n < x.a; ++n) {
        for (int m = 0; m < w.a; ++m) {
            for (int to = 0; to < t_out; ++to) {
                double acc = bias.v.empty() ? 0.0 : bias.v[static_cast<std::size_t>(m)];
                for (int l = 0; l < w.b; ++l) {
                    for (int i = 0; i < w.c; ++i) {
                        const int ti = to * s - d * i;
                        if (ti >= 0) acc += x.at(n, l, ti) * w.at(m, l, i);
                    }
                }
                y.at(n, m, to) = acc;
            }
        }
    }
    return y;
}

inline D3 relu_ref(const D3& x) {
    D3 y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    return y;
}

inline D3 avgpool_ref(const D3& x, int window, int stride) {
    const int t_out = (x.c - window) / stride + 1;
    D3 y(x.a, x.b, t_out);
    for (int n = 0; n < x.a; ++n) {
        for (int ch = 0; ch < x.b; ++ch) {
            for (int to = 0; to < t_out; ++to) {
                double acc = 0.0;
                for (int j = 0; j < window; ++j) acc += x.at(n, ch, to * stride + j);
                y.at(n, ch, to) = acc / window;
            }
        }
    }
    return y;
}

inline D3 linear_ref(const D3& x, const D3& w, const D3& bias) {
    D3 y(x.a, w.a, 1);
    for (int n = 0; n < x.a; ++n) {
        for (int o = 0; o < w.a; ++o) {
            double acc = bias.v.empty() ? 0.0 : bias.v[static_cast<std::size_t>(o)];
            for (int i = 0; i < w.b; ++i) acc += x.at(n, i, 0) * w.at(o, i, 0);
            y.at(n, o, 0) = acc;
        }
    }
    return y;
}

/// Batch norm over (batch, time) per channel; train mode uses biased batch
/// variance, infer mode the supplied running stats.
inline D3 batchnorm_ref(const D3& x, const D3& gamma, const D3& beta, const D3& rm, const D3& rv,
                        bool train, double eps = 1e-5) {
    D3 y = x;
    const double n_per_c = static_cast<double>(x.a) * x.c;
    for (int ch = 0; ch < x.b; ++ch) {
        double mean, var;
        if (train) {
            double m = 0.0;
            for (int n = 0; n < x.a; ++n)
                for (int t = 0; t < x.c; ++t) m += x.at(n, ch, t);
            mean = m / n_per_c;
            double v = 0.0;
            for (int n = 0; n < x.a; ++n)
                for (int t = 0; t < x.c; ++t) {
                    const double d = x.at(n, ch, t) - mean;
                    v += d * d;
                }
            var = v / n_per_c;
        } else {
            mean = rm.v[static_cast<std::size_t>(ch)];
            var = rv.v[static_cast<std::size_t>(ch)];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int n = 0; n < x.a; ++n) {
            for (int t = 0; t < x.c; ++t) {
                y.at(n, ch, t) =
                    gamma.v[static_cast<std::size_t>(ch)] * (x.at(n, ch, t) - mean) * inv +
                    beta.v[static_cast<std::size_t>(ch)];
            }
        }
    }
    return y;
}

inline double logcosh_ref(const D3& pred, const D3& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double e = std::fabs(pred.v[i] - target.v[i]);
        acc += e + std::log1p(std::exp(-2.0 * e)) - std::log(2.0);
    }
    return acc / static_cast<double>(pred.v.size());
}

/// Central differences of a double-precision reference loss, element by
/// element of one parameter, against the analytic float gradient.
inline double fd_ref_max_rel_error(const ppgtcn::Tensor& analytic_grad, std::size_t count,
                                   const std::function<double(std::size_t, double)>& loss_delta,
                                   double h = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double fd = (loss_delta(i, h) - loss_delta(i, -h)) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, analytic_grad[i]));
    }
    return worst;
}

inline void fill_uniform(ppgtcn::Tensor& t, ppgtcn::Rng& rng, float lo, float hi) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform_f(lo, hi);
}

/// Magnitude of the DFT of `x` at frequency f_hz; sample rate fs_hz.
inline double dft_magnitude(const std::vector<float>& x, double f_hz, double fs_hz) {
    std::complex<double> acc{0.0, 0.0};
    const double w = -2.0 * 3.14159265358979323846 * f_hz / fs_hz;
    for (std::size_t n = 0; n < x.size(); ++n) {
        acc += static_cast<double>(x[n]) * std::complex<double>(std::cos(w * n), std::sin(w * n));
    }
    return std::abs(acc);
}

/// Frequency of the largest DFT magnitude over a scan grid.
inline double dominant_frequency(const std::vector<float>& x, double fs_hz, double f_lo,
                                 double f_hi, double step) {
    double best_f = f_lo, best_m = -1.0;
    for (double f = f_lo; f <= f_hi + 1e-12; f += step) {
        const double m = dft_magnitude(x, f, fs_hz);
        if (m > best_m) {
            best_m = m;
            best_f = f;
        }
    }
    return best_f;
}

/// O(n^2) domination filter over (mae, metric) pairs.
struct ParetoPoint {
    double mae;
    long long metric;
    int index;
};

inline std::vector<int> pareto_bruteforce(const std::vector<ParetoPoint>& pts) {
    std::vector<int> front;
    for (const auto& p : pts) {
        bool dominated = false;
        for (const auto& q : pts) {
            if (q.mae <= p.mae && q.metric <= p.metric &&
                (q.mae < p.mae || q.metric < p.metric)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.push_back(p.index);
    }
    return front;
}

} // namespace oracles
