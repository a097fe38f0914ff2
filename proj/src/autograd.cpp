#include "ppgtcn/autograd.hpp"

#include <cmath>
#include <cstddef>

#include "ppgtcn/kernels.hpp"

namespace ppgtcn {

void GradTape::backward(int loss_id) {
    if (nodes_.empty()) {
        throw TapeError("backward called on a tape with no recorded forward ops");
    }
    if (value(loss_id).numel() != 1) {
        throw TapeError("backward seed must be a scalar slot");
    }
    grad(loss_id)[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

float logcosh(float e) {
    const float a = std::fabs(e);
    return a + std::log1p(std::exp(-2.0f * a)) - 0.6931471805599453f;
}

namespace ops {
namespace {

// Batch geometry of an activation: [B,C,L] or [B,C] (L=1).
struct BCL {
    int b, c, l;
};

BCL bcl(const Tensor& t, const char* who) {
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
    throw DimensionError(std::string(who) + ": expected rank 2 or 3, got " + t.shape_string());
}

} // namespace

int conv1d_causal(GradTape& tape, int x, int w, int b, int dilation, int stride) {
    if (dilation < 1 || stride < 1) {
        throw ArgumentError("conv1d_causal: dilation and stride must be >= 1");
    }
    const Tensor& xv = tape.value(x);
    const Tensor& wv = tape.value(w);
    const Tensor& bv = tape.value(b);
    if (xv.rank() != 3 || wv.rank() != 3) {
        throw DimensionError("conv1d_causal: x must be [B,C,T] and w [Cout,Cin,K], got x " +
                             xv.shape_string() + ", w " + wv.shape_string());
    }
    if (xv.dim(1) != wv.dim(1)) {
        throw DimensionError("conv1d_causal: channel mismatch between x " + xv.shape_string() +
                             " and w " + wv.shape_string());
    }
    if (bv.rank() != 1 || bv.dim(0) != wv.dim(0)) {
        throw DimensionError("conv1d_causal: bias " + bv.shape_string() +
                             " does not match w " + wv.shape_string());
    }

    kernels::Conv1dShape shape;
    shape.c_in = xv.dim(1);
    shape.c_out = wv.dim(0);
    shape.k = wv.dim(2);
    shape.dilation = dilation;
    shape.stride = stride;
    shape.t_in = xv.dim(2);
    shape.t_out = kernels::conv_out_len(shape.t_in, stride);

    const int batch = xv.dim(0);
    Tensor y({batch, shape.c_out, shape.t_out});
    const auto& k = kernels::active();
    const std::size_t x_step = static_cast<std::size_t>(shape.c_in) * shape.t_in;
    const std::size_t y_step = static_cast<std::size_t>(shape.c_out) * shape.t_out;
    for (int n = 0; n < batch; ++n) {
        k.conv1d_fwd(shape, xv.data() + n * x_step, wv.data(), bv.data(), y.data() + n * y_step);
    }

    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, w, b, out, shape, batch, x_step, y_step] {
        const auto& kk = kernels::active();
        const Tensor& gy = tape.grad(out);
        const Tensor& xs = tape.value(x);
        const Tensor& ws = tape.value(w);
        Tensor& gx = tape.grad(x);
        Tensor& gw = tape.grad(w);
        Tensor& gb = tape.grad(b);
        for (int n = 0; n < batch; ++n) {
            const float* gyn = gy.data() + n * y_step;
            kk.conv1d_bwd_x(shape, gyn, ws.data(), gx.data() + n * x_step);
            kk.conv1d_bwd_w(shape, gyn, xs.data() + n * x_step, gw.data());
            for (int m = 0; m < shape.c_out; ++m) {
                float acc = 0.0f;
                const float* row = gyn + static_cast<std::size_t>(m) * shape.t_out;
                for (int t = 0; t < shape.t_out; ++t) acc += row[t];
                gb[static_cast<std::size_t>(m)] += acc;
            }
        }
    });
    return out;
}

int batchnorm(GradTape& tape, int x, int gamma, int beta,
              Tensor& running_mean, Tensor& running_var, Mode mode) {
    const Tensor& xv = tape.value(x);
    const BCL g = bcl(xv, "batchnorm");
    const Tensor& gv = tape.value(gamma);
    const Tensor& bv = tape.value(beta);
    if (static_cast<int>(gv.numel()) != g.c || static_cast<int>(bv.numel()) != g.c ||
        static_cast<int>(running_mean.numel()) != g.c ||
        static_cast<int>(running_var.numel()) != g.c) {
        throw DimensionError("batchnorm: per-channel parameter length does not match channels of " +
                             xv.shape_string());
    }
    const std::size_t n_per_c = static_cast<std::size_t>(g.b) * g.l;
    if (n_per_c == 0) throw ArgumentError("batchnorm: zero-length batch");

    constexpr float eps = 1e-5f;
    constexpr float momentum = 0.1f;

    Tensor y(xv.shape());
    const auto& k = kernels::active();
    auto row = [g](const Tensor& t, int n, int c) {
        return t.data() + (static_cast<std::size_t>(n) * g.c + c) * g.l;
    };
    auto row_mut = [g](Tensor& t, int n, int c) {
        return t.data() + (static_cast<std::size_t>(n) * g.c + c) * g.l;
    };

    if (mode == Mode::Infer) {
        for (int c = 0; c < g.c; ++c) {
            const float inv_std = 1.0f / std::sqrt(running_var[c] + eps);
            const float a = gv[c] * inv_std;
            const float shift = bv[c] - running_mean[c] * a;
            for (int n = 0; n < g.b; ++n) k.scale_shift(row(xv, n, c), a, shift, row_mut(y, n, c), g.l);
        }
        const int out = tape.push_value(std::move(y));
        // running stats are constants here; x, gamma, beta still get gradients
        std::vector<float> inv_std(g.c), mean(g.c);
        for (int c = 0; c < g.c; ++c) {
            inv_std[c] = 1.0f / std::sqrt(running_var[c] + eps);
            mean[c] = running_mean[c];
        }
        tape.record([&tape, x, gamma, beta, out, g, inv_std, mean, row] {
            const Tensor& gy = tape.grad(out);
            const Tensor& xs = tape.value(x);
            const Tensor& gs = tape.value(gamma);
            Tensor& gx = tape.grad(x);
            Tensor& gg = tape.grad(gamma);
            Tensor& gb = tape.grad(beta);
            for (int c = 0; c < g.c; ++c) {
                const float a = gs[c] * inv_std[c];
                float dgamma = 0.0f, dbeta = 0.0f;
                for (int n = 0; n < g.b; ++n) {
                    const float* gyr = row(gy, n, c);
                    const float* xr = row(xs, n, c);
                    float* gxr = gx.data() + (static_cast<std::size_t>(n) * g.c + c) * g.l;
                    for (int i = 0; i < g.l; ++i) {
                        dgamma += gyr[i] * (xr[i] - mean[c]) * inv_std[c];
                        dbeta += gyr[i];
                        gxr[i] += gyr[i] * a;
                    }
                }
                gg[c] += dgamma;
                gb[c] += dbeta;
            }
        });
        return out;
    }

    // Train mode: batch statistics (biased variance for normalization).
    std::vector<float> mean(g.c), var(g.c), inv_std(g.c);
    for (int c = 0; c < g.c; ++c) {
        double m = 0.0;
        for (int n = 0; n < g.b; ++n) {
            const float* xr = row(xv, n, c);
            for (int i = 0; i < g.l; ++i) m += xr[i];
        }
        m /= static_cast<double>(n_per_c);
        double v = 0.0;
        for (int n = 0; n < g.b; ++n) {
            const float* xr = row(xv, n, c);
            for (int i = 0; i < g.l; ++i) {
                const double d = xr[i] - m;
                v += d * d;
            }
        }
        v /= static_cast<double>(n_per_c);
        mean[c] = static_cast<float>(m);
        var[c] = static_cast<float>(v);
        inv_std[c] = 1.0f / std::sqrt(var[c] + eps);
    }

    Tensor xhat(xv.shape());
    for (int c = 0; c < g.c; ++c) {
        const float a = inv_std[c];
        const float shift = -mean[c] * a;
        for (int n = 0; n < g.b; ++n) {
            k.scale_shift(row(xv, n, c), a, shift, row_mut(xhat, n, c), g.l);
            k.scale_shift(row(xhat, n, c), gv[c], bv[c], row_mut(y, n, c), g.l);
        }
    }

    // Running stats: unbiased variance, conventional momentum update.
    for (int c = 0; c < g.c; ++c) {
        const float unbiased =
            n_per_c > 1 ? var[c] * static_cast<float>(n_per_c) / static_cast<float>(n_per_c - 1)
                        : var[c];
        running_mean[c] = (1.0f - momentum) * running_mean[c] + momentum * mean[c];
        running_var[c] = (1.0f - momentum) * running_var[c] + momentum * unbiased;
    }

    const int xhat_id = tape.push_value(std::move(xhat));
    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, gamma, beta, out, xhat_id, g, inv_std, n_per_c, row] {
        const Tensor& gy = tape.grad(out);
        const Tensor& xh = tape.value(xhat_id);
        const Tensor& gs = tape.value(gamma);
        Tensor& gx = tape.grad(x);
        Tensor& gg = tape.grad(gamma);
        Tensor& gb = tape.grad(beta);
        const float inv_n = 1.0f / static_cast<float>(n_per_c);
        for (int c = 0; c < g.c; ++c) {
            double dgamma = 0.0, dbeta = 0.0;
            for (int n = 0; n < g.b; ++n) {
                const float* gyr = row(gy, n, c);
                const float* xhr = row(xh, n, c);
                for (int i = 0; i < g.l; ++i) {
                    dgamma += static_cast<double>(gyr[i]) * xhr[i];
                    dbeta += gyr[i];
                }
            }
            gg[c] += static_cast<float>(dgamma);
            gb[c] += static_cast<float>(dbeta);
            const float mean_g = static_cast<float>(dbeta) * inv_n;
            const float mean_gx = static_cast<float>(dgamma) * inv_n;
            const float a = gs[c] * inv_std[c];
            for (int n = 0; n < g.b; ++n) {
                const float* gyr = row(gy, n, c);
                const float* xhr = row(xh, n, c);
                float* gxr = gx.data() + (static_cast<std::size_t>(n) * g.c + c) * g.l;
                for (int i = 0; i < g.l; ++i) {
                    gxr[i] += a * (gyr[i] - mean_g - xhr[i] * mean_gx);
                }
            }
        }
    });
    return out;
}

int relu(GradTape& tape, int x) {
    const Tensor& xv = tape.value(x);
    Tensor y(xv.shape());
    kernels::active().relu_fwd(xv.data(), y.data(), xv.numel());
    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, out] {
        const Tensor& gy = tape.grad(out);
        const Tensor& xs = tape.value(x);
        Tensor& gx = tape.grad(x);
        kernels::active().relu_bwd(xs.data(), gy.data(), gx.data(), xs.numel());
    });
    return out;
}

int avgpool1d(GradTape& tape, int x, int window, int stride) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 3) {
        throw DimensionError("avgpool1d: expected [B,C,T], got " + xv.shape_string());
    }
    if (window < 1 || stride < 1) throw ArgumentError("avgpool1d: window and stride must be >= 1");
    const int t_in = xv.dim(2);
    if (window > t_in) {
        throw ArgumentError("avgpool1d: window " + std::to_string(window) +
                            " larger than sequence length " + std::to_string(t_in));
    }
    const int b = xv.dim(0), c = xv.dim(1);
    const int t_out = (t_in - window) / stride + 1;
    const float inv_w = 1.0f / static_cast<float>(window);

    Tensor y({b, c, t_out});
    for (int n = 0; n < b; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const float* xr = xv.data() + (static_cast<std::size_t>(n) * c + ch) * t_in;
            float* yr = y.data() + (static_cast<std::size_t>(n) * c + ch) * t_out;
            for (int to = 0; to < t_out; ++to) {
                float acc = 0.0f;
                for (int j = 0; j < window; ++j) acc += xr[to * stride + j];
                yr[to] = acc * inv_w;
            }
        }
    }
    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, out, b, c, t_in, t_out, window, stride, inv_w] {
        const Tensor& gy = tape.grad(out);
        Tensor& gx = tape.grad(x);
        for (int n = 0; n < b; ++n) {
            for (int ch = 0; ch < c; ++ch) {
                const float* gyr = gy.data() + (static_cast<std::size_t>(n) * c + ch) * t_out;
                float* gxr = gx.data() + (static_cast<std::size_t>(n) * c + ch) * t_in;
                for (int to = 0; to < t_out; ++to) {
                    const float g = gyr[to] * inv_w;
                    for (int j = 0; j < window; ++j) gxr[to * stride + j] += g;
                }
            }
        }
    });
    return out;
}

int flatten(GradTape& tape, int x) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() == 2) return x;
    if (xv.rank() != 3) {
        throw DimensionError("flatten: expected [B,C,T], got " + xv.shape_string());
    }
    Tensor y({xv.dim(0), xv.dim(1) * xv.dim(2)}, xv.vec());
    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, out] {
        const Tensor& gy = tape.grad(out);
        Tensor& gx = tape.grad(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i];
    });
    return out;
}

int linear(GradTape& tape, int x, int w, int b) {
    const Tensor& xv = tape.value(x);
    const Tensor& wv = tape.value(w);
    const Tensor& bv = tape.value(b);
    if (xv.rank() != 2 || wv.rank() != 2) {
        throw DimensionError("linear: expected x [B,In] and w [Out,In], got x " +
                             xv.shape_string() + ", w " + wv.shape_string());
    }
    if (xv.dim(1) != wv.dim(1)) {
        throw DimensionError("linear: feature mismatch between x " + xv.shape_string() +
                             " and w " + wv.shape_string());
    }
    if (bv.rank() != 1 || bv.dim(0) != wv.dim(0)) {
        throw DimensionError("linear: bias " + bv.shape_string() + " does not match w " +
                             wv.shape_string());
    }
    const int batch = xv.dim(0), in = xv.dim(1), out_f = wv.dim(0);
    Tensor y({batch, out_f});
    const auto& k = kernels::active();
    for (int n = 0; n < batch; ++n) {
        k.linear_fwd(in, out_f, xv.data() + static_cast<std::size_t>(n) * in, wv.data(),
                     bv.data(), y.data() + static_cast<std::size_t>(n) * out_f);
    }
    const int out = tape.push_value(std::move(y));
    tape.record([&tape, x, w, b, out, batch, in, out_f] {
        const auto& kk = kernels::active();
        const Tensor& gy = tape.grad(out);
        const Tensor& xs = tape.value(x);
        const Tensor& ws = tape.value(w);
        Tensor& gx = tape.grad(x);
        Tensor& gw = tape.grad(w);
        Tensor& gb = tape.grad(b);
        for (int n = 0; n < batch; ++n) {
            const float* gyn = gy.data() + static_cast<std::size_t>(n) * out_f;
            kk.linear_bwd_x(in, out_f, gyn, ws.data(), gx.data() + static_cast<std::size_t>(n) * in);
            kk.linear_bwd_w(in, out_f, gyn, xs.data() + static_cast<std::size_t>(n) * in, gw.data());
            for (int o = 0; o < out_f; ++o) gb[o] += gyn[o];
        }
    });
    return out;
}

int logcosh_loss(GradTape& tape, int pred, const Tensor& target) {
    const Tensor& pv = tape.value(pred);
    const std::size_t n = pv.numel();
    if (pv.rank() == 2 && pv.dim(1) != 1) {
        throw DimensionError("logcosh_loss: pred must be [B] or [B,1], got " + pv.shape_string());
    }
    if (n != target.numel()) {
        throw DimensionError("logcosh_loss: pred " + pv.shape_string() + " vs target " +
                             target.shape_string());
    }
    if (n == 0) throw ArgumentError("logcosh_loss: empty batch");

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += logcosh(pv[i] - target[i]);
    Tensor loss({1});
    loss[0] = static_cast<float>(acc / static_cast<double>(n));

    const int out = tape.push_value(std::move(loss));
    const Tensor tgt = target;
    tape.record([&tape, pred, out, tgt, n] {
        const float g = tape.grad(out)[0] / static_cast<float>(n);
        const Tensor& ps = tape.value(pred);
        Tensor& gp = tape.grad(pred);
        for (std::size_t i = 0; i < n; ++i) {
            gp[i] += g * std::tanh(ps[i] - tgt[i]);
        }
    });
    return out;
}

int sum(GradTape& tape, int x) {
    const Tensor& xv = tape.value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    Tensor s({1});
    s[0] = static_cast<float>(acc);
    const int out = tape.push_value(std::move(s));
    tape.record([&tape, x, out] {
        const float g = tape.grad(out)[0];
        Tensor& gx = tape.grad(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return out;
}

} // namespace ops

} // namespace ppgtcn
