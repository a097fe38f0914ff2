// Reference kernels. Fixed summation order: for each output element the
// accumulator starts at the bias and walks input channels outer, kernel taps
// inner. SIMD variants replicate this order lane-parallel where they claim
// bit-exact agreement. Compiled with -ffp-contract=off.

#include "ppgtcn/kernels.hpp"

namespace ppgtcn::kernels {
namespace {

void conv1d_fwd_scalar(const Conv1dShape& s, const float* x, const float* w,
                       const float* bias, float* y) {
    for (int m = 0; m < s.c_out; ++m) {
        const float* wm = w + static_cast<std::size_t>(m) * s.c_in * s.k;
        for (int to = 0; to < s.t_out; ++to) {
            const int t = to * s.stride;
            float acc = bias ? bias[m] : 0.0f;
            for (int l = 0; l < s.c_in; ++l) {
                const float* xl = x + static_cast<std::size_t>(l) * s.t_in;
                const float* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const int ti = t - s.dilation * i;
                    if (ti >= 0) acc += xl[ti] * wl[i];
                }
            }
            y[static_cast<std::size_t>(m) * s.t_out + to] = acc;
        }
    }
}

void conv1d_bwd_x_scalar(const Conv1dShape& s, const float* gy, const float* w, float* gx) {
    for (int m = 0; m < s.c_out; ++m) {
        const float* gym = gy + static_cast<std::size_t>(m) * s.t_out;
        for (int l = 0; l < s.c_in; ++l) {
            float* gxl = gx + static_cast<std::size_t>(l) * s.t_in;
            const float* wl = w + (static_cast<std::size_t>(m) * s.c_in + l) * s.k;
            for (int i = 0; i < s.k; ++i) {
                const float wv = wl[i];
                for (int to = 0; to < s.t_out; ++to) {
                    const int ti = to * s.stride - s.dilation * i;
                    if (ti >= 0) gxl[ti] += gym[to] * wv;
                }
            }
        }
    }
}

void conv1d_bwd_w_scalar(const Conv1dShape& s, const float* gy, const float* x, float* gw) {
    for (int m = 0; m < s.c_out; ++m) {
        const float* gym = gy + static_cast<std::size_t>(m) * s.t_out;
        for (int l = 0; l < s.c_in; ++l) {
            const float* xl = x + static_cast<std::size_t>(l) * s.t_in;
            float* gwl = gw + (static_cast<std::size_t>(m) * s.c_in + l) * s.k;
            for (int i = 0; i < s.k; ++i) {
                float acc = 0.0f;
                for (int to = 0; to < s.t_out; ++to) {
                    const int ti = to * s.stride - s.dilation * i;
                    if (ti >= 0) acc += gym[to] * xl[ti];
                }
                gwl[i] += acc;
            }
        }
    }
}

void linear_fwd_scalar(int in, int out, const float* x, const float* w,
                       const float* bias, float* y) {
    for (int o = 0; o < out; ++o) {
        const float* wo = w + static_cast<std::size_t>(o) * in;
        float acc = bias ? bias[o] : 0.0f;
        for (int i = 0; i < in; ++i) acc += wo[i] * x[i];
        y[o] = acc;
    }
}

void linear_bwd_x_scalar(int in, int out, const float* gy, const float* w, float* gx) {
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        const float* wo = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gx[i] += g * wo[i];
    }
}

void linear_bwd_w_scalar(int in, int out, const float* gy, const float* x, float* gw) {
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        float* gwo = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gwo[i] += g * x[i];
    }
}

void relu_fwd_scalar(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_scalar(const float* x, const float* gy, float* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0f) gx[i] += gy[i];
    }
}

void scale_shift_scalar(const float* x, float a, float b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

void saxpy_scalar(float a, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void conv1d_int8_scalar(const Conv1dShape& s, const std::int8_t* x, int x_zp,
                        const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc) {
    for (int m = 0; m < s.c_out; ++m) {
        const std::int8_t* wm = w + static_cast<std::size_t>(m) * s.c_in * s.k;
        for (int to = 0; to < s.t_out; ++to) {
            const int t = to * s.stride;
            std::int32_t a = bias ? bias[m] : 0;
            for (int l = 0; l < s.c_in; ++l) {
                const std::int8_t* xl = x + static_cast<std::size_t>(l) * s.t_in;
                const std::int8_t* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const int ti = t - s.dilation * i;
                    if (ti >= 0) a += (static_cast<std::int32_t>(xl[ti]) - x_zp) * wl[i];
                }
            }
            acc[static_cast<std::size_t>(m) * s.t_out + to] = a;
        }
    }
}

void linear_int8_scalar(int in, int out, const std::int8_t* x, int x_zp,
                        const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc) {
    for (int o = 0; o < out; ++o) {
        const std::int8_t* wo = w + static_cast<std::size_t>(o) * in;
        std::int32_t a = bias ? bias[o] : 0;
        for (int i = 0; i < in; ++i) {
            a += (static_cast<std::int32_t>(x[i]) - x_zp) * wo[i];
        }
        acc[o] = a;
    }
}

} // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",
        conv1d_fwd_scalar,
        conv1d_bwd_x_scalar,
        conv1d_bwd_w_scalar,
        linear_fwd_scalar,
        linear_bwd_x_scalar,
        linear_bwd_w_scalar,
        relu_fwd_scalar,
        relu_bwd_scalar,
        scale_shift_scalar,
        saxpy_scalar,
        conv1d_int8_scalar,
        linear_int8_scalar,
    };
    return ops;
}

} // namespace ppgtcn::kernels
