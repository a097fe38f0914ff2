#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace ppgtcn::kernels {

/// Geometry of one causal 1D convolution call (single batch item).
/// Input x is [c_in][t_in] row-major, weights w are [c_out][c_in][k],
/// output y is [c_out][t_out]. Causality comes from an implicit left zero
/// padding of (k-1)*dilation samples: output t reads inputs t*stride - d*i.
struct Conv1dShape {
    int c_in = 0;
    int c_out = 0;
    int k = 1;
    int dilation = 1;
    int stride = 1;
    int t_in = 0;
    int t_out = 0;
};

inline int conv_out_len(int t_in, int stride) { return (t_in + stride - 1) / stride; }

/// Kernel variant table. Scalar is the reference; SIMD variants must agree
/// with it (bit-exact for lane-parallel kernels, <=1e-6 relative for the
/// dot-product reductions, exactly for all integer kernels).
struct Ops {
    const char* name;

    void (*conv1d_fwd)(const Conv1dShape&, const float* x, const float* w,
                       const float* bias, float* y);
    // Accumulating backward kernels (callers pass zeroed or running buffers).
    void (*conv1d_bwd_x)(const Conv1dShape&, const float* gy, const float* w, float* gx);
    void (*conv1d_bwd_w)(const Conv1dShape&, const float* gy, const float* x, float* gw);

    void (*linear_fwd)(int in, int out, const float* x, const float* w,
                       const float* bias, float* y);
    void (*linear_bwd_x)(int in, int out, const float* gy, const float* w, float* gx);
    void (*linear_bwd_w)(int in, int out, const float* gy, const float* x, float* gw);

    void (*relu_fwd)(const float* x, float* y, std::size_t n);
    void (*relu_bwd)(const float* x, const float* gy, float* gx, std::size_t n);
    // y[i] = a * x[i] + b  (batch-norm per-channel apply)
    void (*scale_shift)(const float* x, float a, float b, float* y, std::size_t n);
    // y[i] += a * x[i]
    void (*saxpy)(float a, const float* x, float* y, std::size_t n);

    // Integer inference kernels. x holds int8 codes with zero point x_zp;
    // the left padding is implicit at value x_zp (real zero). 32-bit
    // accumulators; results are exact and identical across variants.
    void (*conv1d_int8)(const Conv1dShape&, const std::int8_t* x, int x_zp,
                        const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc);
    void (*linear_int8)(int in, int out, const std::int8_t* x, int x_zp,
                        const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc);
};

const Ops& scalar_ops();
bool avx2_compiled();
bool avx2_available();
const Ops& avx2_ops(); // valid only when avx2_compiled()

/// Runtime-selected variant. Defaults to the best available backend; the
/// PPGTCN_KERNELS env var (scalar|avx2|auto) or force_backend override it.
const Ops& active();
void force_backend(const std::string& name);

} // namespace ppgtcn::kernels
