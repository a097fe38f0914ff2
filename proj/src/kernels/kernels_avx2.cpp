// AVX2 kernel variants. Lane-parallel kernels (conv forward, conv grad_x,
// elementwise ops, all int8 paths) keep the scalar per-element accumulation
// order and agree bit-exactly with the reference; the dot-product reductions
// (conv grad_w, linear forward) use vector partial sums and agree to within
// rounding. No FMA: mul+add matches the reference rounding step for step.
// Strided convolutions fall back to the scalar routine.

#include "ppgtcn/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace ppgtcn::kernels {
namespace {

void conv1d_fwd_avx2(const Conv1dShape& s, const float* x, const float* w,
                     const float* bias, float* y) {
    if (s.stride != 1) {
        scalar_ops().conv1d_fwd(s, x, w, bias, y);
        return;
    }
    const int pad = (s.k - 1) * s.dilation;
    for (int m = 0; m < s.c_out; ++m) {
        const float* wm = w + static_cast<std::size_t>(m) * s.c_in * s.k;
        float* ym = y + static_cast<std::size_t>(m) * s.t_out;
        const float b = bias ? bias[m] : 0.0f;

        int to = 0;
        // Head: taps may fall into the implicit zero padding.
        for (; to < s.t_out && to < pad; ++to) {
            float acc = b;
            for (int l = 0; l < s.c_in; ++l) {
                const float* xl = x + static_cast<std::size_t>(l) * s.t_in;
                const float* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const int ti = to - s.dilation * i;
                    if (ti >= 0) acc += xl[ti] * wl[i];
                }
            }
            ym[to] = acc;
        }
        // Main: 8 outputs per iteration, all taps in range.
        for (; to + 8 <= s.t_out; to += 8) {
            __m256 acc = _mm256_set1_ps(b);
            for (int l = 0; l < s.c_in; ++l) {
                const float* xl = x + static_cast<std::size_t>(l) * s.t_in + to;
                const float* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const __m256 xv = _mm256_loadu_ps(xl - s.dilation * i);
                    acc = _mm256_add_ps(acc, _mm256_mul_ps(xv, _mm256_set1_ps(wl[i])));
                }
            }
            _mm256_storeu_ps(ym + to, acc);
        }
        // Tail.
        for (; to < s.t_out; ++to) {
            float acc = b;
            for (int l = 0; l < s.c_in; ++l) {
                const float* xl = x + static_cast<std::size_t>(l) * s.t_in;
                const float* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) acc += xl[to - s.dilation * i] * wl[i];
            }
            ym[to] = acc;
        }
    }
}

void conv1d_bwd_x_avx2(const Conv1dShape& s, const float* gy, const float* w, float* gx) {
    if (s.stride != 1) {
        scalar_ops().conv1d_bwd_x(s, gy, w, gx);
        return;
    }
    for (int m = 0; m < s.c_out; ++m) {
        const float* gym = gy + static_cast<std::size_t>(m) * s.t_out;
        for (int l = 0; l < s.c_in; ++l) {
            float* gxl = gx + static_cast<std::size_t>(l) * s.t_in;
            const float* wl = w + (static_cast<std::size_t>(m) * s.c_in + l) * s.k;
            for (int i = 0; i < s.k; ++i) {
                const float wv = wl[i];
                const int off = s.dilation * i;
                int to = off < s.t_out ? off : s.t_out;
                // (to < off reads the zero padding: nothing to accumulate)
                const __m256 wvec = _mm256_set1_ps(wv);
                for (; to + 8 <= s.t_out; to += 8) {
                    const __m256 g = _mm256_loadu_ps(gym + to);
                    const __m256 acc = _mm256_loadu_ps(gxl + to - off);
                    _mm256_storeu_ps(gxl + to - off,
                                     _mm256_add_ps(acc, _mm256_mul_ps(g, wvec)));
                }
                for (; to < s.t_out; ++to) gxl[to - off] += gym[to] * wv;
            }
        }
    }
}

float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

void conv1d_bwd_w_avx2(const Conv1dShape& s, const float* gy, const float* x, float* gw) {
    if (s.stride != 1) {
        scalar_ops().conv1d_bwd_w(s, gy, x, gw);
        return;
    }
    for (int m = 0; m < s.c_out; ++m) {
        const float* gym = gy + static_cast<std::size_t>(m) * s.t_out;
        for (int l = 0; l < s.c_in; ++l) {
            const float* xl = x + static_cast<std::size_t>(l) * s.t_in;
            float* gwl = gw + (static_cast<std::size_t>(m) * s.c_in + l) * s.k;
            for (int i = 0; i < s.k; ++i) {
                const int off = s.dilation * i;
                int to = off < s.t_out ? off : s.t_out;
                __m256 vacc = _mm256_setzero_ps();
                for (; to + 8 <= s.t_out; to += 8) {
                    const __m256 g = _mm256_loadu_ps(gym + to);
                    const __m256 xv = _mm256_loadu_ps(xl + to - off);
                    vacc = _mm256_add_ps(vacc, _mm256_mul_ps(g, xv));
                }
                float acc = hsum(vacc);
                for (; to < s.t_out; ++to) acc += gym[to] * xl[to - off];
                gwl[i] += acc;
            }
        }
    }
}

void linear_fwd_avx2(int in, int out, const float* x, const float* w,
                     const float* bias, float* y) {
    for (int o = 0; o < out; ++o) {
        const float* wo = w + static_cast<std::size_t>(o) * in;
        __m256 vacc = _mm256_setzero_ps();
        int i = 0;
        for (; i + 8 <= in; i += 8) {
            vacc = _mm256_add_ps(vacc, _mm256_mul_ps(_mm256_loadu_ps(wo + i),
                                                     _mm256_loadu_ps(x + i)));
        }
        float acc = (bias ? bias[o] : 0.0f) + hsum(vacc);
        for (; i < in; ++i) acc += wo[i] * x[i];
        y[o] = acc;
    }
}

void linear_bwd_x_avx2(int in, int out, const float* gy, const float* w, float* gx) {
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        const float* wo = w + static_cast<std::size_t>(o) * in;
        const __m256 gv = _mm256_set1_ps(g);
        int i = 0;
        for (; i + 8 <= in; i += 8) {
            const __m256 acc = _mm256_loadu_ps(gx + i);
            _mm256_storeu_ps(gx + i,
                             _mm256_add_ps(acc, _mm256_mul_ps(gv, _mm256_loadu_ps(wo + i))));
        }
        for (; i < in; ++i) gx[i] += g * wo[i];
    }
}

void linear_bwd_w_avx2(int in, int out, const float* gy, const float* x, float* gw) {
    for (int o = 0; o < out; ++o) {
        const float g = gy[o];
        float* gwo = gw + static_cast<std::size_t>(o) * in;
        const __m256 gv = _mm256_set1_ps(g);
        int i = 0;
        for (; i + 8 <= in; i += 8) {
            const __m256 acc = _mm256_loadu_ps(gwo + i);
            _mm256_storeu_ps(gwo + i,
                             _mm256_add_ps(acc, _mm256_mul_ps(gv, _mm256_loadu_ps(x + i))));
        }
        for (; i < in; ++i) gwo[i] += g * x[i];
    }
}

void relu_fwd_avx2(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(const float* x, const float* gy, float* gx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        const __m256 old = _mm256_loadu_ps(gx + i);
        const __m256 sum = _mm256_add_ps(old, _mm256_loadu_ps(gy + i));
        // Untouched lanes keep their exact old bits.
        _mm256_storeu_ps(gx + i, _mm256_blendv_ps(old, sum, mask));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) gx[i] += gy[i];
    }
}

void scale_shift_avx2(const float* x, float a, float b, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    const __m256 bv = _mm256_set1_ps(b);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_mul_ps(av, _mm256_loadu_ps(x + i)), bv));
    }
    for (; i < n; ++i) y[i] = a * x[i] + b;
}

void saxpy_avx2(float a, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 acc = _mm256_loadu_ps(y + i);
        _mm256_storeu_ps(y + i, _mm256_add_ps(acc, _mm256_mul_ps(av, _mm256_loadu_ps(x + i))));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void conv1d_int8_avx2(const Conv1dShape& s, const std::int8_t* x, int x_zp,
                      const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc) {
    if (s.stride != 1) {
        scalar_ops().conv1d_int8(s, x, x_zp, w, bias, acc);
        return;
    }
    const int pad = (s.k - 1) * s.dilation;
    const __m256i zp = _mm256_set1_epi32(x_zp);
    for (int m = 0; m < s.c_out; ++m) {
        const std::int8_t* wm = w + static_cast<std::size_t>(m) * s.c_in * s.k;
        std::int32_t* am = acc + static_cast<std::size_t>(m) * s.t_out;
        const std::int32_t b = bias ? bias[m] : 0;

        auto scalar_one = [&](int to) {
            std::int32_t a = b;
            for (int l = 0; l < s.c_in; ++l) {
                const std::int8_t* xl = x + static_cast<std::size_t>(l) * s.t_in;
                const std::int8_t* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const int ti = to - s.dilation * i;
                    if (ti >= 0) a += (static_cast<std::int32_t>(xl[ti]) - x_zp) * wl[i];
                }
            }
            am[to] = a;
        };

        int to = 0;
        for (; to < s.t_out && to < pad; ++to) scalar_one(to);
        for (; to + 8 <= s.t_out; to += 8) {
            __m256i vacc = _mm256_set1_epi32(b);
            for (int l = 0; l < s.c_in; ++l) {
                const std::int8_t* xl = x + static_cast<std::size_t>(l) * s.t_in + to;
                const std::int8_t* wl = wm + static_cast<std::size_t>(l) * s.k;
                for (int i = 0; i < s.k; ++i) {
                    const __m128i raw = _mm_loadl_epi64(
                        reinterpret_cast<const __m128i*>(xl - s.dilation * i));
                    const __m256i xv = _mm256_sub_epi32(_mm256_cvtepi8_epi32(raw), zp);
                    const __m256i wv = _mm256_set1_epi32(wl[i]);
                    vacc = _mm256_add_epi32(vacc, _mm256_mullo_epi32(xv, wv));
                }
            }
            _mm256_storeu_si256(reinterpret_cast<__m256i*>(am + to), vacc);
        }
        for (; to < s.t_out; ++to) scalar_one(to);
    }
}

void linear_int8_avx2(int in, int out, const std::int8_t* x, int x_zp,
                      const std::int8_t* w, const std::int32_t* bias, std::int32_t* acc) {
    const __m256i zp = _mm256_set1_epi32(x_zp);
    for (int o = 0; o < out; ++o) {
        const std::int8_t* wo = w + static_cast<std::size_t>(o) * in;
        __m256i vacc = _mm256_setzero_si256();
        int i = 0;
        for (; i + 8 <= in; i += 8) {
            const __m128i xraw = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(x + i));
            const __m128i wraw = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(wo + i));
            const __m256i xv = _mm256_sub_epi32(_mm256_cvtepi8_epi32(xraw), zp);
            const __m256i wv = _mm256_cvtepi8_epi32(wraw);
            vacc = _mm256_add_epi32(vacc, _mm256_mullo_epi32(xv, wv));
        }
        alignas(32) std::int32_t lanes[8];
        _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), vacc);
        std::int32_t a = bias ? bias[o] : 0;
        for (int j = 0; j < 8; ++j) a += lanes[j];
        for (; i < in; ++i) a += (static_cast<std::int32_t>(x[i]) - x_zp) * wo[i];
        acc[o] = a;
    }
}

} // namespace

const Ops& avx2_ops() {
    static const Ops ops = {
        "avx2",
        conv1d_fwd_avx2,
        conv1d_bwd_x_avx2,
        conv1d_bwd_w_avx2,
        linear_fwd_avx2,
        linear_bwd_x_avx2,
        linear_bwd_w_avx2,
        relu_fwd_avx2,
        relu_bwd_avx2,
        scale_shift_avx2,
        saxpy_avx2,
        conv1d_int8_avx2,
        linear_int8_avx2,
    };
    return ops;
}

} // namespace ppgtcn::kernels

#endif // x86
