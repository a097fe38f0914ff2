#include "ppgtcn/kernels.hpp"

#include <atomic>
#include <cstdlib>

#include "ppgtcn/errors.hpp"

namespace ppgtcn::kernels {

bool avx2_compiled() {
#if defined(PPGTCN_HAVE_AVX2)
    return true;
#else
    return false;
#endif
}

#if !defined(PPGTCN_HAVE_AVX2)
const Ops& avx2_ops() { return scalar_ops(); }
#endif

bool avx2_available() {
#if defined(PPGTCN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

std::atomic<const Ops*> g_active{nullptr};

const Ops* select_default() {
    if (const char* env = std::getenv("PPGTCN_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return &scalar_ops();
        if (v == "avx2" && avx2_compiled() && avx2_available()) return &avx2_ops();
        // "auto" or anything else: fall through to detection.
    }
    return (avx2_compiled() && avx2_available()) ? &avx2_ops() : &scalar_ops();
}

} // namespace

const Ops& active() {
    const Ops* p = g_active.load(std::memory_order_acquire);
    if (!p) {
        p = select_default();
        g_active.store(p, std::memory_order_release);
    }
    return *p;
}

void force_backend(const std::string& name) {
    if (name == "scalar") {
        g_active.store(&scalar_ops(), std::memory_order_release);
    } else if (name == "avx2") {
        if (!(avx2_compiled() && avx2_available())) {
            throw ArgumentError("avx2 kernel backend is not available on this machine");
        }
        g_active.store(&avx2_ops(), std::memory_order_release);
    } else if (name == "auto") {
        g_active.store(select_default(), std::memory_order_release);
    } else {
        throw ArgumentError("unknown kernel backend '" + name + "'");
    }
}

} // namespace ppgtcn::kernels
