#include "ppgtcn/tensor.hpp"

#include <cmath>

namespace ppgtcn {

bool Tensor::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace ppgtcn
