#pragma once

#include <vector>

#include "ppgtcn/tensor.hpp"

namespace ppgtcn {

/// A labeled collection of input windows, each [C,T].
struct WindowSet {
    std::vector<Tensor> windows;
    std::vector<float> labels;

    std::size_t size() const noexcept { return windows.size(); }
    bool empty() const noexcept { return windows.empty(); }

    void push(Tensor w, float label) {
        windows.push_back(std::move(w));
        labels.push_back(label);
    }

    void append(const WindowSet& other) {
        windows.insert(windows.end(), other.windows.begin(), other.windows.end());
        labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    }
};

struct SubjectWindows {
    int subject_id = 0;
    WindowSet set;
};

/// Stack windows[indices] into a [B,C,T] batch tensor.
inline Tensor stack_windows(const std::vector<Tensor>& windows, const std::vector<int>& indices) {
    if (indices.empty()) throw ArgumentError("stack_windows: empty index list");
    const Tensor& first = windows.at(static_cast<std::size_t>(indices[0]));
    const int c = first.dim(0), t = first.dim(1);
    Tensor out({static_cast<int>(indices.size()), c, t});
    const std::size_t step = static_cast<std::size_t>(c) * t;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& w = windows.at(static_cast<std::size_t>(indices[i]));
        if (w.dim(0) != c || w.dim(1) != t) {
            throw DimensionError("stack_windows: inconsistent window shapes");
        }
        std::copy(w.data(), w.data() + step, out.data() + i * step);
    }
    return out;
}

} // namespace ppgtcn
