#pragma once

#include <functional>
#include <vector>

#include "ppgtcn/tensor.hpp"

namespace ppgtcn {

enum class Mode { Train, Infer };

/// Reverse-mode tape over the layer set used by the networks here.
/// Values (activations and watched parameters) live in tape slots; each
/// executed op records a node whose backward reads the output slot's gradient
/// and accumulates into the input slots'. backward() replays the record in
/// exact reverse order of the forward execution. Single-threaded by design;
/// run independent tapes for parallelism.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    int push_value(Tensor t) {
        values_.push_back(std::move(t));
        grads_.emplace_back();
        return static_cast<int>(values_.size()) - 1;
    }

    /// Register a parameter (copied in); gradients accumulate in its slot.
    int watch(const Tensor& t) { return push_value(t); }

    const Tensor& value(int id) const { return values_.at(static_cast<std::size_t>(id)); }

    /// Gradient buffer for a slot, zero-initialized on first use.
    Tensor& grad(int id) {
        auto& g = grads_.at(static_cast<std::size_t>(id));
        if (g.numel() == 0) g = Tensor(values_[static_cast<std::size_t>(id)].shape());
        return g;
    }

    bool grad_touched(int id) const { return grads_.at(static_cast<std::size_t>(id)).numel() != 0; }

    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    /// Seed d(loss)/d(loss) = 1 and run all recorded nodes newest-first.
    void backward(int loss_id);

    std::size_t num_ops() const noexcept { return nodes_.size(); }

private:
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<std::function<void()>> nodes_;
};

namespace ops {

/// Causal dilated convolution. x: [B,C_in,T], w: [C_out,C_in,K], b: [C_out].
/// Output index t reads inputs t*stride - dilation*i (left zero padding).
int conv1d_causal(GradTape& tape, int x, int w, int b, int dilation, int stride);

/// Batch normalization over (batch, time) per channel. x: [B,C,L] or [B,C].
/// Train mode normalizes with batch statistics (eps 1e-5) and updates the
/// running stats in place (momentum 0.1); infer mode reads them.
int batchnorm(GradTape& tape, int x, int gamma, int beta,
              Tensor& running_mean, Tensor& running_var, Mode mode);

int relu(GradTape& tape, int x);

/// Mean pooling over windows of `window` samples, step `stride`.
int avgpool1d(GradTape& tape, int x, int window, int stride);

/// [B,C,T] -> [B,C*T]
int flatten(GradTape& tape, int x);

/// x: [B,In], w: [Out,In], b: [Out] -> [B,Out]
int linear(GradTape& tape, int x, int w, int b);

/// Mean over the batch of log(cosh(pred - target)), overflow-safe.
/// pred: [B] or [B,1]; target: [B]. Returns a scalar slot.
int logcosh_loss(GradTape& tape, int pred, const Tensor& target);

/// Sum of all elements (test utility for gradient checks).
int sum(GradTape& tape, int x);

} // namespace ops

/// Standalone overflow-safe log(cosh(e)) used by the loss and its tests.
float logcosh(float e);

} // namespace ppgtcn
