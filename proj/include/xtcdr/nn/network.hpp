// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xtcdr/nn/tensor.hpp"

namespace xtcdr::nn {

enum class LayerKind { Dense, Relu, BatchNorm, Dropout };

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t in_dim = 0;   // dense only
    std::size_t out_dim = 0;  // dense only
    double rate = 0.0;        // dropout only
    double eps = 1e-5;        // batchnorm only

    static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::Dense, in, out, 0.0, 1e-5}; }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0.0, 1e-5}; }
    static LayerSpec batchnorm(double eps = 1e-5) { return {LayerKind::BatchNorm, 0, 0, 0.0, eps}; }
    static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, rate, 1e-5}; }

    bool operator==(const LayerSpec&) const = default;
};

/// Ordered stack of layers. Widths of non-dense layers are inferred from the
/// preceding dense layer, so the first layer must be dense.
struct NetworkSpec {
    std::vector<LayerSpec> layers;

    /// Throws a configuration error when dims do not chain or a layer field is
    /// out of range.
    void validate() const;
    std::size_t input_width() const;
    std::size_t output_width() const;
    /// Feature width flowing into layer `index`.
    std::size_t width_at(std::size_t index) const;
};

enum class Mode { Train, Eval };

inline constexpr double kBatchNormMomentum = 0.1;

template <class T>
struct ParamEntry {
    std::string name;
    BasicTensor<T> value;
    bool trainable = true;

    bool operator==(const ParamEntry&) const = default;
};

/// Named tensors in insertion order. Layer `i` owns `L<i>.weight`,
/// `L<i>.bias` (dense) or `L<i>.gamma`, `L<i>.beta`, `L<i>.running_mean`,
/// `L<i>.running_var` (batchnorm; running statistics are not trainable).
template <class T>
class BasicParamSet {
public:
    void add(std::string name, BasicTensor<T> value, bool trainable = true);

    BasicTensor<T>* find(const std::string& name);
    const BasicTensor<T>* find(const std::string& name) const;
    BasicTensor<T>& at(const std::string& name);
    const BasicTensor<T>& at(const std::string& name) const;

    std::vector<ParamEntry<T>>& entries() noexcept { return entries_; }
    const std::vector<ParamEntry<T>>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Trainable entries only, zero-filled; the layout gradients use.
    BasicParamSet zeros_like_trainable() const;

    template <class U>
    BasicParamSet<U> cast() const {
        BasicParamSet<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
        return out;
    }

    bool operator==(const BasicParamSet&) const = default;

private:
    std::vector<ParamEntry<T>> entries_;
};

using ParamSet = BasicParamSet<float>;

std::string param_name(std::size_t layer, const char* field);

/// Uniform(-1/sqrt(in), 1/sqrt(in)) dense weights, zero biases, identity
/// batchnorm with running mean 0 and variance 1.
template <class T = float>
BasicParamSet<T> init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Per-feature statistics of one batchnorm layer on one training batch.
/// `variance` is the unbiased estimate fed to the running average.
template <class T>
struct BatchStats {
    std::size_t layer = 0;
    std::vector<T> mean;
    std::vector<T> variance;
};

template <class T>
struct LayerRecord {
    BasicTensor<T> input;
    BasicTensor<T> aux;       // batchnorm: normalized input; dropout: scaled keep mask
    std::vector<T> inv_std;   // batchnorm only
};

/// Intermediates retained by a forward pass. Holds pointers to the spec and
/// parameters it was produced from; both must outlive the trace unchanged.
template <class T>
struct BasicTrace {
    const NetworkSpec* spec = nullptr;
    const BasicParamSet<T>* params = nullptr;
    Mode mode = Mode::Eval;
    std::size_t batch = 0;
    std::vector<LayerRecord<T>> records;

    /// Digest of every ReLU's on/off pattern; equal digests mean the traced
    /// function is locally the same smooth piece.
    std::uint64_t relu_pattern_digest() const;
};

template <class T>
struct ForwardResult {
    BasicTensor<T> output;
    BasicTrace<T> trace;
    std::vector<BatchStats<T>> batch_stats;  // train mode only
};

template <class T>
ForwardResult<T> forward(const NetworkSpec& spec, const BasicParamSet<T>& params, const BasicTensor<T>& x,
                         Mode mode, std::uint64_t rng_seed);

template <class T>
struct Gradients {
    BasicParamSet<T> params;  // trainable entries only
    BasicTensor<T> input;
};

/// Adds parameter gradients of the traced computation into `accum` (laid out
/// by `zeros_like_trainable`) and returns the input gradient.
template <class T>
BasicTensor<T> backward_into(const BasicTrace<T>& trace, const BasicTensor<T>& upstream,
                             BasicParamSet<T>& accum);

template <class T>
Gradients<T> backward(const BasicTrace<T>& trace, const BasicTensor<T>& upstream);

/// running = (1 - momentum) * running + momentum * batch, for each layer in
/// `stats`.
template <class T>
void commit_running_stats(BasicParamSet<T>& params, const std::vector<BatchStats<T>>& stats,
                          double momentum = kBatchNormMomentum);

template <class T>
void accumulate(BasicParamSet<T>& into, const BasicParamSet<T>& grads);

}  // namespace xtcdr::nn
