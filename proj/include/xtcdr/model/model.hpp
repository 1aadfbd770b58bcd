// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xtcdr/nn/adam.hpp"
#include "xtcdr/nn/network.hpp"

namespace xtcdr::data {
struct PairedSample;
}

namespace xtcdr::model {

using nn::BasicTensor;
using nn::Mode;
using nn::Tensor;

struct LossWeights {
    double sim = 1.0;
    double orth = 1.0;
    double reco1 = 1.0;
    double reco2 = 1.0;
    double cross = 1.0;

    bool operator==(const LossWeights&) const = default;
};

inline constexpr std::array<const char*, 5> kLossNames = {"sim", "orth", "reco1", "reco2", "cross"};

/// Sets the named weight ("sim", "orth", "reco1", "reco2" or "cross") to
/// zero. Unknown names are configuration errors.
void ablate(LossWeights& weights, const std::string& name);

struct ModelConfig {
    std::size_t gene_dim = 0;
    std::vector<std::size_t> encoder_hidden = {1024, 512, 256};
    std::size_t latent_dim = 128;
    double dropout_rate = 0.2;
    LossWeights loss_weights;
    double lr = 2e-4;
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// G -> [dense -> BN -> ReLU -> dropout] per hidden width -> dense(latent).
nn::NetworkSpec encoder_spec(const ModelConfig& config);
/// Mirror of the encoder: latent -> reversed hidden blocks -> dense(G), linear output.
nn::NetworkSpec decoder_spec(const ModelConfig& config);

/// Independent parameter sets of the basal encoder, the perturbation encoder
/// and the shared decoder.
template <class T>
struct BasicModelParams {
    nn::BasicParamSet<T> basal;
    nn::BasicParamSet<T> perturbation;
    nn::BasicParamSet<T> decoder;

    template <class U>
    BasicModelParams<U> cast() const {
        return {basal.template cast<U>(), perturbation.template cast<U>(), decoder.template cast<U>()};
    }
    bool operator==(const BasicModelParams&) const = default;
};

using ModelParams = BasicModelParams<float>;

/// Network specs are derived once from a config and shared by every call.
struct Architecture {
    nn::NetworkSpec encoder;
    nn::NetworkSpec decoder;

    explicit Architecture(const ModelConfig& config);
};

ModelParams init_model(const ModelConfig& config);

struct OptimizerStates {
    nn::OptimizerState basal;
    nn::OptimizerState perturbation;
    nn::OptimizerState decoder;

    static OptimizerStates fresh(const ModelParams& params, double lr);
    bool operator==(const OptimizerStates&) const = default;
};

enum class LatentRole { Basal, Perturbation };

template <class T>
struct BasicLatent {
    BasicTensor<T> values;
    LatentRole role = LatentRole::Basal;
};

using LatentVector = BasicLatent<float>;

struct LossBreakdown {
    double sim = 0, orth = 0, reco1 = 0, reco2 = 0, cross = 0, total = 0;

    bool operator==(const LossBreakdown&) const = default;
};

double weighted_total(const LossBreakdown& losses, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Inference (eval mode unless `mode` says otherwise)

LatentVector encode_basal(const Architecture& arch, const ModelParams& params, const Tensor& x,
                          Mode mode = Mode::Eval, std::uint64_t rng_seed = 0);
LatentVector encode_perturbation(const Architecture& arch, const ModelParams& params, const Tensor& x,
                                 Mode mode = Mode::Eval, std::uint64_t rng_seed = 0);
Tensor decode(const Architecture& arch, const ModelParams& params, const Tensor& z, Mode mode = Mode::Eval,
              std::uint64_t rng_seed = 0);

/// D(E_s(target_control) + E_p(source_perturbed)). A single control row is
/// broadcast over every source row.
Tensor predict_transfer(const Architecture& arch, const ModelParams& params, const Tensor& source_perturbed,
                        const Tensor& target_control);

/// D(E_s(control) + E_p(pert_a) + E_p(pert_b)), with the same broadcasting rule.
Tensor predict_combo(const Architecture& arch, const ModelParams& params, const Tensor& pert_a,
                     const Tensor& pert_b, const Tensor& control);

// ---------------------------------------------------------------------------
// Loss terms. Each `*_grad` variant returns the value and adds d(value)/d(input)
// scaled by `scale` into the provided gradient tensors.

/// (1/N) sum_i (Pa_i . Sa_i)^2 + (Pb_i . Sb_i)^2
template <class T>
double loss_orth(const BasicTensor<T>& pa, const BasicTensor<T>& sa, const BasicTensor<T>& pb,
                 const BasicTensor<T>& sb);

/// Batch mean of KL(softmax(Sa_i) || softmax(Sb_i)), natural log.
template <class T>
double loss_sim(const BasicTensor<T>& sa, const BasicTensor<T>& sb);

/// (1/N) sum_i ||pred1_i - target1_i||^2 + ||pred2_i - target2_i||^2; the
/// shared reduction behind both reconstruction losses and the cross loss.
template <class T>
double paired_squared_error(const BasicTensor<T>& pred1, const BasicTensor<T>& target1,
                            const BasicTensor<T>& pred2, const BasicTensor<T>& target2);

template <class T>
double loss_orth_grad(const BasicTensor<T>& pa, const BasicTensor<T>& sa, const BasicTensor<T>& pb,
                      const BasicTensor<T>& sb, T scale, BasicTensor<T>& dpa, BasicTensor<T>& dsa,
                      BasicTensor<T>& dpb, BasicTensor<T>& dsb);

template <class T>
double loss_sim_grad(const BasicTensor<T>& sa, const BasicTensor<T>& sb, T scale, BasicTensor<T>& dsa,
                     BasicTensor<T>& dsb);

/// Model-level wrappers that run the decoder in eval mode.
double loss_reco1(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& sb,
                  const Tensor& x);
double loss_reco2(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& pa,
                  const Tensor& sb, const Tensor& pb, const Tensor& xa, const Tensor& xb);
double loss_cross(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& pa,
                  const Tensor& sb, const Tensor& pb, const Tensor& xa, const Tensor& xb);

// ---------------------------------------------------------------------------
// Full objective

template <class T>
struct BasicPairBatch {
    BasicTensor<T> control;  // X
    BasicTensor<T> pert_a;   // X^(a)
    BasicTensor<T> pert_b;   // X^(b)

    std::size_t size() const { return control.rows(); }
};

using PairBatch = BasicPairBatch<float>;

PairBatch make_batch(const std::vector<data::PairedSample>& pairs, const std::vector<std::size_t>& indices);
PairBatch make_batch(const std::vector<data::PairedSample>& pairs);

template <class T>
struct ObjectiveResult {
    LossBreakdown losses;
    BasicModelParams<T> grads;  // trainable entries only; empty unless requested
    std::vector<nn::BatchStats<T>> basal_stats, perturbation_stats, decoder_stats;
    /// Combined ReLU on/off pattern of every network pass.
    std::uint64_t relu_digest = 0;
};

/// Evaluates every loss term on one batch. In train mode with
/// `with_gradients`, also returns gradients of the weighted total. The basal
/// and perturbation encoders run once per input and their outputs feed all
/// terms.
template <class T>
ObjectiveResult<T> objective(const Architecture& arch, const BasicModelParams<T>& params,
                             const BasicPairBatch<T>& batch, const LossWeights& weights, Mode mode,
                             std::uint64_t rng_seed, bool with_gradients);

struct StepResult {
    ModelParams params;
    OptimizerStates opt;
    LossBreakdown losses;
};

/// One optimization step: objective, reverse pass, one Adam update per
/// parameter set, batchnorm running-statistic commits.
void training_step_inplace(const Architecture& arch, ModelParams& params, OptimizerStates& opt,
                           const PairBatch& batch, const ModelConfig& config, std::uint64_t rng_seed,
                           LossBreakdown& losses);

StepResult training_step(const Architecture& arch, ModelParams params, OptimizerStates opt, const PairBatch& batch,
                         const ModelConfig& config, std::uint64_t rng_seed);

}  // namespace xtcdr::model
