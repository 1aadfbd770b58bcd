// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "xtcdr/data/split.hpp"
#include "xtcdr/rng.hpp"

namespace xtcdr::model {

using nn::BasicParamSet;
using nn::LayerSpec;
using nn::NetworkSpec;

void ablate(LossWeights& w, const std::string& name) {
    if (name == "sim") w.sim = 0;
    else if (name == "orth") w.orth = 0;
    else if (name == "reco1") w.reco1 = 0;
    else if (name == "reco2") w.reco2 = 0;
    else if (name == "cross") w.cross = 0;
    else fail(ErrorKind::Config, "unknown loss term '" + name + "' (expected sim, orth, reco1, reco2, cross)");
}

void ModelConfig::validate() const {
    if (gene_dim < 1) fail(ErrorKind::Config, "gene_dim must be >= 1");
    if (latent_dim < 1) fail(ErrorKind::Config, "latent_dim must be >= 1");
    for (auto h : encoder_hidden)
        if (h < 1) fail(ErrorKind::Config, "hidden widths must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::Config, "dropout_rate must lie in [0, 1)");
    const auto& w = loss_weights;
    for (double v : {w.sim, w.orth, w.reco1, w.reco2, w.cross})
        if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::Config, "loss weights must be finite and >= 0");
    if (!(lr > 0.0)) fail(ErrorKind::Config, "lr must be > 0");
    if (batch_size < 2) fail(ErrorKind::Config, "batch_size must be >= 2");
}

namespace {

NetworkSpec stack(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, double dropout) {
    NetworkSpec spec;
    std::size_t prev = in;
    for (auto h : hidden) {
        spec.layers.push_back(LayerSpec::dense(prev, h));
        spec.layers.push_back(LayerSpec::batchnorm());
        spec.layers.push_back(LayerSpec::relu());
        spec.layers.push_back(LayerSpec::dropout(dropout));
        prev = h;
    }
    spec.layers.push_back(LayerSpec::dense(prev, out));
    spec.validate();
    return spec;
}

}  // namespace

NetworkSpec encoder_spec(const ModelConfig& c) {
    c.validate();
    return stack(c.gene_dim, c.encoder_hidden, c.latent_dim, c.dropout_rate);
}

NetworkSpec decoder_spec(const ModelConfig& c) {
    c.validate();
    std::vector<std::size_t> hidden(c.encoder_hidden.rbegin(), c.encoder_hidden.rend());
    return stack(c.latent_dim, hidden, c.gene_dim, c.dropout_rate);
}

Architecture::Architecture(const ModelConfig& config) : encoder(encoder_spec(config)), decoder(decoder_spec(config)) {}

ModelParams init_model(const ModelConfig& config) {
    const Architecture arch(config);
    return {nn::init_params<float>(arch.encoder, derive_seed(config.seed, {1})),
            nn::init_params<float>(arch.encoder, derive_seed(config.seed, {2})),
            nn::init_params<float>(arch.decoder, derive_seed(config.seed, {3}))};
}

OptimizerStates OptimizerStates::fresh(const ModelParams& params, double lr) {
    nn::AdamHyper h;
    h.lr = lr;
    return {nn::OptimizerState::fresh(params.basal, h), nn::OptimizerState::fresh(params.perturbation, h),
            nn::OptimizerState::fresh(params.decoder, h)};
}

double weighted_total(const LossBreakdown& l, const LossWeights& w) {
    return w.sim * l.sim + w.orth * l.orth + w.reco1 * l.reco1 + w.reco2 * l.reco2 + w.cross * l.cross;
}

// ---------------------------------------------------------------------------
// Loss terms

namespace {

template <class T>
void require_batch(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape())
        fail(ErrorKind::Shape, std::string(what) + ": shape mismatch " + nn::shape_string(a.shape()) + " vs " +
                                   nn::shape_string(b.shape()));
    if (a.rows() < 1) fail(ErrorKind::Shape, std::string(what) + ": empty batch");
}

template <class T>
double row_dot(std::span<const T> a, std::span<const T> b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += double(a[k]) * double(b[k]);
    return s;
}

void log_softmax(std::span<const double> x, std::vector<double>& out) {
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0;
    for (double v : x) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    out.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - lz;
}

template <class T>
double sim_impl(const BasicTensor<T>& sa, const BasicTensor<T>& sb, T scale, BasicTensor<T>* dsa,
                BasicTensor<T>* dsb) {
    require_batch(sa, sb, "loss_sim");
    const std::size_t n = sa.rows(), d = sa.cols();
    std::vector<double> a(d), b(d), lp, lq;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            a[k] = double(sa.at(i, k));
            b[k] = double(sb.at(i, k));
        }
        log_softmax(a, lp);
        log_softmax(b, lq);
        double kl = 0;
        for (std::size_t k = 0; k < d; ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
        total += kl;
        if (dsa) {
            // dKL/da_k = p_k (log p_k - log q_k - KL); dKL/db_k = q_k - p_k
            const double f = double(scale) / double(n);
            for (std::size_t k = 0; k < d; ++k) {
                const double p = std::exp(lp[k]), q = std::exp(lq[k]);
                dsa->at(i, k) += T(f * p * (lp[k] - lq[k] - kl));
                dsb->at(i, k) += T(f * (q - p));
            }
        }
    }
    return total / double(n);
}

template <class T>
double orth_impl(const BasicTensor<T>& pa, const BasicTensor<T>& sa, const BasicTensor<T>& pb,
                 const BasicTensor<T>& sb, T scale, BasicTensor<T>* dpa, BasicTensor<T>* dsa, BasicTensor<T>* dpb,
                 BasicTensor<T>* dsb) {
    require_batch(pa, sa, "loss_orth");
    require_batch(pb, sb, "loss_orth");
    require_batch(pa, pb, "loss_orth");
    const std::size_t n = pa.rows(), d = pa.cols();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = row_dot(pa.row(i), sa.row(i));
        const double db = row_dot(pb.row(i), sb.row(i));
        total += da * da + db * db;
        if (dpa) {
            const double f = 2.0 * double(scale) / double(n);
            for (std::size_t k = 0; k < d; ++k) {
                dpa->at(i, k) += T(f * da * double(sa.at(i, k)));
                dsa->at(i, k) += T(f * da * double(pa.at(i, k)));
                dpb->at(i, k) += T(f * db * double(sb.at(i, k)));
                dsb->at(i, k) += T(f * db * double(pb.at(i, k)));
            }
        }
    }
    return total / double(n);
}

template <class T>
double sum_squared_rows(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    double s = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double e = double(pred[k]) - double(target[k]);
        s += e * e;
    }
    return s;
}

}  // namespace

template <class T>
double loss_orth(const BasicTensor<T>& pa, const BasicTensor<T>& sa, const BasicTensor<T>& pb,
                 const BasicTensor<T>& sb) {
    return orth_impl<T>(pa, sa, pb, sb, T(1), nullptr, nullptr, nullptr, nullptr);
}

template <class T>
double loss_orth_grad(const BasicTensor<T>& pa, const BasicTensor<T>& sa, const BasicTensor<T>& pb,
                      const BasicTensor<T>& sb, T scale, BasicTensor<T>& dpa, BasicTensor<T>& dsa,
                      BasicTensor<T>& dpb, BasicTensor<T>& dsb) {
    return orth_impl<T>(pa, sa, pb, sb, scale, &dpa, &dsa, &dpb, &dsb);
}

template <class T>
double loss_sim(const BasicTensor<T>& sa, const BasicTensor<T>& sb) {
    return sim_impl<T>(sa, sb, T(1), nullptr, nullptr);
}

template <class T>
double loss_sim_grad(const BasicTensor<T>& sa, const BasicTensor<T>& sb, T scale, BasicTensor<T>& dsa,
                     BasicTensor<T>& dsb) {
    return sim_impl<T>(sa, sb, scale, &dsa, &dsb);
}

template <class T>
double paired_squared_error(const BasicTensor<T>& pred1, const BasicTensor<T>& target1, const BasicTensor<T>& pred2,
                            const BasicTensor<T>& target2) {
    require_batch(pred1, target1, "squared error");
    require_batch(pred2, target2, "squared error");
    require_batch(pred1, pred2, "squared error");
    return (sum_squared_rows(pred1, target1) + sum_squared_rows(pred2, target2)) / double(pred1.rows());
}

// ---------------------------------------------------------------------------
// Inference

LatentVector encode_basal(const Architecture& arch, const ModelParams& params, const Tensor& x, Mode mode,
                          std::uint64_t seed) {
    return {nn::forward(arch.encoder, params.basal, x, mode, seed).output, LatentRole::Basal};
}

LatentVector encode_perturbation(const Architecture& arch, const ModelParams& params, const Tensor& x, Mode mode,
                                 std::uint64_t seed) {
    return {nn::forward(arch.encoder, params.perturbation, x, mode, seed).output, LatentRole::Perturbation};
}

Tensor decode(const Architecture& arch, const ModelParams& params, const Tensor& z, Mode mode, std::uint64_t seed) {
    return nn::forward(arch.decoder, params.decoder, z, mode, seed).output;
}

namespace {

// Adds `delta` into `base`, broadcasting a single-row operand over the other.
Tensor broadcast_add(const Tensor& base, const Tensor& delta) {
    if (base.rank() != 2 || delta.rank() != 2 || base.cols() != delta.cols())
        fail(ErrorKind::Shape, "latent add: shape mismatch " + nn::shape_string(base.shape()) + " vs " +
                                   nn::shape_string(delta.shape()));
    if (base.rows() == delta.rows()) return base + delta;
    if (base.rows() != 1 && delta.rows() != 1)
        fail(ErrorKind::Shape, "latent add: batch sizes " + std::to_string(base.rows()) + " and " +
                                   std::to_string(delta.rows()) + " cannot broadcast");
    const Tensor& one = base.rows() == 1 ? base : delta;
    Tensor out = base.rows() == 1 ? delta : base;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += one[c];
    }
    return out;
}

}  // namespace

Tensor predict_transfer(const Architecture& arch, const ModelParams& params, const Tensor& source_perturbed,
                        const Tensor& target_control) {
    const auto s = encode_basal(arch, params, target_control);
    const auto p = encode_perturbation(arch, params, source_perturbed);
    return decode(arch, params, broadcast_add(s.values, p.values));
}

Tensor predict_combo(const Architecture& arch, const ModelParams& params, const Tensor& pert_a, const Tensor& pert_b,
                     const Tensor& control) {
    const auto s = encode_basal(arch, params, control);
    const auto pa = encode_perturbation(arch, params, pert_a);
    const auto pb = encode_perturbation(arch, params, pert_b);
    return decode(arch, params, broadcast_add(broadcast_add(s.values, pa.values), pb.values));
}

double loss_reco1(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& sb,
                  const Tensor& x) {
    return paired_squared_error(decode(arch, params, sa), x, decode(arch, params, sb), x);
}

double loss_reco2(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& pa,
                  const Tensor& sb, const Tensor& pb, const Tensor& xa, const Tensor& xb) {
    return paired_squared_error(decode(arch, params, sa + pa), xa, decode(arch, params, sb + pb), xb);
}

double loss_cross(const Architecture& arch, const ModelParams& params, const Tensor& sa, const Tensor& pa,
                  const Tensor& sb, const Tensor& pb, const Tensor& xa, const Tensor& xb) {
    return paired_squared_error(decode(arch, params, sb + pa), xa, decode(arch, params, sa + pb), xb);
}

// ---------------------------------------------------------------------------
// Objective

PairBatch make_batch(const std::vector<data::PairedSample>& pairs, const std::vector<std::size_t>& indices) {
    if (indices.empty()) fail(ErrorKind::Shape, "make_batch: empty batch");
    const std::size_t g = pairs.at(indices.front()).x_a.size();
    PairBatch b{Tensor({indices.size(), g}), Tensor({indices.size(), g}), Tensor({indices.size(), g})};
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& p = pairs.at(indices[r]);
        if (p.x_a.size() != g || p.x_b.size() != g || p.x_control.size() != g)
            fail(ErrorKind::Shape, "make_batch: pairs disagree on gene dimension");
        std::copy(p.x_control.begin(), p.x_control.end(), b.control.row(r).begin());
        std::copy(p.x_a.begin(), p.x_a.end(), b.pert_a.row(r).begin());
        std::copy(p.x_b.begin(), p.x_b.end(), b.pert_b.row(r).begin());
    }
    return b;
}

PairBatch make_batch(const std::vector<data::PairedSample>& pairs) {
    std::vector<std::size_t> all(pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return make_batch(pairs, all);
}

namespace {

template <class T>
void add_squared_error_grad(const BasicTensor<T>& pred, const BasicTensor<T>& target, double scale,
                            BasicTensor<T>& out) {
    out = BasicTensor<T>(pred.shape());
    for (std::size_t k = 0; k < pred.size(); ++k) out[k] = T(scale * (double(pred[k]) - double(target[k])));
}

void check_finite(const LossBreakdown& l) {
    const std::pair<const char*, double> terms[] = {
        {"sim", l.sim}, {"orth", l.orth}, {"reco1", l.reco1}, {"reco2", l.reco2}, {"cross", l.cross}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string("non-finite loss term '") + name + "'");
}

}  // namespace

template <class T>
ObjectiveResult<T> objective(const Architecture& arch, const BasicModelParams<T>& params,
                             const BasicPairBatch<T>& batch, const LossWeights& w, Mode mode, std::uint64_t seed,
                             bool with_gradients) {
    const std::size_t g = arch.encoder.input_width();
    nn::require_matrix(batch.pert_a, g, "objective X(a)");
    nn::require_matrix(batch.pert_b, g, "objective X(b)");
    nn::require_matrix(batch.control, g, "objective X");
    if (batch.pert_a.rows() != batch.pert_b.rows() || batch.pert_a.rows() != batch.control.rows())
        fail(ErrorKind::Shape, "objective: batch members disagree on size");

    auto enc = [&](const BasicParamSet<T>& p, const BasicTensor<T>& x, std::uint64_t k) {
        return nn::forward(arch.encoder, p, x, mode, derive_seed(seed, {k}));
    };
    const auto sa = enc(params.basal, batch.pert_a, 1);
    const auto sb = enc(params.basal, batch.pert_b, 2);
    const auto pa = enc(params.perturbation, batch.pert_a, 3);
    const auto pb = enc(params.perturbation, batch.pert_b, 4);

    // Decoder paths: D(Sa), D(Sb), D(Sa+Pa), D(Sb+Pb), D(Sb+Pa), D(Sa+Pb).
    const BasicTensor<T> z[6] = {sa.output,
                                 sb.output,
                                 sa.output + pa.output,
                                 sb.output + pb.output,
                                 sb.output + pa.output,
                                 sa.output + pb.output};
    std::vector<nn::ForwardResult<T>> dec;
    dec.reserve(6);
    for (std::uint64_t k = 0; k < 6; ++k)
        dec.push_back(nn::forward(arch.decoder, params.decoder, z[k], mode, derive_seed(seed, {10 + k})));
    const BasicTensor<T>* target[6] = {&batch.control, &batch.control, &batch.pert_a,
                                       &batch.pert_b,  &batch.pert_a,  &batch.pert_b};

    ObjectiveResult<T> res;
    auto& l = res.losses;
    l.sim = loss_sim(sa.output, sb.output);
    l.orth = loss_orth(pa.output, sa.output, pb.output, sb.output);
    l.reco1 = paired_squared_error(dec[0].output, *target[0], dec[1].output, *target[1]);
    l.reco2 = paired_squared_error(dec[2].output, *target[2], dec[3].output, *target[3]);
    l.cross = paired_squared_error(dec[4].output, *target[4], dec[5].output, *target[5]);
    check_finite(l);
    l.total = weighted_total(l, w);
    res.relu_digest = 0;
    for (const auto* r : {&sa, &sb, &pa, &pb})
        res.relu_digest = splitmix64(res.relu_digest ^ r->trace.relu_pattern_digest());
    for (const auto& r : dec) res.relu_digest = splitmix64(res.relu_digest ^ r.trace.relu_pattern_digest());

    if (mode == Mode::Train) {
        for (const auto* r : {&sa, &sb}) res.basal_stats.insert(res.basal_stats.end(), r->batch_stats.begin(), r->batch_stats.end());
        for (const auto* r : {&pa, &pb})
            res.perturbation_stats.insert(res.perturbation_stats.end(), r->batch_stats.begin(), r->batch_stats.end());
        for (const auto& r : dec) res.decoder_stats.insert(res.decoder_stats.end(), r.batch_stats.begin(), r.batch_stats.end());
    }
    if (!with_gradients) return res;
    if (mode != Mode::Train) fail(ErrorKind::Usage, "objective gradients require train mode");

    res.grads = {params.basal.zeros_like_trainable(), params.perturbation.zeros_like_trainable(),
                 params.decoder.zeros_like_trainable()};
    const std::size_t n = batch.size();
    BasicTensor<T> dsa(sa.output.shape()), dsb(sb.output.shape()), dpa(pa.output.shape()), dpb(pb.output.shape());
    if (w.sim != 0) loss_sim_grad(sa.output, sb.output, T(w.sim), dsa, dsb);
    if (w.orth != 0) loss_orth_grad(pa.output, sa.output, pb.output, sb.output, T(w.orth), dpa, dsa, dpb, dsb);

    const double path_weight[6] = {w.reco1, w.reco1, w.reco2, w.reco2, w.cross, w.cross};
    BasicTensor<T>* basal_slot[6] = {&dsa, &dsb, &dsa, &dsb, &dsb, &dsa};
    BasicTensor<T>* pert_slot[6] = {nullptr, nullptr, &dpa, &dpb, &dpa, &dpb};
    BasicTensor<T> dout;
    for (std::size_t k = 0; k < 6; ++k) {
        if (path_weight[k] == 0) continue;
        add_squared_error_grad(dec[k].output, *target[k], 2.0 * path_weight[k] / double(n), dout);
        const auto dz = nn::backward_into(dec[k].trace, dout, res.grads.decoder);
        *basal_slot[k] += dz;
        if (pert_slot[k]) *pert_slot[k] += dz;
    }
    nn::backward_into(sa.trace, dsa, res.grads.basal);
    nn::backward_into(sb.trace, dsb, res.grads.basal);
    nn::backward_into(pa.trace, dpa, res.grads.perturbation);
    nn::backward_into(pb.trace, dpb, res.grads.perturbation);
    return res;
}

void training_step_inplace(const Architecture& arch, ModelParams& params, OptimizerStates& opt, const PairBatch& batch,
                           const ModelConfig& config, std::uint64_t seed, LossBreakdown& losses) {
    if (batch.size() < 2) fail(ErrorKind::Shape, "training step needs a batch of at least 2 pairs");
    auto res = objective<float>(arch, params, batch, config.loss_weights, Mode::Train, seed, true);
    nn::adam_update(params.basal, res.grads.basal, opt.basal);
    nn::adam_update(params.perturbation, res.grads.perturbation, opt.perturbation);
    nn::adam_update(params.decoder, res.grads.decoder, opt.decoder);
    nn::commit_running_stats(params.basal, res.basal_stats);
    nn::commit_running_stats(params.perturbation, res.perturbation_stats);
    nn::commit_running_stats(params.decoder, res.decoder_stats);
    losses = res.losses;
}

StepResult training_step(const Architecture& arch, ModelParams params, OptimizerStates opt, const PairBatch& batch,
                         const ModelConfig& config, std::uint64_t seed) {
    StepResult out{std::move(params), std::move(opt), {}};
    training_step_inplace(arch, out.params, out.opt, batch, config, seed, out.losses);
    return out;
}

#define XTCDR_INSTANTIATE(T)                                                                                      \
    template double loss_orth<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                 const BasicTensor<T>&);                                                         \
    template double loss_sim<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
    template double paired_squared_error<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                            const BasicTensor<T>&);                                              \
    template double loss_orth_grad<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                      const BasicTensor<T>&, T, BasicTensor<T>&, BasicTensor<T>&,                \
                                      BasicTensor<T>&, BasicTensor<T>&);                                         \
    template double loss_sim_grad<T>(const BasicTensor<T>&, const BasicTensor<T>&, T, BasicTensor<T>&,           \
                                     BasicTensor<T>&);                                                           \
    template ObjectiveResult<T> objective<T>(const Architecture&, const BasicModelParams<T>&,                    \
                                             const BasicPairBatch<T>&, const LossWeights&, Mode, std::uint64_t,  \
                                             bool);

XTCDR_INSTANTIATE(float)
XTCDR_INSTANTIATE(double)

#undef XTCDR_INSTANTIATE

}  // namespace xtcdr::model
