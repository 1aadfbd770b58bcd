// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/nn/network.hpp"

#include <Eigen/Core>
#include <random>
#include <sstream>

#include "xtcdr/rng.hpp"

namespace xtcdr::nn {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <class T>
MatMap<T> as_matrix(BasicTensor<T>& t) {
    return MatMap<T>(t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}
template <class T>
ConstMatMap<T> as_matrix(const BasicTensor<T>& t) {
    return ConstMatMap<T>(t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}

[[noreturn]] void bad_spec(std::size_t i, const std::string& why) {
    fail(ErrorKind::Config, "network spec layer " + std::to_string(i) + ": " + why);
}

template <class T>
void require_finite(const BasicTensor<T>& t, const char* stage, std::size_t layer) {
    if (!t.all_finite())
        fail(ErrorKind::Numeric, std::string(stage) + ": non-finite value at layer " + std::to_string(layer));
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

std::string param_name(std::size_t layer, const char* field) {
    return "L" + std::to_string(layer) + "." + field;
}

void NetworkSpec::validate() const {
    if (layers.empty()) fail(ErrorKind::Config, "network spec has no layers");
    if (layers.front().kind != LayerKind::Dense) bad_spec(0, "first layer must be dense");
    std::size_t width = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        switch (l.kind) {
            case LayerKind::Dense:
                if (l.in_dim < 1 || l.out_dim < 1) bad_spec(i, "dense dims must be >= 1");
                if (i > 0 && l.in_dim != width)
                    bad_spec(i, "dense in_dim " + std::to_string(l.in_dim) + " does not match width " +
                                    std::to_string(width));
                width = l.out_dim;
                break;
            case LayerKind::Dropout:
                if (!(l.rate >= 0.0 && l.rate < 1.0)) bad_spec(i, "dropout rate must lie in [0, 1)");
                break;
            case LayerKind::BatchNorm:
                if (!(l.eps > 0.0)) bad_spec(i, "batchnorm eps must be > 0");
                break;
            case LayerKind::Relu:
                break;
        }
    }
}

std::size_t NetworkSpec::input_width() const {
    return layers.empty() ? 0 : layers.front().in_dim;
}

std::size_t NetworkSpec::output_width() const { return width_at(layers.size()); }

std::size_t NetworkSpec::width_at(std::size_t index) const {
    std::size_t width = input_width();
    for (std::size_t i = 0; i < index && i < layers.size(); ++i)
        if (layers[i].kind == LayerKind::Dense) width = layers[i].out_dim;
    return width;
}

// ---------------------------------------------------------------------------
// ParamSet

template <class T>
void BasicParamSet<T>::add(std::string name, BasicTensor<T> value, bool trainable) {
    if (find(name)) fail(ErrorKind::Config, "duplicate parameter name " + name);
    entries_.push_back({std::move(name), std::move(value), trainable});
}

template <class T>
BasicTensor<T>* BasicParamSet<T>::find(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return &e.value;
    return nullptr;
}

template <class T>
const BasicTensor<T>* BasicParamSet<T>::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e.value;
    return nullptr;
}

template <class T>
BasicTensor<T>& BasicParamSet<T>::at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    fail(ErrorKind::Shape, "missing parameter " + name);
}

template <class T>
const BasicTensor<T>& BasicParamSet<T>::at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    fail(ErrorKind::Shape, "missing parameter " + name);
}

template <class T>
BasicParamSet<T> BasicParamSet<T>::zeros_like_trainable() const {
    BasicParamSet out;
    for (const auto& e : entries_)
        if (e.trainable) out.entries_.push_back({e.name, BasicTensor<T>(e.value.shape()), true});
    return out;
}

template <class T>
void accumulate(BasicParamSet<T>& into, const BasicParamSet<T>& grads) {
    for (const auto& e : grads.entries()) into.at(e.name) += e.value;
}

// ---------------------------------------------------------------------------
// Initialization

template <class T>
BasicParamSet<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    BasicParamSet<T> params;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (l.kind == LayerKind::Dense) {
            const double bound = 1.0 / std::sqrt(double(l.in_dim));
            std::uniform_real_distribution<double> dist(-bound, bound);
            BasicTensor<T> w({l.out_dim, l.in_dim});
            for (auto& v : w.values()) v = T(dist(rng));
            params.add(param_name(i, "weight"), std::move(w));
            params.add(param_name(i, "bias"), BasicTensor<T>({l.out_dim}));
        } else if (l.kind == LayerKind::BatchNorm) {
            const std::size_t width = spec.width_at(i);
            params.add(param_name(i, "gamma"), BasicTensor<T>({width}, T(1)));
            params.add(param_name(i, "beta"), BasicTensor<T>({width}));
            params.add(param_name(i, "running_mean"), BasicTensor<T>({width}), false);
            params.add(param_name(i, "running_var"), BasicTensor<T>({width}, T(1)), false);
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward

template <class T>
ForwardResult<T> forward(const NetworkSpec& spec, const BasicParamSet<T>& params, const BasicTensor<T>& x,
                         Mode mode, std::uint64_t rng_seed) {
    require_matrix(x, spec.input_width(), "forward input");
    const std::size_t batch = x.rows();
    if (batch < 1) fail(ErrorKind::Shape, "forward: empty batch");

    ForwardResult<T> result;
    auto& trace = result.trace;
    trace.spec = &spec;
    trace.params = &params;
    trace.mode = mode;
    trace.batch = batch;
    const bool train = mode == Mode::Train;
    if (train) trace.records.resize(spec.layers.size());

    BasicTensor<T> h = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (train) trace.records[i].input = h;
        switch (l.kind) {
            case LayerKind::Dense: {
                const auto& w = params.at(param_name(i, "weight"));
                const auto& b = params.at(param_name(i, "bias"));
                if (w.shape() != std::vector<std::size_t>{l.out_dim, l.in_dim} ||
                    b.shape() != std::vector<std::size_t>{l.out_dim})
                    fail(ErrorKind::Shape, "parameter shape mismatch at layer " + std::to_string(i));
                BasicTensor<T> y({batch, l.out_dim});
                auto ym = as_matrix(y);
                ym.noalias() = as_matrix(h) * as_matrix(w).transpose();
                ym.rowwise() += ConstVecMap<T>(b.data(), Eigen::Index(l.out_dim));
                h = std::move(y);
                break;
            }
            case LayerKind::Relu:
                for (auto& v : h.values()) v = v > T(0) ? v : T(0);
                break;
            case LayerKind::BatchNorm: {
                const std::size_t width = h.cols();
                const auto& gamma = params.at(param_name(i, "gamma"));
                const auto& beta = params.at(param_name(i, "beta"));
                if (gamma.size() != width) fail(ErrorKind::Shape, "batchnorm width mismatch");
                if (train) {
                    if (batch < 2) fail(ErrorKind::Shape, "batchnorm in train mode requires batch >= 2");
                    auto hm = as_matrix(h);
                    Eigen::Matrix<T, 1, Eigen::Dynamic> mean = hm.colwise().mean();
                    hm.rowwise() -= mean;
                    Eigen::Matrix<T, 1, Eigen::Dynamic> var = hm.array().square().colwise().sum() / T(batch);
                    auto& rec = trace.records[i];
                    rec.inv_std.resize(width);
                    BatchStats<T> stats{i, std::vector<T>(width), std::vector<T>(width)};
                    for (std::size_t c = 0; c < width; ++c) {
                        rec.inv_std[c] = T(1) / std::sqrt(var[Eigen::Index(c)] + T(l.eps));
                        stats.mean[c] = mean[Eigen::Index(c)];
                        stats.variance[c] = var[Eigen::Index(c)] * T(batch) / T(batch - 1);
                    }
                    result.batch_stats.push_back(std::move(stats));
                    for (std::size_t r = 0; r < batch; ++r) {
                        auto row = h.row(r);
                        for (std::size_t c = 0; c < width; ++c) row[c] *= rec.inv_std[c];
                    }
                    rec.aux = h;
                    for (std::size_t r = 0; r < batch; ++r) {
                        auto row = h.row(r);
                        for (std::size_t c = 0; c < width; ++c) row[c] = gamma[c] * row[c] + beta[c];
                    }
                } else {
                    const auto& rmean = params.at(param_name(i, "running_mean"));
                    const auto& rvar = params.at(param_name(i, "running_var"));
                    std::vector<T> scale(width), shift(width);
                    for (std::size_t c = 0; c < width; ++c) {
                        scale[c] = gamma[c] / std::sqrt(rvar[c] + T(l.eps));
                        shift[c] = beta[c] - rmean[c] * scale[c];
                    }
                    for (std::size_t r = 0; r < batch; ++r) {
                        auto row = h.row(r);
                        for (std::size_t c = 0; c < width; ++c) row[c] = row[c] * scale[c] + shift[c];
                    }
                }
                break;
            }
            case LayerKind::Dropout: {
                if (!train || l.rate == 0.0) break;
                std::mt19937_64 rng(derive_seed(rng_seed, {i}));
                std::uniform_real_distribution<double> u(0.0, 1.0);
                const T keep_scale = T(1.0 / (1.0 - l.rate));
                BasicTensor<T> mask(h.shape());
                for (std::size_t k = 0; k < h.size(); ++k) {
                    mask[k] = u(rng) >= l.rate ? keep_scale : T(0);
                    h[k] *= mask[k];
                }
                trace.records[i].aux = std::move(mask);
                break;
            }
        }
        require_finite(h, "forward", i);
    }
    result.output = std::move(h);
    return result;
}

template <class T>
std::uint64_t BasicTrace<T>::relu_pattern_digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    if (!spec) return h;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (spec->layers[i].kind != LayerKind::Relu) continue;
        for (T v : records[i].input.values()) {
            h ^= v > T(0) ? 1u : 0u;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Backward

template <class T>
BasicTensor<T> backward_into(const BasicTrace<T>& trace, const BasicTensor<T>& upstream,
                             BasicParamSet<T>& accum) {
    if (trace.mode != Mode::Train || !trace.spec || trace.records.size() != trace.spec->layers.size())
        fail(ErrorKind::Usage, "backward requires a trace recorded in train mode");
    const auto& spec = *trace.spec;
    const auto& params = *trace.params;
    if (upstream.rank() != 2 || upstream.rows() != trace.batch || upstream.cols() != spec.output_width())
        fail(ErrorKind::Shape, "backward: upstream gradient shape " + shape_string(upstream.shape()));

    const std::size_t batch = trace.batch;
    BasicTensor<T> g = upstream;
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const auto& l = spec.layers[li];
        const auto& rec = trace.records[li];
        switch (l.kind) {
            case LayerKind::Dense: {
                const auto& w = params.at(param_name(li, "weight"));
                auto gm = as_matrix(std::as_const(g));
                as_matrix(accum.at(param_name(li, "weight"))).noalias() += gm.transpose() * as_matrix(rec.input);
                auto& db = accum.at(param_name(li, "bias"));
                VecMap<T>(db.data(), Eigen::Index(db.size())) += gm.colwise().sum();
                BasicTensor<T> dx({batch, l.in_dim});
                as_matrix(dx).noalias() = gm * as_matrix(w);
                g = std::move(dx);
                break;
            }
            case LayerKind::Relu:
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (!(rec.input[k] > T(0))) g[k] = T(0);
                break;
            case LayerKind::BatchNorm: {
                const std::size_t width = g.cols();
                const auto& gamma = params.at(param_name(li, "gamma"));
                auto& dgamma = accum.at(param_name(li, "gamma"));
                auto& dbeta = accum.at(param_name(li, "beta"));
                std::vector<T> sum_dy(width, T(0)), sum_dy_xhat(width, T(0));
                for (std::size_t r = 0; r < batch; ++r) {
                    auto gr = g.row(r);
                    auto xr = rec.aux.row(r);
                    for (std::size_t c = 0; c < width; ++c) {
                        sum_dy[c] += gr[c];
                        sum_dy_xhat[c] += gr[c] * xr[c];
                    }
                }
                for (std::size_t c = 0; c < width; ++c) {
                    dgamma[c] += sum_dy_xhat[c];
                    dbeta[c] += sum_dy[c];
                }
                const T n = T(batch);
                for (std::size_t r = 0; r < batch; ++r) {
                    auto gr = g.row(r);
                    auto xr = rec.aux.row(r);
                    for (std::size_t c = 0; c < width; ++c)
                        gr[c] = gamma[c] * rec.inv_std[c] / n * (n * gr[c] - sum_dy[c] - xr[c] * sum_dy_xhat[c]);
                }
                break;
            }
            case LayerKind::Dropout:
                if (!rec.aux.empty())
                    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= rec.aux[k];
                break;
        }
        require_finite(g, "backward", li);
    }
    return g;
}

template <class T>
Gradients<T> backward(const BasicTrace<T>& trace, const BasicTensor<T>& upstream) {
    if (!trace.params) fail(ErrorKind::Usage, "backward requires a trace recorded in train mode");
    Gradients<T> out;
    out.params = trace.params->zeros_like_trainable();
    out.input = backward_into(trace, upstream, out.params);
    return out;
}

template <class T>
void commit_running_stats(BasicParamSet<T>& params, const std::vector<BatchStats<T>>& stats, double momentum) {
    const T m = T(momentum);
    for (const auto& s : stats) {
        auto& rmean = params.at(param_name(s.layer, "running_mean"));
        auto& rvar = params.at(param_name(s.layer, "running_var"));
        for (std::size_t c = 0; c < s.mean.size(); ++c) {
            rmean[c] = (T(1) - m) * rmean[c] + m * s.mean[c];
            rvar[c] = (T(1) - m) * rvar[c] + m * s.variance[c];
        }
    }
}

#define XTCDR_INSTANTIATE(T)                                                                              \
    template class BasicParamSet<T>;                                                                      \
    template struct BasicTrace<T>;                                                                        \
    template void accumulate<T>(BasicParamSet<T>&, const BasicParamSet<T>&);                              \
    template BasicParamSet<T> init_params<T>(const NetworkSpec&, std::uint64_t);                          \
    template ForwardResult<T> forward<T>(const NetworkSpec&, const BasicParamSet<T>&, const BasicTensor<T>&, \
                                         Mode, std::uint64_t);                                            \
    template BasicTensor<T> backward_into<T>(const BasicTrace<T>&, const BasicTensor<T>&, BasicParamSet<T>&); \
    template Gradients<T> backward<T>(const BasicTrace<T>&, const BasicTensor<T>&);                       \
    template void commit_running_stats<T>(BasicParamSet<T>&, const std::vector<BatchStats<T>>&, double);

XTCDR_INSTANTIATE(float)
XTCDR_INSTANTIATE(double)

#undef XTCDR_INSTANTIATE

}  // namespace xtcdr::nn
