#pragma once

#include "mcl/error.hpp"
#include "mcl/mask.hpp"
#include "mcl/mcs.hpp"
#include "mcl/nn.hpp"
#include "mcl/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcl {

enum class TrainingMode { initialized, single_rate, adaptive, baseline };

inline const char* to_string(TrainingMode m) {
    switch (m) {
        case TrainingMode::initialized: return "initialized";
        case TrainingMode::single_rate: return "single";
        case TrainingMode::adaptive: return "adaptive";
        case TrainingMode::baseline: return "baseline";
    }
    return "initialized";
}

inline TrainingMode parse_training_mode(const std::string& s) {
    if (s == "initialized") return TrainingMode::initialized;
    if (s == "single") return TrainingMode::single_rate;
    if (s == "adaptive") return TrainingMode::adaptive;
    if (s == "baseline") return TrainingMode::baseline;
    throw Error(ErrorKind::argument, "unknown training mode '" + s + "'");
}

/// Sensing operators, feature synthesis and task network of one compressive
/// learning model. Shapes chain input -> measurement -> input -> class scores.
struct MclModel {
    SensingOperatorSet sensing;
    SynthesisOperatorSet synthesis;
    TaskNetwork network;
    std::optional<MaskSpec> mask_spec;
    std::uint64_t seed = 0;
    TrainingMode mode = TrainingMode::initialized;

    [[nodiscard]] Shape input_shape() const { return sensing.input_shape(); }
    [[nodiscard]] Shape measurement_shape() const { return sensing.measurement_shape(); }
    [[nodiscard]] std::size_t classes() const { return network.classes(); }

    void validate() const {
        mcl::validate(sensing);
        if (synthesis.input_shape() != input_shape() || synthesis.measurement_shape() != measurement_shape())
            throw Error(ErrorKind::shape, "synthesis operators do not mirror the sensing operators");
        if (network.input_shape() != input_shape())
            throw Error(ErrorKind::shape, "network input " + shape_string(network.input_shape()) +
                                              " differs from signal shape " + shape_string(input_shape()));
        if (mask_spec) {
            mask_spec->validate();
            if (mask_spec->max_dims != measurement_shape())
                throw Error(ErrorKind::dims, "mask spec max dims must equal the measurement shape");
        }
    }

    /// Parameter views in a fixed order: phi_0..phi_{K-1}, theta_0..theta_{K-1}, network weights.
    std::vector<ParamSlot> slots(bool train_sensing = true, bool train_synthesis = true, bool train_network = true) {
        std::vector<ParamSlot> out;
        for (std::size_t k = 0; k < sensing.phis.size(); ++k) {
            auto& p = sensing.phis[k];
            out.push_back({"phi" + std::to_string(k), p.data(), {p.rows(), p.cols()}, train_sensing});
        }
        for (std::size_t k = 0; k < synthesis.thetas.size(); ++k) {
            auto& t = synthesis.thetas[k];
            out.push_back({"theta" + std::to_string(k), t.data(), {t.rows(), t.cols()}, train_synthesis});
        }
        for (auto& s : network.slots(train_network)) out.push_back(std::move(s));
        return out;
    }

    /// Dims a measurement of this model may be evaluated at.
    void check_dims(const Shape& dims) const {
        if (mask_spec) {
            if (!mask_spec->contains(dims))
                throw Error(ErrorKind::dims, "dims " + shape_string(dims) + " outside model mask spec [" +
                                                 shape_string(mask_spec->min_dims) + ", " +
                                                 shape_string(mask_spec->max_dims) + "]");
            return;
        }
        const auto m = measurement_shape();
        if (dims.size() != m.size()) throw Error(ErrorKind::dims, "dims rank mismatch");
        for (std::size_t k = 0; k < m.size(); ++k)
            if (dims[k] < 1 || dims[k] > m[k])
                throw Error(ErrorKind::dims, "dims " + shape_string(dims) + " exceed measurement shape " +
                                                 shape_string(m));
    }
};

/// How the measurement is reduced before feature synthesis.
enum class MaskStep {
    none,        // full measurement
    hadamard,    // Z (.) B with B the materialized prefix mask (training path)
    prefix_pad,  // zero_pad(subtensor_prefix(Z, m)) (deployment path)
};

/// Intermediates of one forward pass through sensing, masking, synthesis and network.
struct ForwardCache {
    std::vector<Tensor> sense_inputs;  // input of each sensing mode product
    std::vector<Tensor> synth_inputs;  // input of each synthesis mode product
    MaskStep step = MaskStep::none;
    MaskDims dims;
    Tensor mask;
    TaskNetwork::Cache net;
    bool valid = false;
};

/// Class scores for one signal. `dims` absent, or equal to the full measurement
/// shape, skips the masking step.
inline Tensor forward(const MclModel& model, const Tensor& y, const std::optional<MaskDims>& dims,
                      ForwardCache* cache = nullptr, MaskStep step = MaskStep::hadamard) {
    const Shape mshape = model.measurement_shape();
    if (dims && dims->size() != mshape.size()) throw Error(ErrorKind::dims, "mask dims rank mismatch");
    if (dims)
        for (std::size_t k = 0; k < mshape.size(); ++k)
            if ((*dims)[k] < 1 || (*dims)[k] > mshape[k])
                throw Error(ErrorKind::dims, "mask dims " + shape_string(*dims) + " exceed measurement " +
                                                 shape_string(mshape));
    if (y.shape() != model.input_shape())
        throw Error(ErrorKind::shape, "signal shape " + shape_string(y.shape()) + " does not match model input " +
                                          shape_string(model.input_shape()));

    const bool masked = dims && *dims != mshape && step != MaskStep::none;
    if (cache) {
        cache->sense_inputs.clear();
        cache->synth_inputs.clear();
        cache->step = masked ? step : MaskStep::none;
        cache->dims = dims.value_or(mshape);
        cache->valid = false;
    }

    Tensor z = y;
    for (std::size_t k = 0; k < model.sensing.phis.size(); ++k) {
        Tensor next = mode_product(z, model.sensing.phis[k], k);
        if (cache) cache->sense_inputs.push_back(std::move(z));
        z = std::move(next);
    }
    if (masked) {
        if (step == MaskStep::hadamard) {
            Tensor b = materialize_mask(*dims, mshape);
            z = elementwise_mul(z, b);
            if (cache) cache->mask = std::move(b);
        } else {
            z = zero_pad_to(subtensor_prefix(z, *dims), mshape);
        }
    }
    Tensor t = std::move(z);
    for (std::size_t k = 0; k < model.synthesis.thetas.size(); ++k) {
        Tensor next = mode_product(t, model.synthesis.thetas[k], k);
        if (cache) cache->synth_inputs.push_back(std::move(t));
        t = std::move(next);
    }
    Tensor scores = model.network.forward(t, cache ? &cache->net : nullptr);
    if (cache) cache->valid = true;
    return scores;
}

/// dA of out = in x_k A given dL/dout: unfold_k(d_out) * unfold_k(in)^T.
inline void mode_product_weight_grad(const Tensor& in, const Tensor& d_out, std::size_t k, std::span<double> grad) {
    const auto& shape = in.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t j = 0; j < k; ++j) outer *= shape[j];
    for (std::size_t j = k + 1; j < shape.size(); ++j) inner *= shape[j];
    const std::size_t in_k = shape[k];
    const std::size_t out_k = d_out.shape()[k];
    const double* x = in.data().data();
    const double* g = d_out.data().data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < out_k; ++j) {
            const double* grow = g + (o * out_k + j) * inner;
            for (std::size_t i = 0; i < in_k; ++i) {
                const double* xrow = x + (o * in_k + i) * inner;
                double acc = 0.0;
                for (std::size_t n = 0; n < inner; ++n) acc += grow[n] * xrow[n];
                grad[j * in_k + i] += acc;
            }
        }
}

/// Reverse pass for one sample. `grads` is laid out like MclModel::slots();
/// gradients for non-trainable groups are not computed.
inline void backward(const MclModel& model, const ForwardCache& cache, const Tensor& d_scores, Gradients& grads,
                     bool train_sensing = true, bool train_synthesis = true, bool train_network = true) {
    if (!cache.valid) throw Error(ErrorKind::argument, "stale or missing forward cache");
    const std::size_t K = model.sensing.phis.size();
    const std::size_t net_offset = 2 * K;
    const bool need_feature_grad = train_sensing || train_synthesis;

    Gradients scratch;
    Gradients* net_grads = &grads;
    if (!train_network) {
        scratch = Gradients(grads.size());
        for (std::size_t i = net_offset; i < grads.size(); ++i) scratch[i].assign(grads[i].size(), 0.0);
        net_grads = &scratch;
    }
    Tensor d = model.network.backward(cache.net, d_scores, *net_grads, net_offset, need_feature_grad);
    if (!need_feature_grad) return;

    for (std::size_t k = K; k-- > 0;) {
        const Tensor& in = cache.synth_inputs[k];
        if (train_synthesis) mode_product_weight_grad(in, d, k, grads[K + k]);
        if (train_sensing || k > 0) d = mode_product(d, model.synthesis.thetas[k].transpose(), k);
    }
    if (!train_sensing) return;

    if (cache.step == MaskStep::hadamard)
        d = elementwise_mul(d, cache.mask);
    else if (cache.step == MaskStep::prefix_pad)
        d = zero_pad_to(subtensor_prefix(d, cache.dims), d.shape());

    for (std::size_t k = K; k-- > 0;) {
        const Tensor& in = cache.sense_inputs[k];
        mode_product_weight_grad(in, d, k, grads[k]);
        if (k > 0) d = mode_product(d, model.sensing.phis[k].transpose(), k);
    }
}

/// Round-to-nearest-even conversion to 32-bit float and back, as on the wire.
inline Tensor to_wire_precision(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

/// Server side: class scores for a received prefix measurement, zero-padded to
/// `full_shape` then synthesized and classified.
inline Tensor predict_from_measurement(const SynthesisOperatorSet& synthesis, const TaskNetwork& network,
                                       const Tensor& z_bar, const Shape& full_shape) {
    return network.forward(synthesize(zero_pad_to(z_bar, full_shape), synthesis));
}

/// Client side: measurement prefix of size `dims` for one signal.
inline Tensor acquire_prefix(const SensingOperatorSet& sensing, const Tensor& y, const Shape& dims) {
    return subtensor_prefix(sense(y, sensing), dims);
}

/// Full deployment path for one signal. With `wire_precision` the prefix is
/// rounded to 32-bit floats exactly as the packet codec does.
inline Tensor predict_deployed(const MclModel& model, const Tensor& y, const Shape& dims, bool wire_precision = true) {
    Tensor z_bar = acquire_prefix(model.sensing, y, dims);
    if (wire_precision) z_bar = to_wire_precision(z_bar);
    return predict_from_measurement(model.synthesis, model.network, z_bar, model.measurement_shape());
}

}  // namespace mcl
