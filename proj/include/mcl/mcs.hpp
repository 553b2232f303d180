#pragma once

#include "mcl/error.hpp"
#include "mcl/layers.hpp"
#include "mcl/linalg.hpp"
#include "mcl/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcl {

/// Separable sensing operators, phis[k] is M_k x I_k.
struct SensingOperatorSet {
    std::vector<Matrix> phis;

    [[nodiscard]] std::size_t rank() const noexcept { return phis.size(); }
    [[nodiscard]] Shape input_shape() const {
        Shape s;
        for (const auto& p : phis) s.push_back(p.cols());
        return s;
    }
    [[nodiscard]] Shape measurement_shape() const {
        Shape s;
        for (const auto& p : phis) s.push_back(p.rows());
        return s;
    }
    friend bool operator==(const SensingOperatorSet&, const SensingOperatorSet&) = default;
};

/// Feature-synthesis operators, thetas[k] is I_k x M_k.
struct SynthesisOperatorSet {
    std::vector<Matrix> thetas;

    [[nodiscard]] std::size_t rank() const noexcept { return thetas.size(); }
    [[nodiscard]] Shape input_shape() const {
        Shape s;
        for (const auto& t : thetas) s.push_back(t.rows());
        return s;
    }
    [[nodiscard]] Shape measurement_shape() const {
        Shape s;
        for (const auto& t : thetas) s.push_back(t.cols());
        return s;
    }
    friend bool operator==(const SynthesisOperatorSet&, const SynthesisOperatorSet&) = default;
};

inline void validate(const SensingOperatorSet& ops) {
    if (ops.phis.empty()) throw Error(ErrorKind::shape, "sensing operator set is empty");
    for (const auto& p : ops.phis)
        if (p.rows() > p.cols())
            throw Error(ErrorKind::shape, "sensing operator expands a mode (M_k > I_k)");
}

/// Z = Y x_1 Phi_1 ... x_K Phi_K, applied in ascending mode order.
inline Tensor sense(const Tensor& y, const SensingOperatorSet& ops) {
    if (y.shape() != ops.input_shape())
        throw Error(ErrorKind::shape, "signal shape " + shape_string(y.shape()) + " does not match sensing input " +
                                          shape_string(ops.input_shape()));
    Tensor z = y;
    for (std::size_t k = 0; k < ops.rank(); ++k) z = mode_product(z, ops.phis[k], k);
    return z;
}

/// T = Z x_1 Theta_1 ... x_K Theta_K, applied in ascending mode order.
inline Tensor synthesize(const Tensor& z, const SynthesisOperatorSet& ops) {
    if (z.shape() != ops.measurement_shape())
        throw Error(ErrorKind::shape, "measurement shape " + shape_string(z.shape()) +
                                          " does not match synthesis input " + shape_string(ops.measurement_shape()));
    Tensor t = z;
    for (std::size_t k = 0; k < ops.rank(); ++k) t = mode_product(t, ops.thetas[k], k);
    return t;
}

/// Dense vector sensing z = Phi * y.
inline std::vector<double> vector_sense(std::span<const double> y, const Matrix& phi) {
    if (phi.cols() != y.size())
        throw Error(ErrorKind::shape, "sensing matrix has " + std::to_string(phi.cols()) + " columns, signal has " +
                                          std::to_string(y.size()) + " entries");
    std::vector<double> z(phi.rows(), 0.0);
    for (std::size_t r = 0; r < phi.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < phi.cols(); ++c) acc += phi(r, c) * y[c];
        z[r] = acc;
    }
    return z;
}

struct HosvdInit {
    SensingOperatorSet sensing;
    SynthesisOperatorSet synthesis;
    double core_energy = 0.0;  // sum ||sense(Y_n)||^2 / sum ||Y_n||^2
};

/// Gram matrix X X^T of the mode-k unfolding of one sample, accumulated into `gram`.
inline void accumulate_mode_gram(const Tensor& y, std::size_t k, Matrix& gram) {
    const auto& shape = y.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t j = 0; j < k; ++j) outer *= shape[j];
    for (std::size_t j = k + 1; j < shape.size(); ++j) inner *= shape[j];
    const std::size_t n = shape[k];
    const double* d = y.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        const double* block = d + o * n * inner;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < inner; ++c) acc += block[i * inner + c] * block[j * inner + c];
                gram(i, j) += acc;
            }
    }
}

/// HOSVD of the samples stacked along an extra trailing mode, truncated to
/// `measurement_shape`. Left singular vectors of each mode-k unfolding are
/// taken from the eigendecomposition of its I_k x I_k Gram matrix.
inline HosvdInit hosvd_init(std::span<const Tensor> dataset, const Shape& measurement_shape) {
    if (dataset.empty()) throw Error(ErrorKind::empty_dataset, "HOSVD needs at least one sample");
    const Shape input_shape = dataset.front().shape();
    if (measurement_shape.size() != input_shape.size())
        throw Error(ErrorKind::shape, "measurement rank does not match input rank");
    for (std::size_t k = 0; k < input_shape.size(); ++k)
        if (measurement_shape[k] < 1 || measurement_shape[k] > input_shape[k])
            throw Error(ErrorKind::shape, "measurement " + shape_string(measurement_shape) + " larger than input " +
                                              shape_string(input_shape));
    for (const auto& y : dataset)
        if (y.shape() != input_shape) throw Error(ErrorKind::shape, "dataset samples differ in shape");

    HosvdInit init;
    for (std::size_t k = 0; k < input_shape.size(); ++k) {
        Matrix gram(input_shape[k], input_shape[k]);
        for (const auto& y : dataset) accumulate_mode_gram(y, k, gram);
        for (std::size_t i = 0; i < gram.rows(); ++i)
            for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);
        const auto eig = symmetric_eigen(gram);
        Matrix u(input_shape[k], measurement_shape[k]);
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = 0; j < u.cols(); ++j) u(i, j) = eig.vectors(i, j);
        init.sensing.phis.push_back(u.transpose());
        init.synthesis.thetas.push_back(std::move(u));
    }

    double total = 0.0, kept = 0.0;
    for (const auto& y : dataset) {
        const double n = y.norm();
        total += n * n;
        const double c = sense(y, init.sensing).norm();
        kept += c * c;
    }
    init.core_energy = total > 0.0 ? kept / total : 1.0;
    return init;
}

struct FlopReport {
    std::uint64_t mcs_flops = 0;
    std::uint64_t fs_flops = 0;
    std::uint64_t tasknet_flops = 0;
    std::uint64_t vector_sense_flops = 0;

    [[nodiscard]] double ratio() const {
        return tasknet_flops == 0 ? 0.0 : static_cast<double>(mcs_flops + fs_flops) / static_cast<double>(tasknet_flops);
    }
};

struct ModelConfig {
    Shape input_shape;
    Shape measurement_shape;
    std::vector<LayerSpec> layers;
};

/// FLOPs of a chain of mode products taking `from` to `to`, ascending mode order,
/// counting one multiply-add as two flops.
inline std::uint64_t separable_flops(const Shape& from, const Shape& to) {
    Shape cur = from;
    std::uint64_t flops = 0;
    for (std::size_t k = 0; k < cur.size(); ++k) {
        std::uint64_t others = 1;
        for (std::size_t j = 0; j < cur.size(); ++j)
            if (j != k) others *= cur[j];
        flops += 2ULL * to[k] * cur[k] * others;
        cur[k] = to[k];
    }
    return flops;
}

/// Analytic operation counts for one inference. Task-network flops count conv
/// and dense layers only.
inline FlopReport count_flops(const ModelConfig& config) {
    if (config.input_shape.size() != config.measurement_shape.size())
        throw Error(ErrorKind::shape, "measurement rank does not match input rank");
    FlopReport r;
    r.mcs_flops = separable_flops(config.input_shape, config.measurement_shape);
    r.fs_flops = separable_flops(config.measurement_shape, config.input_shape);
    r.vector_sense_flops = 2ULL * shape_size(config.measurement_shape) * shape_size(config.input_shape);
    Shape act = config.input_shape;
    for (const auto& layer : config.layers) {
        const Shape out = layer_output_shape(layer, act);
        switch (layer.kind) {
            case LayerKind::conv2d:
                r.tasknet_flops += 2ULL * layer.in_channels * layer.out_channels * layer.kernel * layer.kernel *
                                   out[0] * out[1];
                break;
            case LayerKind::dense: r.tasknet_flops += 2ULL * layer.in_channels * layer.out_channels; break;
            case LayerKind::relu:
            case LayerKind::global_avg_pool: break;
        }
        act = out;
    }
    return r;
}

/// The all-convolutional AllCNN-C classifier for 32x32x3 inputs (3x3 convs
/// padded by one, two stride-2 reductions, valid 3x3 then two 1x1 convs,
/// global average pooling).
inline std::vector<LayerSpec> allcnn_c_layers(std::size_t classes = 10) {
    return {LayerSpec::conv(3, 96, 3, 1, 1),    LayerSpec::relu(), LayerSpec::conv(96, 96, 3, 1, 1),
            LayerSpec::relu(),                  LayerSpec::conv(96, 96, 3, 2, 1),   LayerSpec::relu(),
            LayerSpec::conv(96, 192, 3, 1, 1),  LayerSpec::relu(), LayerSpec::conv(192, 192, 3, 1, 1),
            LayerSpec::relu(),                  LayerSpec::conv(192, 192, 3, 2, 1), LayerSpec::relu(),
            LayerSpec::conv(192, 192, 3, 1, 0), LayerSpec::relu(), LayerSpec::conv(192, 192, 1, 1, 0),
            LayerSpec::relu(),                  LayerSpec::conv(192, classes, 1, 1, 0), LayerSpec::relu(),
            LayerSpec::global_avg_pool()};
}

}  // namespace mcl
