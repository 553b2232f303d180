#pragma once

#include "mcl/error.hpp"
#include "mcl/layers.hpp"
#include "mcl/rng.hpp"
#include "mcl/tensor.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace mcl {

/// Mutable view of one optimizable tensor. Gradients live in a parallel
/// `Gradients` buffer so several samples can be differentiated concurrently.
struct ParamSlot {
    std::string id;
    std::span<double> value;
    Shape shape;
    bool trainable = true;
};

/// One gradient tensor per ParamSlot, same order.
using Gradients = std::vector<std::vector<double>>;

inline Gradients zero_gradients(std::span<const ParamSlot> slots) {
    Gradients g;
    g.reserve(slots.size());
    for (const auto& s : slots) g.emplace_back(s.value.size(), 0.0);
    return g;
}

/// Classifier acting on one (H, W, C) feature tensor. Weights of conv layers are
/// stored (out, kh, kw, in); dense weights are (out, in).
class TaskNetwork {
public:
    struct Cache {
        std::vector<Tensor> inputs;  // activation entering each layer
    };

    TaskNetwork() = default;
    TaskNetwork(Shape input_shape, std::vector<LayerSpec> layers) : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
        Shape act = input_shape_;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            act = layer_output_shape(l, act);
            if (l.kind == LayerKind::conv2d) {
                weights_.push_back({"net." + std::to_string(i) + ".weight",
                                    Tensor({l.out_channels, l.kernel, l.kernel, l.in_channels})});
                weights_.push_back({"net." + std::to_string(i) + ".bias", Tensor({l.out_channels})});
            } else if (l.kind == LayerKind::dense) {
                weights_.push_back({"net." + std::to_string(i) + ".weight", Tensor({l.out_channels, l.in_channels})});
                weights_.push_back({"net." + std::to_string(i) + ".bias", Tensor({l.out_channels})});
            }
        }
        if (act.size() != 1) throw Error(ErrorKind::shape, "task network must end in a vector of class scores");
        classes_ = act[0];
    }

    /// He-uniform weights, zero biases.
    void initialize(Rng& rng) {
        for (auto& [name, t] : weights_) {
            if (t.rank() == 1) {
                std::fill(t.data().begin(), t.data().end(), 0.0);
                continue;
            }
            const double fan_in = static_cast<double>(t.size() / t.shape()[0]);
            const double bound = std::sqrt(6.0 / fan_in);
            for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        }
    }

    [[nodiscard]] const Shape& input_shape() const noexcept { return input_shape_; }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t classes() const noexcept { return classes_; }

    struct Named {
        std::string name;
        Tensor tensor;
    };
    [[nodiscard]] const std::vector<Named>& weights() const noexcept { return weights_; }
    [[nodiscard]] std::vector<Named>& weights() noexcept { return weights_; }

    std::vector<ParamSlot> slots(bool trainable = true) {
        std::vector<ParamSlot> out;
        for (auto& [name, t] : weights_) out.push_back({name, t.data(), t.shape(), trainable});
        return out;
    }

    /// Class scores (logits). When `cache` is given, layer inputs are recorded for backward.
    Tensor forward(const Tensor& x, Cache* cache = nullptr) const {
        if (x.shape() != input_shape_)
            throw Error(ErrorKind::shape, "network input " + shape_string(x.shape()) + ", expected " +
                                              shape_string(input_shape_));
        if (cache) cache->inputs.clear();
        Tensor act = x;
        std::size_t w = 0;
        for (const auto& l : layers_) {
            Tensor next;
            switch (l.kind) {
                case LayerKind::conv2d:
                    next = conv_forward(l, act, weights_[w].tensor, weights_[w + 1].tensor);
                    w += 2;
                    break;
                case LayerKind::dense:
                    next = dense_forward(l, act, weights_[w].tensor, weights_[w + 1].tensor);
                    w += 2;
                    break;
                case LayerKind::relu:
                    next = act;
                    for (auto& v : next.data()) v = v > 0.0 ? v : 0.0;
                    break;
                case LayerKind::global_avg_pool: next = gap_forward(act); break;
            }
            if (cache) cache->inputs.push_back(std::move(act));
            act = std::move(next);
        }
        return act;
    }

    /// Accumulates weight gradients into grads[offset + i] and returns dL/dx.
    Tensor backward(const Cache& cache, const Tensor& d_scores, Gradients& grads, std::size_t offset,
                    bool want_input_grad = true) const {
        if (cache.inputs.size() != layers_.size()) throw Error(ErrorKind::argument, "stale or missing forward cache");
        Tensor d = d_scores;
        std::size_t w = weights_.size();
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const auto& l = layers_[i];
            const Tensor& in = cache.inputs[i];
            const bool need_dx = want_input_grad || i > 0;
            switch (l.kind) {
                case LayerKind::conv2d:
                    w -= 2;
                    d = conv_backward(l, in, weights_[w].tensor, d, grads[offset + w], grads[offset + w + 1], need_dx);
                    break;
                case LayerKind::dense:
                    w -= 2;
                    d = dense_backward(l, in, weights_[w].tensor, d, grads[offset + w], grads[offset + w + 1]);
                    break;
                case LayerKind::relu:
                    for (std::size_t j = 0; j < d.size(); ++j)
                        if (!(in[j] > 0.0)) d[j] = 0.0;
                    break;
                case LayerKind::global_avg_pool: {
                    Tensor dx(in.shape());
                    const std::size_t hw = in.shape()[0] * in.shape()[1];
                    const std::size_t c = in.shape()[2];
                    const double scale = 1.0 / static_cast<double>(hw);
                    for (std::size_t p = 0; p < hw; ++p)
                        for (std::size_t ch = 0; ch < c; ++ch) dx[p * c + ch] = d[ch] * scale;
                    d = std::move(dx);
                    break;
                }
            }
        }
        return d;
    }

private:
    static Tensor conv_forward(const LayerSpec& l, const Tensor& in, const Tensor& wt, const Tensor& bias) {
        const Shape out_shape = layer_output_shape(l, in.shape());
        const std::size_t H = in.shape()[0], W = in.shape()[1], Ci = l.in_channels;
        const std::size_t Ho = out_shape[0], Wo = out_shape[1], Co = l.out_channels, K = l.kernel;
        Tensor out(out_shape);
        const double* x = in.data().data();
        const double* wp = wt.data().data();
        double* y = out.data().data();
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                double* ypix = y + (oy * Wo + ox) * Co;
                for (std::size_t co = 0; co < Co; ++co) ypix[co] = bias[co];
                for (std::size_t ky = 0; ky < K; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                        const double* xpix = x + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * Ci;
                        for (std::size_t co = 0; co < Co; ++co) {
                            const double* wk = wp + ((co * K + ky) * K + kx) * Ci;
                            double acc = 0.0;
                            for (std::size_t ci = 0; ci < Ci; ++ci) acc += wk[ci] * xpix[ci];
                            ypix[co] += acc;
                        }
                    }
                }
            }
        return out;
    }

    static Tensor conv_backward(const LayerSpec& l, const Tensor& in, const Tensor& wt, const Tensor& d_out,
                                std::vector<double>& dw, std::vector<double>& db, bool need_dx) {
        const std::size_t H = in.shape()[0], W = in.shape()[1], Ci = l.in_channels;
        const std::size_t Ho = d_out.shape()[0], Wo = d_out.shape()[1], Co = l.out_channels, K = l.kernel;
        Tensor dx(in.shape());
        const double* x = in.data().data();
        const double* wp = wt.data().data();
        const double* g = d_out.data().data();
        double* dxp = dx.data().data();
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const double* gpix = g + (oy * Wo + ox) * Co;
                for (std::size_t co = 0; co < Co; ++co) db[co] += gpix[co];
                for (std::size_t ky = 0; ky < K; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                        const std::size_t pix = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * Ci;
                        const double* xpix = x + pix;
                        double* dxpix = dxp + pix;
                        for (std::size_t co = 0; co < Co; ++co) {
                            const double gv = gpix[co];
                            if (gv == 0.0) continue;
                            const std::size_t woff = ((co * K + ky) * K + kx) * Ci;
                            double* dwk = dw.data() + woff;
                            for (std::size_t ci = 0; ci < Ci; ++ci) dwk[ci] += gv * xpix[ci];
                            if (need_dx) {
                                const double* wk = wp + woff;
                                for (std::size_t ci = 0; ci < Ci; ++ci) dxpix[ci] += gv * wk[ci];
                            }
                        }
                    }
                }
            }
        return dx;
    }

    static Tensor dense_forward(const LayerSpec& l, const Tensor& in, const Tensor& wt, const Tensor& bias) {
        Tensor out({l.out_channels});
        for (std::size_t o = 0; o < l.out_channels; ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < l.in_channels; ++i) acc += wt[o * l.in_channels + i] * in[i];
            out[o] = acc;
        }
        return out;
    }

    static Tensor dense_backward(const LayerSpec& l, const Tensor& in, const Tensor& wt, const Tensor& d_out,
                                 std::vector<double>& dw, std::vector<double>& db) {
        Tensor dx(in.shape());
        for (std::size_t o = 0; o < l.out_channels; ++o) {
            const double gv = d_out[o];
            db[o] += gv;
            for (std::size_t i = 0; i < l.in_channels; ++i) {
                dw[o * l.in_channels + i] += gv * in[i];
                dx[i] += gv * wt[o * l.in_channels + i];
            }
        }
        return dx;
    }

    static Tensor gap_forward(const Tensor& in) {
        const std::size_t hw = in.shape()[0] * in.shape()[1];
        const std::size_t c = in.shape()[2];
        Tensor out({c});
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) out[ch] += in[p * c + ch];
        for (auto& v : out.data()) v /= static_cast<double>(hw);
        return out;
    }

    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Named> weights_;
    std::size_t classes_ = 0;
};

/// Softmax probabilities (max-shifted).
inline std::vector<double> softmax(std::span<const double> scores) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) sum += (p[i] = std::exp(scores[i] - mx));
    for (auto& v : p) v /= sum;
    return p;
}

struct LossResult {
    double loss = 0.0;
    Tensor d_scores;  // dL/dscores scaled by `weight`
    std::size_t predicted = 0;
};

/// Cross-entropy of one sample; the gradient is multiplied by `weight`
/// (1/B for a mean over a batch of B).
inline LossResult softmax_cross_entropy(const Tensor& scores, std::size_t label, double weight) {
    if (label >= scores.size()) throw Error(ErrorKind::argument, "label out of range");
    const auto p = softmax(scores.data());
    LossResult r{-std::log(std::max(p[label], 1e-300)), Tensor(scores.shape()), 0};
    for (std::size_t i = 0; i < p.size(); ++i) {
        r.d_scores[i] = weight * (p[i] - (i == label ? 1.0 : 0.0));
        if (scores[i] > scores[r.predicted]) r.predicted = i;
    }
    return r;
}

inline std::size_t argmax(const Tensor& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

/// Desk-scale all-convolutional classifier: a 3x3 conv+relu at full
/// resolution, two stride-2 3x3 conv+relu blocks, global average pooling and a
/// dense head. The strided blocks give a receptive field covering most of a
/// 16x16 input before pooling.
inline std::vector<LayerSpec> desk_network_layers(std::size_t in_channels, std::size_t classes, std::size_t width = 8) {
    return {LayerSpec::conv(in_channels, width, 3, 1, 1),
            LayerSpec::relu(),
            LayerSpec::conv(width, 2 * width, 3, 2, 1),
            LayerSpec::relu(),
            LayerSpec::conv(2 * width, 2 * width, 3, 2, 1),
            LayerSpec::relu(),
            LayerSpec::global_avg_pool(),
            LayerSpec::dense(2 * width, classes)};
}

}  // namespace mcl
