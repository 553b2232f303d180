#pragma once

#include "mcl/error.hpp"
#include "mcl/tensor.hpp"

#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mcl {

enum class LayerKind { conv2d, relu, global_avg_pool, dense };

/// Architecture description of one task-network layer. Images are (H, W, C).
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in_channels = 0;   // conv2d: input channels, dense: input features
    std::size_t out_channels = 0;  // conv2d: output channels, dense: output features
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
        return {LayerKind::conv2d, in, out, kernel, stride, padding};
    }
    static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 1, 0}; }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec global_avg_pool() { return {LayerKind::global_avg_pool}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output shape of `layer` for the given input activation shape.
inline Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
    switch (layer.kind) {
        case LayerKind::conv2d: {
            if (in.size() != 3 || in[2] != layer.in_channels)
                throw Error(ErrorKind::shape, "conv2d expects (H, W, " + std::to_string(layer.in_channels) +
                                                  ") input, got " + shape_string(in));
            const auto h = in[0] + 2 * layer.padding;
            const auto w = in[1] + 2 * layer.padding;
            if (h < layer.kernel || w < layer.kernel) throw Error(ErrorKind::shape, "conv2d kernel larger than input");
            return {(h - layer.kernel) / layer.stride + 1, (w - layer.kernel) / layer.stride + 1, layer.out_channels};
        }
        case LayerKind::relu: return in;
        case LayerKind::global_avg_pool:
            if (in.size() != 3) throw Error(ErrorKind::shape, "global average pool expects (H, W, C) input");
            return {in[2]};
        case LayerKind::dense:
            if (shape_size(in) != layer.in_channels)
                throw Error(ErrorKind::shape, "dense expects " + std::to_string(layer.in_channels) +
                                                  " inputs, got " + shape_string(in));
            return {layer.out_channels};
    }
    throw Error(ErrorKind::argument, "unknown layer kind");
}

/// Compact text form, e.g. "conv2d:3:8:3:1:1,relu,gap,dense:16:4".
inline std::string format_layers(const std::vector<LayerSpec>& layers) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) os << ',';
        const auto& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv2d:
                os << "conv2d:" << l.in_channels << ':' << l.out_channels << ':' << l.kernel << ':' << l.stride
                   << ':' << l.padding;
                break;
            case LayerKind::relu: os << "relu"; break;
            case LayerKind::global_avg_pool: os << "gap"; break;
            case LayerKind::dense: os << "dense:" << l.in_channels << ':' << l.out_channels; break;
        }
    }
    return os.str();
}

inline std::vector<LayerSpec> parse_layers(std::string_view text) {
    std::vector<LayerSpec> layers;
    if (text.empty()) return layers;
    auto split = [](std::string_view s, char sep) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (;;) {
            const auto pos = s.find(sep, start);
            parts.emplace_back(s.substr(start, pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return parts;
    };
    for (const auto& item : split(text, ',')) {
        const auto f = split(item, ':');
        auto num = [&](std::size_t i) -> std::size_t {
            if (i >= f.size()) throw Error(ErrorKind::argument, "layer '" + item + "' is missing fields");
            try {
                return std::stoul(f[i]);
            } catch (const std::exception&) {
                throw Error(ErrorKind::argument, "layer '" + item + "' has a non-numeric field");
            }
        };
        if (f[0] == "conv2d" && f.size() == 6)
            layers.push_back(LayerSpec::conv(num(1), num(2), num(3), num(4), num(5)));
        else if (f[0] == "dense" && f.size() == 3)
            layers.push_back(LayerSpec::dense(num(1), num(2)));
        else if (f[0] == "relu" && f.size() == 1)
            layers.push_back(LayerSpec::relu());
        else if (f[0] == "gap" && f.size() == 1)
            layers.push_back(LayerSpec::global_avg_pool());
        else
            throw Error(ErrorKind::argument, "unknown layer kind '" + item + "'");
    }
    return layers;
}

}  // namespace mcl
