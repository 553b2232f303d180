#pragma once

#include "mcl/error.hpp"
#include "mcl/rng.hpp"
#include "mcl/tensor.hpp"

#include <vector>

namespace mcl {

/// Per-mode bounds on the measurement prefix kept during training.
struct MaskSpec {
    Shape min_dims;
    Shape max_dims;

    void validate() const {
        if (min_dims.empty() || min_dims.size() != max_dims.size())
            throw Error(ErrorKind::dims, "mask spec min/max ranks differ");
        for (std::size_t k = 0; k < min_dims.size(); ++k)
            if (min_dims[k] < 1 || min_dims[k] > max_dims[k])
                throw Error(ErrorKind::dims, "mask spec requires 1 <= min <= max in every mode, got min " +
                                                 shape_string(min_dims) + " max " + shape_string(max_dims));
    }

    [[nodiscard]] bool contains(const Shape& dims) const {
        if (dims.size() != min_dims.size()) return false;
        for (std::size_t k = 0; k < dims.size(); ++k)
            if (dims[k] < min_dims[k] || dims[k] > max_dims[k]) return false;
        return true;
    }

    friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

/// One sampled prefix size per mode.
using MaskDims = Shape;

/// Draws each mode independently and uniformly from [min_dims[k], max_dims[k]].
inline MaskDims sample_mask_dims(const MaskSpec& spec, Rng& rng) {
    spec.validate();
    MaskDims dims(spec.min_dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k)
        dims[k] = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(spec.min_dims[k]), static_cast<std::int64_t>(spec.max_dims[k])));
    return dims;
}

/// Binary tensor equal to one exactly on the block [0, dims[0]) x ... x [0, dims[K-1]).
inline Tensor materialize_mask(const MaskDims& dims, const Shape& full_shape) {
    if (dims.size() != full_shape.size()) throw Error(ErrorKind::dims, "mask rank mismatch");
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (dims[k] < 1 || dims[k] > full_shape[k])
            throw Error(ErrorKind::dims, "mask dims " + shape_string(dims) + " exceed shape " + shape_string(full_shape));
    Tensor mask(full_shape);
    detail::for_each_index(full_shape, [&](std::size_t flat, std::span<const std::size_t> idx) {
        bool inside = true;
        for (std::size_t k = 0; k < idx.size() && inside; ++k) inside = idx[k] < dims[k];
        mask[flat] = inside ? 1.0 : 0.0;
    });
    return mask;
}

}  // namespace mcl
