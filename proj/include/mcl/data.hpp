#pragma once

#include "mcl/error.hpp"
#include "mcl/mcs.hpp"
#include "mcl/rng.hpp"
#include "mcl/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace mcl {

enum class SplitTag { train, val, test, all };

inline const char* to_string(SplitTag s) {
    switch (s) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
        case SplitTag::all: return "all";
    }
    return "all";
}

/// Samples are (H, W, C) tensors with values in [0, 1].
struct LabeledDataset {
    std::vector<Tensor> samples;
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;
    SplitTag split = SplitTag::all;
    std::string provenance;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    [[nodiscard]] Shape input_shape() const {
        if (samples.empty()) throw Error(ErrorKind::empty_dataset, "dataset is empty");
        return samples.front().shape();
    }

    void push_back(Tensor sample, std::size_t label) {
        samples.push_back(std::move(sample));
        labels.push_back(label);
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

/// CIFAR binary records: one label byte then the R, G and B planes (row-major
/// 32x32 bytes each). Pixels are scaled by 1/255 into (32, 32, 3) channel-last tensors.
inline LabeledDataset parse_cifar_binary(const std::vector<std::uint8_t>& bytes, SplitTag split,
                                         std::size_t class_count = 10) {
    if (bytes.size() % kCifarRecord != 0)
        throw Error(ErrorKind::format, "CIFAR file length " + std::to_string(bytes.size()) +
                                           " is not a multiple of the 3073-byte record");
    LabeledDataset ds;
    ds.class_count = class_count;
    ds.split = split;
    ds.provenance = "cifar-binary";
    const std::size_t n = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
        if (rec[0] >= class_count)
            throw Error(ErrorKind::format, "record " + std::to_string(r) + " has label " + std::to_string(rec[0]) +
                                               " >= class count " + std::to_string(class_count));
        Tensor img({kCifarSide, kCifarSide, 3});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < kCifarPlane; ++p)
                img[p * 3 + c] = static_cast<double>(rec[1 + c * kCifarPlane + p]) / 255.0;
        ds.push_back(std::move(img), rec[0]);
    }
    return ds;
}

inline LabeledDataset load_cifar_binary(const std::filesystem::path& path, SplitTag split, std::size_t class_count = 10) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::format, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto ds = parse_cifar_binary(bytes, split, class_count);
    ds.provenance = path.string();
    return ds;
}

/// Inverse of parse_cifar_binary for (32, 32, 3) samples; values are rounded to
/// the nearest of 256 levels.
inline std::vector<std::uint8_t> encode_cifar_binary(const LabeledDataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(ds.size() * kCifarRecord);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& img = ds.samples[i];
        if (img.shape() != Shape{kCifarSide, kCifarSide, 3})
            throw Error(ErrorKind::shape, "CIFAR records hold 32x32x3 images, got " + shape_string(img.shape()));
        if (ds.labels[i] > 255) throw Error(ErrorKind::format, "label does not fit in one byte");
        out.push_back(static_cast<std::uint8_t>(ds.labels[i]));
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < kCifarPlane; ++p) {
                const double v = std::clamp(img[p * 3 + c], 0.0, 1.0);
                out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
            }
    }
    return out;
}

inline void write_cifar_binary(const std::filesystem::path& path, const LabeledDataset& ds) {
    const auto bytes = encode_cifar_binary(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::format, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

struct SyntheticOptions {
    double noise_amplitude = 0.1;
    Shape template_rank = {2, 2, 1};
    std::size_t frequencies = 3;          // cosines per spatial factor column
    std::size_t class_min_frequency = 2;  // lowest cosine frequency of class-specific columns
    double shared_strength = 3.0;         // core weight on the column shared by all classes
    std::size_t smooth_min_extent = 4;    // modes this short (channels) get a tinted constant factor
    double channel_tint = 0.3;            // spread of the per-channel factor around 1
    bool mirror_symmetric = true;         // width factors symmetric, so flips keep the class
};

namespace detail {

/// Column of cosines with frequencies f_lo..f_hi, random amplitude ~ N(0,1)/f and phase.
inline std::vector<double> smooth_profile(std::size_t n, std::size_t f_lo, std::size_t f_hi, Rng& rng) {
    std::vector<double> col(n, 0.0);
    for (std::size_t f = f_lo; f <= f_hi; ++f) {
        const double amp = rng.normal() / static_cast<double>(f);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < n; ++i)
            col[i] += amp * std::cos(std::numbers::pi * static_cast<double>(f) * static_cast<double>(i) /
                                         static_cast<double>(n) +
                                     phase);
    }
    return col;
}

}  // namespace detail

/// Per-class templates of multilinear rank template_rank. Spatial factor
/// column 0 is low-frequency and shared by all classes (weighted by
/// shared_strength in the core); the remaining columns are class-specific and
/// of higher frequency. Short modes (channels) get a mostly-luminance factor.
/// Width factors are mirror-symmetric by default so horizontal flips, like
/// for natural image classes, do not change the class.
/// All templates are jointly rescaled into [0.2, 0.8].
inline std::vector<Tensor> synthetic_templates(std::size_t class_count, const Shape& input_shape, std::uint64_t seed,
                                               const SyntheticOptions& opts = {}) {
    if (opts.template_rank.size() != input_shape.size())
        throw Error(ErrorKind::shape, "template rank must match input rank");
    if (opts.class_min_frequency < 1 || opts.frequencies < 1)
        throw Error(ErrorKind::argument, "synthetic frequencies must be positive");
    Rng rng = Rng(seed).split(0x7e3a);
    const std::size_t K = input_shape.size();
    Shape core_shape = opts.template_rank;
    for (std::size_t k = 0; k < K; ++k) core_shape[k] = std::max<std::size_t>(1, std::min(core_shape[k], input_shape[k]));

    std::vector<std::vector<double>> shared(K);
    for (std::size_t k = 0; k < K; ++k)
        if (input_shape[k] > opts.smooth_min_extent) shared[k] = detail::smooth_profile(input_shape[k], 1, opts.frequencies, rng);

    const std::size_t f_lo = opts.class_min_frequency, f_hi = f_lo + opts.frequencies - 1;
    std::vector<Tensor> templates;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t c = 0; c < class_count; ++c) {
        Tensor t(core_shape);
        for (auto& v : t.data()) v = rng.normal();
        t[0] += opts.shared_strength;
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t n = input_shape[k];
            Matrix factor(n, core_shape[k]);
            for (std::size_t r = 0; r < core_shape[k]; ++r) {
                if (n <= opts.smooth_min_extent) {
                    for (std::size_t i = 0; i < n; ++i) factor(i, r) = 1.0 + opts.channel_tint * rng.normal();
                    continue;
                }
                const auto col = r == 0 ? shared[k] : detail::smooth_profile(n, f_lo, f_hi, rng);
                const bool mirror = opts.mirror_symmetric && k == 1;
                for (std::size_t i = 0; i < n; ++i) factor(i, r) = mirror ? 0.5 * (col[i] + col[n - 1 - i]) : col[i];
            }
            t = mode_product(t, factor, k);
        }
        const auto [mn, mx] = std::minmax_element(t.data().begin(), t.data().end());
        lo = std::min(lo, *mn);
        hi = std::max(hi, *mx);
        templates.push_back(std::move(t));
    }
    for (auto& t : templates)
        for (auto& v : t.data()) v = hi > lo ? 0.2 + 0.6 * (v - lo) / (hi - lo) : 0.5;
    return templates;
}

/// Synthetic classification set: class template plus uniform noise in
/// [-noise_amplitude, noise_amplitude], clipped to [0, 1]. Samples are
/// interleaved by class.
inline LabeledDataset make_synthetic(std::size_t class_count, std::size_t samples_per_class, const Shape& input_shape,
                                     std::uint64_t seed, const SyntheticOptions& opts = {}) {
    if (class_count < 2) throw Error(ErrorKind::argument, "synthetic data needs at least two classes");
    const auto templates = synthetic_templates(class_count, input_shape, seed, opts);
    Rng noise = Rng(seed).split(0x401e);
    LabeledDataset ds;
    ds.class_count = class_count;
    ds.provenance = "synthetic:seed=" + std::to_string(seed);
    for (std::size_t i = 0; i < samples_per_class; ++i)
        for (std::size_t c = 0; c < class_count; ++c) {
            Tensor s = templates[c];
            for (auto& v : s.data())
                v = std::clamp(v + noise.uniform(-opts.noise_amplitude, opts.noise_amplitude), 0.0, 1.0);
            ds.push_back(std::move(s), c);
        }
    return ds;
}

/// Maximum shift for an image of height h: round(4 * h / 32), at least 1.
inline std::size_t augmentation_shift(std::size_t h) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(4.0 * static_cast<double>(h) / 32.0)));
}

/// Mirrors an (H, W, C) image along W.
inline Tensor flip_horizontal(const Tensor& img) {
    const std::size_t H = img.shape()[0], W = img.shape()[1], C = img.shape()[2];
    Tensor out(img.shape());
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c) out[(y * W + x) * C + c] = img[(y * W + (W - 1 - x)) * C + c];
    return out;
}

/// out[y, x] = img[y - dy, x - dx]; vacated cells are zero.
inline Tensor shift_image(const Tensor& img, std::ptrdiff_t dy, std::ptrdiff_t dx) {
    const auto H = static_cast<std::ptrdiff_t>(img.shape()[0]);
    const auto W = static_cast<std::ptrdiff_t>(img.shape()[1]);
    const std::size_t C = img.shape()[2];
    Tensor out(img.shape());
    for (std::ptrdiff_t y = 0; y < H; ++y) {
        const auto sy = y - dy;
        if (sy < 0 || sy >= H) continue;
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            const auto sx = x - dx;
            if (sx < 0 || sx >= W) continue;
            for (std::size_t c = 0; c < C; ++c)
                out[static_cast<std::size_t>(y * W + x) * C + c] = img[static_cast<std::size_t>(sy * W + sx) * C + c];
        }
    }
    return out;
}

struct AugmentDecision {
    bool flip = false;
    std::ptrdiff_t dy = 0;
    std::ptrdiff_t dx = 0;
};

inline AugmentDecision draw_augmentation(const Shape& shape, Rng& rng) {
    if (shape.size() < 2) throw Error(ErrorKind::shape, "augmentation needs two spatial modes");
    const auto s = static_cast<std::int64_t>(augmentation_shift(shape[0]));
    AugmentDecision d;
    d.flip = rng.bernoulli(0.5);
    d.dy = static_cast<std::ptrdiff_t>(rng.uniform_int(-s, s));
    d.dx = static_cast<std::ptrdiff_t>(rng.uniform_int(-s, s));
    return d;
}

inline Tensor apply_augmentation(const Tensor& img, const AugmentDecision& d) {
    Tensor out = d.flip ? flip_horizontal(img) : img;
    if (d.dy != 0 || d.dx != 0) out = shift_image(out, d.dy, d.dx);
    return out;
}

/// Random horizontal flip (p = 0.5) and zero-filled integer shift per sample.
inline std::vector<Tensor> augment(std::span<const Tensor> batch, Rng& rng) {
    std::vector<Tensor> out;
    out.reserve(batch.size());
    for (const auto& img : batch) out.push_back(apply_augmentation(img, draw_augmentation(img.shape(), rng)));
    return out;
}

struct DatasetSplits {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

/// Class-stratified split. fractions holds (train[, val[, test]]), positive,
/// summing to at most 1; per class, split sizes are floor(fraction * count)
/// with remainders assigned in split order while the fraction allows.
inline DatasetSplits split(const LabeledDataset& ds, std::span<const double> fractions, std::uint64_t seed) {
    if (fractions.empty() || fractions.size() > 3) throw Error(ErrorKind::argument, "split takes one to three fractions");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw Error(ErrorKind::argument, "split fractions must be positive");
        sum += f;
    }
    if (sum > 1.0 + 1e-12) throw Error(ErrorKind::argument, "split fractions sum to more than 1");

    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.labels[i]).push_back(i);

    Rng rng = Rng(seed).split(0x5b17);
    std::array<std::vector<std::size_t>, 3> chosen;
    for (auto& members : by_class) {
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
        const double n = static_cast<double>(members.size());
        std::size_t pos = 0;
        double cumulative = 0.0;
        for (std::size_t s = 0; s < fractions.size(); ++s) {
            cumulative += fractions[s];
            auto end = static_cast<std::size_t>(std::floor(cumulative * n + 1e-9));
            end = std::min(end, members.size());
            for (; pos < end; ++pos) chosen[s].push_back(members[pos]);
        }
    }
    DatasetSplits out;
    std::array<LabeledDataset*, 3> targets{&out.train, &out.val, &out.test};
    const std::array<SplitTag, 3> tags{SplitTag::train, SplitTag::val, SplitTag::test};
    for (std::size_t s = 0; s < 3; ++s) {
        auto& idx = chosen[s];
        std::sort(idx.begin(), idx.end());
        targets[s]->class_count = ds.class_count;
        targets[s]->split = tags[s];
        targets[s]->provenance = ds.provenance;
        for (auto i : idx) targets[s]->push_back(ds.samples[i], ds.labels[i]);
    }
    return out;
}

}  // namespace mcl
