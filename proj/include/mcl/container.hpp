#pragma once

#include "mcl/codec.hpp"
#include "mcl/error.hpp"
#include "mcl/layers.hpp"
#include "mcl/model.hpp"
#include "mcl/session.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mcl {

// Container layout (little-endian):
//   "MCL1" | version u32
//   | entry count u32 | per entry: key len u32, key, value len u32, value (UTF-8)
//   | tensor count u32 | per tensor: name len u32, name, rank u8, rank x u32 extents,
//                        dtype u8 = 1 (f64), values
//   | crc32 u32 over everything before it
// Nothing time-dependent is stored, so identical models give identical bytes.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint8_t kContainerDtypeF64 = 1;

struct Container {
    std::map<std::string, std::string> metadata;
    std::vector<TaskNetwork::Named> tensors;

    [[nodiscard]] const std::string& meta(const std::string& key) const {
        const auto it = metadata.find(key);
        if (it == metadata.end()) throw Error(ErrorKind::format, "container metadata lacks '" + key + "'");
        return it->second;
    }
    [[nodiscard]] const Tensor& tensor(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.tensor;
        throw Error(ErrorKind::format, "container lacks tensor '" + name + "'");
    }
};

inline std::vector<std::uint8_t> encode_container(const Container& c) {
    ByteWriter w;
    w.text("MCL1");
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(c.metadata.size()));
    for (const auto& [k, v] : c.metadata) {
        w.u32(static_cast<std::uint32_t>(k.size()));
        w.text(k);
        w.u32(static_cast<std::uint32_t>(v.size()));
        w.text(v);
    }
    std::set<std::string> seen;
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        if (!seen.insert(name).second) throw Error(ErrorKind::format, "duplicate tensor name '" + name + "'");
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.text(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
        w.u8(kContainerDtypeF64);
        for (double v : t.data()) w.f64(v);
    }
    w.u32(crc32_of(w.buffer()));
    return w.take();
}

inline Container decode_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw Error(ErrorKind::length_mismatch, "container is truncated");
    ByteReader r(bytes, ErrorKind::length_mismatch);
    if (r.text(4) != "MCL1") throw Error(ErrorKind::bad_magic, "not a model container");
    if (const auto v = r.u32(); v != kContainerVersion)
        throw Error(ErrorKind::bad_version, "unsupported container version " + std::to_string(v));
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4), ErrorKind::length_mismatch);
    if (tail.u32() != crc32_of(body)) throw Error(ErrorKind::crc_failure, "container checksum mismatch");

    ByteReader b(body, ErrorKind::length_mismatch);
    b.bytes(8);
    Container c;
    for (std::uint32_t n = b.u32(); n > 0; --n) {
        auto key = b.text(b.u32());
        auto value = b.text(b.u32());
        if (!c.metadata.emplace(std::move(key), std::move(value)).second)
            throw Error(ErrorKind::format, "duplicate metadata key");
    }
    std::set<std::string> seen;
    for (std::uint32_t n = b.u32(); n > 0; --n) {
        auto name = b.text(b.u32());
        if (!seen.insert(name).second) throw Error(ErrorKind::format, "duplicate tensor name '" + name + "'");
        const std::size_t rank = b.u8();
        if (rank == 0) throw Error(ErrorKind::format, "tensor '" + name + "' has rank 0");
        Shape shape(rank);
        std::size_t count = 1;
        for (auto& e : shape) {
            e = b.u32();
            if (e == 0) throw Error(ErrorKind::format, "tensor '" + name + "' has a zero extent");
            if (count > b.remaining()) throw Error(ErrorKind::length_mismatch, "tensor '" + name + "' is truncated");
            count *= e;
        }
        if (const auto dtype = b.u8(); dtype != kContainerDtypeF64)
            throw Error(ErrorKind::format, "tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
        if (count > b.remaining() / 8) throw Error(ErrorKind::length_mismatch, "tensor '" + name + "' is truncated");
        Tensor t(shape);
        for (auto& v : t.data()) v = b.f64();
        c.tensors.push_back({std::move(name), std::move(t)});
    }
    if (b.remaining() != 0) throw Error(ErrorKind::length_mismatch, "trailing bytes after the last tensor");
    return c;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::format, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::format, "failed writing " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::format, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Parses "16x16x3" (also accepts ',' separators).
inline Shape parse_shape(std::string_view text) {
    Shape s;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find_first_of("x,", pos);
        const auto part = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        if (part.empty() || part.find_first_not_of("0123456789") != std::string_view::npos || part.size() > 9)
            throw Error(ErrorKind::argument, "malformed shape '" + std::string(text) + "'");
        s.push_back(std::stoul(std::string(part)));
        if (s.back() == 0) throw Error(ErrorKind::argument, "shape extents must be positive");
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return s;
}

namespace detail {

inline Matrix matrix_from(const Tensor& t, const std::string& name) {
    if (t.rank() != 2) throw Error(ErrorKind::format, "tensor '" + name + "' is not a matrix");
    return Matrix(t.shape()[0], t.shape()[1], std::vector<double>(t.data().begin(), t.data().end()));
}

inline Tensor tensor_from(const Matrix& m) {
    return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

inline void put_common(Container& c, const SensingOperatorSet& sensing, const TaskNetwork& net,
                       const std::optional<MaskSpec>& spec) {
    c.metadata["input_shape"] = shape_string(sensing.input_shape());
    c.metadata["measurement_shape"] = shape_string(sensing.measurement_shape());
    c.metadata["classes"] = std::to_string(net.classes());
    c.metadata["network"] = format_layers(net.layers());
    if (spec) {
        c.metadata["mask_min"] = shape_string(spec->min_dims);
        c.metadata["mask_max"] = shape_string(spec->max_dims);
    }
    for (std::size_t k = 0; k < sensing.phis.size(); ++k)
        c.tensors.push_back({"phi" + std::to_string(k), tensor_from(sensing.phis[k])});
}

inline void put_pair(Container& c, const std::string& prefix, const SynthesisOperatorSet& synthesis,
                     const TaskNetwork& net) {
    for (std::size_t k = 0; k < synthesis.thetas.size(); ++k)
        c.tensors.push_back({prefix + "theta" + std::to_string(k), tensor_from(synthesis.thetas[k])});
    for (const auto& [name, t] : net.weights()) c.tensors.push_back({prefix + name, t});
}

inline SensingOperatorSet get_sensing(const Container& c, std::size_t rank) {
    SensingOperatorSet s;
    for (std::size_t k = 0; k < rank; ++k) {
        const auto name = "phi" + std::to_string(k);
        s.phis.push_back(matrix_from(c.tensor(name), name));
    }
    return s;
}

inline void get_pair(const Container& c, const std::string& prefix, std::size_t rank, const Shape& input_shape,
                     SynthesisOperatorSet& synthesis, TaskNetwork& net) {
    synthesis.thetas.clear();
    for (std::size_t k = 0; k < rank; ++k) {
        const auto name = prefix + "theta" + std::to_string(k);
        synthesis.thetas.push_back(matrix_from(c.tensor(name), name));
    }
    net = TaskNetwork(input_shape, parse_layers(c.meta("network")));
    for (auto& [name, t] : net.weights()) {
        const Tensor& stored = c.tensor(prefix + name);
        if (stored.shape() != t.shape())
            throw Error(ErrorKind::format, "tensor '" + prefix + name + "' has shape " + shape_string(stored.shape()) +
                                               ", expected " + shape_string(t.shape()));
        t = stored;
    }
}

inline std::optional<MaskSpec> get_spec(const Container& c) {
    const bool has_min = c.metadata.count("mask_min") > 0, has_max = c.metadata.count("mask_max") > 0;
    if (has_min != has_max) throw Error(ErrorKind::format, "container has only one of mask_min/mask_max");
    if (!has_min) return std::nullopt;
    MaskSpec spec{parse_shape(c.meta("mask_min")), parse_shape(c.meta("mask_max"))};
    spec.validate();
    return spec;
}

inline void check_shapes(const Container& c, const SensingOperatorSet& s) {
    if (shape_string(s.input_shape()) != c.meta("input_shape") ||
        shape_string(s.measurement_shape()) != c.meta("measurement_shape"))
        throw Error(ErrorKind::format, "operator shapes disagree with container metadata");
}

}  // namespace detail

inline Container model_container(const MclModel& model) {
    model.validate();
    Container c;
    c.metadata["kind"] = "model";
    c.metadata["training_mode"] = to_string(model.mode);
    c.metadata["seed"] = std::to_string(model.seed);
    detail::put_common(c, model.sensing, model.network, model.mask_spec);
    detail::put_pair(c, "", model.synthesis, model.network);
    return c;
}

inline MclModel model_from_container(const Container& c) {
    if (c.meta("kind") != "model") throw Error(ErrorKind::format, "container holds a " + c.meta("kind") + ", not a model");
    const Shape input = parse_shape(c.meta("input_shape"));
    MclModel m;
    m.sensing = detail::get_sensing(c, input.size());
    detail::check_shapes(c, m.sensing);
    detail::get_pair(c, "", input.size(), input, m.synthesis, m.network);
    m.mask_spec = detail::get_spec(c);
    m.mode = parse_training_mode(c.meta("training_mode"));
    m.seed = std::stoull(c.meta("seed"));
    if (std::to_string(m.network.classes()) != c.meta("classes"))
        throw Error(ErrorKind::format, "class count disagrees with the network");
    if (c.tensors.size() != 2 * input.size() + m.network.weights().size())
        throw Error(ErrorKind::format, "container holds unexpected tensors");
    m.validate();
    return m;
}

inline std::string rate_prefix(const MaskDims& dims) { return "rate/" + shape_string(dims) + "/"; }

inline Container table_container(const RateTable& table) {
    if (table.pairs.empty()) throw Error(ErrorKind::argument, "rate table is empty");
    Container c;
    c.metadata["kind"] = "rate_table";
    std::string rates;
    for (const auto& p : table.pairs) rates += (rates.empty() ? "" : ";") + shape_string(p.dims);
    c.metadata["rates"] = rates;
    detail::put_common(c, table.sensing, table.pairs.front().network, table.spec);
    for (const auto& p : table.pairs) {
        if (format_layers(p.network.layers()) != c.metadata["network"])
            throw Error(ErrorKind::argument, "all rate pairs must share one network architecture");
        detail::put_pair(c, rate_prefix(p.dims), p.synthesis, p.network);
    }
    return c;
}

inline RateTable table_from_container(const Container& c) {
    if (c.meta("kind") != "rate_table")
        throw Error(ErrorKind::format, "container holds a " + c.meta("kind") + ", not a rate table");
    const Shape input = parse_shape(c.meta("input_shape"));
    RateTable t;
    t.sensing = detail::get_sensing(c, input.size());
    detail::check_shapes(c, t.sensing);
    validate(t.sensing);
    auto spec = detail::get_spec(c);
    if (!spec) throw Error(ErrorKind::format, "rate table lacks a mask spec");
    t.spec = *spec;
    const auto& rates = c.meta("rates");
    std::size_t pos = 0;
    while (pos <= rates.size()) {
        const auto end = rates.find(';', pos);
        RatePair p;
        p.dims = parse_shape(rates.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
        if (!t.spec.contains(p.dims) || t.find(p.dims))
            throw Error(ErrorKind::format, "invalid or repeated rate " + shape_string(p.dims));
        detail::get_pair(c, rate_prefix(p.dims), input.size(), input, p.synthesis, p.network);
        t.pairs.push_back(std::move(p));
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    return t;
}

inline void save_model(const std::filesystem::path& path, const MclModel& model) {
    write_file(path, encode_container(model_container(model)));
}
inline MclModel load_model(const std::filesystem::path& path) {
    return model_from_container(decode_container(read_file(path)));
}
inline void save_table(const std::filesystem::path& path, const RateTable& table) {
    write_file(path, encode_container(table_container(table)));
}
inline RateTable load_table(const std::filesystem::path& path) {
    return table_from_container(decode_container(read_file(path)));
}

}  // namespace mcl
