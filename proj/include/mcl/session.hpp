#pragma once

#include "mcl/channel.hpp"
#include "mcl/codec.hpp"
#include "mcl/mask.hpp"
#include "mcl/model.hpp"
#include "mcl/train.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace mcl {

namespace detail {

/// Exact comparison of max_k r_k - min_k r_k with r_k = dims[k] / max_dims[k].
struct Spread {
    // numerator / denominator of the spread, both non-negative
    unsigned __int128 num = 0;
    unsigned __int128 den = 1;

    static Spread of(const Shape& dims, const Shape& max_dims) {
        std::size_t hi = 0, lo = 0;
        for (std::size_t k = 1; k < dims.size(); ++k) {
            // dims[k]/max[k] > dims[hi]/max[hi]  <=>  dims[k]*max[hi] > dims[hi]*max[k]
            if (dims[k] * max_dims[hi] > dims[hi] * max_dims[k]) hi = k;
            if (dims[k] * max_dims[lo] < dims[lo] * max_dims[k]) lo = k;
        }
        using U = unsigned __int128;
        return {U(dims[hi]) * max_dims[lo] - U(dims[lo]) * max_dims[hi], U(max_dims[hi]) * max_dims[lo]};
    }

    friend bool operator<(const Spread& a, const Spread& b) { return a.num * b.den < b.num * a.den; }
};

inline bool fits(const Shape& dims, double budget) { return static_cast<double>(packet_bytes(dims)) <= budget; }

inline std::vector<MaskDims> enumerate_dims(const MaskSpec& spec) {
    std::vector<MaskDims> out;
    MaskDims d = spec.min_dims;
    for (;;) {
        out.push_back(d);
        std::size_t k = d.size();
        while (k > 0) {
            --k;
            if (d[k] < spec.max_dims[k]) {
                ++d[k];
                break;
            }
            d[k] = spec.min_dims[k];
            if (k == 0) return out;
        }
    }
}

}  // namespace detail

/// True when `a` is strictly preferred over `b` for the same budget: larger
/// element count, then smaller spread of per-mode fill ratios, then
/// lexicographically smaller.
inline bool controller_prefers(const MaskDims& a, const MaskDims& b, const Shape& max_dims) {
    const auto pa = shape_size(a), pb = shape_size(b);
    if (pa != pb) return pa > pb;
    const auto sa = detail::Spread::of(a, max_dims), sb = detail::Spread::of(b, max_dims);
    if (sa < sb) return true;
    if (sb < sa) return false;
    return a < b;
}

/// Largest prefix whose packet fits in rate * deadline bytes, chosen among
/// `candidates` (all dims of the spec when empty). When nothing fits the
/// smallest packet is returned, which is min_dims for the full grid.
inline MaskDims rate_controller(double rate_bps, double deadline_s, const MaskSpec& spec,
                                std::span<const MaskDims> candidates = {}) {
    spec.validate();
    if (!(deadline_s > 0.0)) throw Error(ErrorKind::argument, "deadline must be positive");
    const double budget = std::max(rate_bps, 0.0) * deadline_s;

    std::optional<MaskDims> best;
    auto consider = [&](const MaskDims& d) {
        if (!spec.contains(d) || !detail::fits(d, budget)) return;
        if (!best || controller_prefers(d, *best, spec.max_dims)) best = d;
    };
    if (candidates.empty()) {
        // Per mode the feasible set is downward closed, so scanning the grid is cheap enough.
        for (const auto& d : detail::enumerate_dims(spec)) consider(d);
        return best.value_or(spec.min_dims);
    }
    for (const auto& d : candidates) consider(d);
    if (best) return *best;
    std::optional<MaskDims> smallest;
    for (const auto& d : candidates) {
        if (!spec.contains(d)) continue;
        if (!smallest || packet_bytes(d) < packet_bytes(*smallest) ||
            (packet_bytes(d) == packet_bytes(*smallest) && d < *smallest))
            smallest = d;
    }
    if (!smallest) throw Error(ErrorKind::dims, "no candidate dims lie inside the mask spec");
    return *smallest;
}

struct SampleRecord {
    std::uint64_t sample_id = 0;
    MaskDims dims;
    std::size_t bytes = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<std::size_t> predicted;
    bool correct = false;
    std::string error;

    [[nodiscard]] double transmit_s() const { return end_s - start_s; }
};

struct SessionReport {
    std::vector<SampleRecord> records;

    [[nodiscard]] double duration_s() const { return records.empty() ? 0.0 : records.back().end_s; }
    [[nodiscard]] std::size_t correct_count() const {
        std::size_t c = 0;
        for (const auto& r : records) c += r.correct ? 1 : 0;
        return c;
    }
    [[nodiscard]] std::size_t failure_count() const {
        std::size_t c = 0;
        for (const auto& r : records) c += r.error.empty() ? 0 : 1;
        return c;
    }
    [[nodiscard]] double samples_per_second() const {
        return duration_s() > 0.0 ? static_cast<double>(records.size()) / duration_s() : 0.0;
    }
    [[nodiscard]] double mean_bytes() const {
        if (records.empty()) return 0.0;
        double total = 0.0;
        for (const auto& r : records) total += static_cast<double>(r.bytes);
        return total / static_cast<double>(records.size());
    }
    [[nodiscard]] double accuracy() const {
        return records.empty() ? 0.0 : static_cast<double>(correct_count()) / static_cast<double>(records.size());
    }
    [[nodiscard]] double correct_per_second() const {
        return duration_s() > 0.0 ? static_cast<double>(correct_count()) / duration_s() : 0.0;
    }
    /// Correct predictions whose transmission finished inside [t0, t1], per second.
    [[nodiscard]] double correct_per_second_between(double t0, double t1) const {
        if (!(t1 > t0)) throw Error(ErrorKind::argument, "empty time window");
        std::size_t c = 0;
        for (const auto& r : records)
            if (r.correct && r.end_s >= t0 && r.end_s <= t1) ++c;
        return static_cast<double>(c) / (t1 - t0);
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// One `sample ...` line per record followed by a `summary ...` line.
inline void write_report(std::ostream& os, const SessionReport& report) {
    using detail::fmt_double;
    for (const auto& r : report.records) {
        os << "sample id=" << r.sample_id << " dims=" << shape_string(r.dims) << " bytes=" << r.bytes
           << " start=" << fmt_double(r.start_s) << " end=" << fmt_double(r.end_s) << " predicted=";
        if (r.predicted)
            os << *r.predicted;
        else
            os << "none";
        os << " correct=" << (r.correct ? 1 : 0);
        if (!r.error.empty()) os << " error=" << r.error;
        os << '\n';
    }
    os << "summary samples=" << report.records.size() << " duration_s=" << fmt_double(report.duration_s())
       << " samples_per_s=" << fmt_double(report.samples_per_second())
       << " mean_bytes=" << fmt_double(report.mean_bytes()) << " accuracy=" << fmt_double(report.accuracy())
       << " correct_per_s=" << fmt_double(report.correct_per_second()) << " failures=" << report.failure_count()
       << '\n';
}

inline std::string report_text(const SessionReport& report) {
    std::ostringstream os;
    write_report(os, report);
    return os.str();
}

/// Finetuned server-side pairs keyed by dims, all sharing one sensing set.
struct RateTable {
    SensingOperatorSet sensing;
    MaskSpec spec;
    std::vector<RatePair> pairs;

    [[nodiscard]] const RatePair* find(const MaskDims& dims) const {
        for (const auto& p : pairs)
            if (p.dims == dims) return &p;
        return nullptr;
    }
    [[nodiscard]] std::vector<MaskDims> dims_list() const {
        std::vector<MaskDims> out;
        for (const auto& p : pairs) out.push_back(p.dims);
        return out;
    }
};

enum class Transport { in_process, tcp_loopback };

struct SessionOptions {
    double deadline_s = 1.0;
    /// Sends every sample at these dims instead of asking the controller.
    std::optional<MaskDims> fixed_dims;
    Transport transport = Transport::in_process;
    /// Test hook: may modify an encoded packet before it is sent.
    std::function<void(std::uint64_t, std::vector<std::uint8_t>&)> tamper;
};

namespace detail {

/// Sample i is produced at i * deadline and sent once both it and the link are ready.
class ChannelClock {
public:
    ChannelClock(const ChannelTrace& trace, double deadline) : trace_(trace), deadline_(deadline) {}

    [[nodiscard]] double ready_time(std::size_t index) const {
        return std::max(static_cast<double>(index) * deadline_, link_free_);
    }
    TransmitInterval send(std::size_t index, std::size_t bytes) {
        const auto iv = transmit_interval(trace_, ready_time(index), bytes);
        link_free_ = iv.end;
        return iv;
    }

private:
    const ChannelTrace& trace_;
    double deadline_;
    double link_free_ = 0.0;
};

using ServerPredictor = std::function<Tensor(const Tensor& z_bar)>;

inline SessionReport run_session_impl(const SensingOperatorSet& sensing, const MaskSpec& spec,
                                      std::span<const MaskDims> candidates, const ServerPredictor& predict,
                                      const LabeledDataset& data, const ChannelTrace& trace,
                                      const SessionOptions& opts) {
    trace.validate();
    if (!(opts.deadline_s > 0.0)) throw Error(ErrorKind::argument, "deadline must be positive");
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "session dataset is empty");
    if (opts.fixed_dims) {
        if (opts.fixed_dims->size() != spec.max_dims.size())
            throw Error(ErrorKind::dims, "fixed dims rank does not match the measurement");
        for (std::size_t k = 0; k < spec.max_dims.size(); ++k)
            if ((*opts.fixed_dims)[k] < 1 || (*opts.fixed_dims)[k] > spec.max_dims[k])
                throw Error(ErrorKind::dims, "fixed dims " + shape_string(*opts.fixed_dims) + " exceed the measurement");
    }

    auto channel = opts.transport == Transport::tcp_loopback ? make_tcp_loopback_channel() : make_in_process_channel();

    std::exception_ptr client_error;
    std::thread client([&] {
        try {
            ChannelClock clock(trace, opts.deadline_s);
            for (std::size_t i = 0; i < data.size(); ++i) {
                const MaskDims dims = opts.fixed_dims
                                          ? *opts.fixed_dims
                                          : rate_controller(trace.rate_at(clock.ready_time(i)), opts.deadline_s, spec,
                                                            candidates);
                auto bytes = encode_packet(acquire_prefix(sensing, data.samples[i], dims), i);
                clock.send(i, bytes.size());
                if (opts.tamper) opts.tamper(i, bytes);
                channel.client->write(bytes);
            }
        } catch (...) {
            client_error = std::current_exception();
        }
        channel.client->close_write();
    });

    SessionReport report;
    ChannelClock clock(trace, opts.deadline_s);
    std::exception_ptr server_error;
    try {
        for (std::size_t i = 0;; ++i) {
            // Frame: 6 fixed bytes, then dims/dtype/id/length, then payload and crc.
            std::vector<std::uint8_t> frame(6);
            if (!channel.server->read_exact(frame)) break;
            const std::size_t rank = frame[5];
            frame.resize(6 + 2 * rank + 13);
            channel.server->read_exact(std::span(frame).subspan(6));
            std::uint32_t payload_len = 0;
            for (int b = 0; b < 4; ++b)
                payload_len |= static_cast<std::uint32_t>(frame[frame.size() - 4 + static_cast<std::size_t>(b)])
                               << (8 * b);
            const std::size_t head = frame.size();
            frame.resize(head + payload_len + 4);
            channel.server->read_exact(std::span(frame).subspan(head));

            SampleRecord rec;
            rec.sample_id = i;
            rec.bytes = frame.size();
            const auto iv = clock.send(i, frame.size());
            rec.start_s = iv.start;
            rec.end_s = iv.end;
            try {
                auto packet = decode_packet(frame);
                rec.sample_id = packet.sample_id;
                rec.dims = packet.z_bar.shape();
                if (packet.sample_id >= data.size())
                    throw Error(ErrorKind::format, "sample id " + std::to_string(packet.sample_id) + " out of range");
                rec.predicted = argmax(predict(packet.z_bar));
                rec.correct = *rec.predicted == data.labels[packet.sample_id];
            } catch (const Error& e) {
                rec.error = to_string(e.kind());
            }
            report.records.push_back(std::move(rec));
        }
    } catch (...) {
        server_error = std::current_exception();
        channel.server.reset();  // unblocks a client stuck on a socket
    }
    client.join();
    if (client_error) std::rethrow_exception(client_error);
    if (server_error) std::rethrow_exception(server_error);
    return report;
}

}  // namespace detail

/// Single-model deployment: every received prefix is zero-padded and
/// classified by the model's own synthesis and network.
inline SessionReport run_session(const MclModel& model, const LabeledDataset& data, const ChannelTrace& trace,
                                 const SessionOptions& opts) {
    model.validate();
    const MaskSpec spec = model.mask_spec.value_or(MaskSpec{model.measurement_shape(), model.measurement_shape()});
    const Shape full = model.measurement_shape();
    auto predict = [&](const Tensor& z_bar) {
        model.check_dims(z_bar.shape());
        return predict_from_measurement(model.synthesis, model.network, z_bar, full);
    };
    return detail::run_session_impl(model.sensing, spec, {}, predict, data, trace, opts);
}

/// Table deployment: the controller only picks dims that have a finetuned pair
/// and the server dispatches on the received dims.
inline SessionReport run_session(const RateTable& table, const LabeledDataset& data, const ChannelTrace& trace,
                                 const SessionOptions& opts) {
    if (table.pairs.empty()) throw Error(ErrorKind::argument, "rate table is empty");
    validate(table.sensing);
    const Shape full = table.sensing.measurement_shape();
    const auto candidates = table.dims_list();
    auto predict = [&](const Tensor& z_bar) {
        const RatePair* pair = table.find(z_bar.shape());
        if (!pair) throw Error(ErrorKind::dims, "no finetuned pair for dims " + shape_string(z_bar.shape()));
        return predict_from_measurement(pair->synthesis, pair->network, z_bar, full);
    };
    return detail::run_session_impl(table.sensing, table.spec, candidates, predict, data, trace, opts);
}

}  // namespace mcl
