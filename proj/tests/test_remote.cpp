#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mcl;

namespace {

ErrorKind decode_error(std::span<const std::uint8_t> bytes) {
    try {
        (void)decode_packet(bytes);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "decode unexpectedly succeeded";
    return ErrorKind::argument;
}

// A trained-enough adaptive model on a tiny synthetic task, shared by the session tests.
struct SessionFixture {
    LabeledDataset train, test;
    MclModel model;
    SessionFixture() {
        const auto all = make_synthetic(3, 30, {8, 8, 3}, 5);
        const double f[] = {0.7, 0.3};
        auto s = split(all, f, 5);
        train = std::move(s.train);
        test = std::move(s.val);
        TaskNetwork net({8, 8, 3}, desk_network_layers(3, 3, 4));
        Rng rng(5);
        net.initialize(rng);
        pretrain_task_network(net, train, TrainConfig::pretrain_defaults(8));
        model = make_model(train, {4, 4, 2}, net);
        auto cfg = TrainConfig::scaled(6);
        cfg.seed = 5;
        train_adaptive(model, train, cfg, MaskSpec{{2, 2, 1}, {4, 4, 2}});
    }
};

const SessionFixture& fixture() {
    static const SessionFixture f;
    return f;
}

}  // namespace

TEST(Codec, ScalarFixtureBytes) {
    const auto bytes = encode_packet(Tensor({1, 1, 1}, 1.0), 7);
    ASSERT_EQ(bytes.size(), 33u);
    EXPECT_EQ(packet_bytes({1, 1, 1}), 33u);
    const std::vector<std::uint8_t> head{'M', 'C', 'L', 'P', 1, 3, 1, 0, 1, 0, 1, 0, 0, 7, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0,
                                         0x00, 0x00, 0x80, 0x3F};
    EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
    const std::uint32_t crc = bytes[29] | bytes[30] << 8 | bytes[31] << 16 | static_cast<std::uint32_t>(bytes[32]) << 24;
    EXPECT_EQ(crc, crc32_of(std::span(bytes).first(29)));
    const auto p = decode_packet(bytes);
    EXPECT_EQ(p.sample_id, 7u);
    EXPECT_EQ(p.z_bar.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(p.z_bar[0], 1.0);
}

TEST(Codec, Crc32KnownVector) {
    const std::string s = "123456789";
    EXPECT_EQ(crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())), 0xCBF43926u);
}

TEST(Codec, RoundTripEveryDimsInSpec) {
    const MaskSpec spec{{4, 4, 1}, {15, 15, 2}};
    const Tensor z = oracle::random_tensor({15, 15, 2}, 3, -50, 50);
    std::uint64_t id = 0;
    oracle::for_each({12, 12, 2}, [&](const std::vector<std::size_t>& o) {
        const Shape d{o[0] + 4, o[1] + 4, o[2] + 1};
        const Tensor prefix = subtensor_prefix(z, d);
        const auto bytes = encode_packet(prefix, id);
        ASSERT_EQ(bytes.size(), packet_bytes(d));
        const auto p = decode_packet(bytes);
        ASSERT_EQ(p.z_bar.shape(), d);
        ASSERT_EQ(p.sample_id, id);
        for (std::size_t i = 0; i < prefix.size(); ++i)
            ASSERT_EQ(p.z_bar[i], static_cast<double>(static_cast<float>(prefix[i])));
        ++id;
    });
    EXPECT_EQ(id, 288u);
}

TEST(Codec, SingleByteCorruptionAlwaysDetected) {
    Rng rng(99);
    for (int c = 0; c < 1000; ++c) {
        const Shape d{static_cast<std::size_t>(rng.uniform_int(1, 6)), static_cast<std::size_t>(rng.uniform_int(1, 6)),
                      static_cast<std::size_t>(rng.uniform_int(1, 2))};
        auto bytes = encode_packet(oracle::random_tensor(d, 1000 + c), static_cast<std::uint64_t>(c));
        const auto pos = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(bytes.size() - 1)));
        bytes[pos] ^= static_cast<std::uint8_t>(rng.uniform_int(1, 255));
        const ErrorKind kind = decode_error(bytes);
        const std::size_t header = 4 + 1 + 1 + 2 * 3 + 1 + 8 + 4;
        if (pos >= header || (pos >= 13 && pos < 21)) { EXPECT_EQ(kind, ErrorKind::crc_failure) << "byte " << pos; }
    }
}

TEST(Codec, RejectsGarbage) {
    auto bytes = encode_packet(Tensor({2, 2}, 0.5), 1);
    auto bad = bytes;
    std::copy_n("XXXX", 4, bad.begin());
    EXPECT_EQ(decode_error(bad), ErrorKind::bad_magic);
    bad = bytes;
    bad[4] = 2;
    EXPECT_EQ(decode_error(bad), ErrorKind::bad_version);
    EXPECT_EQ(decode_error(std::span(bytes).first(bytes.size() - 1)), ErrorKind::length_mismatch);
    EXPECT_EQ(decode_error(std::span(bytes).first(3)), ErrorKind::length_mismatch);
    bad = bytes;
    bad.push_back(0);
    EXPECT_EQ(decode_error(bad), ErrorKind::length_mismatch);
    EXPECT_THROW((void)encode_packet(Tensor({70000, 1}), 0), Error);
}

TEST(Codec, PayloadSizeStrictlyIncreasing) {
    for (std::size_t n = 1; n < 50; ++n) EXPECT_LT(packet_bytes({n, 1, 1}), packet_bytes({n + 1, 1, 1}));
}

TEST(Trace, ParseAndValidate) {
    std::istringstream in("# time rate\n0 1000\n\n2.5 10  # drop\n4 0\n");
    const auto t = parse_trace(in);
    ASSERT_EQ(t.steps.size(), 3u);
    EXPECT_EQ(t.rate_at(1.0), 1000.0);
    EXPECT_EQ(t.rate_at(3.0), 10.0);
    EXPECT_EQ(t.rate_at(100.0), 0.0);

    std::istringstream bad("0 10\n0 20\n");
    EXPECT_THROW((void)parse_trace(bad), Error);
    std::istringstream negative("0 -1\n");
    EXPECT_THROW((void)parse_trace(negative), Error);
    std::istringstream junk("0 ten\n");
    EXPECT_THROW((void)parse_trace(junk), Error);
    std::istringstream empty("# nothing\n");
    EXPECT_THROW((void)parse_trace(empty), Error);
}

TEST(Trace, TransmitIntervalWaitsForBandwidth) {
    ChannelTrace t;
    t.steps = {{0.0, 100.0}, {1.0, 0.0}, {3.0, 50.0}};
    const auto a = transmit_interval(t, 0.5, 100);
    EXPECT_DOUBLE_EQ(a.start, 0.5);
    EXPECT_DOUBLE_EQ(a.end, 1.5);
    const auto b = transmit_interval(t, 2.0, 100);
    EXPECT_DOUBLE_EQ(b.start, 3.0);
    EXPECT_DOUBLE_EQ(b.end, 5.0);
    ChannelTrace dead;
    dead.steps = {{0.0, 0.0}};
    EXPECT_THROW((void)transmit_interval(dead, 0.0, 10), Error);
}

TEST(Channel, InProcessAndTcpCarryIdenticalBytes) {
    for (auto make : {make_in_process_channel, make_tcp_loopback_channel}) {
        auto ch = make();
        std::vector<std::uint8_t> msg(10000);
        for (std::size_t i = 0; i < msg.size(); ++i) msg[i] = static_cast<std::uint8_t>(i * 7);
        std::thread writer([&] {
            ch.client->write(msg);
            ch.client->close_write();
        });
        std::vector<std::uint8_t> got(msg.size());
        EXPECT_TRUE(ch.server->read_exact(got));
        std::vector<std::uint8_t> extra(1);
        EXPECT_FALSE(ch.server->read_exact(extra));
        writer.join();
        EXPECT_EQ(got, msg);
    }
}

TEST(Controller, UnlimitedBandwidthGivesMax) {
    const MaskSpec spec{{4, 4, 1}, {15, 15, 2}};
    EXPECT_EQ(rate_controller(1e12, 1.0, spec), spec.max_dims);
}

TEST(Controller, ExactMinBudgetGivesMin) {
    const MaskSpec spec{{4, 4, 1}, {15, 15, 2}};
    EXPECT_EQ(rate_controller(static_cast<double>(packet_bytes({4, 4, 1})), 1.0, spec), (MaskDims{4, 4, 1}));
    EXPECT_EQ(rate_controller(10.0, 1.0, spec), (MaskDims{4, 4, 1}));
    EXPECT_EQ(rate_controller(0.0, 1.0, spec), (MaskDims{4, 4, 1}));
    EXPECT_THROW((void)rate_controller(100.0, 0.0, spec), Error);
}

TEST(Controller, Budget1000MatchesExhaustiveSearch) {
    const MaskSpec spec{{4, 4, 1}, {15, 15, 2}};
    const auto expected = oracle::brute_force_controller(1000.0, spec);
    ASSERT_TRUE(expected);
    EXPECT_EQ(rate_controller(1000.0, 1.0, spec), *expected);
    EXPECT_LE(packet_bytes(*expected), 1000u);
}

TEST(Controller, MatchesExhaustiveSearchOnManyBudgets) {
    const MaskSpec spec{{4, 4, 1}, {15, 15, 2}};
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        const double budget = rng.uniform(static_cast<double>(packet_bytes(spec.min_dims)), 1900.0);
        const auto expected = oracle::brute_force_controller(budget, spec);
        ASSERT_TRUE(expected);
        EXPECT_EQ(rate_controller(budget, 1.0, spec), *expected) << "budget " << budget;
    }
}

TEST(Controller, TableModeRestrictsCandidates) {
    const MaskSpec spec{{3, 3, 1}, {8, 8, 2}};
    const std::vector<MaskDims> table{{3, 3, 1}, {4, 6, 1}, {6, 4, 2}, {8, 8, 2}};
    EXPECT_EQ(rate_controller(1e9, 1.0, spec, table), (MaskDims{8, 8, 2}));
    EXPECT_EQ(rate_controller(static_cast<double>(packet_bytes({6, 4, 2})), 1.0, spec, table), (MaskDims{6, 4, 2}));
    EXPECT_EQ(rate_controller(static_cast<double>(packet_bytes({6, 4, 2})) - 1, 1.0, spec, table), (MaskDims{4, 6, 1}));
    EXPECT_EQ(rate_controller(1.0, 1.0, spec, table), (MaskDims{3, 3, 1}));
}

TEST(Report, AggregatesRecomputableFromRecords) {
    SessionReport r;
    r.records.push_back({0, {2, 2}, 47, 0.0, 0.5, 1, true, ""});
    r.records.push_back({1, {2, 2}, 47, 1.0, 1.5, 0, false, ""});
    r.records.push_back({2, {2, 2}, 47, 2.0, 2.5, std::nullopt, false, "crc-failure"});
    EXPECT_EQ(r.correct_count(), 1u);
    EXPECT_EQ(r.failure_count(), 1u);
    EXPECT_DOUBLE_EQ(r.accuracy(), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.mean_bytes(), 47.0);
    EXPECT_DOUBLE_EQ(r.samples_per_second(), 3.0 / 2.5);
    EXPECT_DOUBLE_EQ(r.correct_per_second(), 1.0 / 2.5);
    EXPECT_DOUBLE_EQ(r.correct_per_second_between(0.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(r.correct_per_second_between(0.5, 1.0), 2.0);
    EXPECT_THROW((void)r.correct_per_second_between(1.0, 1.0), Error);
    const auto text = report_text(r);
    EXPECT_NE(text.find("error=crc-failure"), std::string::npos);
    EXPECT_NE(text.find("summary samples=3"), std::string::npos);
}

TEST(Session, ConstantHighRateEqualsEvaluateAtMax) {
    const auto& f = fixture();
    const auto report = run_session(f.model, f.test, ChannelTrace::constant(1e9), SessionOptions{});
    ASSERT_EQ(report.records.size(), f.test.size());
    for (const auto& r : report.records) EXPECT_EQ(r.dims, (MaskDims{4, 4, 2}));
    EXPECT_EQ(report.accuracy(), evaluate(f.model, {4, 4, 2}, f.test));
    EXPECT_EQ(report.failure_count(), 0u);
}

TEST(Session, ConstantLowRateEqualsEvaluateAtMin) {
    const auto& f = fixture();
    SessionOptions opts;
    opts.deadline_s = 0.1;
    const auto report = run_session(f.model, f.test, ChannelTrace::constant(50.0), opts);
    for (const auto& r : report.records) EXPECT_EQ(r.dims, (MaskDims{2, 2, 1}));
    EXPECT_EQ(report.accuracy(), evaluate(f.model, {2, 2, 1}, f.test));
}

TEST(Session, TcpTransportProducesIdenticalReport) {
    const auto& f = fixture();
    SessionOptions opts;
    opts.deadline_s = 0.05;
    ChannelTrace trace;
    trace.steps = {{0.0, 5000.0}, {0.6, 1200.0}};
    const auto a = run_session(f.model, f.test, trace, opts);
    opts.transport = Transport::tcp_loopback;
    const auto b = run_session(f.model, f.test, trace, opts);
    EXPECT_EQ(report_text(a), report_text(b));
}

TEST(Session, TwoPhaseTraceBeatsFixedMaxOnConstrainedPhase) {
    const auto& f = fixture();
    SessionOptions opts;
    opts.deadline_s = 0.05;
    const double bytes_max = static_cast<double>(packet_bytes({4, 4, 2}));
    const double switch_t = 0.5;
    ChannelTrace trace;
    trace.steps = {{0.0, 4.0 * bytes_max / opts.deadline_s}, {switch_t, 0.5 * bytes_max / opts.deadline_s}};
    const auto adaptive = run_session(f.model, f.test, trace, opts);
    opts.fixed_dims = MaskDims{4, 4, 2};
    const auto fixed = run_session(f.model, f.test, trace, opts);

    // Dims shift at the phase boundary.
    for (const auto& r : adaptive.records) {
        if (r.start_s < switch_t) EXPECT_EQ(r.dims, (MaskDims{4, 4, 2}));
        else EXPECT_LT(shape_size(r.dims), 32u);
    }
    // Constrained phase: from the switch until the sensor stops producing samples.
    const double end = static_cast<double>(f.test.size()) * opts.deadline_s;
    EXPECT_GT(adaptive.correct_per_second_between(switch_t, end), fixed.correct_per_second_between(switch_t, end));
}

TEST(Session, CorruptedPacketIsRecordedNotFatal) {
    const auto& f = fixture();
    SessionOptions opts;
    opts.tamper = [](std::uint64_t id, std::vector<std::uint8_t>& bytes) {
        if (id == 2) bytes[bytes.size() - 6] ^= 0x40;
    };
    const auto report = run_session(f.model, f.test, ChannelTrace::constant(1e9), opts);
    ASSERT_EQ(report.records.size(), f.test.size());
    EXPECT_EQ(report.failure_count(), 1u);
    EXPECT_EQ(report.records[2].error, "crc-failure");
    EXPECT_FALSE(report.records[2].predicted.has_value());
    EXPECT_FALSE(report.records[2].correct);
}

TEST(Session, RateTableDispatchesOnDims) {
    const auto& f = fixture();
    RateTable table;
    table.sensing = f.model.sensing;
    table.spec = *f.model.mask_spec;
    auto cfg = TrainConfig::finetune_defaults();
    cfg.epochs = 2;
    for (const MaskDims& d : {MaskDims{2, 2, 1}, MaskDims{4, 4, 2}})
        table.pairs.push_back(finetune_server_side(f.model, d, f.train, cfg));
    const auto high = run_session(table, f.test, ChannelTrace::constant(1e9), SessionOptions{});
    for (const auto& r : high.records) EXPECT_EQ(r.dims, (MaskDims{4, 4, 2}));
    EXPECT_EQ(high.accuracy(), evaluate_rate_pair(table.sensing, table.pairs[1], f.test));
    SessionOptions slow;
    slow.deadline_s = 0.01;
    const auto low = run_session(table, f.test, ChannelTrace::constant(100.0), slow);
    for (const auto& r : low.records) EXPECT_EQ(r.dims, (MaskDims{2, 2, 1}));
    EXPECT_EQ(low.accuracy(), evaluate_rate_pair(table.sensing, table.pairs[0], f.test));
}

TEST(Session, DeterministicReports) {
    const auto& f = fixture();
    ChannelTrace trace;
    trace.steps = {{0.0, 800.0}, {0.3, 150.0}, {0.9, 2000.0}};
    SessionOptions opts;
    opts.deadline_s = 0.1;
    EXPECT_EQ(report_text(run_session(f.model, f.test, trace, opts)), report_text(run_session(f.model, f.test, trace, opts)));
}
