#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace mcl;

namespace {

std::vector<std::uint8_t> record(std::uint8_t label, std::uint8_t fill) {
    std::vector<std::uint8_t> r(kCifarRecord, fill);
    r[0] = label;
    return r;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("mcl_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Cifar, TwoZeroRecords) {
    auto bytes = record(0, 0);
    const auto second = record(9, 0);
    bytes.insert(bytes.end(), second.begin(), second.end());
    const auto ds = parse_cifar_binary(bytes, SplitTag::train);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 9}));
    for (const auto& s : ds.samples) {
        EXPECT_EQ(s.shape(), (Shape{32, 32, 3}));
        for (double v : s.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Cifar, LengthNotMultipleOfRecord) {
    const std::vector<std::uint8_t> bytes(kCifarRecord + 5, 0);
    try {
        (void)parse_cifar_binary(bytes, SplitTag::train);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::format);
    }
}

TEST(Cifar, LabelOutOfRange) {
    EXPECT_THROW((void)parse_cifar_binary(record(4, 0), SplitTag::train, 4), Error);
}

TEST(Cifar, PlanarLayoutMapsToChannelLast) {
    auto bytes = record(3, 0);
    bytes[1 + 0 * kCifarPlane + 5] = 255;         // R at (0, 5)
    bytes[1 + 1 * kCifarPlane + 32] = 51;         // G at (1, 0)
    bytes[1 + 2 * kCifarPlane + 32 * 31 + 31] = 102;  // B at (31, 31)
    const auto ds = parse_cifar_binary(bytes, SplitTag::test);
    const auto& img = ds.samples[0];
    EXPECT_EQ(img.at({0, 5, 0}), 1.0);
    EXPECT_EQ(img.at({1, 0, 1}), 0.2);
    EXPECT_EQ(img.at({31, 31, 2}), 0.4);
    EXPECT_EQ(ds.split, SplitTag::test);
}

TEST(Cifar, WriterRoundTripIsBitwise) {
    Rng rng(5);
    std::vector<std::uint8_t> bytes;
    for (int r = 0; r < 5; ++r) {
        bytes.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 9)));
        for (std::size_t i = 0; i < 3 * kCifarPlane; ++i) bytes.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
    }
    const auto path = temp_path("cifar.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    const auto ds = load_cifar_binary(path, SplitTag::train);
    const auto again = temp_path("cifar2.bin");
    write_cifar_binary(again, ds);
    EXPECT_EQ(read_file(again), bytes);
    std::filesystem::remove(path);
    std::filesystem::remove(again);
}

TEST(Cifar, MissingFile) { EXPECT_THROW((void)load_cifar_binary("/nonexistent/file.bin", SplitTag::train), Error); }

TEST(Synthetic, SeedDeterminismAndRange) {
    const auto a = make_synthetic(4, 20, {16, 16, 3}, 9);
    const auto b = make_synthetic(4, 20, {16, 16, 3}, 9);
    const auto c = make_synthetic(4, 20, {16, 16, 3}, 10);
    ASSERT_EQ(a.size(), 80u);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.samples[i].values(), b.samples[i].values());
        EXPECT_EQ(a.labels[i], b.labels[i]);
        differs |= a.samples[i].values() != c.samples[i].values();
        for (double v : a.samples[i].data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_TRUE(differs);
    std::vector<std::size_t> counts(4, 0);
    for (auto l : a.labels) ++counts[l];
    EXPECT_EQ(counts, (std::vector<std::size_t>(4, 20)));
}

TEST(Synthetic, NoiseFreeClassesHaveNoVariance) {
    SyntheticOptions opt;
    opt.noise_amplitude = 0.0;
    const auto ds = make_synthetic(3, 5, {8, 8, 3}, 2, opt);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.size(); ++j)
            if (ds.labels[i] == ds.labels[j]) { EXPECT_EQ(ds.samples[i].values(), ds.samples[j].values()); }
}

TEST(Synthetic, TemplatesHaveLowMultilinearRank) {
    SyntheticOptions opt;
    opt.noise_amplitude = 0.0;
    const auto templates = synthetic_templates(4, {16, 16, 3}, 4, opt);
    ASSERT_EQ(templates.size(), 4u);
    for (const auto& t : templates) {
        // Rescaling adds a constant, so each mode rank is at most rank + 1.
        const std::size_t limit[] = {3, 3, 2};
        for (std::size_t k = 0; k < 3; ++k) {
            const auto r = svd(oracle::unfold(t, k));
            std::size_t rank = 0;
            for (double s : r.s) rank += s > 1e-9 * r.s[0];
            EXPECT_LE(rank, limit[k]) << "mode " << k;
        }
    }
}

TEST(Synthetic, NearestTemplateClassifierIsAccurate) {
    SyntheticOptions clean;
    clean.noise_amplitude = 0.0;
    const auto templates = synthetic_templates(4, {16, 16, 3}, 21, clean);
    const auto ds = make_synthetic(4, 200, {16, 16, 3}, 21);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < templates.size(); ++c) {
            double d = 0.0;
            for (std::size_t p = 0; p < templates[c].size(); ++p) {
                const double e = ds.samples[i][p] - templates[c][p];
                d += e * e;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        correct += best == ds.labels[i];
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(ds.size()), 0.95);
}

TEST(Synthetic, ExportsAsCifarRecords) {
    const auto ds = make_synthetic(3, 2, {32, 32, 3}, 5);
    const auto bytes = encode_cifar_binary(ds);
    EXPECT_EQ(bytes.size(), 6 * kCifarRecord);
    const auto back = parse_cifar_binary(bytes, SplitTag::train, 3);
    EXPECT_EQ(back.labels, ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_LE(oracle::max_abs_diff(back.samples[i].data(), ds.samples[i].data()), 0.5 / 255.0 + 1e-12);
}

TEST(Augment, NoFlipNoShiftIsIdentity) {
    const Tensor img = oracle::random_tensor({8, 8, 3}, 1, 0, 1);
    EXPECT_EQ(apply_augmentation(img, AugmentDecision{}).values(), img.values());
}

TEST(Augment, FlipIsInvolution) {
    const Tensor img = oracle::random_tensor({6, 5, 2}, 2, 0, 1);
    const AugmentDecision d{true, 0, 0};
    EXPECT_EQ(apply_augmentation(apply_augmentation(img, d), d).values(), img.values());
    EXPECT_NE(flip_horizontal(img).values(), img.values());
}

TEST(Augment, ShiftIndexOracle) {
    Tensor img({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i + 1);
    const Tensor out = shift_image(img, 2, 0);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            const double expected = y < 2 ? 0.0 : img.at({y - 2, x, 0});
            EXPECT_EQ(out.at({y, x, 0}), expected);
        }
}

TEST(Augment, ShiftRangeScalesWithHeight) {
    EXPECT_EQ(augmentation_shift(32), 4u);
    EXPECT_EQ(augmentation_shift(16), 2u);
    EXPECT_EQ(augmentation_shift(8), 1u);
    EXPECT_EQ(augmentation_shift(4), 1u);
    Rng rng(3);
    std::set<std::ptrdiff_t> seen;
    for (int i = 0; i < 500; ++i) {
        const auto d = draw_augmentation({16, 16, 3}, rng);
        EXPECT_LE(std::abs(d.dy), 2);
        EXPECT_LE(std::abs(d.dx), 2);
        seen.insert(d.dy);
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Augment, PreservesShapeAndRange) {
    const auto ds = make_synthetic(2, 10, {16, 16, 3}, 4);
    Rng rng(8);
    const auto out = augment(ds.samples, rng);
    ASSERT_EQ(out.size(), ds.size());
    for (const auto& t : out) {
        EXPECT_EQ(t.shape(), (Shape{16, 16, 3}));
        for (double v : t.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Split, AllToTrain) {
    const auto ds = make_synthetic(2, 10, {4, 4, 1}, 1);
    const double f[] = {1.0};
    const auto s = split(ds, f, 3);
    EXPECT_EQ(s.train.size(), 20u);
    EXPECT_TRUE(s.val.empty());
    EXPECT_TRUE(s.test.empty());
}

TEST(Split, SizesDisjointAndStratified) {
    LabeledDataset ds;
    ds.class_count = 3;
    for (std::size_t i = 0; i < 100; ++i) ds.push_back(Tensor({1}, static_cast<double>(i)), i % 3);
    const double f[] = {0.8, 0.1, 0.1};
    const auto s = split(ds, f, 11);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 100u);
    EXPECT_NEAR(static_cast<double>(s.train.size()), 80.0, 2.0);
    EXPECT_NEAR(static_cast<double>(s.val.size()), 10.0, 2.0);
    EXPECT_NEAR(static_cast<double>(s.test.size()), 10.0, 2.0);

    std::set<double> ids;
    const LabeledDataset* parts[] = {&s.train, &s.val, &s.test};
    for (std::size_t p = 0; p < 3; ++p) {
        std::vector<std::size_t> per_class(3, 0);
        for (std::size_t i = 0; i < parts[p]->size(); ++i) {
            EXPECT_TRUE(ids.insert(parts[p]->samples[i][0]).second);
            ++per_class[parts[p]->labels[i]];
        }
        for (std::size_t c = 0; c < 3; ++c) {
            const double class_total = c == 0 ? 34.0 : 33.0;
            EXPECT_LE(std::abs(static_cast<double>(per_class[c]) - f[p] * class_total), 1.0);
        }
    }
    EXPECT_EQ(ids.size(), 100u);
}

TEST(Split, EvenDivisionGivesExactSizes) {
    LabeledDataset ds;
    ds.class_count = 2;
    for (std::size_t i = 0; i < 100; ++i) ds.push_back(Tensor({1}, static_cast<double>(i)), i % 2);
    const double f[] = {0.8, 0.1, 0.1};
    const auto s = split(ds, f, 2);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.val.size(), 10u);
    EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, ReproducibleAndValidated) {
    const auto ds = make_synthetic(4, 10, {4, 4, 1}, 1);
    const double f[] = {0.5, 0.5};
    const auto a = split(ds, f, 6), b = split(ds, f, 6);
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.samples[i].values(), b.train.samples[i].values());
    const double over[] = {0.7, 0.5};
    EXPECT_THROW((void)split(ds, over, 1), Error);
    const double zero[] = {0.0};
    EXPECT_THROW((void)split(ds, zero, 1), Error);
}
