#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace mcl;

namespace {

SensingOperatorSet random_sensing(const Shape& in, const Shape& out, std::uint64_t seed) {
    SensingOperatorSet ops;
    for (std::size_t k = 0; k < in.size(); ++k) ops.phis.push_back(oracle::random_matrix(out[k], in[k], seed + k));
    return ops;
}

std::vector<Tensor> random_dataset(std::size_t n, const Shape& shape, std::uint64_t seed) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_tensor(shape, seed + i));
    return out;
}

double energy(std::span<const Tensor> ds) {
    double e = 0.0;
    for (const auto& y : ds) e += y.norm() * y.norm();
    return e;
}

}  // namespace

TEST(Sense, IdentityOperatorsReturnInput) {
    const Tensor y = oracle::random_tensor({3, 4, 2}, 1);
    SensingOperatorSet ops;
    for (auto n : y.shape()) ops.phis.push_back(Matrix::identity(n));
    EXPECT_EQ(sense(y, ops).values(), y.values());
}

TEST(Sense, FullRankHosvdPreservesNorm) {
    const auto ds = random_dataset(10, {4, 4, 2}, 2);
    const auto init = hosvd_init(ds, {4, 4, 2});
    for (const auto& y : ds) EXPECT_NEAR(sense(y, init.sensing).norm(), y.norm(), 1e-10);
}

TEST(Sense, ShapeFor32x32x3To15x15x2) {
    const Tensor y({32, 32, 3}, 0.25);
    const auto ops = random_sensing({32, 32, 3}, {15, 15, 2}, 3);
    EXPECT_EQ(sense(y, ops).shape(), (Shape{15, 15, 2}));
    EXPECT_EQ(ops.measurement_shape(), (Shape{15, 15, 2}));
}

TEST(Sense, ShapeMismatchRejected) {
    const auto ops = random_sensing({4, 4, 2}, {2, 2, 1}, 4);
    EXPECT_THROW((void)sense(Tensor({4, 3, 2}), ops), Error);
}

TEST(Sense, EqualsKroneckerDenseOperator) {
    const Shape shapes[] = {{4}, {3, 4}, {4, 4, 3}, {2, 3, 4}};
    std::uint64_t seed = 20;
    for (const auto& in : shapes) {
        Shape out;
        for (auto n : in) out.push_back(n > 1 ? n - 1 : 1);
        const auto ops = random_sensing(in, out, seed);
        const Tensor y = oracle::random_tensor(in, seed + 7);
        const Matrix dense = oracle::kronecker_operator(ops.phis);
        const auto z_vec = vector_sense(y.data(), dense);
        EXPECT_LE(oracle::max_abs_diff(sense(y, ops).data(), z_vec), 1e-10) << shape_string(in);
        seed += 10;
    }
}

TEST(Sense, Linear) {
    const auto ops = random_sensing({4, 3, 2}, {2, 2, 1}, 30);
    const Tensor a = oracle::random_tensor({4, 3, 2}, 31), b = oracle::random_tensor({4, 3, 2}, 32);
    Tensor mix(a.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 1.5 * a[i] - 0.25 * b[i];
    const Tensor za = sense(a, ops), zb = sense(b, ops), zm = sense(mix, ops);
    for (std::size_t i = 0; i < zm.size(); ++i) EXPECT_NEAR(zm[i], 1.5 * za[i] - 0.25 * zb[i], 1e-10);
}

TEST(VectorSense, IdentityAndSum) {
    const std::vector<double> y{1, 2, 3};
    EXPECT_EQ(vector_sense(y, Matrix::identity(3)), y);
    EXPECT_EQ(vector_sense(y, Matrix(1, 3, 1.0)), (std::vector<double>{6}));
    EXPECT_THROW((void)vector_sense(y, Matrix(2, 2)), Error);
}

TEST(VectorSense, EqualMeasurementFlopCount) {
    ModelConfig cfg{{32, 32, 3}, {15, 15, 2}, {}};
    const auto r = count_flops(cfg);
    EXPECT_EQ(r.vector_sense_flops, 2ull * 450 * 3072);
    EXPECT_EQ(r.vector_sense_flops, 2'764'800ull);
    EXPECT_LT(r.mcs_flops, r.vector_sense_flops);
}

TEST(Synthesize, IdentityAndShape) {
    const Tensor z = oracle::random_tensor({3, 3, 2}, 40);
    SynthesisOperatorSet ops;
    for (auto n : z.shape()) ops.thetas.push_back(Matrix::identity(n));
    EXPECT_EQ(synthesize(z, ops).values(), z.values());

    SynthesisOperatorSet up;
    up.thetas = {Matrix(32, 15), Matrix(32, 15), Matrix(3, 2)};
    EXPECT_EQ(synthesize(Tensor({15, 15, 2}), up).shape(), (Shape{32, 32, 3}));
    EXPECT_THROW((void)synthesize(Tensor({15, 14, 2}), up), Error);
}

TEST(Synthesize, FullRankRoundTrip) {
    const auto ds = random_dataset(10, {4, 4, 2}, 50);
    const auto init = hosvd_init(ds, {4, 4, 2});
    for (const auto& y : ds) {
        const Tensor back = synthesize(sense(y, init.sensing), init.synthesis);
        EXPECT_LE(oracle::relative_frobenius(back.data(), y.data()), 1e-8);
    }
}

TEST(Hosvd, OperatorsAreTransposesAndOrthonormal) {
    const auto ds = random_dataset(10, {4, 4, 2}, 60);
    const auto init = hosvd_init(ds, {4, 4, 2});
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(init.sensing.phis[k].values(), init.synthesis.thetas[k].transpose().values());
        EXPECT_LE(oracle::row_orthonormality_error(init.sensing.phis[k]), 1e-10);
    }
    EXPECT_NEAR(init.core_energy, 1.0, 1e-10);
}

TEST(Hosvd, RankOneSampleIsExact) {
    const std::vector<double> a{1, 2, -1, 0.5}, b{0.3, -2, 1}, c{2, 1};
    Tensor y({4, 3, 2});
    oracle::for_each(y.shape(), [&](const std::vector<std::size_t>& i) {
        y[oracle::flat(y.shape(), i)] = a[i[0]] * b[i[1]] * c[i[2]];
    });
    const std::vector<Tensor> ds{y};
    const auto init = hosvd_init(ds, {1, 1, 1});
    EXPECT_NEAR(init.core_energy, 1.0, 1e-10);
}

TEST(Hosvd, LeadingVectorsMatchSvdOfStackedUnfolding) {
    const auto ds = random_dataset(20, {8, 8, 2}, 70);
    const Shape m{4, 4, 1};
    const auto init = hosvd_init(ds, m);
    for (std::size_t k = 0; k < 3; ++k) {
        // Unfolding of the stacked dataset: the sample index is one more column mode,
        // so concatenating per-sample unfoldings gives the same column space.
        const std::size_t rows = ds[0].shape()[k], per = ds[0].size() / rows;
        Matrix stacked(rows, per * ds.size());
        for (std::size_t n = 0; n < ds.size(); ++n) {
            const Matrix u = oracle::unfold(ds[n], k);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < per; ++j) stacked(i, n * per + j) = u(i, j);
        }
        const auto r = svd(stacked);
        for (std::size_t j = 0; j < m[k]; ++j) {
            // Same subspace direction: |<u_j, phi_j>| == 1.
            double dot = 0.0;
            for (std::size_t i = 0; i < rows; ++i) dot += r.u(i, j) * init.sensing.phis[k](j, i);
            EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
        }
    }
}

TEST(Hosvd, TruncatedEnergyMatchesTuckerOracle) {
    const auto ds = random_dataset(20, {8, 8, 2}, 80);
    const auto init = hosvd_init(ds, {4, 4, 1});
    EXPECT_LT(init.core_energy, 1.0);

    double kept = 0.0;
    for (const auto& y : ds) {
        Tensor z = y;
        for (std::size_t k = 0; k < 3; ++k) z = oracle::mode_product(z, init.sensing.phis[k], k);
        kept += z.norm() * z.norm();
    }
    EXPECT_NEAR(init.core_energy, kept / energy(ds), 1e-12);

    // Truncating only one mode keeps at least as much energy as truncating all.
    for (std::size_t k = 0; k < 3; ++k) {
        Shape single{8, 8, 2};
        single[k] = Shape{4, 4, 1}[k];
        EXPECT_GE(hosvd_init(ds, single).core_energy + 1e-12, init.core_energy);
    }
}

TEST(Hosvd, CoreEnergyMonotoneInEachMode) {
    const auto ds = random_dataset(10, {4, 4, 2}, 90);
    for (std::size_t k = 0; k < 3; ++k) {
        double prev = -1.0;
        for (std::size_t m = 1; m <= ds[0].shape()[k]; ++m) {
            Shape ms{2, 2, 1};
            ms[k] = m;
            const double e = hosvd_init(ds, ms).core_energy;
            EXPECT_GE(e, prev - 1e-12);
            EXPECT_LE(e, 1.0 + 1e-10);
            prev = e;
        }
    }
}

TEST(Hosvd, Errors) {
    EXPECT_THROW((void)hosvd_init(std::span<const Tensor>{}, {1, 1}), Error);
    const std::vector<Tensor> ds{Tensor({2, 2}, 1.0)};
    EXPECT_THROW((void)hosvd_init(ds, {3, 1}), Error);
}

TEST(Flops, IdentityConfigHasNoTaskFlops) {
    const auto r = count_flops({{4, 4, 2}, {4, 4, 2}, {}});
    EXPECT_EQ(r.tasknet_flops, 0u);
    EXPECT_EQ(r.ratio(), 0.0);
}

TEST(Flops, SeparableCountClosedForm) {
    const auto r = count_flops({{32, 32, 3}, {15, 15, 2}, {}});
    // Ascending modes: (32,32,3) -> (15,32,3) -> (15,15,3) -> (15,15,2).
    const std::uint64_t mcs = 2ull * (15 * 32 * 32 * 3 + 15 * 32 * 15 * 3 + 2 * 3 * 15 * 15);
    EXPECT_EQ(mcs, 138'060u);
    EXPECT_EQ(r.mcs_flops, mcs);
    // (15,15,2) -> (32,15,2) -> (32,32,2) -> (32,32,3).
    const std::uint64_t fs = 2ull * (32 * 15 * 15 * 2 + 32 * 15 * 32 * 2 + 3 * 2 * 32 * 32);
    EXPECT_EQ(r.fs_flops, fs);
}

TEST(Flops, TaskNetworkLayerCounts) {
    const std::vector<LayerSpec> layers{LayerSpec::conv(3, 4, 3, 2, 1), LayerSpec::relu(), LayerSpec::global_avg_pool(),
                                        LayerSpec::dense(4, 5)};
    const auto r = count_flops({{8, 8, 3}, {4, 4, 2}, layers});
    EXPECT_EQ(r.tasknet_flops, 2ull * 3 * 4 * 9 * 4 * 4 + 2ull * 4 * 5);
}

TEST(Flops, AllCnnRatioInsideBracket) {
    const auto r = count_flops({{32, 32, 3}, {15, 15, 2}, allcnn_c_layers(10)});
    EXPECT_GE(r.ratio(), 0.0003);
    EXPECT_LE(r.ratio(), 0.003);
    // Multiply-add pairs of sensing plus synthesis land near the quoted 120K.
    EXPECT_NEAR(static_cast<double>(r.mcs_flops + r.fs_flops) / 2.0, 120e3, 5e3);
}
