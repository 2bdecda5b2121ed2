#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "uw1/apps.hpp"

using namespace uw1;
using namespace uw1::apps;

TEST(Apps, CircleOfDiracs) {
    GridMeasure c = circle_of_diracs(48, 16, 18.0);
    EXPECT_NEAR(total_mass(c), 1.0, 1e-12);
    EXPECT_EQ(std::count_if(c.values.begin(), c.values.end(), [](double v) { return v > 0.0; }), 16);
    GridMeasure d = center_dirac(48);
    EXPECT_NEAR(total_mass(d), 1.0, 1e-12);
    EXPECT_GT(d.at(24, 24), 0.0);
}

TEST(Apps, TwoDisksGeometry) {
    TwoDiskParams p{64, 10, 3, 0.25, 0.25};
    GridMeasure m = two_disks(p);
    EXPECT_NEAR(left_radius(p), 13.0, 1e-12);
    EXPECT_NEAR(right_radius(p), 7.0, 1e-12);
    // Pixel area tracks the disk areas.
    double px = 0.0;
    for (double v : m.values) px += v > 0.0;
    EXPECT_NEAR(px, M_PI * (13.0 * 13.0 + 7.0 * 7.0), 0.03 * px);
    TwoDiskParams q{64, 10, 3, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(left_radius(q), 10.0);
    EXPECT_DOUBLE_EQ(disk_center_y(q, 0.0), 16.0);
    EXPECT_DOUBLE_EQ(disk_center_y(q, 1.0), 48.0);
}

TEST(Apps, SampleTimes) {
    auto t = sample_times(5);
    ASSERT_EQ(t.size(), 5u);
    EXPECT_DOUBLE_EQ(t.front(), 0.0);
    EXPECT_DOUBLE_EQ(t.back(), 1.0);
}

TEST(Apps, StripesAndNoise) {
    GridMeasure s = stripes_card(32);
    for (int i = 0; i < 32; ++i) EXPECT_DOUBLE_EQ(s.at(i, 0), 0.5);
    for (double v : s.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    GridMeasure n = add_gaussian_noise(s, 0.1, 3);
    for (double v : n.values) EXPECT_GE(v, 0.0);
    EXPECT_THROW(add_gaussian_noise(s, -1.0, 3), InputError);
}

TEST(Apps, SaltAndPepperIsReproducible) {
    GridMeasure s = stripes_card(64);
    SaltPepper a = salt_and_pepper(s, 0.005, 20, 7), b = salt_and_pepper(s, 0.005, 20, 7);
    EXPECT_EQ(a.salt, b.salt);
    EXPECT_EQ(a.pepper, b.pepper);
    for (size_t k : a.salt) EXPECT_EQ(a.image.values[k], 20.0);
    for (size_t k : a.pepper) EXPECT_EQ(a.image.values[k], 0.0);
    EXPECT_THROW(salt_and_pepper(s, 2.0, 20, 7), InputError);
}

TEST(Apps, ColumnBandFraction) {
    VectorField v{4, 2, std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)};
    v.vx[1] = 3.0;
    v.vy[6] = 1.0;
    EXPECT_DOUBLE_EQ(column_band_fraction(v, 1, 1), 0.75);
    EXPECT_DOUBLE_EQ(column_band_fraction(v, 2, 3), 0.25);
}

TEST(Apps, SwappedModel) {
    auto m = parse_model("d0=tv:a=1,b=2 d1=hellinger");
    auto s = swapped(m);
    EXPECT_EQ(to_string(swapped(s)), to_string(m));
    EXPECT_FALSE(is_symmetric(m));
    EXPECT_TRUE(is_symmetric(parse_model("d01=hellinger:w=0.3")));
    EXPECT_TRUE(is_symmetric(parse_model("d0=tv:a=1,b=2 d1=tv:a=2,b=1")));
}

TEST(Apps, ChainMonotone) {
    DiscrepancyMatrix M;
    M.labels = {"a", "b", "c"};
    M.values = {0, 1, 2, 1, 0, 1, 2, 1, 0};
    EXPECT_TRUE(chain_monotone(M));
    M.values = {0, 2, 1, 2, 0, 1, 1, 1, 0};
    EXPECT_FALSE(chain_monotone_row(M, 0));
    EXPECT_TRUE(chain_monotone_row(M, 1));
    EXPECT_FALSE(chain_monotone(M));
}

TEST(Apps, DiscrepancyMatrixOfDiracs) {
    std::vector<GridMeasure> im{dirac(1, 1, 1.0, 8, 8), dirac(3, 1, 1.0, 8, 8), dirac(6, 1, 1.0, 8, 8)};
    SolverConfig c;
    c.gap_tol = 1e-6;
    c.stop_tol = 1e-9;
    DiscrepancyMatrix M = discrepancy_matrix(im, {"1", "3", "6"}, parse_model(""), c, 2);
    ASSERT_TRUE(M.failures.empty());
    EXPECT_NEAR(M.at(0, 2), 5.0 / 8, 1e-4);
    EXPECT_NEAR(M.at(2, 0), 5.0 / 8, 1e-4);
    EXPECT_EQ(M.at(1, 1), 0.0);
    EXPECT_TRUE(chain_monotone(M));
}

TEST(Apps, JacobiEigen) {
    SymEigen e = jacobi_eigen({2, 1, 0, 1, 2, 0, 0, 0, 5}, 3);
    ASSERT_EQ(e.values.size(), 3u);
    EXPECT_NEAR(e.values[0], 1.0, 1e-12);
    EXPECT_NEAR(e.values[1], 3.0, 1e-12);
    EXPECT_NEAR(e.values[2], 5.0, 1e-12);
    EXPECT_NEAR(std::abs(e.vectors[0 * 3 + 0]), std::sqrt(0.5), 1e-12);
}

TEST(Apps, EmbeddingOrdersAChain) {
    const size_t n = 8;
    std::vector<double> d(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) d[i * n + j] = std::abs(double(i) - double(j));
    Embedding e = spectral_embedding(d, n);
    bool up = true, down = true;
    for (size_t i = 1; i < n; ++i) {
        up = up && e.coords[i][0] > e.coords[i - 1][0];
        down = down && e.coords[i][0] < e.coords[i - 1][0];
    }
    EXPECT_TRUE(up || down);
    EXPECT_THROW(spectral_embedding(d, 3), InputError);
}

TEST(Apps, SpikeCapture) {
    GridMeasure clean(4, 4);
    clean.values.assign(16, 1.0);
    SaltPepper sp{clean, {3}, {}};
    sp.image.values[3] = 21.0;
    Decomposition d{clean, std::vector<double>(16, 0.0), std::vector<double>(16, 0.0)};
    d.noise[3] = 15.0;
    DecompositionStats s = spike_capture(d, clean, sp);
    EXPECT_DOUBLE_EQ(s.injected, 20.0);
    EXPECT_DOUBLE_EQ(s.fraction(), 0.75);
}
