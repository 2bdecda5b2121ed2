#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uw1/grid_measure.hpp"

using namespace uw1;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("uw1_gm_" + name)).string();
}

}  // namespace

TEST(GridMeasure, SpacingUsesLongerSide) {
    GridMeasure m(8, 4);
    EXPECT_DOUBLE_EQ(m.spacing, 1.0 / 8);
    EXPECT_EQ(m.size(), 32u);
    EXPECT_EQ(m.index(3, 2), 2u * 8 + 3);
}

TEST(GridMeasure, RejectsTinyGridsAndBadValues) {
    EXPECT_THROW(GridMeasure(1, 5), InputError);
    EXPECT_THROW(GridMeasure(2, 2, {1, 2, 3}), InputError);
    EXPECT_THROW(GridMeasure(2, 2, {1, -1, 0, 0}), InputError);
    EXPECT_THROW(GridMeasure(2, 2, {1, NAN, 0, 0}), InputError);
}

TEST(GridMeasure, DiracCarriesItsMass) {
    GridMeasure d = dirac(2, 3, 0.7, 10, 10);
    EXPECT_NEAR(total_mass(d), 0.7, 1e-15);
    EXPECT_DOUBLE_EQ(d.at(2, 3), 0.7 / (0.1 * 0.1));
    EXPECT_THROW(dirac(10, 0, 1.0, 10, 10), InputError);
}

TEST(GridMeasure, NormalizedAndCombined) {
    GridMeasure a(4, 4), b(4, 4);
    a.at(0, 0) = 3.0;
    b.at(1, 1) = 5.0;
    EXPECT_NEAR(total_mass(normalized(a)), 1.0, 1e-14);
    GridMeasure c = combine(2.0, a, 1.0, b);
    EXPECT_DOUBLE_EQ(c.at(0, 0), 6.0);
    EXPECT_DOUBLE_EQ(c.at(1, 1), 5.0);
    EXPECT_THROW(normalized(GridMeasure(3, 3)), InputError);
}

TEST(GridMeasure, CsvRoundTrip) {
    GridMeasure a(3, 2, {0.5, 1.25, 0, 7, 8.125, 1e-7});
    std::string p = temp_path("rt.csv");
    save_image(a, p);
    GridMeasure b = load_image(p);
    ASSERT_EQ(b.width, 3);
    ASSERT_EQ(b.height, 2);
    for (size_t k = 0; k < a.size(); ++k) EXPECT_DOUBLE_EQ(a.values[k], b.values[k]);
    std::remove(p.c_str());
}

TEST(GridMeasure, PgmRoundTripForIntegerImages) {
    GridMeasure a(4, 3);
    for (size_t k = 0; k < a.size(); ++k) a.values[k] = static_cast<double>(k * 20);
    std::string p = temp_path("rt.pgm");
    save_image(a, p);
    GridMeasure b = load_image(p);
    ASSERT_TRUE(b.same_shape(a));
    for (size_t k = 0; k < a.size(); ++k) EXPECT_DOUBLE_EQ(a.values[k], b.values[k]);
    std::remove(p.c_str());
}

TEST(GridMeasure, AsciiPgmWithComments) {
    std::string p = temp_path("ascii.pgm");
    {
        std::ofstream f(p);
        f << "P2\n# comment\n2 2\n255\n0 10\n# more\n20 255\n";
    }
    GridMeasure m = load_image(p);
    EXPECT_DOUBLE_EQ(m.at(1, 0), 10.0);
    EXPECT_DOUBLE_EQ(m.at(1, 1), 255.0);
    std::remove(p.c_str());
}

TEST(GridMeasure, LoadErrors) {
    EXPECT_THROW(load_image(temp_path("missing.csv")), InputError);
    std::string p = temp_path("ragged.csv");
    {
        std::ofstream f(p);
        f << "1,2,3\n4,5\n";
    }
    EXPECT_THROW(load_image(p), InputError);
    {
        std::ofstream f(p);
        f << "1,2\n4,-5\n";
    }
    EXPECT_THROW(load_image(p), InputError);
    std::remove(p.c_str());
    EXPECT_THROW(format_from_path("image.png"), InputError);
}
