#include <gtest/gtest.h>

#include <cmath>

#include "uw1/integrands.hpp"

using namespace uw1;

namespace {

IntegrandSpec tv(double a, double b, double w = 1.0) { return make_spec(IntegrandKind::tv(a, b), w); }

}  // namespace

TEST(Integrands, ClosedFormCosts) {
    EXPECT_DOUBLE_EQ(eval_c(make_spec(IntegrandKind::discrete()), 2.0, 2.0), 0.0);
    EXPECT_EQ(eval_c(make_spec(IntegrandKind::discrete()), 2.0, 1.0), kInf);
    // a per unit created, b per unit removed.
    EXPECT_DOUBLE_EQ(eval_c(tv(2.0, 3.0), 5.0, 1.0), 12.0);
    EXPECT_DOUBLE_EQ(eval_c(tv(0.5, 2.0), 3.0, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(eval_c(tv(0.5, 2.0), 1.0, 3.0), 1.0);
    EXPECT_DOUBLE_EQ(eval_c(make_spec(IntegrandKind::hellinger()), 1.0, 4.0), 1.0);
    EXPECT_DOUBLE_EQ(eval_c(make_spec(IntegrandKind::hellinger(), 0.5), 1.0, 4.0), 0.5);
    // (m1 - m0)^2 / (m0 + m1)
    EXPECT_NEAR(eval_c(make_spec(IntegrandKind::chi_squared()), 1.0, 3.0), 1.0, 1e-15);
    // Disjoint supports under JS cost the total mass.
    EXPECT_NEAR(eval_c(make_spec(IntegrandKind::jensen_shannon()), 1.0, 0.0), 1.0, 1e-15);
    EXPECT_NEAR(eval_c(make_spec(IntegrandKind::jensen_shannon()), 0.3, 0.3), 0.0, 1e-15);
}

TEST(Integrands, EntropyEnds) {
    // p = 1: m1 log(m1/m0) - m1 + m0, with first-side transform 1 - exp(-s).
    auto e1 = make_spec(IntegrandKind::entropy(1.0));
    EXPECT_NEAR(eval_c(e1, 2.0, 1.0), 1.0 - std::log(2.0), 1e-14);
    EXPECT_DOUBLE_EQ(eval_c(e1, 1.0, 0.0), 1.0);
    EXPECT_EQ(eval_c(e1, 0.0, 1.0), kInf);
    EXPECT_NEAR(eval_h(e1, Side::First, 0.7).value, 1.0 - std::exp(-0.7), 1e-14);
    // p and 1 - p swap roles between the two sides.
    auto e0 = make_spec(IntegrandKind::entropy(0.0));
    for (double s : {-0.3, 0.0, 0.9}) EXPECT_NEAR(eval_h(e1, Side::Second, s).value, eval_h(e0, Side::First, s).value, 1e-14);
}

TEST(Integrands, WeightScalesCost) {
    for (auto k : {IntegrandKind::hellinger(), IntegrandKind::chi_squared(), IntegrandKind::jensen_shannon()}) {
        double c1 = eval_c(make_spec(k, 1.0), 0.7, 1.9), c3 = eval_c(make_spec(k, 3.0), 0.7, 1.9);
        EXPECT_NEAR(c3, 3.0 * c1, 1e-13);
    }
}

TEST(Integrands, HellingerTransform) {
    HEval e = eval_h(make_spec(IntegrandKind::hellinger()), Side::First, 1.0);
    EXPECT_DOUBLE_EQ(e.value, 0.5);
    EXPECT_DOUBLE_EQ(e.d1_left, 0.25);
    EXPECT_FALSE(eval_h(make_spec(IntegrandKind::hellinger()), Side::First, -1.5).finite());
}

TEST(Integrands, TvTransformAndReflection) {
    // h(s) = min(s, b) on s >= -a.
    ConcaveFn h = ConcaveFn::of(tv(0.5, 2.0), Side::First);
    EXPECT_TRUE(h.is_tv());
    EXPECT_DOUBLE_EQ(h(0.3), 0.3);
    EXPECT_DOUBLE_EQ(h(4.0), 2.0);
    EXPECT_DOUBLE_EQ(h.dom_lo(), -0.5);
    ConcaveFn r = ConcaveFn::of(tv(0.5, 2.0), Side::Second);
    EXPECT_DOUBLE_EQ(r(4.0), 0.5);
    EXPECT_DOUBLE_EQ(r.dom_lo(), -2.0);
}

TEST(Integrands, InducedCostMatchesClosedForm) {
    for (auto s : {make_spec(IntegrandKind::hellinger(), 0.4), make_spec(IntegrandKind::chi_squared()),
                   make_spec(IntegrandKind::jensen_shannon(), 2.0), tv(0.3, 0.8)}) {
        ConcaveFn h = ConcaveFn::of(s, Side::First);
        for (double m0 : {0.2, 1.0, 2.5})
            for (double m1 : {0.0, 0.5, 3.0}) EXPECT_NEAR(induced_c(h, m0, m1), eval_c(s, m0, m1), 1e-7) << to_string(s);
    }
}

TEST(Integrands, ChainedTvHellingerIsInfimalConvolution) {
    Discrepancy d{std::vector<IntegrandSpec>{tv(0.5, 0.5), make_spec(IntegrandKind::hellinger())}};
    double best = kInf;
    for (int i = 0; i <= 100000; ++i) {
        double m = 5.0 * i / 100000;
        best = std::min(best, eval_c(tv(0.5, 0.5), 2.0, m) + eval_c(make_spec(IntegrandKind::hellinger()), m, 0.5));
    }
    EXPECT_NEAR(eval_c(d, 2.0, 0.5), best, 1e-6);
}

TEST(Integrands, AdmissibilityChecker) {
    EXPECT_TRUE(check_admissible([](double s) { return std::min(s, 1.0); }).ok);
    ConcaveFn hel = ConcaveFn::of(make_spec(IntegrandKind::hellinger()), Side::First);
    EXPECT_TRUE(check_admissible([&](double s) { return hel(s); }).ok);
    EXPECT_FALSE(check_admissible([](double s) { return s * s; }).ok);
    EXPECT_FALSE(check_admissible([](double s) { return s + 1.0; }).ok);
    EXPECT_FALSE(check_admissible([](double s) { return 2.0 * s; }).ok);
    EXPECT_NO_THROW(induced_c_from_h(hel));
}

TEST(Integrands, ParseRoundTrip) {
    UnbalancedModel m = parse_model("d0=tv:a=1,b=2 d01=hellinger:w=0.5;d1=entropy:p=0");
    EXPECT_EQ(to_string(m), to_string(parse_model(to_string(m))));
    EXPECT_TRUE(parse_model("").d01.is_discrete());
    EXPECT_THROW(parse_model("d2=tv"), InputError);
    EXPECT_THROW(parse_spec("tv:p=3"), InputError);
    EXPECT_THROW(parse_spec("wasserstein"), InputError);
    EXPECT_THROW(parse_spec("hellinger:w=x"), InputError);
}

TEST(Integrands, ReductionRules) {
    auto fold = reduce_model(build_model(Discrepancy{}, Discrepancy{tv(0.1, 0.1)}, Discrepancy{}));
    ASSERT_FALSE(fold.applied.empty());
    EXPECT_EQ(fold.applied.front(), ReductionRule::FoldMiddleIntoFirst);
    EXPECT_TRUE(fold.model.d01.is_discrete());

    auto commute = reduce_model(build_model(Discrepancy{}, Discrepancy{}, Discrepancy{tv(0.2, 0.3)}));
    ASSERT_EQ(commute.applied.size(), 1u);
    EXPECT_EQ(commute.applied[0], ReductionRule::CommuteLastIntoFirst);
    EXPECT_TRUE(commute.model.d1.is_discrete());

    auto none = reduce_model(build_model(Discrepancy{}, Discrepancy{make_spec(IntegrandKind::hellinger())}, Discrepancy{}));
    EXPECT_TRUE(none.applied.empty());
}

TEST(Integrands, Existence) {
    UnbalancedModel w1 = build_model(Discrepancy{}, Discrepancy{}, Discrepancy{});
    EXPECT_EQ(check_existence(w1, 1.0, 1.0), Existence::Exists);
    EXPECT_EQ(check_existence(w1, 1.0, 1.5), Existence::Diverges);
    UnbalancedModel kr = build_model(Discrepancy{}, Discrepancy{tv(0.1, 0.1)}, Discrepancy{});
    EXPECT_EQ(check_existence(kr, 1.0, 3.0), Existence::Exists);
    UnbalancedModel e = parse_model("d0=entropy:p=1 d1=entropy:p=0");
    EXPECT_EQ(check_existence(e, 1.0, 4.0), Existence::Exists);
}
