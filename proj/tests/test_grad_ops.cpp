#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "uw1/grad_ops.hpp"
#include "uw1/pd_solver.hpp"

using namespace uw1;

namespace {

const GradScheme kSchemes[] = {GradScheme::Forward, GradScheme::Mixed, GradScheme::Directional8};

Eigen::MatrixXd dense_gradient(const GradOperator& g) {
    const size_t P = g.pixels(), F = g.flow_size();
    Eigen::MatrixXd G(F, P);
    std::vector<double> e(P, 0.0), out(F);
    for (size_t c = 0; c < P; ++c) {
        e[c] = 1.0;
        g.gradient(e.data(), out.data());
        e[c] = 0.0;
        for (size_t r = 0; r < F; ++r) G(r, c) = out[r];
    }
    return G;
}

}  // namespace

TEST(GradOps, SchemeNames) {
    for (GradScheme s : kSchemes) EXPECT_EQ(parse_scheme(to_string(s)), s);
    EXPECT_THROW(parse_scheme("central"), InputError);
}

TEST(GradOps, DivergenceIsNegativeAdjoint) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (GradScheme s : kSchemes) {
        GradOperator g(9, 7, 1.0 / 9, s);
        std::vector<double> f(g.pixels()), v(g.flow_size()), gf(g.flow_size()), dv(g.pixels());
        for (auto& x : f) x = nd(rng);
        for (auto& x : v) x = nd(rng);
        g.gradient(f.data(), gf.data());
        g.divergence(v.data(), dv.data());
        double lhs = 0.0, rhs = 0.0;
        for (size_t k = 0; k < gf.size(); ++k) lhs += gf[k] * v[k];
        for (size_t k = 0; k < f.size(); ++k) rhs -= f[k] * dv[k];
        EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << to_string(s);
    }
}

TEST(GradOps, LinearRampHasUnitGradient) {
    const int n = 8;
    const double dx = 1.0 / n;
    std::vector<double> f(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) f[j * n + i] = i * dx;
    for (GradScheme s : kSchemes) {
        VectorField v = to_vector_field(gradient(s, n, n, dx, f));
        if (s == GradScheme::Forward)
            for (int j = 0; j < n - 1; ++j)
                for (int i = 0; i < n - 1; ++i) {
                    EXPECT_NEAR(v.vx[j * n + i], 1.0, 1e-12);
                    EXPECT_NEAR(v.vy[j * n + i], 0.0, 1e-12);
                }
        std::vector<double> c(n * n, 3.0);
        for (double x : gradient(s, n, n, dx, c).values) EXPECT_EQ(x, 0.0);
    }
}

TEST(GradOps, RejectsDegenerateGrid) { EXPECT_THROW(GradOperator(1, 4, 1.0, GradScheme::Forward), InputError); }

TEST(GradOps, OperatorNormMatchesDenseSvd) {
    for (GradScheme s : kSchemes) {
        GradOperator g(8, 8, 1.0 / 8, s);
        Eigen::MatrixXd G = dense_gradient(g);
        double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(G).singularValues()(0);
        auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
            y.resize(g.flow_size());
            g.gradient(x.data(), y.data());
        };
        auto apply_t = [&](const std::vector<double>& y, std::vector<double>& x) {
            x.resize(g.pixels());
            g.divergence(y.data(), x.data());
            for (auto& v : x) v = -v;
        };
        OpNorm r = op_norm(apply, apply_t, g.pixels(), g.flow_size());
        EXPECT_NEAR(r.estimate, svd, 1e-3 * svd) << to_string(s);
        EXPECT_NEAR(r.bound, 1.01 * r.estimate, 1e-12);
    }
}

TEST(GradOps, SaddleOperatorNormMatchesDenseSvd) {
    for (bool extended : {false, true})
        for (GradScheme s : kSchemes) {
            const int n = 6;
            const double dx = 1.0 / n;
            GradOperator g(n, n, dx, s);
            const Eigen::Index P = g.pixels(), F = g.flow_size();
            Eigen::MatrixXd G = dense_gradient(g);
            // (phi, psi, r0, r1[, rho]) -> (div phi - r0, div psi - r1, r0, r1[, grad rho])
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(4 * P + (extended ? F : 0), 2 * F + 2 * P + (extended ? P : 0));
            K.block(0, 0, P, F) = -G.transpose();
            K.block(P, F, P, F) = -G.transpose();
            K.block(0, 2 * F, P, P) = -Eigen::MatrixXd::Identity(P, P);
            K.block(P, 2 * F + P, P, P) = -Eigen::MatrixXd::Identity(P, P);
            K.block(2 * P, 2 * F, P, P) = Eigen::MatrixXd::Identity(P, P);
            K.block(3 * P, 2 * F + P, P, P) = Eigen::MatrixXd::Identity(P, P);
            if (extended) K.block(4 * P, 2 * F + 2 * P, F, P) = G;
            double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(K).singularValues()(0);
            double est = detail::saddle_op_norm(n, n, dx, s, extended) / 1.01;
            EXPECT_NEAR(est, svd, 1e-3 * svd) << to_string(s) << " extended=" << extended;
        }
}
