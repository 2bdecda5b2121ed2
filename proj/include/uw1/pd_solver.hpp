#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "uw1/errors.hpp"
#include "uw1/grad_ops.hpp"
#include "uw1/grid_measure.hpp"
#include "uw1/integrands.hpp"
#include "uw1/prox.hpp"

namespace uw1 {

enum class StepRule { Scalar, Diagonal };

// Step sizes per variable block.
struct Steps {
    double alpha = 0.0;  // alpha, beta
    double eta = 0.0;    // eta, theta
    double zeta = 0.0;   // TV dual of the regularized problem
    double flow = 0.0;   // phi, psi
    double rho_dd = 0.0; // rho0'', rho1''
    double rho = 0.0;    // recovered image of the regularized problem
};

struct SolverConfig {
    // Scalar: sigma = tau = 0.95/||K|| unless given.  Diagonal: per-block steps from
    // the row and column absolute sums of K.
    StepRule step_rule = StepRule::Diagonal;
    double sigma = 0.0;  // scalar rule only; 0 selects step_ratio * 0.95 / ||K||
    double tau = 0.0;    // scalar rule only; 0 selects 0.95 / (step_ratio * ||K||)
    // Multiplies every dual step and divides every primal step (either rule).
    // 0 selects 10 / (mass-weighted mean density): potentials are of order one while
    // densities carry the data scale, and every discrepancy is positively 1-homogeneous.
    double step_ratio = 0.0;
    // Regularized solve only: extra factor on the TV dual step, divided out of the image step.
    // The TV dual is bounded by the small regularization weight; 0 selects 0.01.
    double tv_step_ratio = 0.0;
    double theta_relax = 1.0;
    int max_iter = 20000;
    double stop_tol = 1e-6;
    // Relative duality gap required on top of the residual test; <= 0 disables it.
    double gap_tol = 1e-4;
    GradScheme scheme = GradScheme::Forward;
    ProxConfig prox;
    int check_every = 50;
    // Abort immediately when the scalar existence test reports an infinite value.
    bool abort_if_divergent = true;
};

// All iterates of the discrete saddle-point problem.  Potentials alpha/beta
// with split copies eta/theta; flows phi/psi; intermediate densities rho0''/rho1''.
struct SaddleState {
    std::vector<double> alpha, beta, eta, theta;
    Flow2D phi, psi;
    std::vector<double> rho0_dd, rho1_dd;
    Flow2D phi_bar, psi_bar;
    std::vector<double> rho0_bar, rho1_bar;

    SaddleState() = default;
    SaddleState(int w, int h, GradScheme s) {
        size_t P = static_cast<size_t>(w) * h;
        alpha.assign(P, 0.0);
        beta = eta = theta = rho0_dd = rho1_dd = rho0_bar = rho1_bar = alpha;
        phi = psi = phi_bar = psi_bar = Flow2D(w, h, s);
    }
};

struct HistoryEntry {
    int iteration;
    double dual, primal, gap;
};

// Certified bounds: dual_value <= W <= primal_value on the discrete problem.
struct Certificate {
    double dual_value = -kInf;
    double primal_value = kInf;
    double gap = kInf;
    // Feasible intermediate densities used by the primal bound.
    std::vector<double> rho0_prime, rho0_dd, rho1_dd, rho1_prime;
};

enum class SolveStatus { Converged, MaxIterations };

struct Solution {
    double value = 0.0;
    double dual_value = -kInf;
    double primal_value = kInf;
    double gap = kInf;
    SaddleState state;
    Flow2D flow;  // psi - phi
    GridMeasure rho0_prime, rho1_prime;
    int iterations = 0;
    SolveStatus status = SolveStatus::MaxIterations;
    std::vector<HistoryEntry> history;
    std::vector<std::string> warnings;
    Steps steps;
    double op_norm = 0.0;  // ||K|| under the scalar rule, 0 otherwise
};

namespace detail {

// Operator norm of the saddle coupling, cached per grid geometry.
inline double saddle_op_norm(int w, int h, double dx, GradScheme s, bool extended) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, double, int, bool>, double> cache;
    auto key = std::make_tuple(w, h, dx, static_cast<int>(s), extended);
    {
        std::lock_guard<std::mutex> lk(mu);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    GradOperator g(w, h, dx, s);
    const size_t P = g.pixels(), F = g.flow_size();
    // y = (phi, psi, r0, r1[, rho]) -> x = (alpha, beta, eta, theta[, zeta])
    size_t n_in = 2 * F + 2 * P + (extended ? P : 0);
    size_t n_out = 4 * P + (extended ? F : 0);
    std::vector<double> tmp(P), tmpf(F);
    auto apply = [&](const std::vector<double>& y, std::vector<double>& x) {
        x.assign(n_out, 0.0);
        const double* phi = y.data();
        const double* psi = phi + F;
        const double* r0 = psi + F;
        const double* r1 = r0 + P;
        g.divergence(phi, tmp.data());
        for (size_t p = 0; p < P; ++p) x[p] = tmp[p] - r0[p];
        g.divergence(psi, tmp.data());
        for (size_t p = 0; p < P; ++p) x[P + p] = tmp[p] - r1[p];
        for (size_t p = 0; p < P; ++p) {
            x[2 * P + p] = r0[p];
            x[3 * P + p] = r1[p];
        }
        if (extended) g.gradient(r1 + P, x.data() + 4 * P);
    };
    auto apply_t = [&](const std::vector<double>& x, std::vector<double>& y) {
        y.assign(n_in, 0.0);
        g.gradient(x.data(), y.data());
        g.gradient(x.data() + P, y.data() + F);
        for (size_t p = 0; p < P; ++p) {
            y[2 * F + p] = x[2 * P + p] - x[p];
            y[2 * F + P + p] = x[3 * P + p] - x[P + p];
        }
        // The flow blocks of K^T are -grad.
        for (size_t k = 0; k < 2 * F; ++k) y[k] = -y[k];
        if (extended) {
            g.divergence(x.data() + 4 * P, tmp.data());
            for (size_t p = 0; p < P; ++p) y[2 * F + 2 * P + p] = -tmp[p];
        }
    };
    double n = op_norm(apply, apply_t, n_in, n_out).bound;
    std::lock_guard<std::mutex> lk(mu);
    cache[key] = n;
    return n;
}

// Builds a flow chi with div chi = r using the axis-aligned forward entries:
// residual is swept along each row to the last column, then down that column.
inline void route_residual(const GradOperator& g, const std::vector<double>& r, std::vector<double>& chi) {
    const auto& L = g.layout();
    const int E = L.entries_per_pixel();
    int ex = -1, ey = -1;
    for (int e = 0; e < E; ++e) {
        const auto& s = L.entries[e];
        if (s.di == 1 && s.dj == 0 && s.w == 1.0 && ex < 0) ex = e;
        if (s.di == 0 && s.dj == 1 && s.w == 1.0 && ey < 0) ey = e;
    }
    const int W = g.width(), H = g.height();
    const double dx = g.spacing();
    chi.assign(g.flow_size(), 0.0);
    double down = 0.0;
    for (int j = 0; j < H; ++j) {
        double carry = 0.0;
        for (int i = 0; i < W - 1; ++i) {
            carry += r[static_cast<size_t>(j) * W + i];
            chi[(static_cast<size_t>(j) * W + i) * E + ex] = carry * dx;
        }
        carry += r[static_cast<size_t>(j) * W + W - 1];
        down += carry;
        if (j < H - 1) chi[(static_cast<size_t>(j) * W + W - 1) * E + ey] = down * dx;
    }
}

inline double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Rescales v to total t; a zero vector is replaced by a scaled copy of fallback.
inline void rescale_to(std::vector<double>& v, double t, const std::vector<double>& fallback) {
    double s = sum(v);
    if (s > 0.0) {
        double f = t / s;
        for (double& x : v) x *= f;
        return;
    }
    if (t == 0.0) return;
    double sf = sum(fallback);
    if (sf > 0.0) {
        for (size_t k = 0; k < v.size(); ++k) v[k] = fallback[k] * t / sf;
    } else {
        for (double& x : v) x = t / static_cast<double>(v.size());
    }
}

// Subgradient-consistent intermediate density: rho' in rho * [h'_+(s), h'_-(s)]
// (the upper end is unbounded where s sits on the closed domain boundary).
inline double consistent_prime(const ConcaveFn& h, double lower_bound, double rho, double s, double guess,
                               double slack) {
    bool at_floor = lower_bound > -kInf && s <= lower_bound + slack;
    if (rho == 0.0) return at_floor ? std::max(0.0, guess) : 0.0;
    HEval right = h.eval(s + slack), left = h.eval(std::max(s - slack, lower_bound));
    double lo = right.finite() ? rho * right.d1_right : 0.0;
    double hi = at_floor ? kInf : (left.finite() ? rho * left.d1_left : kInf);
    if (hi < lo) std::swap(lo, hi);
    return std::clamp(std::max(0.0, guess), lo, hi);
}

}  // namespace detail

// Dual bound from the potentials (projected into B and rescaled to be 1-Lipschitz)
// and primal bound from a repaired flow formulation built from the iterates.
inline Certificate duality_gap(const UnbalancedModel& model, const GridMeasure& rho0, const GridMeasure& rho1,
                               const SaddleState& st, GradScheme scheme, const ProxConfig& pc = {}) {
    if (!rho0.same_shape(rho1)) throw InputError("measures differ in shape");
    const auto& t = model.triple;
    const double dx = rho0.spacing, dx2 = dx * dx;
    GradOperator g(rho0.width, rho0.height, dx, scheme);
    const size_t P = g.pixels(), F = g.flow_size();
    Certificate c;

    // Dual side.
    std::vector<double> a(P), b(P), ga(F), gb(F);
    for (size_t p = 0; p < P; ++p) {
        Point2 q = project_B(t, {st.alpha[p], st.beta[p]}, pc, true);
        a[p] = q[0];
        b[p] = q[1];
    }
    g.gradient(a.data(), ga.data());
    g.gradient(b.data(), gb.data());
    double lip = std::max({1.0, g.max_column_norm(ga.data()), g.max_column_norm(gb.data())});
    double dual = 0.0;
    for (size_t p = 0; p < P; ++p) {
        if (rho0.values[p] > 0.0) dual += rho0.values[p] * t.h0(a[p] / lip);
        if (rho1.values[p] > 0.0) dual += rho1.values[p] * t.h1(b[p] / lip);
    }
    c.dual_value = std::isnan(dual) ? -kInf : dx2 * dual;

    // Primal side: the iterates' implicit densities, clamped to the subgradient intervals at
    // the projected potentials.  Iterates hover near kinks, so the intervals are widened by a
    // few relative slacks and the cheapest repaired candidate is kept; each is feasible.
    std::vector<double> div_phi(P), div_psi(P);
    g.divergence(st.phi.values.data(), div_phi.data());
    g.divergence(st.psi.values.data(), div_psi.data());
    const bool d0_eq = model.d0.is_discrete(), d01_eq = model.d01.is_discrete(), d1_eq = model.d1.is_discrete();
    std::vector<double> r0p(P), r0d(P), r1d(P), r1p(P), res(P), chi;
    c.primal_value = kInf;
    for (double slack : {1e-9, 1e-6, 1e-3}) {
        for (size_t p = 0; p < P; ++p) {
            double sa = slack * (1.0 + std::abs(a[p])), sb = slack * (1.0 + std::abs(b[p]));
            r0p[p] = detail::consistent_prime(t.h0, t.alpha_min, rho0.values[p], a[p], st.rho0_dd[p] - div_phi[p], sa);
            r1p[p] = detail::consistent_prime(t.h1, t.beta_min, rho1.values[p], b[p], st.rho1_dd[p] - div_psi[p], sb);
            r0d[p] = std::max(0.0, st.rho0_dd[p]);
            r1d[p] = std::max(0.0, st.rho1_dd[p]);
        }
        if (d0_eq) r0p = rho0.values;
        if (d1_eq) r1p = rho1.values;
        if (d01_eq) {
            double m;
            if (d0_eq) m = detail::sum(rho0.values);
            else if (d1_eq) m = detail::sum(rho1.values);
            else m = 0.5 * (detail::sum(r0p) + detail::sum(r1p));
            if (!d0_eq) detail::rescale_to(r0p, m, rho0.values);
            if (!d1_eq) detail::rescale_to(r1p, m, rho1.values);
            for (size_t p = 0; p < P; ++p) r0d[p] = 0.5 * (r0d[p] + r1d[p]);
            detail::rescale_to(r0d, m, r0p);
            r1d = r0d;
        } else {
            detail::rescale_to(r0d, detail::sum(r0p), r0p);
            detail::rescale_to(r1d, detail::sum(r1p), r1p);
        }
        double mass_mismatch =
            std::abs(detail::sum(r0p) - detail::sum(r0d)) + std::abs(detail::sum(r1p) - detail::sum(r1d));
        double mass_scale = detail::sum(rho0.values) + detail::sum(rho1.values) + 1e-300;
        if (mass_mismatch > 1e-9 * mass_scale) continue;
        double local = 0.0;
        for (size_t p = 0; p < P; ++p) {
            local += eval_c(model.d0, rho0.values[p], r0p[p]);
            local += eval_c(model.d01, r0d[p], r1d[p]);
            local += eval_c(model.d1, r1p[p], rho1.values[p]);
        }
        for (size_t p = 0; p < P; ++p) res[p] = (r0d[p] - r0p[p]) - div_phi[p];
        detail::route_residual(g, res, chi);
        for (size_t k = 0; k < F; ++k) chi[k] += st.phi.values[k];
        double flows = g.column_norm_sum(chi.data());
        for (size_t p = 0; p < P; ++p) res[p] = (r1d[p] - r1p[p]) - div_psi[p];
        detail::route_residual(g, res, chi);
        for (size_t k = 0; k < F; ++k) chi[k] += st.psi.values[k];
        flows += g.column_norm_sum(chi.data());
        double value = dx2 * (local + flows);
        if (value < c.primal_value) {
            c.primal_value = value;
            c.rho0_prime = r0p;
            c.rho0_dd = r0d;
            c.rho1_dd = r1d;
            c.rho1_prime = r1p;
        }
    }
    if (!std::isfinite(c.primal_value)) {
        c.rho0_prime = r0p;
        c.rho0_dd = r0d;
        c.rho1_dd = r1d;
        c.rho1_prime = r1p;
    }
    c.gap = c.primal_value - c.dual_value;
    return c;
}

namespace detail {

struct Stepper {
    const UnbalancedModel& model;
    const GridMeasure& rho0;
    const GridMeasure& rho1;
    const SolverConfig& cfg;
    GradOperator g;
    Steps sp;
    std::vector<double> div_a, div_b, grad_a, grad_b;

    Stepper(const UnbalancedModel& m, const GridMeasure& r0, const GridMeasure& r1, const SolverConfig& c, const Steps& s)
        : model(m), rho0(r0), rho1(r1), cfg(c), g(r0.width, r0.height, r0.spacing, c.scheme), sp(s) {
        div_a.resize(g.pixels());
        div_b.resize(g.pixels());
        grad_a.resize(g.flow_size());
        grad_b.resize(g.flow_size());
    }

    // Dual ascent on (alpha, beta, eta, theta); beta's data weight is rho1w.
    void dual_step(SaddleState& st, const std::vector<double>& rho1w) {
        const auto& t = model.triple;
        g.divergence(st.phi_bar.values.data(), div_a.data());
        g.divergence(st.psi_bar.values.data(), div_b.data());
        for (size_t p = 0; p < g.pixels(); ++p) {
            const double sa = sp.alpha, se = sp.eta;
            double a = st.alpha[p] + sa * (div_a[p] - st.rho0_bar[p]);
            double b = st.beta[p] + sa * (div_b[p] - st.rho1_bar[p]);
            st.alpha[p] = std::max(t.alpha_min, prox_neg_h(t.h0, sa * rho0.values[p], a, cfg.prox));
            st.beta[p] = std::max(t.beta_min, prox_neg_h(t.h1, sa * rho1w[p], b, cfg.prox));
            Point2 q = project_B(t, {st.eta[p] + se * st.rho0_bar[p], st.theta[p] + se * st.rho1_bar[p]},
                                 cfg.prox, false);
            st.eta[p] = q[0];
            st.theta[p] = q[1];
        }
    }

    // Primal descent on (phi, psi, rho0'', rho1'') followed by over-relaxation.
    void primal_step(SaddleState& st) {
        const auto& L = g.layout();
        const int C = L.columns, D = L.column_dim;
        g.gradient(st.alpha.data(), grad_a.data());
        g.gradient(st.beta.data(), grad_b.data());
        const double th = cfg.theta_relax, tau = sp.flow, tr = sp.rho_dd;
        auto update_flow = [&](Flow2D& f, Flow2D& fb, const std::vector<double>& gr) {
            double col[8];
            for (size_t p = 0; p < g.pixels(); ++p)
                for (int c = 0; c < C; ++c) {
                    size_t base = p * C * D + c * D;
                    for (int d = 0; d < D; ++d) col[d] = f.values[base + d] + tau * gr[base + d];
                    shrink(col, D, tau);
                    for (int d = 0; d < D; ++d) {
                        double old = f.values[base + d];
                        f.values[base + d] = col[d];
                        fb.values[base + d] = col[d] + th * (col[d] - old);
                    }
                }
        };
        update_flow(st.phi, st.phi_bar, grad_a);
        update_flow(st.psi, st.psi_bar, grad_b);
        for (size_t p = 0; p < g.pixels(); ++p) {
            double n0 = st.rho0_dd[p] + tr * (st.alpha[p] - st.eta[p]);
            double n1 = st.rho1_dd[p] + tr * (st.beta[p] - st.theta[p]);
            st.rho0_bar[p] = n0 + th * (n0 - st.rho0_dd[p]);
            st.rho1_bar[p] = n1 + th * (n1 - st.rho1_dd[p]);
            st.rho0_dd[p] = n0;
            st.rho1_dd[p] = n1;
        }
    }

    double split_residual(const SaddleState& st) const {
        double r = 0.0;
        for (size_t p = 0; p < g.pixels(); ++p)
            r = std::max(r, std::abs(st.alpha[p] - st.eta[p]) + std::abs(st.beta[p] - st.theta[p]));
        return r;
    }
};

inline void check_finite(const SaddleState& st, int iter) {
    auto bad = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) return true;
        return false;
    };
    if (bad(st.alpha) || bad(st.beta) || bad(st.eta) || bad(st.theta) || bad(st.phi.values) || bad(st.psi.values) ||
        bad(st.rho0_dd) || bad(st.rho1_dd)) {
        std::ostringstream os;
        os << "non-finite iterate at iteration " << iter;
        throw NumericalError(os.str());
    }
}

// Mass-weighted mean density sum(rho^2) / sum(rho) over both measures.
inline double typical_density(const std::vector<double>& a, const std::vector<double>& b) {
    double s1 = 0.0, s2 = 0.0;
    for (size_t p = 0; p < a.size(); ++p) {
        s1 += a[p] + b[p];
        s2 += a[p] * a[p] + b[p] * b[p];
    }
    return s1 > 0.0 ? s2 / s1 : 0.0;
}

inline double auto_step_ratio(double density) { return density > 0.0 ? 10.0 / density : 1.0; }

inline Steps choose_steps(const SolverConfig& cfg, int w, int h, double dx, bool extended, double density,
                          double& knorm) {
    if (!(cfg.step_ratio >= 0.0)) throw InputError("step_ratio must be nonnegative");
    const double r = cfg.step_ratio > 0.0 ? cfg.step_ratio : auto_step_ratio(density);
    Steps s;
    if (cfg.step_rule == StepRule::Scalar) {
        knorm = saddle_op_norm(w, h, dx, cfg.scheme, extended);
        double sigma = cfg.sigma > 0.0 ? cfg.sigma : r * 0.95 / knorm;
        double tau = cfg.tau > 0.0 ? cfg.tau : 0.95 / (r * knorm);
        if (!(sigma * tau * knorm * knorm < 1.0)) throw InputError("step sizes violate sigma*tau*||K||^2 < 1");
        s.alpha = s.eta = s.zeta = sigma;
        s.flow = s.rho_dd = s.rho = tau;
        return s;
    }
    knorm = 0.0;
    // Inverse absolute row sums (duals) and column sums (primals) of K, bounded over pixels.
    double wmax = 0.0, wsum = 0.0;
    for (const auto& e : layout_of(cfg.scheme).entries) {
        wmax = std::max(wmax, std::abs(e.w));
        wsum += std::abs(e.w);
    }
    s.alpha = r / (2.0 * wsum / dx + 1.0);
    s.eta = r;
    s.zeta = r * dx / (2.0 * wmax);
    s.flow = dx / (2.0 * wmax) / r;
    s.rho_dd = 0.5 / r;
    s.rho = 1.0 / (2.0 * wsum / dx) / r;
    return s;
}

inline double sup_bound(const UnbalancedModel& m, double mass0, double mass1) {
    double b = 0.0;
    if (mass0 > 0.0) b += mass0 * m.triple.h0.sup();
    if (mass1 > 0.0) b += mass1 * m.triple.h1.sup();
    return b;
}

}  // namespace detail

inline Solution solve(const UnbalancedModel& model, const GridMeasure& rho0, const GridMeasure& rho1,
                      const SolverConfig& cfg = {}) {
    if (!rho0.same_shape(rho1)) throw InputError("measures differ in shape");
    rho0.validate();
    rho1.validate();
    if (cfg.check_every < 1 || cfg.max_iter < 0) throw InputError("bad iteration settings");
    Solution sol;
    const double m0 = total_mass(rho0), m1 = total_mass(rho1);
    Existence ex = check_existence(model, m0, m1);
    if (ex == Existence::Diverges) {
        if (cfg.abort_if_divergent)
            throw DivergentProblem("discrepancy is infinite for masses " + fmt_num(m0) + " and " + fmt_num(m1));
        sol.warnings.push_back("existence check: diverges");
    } else if (ex == Existence::NoMaximizer) {
        sol.warnings.push_back("existence check: supremum not attained");
    }
    const double dx = rho0.spacing;
    double knorm = 0.0;
    Steps steps = detail::choose_steps(cfg, rho0.width, rho0.height, dx, false,
                                       detail::typical_density(rho0.values, rho1.values), knorm);
    sol.steps = steps;
    sol.op_norm = knorm;

    SaddleState st(rho0.width, rho0.height, cfg.scheme);
    detail::Stepper step(model, rho0, rho1, cfg, steps);
    const double bound = detail::sup_bound(model, m0, m1);
    const double scale_floor = std::max(1e-12, 1e-3 * (m0 + m1));
    double prev_dual = kInf;
    Certificate cert;
    bool have_cert = false;
    int it = 0;
    for (; it < cfg.max_iter;) {
        step.dual_step(st, rho1.values);
        step.primal_step(st);
        ++it;
        if (it % cfg.check_every != 0 && it != cfg.max_iter) continue;
        detail::check_finite(st, it);
        cert = duality_gap(model, rho0, rho1, st, cfg.scheme, cfg.prox);
        have_cert = true;
        sol.history.push_back({it, cert.dual_value, cert.primal_value, cert.gap});
        if (std::isfinite(bound) && cert.dual_value > 10.0 * std::max(bound, scale_floor))
            throw DivergentProblem("dual value exceeded the finite-supremum bound");
        double value = std::isfinite(cert.primal_value) ? 0.5 * (cert.dual_value + cert.primal_value) : cert.dual_value;
        double scale = std::max(std::abs(value), scale_floor);
        double change = std::isfinite(prev_dual) ? std::abs(cert.dual_value - prev_dual) / scale : kInf;
        double split = step.split_residual(st);
        double residual = std::max(change, split);
        prev_dual = cert.dual_value;
        bool gap_ok = cfg.gap_tol <= 0.0 || cert.gap <= cfg.gap_tol * scale;
        if (residual < cfg.stop_tol && gap_ok) {
            sol.status = SolveStatus::Converged;
            break;
        }
    }
    if (!have_cert) cert = duality_gap(model, rho0, rho1, st, cfg.scheme, cfg.prox);
    sol.iterations = it;
    sol.steps = step.sp;
    sol.dual_value = cert.dual_value;
    sol.primal_value = cert.primal_value;
    sol.gap = cert.gap;
    sol.value = std::isfinite(cert.primal_value) ? 0.5 * (cert.dual_value + cert.primal_value) : cert.dual_value;
    sol.flow = Flow2D(rho0.width, rho0.height, cfg.scheme);
    for (size_t k = 0; k < sol.flow.values.size(); ++k) sol.flow.values[k] = st.psi.values[k] - st.phi.values[k];
    sol.rho0_prime = GridMeasure(rho0.width, rho0.height, cert.rho0_prime);
    sol.rho1_prime = GridMeasure(rho0.width, rho0.height, cert.rho1_prime);
    sol.state = std::move(st);
    return sol;
}

inline VectorField extract_flow(const Solution& sol) { return to_vector_field(sol.flow); }

// Total flow cost dx^2 * sum |psi - phi| in the scheme's column norms.
inline double flow_mass(const Solution& sol, double dx) {
    GradOperator g(sol.flow.width, sol.flow.height, dx, sol.flow.scheme);
    return dx * dx * g.column_norm_sum(sol.flow.values.data());
}

struct Decomposition {
    GridMeasure cartoon;          // rho
    std::vector<double> texture;  // rho0' - rho
    std::vector<double> noise;    // rho0 - rho0'
};

struct RegularizedResult {
    Solution solution;
    GridMeasure rho;
    Decomposition parts;
    double objective = 0.0;  // W(rho0, rho) estimate + tv_weight * TV(rho)
};

// min over rho >= 0 of W(rho0, rho) + tv_weight * TV(rho), with rho entering as
// the second measure of the model.
inline RegularizedResult solve_regularized(const UnbalancedModel& model, const GridMeasure& rho0, double tv_weight,
                                           const SolverConfig& cfg = {}) {
    if (!(tv_weight >= 0.0)) throw InputError("TV weight must be nonnegative");
    rho0.validate();
    const double dx = rho0.spacing;
    double knorm = 0.0;
    Steps steps = detail::choose_steps(cfg, rho0.width, rho0.height, dx, true,
                                       detail::typical_density(rho0.values, rho0.values), knorm);
    if (!(cfg.tv_step_ratio >= 0.0)) throw InputError("tv_step_ratio must be nonnegative");
    const double tv_ratio = cfg.tv_step_ratio > 0.0 ? cfg.tv_step_ratio : 0.01;
    steps.zeta *= tv_ratio;
    steps.rho /= tv_ratio;

    GridMeasure rho = rho0;
    std::vector<double> rho_bar = rho0.values;
    SaddleState st(rho0.width, rho0.height, cfg.scheme);
    detail::Stepper step(model, rho0, rho, cfg, steps);
    GradOperator& g = step.g;
    const auto& L = g.layout();
    const int C = L.columns, D = L.column_dim;
    const size_t P = g.pixels(), F = g.flow_size();
    std::vector<double> zeta(F, 0.0), grad_r(F), div_z(P), prev = rho.values;
    const auto& h1 = model.triple.h1;
    Solution sol;
    int it = 0;
    for (; it < cfg.max_iter;) {
        step.dual_step(st, rho.values);
        g.gradient(rho_bar.data(), grad_r.data());
        for (size_t p = 0; p < P; ++p)
            for (int c = 0; c < C; ++c) {
                size_t base = p * C * D + c * D;
                double n2 = 0.0;
                for (int d = 0; d < D; ++d) {
                    zeta[base + d] += step.sp.zeta * grad_r[base + d];
                    n2 += zeta[base + d] * zeta[base + d];
                }
                double n = std::sqrt(n2);
                if (n > tv_weight)
                    for (int d = 0; d < D; ++d) zeta[base + d] *= tv_weight / n;
            }
        step.primal_step(st);
        g.divergence(zeta.data(), div_z.data());
        for (size_t p = 0; p < P; ++p) {
            double hb = h1(st.beta[p]);
            if (!(hb > -kInf)) hb = -1e6 * (1.0 + std::abs(st.beta[p]));
            double nr = std::max(0.0, rho.values[p] - step.sp.rho * (-div_z[p] + hb));
            rho_bar[p] = nr + cfg.theta_relax * (nr - rho.values[p]);
            rho.values[p] = nr;
        }
        ++it;
        if (it % cfg.check_every == 0) {
            detail::check_finite(st, it);
            double diff = 0.0, nrm = 0.0;
            for (size_t p = 0; p < P; ++p) {
                diff += (rho.values[p] - prev[p]) * (rho.values[p] - prev[p]);
                nrm += rho.values[p] * rho.values[p];
            }
            prev = rho.values;
            if (std::sqrt(diff) <= cfg.stop_tol * std::max(1e-12, std::sqrt(nrm)) &&
                step.split_residual(st) < cfg.stop_tol) {
                sol.status = SolveStatus::Converged;
                break;
            }
        }
    }
    Certificate cert = duality_gap(model, rho0, rho, st, cfg.scheme, cfg.prox);
    sol.iterations = it;
    sol.dual_value = cert.dual_value;
    sol.primal_value = cert.primal_value;
    sol.gap = cert.gap;
    sol.value = std::isfinite(cert.primal_value) ? 0.5 * (cert.dual_value + cert.primal_value) : cert.dual_value;
    sol.flow = Flow2D(rho0.width, rho0.height, cfg.scheme);
    for (size_t k = 0; k < F; ++k) sol.flow.values[k] = st.psi.values[k] - st.phi.values[k];
    sol.rho0_prime = GridMeasure(rho0.width, rho0.height, cert.rho0_prime);
    sol.rho1_prime = GridMeasure(rho0.width, rho0.height, cert.rho1_prime);
    sol.steps = step.sp;
    sol.op_norm = knorm;
    sol.state = std::move(st);

    RegularizedResult r{std::move(sol), rho, {rho, {}, {}}, 0.0};
    r.parts.texture.resize(P);
    r.parts.noise.resize(P);
    for (size_t p = 0; p < P; ++p) {
        double rp = r.solution.rho0_prime.values[p];
        r.parts.texture[p] = rp - rho.values[p];
        r.parts.noise[p] = rho0.values[p] - rp;
    }
    g.gradient(rho.values.data(), grad_r.data());
    r.objective = r.solution.value + tv_weight * dx * dx * g.column_norm_sum(grad_r.data());
    return r;
}

}  // namespace uw1
