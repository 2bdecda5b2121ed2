#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "uw1/errors.hpp"
#include "uw1/integrands.hpp"

namespace uw1 {

struct ProxConfig {
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
};

// Scales a column v by max(1 - tau/|v|, 0).
inline void shrink(double* v, int n, double tau) {
    double nrm2 = 0.0;
    for (int k = 0; k < n; ++k) nrm2 += v[k] * v[k];
    if (nrm2 == 0.0 || tau == 0.0) return;
    double nrm = std::sqrt(nrm2);
    double f = nrm > tau ? 1.0 - tau / nrm : 0.0;
    for (int k = 0; k < n; ++k) v[k] *= f;
}

inline std::vector<double> shrink(std::vector<double> v, double tau) {
    shrink(v.data(), static_cast<int>(v.size()), tau);
    return v;
}

namespace detail {

[[noreturn]] inline void prox_failure(const char* what, double residual) {
    std::ostringstream os;
    os << what << " did not converge (residual " << residual << ")";
    throw NumericalError(os.str());
}

}  // namespace detail

// argmin_s 0.5*(s - sbar)^2 - sigma*h(s).
inline double prox_neg_h(const ConcaveFn& h, double sigma, double sbar, const ProxConfig& cfg = {}) {
    if (sigma == 0.0) return sbar;
    if (h.is_identity()) return sbar + sigma;
    if (h.is_tv()) return std::max(-h.tv_a(), std::min(sbar + sigma, std::max(h.tv_b(), sbar)));

    // Root of the monotone map s - sbar - sigma*h'(s), bracketed and safeguarded.
    double lo = sbar, hi;
    HEval e0 = h.eval(sbar);
    if (e0.finite() && std::isfinite(e0.d1_right)) {
        hi = sbar + sigma * e0.d1_right;
    } else {
        lo = std::max(sbar, h.dom_lo());
        HEval el = h.eval(lo);
        if (el.finite() && lo - sbar - sigma * el.d1_right >= 0.0) return lo;
        hi = std::max(lo, 0.0) + 1.0;
        for (int k = 0;; ++k) {
            HEval eh = h.eval(hi);
            if (eh.finite() && hi - sbar - sigma * eh.d1_left >= 0.0) break;
            hi = lo + 2.0 * (hi - lo);
            if (k > 2000) detail::prox_failure("prox bracket", hi);
        }
    }
    if (hi <= lo) return lo;
    double s = e0.finite() ? sbar : 0.5 * (lo + hi);
    int newton = 0, total = 0;
    double width = hi - lo;
    while (true) {
        HEval e = h.eval(s);
        if (!e.finite()) {
            lo = s;
            s = 0.5 * (lo + hi);
        } else {
            double gl = s - sbar - sigma * e.d1_left;
            double gr = s - sbar - sigma * e.d1_right;
            if (gr < 0.0) lo = s;
            else if (gl > 0.0) hi = s;
            else return s;
            double next = s - gr / (1.0 - sigma * e.d2);
            bool slow = total % 2 == 1 && hi - lo > 0.5 * width;
            if (total % 2 == 1) width = hi - lo;
            bool ok = !slow && std::isfinite(next) && next > lo && next < hi;
            if (!ok) next = 0.5 * (lo + hi);
            else ++newton;
            if (std::abs(next - s) <= cfg.newton_tol * std::max(1.0, std::abs(s))) return next;
            s = next;
        }
        if (hi - lo <= cfg.newton_tol * std::max(1.0, std::abs(lo))) return 0.5 * (lo + hi);
        if (newton > cfg.newton_max_iter || ++total > 50 * cfg.newton_max_iter)
            detail::prox_failure("prox of -h", hi - lo);
    }
}

inline double prox_neg_h(const IntegrandSpec& spec, Side side, double sigma, double sbar, const ProxConfig& cfg = {}) {
    return prox_neg_h(ConcaveFn::of(spec, side), sigma, sbar, cfg);
}

using Point2 = std::array<double, 2>;

namespace detail {

struct HalfPlane {
    double nx, ny, c;  // nx*x + ny*y <= c
};

inline Point2 project_polygon(const std::vector<HalfPlane>& hs, Point2 p) {
    auto scale = 1.0 + std::abs(p[0]) + std::abs(p[1]);
    auto feasible = [&](const Point2& q) {
        for (const auto& h : hs)
            if (h.nx * q[0] + h.ny * q[1] > h.c + 1e-12 * (scale + std::abs(h.c))) return false;
        return true;
    };
    if (feasible(p)) return p;
    Point2 best{0.0, 0.0};
    double best_d = kInf;
    auto consider = [&](const Point2& q) {
        if (!feasible(q)) return;
        double d = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]);
        if (d < best_d) {
            best_d = d;
            best = q;
        }
    };
    for (const auto& h : hs) {
        double n2 = h.nx * h.nx + h.ny * h.ny;
        double t = (h.nx * p[0] + h.ny * p[1] - h.c) / n2;
        consider({p[0] - t * h.nx, p[1] - t * h.ny});
    }
    for (size_t i = 0; i < hs.size(); ++i)
        for (size_t j = i + 1; j < hs.size(); ++j) {
            double det = hs[i].nx * hs[j].ny - hs[i].ny * hs[j].nx;
            if (det == 0.0) continue;
            consider({(hs[i].c * hs[j].ny - hs[i].ny * hs[j].c) / det, (hs[i].nx * hs[j].c - hs[i].c * hs[j].nx) / det});
        }
    if (!std::isfinite(best_d)) throw NumericalError("projection onto an empty constraint polygon");
    return best;
}

// Nearest point to (xt, yt) in {y <= g(-x)}, where the boundary is also
// described by x = p(-y).  Assumes (xt, yt) lies outside.
inline Point2 project_hypograph(const ConcaveFn& g, const ConcaveFn& p, double xt, double yt, const ProxConfig& cfg) {
    auto q = [&](double x) { return g.eval(-x); };
    double xr = -g.dom_lo();
    double hi = std::min(xt, xr);
    if (xt > xr && g.dom_closed()) {
        double qr = q(xr).value;
        if (yt <= qr) return {xr, yt};
    }
    // One-sided derivatives of f(x) = 0.5(x-xt)^2 + 0.5(q(x)-yt)^2 where q(x) <= yt.
    auto fprime = [&](double x, double& lower, double& upper, double& curv) -> bool {
        HEval e = q(x);
        if (!e.finite()) return false;
        double r = e.value - yt;
        double qp_right = -e.d1_left, qp_left = -e.d1_right;
        if (std::isinf(qp_right) || std::isinf(qp_left)) {
            lower = upper = r < 0.0 ? kInf : x - xt;
        } else {
            double a = x - xt + r * qp_left, b = x - xt + r * qp_right;
            lower = std::min(a, b);
            upper = std::max(a, b);
        }
        curv = 1.0 + qp_right * qp_right + r * e.d2;
        return true;
    };
    double lo = p.eval(-yt).value;
    if (!(lo > -kInf) || lo > hi) {
        double step = 1.0 + std::abs(yt);
        lo = hi - step;
        for (int k = 0;; ++k) {
            double l, u, c;
            if (fprime(lo, l, u, c) && u <= 0.0) break;
            step *= 2.0;
            lo = hi - step;
            if (k > 2000) prox_failure("projection bracket", step);
        }
    }
    {
        double l, u, c;
        if (fprime(hi, l, u, c) && u <= 0.0) return {hi, q(hi).value};
    }
    double x = std::clamp(std::min(0.0, xt), lo, hi);
    int newton = 0, total = 0;
    double width = hi - lo;
    while (true) {
        double l, u, c;
        if (!fprime(x, l, u, c)) {
            hi = x;
            x = 0.5 * (lo + hi);
        } else {
            if (u < 0.0) lo = x;
            else if (l > 0.0) hi = x;
            else return {x, q(x).value};
            double next = x - u / c;
            // Newton creeps along steep boundaries: bisect unless the bracket halves every other step.
            bool slow = total % 2 == 1 && hi - lo > 0.5 * width;
            if (total % 2 == 1) width = hi - lo;
            bool ok = !slow && std::isfinite(next) && next > lo && next < hi;
            if (!ok) next = 0.5 * (lo + hi);
            else ++newton;
            if (std::abs(next - x) <= cfg.newton_tol * std::max(1.0, std::abs(x))) {
                x = next;
                break;
            }
            x = next;
        }
        if (hi - lo <= cfg.newton_tol * std::max(1.0, std::abs(lo))) {
            x = 0.5 * (lo + hi);
            break;
        }
        if (newton > cfg.newton_max_iter || ++total > 50 * cfg.newton_max_iter) {
            prox_failure("curve projection", hi - lo);
        }
    }
    HEval e = q(x);
    if (!e.finite()) {
        x = lo;
        e = q(x);
    }
    return {x, e.value};
}

}  // namespace detail

inline bool in_B01(const AdmissibleTriple& t, double a, double b) { return b <= t.h10(-a); }

// Euclidean projection onto B01, or onto B = B01 n ([alpha_min, inf) x [beta_min, inf)) when with_box.
inline Point2 project_B(const AdmissibleTriple& t, Point2 pt, const ProxConfig& cfg = {}, bool with_box = true) {
    double at = pt[0], bt = pt[1];
    bool polyhedral = (t.h01.is_identity() || t.h01.is_tv()) && (t.h10.is_identity() || t.h10.is_tv());
    if (polyhedral) {
        std::vector<detail::HalfPlane> hs{{1.0, 1.0, 0.0}};
        if (t.h01.is_tv()) {
            if (std::isfinite(t.h01.tv_b())) hs.push_back({1.0, 0.0, t.h01.tv_b()});
            if (std::isfinite(t.h01.tv_a())) hs.push_back({0.0, 1.0, t.h01.tv_a()});
        }
        if (with_box) {
            if (t.alpha_min > -kInf) hs.push_back({-1.0, 0.0, -t.alpha_min});
            if (t.beta_min > -kInf) hs.push_back({0.0, -1.0, -t.beta_min});
        }
        return detail::project_polygon(hs, pt);
    }
    Point2 r = pt;
    if (!in_B01(t, at, bt)) {
        if (bt >= at) {
            Point2 s = detail::project_hypograph(t.h01, t.h10, bt, at, cfg);
            r = {s[1], s[0]};
        } else {
            r = detail::project_hypograph(t.h10, t.h01, at, bt, cfg);
        }
    }
    if (!with_box || (r[0] >= t.alpha_min && r[1] >= t.beta_min)) return r;
    // The box is active: the answer lies on one of the two box edges.
    Point2 best = r;
    double best_d = kInf;
    auto consider = [&](double a, double b) {
        if (!(a >= t.alpha_min && b >= t.beta_min && std::isfinite(a) && std::isfinite(b))) return;
        if (!(b <= t.h10(-a) + 1e-12 * (1.0 + std::abs(b)))) return;
        double d = (a - at) * (a - at) + (b - bt) * (b - bt);
        if (d < best_d) {
            best_d = d;
            best = {a, b};
        }
    };
    if (t.alpha_min > -kInf) {
        double top = t.h10(-t.alpha_min);
        if (top >= t.beta_min) consider(t.alpha_min, std::clamp(bt, t.beta_min, top));
    }
    if (t.beta_min > -kInf) {
        double right = t.h01(-t.beta_min);
        if (right >= t.alpha_min) consider(std::clamp(at, t.alpha_min, right), t.beta_min);
    }
    if (!std::isfinite(best_d)) throw NumericalError("constraint set B is empty");
    return best;
}

}  // namespace uw1
