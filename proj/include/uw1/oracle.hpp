#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uw1/errors.hpp"
#include "uw1/integrands.hpp"

namespace uw1 {

// Up to three support points with a symmetric distance matrix and two mass vectors.
struct TinyInstance {
    std::vector<std::vector<double>> dist;
    std::vector<double> masses0, masses1;
    UnbalancedModel model;

    size_t size() const { return masses0.size(); }

    void validate() const {
        const size_t n = size();
        if (n == 0 || n > 3) throw InputError("tiny instances hold 1 to 3 points");
        if (masses1.size() != n || dist.size() != n) throw InputError("inconsistent tiny instance sizes");
        for (size_t i = 0; i < n; ++i) {
            if (dist[i].size() != n || dist[i][i] != 0.0) throw InputError("bad distance matrix");
            if (!(masses0[i] >= 0.0) || !(masses1[i] >= 0.0)) throw InputError("masses must be nonnegative");
            for (size_t j = 0; j < n; ++j) {
                if (dist[i][j] != dist[j][i] || dist[i][j] < 0.0) throw InputError("distances must be symmetric");
                for (size_t k = 0; k < n; ++k)
                    if (dist[i][k] > dist[i][j] + dist[j][k] + 1e-12) throw InputError("triangle inequality fails");
            }
        }
    }
};

// Instance from points in the plane with Euclidean distances.
inline TinyInstance make_instance(const std::vector<std::array<double, 2>>& points, std::vector<double> m0,
                                  std::vector<double> m1, UnbalancedModel model) {
    TinyInstance t;
    const size_t n = points.size();
    t.dist.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            t.dist[i][j] = std::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
    t.masses0 = std::move(m0);
    t.masses1 = std::move(m1);
    t.model = std::move(model);
    t.validate();
    return t;
}

namespace detail {

inline double vsum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Exact W1 on at most three points of a metric space.  After keeping the common
// mass in place, either one point sends to the others or one point receives from
// the others, so the optimal plan is unique.
inline double w1_exact(const std::vector<std::vector<double>>& d, const std::vector<double>& a,
                       const std::vector<double>& b) {
    const size_t n = a.size();
    std::vector<double> ex(n);
    for (size_t i = 0; i < n; ++i) ex[i] = a[i] - b[i];
    double cost = 0.0;
    std::vector<size_t> src, snk;
    for (size_t i = 0; i < n; ++i) (ex[i] > 0.0 ? src : snk).push_back(i);
    if (src.size() == 1) {
        for (size_t j : snk) cost += -ex[j] * d[src[0]][j];
    } else {
        for (size_t i : src) cost += ex[i] * d[i][snk.empty() ? i : snk[0]];
    }
    return cost;
}

}  // namespace detail

inline double w1_balanced(const std::vector<std::vector<double>>& dist, const std::vector<double>& masses0,
                          const std::vector<double>& masses1) {
    const size_t n = masses0.size();
    if (n == 0 || n > 3 || masses1.size() != n || dist.size() != n) throw InputError("w1_balanced takes 1 to 3 points");
    double m0 = detail::vsum(masses0), m1 = detail::vsum(masses1);
    if (std::abs(m0 - m1) > 1e-12 * (1.0 + m0 + m1)) throw InputError("w1_balanced needs equal total masses");
    return detail::w1_exact(dist, masses0, masses1);
}

struct OracleValue {
    double value = kInf;
    double bound = 0.0;  // resolution error bound: value - bound <= true infimum <= value
    int evaluations = 0;
};

struct OracleConfig {
    int steps = 16;    // grid steps per dimension in each pass
    int passes = 3;    // refinement passes
    double shrink = 4; // window reduction per refinement
};

namespace detail {

// Intermediate measure x_k of the chain rho0 -> x1 -> x2 -> x3 -> x4 -> rho1.
struct Slot {
    enum Mode { Fixed, Free, Tied, Same } mode;
    std::vector<double> fixed;  // Fixed
    int tie = -1;               // Tied: mass equals that of slot `tie` (-1 = rho1's mass)
    int same = -1;              // Same: equal to slot `same`
};

class PrimalSearch {
public:
    PrimalSearch(const TinyInstance& inst) : inst_(inst), n_(inst.size()) {
        const auto& m = inst.model;
        bool e0 = m.d0.is_discrete(), e01 = m.d01.is_discrete(), e1 = m.d1.is_discrete();
        slots_.resize(4);
        // x1 = rho0' and x4 = rho1' are fixed by equality ends.
        if (e0) slots_[0] = {Slot::Fixed, inst.masses0};
        if (e1) slots_[3] = {Slot::Fixed, inst.masses1};
        if (e01) {
            slots_[2] = {Slot::Same, {}, -1, 1};
            if (e1 && !e0) slots_[0] = {Slot::Tied, {}, -1};
            else if (!e0) slots_[0] = {Slot::Free};
            slots_[1] = {Slot::Tied, {}, 0};
            if (!e1) slots_[3] = {Slot::Tied, {}, 1};
        } else {
            if (!e0) slots_[0] = {Slot::Free};
            slots_[1] = {Slot::Tied, {}, 0};
            if (e1) slots_[2] = {Slot::Tied, {}, -1};
            else {
                slots_[2] = {Slot::Free};
                slots_[3] = {Slot::Tied, {}, 2};
            }
        }
        for (const auto& s : slots_) dims_ += s.mode == Slot::Free ? n_ : (s.mode == Slot::Tied ? n_ - 1 : 0);
        hi_ = 2.0 * std::max(detail::vsum(inst.masses0), detail::vsum(inst.masses1));
        if (hi_ == 0.0) hi_ = 1.0;
    }

    size_t dims() const { return dims_; }
    double box_hi() const { return hi_; }

    // Objective for a parameter vector; +inf outside the feasible set.
    double eval(const std::vector<double>& z) const {
        std::array<std::vector<double>, 4> x;
        size_t k = 0;
        for (int s = 0; s < 4; ++s) {
            const auto& sl = slots_[s];
            switch (sl.mode) {
                case Slot::Fixed: x[s] = sl.fixed; break;
                case Slot::Same: x[s] = x[sl.same]; break;
                case Slot::Free: x[s].assign(z.begin() + k, z.begin() + k + n_); k += n_; break;
                case Slot::Tied: {
                    double total = sl.tie < 0 ? detail::vsum(inst_.masses1) : detail::vsum(x[sl.tie]);
                    x[s].assign(n_, 0.0);
                    double acc = 0.0;
                    for (size_t i = 0; i + 1 < n_; ++i) {
                        x[s][i] = z[k++];
                        acc += x[s][i];
                    }
                    x[s][n_ - 1] = total - acc;
                    if (x[s][n_ - 1] < -1e-14 * (1.0 + total)) return kInf;
                    x[s][n_ - 1] = std::max(0.0, x[s][n_ - 1]);
                    break;
                }
            }
        }
        for (const auto& v : x)
            for (double e : v)
                if (e < 0.0) return kInf;
        const auto& m = inst_.model;
        auto balanced_w1 = [&](const std::vector<double>& a, const std::vector<double>& b) {
            double ma = detail::vsum(a), mb = detail::vsum(b);
            if (std::abs(ma - mb) > 1e-12 * (1.0 + ma + mb)) return kInf;
            return detail::w1_exact(inst_.dist, a, b);
        };
        double f = 0.0;
        for (size_t i = 0; i < n_; ++i) {
            f += eval_c(m.d0, inst_.masses0[i], x[0][i]);
            f += eval_c(m.d01, x[1][i], x[2][i]);
            f += eval_c(m.d1, x[3][i], inst_.masses1[i]);
        }
        f += balanced_w1(x[0], x[1]) + balanced_w1(x[2], x[3]);
        return f;
    }

private:
    const TinyInstance& inst_;
    size_t n_;
    std::vector<Slot> slots_;
    size_t dims_ = 0;
    double hi_ = 1.0;
};

}  // namespace detail

// Primal reference: coarse-to-fine grid search over the intermediate measures.
// Coordinates live in [0, 2 * max total mass]: a larger intermediate costs more in
// the adjacent local discrepancy than it could save in transport.
inline OracleValue unbalanced_value(const TinyInstance& inst, const OracleConfig& cfg = {}) {
    inst.validate();
    if (cfg.steps < 2 || cfg.passes < 1 || cfg.shrink <= 1.0) throw InputError("bad oracle configuration");
    detail::PrimalSearch ps(inst);
    const size_t D = ps.dims();
    if (D > 8) throw InputError("oracle search dimension " + std::to_string(D) + " exceeds 8");
    OracleValue out;
    if (D == 0) {
        out.value = ps.eval({});
        out.evaluations = 1;
        return out;
    }
    const double hi = ps.box_hi();
    std::vector<double> center(D, 0.5 * hi), lo(D), best = center, z(D);
    double half = 0.5 * hi;
    double fbest = kInf;
    std::vector<int> idx(D);
    for (int pass = 0; pass < cfg.passes; ++pass) {
        const double h = 2.0 * half / cfg.steps;
        for (size_t d = 0; d < D; ++d) lo[d] = std::clamp(center[d] - half, 0.0, std::max(0.0, hi - 2.0 * half));
        std::fill(idx.begin(), idx.end(), 0);
        bool interior = true;
        std::vector<double> pass_best = best;
        double pass_f = fbest;
        while (true) {
            for (size_t d = 0; d < D; ++d) z[d] = lo[d] + idx[d] * h;
            double f = ps.eval(z);
            ++out.evaluations;
            if (f < pass_f) {
                pass_f = f;
                pass_best = z;
            }
            size_t d = 0;
            while (d < D && ++idx[d] > cfg.steps) idx[d++] = 0;
            if (d == D) break;
        }
        fbest = pass_f;
        best = pass_best;
        for (size_t d = 0; d < D; ++d) {
            bool at_lo = best[d] <= lo[d] + 0.5 * h && lo[d] > 0.0;
            bool at_hi = best[d] >= lo[d] + 2.0 * half - 0.5 * h && lo[d] + 2.0 * half < hi;
            if (at_lo || at_hi) interior = false;
        }
        center = best;
        if (interior) half /= cfg.shrink;
    }
    out.value = fbest;
    // Resolution bound from one-sided finite differences at the final spacing.
    const double h = 2.0 * half / cfg.steps;
    double bound = 0.0;
    if (std::isfinite(fbest)) {
        for (size_t d = 0; d < D; ++d) {
            double slope = 0.0;
            for (double s : {-1.0, 1.0}) {
                z = best;
                z[d] += s * h;
                if (z[d] < 0.0 || z[d] > hi) continue;
                double f = ps.eval(z);
                ++out.evaluations;
                if (std::isfinite(f)) slope = std::max(slope, std::abs(f - fbest) / h);
            }
            bound += slope * h;
        }
    }
    out.bound = bound;
    return out;
}

// Dual reference for at most two points: scan of (alpha1, alpha2) with
// |alpha1 - alpha2| <= d and the optimal beta for each alpha in closed form.
inline OracleValue dual_value_scan(const TinyInstance& inst, const OracleConfig& cfg = {}) {
    inst.validate();
    const size_t n = inst.size();
    if (n > 2) throw InputError("dual_value_scan takes at most two points");
    const auto& t = inst.model.triple;
    const double d = n == 2 ? inst.dist[0][1] : 0.0;
    auto term = [](double mass, double hv) { return mass == 0.0 ? 0.0 : mass * hv; };
    auto value = [&](double a1, double a2) {
        if (a1 < t.alpha_min || a2 < t.alpha_min) return -kInf;
        double u1 = t.h10(-a1), u2 = n == 2 ? t.h10(-a2) : kInf;
        double b1 = n == 2 ? std::min(u1, u2 + d) : u1;
        double b2 = n == 2 ? std::min(u2, u1 + d) : 0.0;
        if (!(b1 >= t.beta_min) || (n == 2 && !(b2 >= t.beta_min))) return -kInf;
        if (!std::isfinite(b1) || (n == 2 && !std::isfinite(b2))) return -kInf;
        double v = term(inst.masses0[0], t.h0(a1)) + term(inst.masses1[0], t.h1(b1));
        if (n == 2) v += term(inst.masses0[1], t.h0(a2)) + term(inst.masses1[1], t.h1(b2));
        return std::isnan(v) ? -kInf : v;
    };
    OracleValue out;
    const int S = std::max(cfg.steps, 2) * 4;
    double c1 = 0.0, c2 = 0.0, half = 8.0;
    double best = value(0.0, 0.0);
    const int passes = cfg.passes * 4;
    for (int pass = 0; pass < passes; ++pass) {
        const double h = 2.0 * half / S;
        double nb1 = c1, nb2 = c2, nbest = best;
        for (int i = 0; i <= S; ++i)
            for (int j = 0; j <= (n == 2 ? S : 0); ++j) {
                double a1 = c1 - half + i * h, a2 = n == 2 ? c2 - half + j * h : 0.0;
                if (n == 2 && std::abs(a1 - a2) > d) continue;
                double v = value(a1, a2);
                ++out.evaluations;
                if (v > nbest) {
                    nbest = v;
                    nb1 = a1;
                    nb2 = a2;
                }
            }
        bool edge = std::abs(nb1 - c1) > half - 1.5 * h || (n == 2 && std::abs(nb2 - c2) > half - 1.5 * h);
        best = nbest;
        c1 = nb1;
        c2 = nb2;
        if (!edge) half /= cfg.shrink;
    }
    out.value = best;
    return out;
}

}  // namespace uw1
