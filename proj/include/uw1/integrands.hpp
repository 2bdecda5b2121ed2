#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "uw1/errors.hpp"

namespace uw1 {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Kind { Discrete, TV, Hellinger, JensenShannon, ChiSquared, Entropy };

// Local discrepancy integrand kind with its shape parameters.
// TV: cost a per unit of mass increase (m1 > m0), b per unit of decrease.
// Entropy: the power family with parameter p (p = 0 and p = 1 are the log cases).
struct IntegrandKind {
    Kind tag = Kind::Discrete;
    double a = kInf;
    double b = kInf;
    double p = 1.0;

    static IntegrandKind discrete() { return {Kind::Discrete}; }
    static IntegrandKind tv(double a, double b) { return {Kind::TV, a, b}; }
    static IntegrandKind hellinger() { return {Kind::Hellinger}; }
    static IntegrandKind jensen_shannon() { return {Kind::JensenShannon}; }
    static IntegrandKind chi_squared() { return {Kind::ChiSquared}; }
    static IntegrandKind entropy(double p) { return {Kind::Entropy, kInf, kInf, p}; }
};

struct IntegrandSpec {
    IntegrandKind kind;
    double weight = 1.0;
};

inline IntegrandSpec make_spec(IntegrandKind k, double w = 1.0) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InputError("integrand weight must be finite and positive");
    if (k.tag == Kind::TV && !(k.a > 0.0 && k.b > 0.0)) throw InputError("TV weights must be positive");
    if (k.tag == Kind::Entropy && !std::isfinite(k.p)) throw InputError("entropy parameter must be finite");
    return {k, w};
}

enum class Side { First, Second };

// The conjugate of c(., 1) equals the conjugate of c(1, .) of the reflected kind.
inline IntegrandSpec reflected(const IntegrandSpec& s) {
    IntegrandSpec r = s;
    if (s.kind.tag == Kind::TV) std::swap(r.kind.a, r.kind.b);
    if (s.kind.tag == Kind::Entropy) r.kind.p = 1.0 - s.kind.p;
    return r;
}

inline IntegrandSpec for_side(const IntegrandSpec& s, Side side) { return side == Side::First ? s : reflected(s); }

// ---------------------------------------------------------------------------
// Integrand c
// ---------------------------------------------------------------------------

namespace detail {

inline double js_term(double m, double total) { return m > 0.0 ? m * std::log2(2.0 * m / total) : 0.0; }

inline double base_c(const IntegrandKind& k, double m0, double m1) {
    switch (k.tag) {
        case Kind::Discrete:
            return m0 == m1 ? 0.0 : kInf;
        case Kind::TV:
            if (m0 == m1) return 0.0;
            return m1 > m0 ? k.a * (m1 - m0) : k.b * (m0 - m1);
        case Kind::Hellinger: {
            double d = std::sqrt(m1) - std::sqrt(m0);
            return d * d;
        }
        case Kind::JensenShannon: {
            double t = m0 + m1;
            if (t == 0.0) return 0.0;
            return std::max(0.0, js_term(m0, t) + js_term(m1, t));
        }
        case Kind::ChiSquared: {
            double t = m0 + m1;
            return t == 0.0 ? 0.0 : (m1 - m0) * (m1 - m0) / t;
        }
        case Kind::Entropy: {
            double p = k.p;
            if (m0 == m1) return 0.0;
            if (p == 1.0) {
                if (m0 == 0.0) return kInf;
                if (m1 == 0.0) return m0;
                return std::max(0.0, m1 * std::log(m1 / m0) - m1 + m0);
            }
            if (p == 0.0) {
                if (m1 == 0.0) return kInf;
                if (m0 == 0.0) return m1;
                return std::max(0.0, m1 - m0 - m0 * std::log(m1 / m0));
            }
            if (m0 == 0.0) return p < 1.0 ? m1 / (1.0 - p) : kInf;
            double r = m1 / m0;
            if (r == 0.0) return p > 0.0 ? m0 / p : kInf;
            return std::max(0.0, m0 / (p * (p - 1.0)) * (std::pow(r, p) - p * (r - 1.0) - 1.0));
        }
    }
    return kInf;
}

}  // namespace detail

inline double eval_c(const IntegrandSpec& spec, double m0, double m1) {
    if (!(m0 >= 0.0) || !(m1 >= 0.0)) return kInf;
    double v = detail::base_c(spec.kind, m0, m1);
    if (spec.kind.tag == Kind::Discrete || v == 0.0 || std::isinf(v)) return v;
    return spec.weight * v;
}

// ---------------------------------------------------------------------------
// Concave conjugate transforms h
// ---------------------------------------------------------------------------

// Value and derivatives of a concave h at one point.  Outside the domain the
// value is -inf.  d1_left/d1_right are the one-sided derivatives (they differ
// at kinks; at a closed domain boundary the left derivative is +inf).
struct HEval {
    double value = 0.0;
    double d1_left = 1.0;
    double d1_right = 1.0;
    double d2 = 0.0;

    bool finite() const { return value > -kInf; }
    double d1() const { return d1_right; }
};

namespace detail {

inline HEval out_of_domain() { return {-kInf, kInf, kInf, 0.0}; }

// First-argument transform of the unit-weight kind.
inline HEval base_h(const IntegrandKind& k, double s) {
    switch (k.tag) {
        case Kind::Discrete:
            return {s, 1.0, 1.0, 0.0};
        case Kind::TV: {
            if (s < -k.a) return out_of_domain();
            HEval e;
            e.value = std::min(s, k.b);
            e.d1_left = s <= k.b ? 1.0 : 0.0;
            e.d1_right = s < k.b ? 1.0 : 0.0;
            if (s == -k.a) e.d1_left = kInf;
            e.d2 = 0.0;
            return e;
        }
        case Kind::Hellinger: {
            if (s <= -1.0) return out_of_domain();
            double q = 1.0 + s;
            double d = 1.0 / (q * q);
            return {s / q, d, d, -2.0 / (q * q * q)};
        }
        case Kind::JensenShannon: {
            if (s <= -1.0) return out_of_domain();
            double u = std::exp2(-s);
            double den = 2.0 - u;
            double d = u / den;
            return {std::log2(den), d, d, -2.0 * u * std::log(2.0) / (den * den)};
        }
        case Kind::ChiSquared: {
            if (s < -1.0) return out_of_domain();
            if (s > 3.0) return {1.0, 0.0, 0.0, 0.0};
            double r = std::sqrt(1.0 + s);
            if (r == 0.0) return {-3.0, kInf, kInf, -kInf};
            double d = 2.0 / r - 1.0;
            return {4.0 * r - 4.0 - s, d, d, -1.0 / (r * r * r)};
        }
        case Kind::Entropy: {
            double p = k.p;
            if (p == 1.0) {
                double e = std::exp(-s);
                if (std::isinf(e)) return out_of_domain();
                return {1.0 - e, e, e, -e};
            }
            if (p == 0.0) {
                if (s <= -1.0) return out_of_domain();
                double q = 1.0 + s;
                return {std::log1p(s), 1.0 / q, 1.0 / q, -1.0 / (q * q)};
            }
            double q = 1.0 + (1.0 - p) * s;
            double ex = p / (p - 1.0);
            if (p > 1.0 && q <= 0.0) return {1.0 / p, 0.0, 0.0, 0.0};
            if (q < 0.0 || (q == 0.0 && p > 0.0)) return out_of_domain();
            if (q == 0.0) return {1.0 / p, kInf, kInf, -kInf};
            double d = std::pow(q, ex - 1.0);
            return {(1.0 - std::pow(q, ex)) / p, d, d, -std::pow(q, ex - 2.0)};
        }
    }
    return out_of_domain();
}

inline double base_dom_lo(const IntegrandKind& k) {
    switch (k.tag) {
        case Kind::Discrete:
            return -kInf;
        case Kind::TV:
            return -k.a;
        case Kind::Hellinger:
        case Kind::JensenShannon:
        case Kind::ChiSquared:
            return -1.0;
        case Kind::Entropy:
            return k.p >= 1.0 ? -kInf : -1.0 / (1.0 - k.p);
    }
    return -kInf;
}

inline double base_sup(const IntegrandKind& k) {
    switch (k.tag) {
        case Kind::Discrete:
            return kInf;
        case Kind::TV:
            return k.b;
        case Kind::Hellinger:
        case Kind::JensenShannon:
        case Kind::ChiSquared:
            return 1.0;
        case Kind::Entropy:
            return k.p <= 0.0 ? kInf : 1.0 / k.p;
    }
    return kInf;
}

inline bool is_tv_like(const IntegrandSpec& s) { return s.kind.tag == Kind::TV || s.kind.tag == Kind::Discrete; }

}  // namespace detail

// A concave transform h = f_1 o f_2 o ... o f_k built from first-argument
// conjugates of catalog integrands (empty chain = identity).  Composition
// corresponds to infimal convolution of the underlying discrepancies.
class ConcaveFn {
public:
    ConcaveFn() = default;
    explicit ConcaveFn(std::vector<IntegrandSpec> atoms) : atoms_(canonical(std::move(atoms))) {
        dom_lo_ = compute_dom_lo();
    }
    static ConcaveFn of(const IntegrandSpec& s, Side side) { return ConcaveFn({for_side(s, side)}); }
    static ConcaveFn identity() { return ConcaveFn(); }

    const std::vector<IntegrandSpec>& atoms() const { return atoms_; }
    bool is_identity() const { return atoms_.empty(); }
    // True when h(s) = min(s, b) on s >= -a, i.e. the transform of a TV integrand.
    bool is_tv() const { return atoms_.size() == 1 && atoms_[0].kind.tag == Kind::TV; }
    double tv_a() const { return is_tv() ? atoms_[0].weight * atoms_[0].kind.a : kInf; }
    double tv_b() const { return is_tv() ? atoms_[0].weight * atoms_[0].kind.b : kInf; }

    HEval eval(double s) const {
        HEval acc{s, 1.0, 1.0, 0.0};
        for (auto it = atoms_.rbegin(); it != atoms_.rend(); ++it) {
            if (!acc.finite()) return detail::out_of_domain();
            HEval f = atom_eval(*it, acc.value);
            if (!f.finite()) return detail::out_of_domain();
            HEval r;
            r.value = f.value;
            r.d1_left = mul(f.d1_left, acc.d1_left);
            r.d1_right = mul(f.d1_right, acc.d1_right);
            double g1 = acc.d1_right;
            r.d2 = mul(f.d2, g1 * g1) + mul(f.d1_right, acc.d2);
            acc = r;
        }
        return acc;
    }
    double operator()(double s) const { return eval(s).value; }

    // Lower end of the domain (possibly -inf) and whether h is finite there.
    double dom_lo() const { return dom_lo_; }
    bool dom_closed() const {
        double lo = dom_lo();
        return lo > -kInf && (*this)(lo) > -kInf;
    }

    // lim_{s -> inf} h(s).
    double sup() const {
        double v = kInf;
        for (auto it = atoms_.rbegin(); it != atoms_.rend(); ++it) {
            double s = atom_sup(*it);
            v = std::isinf(v) ? s : atom_eval(*it, v).value;
        }
        return v;
    }
    // lim_{s -> inf} h'(s); 1 for identity-like tails, 0 otherwise.
    double slope_inf() const {
        double sl = 1.0;
        for (const auto& a : atoms_) sl *= atom_slope_inf(a);
        return sl;
    }

    std::string describe() const;

private:
    double compute_dom_lo() const {
        if (atoms_.empty()) return -kInf;
        if (atoms_.size() == 1) return atom_dom_lo(atoms_[0]);
        if ((*this)(-1e15) > -kInf) return -kInf;
        double lo = -1e15, hi = 0.0;
        for (int k = 0; k < 2000 && hi - lo > 0.0; ++k) {
            double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            ((*this)(mid) > -kInf ? hi : lo) = mid;
        }
        return (*this)(lo) > -kInf ? lo : hi;
    }

    static double mul(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }

    static HEval atom_eval(const IntegrandSpec& s, double x) {
        double w = s.weight;
        HEval e = detail::base_h(s.kind, x / w);
        if (!e.finite()) return e;
        e.value *= w;
        e.d2 /= w;
        return e;
    }
    static double atom_dom_lo(const IntegrandSpec& s) { return s.weight * detail::base_dom_lo(s.kind); }
    static double atom_sup(const IntegrandSpec& s) { return s.weight * detail::base_sup(s.kind); }
    static double atom_slope_inf(const IntegrandSpec& s) {
        if (s.kind.tag == Kind::Discrete) return 1.0;
        if (s.kind.tag == Kind::TV) return std::isinf(s.kind.b) ? 1.0 : 0.0;
        return 0.0;
    }

    // Drops identities and merges adjacent TV atoms (TV o TV is TV with the smaller weights).
    static std::vector<IntegrandSpec> canonical(std::vector<IntegrandSpec> in) {
        std::vector<IntegrandSpec> out;
        for (auto s : in) {
            if (s.kind.tag == Kind::Discrete) continue;
            if (s.kind.tag == Kind::TV) {
                s.kind.a *= s.weight;
                s.kind.b *= s.weight;
                s.weight = 1.0;
                if (std::isinf(s.kind.a) && std::isinf(s.kind.b)) continue;
                if (!out.empty() && out.back().kind.tag == Kind::TV) {
                    out.back().kind.a = std::min(out.back().kind.a, s.kind.a);
                    out.back().kind.b = std::min(out.back().kind.b, s.kind.b);
                    continue;
                }
            }
            out.push_back(s);
        }
        return out;
    }

    std::vector<IntegrandSpec> atoms_;
    double dom_lo_ = -kInf;
};

inline ConcaveFn compose_h(const ConcaveFn& outer, const ConcaveFn& inner) {
    std::vector<IntegrandSpec> a = outer.atoms();
    a.insert(a.end(), inner.atoms().begin(), inner.atoms().end());
    return ConcaveFn(std::move(a));
}

inline HEval eval_h(const IntegrandSpec& spec, Side side, double s) { return ConcaveFn::of(spec, side).eval(s); }

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

inline std::string fmt_num(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

inline std::string to_string(const IntegrandSpec& s) {
    std::string w = s.weight == 1.0 ? "" : "w=" + fmt_num(s.weight);
    auto with = [&](std::string head, std::string params) {
        if (!w.empty()) params += (params.empty() ? "" : ",") + w;
        return params.empty() ? head : head + ":" + params;
    };
    switch (s.kind.tag) {
        case Kind::Discrete:
            return "discrete";
        case Kind::TV:
            return with("tv", "a=" + fmt_num(s.kind.a) + ",b=" + fmt_num(s.kind.b));
        case Kind::Hellinger:
            return with("hellinger", "");
        case Kind::JensenShannon:
            return with("js", "");
        case Kind::ChiSquared:
            return with("chi2", "");
        case Kind::Entropy:
            return with("entropy", "p=" + fmt_num(s.kind.p));
    }
    return "?";
}

inline std::string ConcaveFn::describe() const {
    if (atoms_.empty()) return "id";
    std::string r;
    for (const auto& a : atoms_) r += (r.empty() ? "" : " o ") + to_string(a);
    return r;
}

// Parses "kind[:key=value,...]", e.g. "tv:a=2,b=2", "hellinger:w=20", "entropy:p=1,w=1".
inline IntegrandSpec parse_spec(const std::string& text) {
    std::string head = text, params;
    if (auto c = text.find(':'); c != std::string::npos) {
        head = text.substr(0, c);
        params = text.substr(c + 1);
    }
    std::transform(head.begin(), head.end(), head.begin(), [](unsigned char ch) { return std::tolower(ch); });
    IntegrandKind k;
    if (head == "discrete" || head == "d") k = IntegrandKind::discrete();
    else if (head == "tv") k = IntegrandKind::tv(1.0, 1.0);
    else if (head == "hellinger" || head == "h") k = IntegrandKind::hellinger();
    else if (head == "js" || head == "jensenshannon") k = IntegrandKind::jensen_shannon();
    else if (head == "chi2" || head == "chisquared") k = IntegrandKind::chi_squared();
    else if (head == "entropy" || head == "e") k = IntegrandKind::entropy(1.0);
    else throw InputError("unknown integrand kind '" + head + "'");
    double w = 1.0;
    std::stringstream ss(params);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        if (kv.empty()) continue;
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("expected key=value in '" + kv + "'");
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        double x;
        if (val == "inf") x = kInf;
        else {
            try {
                size_t pos = 0;
                x = std::stod(val, &pos);
                if (pos != val.size()) throw std::invalid_argument(val);
            } catch (const std::logic_error&) {
                throw InputError("bad number '" + val + "' in '" + text + "'");
            }
        }
        if (key == "w") w = x;
        else if (key == "a" && k.tag == Kind::TV) k.a = x;
        else if (key == "b" && k.tag == Kind::TV) k.b = x;
        else if (key == "p" && k.tag == Kind::Entropy) k.p = x;
        else throw InputError("parameter '" + key + "' not valid for '" + head + "'");
    }
    return make_spec(k, w);
}

// ---------------------------------------------------------------------------
// Integrand induced by a transform
// ---------------------------------------------------------------------------

// c(m0, m1) = sup_s m0*h(s) - m1*s for m0 > 0, and m1 * (-dom_lo h) for m0 = 0.
inline double induced_c(const ConcaveFn& h, double m0, double m1) {
    if (!(m0 >= 0.0) || !(m1 >= 0.0)) return kInf;
    if (m0 == 0.0) {
        if (m1 == 0.0) return 0.0;
        double lo = h.dom_lo();
        return std::isinf(lo) ? kInf : -lo * m1;
    }
    double r = m1 / m0;
    double slope = h.slope_inf();
    if (r < slope) return kInf;
    auto g = [&](double s) { return m0 * h(s) - m1 * s; };
    double lo = h.dom_lo();
    double hi;
    if (r == slope) {
        // The supremum is the limit at +inf.
        if (slope == 0.0) return m0 * h.sup();
        return 0.0;
    }
    // Bracket the stationary point h'(s) = r.
    hi = std::max(1.0, std::isinf(lo) ? 1.0 : lo + 1.0);
    while (h.eval(hi).d1_right >= r) {
        hi = hi * 2.0 + 1.0;
        if (hi > 1e300) return kInf;
    }
    if (std::isinf(lo)) {
        lo = std::min(-1.0, hi - 1.0);
        while (h.eval(lo).d1_left <= r) {
            lo = lo * 2.0 - 1.0;
            if (lo < -1e300) return kInf;
        }
    } else {
        HEval e = h.eval(lo);
        if (e.finite() && e.d1_right <= r) return g(lo);
        if (!e.finite()) {
            // Open boundary: h' blows up there, so the stationary point is interior.
            double step = std::max(1e-300, std::abs(lo) * 1e-16);
            double x = lo + step;
            while (!h.eval(x).finite()) {
                step *= 2.0;
                x = lo + step;
            }
            lo = x;
            if (h.eval(lo).d1_right <= r) return g(lo);
        }
    }
    for (int k = 0; k < 400; ++k) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        HEval e = h.eval(mid);
        if (e.d1_right > r) lo = mid;
        else if (e.d1_left < r) hi = mid;
        else {
            lo = hi = mid;
            break;
        }
    }
    return std::max(0.0, std::max(g(lo), g(hi)));
}

// ---------------------------------------------------------------------------
// Admissibility
// ---------------------------------------------------------------------------

struct AdmissibilityReport {
    bool ok = true;
    std::vector<std::string> violations;
};

// Sampled check of h(0) = 0, h(s) <= s, monotonicity, midpoint concavity and h'(0) = 1.
inline AdmissibilityReport check_admissible(const std::function<double(double)>& h, double tol = 1e-6) {
    AdmissibilityReport rep;
    auto fail = [&](const std::string& m) {
        rep.ok = false;
        if (rep.violations.size() < 20) rep.violations.push_back(m);
    };
    double h0 = h(0.0);
    if (!(std::abs(h0) <= tol)) fail("h(0) = " + fmt_num(h0) + " != 0");
    double e = 1e-5;
    double hp = h(e), hm = h(-e);
    if (!(hp > -kInf && hm > -kInf)) fail("h is not finite around 0");
    else {
        double d = (hp - hm) / (2.0 * e);
        if (!(std::abs(d - 1.0) <= tol)) fail("h'(0) = " + fmt_num(d) + " != 1");
    }
    std::vector<double> xs;
    for (double ex = -6.0; ex <= 3.0 + 1e-9; ex += 0.05) {
        double v = std::pow(10.0, ex);
        xs.push_back(v);
        xs.push_back(-v);
    }
    xs.push_back(0.0);
    std::sort(xs.begin(), xs.end());
    double prev_s = 0.0, prev_v = -kInf;
    bool have_prev = false;
    for (double s : xs) {
        double v = h(s);
        if (std::isnan(v)) {
            fail("h(" + fmt_num(s) + ") is NaN");
            continue;
        }
        if (v == -kInf) {
            if (have_prev) fail("domain of h is not an interval (gap at " + fmt_num(s) + ")");
            continue;
        }
        if (v > s + tol * (1.0 + std::abs(s))) fail("h(" + fmt_num(s) + ") = " + fmt_num(v) + " exceeds s");
        if (have_prev) {
            if (v < prev_v - tol * (1.0 + std::abs(prev_v))) fail("h decreases near " + fmt_num(s));
            double mv = h(0.5 * (s + prev_s));
            if (mv < 0.5 * (v + prev_v) - tol * (1.0 + std::abs(mv))) fail("h not concave near " + fmt_num(s));
        }
        prev_s = s;
        prev_v = v;
        have_prev = true;
    }
    return rep;
}

class InducedIntegrand {
public:
    explicit InducedIntegrand(ConcaveFn h) : h_(std::move(h)) {}
    double operator()(double m0, double m1) const { return induced_c(h_, m0, m1); }
    const ConcaveFn& transform() const { return h_; }

private:
    ConcaveFn h_;
};

inline InducedIntegrand induced_c_from_h(const ConcaveFn& h) {
    auto rep = check_admissible([&](double s) { return h(s); });
    if (!rep.ok) throw InputError("inadmissible transform: " + rep.violations.front());
    return InducedIntegrand(h);
}

// ---------------------------------------------------------------------------
// Discrepancy chains and models
// ---------------------------------------------------------------------------

// D = D_1 <> D_2 <> ... (infimal convolution, left to right from rho0 towards rho1).
// An empty chain is the discrete (equality) discrepancy.
struct Discrepancy {
    std::vector<IntegrandSpec> parts;

    Discrepancy() = default;
    Discrepancy(IntegrandSpec s) : parts{s} {}  // NOLINT: implicit by design
    explicit Discrepancy(std::vector<IntegrandSpec> p) : parts(std::move(p)) {}

    ConcaveFn first_side() const { return ConcaveFn(parts); }
    ConcaveFn second_side() const {
        std::vector<IntegrandSpec> r;
        for (auto it = parts.rbegin(); it != parts.rend(); ++it) r.push_back(reflected(*it));
        return ConcaveFn(std::move(r));
    }
    bool is_discrete() const { return first_side().is_identity(); }
    bool is_tv() const { return first_side().is_tv(); }
};

inline double eval_c(const Discrepancy& d, double m0, double m1) {
    if (!(m0 >= 0.0) || !(m1 >= 0.0)) return kInf;
    if (d.parts.size() == 1) return eval_c(d.parts[0], m0, m1);
    ConcaveFn h = d.first_side();
    if (h.is_identity()) return m0 == m1 ? 0.0 : kInf;
    if (h.is_tv()) return eval_c(h.atoms()[0], m0, m1);
    return induced_c(h, m0, m1);
}

inline std::string to_string(const Discrepancy& d) {
    if (d.parts.empty()) return "discrete";
    std::string r;
    for (const auto& p : d.parts) r += (r.empty() ? "" : "+") + to_string(p);
    return r;
}

// Transforms of a model: B01 = {alpha <= h01(-beta)} = {beta <= h10(-alpha)},
// intersected with the box [alpha_min, inf) x [beta_min, inf).
struct AdmissibleTriple {
    ConcaveFn h0, h1, h01, h10;
    double alpha_min = -kInf;
    double beta_min = -kInf;
};

struct UnbalancedModel {
    Discrepancy d0, d01, d1;
    AdmissibleTriple triple;
};

inline UnbalancedModel build_model(const Discrepancy& d0, const Discrepancy& d01, const Discrepancy& d1) {
    UnbalancedModel m{d0, d01, d1, {}};
    m.triple.h0 = d0.first_side();
    m.triple.h1 = d1.second_side();
    m.triple.h01 = d01.first_side();
    m.triple.h10 = d01.second_side();
    m.triple.alpha_min = m.triple.h0.dom_lo();
    m.triple.beta_min = m.triple.h1.dom_lo();
    return m;
}

inline UnbalancedModel build_model(const IntegrandSpec& d0, const IntegrandSpec& d01, const IntegrandSpec& d1) {
    return build_model(Discrepancy(d0), Discrepancy(d01), Discrepancy(d1));
}

inline std::string to_string(const UnbalancedModel& m) {
    return "d0=" + to_string(m.d0) + " d01=" + to_string(m.d01) + " d1=" + to_string(m.d1);
}

// Parses "d0=discrete d01=tv:a=2,b=2 d1=discrete" (separators: whitespace or ';').
// A slot may hold a chain "tv:a=1,b=1+hellinger" meaning the infimal convolution.
// Omitted slots default to discrete.
inline UnbalancedModel parse_model(const std::string& text) {
    Discrepancy slots[3];
    std::string norm = text;
    std::replace(norm.begin(), norm.end(), ';', ' ');
    std::stringstream ss(norm);
    std::string tok;
    while (ss >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw InputError("expected slot=integrand, got '" + tok + "'");
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        int idx = key == "d0" ? 0 : key == "d01" ? 1 : key == "d1" ? 2 : -1;
        if (idx < 0) throw InputError("unknown model slot '" + key + "'");
        std::vector<IntegrandSpec> parts;
        std::stringstream ps(val);
        std::string piece;
        while (std::getline(ps, piece, '+')) parts.push_back(parse_spec(piece));
        slots[idx] = Discrepancy(parts);
    }
    return build_model(slots[0], slots[1], slots[2]);
}

// Multiplies every integrand weight by f (e.g. converting pixel units to grid units).
inline UnbalancedModel scale_weights(const UnbalancedModel& m, double f) {
    auto sc = [&](Discrepancy d) {
        for (auto& p : d.parts) p.weight *= f;
        return d;
    };
    return build_model(sc(m.d0), sc(m.d01), sc(m.d1));
}

enum class ReductionRule { None, FoldMiddleIntoFirst, FoldMiddleIntoLast, CommuteLastIntoFirst, CommuteFirstIntoLast };

inline std::string to_string(ReductionRule r) {
    switch (r) {
        case ReductionRule::None: return "none";
        case ReductionRule::FoldMiddleIntoFirst: return "fold-middle-into-first";
        case ReductionRule::FoldMiddleIntoLast: return "fold-middle-into-last";
        case ReductionRule::CommuteLastIntoFirst: return "commute-last-into-first";
        case ReductionRule::CommuteFirstIntoLast: return "commute-first-into-last";
    }
    return "?";
}

struct ReductionResult {
    UnbalancedModel model;
    std::vector<ReductionRule> applied;
};

// A middle discrepancy whose transform is min(s, gamma) for s > 0 on the
// relevant side can be absorbed into the neighbouring end; afterwards a TV end
// commutes with the remaining transport and merges into the other end.
inline ReductionResult reduce_model(const UnbalancedModel& m) {
    ReductionResult r{m, {}};
    Discrepancy d0 = m.d0, d01 = m.d01, d1 = m.d1;
    auto join = [](const Discrepancy& a, const Discrepancy& b) {
        std::vector<IntegrandSpec> p = a.parts;
        p.insert(p.end(), b.parts.begin(), b.parts.end());
        return Discrepancy(p);
    };
    if (!d01.is_discrete()) {
        if (d01.second_side().is_tv()) {
            d0 = join(d0, d01);
            d01 = Discrepancy();
            r.applied.push_back(ReductionRule::FoldMiddleIntoFirst);
        } else if (d01.first_side().is_tv()) {
            d1 = join(d01, d1);
            d01 = Discrepancy();
            r.applied.push_back(ReductionRule::FoldMiddleIntoLast);
        }
    }
    if (d01.is_discrete()) {
        if (d1.is_tv()) {
            d0 = join(d0, d1);
            d1 = Discrepancy();
            r.applied.push_back(ReductionRule::CommuteLastIntoFirst);
        } else if (d0.is_tv() && !d1.is_discrete()) {
            d1 = join(d0, d1);
            d0 = Discrepancy();
            r.applied.push_back(ReductionRule::CommuteFirstIntoLast);
        }
    }
    if (!r.applied.empty()) r.model = build_model(d0, d01, d1);
    return r;
}

// ---------------------------------------------------------------------------
// Existence
// ---------------------------------------------------------------------------

enum class Existence { Exists, Diverges, NoMaximizer };

inline std::string to_string(Existence e) {
    switch (e) {
        case Existence::Exists: return "exists";
        case Existence::Diverges: return "diverges";
        case Existence::NoMaximizer: return "no-maximizer";
    }
    return "?";
}

// Scalar version of the problem: sup over (a, b) in B of mass0*h0(a) + mass1*h1(b).
// The supremum lies on the upper boundary a = h01(-b), where the objective is
// concave in b; it is scanned on log-spaced points in both directions.
inline Existence check_existence(const UnbalancedModel& m, double mass0, double mass1) {
    const auto& t = m.triple;
    auto f = [&](double b) {
        if (b < t.beta_min) return -kInf;
        double a = t.h01(-b);
        if (!(a > -kInf) || a < t.alpha_min) return -kInf;
        double v = 0.0;
        if (mass0 > 0.0) v += mass0 * t.h0(a);
        if (mass1 > 0.0) v += mass1 * t.h1(b);
        return std::isnan(v) ? -kInf : v;
    };
    const double far = 1e8;
    std::vector<double> pts{0.0};
    const int per_side = 128;
    for (int k = 0; k < per_side; ++k) {
        double v = std::pow(10.0, -6.0 + 14.0 * k / (per_side - 1));
        pts.push_back(v);
        pts.push_back(-v);
    }
    // Finite ends of the boundary arc are genuine points of B.
    std::vector<double> ends;
    if (t.beta_min > -kInf) ends.push_back(t.beta_min);
    double hi = -t.h01.dom_lo();
    if (t.alpha_min > -kInf) hi = std::min(hi, t.h10(-t.alpha_min));
    if (hi < kInf) ends.push_back(hi);
    pts.insert(pts.end(), ends.begin(), ends.end());

    double best = -kInf, best_attained = -kInf;
    for (double b : pts) {
        double v = f(b);
        best = std::max(best, v);
        if (std::abs(b) < far) best_attained = std::max(best_attained, v);
    }
    if (best == -kInf) return Existence::Exists;  // only (0, 0) is relevant; degenerate but finite
    double tol = 1e-12 * (1.0 + std::abs(best));
    if (best_attained >= best - tol) return Existence::Exists;
    // The maximum sits at a far end: decide between growth and an asymptote.
    for (double sgn : {1.0, -1.0}) {
        double v_far = f(sgn * far), v_near = f(sgn * far / 10.0);
        if (v_far < best - tol) continue;
        if (v_far - v_near > 1e-3 * (1.0 + std::abs(v_far))) return Existence::Diverges;
    }
    return Existence::NoMaximizer;
}

}  // namespace uw1
