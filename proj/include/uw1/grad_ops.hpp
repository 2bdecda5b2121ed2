#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "uw1/errors.hpp"

namespace uw1 {

enum class GradScheme { Forward, Mixed, Directional8 };

inline std::string to_string(GradScheme s) {
    switch (s) {
        case GradScheme::Forward: return "forward";
        case GradScheme::Mixed: return "mixed";
        case GradScheme::Directional8: return "directional8";
    }
    return "?";
}

inline GradScheme parse_scheme(const std::string& s) {
    if (s == "forward") return GradScheme::Forward;
    if (s == "mixed") return GradScheme::Mixed;
    if (s == "directional8" || s == "dir8") return GradScheme::Directional8;
    throw InputError("unknown gradient scheme '" + s + "'");
}

// One scalar entry of a gradient column: w * (f(i+di, j+dj) - f(i, j)) / dx,
// zero when the neighbour is outside the grid.  (ux, uy) is the unit direction
// the entry measures, used to turn a flow column back into a vector.
struct StencilEntry {
    int di, dj;
    double w;
    double ux, uy;
};

struct SchemeLayout {
    GradScheme scheme;
    int columns;     // columns per pixel
    int column_dim;  // entries per column
    std::vector<StencilEntry> entries;  // columns * column_dim, column-major

    int entries_per_pixel() const { return columns * column_dim; }
};

inline SchemeLayout layout_of(GradScheme s) {
    switch (s) {
        case GradScheme::Forward:
            return {s, 1, 2, {{1, 0, 1.0, 1.0, 0.0}, {0, 1, 1.0, 0.0, 1.0}}};
        case GradScheme::Mixed:
            return {s, 2, 2, {{1, 0, 1.0, 1.0, 0.0}, {0, 1, 1.0, 0.0, 1.0}, {1, 0, 1.0, 1.0, 0.0}, {0, -1, -1.0, 0.0, 1.0}}};
        case GradScheme::Directional8: {
            const int off[8][2] = {{1, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 1}, {-1, 2}, {-1, 1}, {-2, 1}};
            SchemeLayout l{s, 8, 1, {}};
            for (const auto& o : off) {
                double len = std::sqrt(double(o[0] * o[0] + o[1] * o[1]));
                l.entries.push_back({o[0], o[1], 1.0 / len, o[0] / len, o[1] / len});
            }
            return l;
        }
    }
    throw InputError("unknown scheme");
}

// Per-pixel stack of gradient-dual columns, laid out [pixel][entry].
struct Flow2D {
    int width = 0;
    int height = 0;
    GradScheme scheme = GradScheme::Forward;
    std::vector<double> values;

    Flow2D() = default;
    Flow2D(int w, int h, GradScheme s)
        : width(w), height(h), scheme(s), values(static_cast<size_t>(w) * h * layout_of(s).entries_per_pixel(), 0.0) {}
};

// Discrete gradient and its negative adjoint on a width x height grid with spacing dx.
class GradOperator {
public:
    GradOperator(int width, int height, double dx, GradScheme s)
        : w_(width), h_(height), dx_(dx), layout_(layout_of(s)) {
        if (width < 2 || height < 2) throw InputError("gradient needs a grid of at least 2x2");
    }

    int width() const { return w_; }
    int height() const { return h_; }
    double spacing() const { return dx_; }
    const SchemeLayout& layout() const { return layout_; }
    size_t pixels() const { return static_cast<size_t>(w_) * h_; }
    size_t flow_size() const { return pixels() * layout_.entries_per_pixel(); }

    void gradient(const double* f, double* out) const {
        const int E = layout_.entries_per_pixel();
        const double inv = 1.0 / dx_;
        for (int j = 0; j < h_; ++j)
            for (int i = 0; i < w_; ++i) {
                size_t p = static_cast<size_t>(j) * w_ + i;
                double* o = out + p * E;
                for (int e = 0; e < E; ++e) {
                    const auto& s = layout_.entries[e];
                    int ii = i + s.di, jj = j + s.dj;
                    o[e] = (ii < 0 || jj < 0 || ii >= w_ || jj >= h_)
                               ? 0.0
                               : s.w * inv * (f[static_cast<size_t>(jj) * w_ + ii] - f[p]);
                }
            }
    }

    // div = -grad^T, so that <grad f, g> = -<f, div g>.
    void divergence(const double* g, double* out) const {
        const int E = layout_.entries_per_pixel();
        const double inv = 1.0 / dx_;
        for (size_t p = 0; p < pixels(); ++p) out[p] = 0.0;
        for (int j = 0; j < h_; ++j)
            for (int i = 0; i < w_; ++i) {
                size_t p = static_cast<size_t>(j) * w_ + i;
                const double* gp = g + p * E;
                for (int e = 0; e < E; ++e) {
                    const auto& s = layout_.entries[e];
                    int ii = i + s.di, jj = j + s.dj;
                    if (ii < 0 || jj < 0 || ii >= w_ || jj >= h_) continue;
                    double v = s.w * inv * gp[e];
                    out[p] += v;
                    out[static_cast<size_t>(jj) * w_ + ii] -= v;
                }
            }
    }

    // Largest Euclidean column norm of a flow-shaped array.
    double max_column_norm(const double* g) const {
        const int C = layout_.columns, D = layout_.column_dim;
        double m = 0.0;
        for (size_t p = 0; p < pixels(); ++p)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int d = 0; d < D; ++d) {
                    double v = g[p * C * D + c * D + d];
                    s += v * v;
                }
                m = std::max(m, s);
            }
        return std::sqrt(m);
    }

    // Sum over pixels and columns of the column norms (the flow cost, without dx^2).
    double column_norm_sum(const double* g) const {
        const int C = layout_.columns, D = layout_.column_dim;
        double t = 0.0;
        for (size_t p = 0; p < pixels(); ++p)
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int d = 0; d < D; ++d) {
                    double v = g[p * C * D + c * D + d];
                    s += v * v;
                }
                t += std::sqrt(s);
            }
        return t;
    }

private:
    int w_, h_;
    double dx_;
    SchemeLayout layout_;
};

inline Flow2D gradient(GradScheme s, int width, int height, double dx, const std::vector<double>& field) {
    if (field.size() != static_cast<size_t>(width) * height) throw InputError("field size does not match grid");
    GradOperator op(width, height, dx, s);
    Flow2D f(width, height, s);
    op.gradient(field.data(), f.values.data());
    return f;
}

inline std::vector<double> divergence(const Flow2D& flow, double dx) {
    GradOperator op(flow.width, flow.height, dx, flow.scheme);
    if (flow.values.size() != op.flow_size()) throw InputError("flow shape does not match its scheme");
    std::vector<double> out(op.pixels());
    op.divergence(flow.values.data(), out.data());
    return out;
}

// Per-pixel (x, y) vector field from a flow: each entry contributes value * its unit direction.
struct VectorField {
    int width = 0, height = 0;
    std::vector<double> vx, vy;

    std::vector<double> magnitude() const {
        std::vector<double> m(vx.size());
        for (size_t k = 0; k < m.size(); ++k) m[k] = std::hypot(vx[k], vy[k]);
        return m;
    }
};

inline VectorField to_vector_field(const Flow2D& f) {
    auto L = layout_of(f.scheme);
    const int E = L.entries_per_pixel();
    VectorField v{f.width, f.height, {}, {}};
    size_t P = static_cast<size_t>(f.width) * f.height;
    v.vx.assign(P, 0.0);
    v.vy.assign(P, 0.0);
    for (size_t p = 0; p < P; ++p)
        for (int e = 0; e < E; ++e) {
            v.vx[p] += f.values[p * E + e] * L.entries[e].ux;
            v.vy[p] += f.values[p * E + e] * L.entries[e].uy;
        }
    return v;
}

struct OpNorm {
    double estimate = 0.0;  // power-iteration value
    double bound = 0.0;     // estimate inflated by 1% for step-size safety
    int iterations = 0;
};

// Largest singular value of a linear map by power iteration on K^T K.
inline OpNorm op_norm(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
                      const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply_t,
                      size_t n_in, size_t n_out, double rel_tol = 1e-4, int max_iter = 10000) {
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> nd;
    std::vector<double> v(n_in), kv(n_out), w(n_in);
    for (auto& x : v) x = nd(rng);
    auto normalize = [](std::vector<double>& x) {
        double s = 0.0;
        for (double y : x) s += y * y;
        s = std::sqrt(s);
        if (s > 0.0)
            for (double& y : x) y /= s;
        return s;
    };
    normalize(v);
    OpNorm r;
    double prev = -1.0;
    // A relative change well below rel_tol between sweeps keeps the estimate within rel_tol
    // even for clustered top singular values.
    for (int it = 1; it <= max_iter; ++it) {
        apply(v, kv);
        apply_t(kv, w);
        double lam = 0.0;
        for (size_t k = 0; k < n_in; ++k) lam += v[k] * w[k];
        double est = std::sqrt(std::max(0.0, lam));
        v = w;
        if (normalize(v) == 0.0) {
            r.estimate = 0.0;
            r.iterations = it;
            r.bound = 0.0;
            return r;
        }
        r.estimate = est;
        r.iterations = it;
        if (prev > 0.0 && std::abs(est - prev) <= 1e-3 * rel_tol * est) {
            r.bound = 1.01 * est;
            return r;
        }
        prev = est;
    }
    throw NumericalError("operator norm power iteration did not converge");
}

}  // namespace uw1
