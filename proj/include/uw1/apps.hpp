#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "uw1/errors.hpp"
#include "uw1/grad_ops.hpp"
#include "uw1/grid_measure.hpp"
#include "uw1/integrands.hpp"
#include "uw1/pd_solver.hpp"

namespace uw1::apps {

// ---------------------------------------------------------------- generators

// `count` diracs of equal mass on a circle of radius_px around the grid centre,
// each rounded to the nearest pixel.
inline GridMeasure circle_of_diracs(int size, int count, double radius_px, double total_mass = 1.0) {
    if (count < 1 || !(radius_px > 0.0)) throw InputError("circle needs count >= 1 and a positive radius");
    GridMeasure m(size, size);
    const double c = 0.5 * size, dx2 = m.spacing * m.spacing;
    for (int k = 0; k < count; ++k) {
        double t = 2.0 * M_PI * k / count;
        int i = static_cast<int>(std::lround(c + radius_px * std::cos(t)));
        int j = static_cast<int>(std::lround(c + radius_px * std::sin(t)));
        if (i < 0 || j < 0 || i >= size || j >= size) throw InputError("circle leaves the grid");
        m.at(i, j) += total_mass / count / dx2;
    }
    return m;
}

inline GridMeasure center_dirac(int size, double mass = 1.0) {
    int c = static_cast<int>(std::lround(0.5 * size));
    return dirac(c, c, mass, size, size);
}

struct TwoDiskParams {
    int size = 64;
    double radius = 10.0;   // pixels
    double delta_r = 0.0;   // radius oscillation amplitude, pixels
    double t0 = 0.0;        // vertical position parameter of the left disk
    double t1 = 0.0;        // vertical position parameter of the right disk
    double travel = 0.5;    // vertical travel as a fraction of the grid
    double cycles = 1.0;    // radius oscillations over the travel
};

inline double left_radius(const TwoDiskParams& p) { return p.radius + p.delta_r * std::sin(2.0 * M_PI * p.cycles * p.t0); }
inline double right_radius(const TwoDiskParams& p) { return p.radius - p.delta_r * std::sin(2.0 * M_PI * p.cycles * p.t1); }
inline double disk_center_y(const TwoDiskParams& p, double t) { return p.size * (0.5 - 0.5 * p.travel + p.travel * t); }

// White disks (value 1) on black: left centre at x = size/4, right at 3*size/4.
inline GridMeasure two_disks(const TwoDiskParams& p) {
    if (p.t0 < 0.0 || p.t0 > 1.0 || p.t1 < 0.0 || p.t1 > 1.0) throw InputError("disk positions must lie in [0,1]");
    if (!(p.radius > p.delta_r) || p.delta_r < 0.0) throw InputError("need radius > delta_r >= 0");
    GridMeasure m(p.size, p.size);
    const double xl = 0.25 * p.size, xr = 0.75 * p.size;
    const double yl = disk_center_y(p, p.t0), yr = disk_center_y(p, p.t1);
    const double rl = left_radius(p), rr = right_radius(p);
    for (int j = 0; j < p.size; ++j)
        for (int i = 0; i < p.size; ++i) {
            double x = i + 0.5, y = j + 0.5;
            bool in = std::hypot(x - xl, y - yl) <= rl || std::hypot(x - xr, y - yr) <= rr;
            m.at(i, j) = in ? 1.0 : 0.0;
        }
    return m;
}

// Eight equidistant samples of [0, 1].
inline std::vector<double> sample_times(int count = 8) {
    std::vector<double> t(count);
    for (int k = 0; k < count; ++k) t[k] = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    return t;
}

// Oscillation card: 0.5 + 0.5 * A(y) * sin(phase(x)); amplitude rises from 0 at the
// top to 1 at the bottom and the local frequency rises from left to right.
inline GridMeasure stripes_card(int size = 64, double min_period_px = 2.5, double max_period_px = 16.0) {
    GridMeasure m(size, size);
    for (int j = 0; j < size; ++j) {
        double amp = static_cast<double>(j) / (size - 1);
        double phase = 0.0;
        for (int i = 0; i < size; ++i) {
            double s = static_cast<double>(i) / (size - 1);
            double period = max_period_px * std::pow(min_period_px / max_period_px, s);
            phase += 2.0 * M_PI / period;
            m.at(i, j) = 0.5 + 0.5 * amp * std::sin(phase);
        }
    }
    return m;
}

inline GridMeasure add_gaussian_noise(const GridMeasure& m, double sigma, uint64_t seed) {
    if (!(sigma >= 0.0)) throw InputError("noise level must be nonnegative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    GridMeasure r = m;
    for (double& v : r.values) v = std::max(0.0, v + nd(rng));
    return r;
}

struct SaltPepper {
    GridMeasure image;
    std::vector<size_t> salt, pepper;  // corrupted pixel indices
};

// Each pixel is corrupted with probability `prob`; a corrupted pixel becomes
// `magnitude` (salt) or 0 (pepper) with equal odds.
inline SaltPepper salt_and_pepper(const GridMeasure& m, double prob, double magnitude, uint64_t seed) {
    if (!(prob >= 0.0 && prob <= 1.0) || !(magnitude >= 0.0)) throw InputError("bad salt-and-pepper parameters");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SaltPepper sp{m, {}, {}};
    for (size_t k = 0; k < m.size(); ++k) {
        double a = u(rng), b = u(rng);
        if (a >= prob) continue;
        if (b < 0.5) {
            sp.image.values[k] = magnitude;
            sp.salt.push_back(k);
        } else {
            sp.image.values[k] = 0.0;
            sp.pepper.push_back(k);
        }
    }
    return sp;
}

// ---------------------------------------------------------------- flow metrics

// Share of the flow magnitude carried by columns [x_lo, x_hi].
inline double column_band_fraction(const VectorField& v, int x_lo, int x_hi) {
    std::vector<double> mag = v.magnitude();
    double all = 0.0, band = 0.0;
    for (int j = 0; j < v.height; ++j)
        for (int i = 0; i < v.width; ++i) {
            double m = mag[static_cast<size_t>(j) * v.width + i];
            all += m;
            if (i >= x_lo && i <= x_hi) band += m;
        }
    return all > 0.0 ? band / all : 0.0;
}

// Flow share in the strip between the two disks (left-right exchange).
inline double central_gap_fraction(const VectorField& v, const TwoDiskParams& p) {
    double reach = p.radius + p.delta_r;
    int lo = static_cast<int>(std::ceil(0.25 * p.size + reach));
    int hi = static_cast<int>(std::floor(0.75 * p.size - reach)) - 1;
    if (hi < lo) lo = hi = p.size / 2;
    return column_band_fraction(v, lo, hi);
}

// ---------------------------------------------------------------- matrices

// Model with the roles of the two measures exchanged.
inline UnbalancedModel swapped(const UnbalancedModel& m) {
    auto rev = [](const Discrepancy& d) {
        std::vector<IntegrandSpec> r;
        for (auto it = d.parts.rbegin(); it != d.parts.rend(); ++it) r.push_back(reflected(*it));
        return Discrepancy(std::move(r));
    };
    return build_model(rev(m.d1), rev(m.d01), rev(m.d0));
}

inline bool is_symmetric(const UnbalancedModel& m) { return to_string(swapped(m)) == to_string(m); }

struct DiscrepancyMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;  // row-major n x n
    std::vector<double> gaps;
    std::vector<std::string> failures;  // one message per failed entry

    size_t n() const { return labels.size(); }
    double at(size_t i, size_t j) const { return values[i * n() + j]; }
};

// Solves all ordered pairs (each unordered pair once for symmetric models) on a
// pool of `jobs` workers.  Failed entries are NaN and recorded in `failures`.
inline DiscrepancyMatrix discrepancy_matrix(const std::vector<GridMeasure>& images,
                                            const std::vector<std::string>& labels, const UnbalancedModel& model,
                                            const SolverConfig& cfg, int jobs = 1) {
    const size_t n = images.size();
    if (labels.size() != n) throw InputError("one label per image required");
    for (const auto& im : images)
        if (!im.same_shape(images.front())) throw InputError("matrix images differ in shape");
    DiscrepancyMatrix M{labels, std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.0), {}};
    const bool sym = is_symmetric(model);
    std::vector<std::pair<size_t, size_t>> work;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j && (!sym || i < j)) work.push_back({i, j});
    std::atomic<size_t> next{0};
    std::mutex mu;
    auto worker = [&]() {
        for (size_t k = next++; k < work.size(); k = next++) {
            auto [i, j] = work[k];
            double v = std::nan(""), g = std::nan("");
            std::string err;
            try {
                Solution s = solve(model, images[i], images[j], cfg);
                v = s.value;
                g = s.gap;
            } catch (const std::exception& e) {
                err = labels[i] + "," + labels[j] + ": " + e.what();
            }
            std::lock_guard<std::mutex> lk(mu);
            M.values[i * n + j] = v;
            M.gaps[i * n + j] = g;
            if (sym) {
                M.values[j * n + i] = v;
                M.gaps[j * n + i] = g;
            }
            if (!err.empty()) M.failures.push_back(err);
        }
    };
    int w = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < w; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return M;
}

// Row i increases (weakly) when moving away from the diagonal in both directions.
inline bool chain_monotone_row(const DiscrepancyMatrix& M, size_t i) {
    for (size_t j = i + 1; j + 1 < M.n(); ++j)
        if (M.at(i, j + 1) < M.at(i, j)) return false;
    for (size_t j = i; j > 0; --j)
        if (M.at(i, j - 1) < M.at(i, j)) return false;
    return true;
}

inline bool chain_monotone(const DiscrepancyMatrix& M) {
    for (size_t i = 0; i < M.n(); ++i)
        if (!chain_monotone_row(M, i)) return false;
    return true;
}

// ---------------------------------------------------------------- embedding

struct SymEigen {
    std::vector<double> values;   // ascending
    std::vector<double> vectors;  // column k (row-major n x n) belongs to values[k]
};

// Cyclic Jacobi rotations for a dense symmetric matrix.
inline SymEigen jacobi_eigen(std::vector<double> a, size_t n, double tol = 1e-14, int max_sweeps = 100) {
    if (a.size() != n * n) throw InputError("matrix size mismatch");
    std::vector<double> v(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    auto off = [&]() {
        double s = 0.0, t = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) (i == j ? t : s) += a[i * n + j] * a[i * n + j];
        return std::sqrt(s) <= tol * std::max(1.0, std::sqrt(s + t));
    };
    int sweep = 0;
    for (; sweep < max_sweeps && !off(); ++sweep)
        for (size_t p = 0; p + 1 < n; ++p)
            for (size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (apq == 0.0) continue;
                double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
    if (sweep == max_sweeps && !off()) throw NumericalError("Jacobi eigen-solver did not converge");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return a[x * n + x] < a[y * n + y]; });
    SymEigen r{std::vector<double>(n), std::vector<double>(n * n)};
    for (size_t k = 0; k < n; ++k) {
        r.values[k] = a[order[k] * n + order[k]];
        for (size_t i = 0; i < n; ++i) r.vectors[i * n + k] = v[i * n + order[k]];
    }
    return r;
}

struct Embedding {
    std::vector<std::array<double, 2>> coords;
    double t = 0.0;  // kernel time scale
};

// Laplacian eigenmap: heat kernel exp(-D^2 / t) with t = scale * (mean nearest-neighbour
// distance)^2, symmetric normalized Laplacian, coordinates from eigenvectors 2 and 3
// mapped back by D^{-1/2} (generalized problem L f = lambda Deg f).
inline Embedding spectral_embedding(const std::vector<double>& dist, size_t n, double scale = 5.0) {
    if (dist.size() != n * n) throw InputError("embedding needs a square matrix");
    if (n < 3) throw InputError("embedding needs at least three samples");
    for (double d : dist)
        if (!(d >= -1e-8) || !std::isfinite(d)) throw InputError("embedding needs finite nonnegative entries");
    std::vector<double> D(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) D[i * n + j] = std::max(0.0, 0.5 * (dist[i * n + j] + dist[j * n + i]));
    double nn = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double m = kInf;
        for (size_t j = 0; j < n; ++j)
            if (j != i) m = std::min(m, D[i * n + j]);
        nn += m;
    }
    nn /= n;
    Embedding e;
    e.t = scale * nn * nn;
    if (!(e.t > 0.0)) e.t = 1.0;
    std::vector<double> W(n * n, 0.0), deg(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j) {
                W[i * n + j] = std::exp(-D[i * n + j] * D[i * n + j] / e.t);
                deg[i] += W[i * n + j];
            }
    std::vector<double> L(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double nrm = std::sqrt(deg[i] * deg[j]);
            double w = nrm > 0.0 ? W[i * n + j] / nrm : 0.0;
            L[i * n + j] = (i == j ? 1.0 : 0.0) - w;
        }
    SymEigen ev = jacobi_eigen(L, n);
    e.coords.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double s = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
        e.coords[i] = {ev.vectors[i * n + 1] * s, ev.vectors[i * n + 2] * s};
    }
    return e;
}

// ---------------------------------------------------------------- decomposition

struct DecompositionStats {
    double injected = 0.0;  // salt mass above the clean image
    double captured = 0.0;  // noise-component mass at salt pixels
    double fraction() const { return injected > 0.0 ? captured / injected : 0.0; }
};

inline DecompositionStats spike_capture(const Decomposition& d, const GridMeasure& clean, const SaltPepper& sp) {
    DecompositionStats s;
    for (size_t k : sp.salt) {
        s.injected += sp.image.values[k] - clean.values[k];
        s.captured += d.noise[k];
    }
    return s;
}

}  // namespace uw1::apps
