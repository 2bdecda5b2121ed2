#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "uw1/errors.hpp"

namespace uw1 {

// Nonnegative density on a regular pixel lattice.  Pixel (i, j) sits at
// (i*spacing, j*spacing); i runs along x (image columns), j along y (rows).
// Values are densities: the mass of a pixel is spacing^2 * value.
struct GridMeasure {
    int width = 0;
    int height = 0;
    double spacing = 0.0;
    std::vector<double> values;

    GridMeasure() = default;

    GridMeasure(int w, int h) : width(w), height(h), values(static_cast<size_t>(w) * h, 0.0) {
        if (w < 2 || h < 2) throw InputError("grid must be at least 2x2");
        spacing = 1.0 / std::max(w, h);
    }

    GridMeasure(int w, int h, std::vector<double> v) : GridMeasure(w, h) {
        if (v.size() != values.size()) throw InputError("value count does not match grid size");
        values = std::move(v);
        validate();
    }

    size_t size() const { return values.size(); }
    size_t index(int i, int j) const { return static_cast<size_t>(j) * width + i; }
    double& at(int i, int j) { return values[index(i, j)]; }
    double at(int i, int j) const { return values[index(i, j)]; }
    bool same_shape(const GridMeasure& o) const { return width == o.width && height == o.height; }

    void validate() const {
        for (size_t k = 0; k < values.size(); ++k) {
            double v = values[k];
            if (!std::isfinite(v) || v < 0.0) {
                std::ostringstream os;
                os << "invalid density " << v << " at row " << (k / width) << ", column " << (k % width);
                throw InputError(os.str());
            }
        }
    }
};

inline double total_mass(const GridMeasure& m) {
    double s = 0.0;
    for (double v : m.values) s += v;
    return s * m.spacing * m.spacing;
}

inline GridMeasure dirac(int i, int j, double mass, int width, int height) {
    GridMeasure m(width, height);
    if (i < 0 || j < 0 || i >= width || j >= height) {
        std::ostringstream os;
        os << "dirac index (" << i << "," << j << ") outside " << width << "x" << height << " grid";
        throw InputError(os.str());
    }
    if (!(mass >= 0.0) || !std::isfinite(mass)) throw InputError("dirac mass must be finite and nonnegative");
    m.at(i, j) = mass / (m.spacing * m.spacing);
    return m;
}

// Pointwise a*x + b*y for same-shaped measures (a, b >= 0 keeps the result valid).
inline GridMeasure combine(double a, const GridMeasure& x, double b, const GridMeasure& y) {
    if (!x.same_shape(y)) throw InputError("shape mismatch in combine");
    GridMeasure r(x.width, x.height);
    for (size_t k = 0; k < r.size(); ++k) r.values[k] = a * x.values[k] + b * y.values[k];
    return r;
}

inline GridMeasure normalized(const GridMeasure& m) {
    double mass = total_mass(m);
    if (mass <= 0.0) throw InputError("cannot normalize a zero measure");
    GridMeasure r = m;
    for (double& v : r.values) v /= mass;
    return r;
}

enum class ImageFormat { Pgm, Csv };

inline ImageFormat format_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == "pgm") return ImageFormat::Pgm;
    if (ext == "csv") return ImageFormat::Csv;
    throw InputError("cannot infer image format from '" + path + "'");
}

namespace detail {

// Reads the next whitespace-delimited header token, skipping '#' comments.
inline std::string pgm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    if (tok.empty()) throw InputError("truncated PGM header");
    return tok;
}

inline long pgm_int(std::istream& in) {
    std::string t = pgm_token(in);
    try {
        size_t pos = 0;
        long v = std::stol(t, &pos);
        if (pos != t.size()) throw InputError("bad PGM header field '" + t + "'");
        return v;
    } catch (const std::logic_error&) {
        throw InputError("bad PGM header field '" + t + "'");
    }
}

inline GridMeasure load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::string magic = pgm_token(in);
    if (magic != "P2" && magic != "P5") throw InputError("'" + path + "' is not a P2/P5 PGM");
    long w = pgm_int(in), h = pgm_int(in), maxval = pgm_int(in);
    if (w < 2 || h < 2) throw InputError("PGM grid must be at least 2x2");
    if (maxval < 1 || maxval > 65535) throw InputError("PGM maxval out of range");
    GridMeasure m(static_cast<int>(w), static_cast<int>(h));
    if (magic == "P2") {
        for (auto& v : m.values) {
            long x = pgm_int(in);
            if (x < 0 || x > maxval) throw InputError("PGM gray level out of range");
            v = static_cast<double>(x);
        }
    } else {
        int bytes = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> buf(m.size() * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw InputError("truncated PGM raster");
        for (size_t k = 0; k < m.size(); ++k) {
            unsigned x = bytes == 1 ? buf[k] : (static_cast<unsigned>(buf[2 * k]) << 8) | buf[2 * k + 1];
            if (x > static_cast<unsigned>(maxval)) throw InputError("PGM gray level out of range");
            m.values[k] = static_cast<double>(x);
        }
    }
    return m;
}

inline GridMeasure load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::vector<double> vals;
    int width = -1, row = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            double v;
            try {
                size_t pos = 0;
                v = std::stod(cell, &pos);
                if (cell.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::logic_error&) {
                std::ostringstream os;
                os << "'" << path << "': cannot parse '" << cell << "' at row " << row << ", column " << col;
                throw InputError(os.str());
            }
            if (!std::isfinite(v) || v < 0.0) {
                std::ostringstream os;
                os << "'" << path << "': negative or non-finite value " << cell << " at row " << row << ", column "
                   << col;
                throw InputError(os.str());
            }
            vals.push_back(v);
            ++col;
        }
        if (width < 0) width = col;
        if (col != width) {
            std::ostringstream os;
            os << "'" << path << "': row " << row << " has " << col << " columns, expected " << width;
            throw InputError(os.str());
        }
        ++row;
    }
    if (width < 2 || row < 2) throw InputError("'" + path + "': grid must be at least 2x2");
    return GridMeasure(width, row, std::move(vals));
}

}  // namespace detail

inline GridMeasure load_image(const std::string& path, ImageFormat fmt) {
    return fmt == ImageFormat::Pgm ? detail::load_pgm(path) : detail::load_csv(path);
}

inline GridMeasure load_image(const std::string& path) { return load_image(path, format_from_path(path)); }

// Row-major CSV of arbitrary (possibly signed) values; max_digits10 keeps the round trip exact.
inline void save_csv(const std::string& path, int width, int height, const std::vector<double>& values) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int j = 0; j < height; ++j) {
        for (int i = 0; i < width; ++i) {
            if (i) out << ',';
            out << values[static_cast<size_t>(j) * width + i];
        }
        out << '\n';
    }
}

// Binary P5 with an affine map value -> (value - offset) * scale, rounded and clamped to [0, maxval].
inline void save_pgm(const std::string& path, int width, int height, const std::vector<double>& values, double offset,
                     double scale, int maxval = 255) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
    for (double v : values) {
        double g = std::round((v - offset) * scale);
        g = std::clamp(g, 0.0, static_cast<double>(maxval));
        auto x = static_cast<unsigned>(g);
        if (maxval < 256) {
            out.put(static_cast<char>(x));
        } else {
            out.put(static_cast<char>(x >> 8));
            out.put(static_cast<char>(x & 0xff));
        }
    }
}

inline void save_image(const GridMeasure& m, const std::string& path, ImageFormat fmt) {
    if (fmt == ImageFormat::Csv) {
        save_csv(path, m.width, m.height, m.values);
        return;
    }
    // Gray levels are written verbatim when they fit, otherwise rescaled to the 16-bit range.
    double mx = 0.0;
    bool integral = true;
    for (double v : m.values) {
        mx = std::max(mx, v);
        integral = integral && v == std::round(v);
    }
    if (integral && mx <= 65535.0) {
        save_pgm(path, m.width, m.height, m.values, 0.0, 1.0, mx < 256.0 ? 255 : 65535);
    } else {
        save_pgm(path, m.width, m.height, m.values, 0.0, mx > 0.0 ? 65535.0 / mx : 1.0, 65535);
    }
}

inline void save_image(const GridMeasure& m, const std::string& path) { save_image(m, path, format_from_path(path)); }

}  // namespace uw1
