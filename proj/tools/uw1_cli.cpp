#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "uw1/uw1.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace uw1;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { Ok = 0, BadInput = 1, Uncertified = 2, Divergent = 3, Numerical = 4 };

struct Common {
    std::string model = "d0=discrete d01=discrete d1=discrete";
    std::string scheme = "forward";
    bool pixel_units = false;
    int max_iter = 20000;
    double tol = 1e-6;
    double gap_tol = 1e-4;
    double step_ratio = 0.0;
    std::string out = ".";
    int jobs = 1;
    uint64_t seed = 1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--model", c.model, "model string, e.g. \"d0=discrete d01=tv:a=0.1,b=0.1 d1=discrete\"");
    app->add_option("--scheme", c.scheme, "gradient scheme: forward, mixed, directional8");
    app->add_flag("--pixel-units", c.pixel_units, "model weights are in pixels (multiplied by the grid spacing)");
    app->add_option("--max-iter", c.max_iter, "iteration limit");
    app->add_option("--tol", c.tol, "residual tolerance of the stopping rule");
    app->add_option("--gap-tol", c.gap_tol, "relative duality gap of the stopping rule");
    app->add_option("--step-ratio", c.step_ratio, "dual/primal step ratio, 0 for automatic");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--jobs", c.jobs, "worker threads");
    app->add_option("--seed", c.seed, "random seed");
}

UnbalancedModel model_of(const Common& c, double spacing) {
    UnbalancedModel m = parse_model(c.model);
    return c.pixel_units ? scale_weights(m, spacing) : m;
}

SolverConfig solver_of(const Common& c) {
    SolverConfig s;
    s.max_iter = c.max_iter;
    s.stop_tol = c.tol;
    s.gap_tol = c.gap_tol;
    s.step_ratio = c.step_ratio;
    s.scheme = parse_scheme(c.scheme);
    return s;
}

json common_json(const Common& c) {
    return {{"model", c.model},         {"scheme", c.scheme}, {"pixel_units", c.pixel_units},
            {"max_iter", c.max_iter},   {"tol", c.tol},       {"gap_tol", c.gap_tol},
            {"step_ratio", c.step_ratio}, {"jobs", c.jobs},   {"seed", c.seed}};
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

void write_manifest(const Common& c, const std::vector<std::string>& argv, const json& extra) {
    json m;
    m["tool"] = "uw1";
    m["version"] = kVersion;
    m["compiler"] = __VERSION__;
    m["argv"] = argv;
    m["config"] = common_json(c);
    m.update(extra);
    std::ofstream f(out_path(c, "manifest.json"));
    f << std::setw(2) << m << '\n';
}

// Signed images go to PGM through value -> (value - offset) * scale; the map is returned for the manifest.
json save_signed(const Common& c, const std::string& stem, int w, int h, const std::vector<double>& v) {
    save_csv(out_path(c, stem + ".csv"), w, h, v);
    double lo = 0.0, hi = 0.0;
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double offset = lo, scale = hi > lo ? 255.0 / (hi - lo) : 1.0;
    save_pgm(out_path(c, stem + ".pgm"), w, h, v, offset, scale);
    return {{"csv", stem + ".csv"}, {"pgm", stem + ".pgm"}, {"offset", offset}, {"scale", scale}};
}

json solution_json(const Solution& s) {
    json hist = json::array();
    for (const auto& e : s.history) hist.push_back({e.iteration, e.dual, e.primal, e.gap});
    return {{"value", s.value},
            {"dual", s.dual_value},
            {"primal", s.primal_value},
            {"gap", s.gap},
            {"iterations", s.iterations},
            {"status", s.status == SolveStatus::Converged ? "converged" : "max-iterations"},
            {"warnings", s.warnings},
            {"history", hist}};
}

bool certified(const Solution& s, const Common& c, double mass) {
    double scale = std::max(std::abs(s.value), 1e-3 * mass);
    return std::isfinite(s.gap) && s.gap <= 10.0 * c.gap_tol * scale;
}

void print_solution(const Solution& s) {
    std::cout << std::setprecision(10) << "value " << s.value << "\ndual " << s.dual_value << "\nprimal "
              << s.primal_value << "\ngap " << s.gap << "\niterations " << s.iterations << '\n';
    for (const auto& w : s.warnings) std::cout << "warning " << w << '\n';
}

// Whole-cell number; surrounding blanks are allowed, anything else is an error.
double parse_number(const std::string& cell, const std::string& where) {
    size_t end = cell.find_last_not_of(" \t\r");
    std::string t = end == std::string::npos ? "" : cell.substr(0, end + 1);
    try {
        size_t pos = 0;
        double x = std::stod(t, &pos);
        if (pos == t.size()) return x;
    } catch (const std::logic_error&) {
    }
    throw InputError(where + ": cannot parse '" + cell + "'");
}

std::vector<std::vector<double>> read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(parse_number(cell, "'" + path + "'"));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(parse_number(cell, "list '" + s + "'"));
    return v;
}

int run(const std::vector<std::string>& argv);

int run_parsed(CLI::App& app, const std::vector<std::string>& argv) {
    Common c;
    std::string a_path, b_path, image_path, matrix_path, manifest_path, generator = "two-disks", file;
    std::vector<std::string> images;
    double lambda = 5.0, emb_scale = 5.0, tv_ratio = 0.0;
    int size = 64, count = 16;
    double radius = 10.0, delta_r = 0.0, t0 = 0.0, t1 = 0.0, cycles = 1.0, sigma = 0.05, prob = 0.005, magnitude = 20.0;
    double mass = 1.0;
    std::string points = "0,0;1,0", m0s = "1,0", m1s = "0,1";
    int passes = 6;

    app.require_subcommand(1);
    auto* disc = app.add_subcommand("discrepancy", "discrepancy between two images");
    disc->add_option("first", a_path, "first image (csv or pgm)")->required();
    disc->add_option("second", b_path, "second image")->required();
    add_common(disc, c);

    auto* flow = app.add_subcommand("flow", "optimal flow and mass-change maps");
    flow->add_option("first", a_path)->required();
    flow->add_option("second", b_path)->required();
    add_common(flow, c);

    auto* mat = app.add_subcommand("matrix", "pairwise discrepancy matrix");
    mat->add_option("images", images, "image files")->required();
    add_common(mat, c);

    auto* emb = app.add_subcommand("embed", "Laplacian eigenmap of a matrix");
    emb->add_option("matrix", matrix_path, "square csv matrix")->required();
    emb->add_option("--scale", emb_scale, "kernel time in units of the squared nearest-neighbour distance");
    add_common(emb, c);

    auto* dec = app.add_subcommand("decompose", "cartoon/texture/noise decomposition");
    dec->add_option("image", image_path)->required();
    dec->add_option("--lambda", lambda, "TV weight (pixel units with --pixel-units)");
    dec->add_option("--tv-step-ratio", tv_ratio, "TV block step ratio, 0 for automatic");
    add_common(dec, c);

    auto* syn = app.add_subcommand("synth", "synthetic images");
    syn->add_option("generator", generator, "circle, center, two-disks, stripes, gaussian, salt-pepper")->required();
    syn->add_option("--file", file, "output image file (csv or pgm) inside --out")->required();
    syn->add_option("--input", image_path, "input image for the noise generators");
    syn->add_option("--size", size);
    syn->add_option("--count", count);
    syn->add_option("--radius", radius, "pixels");
    syn->add_option("--delta-r", delta_r, "pixels");
    syn->add_option("--t0", t0);
    syn->add_option("--t1", t1);
    syn->add_option("--cycles", cycles, "radius oscillations over the vertical travel");
    syn->add_option("--mass", mass);
    syn->add_option("--sigma", sigma);
    syn->add_option("--prob", prob);
    syn->add_option("--magnitude", magnitude);
    add_common(syn, c);

    auto* orc = app.add_subcommand("oracle", "brute-force value of a tiny instance");
    orc->add_option("--points", points, "\"x,y;x,y;...\" (at most 3)");
    orc->add_option("--m0", m0s, "first masses, comma separated");
    orc->add_option("--m1", m1s, "second masses");
    orc->add_option("--passes", passes, "refinement passes");
    add_common(orc, c);

    auto* rer = app.add_subcommand("rerun", "repeat the run recorded in a manifest");
    rer->add_option("manifest", manifest_path)->required();

    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    app.parse(rev);

    if (*rer) {
        std::ifstream in(manifest_path);
        if (!in) throw InputError("cannot open '" + manifest_path + "'");
        json m = json::parse(in);
        return run(m.at("argv").get<std::vector<std::string>>());
    }

    if (*disc || *flow) {
        GridMeasure a = load_image(a_path), b = load_image(b_path);
        auto model = model_of(c, a.spacing);
        Solution s = solve(model, a, b, solver_of(c));
        print_solution(s);
        json extra{{"model_canonical", to_string(model)}, {"inputs", {a_path, b_path}}, {"result", solution_json(s)}};
        if (*flow) {
            VectorField v = extract_flow(s);
            std::ofstream f(out_path(c, "flow.csv"));
            f << std::setprecision(std::numeric_limits<double>::max_digits10) << "i,j,vx,vy\n";
            for (int j = 0; j < v.height; ++j)
                for (int i = 0; i < v.width; ++i) {
                    size_t k = static_cast<size_t>(j) * v.width + i;
                    f << i << ',' << j << ',' << v.vx[k] << ',' << v.vy[k] << '\n';
                }
            json outs;
            outs["magnitude"] = save_signed(c, "flow_magnitude", v.width, v.height, v.magnitude());
            std::vector<double> ch0(a.size()), ch1(a.size());
            for (size_t k = 0; k < a.size(); ++k) {
                ch0[k] = s.rho0_prime.values[k] - a.values[k];
                ch1[k] = b.values[k] - s.rho1_prime.values[k];
            }
            outs["change_first"] = save_signed(c, "change_first", a.width, a.height, ch0);
            outs["change_second"] = save_signed(c, "change_second", a.width, a.height, ch1);
            outs["flow"] = "flow.csv";
            extra["outputs"] = outs;
            std::cout << "flow_mass " << flow_mass(s, a.spacing) << '\n';
        }
        write_manifest(c, argv, extra);
        return certified(s, c, total_mass(a) + total_mass(b)) ? Ok : Uncertified;
    }

    if (*mat) {
        std::vector<GridMeasure> ims;
        for (const auto& p : images) ims.push_back(load_image(p));
        if (ims.empty()) throw InputError("no images given");
        auto model = model_of(c, ims.front().spacing);
        auto M = apps::discrepancy_matrix(ims, images, model, solver_of(c), c.jobs);
        save_csv(out_path(c, "matrix.csv"), static_cast<int>(M.n()), static_cast<int>(M.n()), M.values);
        save_csv(out_path(c, "gaps.csv"), static_cast<int>(M.n()), static_cast<int>(M.n()), M.gaps);
        for (const auto& f : M.failures) std::cerr << "failed " << f << '\n';
        std::cout << "chain_monotone " << (apps::chain_monotone(M) ? "yes" : "no") << '\n';
        write_manifest(c, argv,
                       {{"model_canonical", to_string(model)},
                        {"labels", M.labels},
                        {"failures", M.failures},
                        {"outputs", {"matrix.csv", "gaps.csv"}}});
        return M.failures.empty() ? Ok : Numerical;
    }

    if (*emb) {
        auto rows = read_table(matrix_path);
        const size_t n = rows.size();
        std::vector<double> d;
        for (const auto& r : rows) {
            if (r.size() != n) throw InputError("matrix is not square");
            d.insert(d.end(), r.begin(), r.end());
        }
        auto e = apps::spectral_embedding(d, n, emb_scale);
        std::ofstream f(out_path(c, "embedding.csv"));
        f << std::setprecision(std::numeric_limits<double>::max_digits10) << "x,y\n";
        for (const auto& p : e.coords) f << p[0] << ',' << p[1] << '\n';
        write_manifest(c, argv, {{"kernel_time", e.t}, {"outputs", {"embedding.csv"}}});
        return Ok;
    }

    if (*dec) {
        GridMeasure im = load_image(image_path);
        auto model = model_of(c, im.spacing);
        double tv = c.pixel_units ? lambda * im.spacing * im.spacing : lambda;
        SolverConfig s = solver_of(c);
        s.tv_step_ratio = tv_ratio;
        auto r = solve_regularized(model, im, tv, s);
        std::cout << std::setprecision(10) << "objective " << r.objective << "\nfidelity_gap " << r.solution.gap
                  << "\niterations " << r.solution.iterations << '\n';
        json outs;
        outs["cartoon"] = save_signed(c, "cartoon", im.width, im.height, r.parts.cartoon.values);
        outs["texture"] = save_signed(c, "texture", im.width, im.height, r.parts.texture);
        outs["noise"] = save_signed(c, "noise", im.width, im.height, r.parts.noise);
        write_manifest(c, argv,
                       {{"model_canonical", to_string(model)},
                        {"tv_weight", tv},
                        {"objective", r.objective},
                        {"result", solution_json(r.solution)},
                        {"outputs", outs}});
        return Ok;
    }

    if (*syn) {
        GridMeasure m;
        json params{{"generator", generator}};
        if (generator == "circle") {
            m = apps::circle_of_diracs(size, count, radius, mass);
        } else if (generator == "center") {
            m = apps::center_dirac(size, mass);
        } else if (generator == "two-disks") {
            apps::TwoDiskParams p;
            p.size = size;
            p.radius = radius;
            p.delta_r = delta_r;
            p.t0 = t0;
            p.t1 = t1;
            p.cycles = cycles;
            m = apps::two_disks(p);
        } else if (generator == "stripes") {
            m = apps::stripes_card(size);
        } else if (generator == "gaussian") {
            m = apps::add_gaussian_noise(load_image(image_path), sigma, c.seed);
        } else if (generator == "salt-pepper") {
            auto sp = apps::salt_and_pepper(load_image(image_path), prob, magnitude, c.seed);
            m = sp.image;
            params["salt_pixels"] = sp.salt.size();
            params["pepper_pixels"] = sp.pepper.size();
        } else {
            throw InputError("unknown generator '" + generator + "'");
        }
        save_image(m, out_path(c, file));
        params["outputs"] = {file};
        write_manifest(c, argv, params);
        std::cout << "mass " << total_mass(m) << '\n';
        return Ok;
    }

    if (*orc) {
        std::vector<std::array<double, 2>> pts;
        std::stringstream ss(points);
        std::string cell;
        while (std::getline(ss, cell, ';')) {
            auto xy = parse_list(cell);
            if (xy.size() != 2) throw InputError("points are \"x,y\" pairs");
            pts.push_back({xy[0], xy[1]});
        }
        auto inst = make_instance(pts, parse_list(m0s), parse_list(m1s), parse_model(c.model));
        OracleConfig oc;
        oc.passes = passes;
        auto v = unbalanced_value(inst, oc);
        std::cout << std::setprecision(10) << "primal " << v.value << "\nbound " << v.bound << '\n';
        json extra{{"primal", v.value}, {"bound", v.bound}};
        if (inst.size() <= 2) {
            auto d = dual_value_scan(inst, oc);
            std::cout << "dual " << d.value << '\n';
            extra["dual"] = d.value;
        }
        write_manifest(c, argv, extra);
        return Ok;
    }
    return BadInput;
}

int run(const std::vector<std::string>& argv) {
    CLI::App app{"Unbalanced W1 discrepancies on image grids", "uw1"};
    app.set_version_flag("--version", kVersion);
    try {
        return run_parsed(app, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const DivergentProblem& e) {
        std::cerr << "diverges: " << e.what() << '\n';
        return Divergent;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return BadInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return Numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return BadInput;
    }
}

}  // namespace

int main(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }
