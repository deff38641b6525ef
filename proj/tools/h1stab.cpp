#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "h1stab/hanging.hpp"
#include "h1stab/io.hpp"
#include "h1stab/refine.hpp"
#include "h1stab/weights.hpp"

using namespace h1stab;

namespace {

std::vector<double> parse_mu_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stod(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw CLI::ValidationError("--mu", "empty list");
    return out;
}

std::pair<int, int> parse_p_range(const std::string& s) {
    std::size_t dots = s.find("..");
    if (dots == std::string::npos) {
        int p = std::stoi(s);
        return {p, p};
    }
    int lo = std::stoi(s.substr(0, dots));
    int hi = std::stoi(s.substr(dots + 2));
    if (lo < 1 || hi < lo) throw CLI::ValidationError("--p", "bad range");
    return {lo, hi};
}

GenerationSet strategy_by_name(const std::string& s) {
    if (s == "qr") return GenerationSet::make(Strategy::QR);
    if (s == "qrg") return GenerationSet::make(Strategy::QRG);
    if (s == "qrb") return GenerationSet::make(Strategy::QRB);
    if (s == "triangle") return GenerationSet::make(Strategy::Triangle);
    if (s == "union") return GenerationSet::quad_union();
    throw CLI::ValidationError("--strategy", "unknown strategy " + s);
}

struct GridSpec {
    int rows = 1, cols = 1;
    double skew = 0.0;
};

GridSpec parse_grid(const std::string& s) {
    GridSpec g;
    char skew_part[64] = "0";
    if (std::sscanf(s.c_str(), "%dx%d:%63s", &g.rows, &g.cols, skew_part) >= 2) {
        g.skew = std::atof(skew_part);
        return g;
    }
    throw CLI::ValidationError("--grid", "expected RxC or RxC:skew");
}

/// Deterministic index sampling independent of library distributions.
std::set<int> sample_marks(const std::vector<int>& active, double fraction, std::mt19937_64& rng) {
    std::size_t want = std::size_t(std::ceil(fraction * double(active.size())));
    want = std::min(want, active.size());
    std::vector<int> pool = active;
    std::set<int> out;
    for (std::size_t k = 0; k < want; ++k) {
        std::size_t i = k + std::size_t(rng() % std::uint64_t(pool.size() - k));
        std::swap(pool[k], pool[i]);
        out.insert(pool[k]);
    }
    return out;
}

std::set<int> corner_marks(const Mesh& m) {
    // elements whose closure contains the lower-left corner of the initial bbox
    Vec2 corner = m.vertices[0];
    for (const Vec2& v : m.vertices)
        if (v.x < corner.x - 1e-12 || (std::abs(v.x - corner.x) < 1e-12 && v.y < corner.y - 1e-12))
            corner = v;
    std::set<int> out;
    for (int e : m.active_elements())
        for (int k = 0; k < m.elements[e].nv(); ++k)
            if (norm(m.vertices[m.elements[e].verts[k]] - corner) < 1e-12) out.insert(e);
    return out;
}

int run_tables(const std::string& shape, const std::string& geometry, double c, int hanging,
               const std::string& strategy, const std::string& mu_list, const std::string& p_range,
               const std::string& csv_path) {
    std::vector<double> mus = parse_mu_list(mu_list);
    auto [p_lo, p_hi] = parse_p_range(p_range);

    ElemShape es = shape == "triangle" ? ElemShape::Triangle : ElemShape::Square;
    if (hanging > 0) {
        if (es != ElemShape::Square || geometry != "affine" || p_hi > 5) {
            std::cerr << "error: --hanging requires --shape square, --geometry affine and p <= 5\n";
            return 2;
        }
    }
    GeometryCase geom = GeometryCase::affine();
    if (geometry == "general") {
        geom = GeometryCase::general_quad(c);
    } else if (geometry == "qrb") {
        geom = GeometryCase::qrb_quad();
    } else if (geometry != "affine") {
        std::cerr << "error: --geometry must be affine, general or qrb\n";
        return 2;
    }
    if (es == ElemShape::Triangle && geometry != "affine") {
        std::cerr << "error: triangles support only --geometry affine\n";
        return 2;
    }
    GenerationSet gs = strategy.empty()
                           ? (es == ElemShape::Triangle ? GenerationSet::make(Strategy::Triangle)
                              : hanging > 0             ? GenerationSet::make(Strategy::QR)
                              : geometry == "qrb"       ? GenerationSet::make(Strategy::QRB)
                                                        : GenerationSet::quad_union())
                           : strategy_by_name(strategy);

    std::vector<std::vector<double>> cells(mus.size());
    for (std::size_t mi = 0; mi < mus.size(); ++mi)
        for (int p = p_lo; p <= p_hi; ++p)
            cells[mi].push_back(hanging > 0 ? min_lambda_hanging_table(p, hanging, mus[mi])
                                            : min_lambda_table(es, p, gs, mus[mi], geom));

    std::printf("%4s", "p");
    for (double mu : mus) std::printf("  %18s%.0f", "lambda_min mu=", mu);
    std::printf("\n");
    for (int p = p_lo; p <= p_hi; ++p) {
        std::printf("%4d", p);
        for (std::size_t mi = 0; mi < mus.size(); ++mi)
            std::printf("  %19.15f", cells[mi][p - p_lo]);
        std::printf("\n");
    }
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) {
            std::cerr << "error: cannot write " << csv_path << "\n";
            return 2;
        }
        csv << "mu,p,lambda_min\n";
        csv.precision(15);
        csv << std::fixed;
        for (std::size_t mi = 0; mi < mus.size(); ++mi)
            for (int p = p_lo; p <= p_hi; ++p)
                csv << mus[mi] << "," << p << "," << cells[mi][p - p_lo] << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive quadrilateral refinement and H1-stability certification"};
    app.require_subcommand(1);

    // ---- tables ----
    auto* tables = app.add_subcommand("tables", "Reproduce the lambda_min reference tables");
    std::string shape = "square", geometry = "affine", strategy, mu_list = "1,2,3,4";
    std::string p_range = "1..10", csv_path;
    double c = 0.25;
    int hanging = 0;
    tables->add_option("--shape", shape, "square or triangle");
    tables->add_option("--geometry", geometry, "affine, general or qrb");
    tables->add_option("--c", c, "nonlinearity bound for --geometry general");
    tables->add_option("--hanging", hanging, "hanging nodes per element (0, 1 or 2)");
    tables->add_option("--strategy", strategy, "generation set: qr, qrg, qrb, triangle, union");
    tables->add_option("--mu", mu_list, "comma-separated grading parameters");
    tables->add_option("--p", p_range, "degree or range lo..hi");
    tables->add_option("--csv", csv_path, "write mu,p,lambda_min rows to a file");

    // ---- refine ----
    auto* refine = app.add_subcommand("refine", "Drive Q-R / Q-RG / Q-RB refinement");
    std::string input, grid, rstrategy = "qrg", marks = "random:0.3", output, vtk_path;
    int steps = 1;
    std::uint64_t seed = 0;
    refine->add_option("--input", input, "input mesh JSON");
    refine->add_option("--grid", grid, "initial grid RxC or RxC:skew");
    refine->add_option("--strategy", rstrategy, "qr, qrg or qrb")->required();
    refine->add_option("--marks", marks, "random:<fraction>, ids:<list> or corner");
    refine->add_option("--steps", steps, "number of refinement calls");
    refine->add_option("--seed", seed, "seed for random marks");
    refine->add_option("--output", output, "output mesh JSON")->required();
    refine->add_option("--vtk", vtk_path, "also write a legacy VTK file");

    // ---- check ----
    auto* check = app.add_subcommand("check", "Certify H1-stability of a mesh");
    std::string cinput, report_path;
    int cp = 1;
    double cmu = 2.0;
    check->add_option("--input", cinput, "input mesh JSON")->required();
    check->add_option("--p", cp, "polynomial degree")->required();
    check->add_option("--mu", cmu, "grading parameter");
    check->add_option("--report", report_path, "write the JSON report to a file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (tables->parsed()) return run_tables(shape, geometry, c, hanging, strategy, mu_list, p_range, csv_path);

        if (refine->parsed()) {
            if (input.empty() == grid.empty()) {
                std::cerr << "error: exactly one of --input / --grid is required\n";
                return 2;
            }
            Mesh m;
            if (!grid.empty()) {
                GridSpec g = parse_grid(grid);
                m = Mesh::make_initial(g.rows, g.cols, g.skew);
            } else {
                m = load_mesh(input);
            }
            std::mt19937_64 rng(seed);
            for (int step = 0; step < steps; ++step) {
                std::set<int> marked;
                if (marks.rfind("random:", 0) == 0) {
                    marked = sample_marks(m.active_elements(), std::stod(marks.substr(7)), rng);
                } else if (marks.rfind("ids:", 0) == 0) {
                    std::string list = marks.substr(4);
                    std::size_t pos = 0;
                    while (pos < list.size()) {
                        std::size_t comma = list.find(',', pos);
                        if (comma == std::string::npos) comma = list.size();
                        marked.insert(std::stoi(list.substr(pos, comma - pos)));
                        pos = comma + 1;
                    }
                } else if (marks == "corner") {
                    marked = corner_marks(m);
                } else {
                    std::cerr << "error: bad --marks\n";
                    return 2;
                }
                if (rstrategy == "qr") {
                    m = refine_qr(std::move(m), marked);
                } else if (rstrategy == "qrg") {
                    m = refine_qrg(std::move(m), marked);
                } else if (rstrategy == "qrb") {
                    m = refine_qrb(std::move(m), marked);
                } else {
                    std::cerr << "error: bad --strategy\n";
                    return 2;
                }
            }
            save_mesh(m, output);
            if (!vtk_path.empty()) write_vtk(m, vtk_path);
            std::printf("%zu active elements, %zu vertices, %zu hanging nodes\n",
                        m.active_elements().size(), m.vertices.size(), m.hanging.size());
            return 0;
        }

        if (check->parsed()) {
            Mesh m = load_mesh(cinput);
            StabilityReport rep = certify(m, cp, cmu);
            std::printf("p = %d, mu = %g\n", rep.p, rep.mu);
            std::printf("elements checked:   %zu\n", rep.per_element.size());
            std::printf("min lambda:         %.15f (element %d)\n", rep.min_lambda, rep.worst_element);
            std::printf("mu bound:           max excess %.3f vs C_mu %.1f (%s)\n",
                        rep.mu_diag.max_excess, rep.mu_diag.c_mu, rep.mu_bound_ok ? "ok" : "violated");
            std::printf("h_z/h_T range:      [%.6f, %.6f]\n", rep.min_hz_over_ht, rep.max_hz_over_ht);
            std::printf("verdict:            %s\n", rep.verdict == Verdict::Stable ? "Stable" : "NotCertified");
            for (const std::string& n : rep.notes) std::printf("note: %s\n", n.c_str());
            if (!report_path.empty()) {
                std::ofstream out(report_path);
                if (!out) {
                    std::cerr << "error: cannot write " << report_path << "\n";
                    return 2;
                }
                out << report_to_json(rep).dump(1) << "\n";
            }
            return rep.verdict == Verdict::Stable ? 0 : 1;
        }
    } catch (const ClosureCapError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
