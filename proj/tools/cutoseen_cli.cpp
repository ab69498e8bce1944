#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cutoseen/harness.hpp"

namespace fs = std::filesystem;
using namespace cutoseen;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << content;
}

std::string snapshot_tag(double t) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << t;
    std::string s = os.str();
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

void write_run_artifacts(const fs::path& out, const RunResult& res) {
    fs::create_directories(out);
    write_file(out / "result.json", res.to_json());
    write_file(out / "diagnostics.csv", res.diagnostics_csv());
    for (const auto& [t, csv] : res.interface_csv)
        write_file(out / ("interface_t" + snapshot_tag(t) + ".csv"), csv);
    for (const auto& [t, svg] : res.interface_svg)
        write_file(out / ("interface_t" + snapshot_tag(t) + ".svg"), svg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unfitted finite element solver for two-phase Oseen flow with a moving "
                 "interface"};
    app.get_formatter()->column_width(34);

    RunConfig cfg;
    cfg.T = -1.0;
    cfg.nu1 = -1.0;
    cfg.nu2 = -1.0;
    std::vector<int> levels;
    std::string out_dir = "out";
    std::string snapshots;

    int k = 0;
    app.add_option("--k", k, "scheme order (2, 3, or 4)")->required()->check(CLI::Range(2, 4));
    app.add_option("--nc", cfg.nc, "cells per side (h = 1/nc)")->check(CLI::PositiveNumber);
    app.add_option("--T", cfg.T, "final time (default: case-specific)");
    app.add_option("--tau", cfg.tau, "time step (default: h)");
    app.add_option("--gamma0", cfg.gamma0, "interface penalty");
    app.add_option("--gamma1", cfg.gamma1, "pressure stabilization weight");
    app.add_option("--nu1", cfg.nu1, "viscosity of the enclosed phase");
    app.add_option("--nu2", cfg.nu2, "viscosity of the outer phase");
    app.add_option("--eta", cfg.eta, "marker segment size (default: 0.5 tau^max(1,k/3))");
    app.add_option("--case", cfg.case_id, "oseen-paper | steady-poly | tracking-only");
    app.add_option("--quad-order", cfg.quad_order, "volume quadrature order (default 2k+2)");
    app.add_option("--seed", cfg.seed, "seed stamp for sampled checks");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--snapshots", snapshots, "comma-separated interface snapshot times");
    app.add_option("--levels", levels, "convergence study: list of nc values (h = tau = 1/nc)");
    app.add_flag("--literal-interface-data", cfg.literal_interface_data,
                 "use the uncorrected interface source data (comparison mode)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        cfg.k = k;
        // case-specific defaults
        if (cfg.nu1 < 0 || cfg.nu2 < 0) {
            if (cfg.case_id == "steady-poly") {
                cfg.nu1 = cfg.nu1 < 0 ? 1.0 : cfg.nu1;
                cfg.nu2 = cfg.nu2 < 0 ? 1.0 : cfg.nu2;
            } else {
                cfg.nu1 = cfg.nu1 < 0 ? 1.0 : cfg.nu1;
                cfg.nu2 = cfg.nu2 < 0 ? 1e-3 : cfg.nu2;
            }
        }
        const ProblemCase probe = make_case(cfg.case_id, cfg.nu1, cfg.nu2);
        if (cfg.T <= 0.0) cfg.T = probe.default_T;
        if (!snapshots.empty()) {
            std::istringstream is(snapshots);
            std::string tok;
            while (std::getline(is, tok, ',')) cfg.snapshot_times.push_back(std::stod(tok));
        }

        const fs::path out(out_dir);
        if (!levels.empty()) {
            StudyResult study = convergence_study(cfg, levels);
            fs::create_directories(out);
            write_file(out / "eoc.txt", study.table.to_text());
            write_file(out / "eoc.csv", study.table.to_csv());
            for (size_t i = 0; i < study.runs.size(); ++i)
                write_run_artifacts(out / ("nc" + std::to_string(levels[i])), study.runs[i]);
            std::cout << study.table.to_text();
            for (const EocRow& row : study.table.rows)
                if (!row.ok) return 1;
            return 0;
        }

        for (const std::string& warning : cfg.finalize()) std::cerr << "warning: " << warning << "\n";
        TimeLoop loop(cfg, probe);
        RunResult res = loop.run();
        write_run_artifacts(out, res);
        std::cout << "case " << res.case_id << " k=" << res.k << " nc=" << res.nc
                  << " steps=" << res.steps << " config=" << std::hex << res.config_hash
                  << std::dec << "\n";
        if (probe.has_solution() && cfg.case_id != "tracking-only")
            std::cout << "e_u0=" << res.e_u0 << " e_u1=" << res.e_u1 << " e_p0=" << res.e_p0
                      << " e_p1=" << res.e_p1 << "\n";
        if (res.failed) {
            std::cerr << "run failed: " << res.failure << "\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
