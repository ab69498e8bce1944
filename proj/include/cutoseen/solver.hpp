#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>

#include "cutoseen/assembly.hpp"
#include "cutoseen/fespace.hpp"
#include "cutoseen/flowmap.hpp"
#include "cutoseen/geometry.hpp"
#include "cutoseen/quadrature.hpp"

namespace cutoseen {

struct RunConfig {
    int k = 3;
    int nc = 16;          // cells per side, h = 1/nc
    double tau = -1.0;    // default: h
    double T = 1.5;
    double gamma0 = 1e3;
    double gamma1 = 1.0;
    double nu1 = 1.0;
    double nu2 = 1e-3;
    double eta = -1.0;    // default: 0.5 tau^{max(1, k/3)}
    int quad_order = -1;  // default: 2k + 2
    int iface_npts = -1;  // default: k + 3
    std::string case_id = "oseen-paper";
    unsigned seed = 12345;
    std::vector<double> snapshot_times;
    /// Use the uncorrected interface data (flux jump scaled by nu1 alone and
    /// no penalty-term jump data). Kept for comparison runs; the default is
    /// the consistency-preserving variant.
    bool literal_interface_data = false;

    double h() const { return 1.0 / nc; }
    /// Fill defaulted fields and check ranges; warnings are returned, not printed.
    std::vector<std::string> finalize();
    std::string canonical() const;
    std::uint64_t hash() const { return fnv1a(canonical()); }
};

/// A complete problem instance: advection field, exact solution per phase,
/// body force, and the initial interface.
struct ProblemCase {
    std::string name;
    double nu1 = 1.0, nu2 = 1e-3;
    Vec2 disk_center{0.5, 0.75};
    double disk_radius = 0.15;
    double default_T = 1.5;

    VelocityField w;
    std::function<Vec2(int phase, const Vec2&, double t)> u;
    std::function<Mat2(int phase, const Vec2&, double t)> grad_u;
    std::function<double(int phase, const Vec2&, double t)> p;
    std::function<Vec2(int phase, const Vec2&, double t)> f;

    bool has_solution() const { return static_cast<bool>(u); }

    /// velocity jump u1 - u2 on the interface
    Vec2 g0(const Vec2& x, double t) const;
    /// flux jump nu1 dn u1 - nu2 dn u2 - (p1 - p2) n on the interface
    Vec2 g1(const Vec2& x, const Vec2& n, double t) const;
    /// nu1 dn(u1 - u2) - (p1 - p2) n
    Vec2 g1_literal(const Vec2& x, const Vec2& n, double t) const;
};

struct StepDiagnostics {
    int n = 0;
    double t = 0.0;
    double velocity_l2 = 0.0;
    double solver_residual = 0.0;
    int cut_cells = 0;
    double min_cut_fraction = 1.0;
    double mean_constraint = 0.0;
    double interface_area = 0.0;
};

struct RunResult {
    std::string case_id;
    std::uint64_t config_hash = 0;
    int k = 0, nc = 0, steps = 0;
    double e_u0 = 0.0, e_u1 = 0.0, e_p0 = 0.0, e_p1 = 0.0;
    bool failed = false;
    std::string failure;
    std::vector<StepDiagnostics> diagnostics;
    std::map<double, std::string> interface_csv; // snapshot time -> polyline CSV
    std::map<double, std::string> interface_svg;

    std::string to_json() const;
    std::string diagnostics_csv() const;
};

/// Modified Stokes projection of an analytic pair onto the step spaces.
struct StokesProjectionResult {
    FieldPair velocity;
    FieldPair pressure;
    double residual = 0.0;
    double multiplier = 0.0;
};

StokesProjectionResult stokes_projection(std::shared_ptr<const StepSpace> space,
                                         const QuadratureSet& quad, const PenaltyParams& params,
                                         const ProblemCase& prob, double t, bool f_mode_b0u);

/// Marches the coupled problem from pre-computed initial steps to T.
class TimeLoop {
public:
    TimeLoop(RunConfig config, ProblemCase prob);

    /// Runs the full loop; exceptions become a failure record in the result.
    RunResult run();

    /// Marker tracking only (Algorithm-style trace + refit + redistribute),
    /// no solves; exposes the chain for tracking-error studies.
    const MarkerChain& markers() const { return markers_; }
    const SplineInterface& spline() const { return spline_; }
    void track_one_step();
    int step() const { return n_; }
    double time() const { return n_ * cfg_.tau; }

private:
    struct StepState {
        std::shared_ptr<const StepSpace> space;
        QuadratureSet quad;
        FieldPair velocity;
        FieldPair pressure;
        double t = 0.0;
    };

    RunConfig cfg_;
    ProblemCase prob_;
    StructuredMesh mesh_;
    PenaltyParams params_;
    BDFScheme bdf_;
    FlowMapStack stack_;
    MarkerChain markers_;
    SplineInterface spline_;
    std::deque<StepState> ring_;
    int n_ = 0;

    StepState make_state(double t, bool interpolate_exact);
    BoundaryValues boundary_values(const StepSpace& space, double t) const;
    void solve_step(RunResult& result);
    void accumulate_errors(const StepState& state, RunResult& result, bool final_step);
    void accumulate_final_l2(const StepState& state, RunResult& result);
};

/// Pressure alignment constant: c with sum_i (p_i - c, nu_i^-1) = 0.
double pressure_mean_shift(const std::function<double(int, const Vec2&)>& p,
                           const QuadratureSet& quad, const PenaltyParams& params);

} // namespace cutoseen
