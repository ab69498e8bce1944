#pragma once

#include <string>
#include <vector>

#include "cutoseen/solver.hpp"

namespace cutoseen {

/// Built-in cases: "oseen-paper" (deforming-interface benchmark),
/// "steady-poly" (stationary polynomial solution, exact for the discrete
/// spaces), "tracking-only" (no solution, marker tracking alone).
ProblemCase make_case(const std::string& id, double nu1, double nu2);

/// Rigid rotation about a center (unit angular velocity times omega).
VelocityField rotation_field(const Vec2& center, double omega);

/// Pointwise bundle of the case functions, mostly for inspection/bindings.
struct CasePoint {
    Vec2 u, f, w, g0, g1;
    double p = 0.0;
};
CasePoint emit_case_functions(const ProblemCase& c, int phase, const Vec2& x, double t,
                              const Vec2& normal);

struct EocRow {
    int nc = 0;
    double h = 0.0;
    double e_u0 = 0.0, e_u1 = 0.0, e_p0 = 0.0, e_p1 = 0.0;
    bool ok = false;
    std::string note;
};

struct EocTable {
    std::vector<EocRow> rows;

    std::string to_text() const;
    std::string to_csv() const;
    /// log2(coarse/fine) between consecutive successful rows; index 0 pairs
    /// rows[0]/rows[1]. NaN when undefined.
    std::vector<double> orders(double EocRow::*err) const;
};

struct StudyResult {
    EocTable table;
    std::vector<RunResult> runs;
};

/// Runs the halving sequence with h = tau = 1/nc per level.
StudyResult convergence_study(const RunConfig& base, const std::vector<int>& levels);

/// Interface-tracking accuracy: sup over curve parameters of the distance
/// between the tracked spline and a reference flow of the initial curve.
struct TrackingStudy {
    std::vector<double> taus;
    std::vector<double> sup_errors;
    double order = 0.0; // Richardson estimate from the finest pair
};
TrackingStudy tracking_order_study(int k, const std::vector<int>& levels, double T,
                                   const std::string& case_id = "oseen-paper");

} // namespace cutoseen
