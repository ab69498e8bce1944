#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <memory>

#include "cutoseen/fespace.hpp"
#include "cutoseen/quadrature.hpp"

namespace cutoseen {

/// Nitsche/ghost penalty parameters and the harmonic viscosity weights.
struct PenaltyParams {
    double gamma0 = 1e3;   // interface jump penalty
    double gamma1 = 1.0;   // residual/pressure stabilization, in (0,1]
    double nu1 = 1.0;
    double nu2 = 1e-3;

    double nu(int phase) const { return phase == 1 ? nu1 : nu2; }
    double kappa1() const { return nu2 / (nu1 + nu2); }
    double kappa2() const { return nu1 / (nu1 + nu2); }
    double kappa(int phase) const { return phase == 1 ? kappa1() : kappa2(); }
    /// <nu> = kappa1 nu1 + kappa2 nu2 = 2 nu1 nu2 / (nu1 + nu2).
    double nu_avg() const { return 2.0 * nu1 * nu2 / (nu1 + nu2); }

    void validate() const {
        if (!(nu2 > 0.0) || !(nu2 <= nu1)) throw Error("penalty params: need 0 < nu2 <= nu1");
        if (!(gamma0 > 0.0)) throw Error("penalty params: gamma0 must be positive");
        if (gamma1 < 0.0 || gamma1 > 1.0) throw Error("penalty params: gamma1 must be in [0,1]");
    }
};

/// BDF-k backwards differentiation coefficients: tau^-1 sum_j lambda_j u^{n-j}
/// approximates du/dt at t_n.
struct BDFScheme {
    int k = 2;
    std::array<double, 5> lambda{};

    static BDFScheme order(int k);
    /// Exact integer representation lambda_j = num[j] / den.
    static void exact_coefficients(int k, std::array<long, 5>& num, long& den);
};

struct SaddleSystem {
    SystemLayout layout;
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd rhs;
};

/// Momentum source with BDF history folded in:
/// G_i(x) = f_i(x) - tau^-1 sum_{j>=1} lambda_j U_i^{n-j,n}(x).
using PhaseSource = std::function<Vec2(int phase, const Vec2& x)>;

struct InterfaceData {
    /// velocity jump data g0 and flux jump data g1 on the interface
    std::function<Vec2(const Vec2& x, const Vec2& n)> g0;
    std::function<Vec2(const Vec2& x, const Vec2& n)> g1;
    /// include gamma0 <nu> h^-1 (g0, [v]) so the penalty sees the exact jump
    bool penalty_correction = true;
};

struct ProjectionData {
    std::function<Vec2(int phase, const Vec2& x)> u;
    std::function<Mat2(int phase, const Vec2& x)> grad_u;
    std::function<double(int phase, const Vec2& x)> p;
    bool f_mode_b0u = true; // f(q) = B0(u, q); otherwise f = 0
};

struct AssembleSpec {
    // matrix pieces
    double mass_coef = 0.0;     // tau^-1 lambda_0 on (u, v)
    bool stiffness = true;
    bool nitsche = true;        // F, J0 and the interface part of B0
    bool ghost_u = true;
    bool ghost_p = true;
    bool b0 = true;             // velocity/pressure coupling
    double stab_coef = 0.0;     // gamma1 nu2 h^2 on B1 and (nu^-1 grad p, grad q)
    bool constraint = true;     // nu^-1-weighted pressure mean via one multiplier

    // right-hand side
    PhaseSource source;              // may be null
    bool source_grad_q_moment = true;
    InterfaceData interface_data;    // members may be null
    ProjectionData projection;       // members null unless assembling the projection RHS
};

/// Prescribed boundary values for the phase-2 velocity (per active slot).
struct BoundaryValues {
    std::vector<double> u2x;
    std::vector<double> u2y;
};

SaddleSystem assemble_system(const StepSpace& space, const QuadratureSet& quad,
                             const PenaltyParams& params, const AssembleSpec& spec,
                             const BoundaryValues* bc = nullptr);

/// Direct solve of the assembled saddle system (sparse LU); returns the
/// relative residual achieved.
double solve_saddle(const SaddleSystem& system, Eigen::VectorXd& solution);

/// Unpack the solution vector into velocity/pressure field pairs (Dirichlet
/// slots filled from `bc`), returning the multiplier value.
double extract_fields(const Eigen::VectorXd& solution, std::shared_ptr<const StepSpace> space,
                      const BoundaryValues* bc, FieldPair& velocity, FieldPair& pressure);

/// --- single-operator assemblies over all-active slots (test surface) ---
/// Velocity indexing: [u1x u1y u2x u2y] over active slots (no Dirichlet folds);
/// pressure indexing: [p1 p2] over active slots.
Eigen::SparseMatrix<double> assemble_Ah(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params, bool include_ghost = true);
Eigen::SparseMatrix<double> assemble_B0(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params);
Eigen::SparseMatrix<double> assemble_Jp(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params);

/// --- bilinear forms evaluated on coefficient fields (oracle surface) ---
double form_mass(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad);
double form_stiffness(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
                      const PenaltyParams& params);
double form_F(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
              const PenaltyParams& params);
double form_J0(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
               const PenaltyParams& params);
double form_Ju(const FieldPair& u, const FieldPair& v, const PenaltyParams& params);
double form_Jp(const FieldPair& p, const FieldPair& q, const PenaltyParams& params);
double form_B0(const FieldPair& v, const FieldPair& q, const QuadratureSet& quad,
               const PenaltyParams& params);
double form_B1(const FieldPair& u, const FieldPair& q, const QuadratureSet& quad,
               const PenaltyParams& params, double mass_coef);
/// |||v|||^2 = ||nu^1/2 grad v||^2 + J0(v,v) + Ju(v,v).
double triple_norm_sq(const FieldPair& v, const QuadratureSet& quad, const PenaltyParams& params);

/// Coordinate-format dump (row col value per line) for debugging.
std::string matrix_coo_dump(const Eigen::SparseMatrix<double>& m);

} // namespace cutoseen
