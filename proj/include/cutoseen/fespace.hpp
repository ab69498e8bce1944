#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cutoseen/core.hpp"
#include "cutoseen/flowmap.hpp"
#include "cutoseen/mesh.hpp"
#include "cutoseen/quadrature.hpp"

namespace cutoseen {

/// 1D nodal basis at Gauss-Lobatto points on [0,1], degree 2..4, with
/// derivatives up to the degree.
class TensorBasis {
public:
    explicit TensorBasis(int degree);

    int degree() const { return degree_; }
    const std::vector<double>& nodes() const { return nodes_; }

    double eval(int i, double x, int deriv = 0) const;
    /// All basis values (or derivatives) at x.
    void eval_all(double x, int deriv, double* out) const;

private:
    int degree_ = 0;
    std::vector<double> nodes_;
    std::vector<std::vector<double>> coeffs_; // per basis, monomial coefficients
};

/// Scalar DOF map for one phase: tensor-product nodes of degree k over the
/// phase cover, with independent numbering per phase (doubling on cut cells).
/// Boundary nodes may be flagged as prescribed (Dirichlet).
struct DofMap {
    int degree = 0;
    int cells = 0;          // grid cells per side
    int nodes_per_side = 0; // degree * cells + 1
    int n_active = 0;
    int n_free = 0;

    std::vector<int> active_of_global; // -1 when the node is not in the cover
    std::vector<int> global_of_active;
    std::vector<int> sys_of_active;    // -1 for prescribed slots
    std::vector<int> prescribed_slots;
    std::vector<uint8_t> cell_in_cover;
    std::vector<int> cell_slots; // per cell, (degree+1)^2 active slots (-1 outside cover)

    int global_node(int gx, int gy) const { return gx + nodes_per_side * gy; }
    Vec2 node_position(const StructuredMesh& mesh, const TensorBasis& basis, int gx, int gy) const;
};

DofMap build_dof_map(const StructuredMesh& mesh, const Classification& c, const TensorBasis& basis,
                     int phase, bool dirichlet_on_boundary);

/// Unknown ordering of the coupled step system:
/// [u1x u1y u2x u2y p1 p2 mu].
struct SystemLayout {
    int n1 = 0;  // active scalar velocity slots, phase 1 (all free)
    int n2f = 0; // free scalar velocity slots, phase 2
    int m1 = 0, m2 = 0;
    int off_u1x = 0, off_u1y = 0, off_u2x = 0, off_u2y = 0, off_p1 = 0, off_p2 = 0, off_mu = 0;
    int total = 0;
};

/// Everything tied to one time step's geometry: classification, DOF maps for
/// the doubled Q_k / Q_{k-1} pair, and the coupled system layout.
struct StepSpace {
    StructuredMesh mesh;
    int k = 2;
    Classification classify;
    TensorBasis vel_basis;
    TensorBasis pres_basis;
    DofMap vel[2];
    DofMap pres[2];
    SystemLayout layout;

    StepSpace(const StructuredMesh& mesh_, int k_, Classification classification);
};

std::shared_ptr<const StepSpace> make_step_space(const StructuredMesh& mesh, int k,
                                                 const SplineInterface* spline);

/// Coefficient pair (f_1 on the phase-1 cover, f_2 on the phase-2 cover) with
/// the zero-extension convention outside each cover.
class FieldPair {
public:
    FieldPair() = default;
    FieldPair(std::shared_ptr<const StepSpace> space, int components, bool velocity_space);

    int components() const { return components_; }
    bool is_velocity() const { return velocity_; }
    const StepSpace& space() const { return *space_; }
    std::shared_ptr<const StepSpace> space_ptr() const { return space_; }

    std::vector<double>& coeffs(int phase, int comp) { return coef_[phase - 1][comp]; }
    const std::vector<double>& coeffs(int phase, int comp) const { return coef_[phase - 1][comp]; }

    /// Piecewise evaluation with derivative multi-index (dx, dy),
    /// dx + dy <= k; points outside the phase cover evaluate to zero.
    double eval(int phase, int comp, const Vec2& x, int dx = 0, int dy = 0) const;
    /// Evaluation of the polynomial of a specific element (for traces on
    /// element boundaries, where ownership would be ambiguous).
    double eval_on_cell(int phase, int comp, int cell, const Vec2& x, int dx = 0, int dy = 0) const;

    Vec2 eval_vec(int phase, const Vec2& x) const {
        return {eval(phase, 0, x), eval(phase, 1, x)};
    }
    Mat2 eval_grad(int phase, const Vec2& x) const {
        return {eval(phase, 0, x, 1, 0), eval(phase, 0, x, 0, 1),
                eval(phase, 1, x, 1, 0), eval(phase, 1, x, 0, 1)};
    }

private:
    std::shared_ptr<const StepSpace> space_;
    int components_ = 1;
    bool velocity_ = false;
    std::vector<double> coef_[2][2]; // [phase][component] over active slots

    const DofMap& dofmap(int phase) const;
};

using ScalarFn = std::function<double(const Vec2&)>;
using VectorFn = std::function<Vec2(const Vec2&)>;

/// Nodal interpolation of analytic data on each phase cover.
FieldPair interpolate_velocity(std::shared_ptr<const StepSpace> space, const VectorFn& f1,
                               const VectorFn& f2);
FieldPair interpolate_pressure(std::shared_ptr<const StepSpace> space, const ScalarFn& f1,
                               const ScalarFn& f2);

/// u_h^m composed with the inverse discrete flow map X^{n,m}; deriv = 1 gives
/// the pulled-back gradient via the chain rule with the inverse Jacobian.
Vec2 pullback_eval(const FieldPair& f, int phase, const Vec2& x, int m, int n,
                   const FlowMapStack& stack);
Mat2 pullback_grad(const FieldPair& f, int phase, const Vec2& x, int m, int n,
                   const FlowMapStack& stack);

struct WeightedNorms {
    double l2 = 0.0;
    double h1_semi = 0.0;
};

/// sqrt(sum_i w_i int |f_i|^2) and the gradient seminorm, with per-phase
/// weights (e.g. nu or 1/nu).
WeightedNorms weighted_norms(const FieldPair& f, const QuadratureSet& quad, double w1, double w2);

/// Same norms for f - g with analytic g (per phase, per component).
WeightedNorms weighted_diff_norms(const FieldPair& f,
                                  const std::function<double(int, int, const Vec2&)>& exact,
                                  const std::function<Vec2(int, int, const Vec2&)>& exact_grad,
                                  const QuadratureSet& quad, double w1, double w2);

/// Node values per phase on a structured grid (CSV) for external plotting.
std::string field_snapshot_csv(const FieldPair& f);

} // namespace cutoseen
