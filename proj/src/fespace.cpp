#include "cutoseen/fespace.hpp"

#include <algorithm>
#include <sstream>

namespace cutoseen {

TensorBasis::TensorBasis(int degree) : degree_(degree) {
    if (degree < 1 || degree > 4) throw Error("TensorBasis: degree must be in 1..4");
    switch (degree) {
        case 1: nodes_ = {0.0, 1.0}; break;
        case 2: nodes_ = {0.0, 0.5, 1.0}; break;
        case 3: {
            const double s = 1.0 / std::sqrt(5.0);
            nodes_ = {0.0, 0.5 * (1.0 - s), 0.5 * (1.0 + s), 1.0};
            break;
        }
        case 4: {
            const double s = std::sqrt(3.0 / 7.0);
            nodes_ = {0.0, 0.5 * (1.0 - s), 0.5, 0.5 * (1.0 + s), 1.0};
            break;
        }
    }
    // monomial coefficients of each Lagrange basis polynomial
    const int n = degree + 1;
    coeffs_.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        std::vector<long double> poly{1.0L};
        long double denom = 1.0L;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            // multiply by (x - nodes_[j])
            std::vector<long double> next(poly.size() + 1, 0.0L);
            for (size_t d = 0; d < poly.size(); ++d) {
                next[d + 1] += poly[d];
                next[d] -= poly[d] * static_cast<long double>(nodes_[j]);
            }
            poly = std::move(next);
            denom *= static_cast<long double>(nodes_[i] - nodes_[j]);
        }
        for (size_t d = 0; d < poly.size(); ++d)
            coeffs_[i][d] = static_cast<double>(poly[d] / denom);
    }
}

double TensorBasis::eval(int i, double x, int deriv) const {
    const int n = degree_ + 1;
    if (deriv > degree_) return 0.0;
    // differentiate monomial coefficients on the fly
    double acc = 0.0;
    for (int d = n - 1; d >= deriv; --d) {
        double fact = 1.0;
        for (int m = 0; m < deriv; ++m) fact *= (d - m);
        acc = acc * x + coeffs_[i][d] * fact;
    }
    return acc;
}

void TensorBasis::eval_all(double x, int deriv, double* out) const {
    for (int i = 0; i <= degree_; ++i) out[i] = eval(i, x, deriv);
}

Vec2 DofMap::node_position(const StructuredMesh& mesh, const TensorBasis& basis, int gx,
                           int gy) const {
    const double h = mesh.h();
    auto coord = [&](int g, double origin) {
        int cell = g / degree, a = g % degree;
        if (g == nodes_per_side - 1) {
            cell = cells - 1;
            a = degree;
        }
        return origin + (cell + basis.nodes()[a]) * h;
    };
    return {coord(gx, mesh.origin.x), coord(gy, mesh.origin.y)};
}

DofMap build_dof_map(const StructuredMesh& mesh, const Classification& c, const TensorBasis& basis,
                     int phase, bool dirichlet_on_boundary) {
    DofMap map;
    map.degree = basis.degree();
    map.cells = mesh.cells;
    map.nodes_per_side = map.degree * mesh.cells + 1;
    const int nn = map.nodes_per_side * map.nodes_per_side;
    map.active_of_global.assign(nn, -1);
    map.cell_in_cover.assign(mesh.cell_count(), 0);

    const int k = map.degree;
    for (int cell : c.cover_cells[phase - 1]) {
        map.cell_in_cover[cell] = 1;
        int ci, cj;
        mesh.cell_coords(cell, ci, cj);
        for (int b = 0; b <= k; ++b)
            for (int a = 0; a <= k; ++a) {
                const int g = map.global_node(ci * k + a, cj * k + b);
                if (map.active_of_global[g] < 0) {
                    map.active_of_global[g] = map.n_active++;
                    map.global_of_active.push_back(g);
                }
            }
    }
    map.sys_of_active.assign(map.n_active, -1);
    for (int slot = 0; slot < map.n_active; ++slot) {
        const int g = map.global_of_active[slot];
        const int gx = g % map.nodes_per_side, gy = g / map.nodes_per_side;
        const bool on_boundary = gx == 0 || gy == 0 || gx == map.nodes_per_side - 1 ||
                                 gy == map.nodes_per_side - 1;
        if (dirichlet_on_boundary && on_boundary)
            map.prescribed_slots.push_back(slot);
        else
            map.sys_of_active[slot] = map.n_free++;
    }
    map.cell_slots.assign(static_cast<size_t>(mesh.cell_count()) * (k + 1) * (k + 1), -1);
    for (int cell : c.cover_cells[phase - 1]) {
        int ci, cj;
        mesh.cell_coords(cell, ci, cj);
        for (int b = 0; b <= k; ++b)
            for (int a = 0; a <= k; ++a) {
                const int g = map.global_node(ci * k + a, cj * k + b);
                map.cell_slots[static_cast<size_t>(cell) * (k + 1) * (k + 1) + a + (k + 1) * b] =
                    map.active_of_global[g];
            }
    }
    return map;
}

StepSpace::StepSpace(const StructuredMesh& mesh_, int k_, Classification classification)
    : mesh(mesh_),
      k(k_),
      classify(std::move(classification)),
      vel_basis(k_),
      pres_basis(k_ - 1) {
    if (k < 2 || k > 4) throw Error("StepSpace: k must be 2, 3, or 4");
    vel[0] = build_dof_map(mesh, classify, vel_basis, 1, false);
    vel[1] = build_dof_map(mesh, classify, vel_basis, 2, true);
    pres[0] = build_dof_map(mesh, classify, pres_basis, 1, false);
    pres[1] = build_dof_map(mesh, classify, pres_basis, 2, false);

    layout.n1 = vel[0].n_active; // phase-1 velocity has no essential boundary
    layout.n2f = vel[1].n_free;
    layout.m1 = pres[0].n_active;
    layout.m2 = pres[1].n_active;
    layout.off_u1x = 0;
    layout.off_u1y = layout.n1;
    layout.off_u2x = 2 * layout.n1;
    layout.off_u2y = 2 * layout.n1 + layout.n2f;
    layout.off_p1 = 2 * layout.n1 + 2 * layout.n2f;
    layout.off_p2 = layout.off_p1 + layout.m1;
    layout.off_mu = layout.off_p2 + layout.m2;
    layout.total = layout.off_mu + 1;
}

std::shared_ptr<const StepSpace> make_step_space(const StructuredMesh& mesh, int k,
                                                 const SplineInterface* spline) {
    return std::make_shared<StepSpace>(mesh, k, classify(mesh, spline));
}

FieldPair::FieldPair(std::shared_ptr<const StepSpace> space, int components, bool velocity_space)
    : space_(std::move(space)), components_(components), velocity_(velocity_space) {
    for (int phase = 0; phase < 2; ++phase)
        for (int comp = 0; comp < components_; ++comp) {
            const DofMap& map = velocity_ ? space_->vel[phase] : space_->pres[phase];
            coef_[phase][comp].assign(map.n_active, 0.0);
        }
}

const DofMap& FieldPair::dofmap(int phase) const {
    return velocity_ ? space_->vel[phase - 1] : space_->pres[phase - 1];
}

double FieldPair::eval(int phase, int comp, const Vec2& x, int dx, int dy) const {
    const StructuredMesh& mesh = space_->mesh;
    if (!mesh.contains(x)) throw Error("FieldPair::eval: point outside the domain");
    const int cell = mesh.locate_cell(x);
    const DofMap& map = dofmap(phase);
    if (!map.cell_in_cover[cell]) return 0.0; // zero extension outside the cover
    return eval_on_cell(phase, comp, cell, x, dx, dy);
}

double FieldPair::eval_on_cell(int phase, int comp, int cell, const Vec2& x, int dx, int dy) const {
    const StructuredMesh& mesh = space_->mesh;
    const DofMap& map = dofmap(phase);
    const TensorBasis& basis = velocity_ ? space_->vel_basis : space_->pres_basis;
    const int k = map.degree;
    if (dx + dy > space_->k) throw Error("FieldPair::eval: derivative order exceeds k");
    int ci, cj;
    mesh.cell_coords(cell, ci, cj);
    const double h = mesh.h();
    const double xr = (x.x - mesh.origin.x) / h - ci;
    const double yr = (x.y - mesh.origin.y) / h - cj;
    double bx[5], by[5];
    basis.eval_all(xr, dx, bx);
    basis.eval_all(yr, dy, by);
    const int* slots = &map.cell_slots[static_cast<size_t>(cell) * (k + 1) * (k + 1)];
    const std::vector<double>& cf = coef_[phase - 1][comp];
    double acc = 0.0;
    for (int b = 0; b <= k; ++b) {
        if (by[b] == 0.0) continue;
        double row = 0.0;
        for (int a = 0; a <= k; ++a) {
            const int slot = slots[a + (k + 1) * b];
            if (slot >= 0) row += cf[slot] * bx[a];
        }
        acc += row * by[b];
    }
    const double scale = std::pow(1.0 / h, dx + dy);
    return acc * scale;
}

FieldPair interpolate_velocity(std::shared_ptr<const StepSpace> space, const VectorFn& f1,
                               const VectorFn& f2) {
    FieldPair out(space, 2, true);
    for (int phase = 1; phase <= 2; ++phase) {
        const DofMap& map = space->vel[phase - 1];
        const VectorFn& f = phase == 1 ? f1 : f2;
        for (int slot = 0; slot < map.n_active; ++slot) {
            const int g = map.global_of_active[slot];
            const Vec2 p = map.node_position(space->mesh, space->vel_basis, g % map.nodes_per_side,
                                             g / map.nodes_per_side);
            const Vec2 v = f(p);
            out.coeffs(phase, 0)[slot] = v.x;
            out.coeffs(phase, 1)[slot] = v.y;
        }
    }
    return out;
}

FieldPair interpolate_pressure(std::shared_ptr<const StepSpace> space, const ScalarFn& f1,
                               const ScalarFn& f2) {
    FieldPair out(space, 1, false);
    for (int phase = 1; phase <= 2; ++phase) {
        const DofMap& map = space->pres[phase - 1];
        const ScalarFn& f = phase == 1 ? f1 : f2;
        for (int slot = 0; slot < map.n_active; ++slot) {
            const int g = map.global_of_active[slot];
            const Vec2 p = map.node_position(space->mesh, space->pres_basis, g % map.nodes_per_side,
                                             g / map.nodes_per_side);
            out.coeffs(phase, 0)[slot] = f(p);
        }
    }
    return out;
}

Vec2 pullback_eval(const FieldPair& f, int phase, const Vec2& x, int m, int n,
                   const FlowMapStack& stack) {
    const Vec2 z = m == n ? x : stack.inverse(x, m, n);
    return f.eval_vec(phase, z);
}

Mat2 pullback_grad(const FieldPair& f, int phase, const Vec2& x, int m, int n,
                   const FlowMapStack& stack) {
    const Vec2 z = m == n ? x : stack.inverse(x, m, n);
    const Mat2 g = f.eval_grad(phase, z);
    if (m == n) return g;
    const Mat2 jf = stack.forward_jacobian(z, m, n);
    return g * jf.inverse();
}

WeightedNorms weighted_norms(const FieldPair& f, const QuadratureSet& quad, double w1, double w2) {
    WeightedNorms out;
    for (int phase = 1; phase <= 2; ++phase) {
        const double w = phase == 1 ? w1 : w2;
        for (const VolumeRule& rule : quad.volume(phase)) {
            for (size_t q = 0; q < rule.points.size(); ++q) {
                const Vec2& p = rule.points[q];
                double v2 = 0.0, g2 = 0.0;
                for (int comp = 0; comp < f.components(); ++comp) {
                    const double v = f.eval_on_cell(phase, comp, rule.element, p);
                    const double gx = f.eval_on_cell(phase, comp, rule.element, p, 1, 0);
                    const double gy = f.eval_on_cell(phase, comp, rule.element, p, 0, 1);
                    v2 += v * v;
                    g2 += gx * gx + gy * gy;
                }
                out.l2 += w * rule.weights[q] * v2;
                out.h1_semi += w * rule.weights[q] * g2;
            }
        }
    }
    out.l2 = std::sqrt(out.l2);
    out.h1_semi = std::sqrt(out.h1_semi);
    return out;
}

WeightedNorms weighted_diff_norms(const FieldPair& f,
                                  const std::function<double(int, int, const Vec2&)>& exact,
                                  const std::function<Vec2(int, int, const Vec2&)>& exact_grad,
                                  const QuadratureSet& quad, double w1, double w2) {
    WeightedNorms out;
    for (int phase = 1; phase <= 2; ++phase) {
        const double w = phase == 1 ? w1 : w2;
        for (const VolumeRule& rule : quad.volume(phase)) {
            for (size_t q = 0; q < rule.points.size(); ++q) {
                const Vec2& p = rule.points[q];
                double v2 = 0.0, g2 = 0.0;
                for (int comp = 0; comp < f.components(); ++comp) {
                    const double v =
                        f.eval_on_cell(phase, comp, rule.element, p) - exact(phase, comp, p);
                    const Vec2 eg = exact_grad(phase, comp, p);
                    const double gx = f.eval_on_cell(phase, comp, rule.element, p, 1, 0) - eg.x;
                    const double gy = f.eval_on_cell(phase, comp, rule.element, p, 0, 1) - eg.y;
                    v2 += v * v;
                    g2 += gx * gx + gy * gy;
                }
                out.l2 += w * rule.weights[q] * v2;
                out.h1_semi += w * rule.weights[q] * g2;
            }
        }
    }
    out.l2 = std::sqrt(out.l2);
    out.h1_semi = std::sqrt(out.h1_semi);
    return out;
}

std::string field_snapshot_csv(const FieldPair& f) {
    std::ostringstream os;
    os.precision(17);
    os << "phase,comp,gx,gy,x,y,value\n";
    const StepSpace& space = f.space();
    for (int phase = 1; phase <= 2; ++phase) {
        const DofMap& map = f.is_velocity() ? space.vel[phase - 1] : space.pres[phase - 1];
        const TensorBasis& basis = f.is_velocity() ? space.vel_basis : space.pres_basis;
        for (int comp = 0; comp < f.components(); ++comp) {
            for (int slot = 0; slot < map.n_active; ++slot) {
                const int g = map.global_of_active[slot];
                const int gx = g % map.nodes_per_side, gy = g / map.nodes_per_side;
                const Vec2 p = map.node_position(space.mesh, basis, gx, gy);
                os << phase << "," << comp << "," << gx << "," << gy << "," << p.x << "," << p.y
                   << "," << f.coeffs(phase, comp)[slot] << "\n";
            }
        }
    }
    return os.str();
}

} // namespace cutoseen
