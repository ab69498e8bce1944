#include "cutoseen/assembly.hpp"

#ifdef CUTOSEEN_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include <algorithm>
#include <sstream>

namespace cutoseen {

BDFScheme BDFScheme::order(int k) {
    std::array<long, 5> num;
    long den;
    exact_coefficients(k, num, den);
    BDFScheme s;
    s.k = k;
    for (int j = 0; j <= k; ++j) s.lambda[j] = static_cast<double>(num[j]) / den;
    return s;
}

void BDFScheme::exact_coefficients(int k, std::array<long, 5>& num, long& den) {
    switch (k) {
        case 1: num = {1, -1, 0, 0, 0}; den = 1; break;
        case 2: num = {3, -4, 1, 0, 0}; den = 2; break;
        case 3: num = {11, -18, 9, -2, 0}; den = 6; break;
        case 4: num = {25, -48, 36, -16, 3}; den = 12; break;
        default: throw Error("BDF order must be 1..4");
    }
}

namespace {

constexpr int kMu = 2; // field ids: 0 velocity, 1 pressure, 2 multiplier

struct LocalTables {
    // 1D basis tables at the tensor-product Gauss points of uncut cells
    int nq = 0;
    GaussRule1D gauss;
    std::vector<double> bv, dbv, d2bv; // [g * (k+1) + a], velocity basis
    std::vector<double> bp, dbp;       // pressure basis

    // reference element matrices on a cell of size h (translation-invariant)
    int nv = 0, np = 0;
    std::vector<double> M, S;          // nv x nv
    std::vector<double> Dx, Dy;        // np x nv  : int d_c(v) q
    std::vector<double> RNx, RNy;      // np x nv  : int v d_c(q)
    std::vector<double> RLx, RLy;      // np x nv  : int lap(v) d_c(q)
    std::vector<double> Gp;            // np x np  : int grad p . grad q
    std::vector<double> cvec;          // np       : int q
};

LocalTables make_local_tables(const StepSpace& space, int order) {
    LocalTables t;
    const int k = space.k;
    t.nq = order / 2 + 2;
    t.gauss = gauss_legendre(t.nq);
    t.nv = (k + 1) * (k + 1);
    t.np = k * k;
    const int kv = k + 1, kp = k;
    t.bv.resize(t.nq * kv);
    t.dbv.resize(t.nq * kv);
    t.d2bv.resize(t.nq * kv);
    t.bp.resize(t.nq * kp);
    t.dbp.resize(t.nq * kp);
    for (int g = 0; g < t.nq; ++g) {
        space.vel_basis.eval_all(t.gauss.points[g], 0, &t.bv[g * kv]);
        space.vel_basis.eval_all(t.gauss.points[g], 1, &t.dbv[g * kv]);
        space.vel_basis.eval_all(t.gauss.points[g], 2, &t.d2bv[g * kv]);
        space.pres_basis.eval_all(t.gauss.points[g], 0, &t.bp[g * kp]);
        space.pres_basis.eval_all(t.gauss.points[g], 1, &t.dbp[g * kp]);
    }

    const double h = space.mesh.h();
    t.M.assign(t.nv * t.nv, 0.0);
    t.S.assign(t.nv * t.nv, 0.0);
    t.Dx.assign(t.np * t.nv, 0.0);
    t.Dy.assign(t.np * t.nv, 0.0);
    t.RNx.assign(t.np * t.nv, 0.0);
    t.RNy.assign(t.np * t.nv, 0.0);
    t.RLx.assign(t.np * t.nv, 0.0);
    t.RLy.assign(t.np * t.nv, 0.0);
    t.Gp.assign(t.np * t.np, 0.0);
    t.cvec.assign(t.np, 0.0);

    std::vector<double> Nv(t.nv), Gx(t.nv), Gy(t.nv), Lap(t.nv);
    std::vector<double> Np(t.np), Px(t.np), Py(t.np);
    for (int gi = 0; gi < t.nq; ++gi) {
        for (int gj = 0; gj < t.nq; ++gj) {
            const double w = t.gauss.weights[gi] * t.gauss.weights[gj] * h * h;
            for (int b = 0; b <= k; ++b)
                for (int a = 0; a <= k; ++a) {
                    const int ab = a + kv * b;
                    const double vx = t.bv[gi * kv + a], vy = t.bv[gj * kv + b];
                    Nv[ab] = vx * vy;
                    Gx[ab] = t.dbv[gi * kv + a] * vy / h;
                    Gy[ab] = vx * t.dbv[gj * kv + b] / h;
                    Lap[ab] = (t.d2bv[gi * kv + a] * vy + vx * t.d2bv[gj * kv + b]) / (h * h);
                }
            for (int b = 0; b < kp; ++b)
                for (int a = 0; a < kp; ++a) {
                    const int p = a + kp * b;
                    Np[p] = t.bp[gi * kp + a] * t.bp[gj * kp + b];
                    Px[p] = t.dbp[gi * kp + a] * t.bp[gj * kp + b] / h;
                    Py[p] = t.bp[gi * kp + a] * t.dbp[gj * kp + b] / h;
                }
            for (int i = 0; i < t.nv; ++i)
                for (int j = 0; j < t.nv; ++j) {
                    t.M[i * t.nv + j] += w * Nv[i] * Nv[j];
                    t.S[i * t.nv + j] += w * (Gx[i] * Gx[j] + Gy[i] * Gy[j]);
                }
            for (int p = 0; p < t.np; ++p)
                for (int j = 0; j < t.nv; ++j) {
                    t.Dx[p * t.nv + j] += w * Gx[j] * Np[p];
                    t.Dy[p * t.nv + j] += w * Gy[j] * Np[p];
                    t.RNx[p * t.nv + j] += w * Nv[j] * Px[p];
                    t.RNy[p * t.nv + j] += w * Nv[j] * Py[p];
                    t.RLx[p * t.nv + j] += w * Lap[j] * Px[p];
                    t.RLy[p * t.nv + j] += w * Lap[j] * Py[p];
                }
            for (int p = 0; p < t.np; ++p) {
                for (int q2 = 0; q2 < t.np; ++q2)
                    t.Gp[p * t.np + q2] += w * (Px[p] * Px[q2] + Py[p] * Py[q2]);
                t.cvec[p] += w * Np[p];
            }
        }
    }
    return t;
}

// jump penalty matrix over the two cells sharing an edge, all derivative
// orders summed with their h-weights; identical for every edge of the same
// orientation
std::vector<double> edge_penalty_matrix(const TensorBasis& basis, int l_max,
                                        const std::vector<double>& coef_l, bool vertical,
                                        double h, int gauss_pts) {
    const int k = basis.degree();
    const int n1 = k + 1, nloc = 2 * n1 * n1;
    std::vector<double> out(nloc * nloc, 0.0);
    const GaussRule1D g = gauss_legendre(gauss_pts);
    std::vector<double> tang(n1);
    std::vector<double> jump(nloc);
    for (int l = 1; l <= l_max; ++l) {
        const double hl = std::pow(h, -l);
        std::vector<double> trace_minus(n1), trace_plus(n1);
        for (int a = 0; a < n1; ++a) {
            trace_minus[a] = basis.eval(a, 1.0, l) * hl;  // minus cell sees the edge at xi=1
            trace_plus[a] = basis.eval(a, 0.0, l) * hl;
        }
        for (size_t q = 0; q < g.points.size(); ++q) {
            basis.eval_all(g.points[q], 0, tang.data());
            for (int side = 0; side < 2; ++side) {
                const double sgn = side == 0 ? 1.0 : -1.0; // [v] = v_minus - v_plus
                const std::vector<double>& tr = side == 0 ? trace_minus : trace_plus;
                for (int b = 0; b < n1; ++b)
                    for (int a = 0; a < n1; ++a) {
                        // vertical edge: normal derivative acts in x (index a)
                        const double v = vertical ? tr[a] * tang[b] : tang[a] * tr[b];
                        jump[side * n1 * n1 + a + n1 * b] = sgn * v;
                    }
            }
            const double w = g.weights[q] * h * coef_l[l];
            for (int i = 0; i < nloc; ++i) {
                if (jump[i] == 0.0) continue;
                const double wi = w * jump[i];
                for (int j = 0; j < nloc; ++j) out[i * nloc + j] += wi * jump[j];
            }
        }
    }
    return out;
}

struct PointBasis {
    double Nv[25], Gx[25], Gy[25], Lap[25];
    double Np[16], Px[16], Py[16];
};

void eval_point_basis(const StepSpace& space, int cell, const Vec2& x, PointBasis& pb) {
    const int k = space.k;
    int ci, cj;
    space.mesh.cell_coords(cell, ci, cj);
    const double h = space.mesh.h();
    const double xr = (x.x - space.mesh.origin.x) / h - ci;
    const double yr = (x.y - space.mesh.origin.y) / h - cj;
    double bx[5], by[5], dbx[5], dby[5], d2bx[5], d2by[5], px[4], py[4], dpx[4], dpy[4];
    space.vel_basis.eval_all(xr, 0, bx);
    space.vel_basis.eval_all(yr, 0, by);
    space.vel_basis.eval_all(xr, 1, dbx);
    space.vel_basis.eval_all(yr, 1, dby);
    space.vel_basis.eval_all(xr, 2, d2bx);
    space.vel_basis.eval_all(yr, 2, d2by);
    space.pres_basis.eval_all(xr, 0, px);
    space.pres_basis.eval_all(yr, 0, py);
    space.pres_basis.eval_all(xr, 1, dpx);
    space.pres_basis.eval_all(yr, 1, dpy);
    for (int b = 0; b <= k; ++b)
        for (int a = 0; a <= k; ++a) {
            const int ab = a + (k + 1) * b;
            pb.Nv[ab] = bx[a] * by[b];
            pb.Gx[ab] = dbx[a] * by[b] / h;
            pb.Gy[ab] = bx[a] * dby[b] / h;
            pb.Lap[ab] = (d2bx[a] * by[b] + bx[a] * d2by[b]) / (h * h);
        }
    for (int b = 0; b < k; ++b)
        for (int a = 0; a < k; ++a) {
            const int p = a + k * b;
            pb.Np[p] = px[a] * py[b];
            pb.Px[p] = dpx[a] * py[b] / h;
            pb.Py[p] = px[a] * dpy[b] / h;
        }
}

// Assembles every requested term, streaming matrix entries and rhs
// contributions through the sinks. Slot indices are active slots of the
// respective DofMap; fields: 0 velocity, 1 pressure, 2 multiplier (slot 0).
template <typename MatSink, typename RhsSink>
void assemble_core(const StepSpace& space, const QuadratureSet& quad, const PenaltyParams& params,
                   const AssembleSpec& spec, MatSink&& emit, RhsSink&& emit_rhs) {
    params.validate();
    const int k = space.k;
    const int kv = k + 1, kp = k;
    const int nv = kv * kv, np = kp * kp;
    const double h = space.mesh.h();
    const LocalTables tab = make_local_tables(space, quad.order);

    // --- volume terms ---
    std::vector<double> Mloc(nv * nv), Sloc(nv * nv), Dl[2], RNl[2], RLl[2], Gploc(np * np),
        cloc(np);
    Dl[0].resize(np * nv);
    Dl[1].resize(np * nv);
    RNl[0].resize(np * nv);
    RNl[1].resize(np * nv);
    RLl[0].resize(np * nv);
    RLl[1].resize(np * nv);

    for (int phase = 1; phase <= 2; ++phase) {
        const double nu_i = params.nu(phase);
        const double stab_i = spec.stab_coef / nu_i;
        for (const VolumeRule& rule : quad.volume(phase)) {
            if (rule.empty()) continue;
            const int cell = rule.element;
            const bool cut = space.classify.is_cut(cell);

            const double* M = tab.M.data();
            const double* S = tab.S.data();
            const double* Dx = tab.Dx.data();
            const double* Dy = tab.Dy.data();
            const double* RNx = tab.RNx.data();
            const double* RNy = tab.RNy.data();
            const double* RLx = tab.RLx.data();
            const double* RLy = tab.RLy.data();
            const double* Gploc_p = tab.Gp.data();
            const double* cvec = tab.cvec.data();

            if (cut) {
                std::fill(Mloc.begin(), Mloc.end(), 0.0);
                std::fill(Sloc.begin(), Sloc.end(), 0.0);
                for (int c = 0; c < 2; ++c) {
                    std::fill(Dl[c].begin(), Dl[c].end(), 0.0);
                    std::fill(RNl[c].begin(), RNl[c].end(), 0.0);
                    std::fill(RLl[c].begin(), RLl[c].end(), 0.0);
                }
                std::fill(Gploc.begin(), Gploc.end(), 0.0);
                std::fill(cloc.begin(), cloc.end(), 0.0);
                PointBasis pb;
                for (size_t q = 0; q < rule.points.size(); ++q) {
                    const double w = rule.weights[q];
                    eval_point_basis(space, cell, rule.points[q], pb);
                    for (int i = 0; i < nv; ++i)
                        for (int j = 0; j < nv; ++j) {
                            Mloc[i * nv + j] += w * pb.Nv[i] * pb.Nv[j];
                            Sloc[i * nv + j] += w * (pb.Gx[i] * pb.Gx[j] + pb.Gy[i] * pb.Gy[j]);
                        }
                    for (int p = 0; p < np; ++p)
                        for (int j = 0; j < nv; ++j) {
                            Dl[0][p * nv + j] += w * pb.Gx[j] * pb.Np[p];
                            Dl[1][p * nv + j] += w * pb.Gy[j] * pb.Np[p];
                            RNl[0][p * nv + j] += w * pb.Nv[j] * pb.Px[p];
                            RNl[1][p * nv + j] += w * pb.Nv[j] * pb.Py[p];
                            RLl[0][p * nv + j] += w * pb.Lap[j] * pb.Px[p];
                            RLl[1][p * nv + j] += w * pb.Lap[j] * pb.Py[p];
                        }
                    for (int p = 0; p < np; ++p) {
                        for (int q2 = 0; q2 < np; ++q2)
                            Gploc[p * np + q2] += w * (pb.Px[p] * pb.Px[q2] + pb.Py[p] * pb.Py[q2]);
                        cloc[p] += w * pb.Np[p];
                    }
                }
                M = Mloc.data();
                S = Sloc.data();
                Dx = Dl[0].data();
                Dy = Dl[1].data();
                RNx = RNl[0].data();
                RNy = RNl[1].data();
                RLx = RLl[0].data();
                RLy = RLl[1].data();
                Gploc_p = Gploc.data();
                cvec = cloc.data();
            }

            const int* vslots = &(space.vel[phase - 1]
                                      .cell_slots[static_cast<size_t>(cell) * nv]);
            const int* pslots = &(space.pres[phase - 1]
                                      .cell_slots[static_cast<size_t>(cell) * np]);

            // velocity-velocity: mass + stiffness (component diagonal)
            if (spec.mass_coef != 0.0 || spec.stiffness) {
                for (int i = 0; i < nv; ++i)
                    for (int j = 0; j < nv; ++j) {
                        double val = 0.0;
                        if (spec.mass_coef != 0.0) val += spec.mass_coef * M[i * nv + j];
                        if (spec.stiffness) val += nu_i * S[i * nv + j];
                        if (val == 0.0) continue;
                        for (int c = 0; c < 2; ++c)
                            emit(0, phase, c, vslots[i], 0, phase, c, vslots[j], val);
                    }
            }
            // velocity-pressure coupling (volume part of B0)
            if (spec.b0) {
                for (int p = 0; p < np; ++p)
                    for (int j = 0; j < nv; ++j) {
                        const double dx = Dx[p * nv + j], dy = Dy[p * nv + j];
                        // momentum row: B0(v, p) -> -(div v, p)
                        emit(0, phase, 0, vslots[j], 1, phase, 0, pslots[p], -dx);
                        emit(0, phase, 1, vslots[j], 1, phase, 0, pslots[p], -dy);
                        // pressure row: -B0(u, q) -> +(div u, q)
                        emit(1, phase, 0, pslots[p], 0, phase, 0, vslots[j], dx);
                        emit(1, phase, 0, pslots[p], 0, phase, 1, vslots[j], dy);
                    }
            }
            // residual stabilization B1 and pressure gradient term
            if (spec.stab_coef != 0.0) {
                for (int p = 0; p < np; ++p) {
                    for (int j = 0; j < nv; ++j) {
                        const double bx =
                            stab_i * (spec.mass_coef * RNx[p * nv + j] - nu_i * RLx[p * nv + j]);
                        const double by =
                            stab_i * (spec.mass_coef * RNy[p * nv + j] - nu_i * RLy[p * nv + j]);
                        emit(1, phase, 0, pslots[p], 0, phase, 0, vslots[j], bx);
                        emit(1, phase, 0, pslots[p], 0, phase, 1, vslots[j], by);
                    }
                    for (int q2 = 0; q2 < np; ++q2)
                        emit(1, phase, 0, pslots[p], 1, phase, 0, pslots[q2],
                             stab_i * Gploc_p[p * np + q2]);
                }
            }
            if (spec.constraint) {
                for (int p = 0; p < np; ++p) {
                    const double val = cvec[p] / nu_i;
                    emit(1, phase, 0, pslots[p], kMu, 0, 0, 0, val);
                    emit(kMu, 0, 0, 0, 1, phase, 0, pslots[p], val);
                }
            }

            // volume right-hand side
            const bool want_src = static_cast<bool>(spec.source);
            const bool want_proj = static_cast<bool>(spec.projection.u);
            if (want_src || want_proj) {
                PointBasis pb;
                for (size_t q = 0; q < rule.points.size(); ++q) {
                    const double w = rule.weights[q];
                    const Vec2& x = rule.points[q];
                    if (cut) {
                        eval_point_basis(space, cell, x, pb);
                    } else {
                        // tensor rule: q = gi * nq + gj
                        const int gi = static_cast<int>(q) / tab.nq;
                        const int gj = static_cast<int>(q) % tab.nq;
                        for (int b = 0; b <= k; ++b)
                            for (int a = 0; a <= k; ++a) {
                                const int ab = a + kv * b;
                                pb.Nv[ab] = tab.bv[gi * kv + a] * tab.bv[gj * kv + b];
                                pb.Gx[ab] = tab.dbv[gi * kv + a] * tab.bv[gj * kv + b] / h;
                                pb.Gy[ab] = tab.bv[gi * kv + a] * tab.dbv[gj * kv + b] / h;
                            }
                        for (int b = 0; b < kp; ++b)
                            for (int a = 0; a < kp; ++a) {
                                const int p = a + kp * b;
                                pb.Np[p] = tab.bp[gi * kp + a] * tab.bp[gj * kp + b];
                                pb.Px[p] = tab.dbp[gi * kp + a] * tab.bp[gj * kp + b] / h;
                                pb.Py[p] = tab.bp[gi * kp + a] * tab.dbp[gj * kp + b] / h;
                            }
                    }
                    if (want_src) {
                        const Vec2 G = spec.source(phase, x);
                        for (int j = 0; j < nv; ++j) {
                            emit_rhs(0, phase, 0, vslots[j], w * G.x * pb.Nv[j]);
                            emit_rhs(0, phase, 1, vslots[j], w * G.y * pb.Nv[j]);
                        }
                        if (spec.source_grad_q_moment && spec.stab_coef != 0.0) {
                            // sign fixed by consistency of the one-shot form
                            // with the split mass equation
                            for (int p = 0; p < np; ++p)
                                emit_rhs(1, phase, 0, pslots[p],
                                         stab_i * w * (G.x * pb.Px[p] + G.y * pb.Py[p]));
                        }
                    }
                    if (want_proj) {
                        const Mat2 gu = spec.projection.grad_u(phase, x);
                        const double pex = spec.projection.p(phase, x);
                        for (int j = 0; j < nv; ++j) {
                            // nu (grad u, grad v) - (div v, p)
                            emit_rhs(0, phase, 0, vslots[j],
                                     w * (nu_i * (gu.a11 * pb.Gx[j] + gu.a12 * pb.Gy[j]) -
                                          pex * pb.Gx[j]));
                            emit_rhs(0, phase, 1, vslots[j],
                                     w * (nu_i * (gu.a21 * pb.Gx[j] + gu.a22 * pb.Gy[j]) -
                                          pex * pb.Gy[j]));
                        }
                        if (spec.projection.f_mode_b0u) {
                            const double divu = gu.a11 + gu.a22;
                            for (int p = 0; p < np; ++p)
                                emit_rhs(1, phase, 0, pslots[p], w * divu * pb.Np[p]);
                        }
                    }
                }
            }
        }
    }

    // --- interface terms ---
    const double j0c = params.gamma0 * params.nu_avg() / h;
    const double kap[2] = {params.kappa1(), params.kappa2()};
    const double kap_flip[2] = {params.kappa2(), params.kappa1()};
    const double tsgn[2] = {1.0, -1.0};
    const double snu[2] = {params.kappa1() * params.nu1, params.kappa2() * params.nu2};
    if (spec.nitsche || spec.b0) {
        PointBasis pb;
        double Dn[25];
        for (const InterfaceRule& rule : quad.interface_) {
            if (rule.empty()) continue;
            const int cell = rule.element;
            const int* vs[2] = {&space.vel[0].cell_slots[static_cast<size_t>(cell) * nv],
                                &space.vel[1].cell_slots[static_cast<size_t>(cell) * nv]};
            const int* ps[2] = {&space.pres[0].cell_slots[static_cast<size_t>(cell) * np],
                                &space.pres[1].cell_slots[static_cast<size_t>(cell) * np]};
            for (size_t q = 0; q < rule.points.size(); ++q) {
                const double w = rule.weights[q];
                const Vec2& x = rule.points[q];
                const Vec2& n = rule.normals[q];
                eval_point_basis(space, cell, x, pb);
                for (int j = 0; j < nv; ++j) Dn[j] = pb.Gx[j] * n.x + pb.Gy[j] * n.y;

                if (spec.nitsche) {
                    for (int pu = 0; pu < 2; ++pu)
                        for (int pv = 0; pv < 2; ++pv) {
                            const double cF1 = -w * snu[pu] * tsgn[pv]; // -<nu dn u>.[v]
                            const double cF2 = -w * snu[pv] * tsgn[pu]; // -<nu dn v>.[u]
                            const double cJ0 = w * j0c * tsgn[pu] * tsgn[pv];
                            for (int i = 0; i < nv; ++i)
                                for (int j = 0; j < nv; ++j) {
                                    const double val =
                                        cF1 * Dn[j] * pb.Nv[i] + cF2 * Dn[i] * pb.Nv[j] +
                                        cJ0 * pb.Nv[j] * pb.Nv[i];
                                    if (val == 0.0) continue;
                                    for (int c = 0; c < 2; ++c)
                                        emit(0, pv + 1, c, vs[pv][i], 0, pu + 1, c, vs[pu][j], val);
                                }
                        }
                }
                if (spec.b0) {
                    for (int pv = 0; pv < 2; ++pv)
                        for (int pq = 0; pq < 2; ++pq) {
                            const double cB = w * tsgn[pv] * kap[pq]; // ([v].n) <q>
                            for (int i = 0; i < nv; ++i)
                                for (int p = 0; p < np; ++p) {
                                    const double base = cB * pb.Nv[i] * pb.Np[p];
                                    // momentum row: + B0(v, p)
                                    emit(0, pv + 1, 0, vs[pv][i], 1, pq + 1, 0, ps[pq][p],
                                         base * n.x);
                                    emit(0, pv + 1, 1, vs[pv][i], 1, pq + 1, 0, ps[pq][p],
                                         base * n.y);
                                    // pressure row: - B0(u, q)
                                    emit(1, pq + 1, 0, ps[pq][p], 0, pv + 1, 0, vs[pv][i],
                                         -base * n.x);
                                    emit(1, pq + 1, 0, ps[pq][p], 0, pv + 1, 1, vs[pv][i],
                                         -base * n.y);
                                }
                        }
                }

                const bool has_g = static_cast<bool>(spec.interface_data.g0) ||
                                   static_cast<bool>(spec.interface_data.g1);
                if (has_g) {
                    const Vec2 g0 = spec.interface_data.g0 ? spec.interface_data.g0(x, n)
                                                           : Vec2{0.0, 0.0};
                    const Vec2 g1 = spec.interface_data.g1 ? spec.interface_data.g1(x, n)
                                                           : Vec2{0.0, 0.0};
                    for (int pv = 0; pv < 2; ++pv) {
                        // g1.<<v>> - g0.<nu dn v> (+ penalty correction)
                        const double a_val = kap_flip[pv];
                        const double b_val = snu[pv];
                        const double c_val =
                            spec.interface_data.penalty_correction ? j0c * tsgn[pv] : 0.0;
                        for (int i = 0; i < nv; ++i) {
                            emit_rhs(0, pv + 1, 0, vs[pv][i],
                                     w * (g1.x * a_val * pb.Nv[i] - g0.x * b_val * Dn[i] +
                                          c_val * g0.x * pb.Nv[i]));
                            emit_rhs(0, pv + 1, 1, vs[pv][i],
                                     w * (g1.y * a_val * pb.Nv[i] - g0.y * b_val * Dn[i] +
                                          c_val * g0.y * pb.Nv[i]));
                        }
                    }
                    if (spec.b0) {
                        const double g0n = g0.dot(n);
                        for (int pq = 0; pq < 2; ++pq)
                            for (int p = 0; p < np; ++p)
                                emit_rhs(1, pq + 1, 0, ps[pq][p], -w * g0n * kap[pq] * pb.Np[p]);
                    }
                }
                if (spec.projection.u) {
                    const Vec2 u1 = spec.projection.u(1, x), u2 = spec.projection.u(2, x);
                    const Mat2 gu1 = spec.projection.grad_u(1, x), gu2 = spec.projection.grad_u(2, x);
                    const Vec2 ju{u1.x - u2.x, u1.y - u2.y};
                    const Vec2 dn1 = gu1 * n, dn2 = gu2 * n;
                    const Vec2 avg_flux = snu[0] * dn1 + snu[1] * dn2; // <nu dn u>
                    const double avg_p = kap[0] * spec.projection.p(1, x) +
                                         kap[1] * spec.projection.p(2, x);
                    for (int pv = 0; pv < 2; ++pv) {
                        for (int i = 0; i < nv; ++i) {
                            const double tv = tsgn[pv] * pb.Nv[i];
                            const double dv = snu[pv] * Dn[i];
                            emit_rhs(0, pv + 1, 0, vs[pv][i],
                                     w * (-avg_flux.x * tv - dv * ju.x + j0c * ju.x * tv +
                                          tv * n.x * avg_p));
                            emit_rhs(0, pv + 1, 1, vs[pv][i],
                                     w * (-avg_flux.y * tv - dv * ju.y + j0c * ju.y * tv +
                                          tv * n.y * avg_p));
                        }
                    }
                    if (spec.projection.f_mode_b0u) {
                        const double jun = ju.dot(n);
                        for (int pq = 0; pq < 2; ++pq)
                            for (int p = 0; p < np; ++p)
                                emit_rhs(1, pq + 1, 0, ps[pq][p], -w * jun * kap[pq] * pb.Np[p]);
                    }
                }
            }
        }
    }

    // --- ghost penalties ---
    if (spec.ghost_u || spec.ghost_p) {
        std::vector<double> coef_u(k + 1, 0.0), coef_p(k, 0.0);
        for (int l = 1; l <= k; ++l) {
            double fact = 1.0;
            for (int m = 2; m < l; ++m) fact *= m; // (l-1)!
            coef_u[l] = std::pow(h, 2 * l - 1) / (fact * fact);
        }
        for (int l = 1; l <= k - 1; ++l) {
            double fact = 1.0;
            for (int m = 2; m <= l; ++m) fact *= m; // l!
            coef_p[l] = std::pow(h, 2 * l + 1) / (fact * fact);
        }
        const int gp_pts = k + 2;
        std::vector<double> EDu_v, EDu_h, EDp_v, EDp_h;
        if (spec.ghost_u) {
            EDu_v = edge_penalty_matrix(space.vel_basis, k, coef_u, true, h, gp_pts);
            EDu_h = edge_penalty_matrix(space.vel_basis, k, coef_u, false, h, gp_pts);
        }
        if (spec.ghost_p && k >= 2) {
            EDp_v = edge_penalty_matrix(space.pres_basis, k - 1, coef_p, true, h, gp_pts);
            EDp_h = edge_penalty_matrix(space.pres_basis, k - 1, coef_p, false, h, gp_pts);
        }
        for (int phase = 1; phase <= 2; ++phase) {
            const double nu_i = params.nu(phase);
            for (const GridEdge& e : space.classify.ghost[phase - 1]) {
                if (spec.ghost_u) {
                    const std::vector<double>& ED = e.vertical ? EDu_v : EDu_h;
                    const int* sm = &space.vel[phase - 1]
                                         .cell_slots[static_cast<size_t>(e.cell_minus) * nv];
                    const int* sp = &space.vel[phase - 1]
                                         .cell_slots[static_cast<size_t>(e.cell_plus) * nv];
                    const int nloc = 2 * nv;
                    for (int i = 0; i < nloc; ++i) {
                        const int si = i < nv ? sm[i] : sp[i - nv];
                        for (int j = 0; j < nloc; ++j) {
                            const double val = nu_i * ED[i * nloc + j];
                            if (val == 0.0) continue;
                            const int sj = j < nv ? sm[j] : sp[j - nv];
                            for (int c = 0; c < 2; ++c)
                                emit(0, phase, c, si, 0, phase, c, sj, val);
                        }
                    }
                }
                if (spec.ghost_p && k >= 2) {
                    const std::vector<double>& ED = e.vertical ? EDp_v : EDp_h;
                    const int* sm = &space.pres[phase - 1]
                                         .cell_slots[static_cast<size_t>(e.cell_minus) * np];
                    const int* sp = &space.pres[phase - 1]
                                         .cell_slots[static_cast<size_t>(e.cell_plus) * np];
                    const int nloc = 2 * np;
                    for (int i = 0; i < nloc; ++i) {
                        const int si = i < np ? sm[i] : sp[i - np];
                        for (int j = 0; j < nloc; ++j) {
                            const double val = ED[i * nloc + j] / nu_i;
                            if (val == 0.0) continue;
                            const int sj = j < np ? sm[j] : sp[j - np];
                            emit(1, phase, 0, si, 1, phase, 0, sj, val);
                        }
                    }
                }
            }
        }
    }
}

} // namespace

SaddleSystem assemble_system(const StepSpace& space, const QuadratureSet& quad,
                             const PenaltyParams& params, const AssembleSpec& spec,
                             const BoundaryValues* bc) {
    const SystemLayout& L = space.layout;
    SaddleSystem sys;
    sys.layout = L;
    sys.rhs = Eigen::VectorXd::Zero(L.total);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(1 << 20);

    auto sys_index = [&](int field, int phase, int comp, int slot) -> int {
        if (field == kMu) return L.off_mu;
        if (field == 0) {
            if (phase == 1) {
                const int s = space.vel[0].sys_of_active[slot];
                return (comp == 0 ? L.off_u1x : L.off_u1y) + s;
            }
            const int s = space.vel[1].sys_of_active[slot];
            if (s < 0) return -1; // prescribed
            return (comp == 0 ? L.off_u2x : L.off_u2y) + s;
        }
        return (phase == 1 ? L.off_p1 : L.off_p2) + slot;
    };
    auto dirichlet_value = [&](int comp, int slot) -> double {
        if (!bc) return 0.0;
        return comp == 0 ? bc->u2x[slot] : bc->u2y[slot];
    };

    assemble_core(
        space, quad, params, spec,
        [&](int fr, int pr, int cr, int sr, int fc, int pc, int cc, int sc, double val) {
            const int row = sys_index(fr, pr, cr, sr);
            if (row < 0) return;
            const int col = sys_index(fc, pc, cc, sc);
            if (col < 0) {
                sys.rhs[row] -= val * dirichlet_value(cc, sc);
                return;
            }
            trips.emplace_back(row, col, val);
        },
        [&](int fr, int pr, int cr, int sr, double val) {
            const int row = sys_index(fr, pr, cr, sr);
            if (row >= 0) sys.rhs[row] += val;
        });

    if (!spec.constraint) trips.emplace_back(L.off_mu, L.off_mu, 1.0);
    sys.matrix.resize(L.total, L.total);
    sys.matrix.setFromTriplets(trips.begin(), trips.end());
    return sys;
}

double solve_saddle(const SaddleSystem& system, Eigen::VectorXd& solution) {
#ifdef CUTOSEEN_HAVE_UMFPACK
    Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(system.matrix);
#else
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(system.matrix);
    lu.factorize(system.matrix);
#endif
    if (lu.info() != Eigen::Success)
        throw Error("solve_saddle: factorization failed (singular system)");
    solution = lu.solve(system.rhs);
    const double denom = std::max(system.rhs.norm(), 1e-300);
    return (system.matrix * solution - system.rhs).norm() / denom;
}

double extract_fields(const Eigen::VectorXd& solution, std::shared_ptr<const StepSpace> space,
                      const BoundaryValues* bc, FieldPair& velocity, FieldPair& pressure) {
    const SystemLayout& L = space->layout;
    velocity = FieldPair(space, 2, true);
    pressure = FieldPair(space, 1, false);
    for (int slot = 0; slot < space->vel[0].n_active; ++slot) {
        velocity.coeffs(1, 0)[slot] = solution[L.off_u1x + space->vel[0].sys_of_active[slot]];
        velocity.coeffs(1, 1)[slot] = solution[L.off_u1y + space->vel[0].sys_of_active[slot]];
    }
    for (int slot = 0; slot < space->vel[1].n_active; ++slot) {
        const int s = space->vel[1].sys_of_active[slot];
        if (s < 0) {
            velocity.coeffs(2, 0)[slot] = bc ? bc->u2x[slot] : 0.0;
            velocity.coeffs(2, 1)[slot] = bc ? bc->u2y[slot] : 0.0;
        } else {
            velocity.coeffs(2, 0)[slot] = solution[L.off_u2x + s];
            velocity.coeffs(2, 1)[slot] = solution[L.off_u2y + s];
        }
    }
    for (int slot = 0; slot < space->pres[0].n_active; ++slot)
        pressure.coeffs(1, 0)[slot] = solution[L.off_p1 + slot];
    for (int slot = 0; slot < space->pres[1].n_active; ++slot)
        pressure.coeffs(2, 0)[slot] = solution[L.off_p2 + slot];
    return solution[L.off_mu];
}

namespace {

// all-active indexing used by the single-operator test assemblies
struct AllActiveIndex {
    const StepSpace& space;
    int vel_total() const { return 2 * (space.vel[0].n_active + space.vel[1].n_active); }
    int pres_total() const { return space.pres[0].n_active + space.pres[1].n_active; }
    int vel(int phase, int comp, int slot) const {
        const int n1 = space.vel[0].n_active, n2 = space.vel[1].n_active;
        return phase == 1 ? comp * n1 + slot : 2 * n1 + comp * n2 + slot;
    }
    int pres(int phase, int slot) const {
        return phase == 1 ? slot : space.pres[0].n_active + slot;
    }
};

} // namespace

Eigen::SparseMatrix<double> assemble_Ah(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params, bool include_ghost) {
    AssembleSpec spec;
    spec.stiffness = true;
    spec.nitsche = true;
    spec.ghost_u = include_ghost;
    spec.ghost_p = false;
    spec.b0 = false;
    spec.constraint = false;
    AllActiveIndex idx{space};
    std::vector<Eigen::Triplet<double>> trips;
    assemble_core(
        space, quad, params, spec,
        [&](int fr, int pr, int cr, int sr, int fc, int pc, int cc, int sc, double val) {
            if (fr != 0 || fc != 0) return;
            trips.emplace_back(idx.vel(pr, cr, sr), idx.vel(pc, cc, sc), val);
        },
        [](int, int, int, int, double) {});
    Eigen::SparseMatrix<double> m(idx.vel_total(), idx.vel_total());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

Eigen::SparseMatrix<double> assemble_B0(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params) {
    AssembleSpec spec;
    spec.stiffness = false;
    spec.nitsche = false;
    spec.ghost_u = false;
    spec.ghost_p = false;
    spec.b0 = true;
    spec.constraint = false;
    AllActiveIndex idx{space};
    std::vector<Eigen::Triplet<double>> trips;
    assemble_core(
        space, quad, params, spec,
        [&](int fr, int pr, int cr, int sr, int fc, int pc, int cc, int sc, double val) {
            // collect the pressure-row block, which carries -B0(u, q)
            if (fr != 1 || fc != 0) return;
            trips.emplace_back(idx.pres(pr, sr), idx.vel(pc, cc, sc), -val);
        },
        [](int, int, int, int, double) {});
    Eigen::SparseMatrix<double> m(idx.pres_total(), idx.vel_total());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

Eigen::SparseMatrix<double> assemble_Jp(const StepSpace& space, const QuadratureSet& quad,
                                        const PenaltyParams& params) {
    AssembleSpec spec;
    spec.stiffness = false;
    spec.nitsche = false;
    spec.ghost_u = false;
    spec.ghost_p = true;
    spec.b0 = false;
    spec.constraint = false;
    AllActiveIndex idx{space};
    std::vector<Eigen::Triplet<double>> trips;
    assemble_core(
        space, quad, params, spec,
        [&](int fr, int pr, int cr, int sr, int fc, int pc, int cc, int sc, double val) {
            if (fr != 1 || fc != 1) return;
            trips.emplace_back(idx.pres(pr, sr), idx.pres(pc, sc), val);
        },
        [](int, int, int, int, double) {});
    Eigen::SparseMatrix<double> m(idx.pres_total(), idx.pres_total());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

double form_mass(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad) {
    double acc = 0.0;
    for (int phase = 1; phase <= 2; ++phase)
        for (const VolumeRule& rule : quad.volume(phase))
            for (size_t q = 0; q < rule.points.size(); ++q)
                for (int c = 0; c < u.components(); ++c)
                    acc += rule.weights[q] * u.eval_on_cell(phase, c, rule.element, rule.points[q]) *
                           v.eval_on_cell(phase, c, rule.element, rule.points[q]);
    return acc;
}

double form_stiffness(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
                      const PenaltyParams& params) {
    double acc = 0.0;
    for (int phase = 1; phase <= 2; ++phase) {
        const double nu_i = params.nu(phase);
        for (const VolumeRule& rule : quad.volume(phase))
            for (size_t q = 0; q < rule.points.size(); ++q)
                for (int c = 0; c < u.components(); ++c) {
                    const double ux = u.eval_on_cell(phase, c, rule.element, rule.points[q], 1, 0);
                    const double uy = u.eval_on_cell(phase, c, rule.element, rule.points[q], 0, 1);
                    const double vx = v.eval_on_cell(phase, c, rule.element, rule.points[q], 1, 0);
                    const double vy = v.eval_on_cell(phase, c, rule.element, rule.points[q], 0, 1);
                    acc += rule.weights[q] * nu_i * (ux * vx + uy * vy);
                }
    }
    return acc;
}

namespace {

Vec2 iface_avg_flux(const FieldPair& u, int cell, const Vec2& x, const Vec2& n,
                    const PenaltyParams& params) {
    Vec2 out;
    for (int phase = 1; phase <= 2; ++phase) {
        const double s = params.kappa(phase) * params.nu(phase);
        for (int c = 0; c < 2; ++c) {
            const double dn = u.eval_on_cell(phase, c, cell, x, 1, 0) * n.x +
                              u.eval_on_cell(phase, c, cell, x, 0, 1) * n.y;
            (c == 0 ? out.x : out.y) += s * dn;
        }
    }
    return out;
}

} // namespace

double form_F(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
              const PenaltyParams& params) {
    double acc = 0.0;
    for (const InterfaceRule& rule : quad.interface_) {
        for (size_t q = 0; q < rule.points.size(); ++q) {
            const Vec2& x = rule.points[q];
            const Vec2& n = rule.normals[q];
            const Vec2 fu = iface_avg_flux(u, rule.element, x, n, params);
            const Vec2 fv = iface_avg_flux(v, rule.element, x, n, params);
            Vec2 ju, jv;
            for (int c = 0; c < 2; ++c) {
                const double j1 = u.eval_on_cell(1, c, rule.element, x) -
                                  u.eval_on_cell(2, c, rule.element, x);
                const double j2 = v.eval_on_cell(1, c, rule.element, x) -
                                  v.eval_on_cell(2, c, rule.element, x);
                (c == 0 ? ju.x : ju.y) = j1;
                (c == 0 ? jv.x : jv.y) = j2;
            }
            acc += rule.weights[q] * (fu.dot(jv) + fv.dot(ju));
        }
    }
    return acc;
}

double form_J0(const FieldPair& u, const FieldPair& v, const QuadratureSet& quad,
               const PenaltyParams& params) {
    const double h = u.space().mesh.h();
    double acc = 0.0;
    for (const InterfaceRule& rule : quad.interface_) {
        for (size_t q = 0; q < rule.points.size(); ++q) {
            const Vec2& x = rule.points[q];
            double dot = 0.0;
            for (int c = 0; c < 2; ++c) {
                const double j1 = u.eval_on_cell(1, c, rule.element, x) -
                                  u.eval_on_cell(2, c, rule.element, x);
                const double j2 = v.eval_on_cell(1, c, rule.element, x) -
                                  v.eval_on_cell(2, c, rule.element, x);
                dot += j1 * j2;
            }
            acc += rule.weights[q] * dot;
        }
    }
    return params.gamma0 * params.nu_avg() / h * acc;
}

namespace {

double ghost_form(const FieldPair& u, const FieldPair& v, const PenaltyParams& params,
                  bool velocity) {
    const StepSpace& space = u.space();
    const StructuredMesh& mesh = space.mesh;
    const double h = mesh.h();
    const int k = space.k;
    const int l_max = velocity ? k : k - 1;
    double acc = 0.0;
    for (int phase = 1; phase <= 2; ++phase) {
        const double nu_f = velocity ? params.nu(phase) : 1.0 / params.nu(phase);
        for (const GridEdge& e : space.classify.ghost[phase - 1]) {
            const EdgeRule rule = build_edge_rule(mesh, e, k + 2);
            for (int l = 1; l <= l_max; ++l) {
                double fact = 1.0;
                if (velocity)
                    for (int m = 2; m < l; ++m) fact *= m;
                else
                    for (int m = 2; m <= l; ++m) fact *= m;
                const double coef = velocity ? std::pow(h, 2 * l - 1) / (fact * fact)
                                             : std::pow(h, 2 * l + 1) / (fact * fact);
                const int dx = e.vertical ? l : 0, dy = e.vertical ? 0 : l;
                for (size_t q = 0; q < rule.points.size(); ++q) {
                    const Vec2& x = rule.points[q];
                    double dot = 0.0;
                    for (int c = 0; c < u.components(); ++c) {
                        const double ju = u.eval_on_cell(phase, c, e.cell_minus, x, dx, dy) -
                                          u.eval_on_cell(phase, c, e.cell_plus, x, dx, dy);
                        const double jv = v.eval_on_cell(phase, c, e.cell_minus, x, dx, dy) -
                                          v.eval_on_cell(phase, c, e.cell_plus, x, dx, dy);
                        dot += ju * jv;
                    }
                    acc += nu_f * coef * rule.weights[q] * dot;
                }
            }
        }
    }
    return acc;
}

} // namespace

double form_Ju(const FieldPair& u, const FieldPair& v, const PenaltyParams& params) {
    return ghost_form(u, v, params, true);
}

double form_Jp(const FieldPair& p, const FieldPair& q, const PenaltyParams& params) {
    return ghost_form(p, q, params, false);
}

double form_B0(const FieldPair& v, const FieldPair& q, const QuadratureSet& quad,
               const PenaltyParams& params) {
    double acc = 0.0;
    for (int phase = 1; phase <= 2; ++phase)
        for (const VolumeRule& rule : quad.volume(phase))
            for (size_t qq = 0; qq < rule.points.size(); ++qq) {
                const double divv =
                    v.eval_on_cell(phase, 0, rule.element, rule.points[qq], 1, 0) +
                    v.eval_on_cell(phase, 1, rule.element, rule.points[qq], 0, 1);
                acc -= rule.weights[qq] * divv *
                       q.eval_on_cell(phase, 0, rule.element, rule.points[qq]);
            }
    for (const InterfaceRule& rule : quad.interface_)
        for (size_t qq = 0; qq < rule.points.size(); ++qq) {
            const Vec2& x = rule.points[qq];
            const Vec2& n = rule.normals[qq];
            double jvn = 0.0;
            for (int c = 0; c < 2; ++c)
                jvn += (v.eval_on_cell(1, c, rule.element, x) -
                        v.eval_on_cell(2, c, rule.element, x)) * (c == 0 ? n.x : n.y);
            const double avg_q = params.kappa1() * q.eval_on_cell(1, 0, rule.element, x) +
                                 params.kappa2() * q.eval_on_cell(2, 0, rule.element, x);
            acc += rule.weights[qq] * jvn * avg_q;
        }
    return acc;
}

double form_B1(const FieldPair& u, const FieldPair& q, const QuadratureSet& quad,
               const PenaltyParams& params, double mass_coef) {
    double acc = 0.0;
    for (int phase = 1; phase <= 2; ++phase) {
        const double nu_i = params.nu(phase);
        for (const VolumeRule& rule : quad.volume(phase))
            for (size_t qq = 0; qq < rule.points.size(); ++qq) {
                const Vec2& x = rule.points[qq];
                double dot = 0.0;
                for (int c = 0; c < 2; ++c) {
                    const double lap = u.eval_on_cell(phase, c, rule.element, x, 2, 0) +
                                       u.eval_on_cell(phase, c, rule.element, x, 0, 2);
                    const double r = mass_coef * u.eval_on_cell(phase, c, rule.element, x) -
                                     nu_i * lap;
                    const double gq = c == 0 ? q.eval_on_cell(phase, 0, rule.element, x, 1, 0)
                                             : q.eval_on_cell(phase, 0, rule.element, x, 0, 1);
                    dot += r * gq;
                }
                acc += rule.weights[qq] * dot / nu_i;
            }
    }
    return acc;
}

double triple_norm_sq(const FieldPair& v, const QuadratureSet& quad, const PenaltyParams& params) {
    return form_stiffness(v, v, quad, params) + form_J0(v, v, quad, params) +
           form_Ju(v, v, params);
}

std::string matrix_coo_dump(const Eigen::SparseMatrix<double>& m) {
    std::ostringstream os;
    os.precision(17);
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
            os << it.row() << " " << it.col() << " " << it.value() << "\n";
    return os.str();
}

} // namespace cutoseen
