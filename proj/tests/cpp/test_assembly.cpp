#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "cutoseen/assembly.hpp"
#include "cutoseen/harness.hpp"

using namespace cutoseen;

namespace {

StructuredMesh unit_mesh(int n) {
    StructuredMesh m;
    m.cells = n;
    return m;
}

struct World {
    StructuredMesh mesh;
    SplineInterface spline;
    std::shared_ptr<const StepSpace> space;
    QuadratureSet quad;
    PenaltyParams params;
};

World make_world(int n, int k, double nu2 = 1e-3, int J = 96) {
    World w{unit_mesh(n), fit_periodic_spline(circle_markers({0.5, 0.75}, 0.15, J)), nullptr, {},
            {}};
    w.space = make_step_space(w.mesh, k, &w.spline);
    w.quad = build_quadrature(w.mesh, &w.spline, w.space->classify, 2 * k + 2, k + 3);
    w.params.nu2 = nu2;
    return w;
}

FieldPair random_velocity(std::shared_ptr<const StepSpace> space, unsigned seed) {
    FieldPair f(space, 2, true);
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int phase = 1; phase <= 2; ++phase)
        for (int c = 0; c < 2; ++c)
            for (double& v : f.coeffs(phase, c)) v = gauss(rng);
    return f;
}

FieldPair random_pressure(std::shared_ptr<const StepSpace> space, unsigned seed) {
    FieldPair f(space, 1, false);
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int phase = 1; phase <= 2; ++phase)
        for (double& v : f.coeffs(phase, 0)) v = gauss(rng);
    return f;
}

Eigen::VectorXd velocity_coeffs_all(const StepSpace& space, const FieldPair& f) {
    const int n1 = space.vel[0].n_active, n2 = space.vel[1].n_active;
    Eigen::VectorXd x(2 * (n1 + n2));
    for (int c = 0; c < 2; ++c) {
        for (int s = 0; s < n1; ++s) x[c * n1 + s] = f.coeffs(1, c)[s];
        for (int s = 0; s < n2; ++s) x[2 * n1 + c * n2 + s] = f.coeffs(2, c)[s];
    }
    return x;
}

Eigen::VectorXd pressure_coeffs_all(const StepSpace& space, const FieldPair& f) {
    const int m1 = space.pres[0].n_active, m2 = space.pres[1].n_active;
    Eigen::VectorXd x(m1 + m2);
    for (int s = 0; s < m1; ++s) x[s] = f.coeffs(1, 0)[s];
    for (int s = 0; s < m2; ++s) x[m1 + s] = f.coeffs(2, 0)[s];
    return x;
}

} // namespace

TEST_CASE("harmonic weights identity") {
    PenaltyParams p;
    p.nu1 = 1.0;
    p.nu2 = 1e-3;
    CHECK(p.kappa1() + p.kappa2() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.kappa1() * p.nu1 == doctest::Approx(p.kappa2() * p.nu2).epsilon(1e-15));
    CHECK(p.kappa1() * p.nu1 == doctest::Approx(9.99000999000999e-4).epsilon(1e-12));
    CHECK(p.nu_avg() == doctest::Approx(2.0 * 9.99000999000999e-4).epsilon(1e-12));
    PenaltyParams bad;
    bad.nu2 = 2.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("magic formula holds at every interface quadrature point") {
    const World w = make_world(16, 2);
    std::mt19937 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double k1 = w.params.kappa1(), k2 = w.params.kappa2();
    for (const InterfaceRule& rule : w.quad.interface_) {
        for (size_t q = 0; q < rule.points.size(); ++q) {
            const double a1 = gauss(rng), a2 = gauss(rng), b1 = gauss(rng), b2 = gauss(rng);
            const double jump_ab = a1 * b1 - a2 * b2;
            const double split = (a1 - a2) * (k1 * b1 + k2 * b2) + (b1 - b2) * (k2 * a1 + k1 * a2);
            CHECK(jump_ab == doctest::Approx(split).epsilon(1e-12));
        }
    }
}

TEST_CASE("A_h is symmetric and matches the form evaluation") {
    const World w = make_world(16, 2);
    const Eigen::SparseMatrix<double> A = assemble_Ah(*w.space, w.quad, w.params);
    const Eigen::SparseMatrix<double> At = Eigen::SparseMatrix<double>(A.transpose());
    double asym = 0.0;
    for (int c = 0; c < A.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, c), jt(At, c); it && jt;
             ++it, ++jt)
            asym = std::max(asym, std::abs(it.value() - jt.value()));
    CHECK(asym < 1e-12 * w.params.gamma0);

    const FieldPair u = random_velocity(w.space, 1);
    const FieldPair v = random_velocity(w.space, 2);
    const double via_matrix =
        velocity_coeffs_all(*w.space, v).dot(A * velocity_coeffs_all(*w.space, u));
    const double via_forms = form_stiffness(u, v, w.quad, w.params) -
                             form_F(u, v, w.quad, w.params) + form_J0(u, v, w.quad, w.params) +
                             form_Ju(u, v, w.params);
    CHECK(via_matrix == doctest::Approx(via_forms).epsilon(1e-10));
}

TEST_CASE("single-phase A_h equals a plain Q_k stiffness oracle") {
    // no interface, nu1 = nu2 = 1: the operator reduces to the standard
    // stiffness matrix, assembled here independently
    const StructuredMesh mesh = unit_mesh(4);
    const int k = 2;
    auto space = make_step_space(mesh, k, nullptr);
    const QuadratureSet quad = build_quadrature(mesh, nullptr, space->classify, 2 * k + 2, k + 3);
    PenaltyParams params;
    params.nu1 = params.nu2 = 1.0;
    const Eigen::SparseMatrix<double> A = assemble_Ah(*space, quad, params);

    const TensorBasis basis(k);
    const DofMap& map = space->vel[1];
    const int n2 = map.n_active;
    Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(n2, n2);
    const GaussRule1D g = gauss_legendre(k + 2);
    const double h = mesh.h();
    for (int cell = 0; cell < mesh.cell_count(); ++cell) {
        const int* slots = &map.cell_slots[cell * (k + 1) * (k + 1)];
        for (size_t gi = 0; gi < g.points.size(); ++gi)
            for (size_t gj = 0; gj < g.points.size(); ++gj) {
                const double wq = g.weights[gi] * g.weights[gj] * h * h;
                for (int b = 0; b <= k; ++b)
                    for (int a = 0; a <= k; ++a)
                        for (int d = 0; d <= k; ++d)
                            for (int c2 = 0; c2 <= k; ++c2) {
                                const double gx1 = basis.eval(a, g.points[gi], 1) *
                                                   basis.eval(b, g.points[gj]) / h;
                                const double gy1 = basis.eval(a, g.points[gi]) *
                                                   basis.eval(b, g.points[gj], 1) / h;
                                const double gx2 = basis.eval(c2, g.points[gi], 1) *
                                                   basis.eval(d, g.points[gj]) / h;
                                const double gy2 = basis.eval(c2, g.points[gi]) *
                                                   basis.eval(d, g.points[gj], 1) / h;
                                oracle(slots[a + (k + 1) * b], slots[c2 + (k + 1) * d]) +=
                                    wq * (gx1 * gx2 + gy1 * gy2);
                            }
            }
    }
    // phase-2 x-component block of A sits at offset 0 of the phase-2 range
    const int n1 = space->vel[0].n_active;
    CHECK(n1 == 0);
    double worst = 0.0;
    for (int i = 0; i < n2; ++i)
        for (int j = 0; j < n2; ++j) worst = std::max(worst, std::abs(A.coeff(i, j) - oracle(i, j)));
    CHECK(worst < 1e-12);
}

TEST_CASE("coercivity witness at gamma0 = 1e3") {
    const World w = make_world(16, 2);
    const Eigen::SparseMatrix<double> A = assemble_Ah(*w.space, w.quad, w.params);
    for (unsigned seed = 0; seed < 100; ++seed) {
        const FieldPair v = random_velocity(w.space, 100 + seed);
        const Eigen::VectorXd x = velocity_coeffs_all(*w.space, v);
        const double quad_form = x.dot(A * x);
        const double triple = triple_norm_sq(v, w.quad, w.params);
        CHECK(quad_form >= 0.5 * triple);
    }
}

TEST_CASE("B0 vanishes on continuous divergence-free fields") {
    const World w = make_world(8, 2, 1e-3, 64);
    // global divergence-free polynomial with zero jump (same field both phases)
    auto df = [](const Vec2& p) { return Vec2{2.0 * p.x * p.x * p.y, -2.0 * p.x * p.y * p.y}; };
    const FieldPair v = interpolate_velocity(w.space, df, df);
    for (unsigned seed = 0; seed < 5; ++seed) {
        const FieldPair q = random_pressure(w.space, 40 + seed);
        const double b = form_B0(v, q, w.quad, w.params);
        const double scale = pressure_coeffs_all(*w.space, q).norm();
        CHECK(std::abs(b) < 1e-11 * std::max(1.0, scale));
    }
}

TEST_CASE("B0 against the analytic phase area") {
    const World w = make_world(16, 2);
    // v = (x, 0) on phase 1 only, q = 1 on phase 1: B0 = -(div v, q) + ([v].n)<q>
    FieldPair v(w.space, 2, true);
    const DofMap& vmap = w.space->vel[0];
    for (int slot = 0; slot < vmap.n_active; ++slot) {
        const int g = vmap.global_of_active[slot];
        const Vec2 p = vmap.node_position(w.mesh, w.space->vel_basis, g % vmap.nodes_per_side,
                                          g / vmap.nodes_per_side);
        v.coeffs(1, 0)[slot] = p.x;
    }
    FieldPair q(w.space, 1, false);
    for (double& c : q.coeffs(1, 0)) c = 1.0;

    const double area1 = w.spline.enclosed_area(); // pi r^2 up to the spline fit
    CHECK(std::abs(area1 - M_PI * 0.15 * 0.15) < 1e-7);
    // -(div v, 1)_1 = -area1; iface: ([v].n)<q> with [v] = v1, <q> = kappa1
    double iface = 0.0;
    for (const InterfaceRule& rule : w.quad.interface_)
        for (size_t i = 0; i < rule.points.size(); ++i)
            iface += rule.weights[i] * rule.points[i].x * rule.normals[i].x * w.params.kappa1();
    const double expect = -area1 + iface;
    CHECK(form_B0(v, q, w.quad, w.params) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("B0 matrix transposes consistently between the two system blocks") {
    const World w = make_world(8, 2, 1e-3, 64);
    const Eigen::SparseMatrix<double> B = assemble_B0(*w.space, w.quad, w.params);
    const FieldPair v = random_velocity(w.space, 7);
    const FieldPair q = random_pressure(w.space, 8);
    const double via_matrix =
        pressure_coeffs_all(*w.space, q).dot(B * velocity_coeffs_all(*w.space, v));
    CHECK(via_matrix == doctest::Approx(form_B0(v, q, w.quad, w.params)).epsilon(1e-10));
}

TEST_CASE("Jp: zero for global polynomials, h^3 weight at k=2, PSD") {
    const World w = make_world(16, 2);
    auto smooth = [](const Vec2& p) { return 2.0 * p.x * p.y - 3.0 * p.y + p.x; };
    const FieldPair p_smooth = interpolate_pressure(w.space, smooth, smooth);
    CHECK(std::abs(form_Jp(p_smooth, p_smooth, w.params)) < 1e-22);

    // k=2: only l=1 active with weight h^3 / (1!)^2; cross-check one edge by hand
    const GridEdge e = w.space->classify.ghost[1].front();
    FieldPair jumpy(w.space, 1, false);
    std::mt19937 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& c : jumpy.coeffs(2, 0)) c = gauss(rng);
    const double h = w.mesh.h();
    const EdgeRule er = build_edge_rule(w.mesh, e, 6);
    double by_hand = 0.0;
    for (size_t qq = 0; qq < er.points.size(); ++qq) {
        const int dx = e.vertical ? 1 : 0, dy = e.vertical ? 0 : 1;
        const double jump = jumpy.eval_on_cell(2, 0, e.cell_minus, er.points[qq], dx, dy) -
                            jumpy.eval_on_cell(2, 0, e.cell_plus, er.points[qq], dx, dy);
        by_hand += er.weights[qq] * jump * jump;
    }
    by_hand *= std::pow(h, 3) / w.params.nu2;
    // isolate this edge: a field supported on its two cells only
    FieldPair iso(w.space, 1, false);
    const int np = w.space->k * w.space->k;
    for (int cell : {e.cell_minus, e.cell_plus}) {
        const int* slots = &w.space->pres[1].cell_slots[static_cast<size_t>(cell) * np];
        for (int i = 0; i < np; ++i) iso.coeffs(2, 0)[slots[i]] = jumpy.coeffs(2, 0)[slots[i]];
    }
    // Jp(iso, iso) includes every ghost edge touching those two cells; the
    // hand value must appear as one of the contributions
    CHECK(form_Jp(iso, iso, w.params) >= by_hand - 1e-14);

    for (unsigned seed = 0; seed < 100; ++seed) {
        const FieldPair q = random_pressure(w.space, 900 + seed);
        CHECK(form_Jp(q, q, w.params) >= 0.0);
    }
    const Eigen::SparseMatrix<double> Jp = assemble_Jp(*w.space, w.quad, w.params);
    const FieldPair q1 = random_pressure(w.space, 41), q2 = random_pressure(w.space, 42);
    CHECK(pressure_coeffs_all(*w.space, q2).dot(Jp * pressure_coeffs_all(*w.space, q1)) ==
          doctest::Approx(form_Jp(q1, q2, w.params)).epsilon(1e-10));
}

TEST_CASE("ghost penalties touch only DOFs near the cut band") {
    const World w = make_world(16, 2);
    const Eigen::SparseMatrix<double> A = assemble_Ah(*w.space, w.quad, w.params, true);
    const Eigen::SparseMatrix<double> A0 = assemble_Ah(*w.space, w.quad, w.params, false);
    // difference = Ju: every nonzero row belongs to a cell adjacent to a ghost edge
    std::set<int> allowed;
    const int n1 = w.space->vel[0].n_active, nv = (w.space->k + 1) * (w.space->k + 1);
    for (int phase = 1; phase <= 2; ++phase)
        for (const GridEdge& e : w.space->classify.ghost[phase - 1])
            for (int cell : {e.cell_minus, e.cell_plus}) {
                const int* slots = &w.space->vel[phase - 1].cell_slots[static_cast<size_t>(cell) * nv];
                for (int i = 0; i < nv; ++i)
                    for (int c = 0; c < 2; ++c)
                        allowed.insert(phase == 1 ? c * n1 + slots[i]
                                                  : 2 * n1 + c * w.space->vel[1].n_active + slots[i]);
            }
    const Eigen::SparseMatrix<double> Ju = A - A0;
    for (int c = 0; c < Ju.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Ju, c); it; ++it)
            if (std::abs(it.value()) > 1e-14) {
                CHECK(allowed.count(it.row()) == 1);
                CHECK(allowed.count(it.col()) == 1);
            }
}

TEST_CASE("B1 reduces to the reaction term for piecewise-linear velocity") {
    const World w = make_world(8, 2, 1e-3, 64);
    auto linear = [](const Vec2& p) { return Vec2{0.3 * p.x - 0.1 * p.y, 0.7 * p.y}; };
    const FieldPair u = interpolate_velocity(w.space, linear, linear);
    const FieldPair q = random_pressure(w.space, 21);
    const double mass_coef = 7.5;
    const double b1 = form_B1(u, q, w.quad, w.params, mass_coef);
    // reaction-only oracle
    double reaction = 0.0;
    for (int phase = 1; phase <= 2; ++phase) {
        const double nu_i = w.params.nu(phase);
        for (const VolumeRule& rule : w.quad.volume(phase))
            for (size_t i = 0; i < rule.points.size(); ++i) {
                const Vec2 uv{u.eval_on_cell(phase, 0, rule.element, rule.points[i]),
                              u.eval_on_cell(phase, 1, rule.element, rule.points[i])};
                const Vec2 gq{q.eval_on_cell(phase, 0, rule.element, rule.points[i], 1, 0),
                              q.eval_on_cell(phase, 0, rule.element, rule.points[i], 0, 1)};
                reaction += rule.weights[i] * mass_coef * uv.dot(gq) / nu_i;
            }
    }
    CHECK(b1 == doctest::Approx(reaction).epsilon(1e-9));
}

TEST_CASE("system dimension and K0-plus-mass comparison at gamma1 = 0") {
    const World w = make_world(16, 3);
    const SystemLayout& L = w.space->layout;
    CHECK(L.total == 2 * L.n1 + 2 * L.n2f + L.m1 + L.m2 + 1);

    AssembleSpec stokes;           // K0: no mass, no stabilization
    AssembleSpec time_step;        // K1 with gamma1 = 0 and lambda0/tau = 3
    time_step.mass_coef = 3.0;
    time_step.stab_coef = 0.0;
    const SaddleSystem sys_k0 = assemble_system(*w.space, w.quad, w.params, stokes, nullptr);
    const SaddleSystem sys_k1 = assemble_system(*w.space, w.quad, w.params, time_step, nullptr);

    AssembleSpec mass_only;
    mass_only.mass_coef = 3.0;
    mass_only.stiffness = false;
    mass_only.nitsche = false;
    mass_only.ghost_u = mass_only.ghost_p = false;
    mass_only.b0 = false;
    mass_only.constraint = false;
    SaddleSystem sys_m = assemble_system(*w.space, w.quad, w.params, mass_only, nullptr);
    // remove the placeholder multiplier diagonal before comparing
    sys_m.matrix.coeffRef(L.off_mu, L.off_mu) = 0.0;

    const Eigen::SparseMatrix<double> diff = sys_k1.matrix - sys_k0.matrix - sys_m.matrix;
    double worst = 0.0;
    for (int c = 0; c < diff.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(diff, c); it; ++it)
            worst = std::max(worst, std::abs(it.value()));
    CHECK(worst < 1e-12 * (1.0 + w.params.gamma0));
}

TEST_CASE("constant history with w = 0 reproduces the BDF consistency identity") {
    // G = f - tau^-1 (lambda_1 + lambda_2) c = f + tau^-1 lambda_0 c for k = 2
    const BDFScheme bdf = BDFScheme::order(2);
    const double tau = 0.125;
    const Vec2 c{0.4, -0.2};
    const Vec2 f{1.0, 2.0};
    Vec2 G = f;
    for (int j = 1; j <= 2; ++j) G -= (bdf.lambda[j] / tau) * c;
    const Vec2 expect = f + (bdf.lambda[0] / tau) * c;
    CHECK((G - expect).norm() < 1e-14);
}

TEST_CASE("volume source lands in the load vector as nu-weighted moments") {
    const World w = make_world(8, 2, 1e-3, 64);
    AssembleSpec spec;
    spec.stiffness = false;
    spec.nitsche = false;
    spec.ghost_u = spec.ghost_p = false;
    spec.b0 = false;
    spec.constraint = false;
    spec.source = [&](int phase, const Vec2&) {
        return phase == 1 ? Vec2{w.params.nu1, 0.0} : Vec2{w.params.nu2, 0.0};
    };
    const SaddleSystem sys = assemble_system(*w.space, w.quad, w.params, spec, nullptr);
    // sum of the x-momentum load = sum_i nu_i |Omega_i| by partition of unity
    double total = 0.0;
    for (int s = 0; s < w.space->layout.n1; ++s) total += sys.rhs[w.space->layout.off_u1x + s];
    for (int s = 0; s < w.space->layout.n2f; ++s) total += sys.rhs[w.space->layout.off_u2x + s];
    // phase-2 Dirichlet rows are excluded: add their prescribed-node moments back
    // by integrating the partition of unity deficit; easier: compare against the
    // moment of the interior indicator assembled the same way
    AssembleSpec one;
    one = spec;
    one.source = [](int, const Vec2&) { return Vec2{1.0, 0.0}; };
    const SaddleSystem sys1 = assemble_system(*w.space, w.quad, w.params, one, nullptr);
    double total1_1 = 0.0, total1_2 = 0.0;
    for (int s = 0; s < w.space->layout.n1; ++s) total1_1 += sys1.rhs[w.space->layout.off_u1x + s];
    for (int s = 0; s < w.space->layout.n2f; ++s) total1_2 += sys1.rhs[w.space->layout.off_u2x + s];
    CHECK(total == doctest::Approx(w.params.nu1 * total1_1 + w.params.nu2 * total1_2)
                       .epsilon(1e-12));
}

TEST_CASE("interface source: zero data means plain load, continuous data vanishes") {
    const World w = make_world(16, 2);
    AssembleSpec plain;
    plain.source = [](int, const Vec2& p) { return Vec2{p.x, p.y}; };
    const SaddleSystem base = assemble_system(*w.space, w.quad, w.params, plain, nullptr);

    AssembleSpec with_zero_g = plain;
    with_zero_g.interface_data.g0 = [](const Vec2&, const Vec2&) { return Vec2{0.0, 0.0}; };
    with_zero_g.interface_data.g1 = [](const Vec2&, const Vec2&) { return Vec2{0.0, 0.0}; };
    const SaddleSystem same = assemble_system(*w.space, w.quad, w.params, with_zero_g, nullptr);
    CHECK((same.rhs - base.rhs).norm() == 0.0);

    // a continuous exact pair (same u, p on both phases, same nu) has g0 = g1 = 0
    PenaltyParams equal_nu;
    equal_nu.nu1 = equal_nu.nu2 = 1.0;
    ProblemCase steady = make_case("steady-poly", 1.0, 1.0);
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Vec2 x{dist(rng), dist(rng)};
        const Vec2 n{std::cos(dist(rng) * 6.28), std::sin(dist(rng) * 6.28)};
        CHECK(steady.g0(x, 0.0).norm() < 1e-15);
        CHECK(steady.g1(x, n, 0.0).norm() < 1e-15);
    }
}

TEST_CASE("assembled system is solvable on the benchmark geometry") {
    const World w = make_world(16, 3);
    AssembleSpec spec;
    spec.mass_coef = 16.0 * BDFScheme::order(3).lambda[0];
    spec.stab_coef = 1.0 * w.params.nu2 * w.mesh.h() * w.mesh.h();
    spec.source = [](int, const Vec2& p) { return Vec2{std::sin(3 * p.x), std::cos(2 * p.y)}; };
    const SaddleSystem sys = assemble_system(*w.space, w.quad, w.params, spec, nullptr);
    Eigen::VectorXd sol;
    const double residual = solve_saddle(sys, sol);
    CHECK(residual < 1e-10);
    CHECK(sol.allFinite());
}

TEST_CASE("matrix COO dump round-trips entries") {
    Eigen::SparseMatrix<double> m(2, 2);
    m.insert(0, 1) = 3.5;
    m.insert(1, 0) = -1.25;
    m.makeCompressed();
    const std::string dump = matrix_coo_dump(m);
    CHECK(dump.find("0 1 3.5") != std::string::npos);
    CHECK(dump.find("1 0 -1.25") != std::string::npos);
}
