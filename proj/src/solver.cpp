#include "cutoseen/solver.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cutoseen {

std::vector<std::string> RunConfig::finalize() {
    std::vector<std::string> warnings;
    if (k < 2 || k > 4) throw Error("config: k must be 2, 3, or 4");
    if (nc < 4) throw Error("config: nc too small");
    if (T <= 0.0) throw Error("config: T must be positive");
    if (tau <= 0.0) tau = h();
    if (eta <= 0.0) eta = 0.5 * std::pow(tau, std::max(1.0, k / 3.0));
    if (quad_order <= 0) quad_order = 2 * k + 2;
    if (iface_npts <= 0) iface_npts = k + 3;
    const double ratio = h() / tau;
    if (ratio < 0.1 || ratio > 10.0)
        throw Error("config: h/tau must stay in [0.1, 10] (h = O(tau) coupling)");
    if (tau > nu2)
        warnings.push_back("tau > nu2: the time step exceeds the small viscosity");
    return warnings;
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "k=" << k << ";nc=" << nc << ";tau=" << tau << ";T=" << T << ";g0=" << gamma0
       << ";g1=" << gamma1 << ";nu=" << nu1 << "," << nu2 << ";eta=" << eta
       << ";qo=" << quad_order << ";ip=" << iface_npts << ";case=" << case_id
       << ";seed=" << seed << ";lit=" << (literal_interface_data ? 1 : 0);
    return os.str();
}

Vec2 ProblemCase::g0(const Vec2& x, double t) const {
    const Vec2 u1 = u(1, x, t), u2 = u(2, x, t);
    return u1 - u2;
}

Vec2 ProblemCase::g1(const Vec2& x, const Vec2& n, double t) const {
    const Vec2 flux1 = (grad_u(1, x, t) * n) * nu1;
    const Vec2 flux2 = (grad_u(2, x, t) * n) * nu2;
    const double pj = p(1, x, t) - p(2, x, t);
    return flux1 - flux2 - pj * n;
}

Vec2 ProblemCase::g1_literal(const Vec2& x, const Vec2& n, double t) const {
    const Vec2 dn = (grad_u(1, x, t) - grad_u(2, x, t)) * n;
    const double pj = p(1, x, t) - p(2, x, t);
    return nu1 * dn - pj * n;
}

std::string RunResult::to_json() const {
    nlohmann::json j;
    j["case"] = case_id;
    j["config_hash"] = config_hash;
    j["k"] = k;
    j["nc"] = nc;
    j["steps"] = steps;
    j["errors"] = {{"e_u0", e_u0}, {"e_u1", e_u1}, {"e_p0", e_p0}, {"e_p1", e_p1}};
    j["failed"] = failed;
    if (failed) j["failure"] = failure;
    j["schema_version"] = 1;
    auto& diag = j["diagnostics"] = nlohmann::json::array();
    for (const StepDiagnostics& d : diagnostics)
        diag.push_back({{"n", d.n},
                        {"t", d.t},
                        {"velocity_l2", d.velocity_l2},
                        {"residual", d.solver_residual},
                        {"cut_cells", d.cut_cells},
                        {"min_cut_fraction", d.min_cut_fraction},
                        {"mean_constraint", d.mean_constraint},
                        {"interface_area", d.interface_area}});
    return j.dump(2);
}

std::string RunResult::diagnostics_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "n,t,velocity_l2,residual,cut_cells,min_cut_fraction,mean_constraint,interface_area\n";
    for (const StepDiagnostics& d : diagnostics)
        os << d.n << "," << d.t << "," << d.velocity_l2 << "," << d.solver_residual << ","
           << d.cut_cells << "," << d.min_cut_fraction << "," << d.mean_constraint << ","
           << d.interface_area << "\n";
    return os.str();
}

double pressure_mean_shift(const std::function<double(int, const Vec2&)>& p,
                           const QuadratureSet& quad, const PenaltyParams& params) {
    double num = 0.0, den = 0.0;
    for (int phase = 1; phase <= 2; ++phase) {
        const double wi = 1.0 / params.nu(phase);
        for (const VolumeRule& rule : quad.volume(phase))
            for (size_t q = 0; q < rule.points.size(); ++q) {
                num += wi * rule.weights[q] * p(phase, rule.points[q]);
                den += wi * rule.weights[q];
            }
    }
    return num / den;
}

StokesProjectionResult stokes_projection(std::shared_ptr<const StepSpace> space,
                                         const QuadratureSet& quad, const PenaltyParams& params,
                                         const ProblemCase& prob, double t, bool f_mode_b0u) {
    AssembleSpec spec;
    spec.mass_coef = 0.0;
    spec.stab_coef = 0.0;
    spec.projection.u = [&prob, t](int phase, const Vec2& x) { return prob.u(phase, x, t); };
    spec.projection.grad_u = [&prob, t](int phase, const Vec2& x) {
        return prob.grad_u(phase, x, t);
    };
    spec.projection.p = [&prob, t](int phase, const Vec2& x) { return prob.p(phase, x, t); };
    spec.projection.f_mode_b0u = f_mode_b0u;

    BoundaryValues bc;
    bc.u2x.assign(space->vel[1].n_active, 0.0);
    bc.u2y.assign(space->vel[1].n_active, 0.0);
    for (int slot : space->vel[1].prescribed_slots) {
        const DofMap& map = space->vel[1];
        const int g = map.global_of_active[slot];
        const Vec2 pos = map.node_position(space->mesh, space->vel_basis, g % map.nodes_per_side,
                                           g / map.nodes_per_side);
        const Vec2 val = prob.u(2, pos, t);
        bc.u2x[slot] = val.x;
        bc.u2y[slot] = val.y;
    }

    SaddleSystem sys = assemble_system(*space, quad, params, spec, &bc);
    Eigen::VectorXd sol;
    StokesProjectionResult out;
    out.residual = solve_saddle(sys, sol);
    out.multiplier = extract_fields(sol, space, &bc, out.velocity, out.pressure);
    return out;
}

TimeLoop::TimeLoop(RunConfig config, ProblemCase prob)
    : cfg_(std::move(config)),
      prob_(std::move(prob)),
      bdf_(BDFScheme::order(cfg_.k)),
      stack_(RKTableau::for_scheme_order(cfg_.k), prob_.w, cfg_.k) {
    cfg_.finalize();
    if (prob_.has_solution() &&
        (std::abs(prob_.nu1 - cfg_.nu1) > 1e-14 || std::abs(prob_.nu2 - cfg_.nu2) > 1e-14))
        throw Error("TimeLoop: viscosities of the case and the config disagree");
    mesh_.origin = {0.0, 0.0};
    mesh_.side = 1.0;
    mesh_.cells = cfg_.nc;
    params_.gamma0 = cfg_.gamma0;
    params_.gamma1 = cfg_.gamma1;
    params_.nu1 = cfg_.nu1;
    params_.nu2 = cfg_.nu2;

    const int J = std::max(8, static_cast<int>(std::lround(
                                  2.0 * M_PI * prob_.disk_radius / cfg_.eta)));
    markers_ = circle_markers(prob_.disk_center, prob_.disk_radius, J);
    markers_.eta = cfg_.eta;
    spline_ = fit_periodic_spline(markers_);
}

void TimeLoop::track_one_step() {
    const double t0 = n_ * cfg_.tau;
    MarkerChain traced = markers_;
    for (Vec2& p : traced.points)
        p = advance_point(p, t0, cfg_.tau, stack_.tableau(), stack_.velocity());
    ++n_;
    stack_.push(n_, t0, cfg_.tau);
    SplineInterface fitted = fit_periodic_spline(traced);
    markers_ = redistribute_markers(traced, cfg_.eta, &fitted);
    spline_ = fit_periodic_spline(markers_);
}

TimeLoop::StepState TimeLoop::make_state(double t, bool interpolate_exact) {
    StepState st;
    st.t = t;
    st.space = make_step_space(mesh_, cfg_.k, &spline_);
    st.quad = build_quadrature(mesh_, &spline_, st.space->classify, cfg_.quad_order,
                               cfg_.iface_npts);
    if (interpolate_exact && prob_.has_solution()) {
        st.velocity = interpolate_velocity(
            st.space, [&](const Vec2& x) { return prob_.u(1, x, t); },
            [&](const Vec2& x) { return prob_.u(2, x, t); });
        st.pressure = interpolate_pressure(
            st.space, [&](const Vec2& x) { return prob_.p(1, x, t); },
            [&](const Vec2& x) { return prob_.p(2, x, t); });
    } else {
        st.velocity = FieldPair(st.space, 2, true);
        st.pressure = FieldPair(st.space, 1, false);
    }
    return st;
}

BoundaryValues TimeLoop::boundary_values(const StepSpace& space, double t) const {
    BoundaryValues bc;
    bc.u2x.assign(space.vel[1].n_active, 0.0);
    bc.u2y.assign(space.vel[1].n_active, 0.0);
    if (!prob_.has_solution()) return bc;
    const DofMap& map = space.vel[1];
    for (int slot : map.prescribed_slots) {
        const int g = map.global_of_active[slot];
        const Vec2 pos = map.node_position(space.mesh, space.vel_basis, g % map.nodes_per_side,
                                           g / map.nodes_per_side);
        const Vec2 val = prob_.u(2, pos, t);
        bc.u2x[slot] = val.x;
        bc.u2y[slot] = val.y;
    }
    return bc;
}

void TimeLoop::solve_step(RunResult& result) {
    track_one_step();
    const double t = n_ * cfg_.tau;
    StepState st = make_state(t, false);

    // momentum source with the BDF history pulled back to step-n points
    const double inv_tau = 1.0 / cfg_.tau;
    auto source = [this, t, inv_tau](int phase, const Vec2& x) {
        Vec2 G = prob_.f(phase, x, t);
        Vec2 z = x;
        for (int j = 1; j <= cfg_.k; ++j) {
            z = stack_.invert_one_step(z, n_ - j + 1);
            const FieldPair& old_u = ring_[cfg_.k - j].velocity;
            G -= (bdf_.lambda[j] * inv_tau) * old_u.eval_vec(phase, z);
        }
        return G;
    };

    AssembleSpec spec;
    spec.mass_coef = bdf_.lambda[0] * inv_tau;
    spec.stab_coef = cfg_.gamma1 * cfg_.nu2 * mesh_.h() * mesh_.h();
    spec.source = source;
    if (prob_.has_solution()) {
        spec.interface_data.g0 = [this, t](const Vec2& x, const Vec2&) {
            return prob_.g0(x, t);
        };
        if (cfg_.literal_interface_data) {
            spec.interface_data.g1 = [this, t](const Vec2& x, const Vec2& n) {
                return prob_.g1_literal(x, n, t);
            };
            spec.interface_data.penalty_correction = false;
        } else {
            spec.interface_data.g1 = [this, t](const Vec2& x, const Vec2& n) {
                return prob_.g1(x, n, t);
            };
        }
    }

    const BoundaryValues bc = boundary_values(*st.space, t);
    SaddleSystem sys = assemble_system(*st.space, st.quad, params_, spec, &bc);
    Eigen::VectorXd sol;
    const double residual = solve_saddle(sys, sol);
    extract_fields(sol, st.space, &bc, st.velocity, st.pressure);

    StepDiagnostics diag;
    diag.n = n_;
    diag.t = t;
    diag.solver_residual = residual;
    diag.cut_cells = static_cast<int>(st.space->classify.cut_cells.size());
    diag.min_cut_fraction = st.quad.min_cut_fraction;
    diag.interface_area = spline_.enclosed_area();
    diag.velocity_l2 = weighted_norms(st.velocity, st.quad, 1.0, 1.0).l2;
    {
        double c = 0.0;
        for (int phase = 1; phase <= 2; ++phase)
            for (const VolumeRule& rule : st.quad.volume(phase))
                for (size_t q = 0; q < rule.points.size(); ++q)
                    c += rule.weights[q] / params_.nu(phase) *
                         st.pressure.eval_on_cell(phase, 0, rule.element, rule.points[q]);
        diag.mean_constraint = c;
    }
    result.diagnostics.push_back(diag);

    if (residual > 1e-10)
        throw Error("solve_step: linear solver residual " + std::to_string(residual) +
                    " exceeds 1e-10 at step " + std::to_string(n_));

    accumulate_errors(st, result, false);
    ring_.pop_front();
    ring_.push_back(std::move(st));
}

void TimeLoop::accumulate_errors(const StepState& st, RunResult& result, bool final_step) {
    if (!prob_.has_solution()) return;
    const double t = st.t;
    auto exact_u = [&](int phase, int comp, const Vec2& x) {
        const Vec2 v = prob_.u(phase, x, t);
        return comp == 0 ? v.x : v.y;
    };
    auto exact_gu = [&](int phase, int comp, const Vec2& x) {
        const Mat2 g = prob_.grad_u(phase, x, t);
        return comp == 0 ? Vec2{g.a11, g.a12} : Vec2{g.a21, g.a22};
    };
    const WeightedNorms u_w =
        weighted_diff_norms(st.velocity, exact_u, exact_gu, st.quad, params_.nu1, params_.nu2);
    result.e_u1 += cfg_.tau * u_w.h1_semi * u_w.h1_semi;

    const double shift = pressure_mean_shift(
        [&](int phase, const Vec2& x) { return prob_.p(phase, x, t); }, st.quad, params_);
    auto exact_p = [&](int phase, int, const Vec2& x) { return prob_.p(phase, x, t) - shift; };
    auto exact_gp = [&](int phase, int, const Vec2& x) {
        // pressure gradients of the manufactured cases are smooth per phase
        const double d = 1e-6;
        const double px = (prob_.p(phase, {x.x + d, x.y}, t) - prob_.p(phase, {x.x - d, x.y}, t)) /
                          (2 * d);
        const double py = (prob_.p(phase, {x.x, x.y + d}, t) - prob_.p(phase, {x.x, x.y - d}, t)) /
                          (2 * d);
        return Vec2{px, py};
    };
    const WeightedNorms p_w = weighted_diff_norms(st.pressure, exact_p, exact_gp, st.quad,
                                                  1.0 / params_.nu1, 1.0 / params_.nu2);
    result.e_p0 += cfg_.tau * p_w.l2 * p_w.l2;
    result.e_p1 += cfg_.tau * p_w.h1_semi * p_w.h1_semi;
    (void)final_step;
}

void TimeLoop::accumulate_final_l2(const StepState& st, RunResult& result) {
    if (!prob_.has_solution()) return;
    const double t = st.t;
    auto exact_u = [&](int phase, int comp, const Vec2& x) {
        const Vec2 v = prob_.u(phase, x, t);
        return comp == 0 ? v.x : v.y;
    };
    auto exact_gu = [&](int phase, int comp, const Vec2& x) {
        const Mat2 g = prob_.grad_u(phase, x, t);
        return comp == 0 ? Vec2{g.a11, g.a12} : Vec2{g.a21, g.a22};
    };
    result.e_u0 = weighted_diff_norms(st.velocity, exact_u, exact_gu, st.quad, 1.0, 1.0).l2;
}

RunResult TimeLoop::run() {
    RunResult result;
    result.case_id = cfg_.case_id;
    result.config_hash = cfg_.hash();
    result.k = cfg_.k;
    result.nc = cfg_.nc;
    const int N = static_cast<int>(std::lround(cfg_.T / cfg_.tau));
    result.steps = N;

    auto want_snapshot = [&](double t) -> bool {
        for (double s : cfg_.snapshot_times)
            if (std::abs(s - t) <= 0.5 * cfg_.tau) return true;
        return false;
    };
    auto take_snapshot = [&](double t) {
        if (!want_snapshot(t)) return;
        result.interface_csv[t] = spline_.polyline_csv();
        result.interface_svg[t] = spline_.to_svg();
    };

    try {
        const bool track_only = !prob_.has_solution() || cfg_.case_id == "tracking-only";
        take_snapshot(0.0);
        if (track_only) {
            while (n_ < N) {
                track_one_step();
                take_snapshot(n_ * cfg_.tau);
                StepDiagnostics diag;
                diag.n = n_;
                diag.t = n_ * cfg_.tau;
                diag.interface_area = spline_.enclosed_area();
                result.diagnostics.push_back(diag);
            }
            return result;
        }

        if (N < cfg_.k) {
            // no solved steps: report the interpolation errors of the data at T
            for (int j = 1; j <= N; ++j) track_one_step();
            StepState st = make_state(N * cfg_.tau, true);
            accumulate_errors(st, result, false);
            result.e_u1 = std::sqrt(result.e_u1 / cfg_.tau); // single-state seminorm
            result.e_p0 = std::sqrt(result.e_p0 / cfg_.tau);
            result.e_p1 = std::sqrt(result.e_p1 / cfg_.tau);
            accumulate_final_l2(st, result);
            return result;
        }

        // pre-computed initial steps from the exact solution
        ring_.clear();
        ring_.push_back(make_state(0.0, true));
        for (int j = 1; j < cfg_.k; ++j) {
            track_one_step();
            ring_.push_back(make_state(j * cfg_.tau, true));
            take_snapshot(j * cfg_.tau);
        }
        while (n_ < N) {
            solve_step(result);
            take_snapshot(n_ * cfg_.tau);
        }
        result.e_u1 = std::sqrt(result.e_u1);
        result.e_p0 = std::sqrt(result.e_p0);
        result.e_p1 = std::sqrt(result.e_p1);
        accumulate_final_l2(ring_.back(), result);
    } catch (const std::exception& e) {
        result.failed = true;
        result.failure = e.what();
    }
    return result;
}

} // namespace cutoseen
