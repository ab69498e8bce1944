#include "cutoseen/harness.hpp"

#include <cmath>
#include <sstream>

namespace cutoseen {

namespace {

VelocityField paper_velocity() {
    VelocityField w;
    w.value = [](const Vec2& x, double t) {
        const double a = std::cos(M_PI * t / 3.0);
        const double s1 = std::sin(M_PI * x.x), s2 = std::sin(M_PI * x.y);
        return Vec2{a * s1 * s1 * std::sin(2.0 * M_PI * x.y),
                    -a * s2 * s2 * std::sin(2.0 * M_PI * x.x)};
    };
    w.gradient = [](const Vec2& x, double t) {
        const double a = std::cos(M_PI * t / 3.0);
        const double s1 = std::sin(M_PI * x.x), s2 = std::sin(M_PI * x.y);
        const double s21 = std::sin(2.0 * M_PI * x.x), s22 = std::sin(2.0 * M_PI * x.y);
        const double c21 = std::cos(2.0 * M_PI * x.x), c22 = std::cos(2.0 * M_PI * x.y);
        return Mat2{a * M_PI * s21 * s22, a * 2.0 * M_PI * s1 * s1 * c22,
                    -a * 2.0 * M_PI * s2 * s2 * c21, -a * M_PI * s22 * s21};
    };
    return w;
}

VelocityField zero_velocity() {
    VelocityField w;
    w.value = [](const Vec2&, double) { return Vec2{0.0, 0.0}; };
    w.gradient = [](const Vec2&, double) { return Mat2{}; };
    return w;
}

ProblemCase paper_case(double nu1, double nu2) {
    ProblemCase c;
    c.name = "oseen-paper";
    c.nu1 = nu1;
    c.nu2 = nu2;
    c.default_T = 1.5;
    c.w = paper_velocity();

    c.u = [](int phase, const Vec2& x, double t) {
        if (phase == 1)
            return Vec2{std::cos(t) * std::cos(M_PI * x.x) * std::sin(M_PI * x.y),
                        -std::cos(t) * std::sin(M_PI * x.x) * std::cos(M_PI * x.y)};
        const double e = std::exp(x.x);
        return Vec2{e * std::sin(M_PI * x.y + M_PI * t),
                    e * std::cos(M_PI * x.y + M_PI * t) / M_PI};
    };
    c.grad_u = [](int phase, const Vec2& x, double t) {
        if (phase == 1) {
            const double ct = std::cos(t);
            const double c1 = std::cos(M_PI * x.x), s1 = std::sin(M_PI * x.x);
            const double c2 = std::cos(M_PI * x.y), s2 = std::sin(M_PI * x.y);
            return Mat2{-ct * M_PI * s1 * s2, ct * M_PI * c1 * c2,
                        -ct * M_PI * c1 * c2, ct * M_PI * s1 * s2};
        }
        const double e = std::exp(x.x);
        const double ph = M_PI * x.y + M_PI * t;
        return Mat2{e * std::sin(ph), e * M_PI * std::cos(ph),
                    e * std::cos(ph) / M_PI, -e * std::sin(ph)};
    };
    c.p = [](int phase, const Vec2& x, double) {
        if (phase == 1) return std::cos(0.5 * M_PI * x.x) * std::sin(0.5 * M_PI * x.y);
        return std::sin(0.5 * M_PI * x.x) * std::cos(0.5 * M_PI * x.y);
    };
    c.f = [nu1, nu2, w = c.w, u = c.u, gu = c.grad_u](int phase, const Vec2& x, double t) {
        Vec2 dudt, lap;
        if (phase == 1) {
            const double st = std::sin(t);
            dudt = Vec2{-st * std::cos(M_PI * x.x) * std::sin(M_PI * x.y),
                        st * std::sin(M_PI * x.x) * std::cos(M_PI * x.y)};
            lap = -2.0 * M_PI * M_PI * u(1, x, t);
        } else {
            const double e = std::exp(x.x);
            const double ph = M_PI * x.y + M_PI * t;
            dudt = Vec2{e * M_PI * std::cos(ph), -e * std::sin(ph)};
            lap = (1.0 - M_PI * M_PI) * u(2, x, t);
        }
        Vec2 gp;
        if (phase == 1)
            gp = Vec2{-0.5 * M_PI * std::sin(0.5 * M_PI * x.x) * std::sin(0.5 * M_PI * x.y),
                      0.5 * M_PI * std::cos(0.5 * M_PI * x.x) * std::cos(0.5 * M_PI * x.y)};
        else
            gp = Vec2{0.5 * M_PI * std::cos(0.5 * M_PI * x.x) * std::cos(0.5 * M_PI * x.y),
                      -0.5 * M_PI * std::sin(0.5 * M_PI * x.x) * std::sin(0.5 * M_PI * x.y)};
        const double nu = phase == 1 ? nu1 : nu2;
        const Vec2 adv = gu(phase, x, t) * w.value(x, t);
        return dudt + adv - nu * lap + gp;
    };
    return c;
}

ProblemCase steady_poly_case(double nu1, double nu2) {
    ProblemCase c;
    c.name = "steady-poly";
    c.nu1 = nu1;
    c.nu2 = nu2;
    c.default_T = 0.25;
    c.w = zero_velocity();
    // stream function x^2 y^2: divergence-free, per-variable degree <= 2
    c.u = [](int, const Vec2& x, double) {
        return Vec2{2.0 * x.x * x.x * x.y, -2.0 * x.x * x.y * x.y};
    };
    c.grad_u = [](int, const Vec2& x, double) {
        return Mat2{4.0 * x.x * x.y, 2.0 * x.x * x.x, -2.0 * x.y * x.y, -4.0 * x.x * x.y};
    };
    c.p = [](int, const Vec2& x, double) { return x.x + x.y - 1.0; };
    c.f = [nu1, nu2](int phase, const Vec2& x, double) {
        const double nu = phase == 1 ? nu1 : nu2;
        const Vec2 lap{4.0 * x.y, -4.0 * x.x};
        return Vec2{1.0, 1.0} - nu * lap;
    };
    return c;
}

ProblemCase tracking_case() {
    ProblemCase c;
    c.name = "tracking-only";
    c.w = paper_velocity();
    c.default_T = 1.5;
    return c;
}

} // namespace

ProblemCase make_case(const std::string& id, double nu1, double nu2) {
    if (id == "oseen-paper") return paper_case(nu1, nu2);
    if (id == "steady-poly") return steady_poly_case(nu1, nu2);
    if (id == "tracking-only") return tracking_case();
    throw Error("unknown case: " + id + " (expected oseen-paper, steady-poly, tracking-only)");
}

VelocityField rotation_field(const Vec2& center, double omega) {
    VelocityField w;
    w.value = [center, omega](const Vec2& x, double) {
        return Vec2{-omega * (x.y - center.y), omega * (x.x - center.x)};
    };
    w.gradient = [omega](const Vec2&, double) { return Mat2{0.0, -omega, omega, 0.0}; };
    return w;
}

CasePoint emit_case_functions(const ProblemCase& c, int phase, const Vec2& x, double t,
                              const Vec2& normal) {
    CasePoint out;
    out.w = c.w.value(x, t);
    if (c.has_solution()) {
        out.u = c.u(phase, x, t);
        out.p = c.p(phase, x, t);
        out.f = c.f(phase, x, t);
        out.g0 = c.g0(x, t);
        out.g1 = c.g1(x, normal, t);
    }
    return out;
}

std::vector<double> EocTable::orders(double EocRow::*err) const {
    std::vector<double> out;
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
        if (!rows[i].ok || !rows[i + 1].ok || rows[i].*err <= 0.0 || rows[i + 1].*err <= 0.0) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        out.push_back(std::log2(rows[i].*err / rows[i + 1].*err));
    }
    return out;
}

namespace {

std::string fmt_err(double e) {
    if (e <= 0.0) return "0";
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(3);
    os << e;
    return os.str();
}

std::string fmt_ord(double o) {
    if (std::isnan(o)) return "---";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << o;
    return os.str();
}

} // namespace

std::string EocTable::to_text() const {
    std::ostringstream os;
    os << "h=tau      e_u0        ord    e_u1        ord    e_p0        ord    e_p1        ord\n";
    const auto o_u0 = orders(&EocRow::e_u0), o_u1 = orders(&EocRow::e_u1);
    const auto o_p0 = orders(&EocRow::e_p0), o_p1 = orders(&EocRow::e_p1);
    for (size_t i = 0; i < rows.size(); ++i) {
        const EocRow& r = rows[i];
        os << "1/" << r.nc << (r.nc < 100 ? "    " : "   ");
        if (!r.ok) {
            os << "FAILED: " << r.note << "\n";
            continue;
        }
        auto ord = [&](const std::vector<double>& o) {
            return i == 0 ? std::string("---") : fmt_ord(o[i - 1]);
        };
        os << fmt_err(r.e_u0) << "   " << ord(o_u0) << "   " << fmt_err(r.e_u1) << "   "
           << ord(o_u1) << "   " << fmt_err(r.e_p0) << "   " << ord(o_p0) << "   "
           << fmt_err(r.e_p1) << "   " << ord(o_p1) << "\n";
    }
    return os.str();
}

std::string EocTable::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "nc,h,e_u0,ord_u0,e_u1,ord_u1,e_p0,ord_p0,e_p1,ord_p1,ok,note\n";
    const auto o_u0 = orders(&EocRow::e_u0), o_u1 = orders(&EocRow::e_u1);
    const auto o_p0 = orders(&EocRow::e_p0), o_p1 = orders(&EocRow::e_p1);
    for (size_t i = 0; i < rows.size(); ++i) {
        const EocRow& r = rows[i];
        auto ord = [&](const std::vector<double>& o) -> std::string {
            if (i == 0 || std::isnan(o[i - 1])) return "";
            std::ostringstream s;
            s << o[i - 1];
            return s.str();
        };
        os << r.nc << "," << r.h << "," << r.e_u0 << "," << ord(o_u0) << "," << r.e_u1 << ","
           << ord(o_u1) << "," << r.e_p0 << "," << ord(o_p0) << "," << r.e_p1 << "," << ord(o_p1)
           << "," << (r.ok ? 1 : 0) << "," << r.note << "\n";
    }
    return os.str();
}

StudyResult convergence_study(const RunConfig& base, const std::vector<int>& levels) {
    StudyResult out;
    for (int nc : levels) {
        RunConfig cfg = base;
        cfg.nc = nc;
        cfg.tau = cfg.h();
        cfg.eta = -1.0; // re-derive from tau
        cfg.quad_order = base.quad_order;
        EocRow row;
        row.nc = nc;
        row.h = cfg.h();
        try {
            TimeLoop loop(cfg, make_case(cfg.case_id, cfg.nu1, cfg.nu2));
            RunResult res = loop.run();
            if (res.failed) {
                row.ok = false;
                row.note = res.failure;
            } else {
                row.ok = true;
                row.e_u0 = res.e_u0;
                row.e_u1 = res.e_u1;
                row.e_p0 = res.e_p0;
                row.e_p1 = res.e_p1;
            }
            out.runs.push_back(std::move(res));
        } catch (const std::exception& e) {
            row.ok = false;
            row.note = e.what();
            RunResult res;
            res.failed = true;
            res.failure = e.what();
            out.runs.push_back(std::move(res));
        }
        out.table.rows.push_back(std::move(row));
    }
    return out;
}

TrackingStudy tracking_order_study(int k, const std::vector<int>& levels, double T,
                                   const std::string& case_id) {
    TrackingStudy study;
    const ProblemCase probe = make_case(case_id, 1.0, 1e-3);

    // reference: fine RK4 trace of sample points on the initial circle
    const int n_samples = 144;
    std::vector<Vec2> start(n_samples), reference(n_samples);
    std::vector<double> sample_l(n_samples);
    const double L0 = 2.0 * M_PI * probe.disk_radius;
    for (int s = 0; s < n_samples; ++s) {
        sample_l[s] = L0 * s / n_samples;
        const double th = sample_l[s] / probe.disk_radius;
        start[s] = {probe.disk_center.x + probe.disk_radius * std::cos(th),
                    probe.disk_center.y + probe.disk_radius * std::sin(th)};
    }
    {
        const RKTableau rk = RKTableau::named("rk4");
        const int fine = 40 * (*std::max_element(levels.begin(), levels.end()));
        const double dt = T / fine;
        for (int s = 0; s < n_samples; ++s) {
            Vec2 p = start[s];
            for (int m = 0; m < fine; ++m) p = advance_point(p, m * dt, dt, rk, probe.w);
            reference[s] = p;
        }
    }

    for (int nc : levels) {
        RunConfig cfg;
        cfg.k = k;
        cfg.nc = nc;
        cfg.tau = 1.0 / nc;
        cfg.T = T;
        cfg.case_id = "tracking-only";
        cfg.finalize();
        TimeLoop loop(cfg, make_case("tracking-only", 1.0, 1e-3));
        const int N = static_cast<int>(std::lround(T * nc));
        for (int n = 0; n < N; ++n) loop.track_one_step();
        double sup = 0.0;
        for (int s = 0; s < n_samples; ++s)
            sup = std::max(sup, (loop.spline().eval(sample_l[s]) - reference[s]).norm());
        study.taus.push_back(cfg.tau);
        study.sup_errors.push_back(sup);
    }
    const size_t n = study.sup_errors.size();
    if (n >= 2)
        study.order = std::log2(study.sup_errors[n - 2] / study.sup_errors[n - 1]);
    return study;
}

} // namespace cutoseen
