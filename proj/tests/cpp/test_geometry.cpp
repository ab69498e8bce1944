#include <doctest.h>

#include <cmath>
#include <random>

#include "cutoseen/geometry.hpp"

using namespace cutoseen;

namespace {

MarkerChain ellipse_markers(double a, double b, const Vec2& c, int count) {
    // parametrized by the scaled angle; params are the initial "arclength-like"
    // values of that parametrization
    MarkerChain m;
    const double L = 2.0 * M_PI;
    for (int j = 0; j < count; ++j) {
        const double th = L * j / count;
        m.points.push_back({c.x + a * std::cos(th), c.y + b * std::sin(th)});
        m.params.push_back(th);
    }
    m.params.push_back(L);
    m.eta = L / count;
    return m;
}

double max_radius_error(const SplineInterface& s, const Vec2& c, double r, int samples) {
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double l = s.period() * i / samples;
        worst = std::max(worst, std::abs((s.eval(l) - c).norm() - r));
    }
    return worst;
}

} // namespace

TEST_CASE("circle spline accuracy with 16 markers") {
    const Vec2 c{0.5, 0.75};
    const double r = 0.15;
    const SplineInterface s = fit_periodic_spline(circle_markers(c, r, 16));
    CHECK(max_radius_error(s, c, r, 1000) < 1e-3);
}

TEST_CASE("spline interpolates markers exactly") {
    const MarkerChain m = circle_markers({0.3, 0.4}, 0.2, 24);
    const SplineInterface s = fit_periodic_spline(m);
    for (int j = 0; j < m.count(); ++j) {
        const Vec2 p = s.eval(m.params[j]);
        CHECK((p - m.points[j]).norm() < 1e-13);
    }
}

TEST_CASE("square marker chain evaluates to markers at knots") {
    MarkerChain m;
    const int per_side = 4;
    const int J = 4 * per_side;
    for (int side = 0; side < 4; ++side)
        for (int i = 0; i < per_side; ++i) {
            const double t = static_cast<double>(i) / per_side;
            switch (side) {
                case 0: m.points.push_back({t, 0.0}); break;
                case 1: m.points.push_back({1.0, t}); break;
                case 2: m.points.push_back({1.0 - t, 1.0}); break;
                case 3: m.points.push_back({0.0, 1.0 - t}); break;
            }
        }
    for (int j = 0; j <= J; ++j) m.params.push_back(static_cast<double>(j) / J * 4.0);
    m.eta = 4.0 / J;
    const SplineInterface s = fit_periodic_spline(m);
    for (int j = 0; j < J; ++j) CHECK((s.eval(m.params[j]) - m.points[j]).norm() < 1e-13);
}

TEST_CASE("C2 continuity at knots and the wrap point") {
    const MarkerChain m = ellipse_markers(0.21, 0.13, {0.5, 0.5}, 20);
    const SplineInterface s = fit_periodic_spline(m);
    const double L = s.period();
    double scale2 = 1.0;
    for (int j = 0; j <= m.count(); ++j)
        scale2 = std::max(scale2, s.eval(m.params[j % m.count()], 2).norm());
    for (int j = 0; j <= m.count(); ++j) {
        const double l = m.params[j % m.count()];
        const double eps = 1e-9 * L;
        for (int d = 0; d <= 2; ++d) {
            const Vec2 lo = s.eval(l - eps, d), hi = s.eval(l + eps, d);
            const double tol = d == 2 ? 1e-10 * scale2 + 1e-5 : 1e-7;
            CHECK((hi - lo).norm() < tol);
        }
    }
}

TEST_CASE("quartic C0 / cubic C1 convergence on an analytic ellipse") {
    const Vec2 c{0.5, 0.5};
    const double a = 0.23, b = 0.31;
    auto exact = [&](double th) { return Vec2{c.x + a * std::cos(th), c.y + b * std::sin(th)}; };
    auto exact_d = [&](double th) { return Vec2{-a * std::sin(th), b * std::cos(th)}; };
    double e0[3], e1[3];
    for (int lev = 0; lev < 3; ++lev) {
        const int J = 32 << lev;
        const SplineInterface s = fit_periodic_spline(ellipse_markers(a, b, c, J));
        double w0 = 0.0, w1 = 0.0;
        for (int i = 0; i < 4000; ++i) {
            const double th = 2.0 * M_PI * i / 4000.0;
            w0 = std::max(w0, (s.eval(th) - exact(th)).norm());
            w1 = std::max(w1, (s.eval(th, 1) - exact_d(th)).norm());
        }
        e0[lev] = w0;
        e1[lev] = w1;
    }
    const double rate0 = std::log2(e0[1] / e0[2]);
    const double rate1 = std::log2(e1[1] / e1[2]);
    CHECK(rate0 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(rate1 == doctest::Approx(3.0).epsilon(0.2));
    CHECK(e0[1] / e0[0] < 1.0 / 12.0); // halving eta drops C0 error by ~16
}

TEST_CASE("eval periodicity and finite-difference derivative oracle") {
    const SplineInterface s = fit_periodic_spline(circle_markers({0.4, 0.6}, 0.22, 40));
    const double L = s.period();
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dist(0.0, L);
    for (int i = 0; i < 10; ++i) {
        const double l = dist(rng);
        const Vec2 a = s.eval(l), b = s.eval(l + L);
        CHECK((a - b).norm() < 1e-13);
        const double d = 1e-6 * L;
        const Vec2 fd = (s.eval(l + d) - s.eval(l - d)) / (2.0 * d);
        CHECK((fd - s.eval(l, 1)).norm() < 1e-6);
        const Vec2 fd2 = (s.eval(l + d) - 2.0 * s.eval(l) + s.eval(l - d)) / (d * d);
        CHECK((fd2 - s.eval(l, 2)).norm() < 1e-3);
    }
}

TEST_CASE("unit normal of a counterclockwise circle points outward") {
    const Vec2 c{0.5, 0.75};
    const double r = 0.15;
    const SplineInterface s = fit_periodic_spline(circle_markers(c, r, 64));
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(0.0, s.period());
    for (int i = 0; i < 100; ++i) {
        const double l = dist(rng);
        const Vec2 n = s.unit_normal(l);
        CHECK(std::abs(n.norm() - 1.0) < 1e-14);
        CHECK(std::abs(n.dot(s.eval(l, 1))) < 1e-13);
        const Vec2 radial = (s.eval(l) - c) / r;
        CHECK((n - radial).norm() < 1e-3); // radial up to spline error
    }
}

TEST_CASE("side_of against the analytic circle oracle") {
    const Vec2 c{0.5, 0.75};
    const double r = 0.15;
    const SplineInterface s = fit_periodic_spline(circle_markers(c, r, 96));
    CHECK(s.side_of(c) == Side::Inside1);
    CHECK(s.side_of({0.1, 0.1}) == Side::Inside2);

    std::mt19937 rng(123);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec2 x{dist(rng), dist(rng)};
        const double d = (x - c).norm() - r;
        if (std::abs(d) < 2e-6) continue; // spline-vs-circle band
        ++checked;
        const Side side = s.side_of(x);
        CHECK(side == (d < 0 ? Side::Inside1 : Side::Inside2));
    }
    CHECK(checked > 9500);
}

TEST_CASE("side_of constant along a path that does not cross the curve") {
    const SplineInterface s = fit_periodic_spline(circle_markers({0.5, 0.5}, 0.25, 48));
    for (int i = 0; i <= 200; ++i) {
        const double t = 2.0 * M_PI * i / 200.0;
        const Vec2 x{0.5 + 0.1 * std::cos(t), 0.5 + 0.1 * std::sin(t)};
        CHECK(s.side_of(x) == Side::Inside1);
        const Vec2 y{0.5 + 0.45 * std::cos(t), 0.5 + 0.45 * std::sin(t)};
        CHECK(s.side_of(y) == Side::Inside2);
    }
}

TEST_CASE("edge intersections of a vertical edge with a circle") {
    const Vec2 c{0.5, 0.75};
    const double r = 0.15;
    const SplineInterface s = fit_periodic_spline(circle_markers(c, r, 96));
    auto hits = s.edge_intersections({0.5, 0.5}, {0.5, 1.0});
    REQUIRE(hits.size() == 2);
    std::sort(hits.begin(), hits.end(),
              [](const CurveIntersection& a, const CurveIntersection& b) {
                  return a.point.y < b.point.y;
              });
    CHECK(std::abs(hits[0].point.y - 0.60) < 1e-6);
    CHECK(std::abs(hits[1].point.y - 0.90) < 1e-6);
    CHECK(std::abs(hits[0].point.x - 0.5) < 1e-13);
    // residual of the refined root on the curve
    for (const auto& hit : hits) CHECK(std::abs(s.eval(hit.l).x - 0.5) < 1e-13);
}

TEST_CASE("edge outside the bounding box gives no intersections") {
    const SplineInterface s = fit_periodic_spline(circle_markers({0.5, 0.75}, 0.15, 32));
    CHECK(s.edge_intersections({0.0, 0.0}, {1.0, 0.0}).empty());
    CHECK(s.edge_intersections({0.05, 0.0}, {0.05, 1.0}).empty());
}

TEST_CASE("crossing-count parity for edges with endpoints on opposite sides") {
    const SplineInterface s = fit_periodic_spline(circle_markers({0.47, 0.71}, 0.19, 64));
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    int tested = 0;
    for (int i = 0; i < 1000 && tested < 60; ++i) {
        const double xc = dist(rng);
        const Vec2 a{xc, dist(rng)}, b{xc, dist(rng)};
        const Side sa = s.side_of(a), sb = s.side_of(b);
        if (sa == Side::OnCurve || sb == Side::OnCurve || sa == sb) continue;
        ++tested;
        CHECK(s.edge_intersections(a, b).size() % 2 == 1);
    }
    CHECK(tested >= 50);
}

TEST_CASE("enclosed area and length of a circle spline") {
    const double r = 0.15;
    const SplineInterface s = fit_periodic_spline(circle_markers({0.5, 0.75}, r, 160));
    CHECK(std::abs(s.enclosed_area() - M_PI * r * r) < 1e-8);
    CHECK(std::abs(s.length() - 2.0 * M_PI * r) < 1e-8);
    CHECK(s.counterclockwise());
}

TEST_CASE("area error decays at fourth order in eta") {
    const double r = 0.2;
    double err[2];
    for (int lev = 0; lev < 2; ++lev) {
        const int J = 24 << lev;
        const SplineInterface s = fit_periodic_spline(circle_markers({0.5, 0.5}, r, J));
        err[lev] = std::abs(s.enclosed_area() - M_PI * r * r);
    }
    CHECK(std::log2(err[0] / err[1]) > 3.5);
}

TEST_CASE("degenerate and self-intersecting chains are rejected") {
    MarkerChain m = circle_markers({0.5, 0.5}, 0.2, 16);
    m.points[3] = m.points[2];
    CHECK_THROWS_AS(fit_periodic_spline(m), Error);

    MarkerChain fig8;
    const int J = 16;
    for (int j = 0; j < J; ++j) {
        const double t = 2.0 * M_PI * j / J;
        fig8.points.push_back({0.5 + 0.3 * std::sin(2.0 * t), 0.5 + 0.2 * std::sin(t)});
        fig8.params.push_back(t);
    }
    fig8.params.push_back(2.0 * M_PI);
    fig8.eta = 2.0 * M_PI / J;
    CHECK_THROWS_AS(fit_periodic_spline(fig8), Error);

    MarkerChain tiny = circle_markers({0.5, 0.5}, 0.2, 7);
    CHECK_THROWS_AS(fit_periodic_spline(tiny), Error);
}

TEST_CASE("redistribute: uniform chain within thresholds is unchanged") {
    const MarkerChain m = circle_markers({0.5, 0.5}, 0.2, 32);
    const MarkerChain out = redistribute_markers(m, m.eta);
    CHECK(out.count() == m.count());
    for (int j = 0; j < m.count(); ++j) CHECK((out.points[j] - m.points[j]).norm() == 0.0);
}

TEST_CASE("redistribute: one long chord gets exactly one midpoint marker") {
    MarkerChain m = circle_markers({0.5, 0.5}, 0.2, 32);
    const double eta = m.eta;
    // remove two markers to create one long chord (~3 eta)
    m.points.erase(m.points.begin() + 10, m.points.begin() + 12);
    m.params.erase(m.params.begin() + 10, m.params.begin() + 12);
    const MarkerChain out = redistribute_markers(m, eta);
    CHECK(out.count() == m.count() + 1);
}

TEST_CASE("redistribute to fixpoint bounds all chords on a stretched curve") {
    // strongly nonuniform chain on an ellipse
    MarkerChain m;
    const double L = 2.0 * M_PI;
    const int J = 40;
    for (int j = 0; j < J; ++j) {
        const double t = L * j / J;
        const double stretched = t + 0.45 * std::sin(t);
        m.points.push_back({0.5 + 0.3 * std::cos(stretched), 0.5 + 0.18 * std::sin(stretched)});
        m.params.push_back(t);
    }
    m.params.push_back(L);
    m.eta = L / J;
    const double target = 0.035;
    MarkerChain cur = m;
    for (int it = 0; it < 12; ++it) {
        const MarkerChain next = redistribute_markers(cur, target);
        if (next.count() == cur.count()) {
            cur = next;
            break;
        }
        cur = next;
    }
    for (int j = 0; j < cur.count(); ++j) {
        const double chord = (cur.points[(j + 1) % cur.count()] - cur.points[j]).norm();
        CHECK(chord > 0.4 * target);
        CHECK(chord < 2.2 * target);
    }
}

TEST_CASE("marker chain JSON round trip") {
    const MarkerChain m = circle_markers({0.5, 0.75}, 0.15, 32);
    const MarkerChain back = MarkerChain::from_json(m.to_json());
    REQUIRE(back.count() == m.count());
    CHECK(back.eta == m.eta);
    for (int j = 0; j < m.count(); ++j) CHECK((back.points[j] - m.points[j]).norm() == 0.0);
}

TEST_CASE("CSV and SVG exports are well formed") {
    const SplineInterface s = fit_periodic_spline(circle_markers({0.5, 0.75}, 0.15, 16));
    const std::string csv = s.polyline_csv();
    CHECK(csv.rfind("l,x,y\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') > 16);
    const std::string svg = s.to_svg();
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<path") != std::string::npos);
    CHECK(svg.find("Z\"/>") != std::string::npos);
}
