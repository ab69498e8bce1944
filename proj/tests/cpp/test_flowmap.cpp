#include <doctest.h>

#include <cmath>
#include <random>

#include "cutoseen/flowmap.hpp"
#include "cutoseen/harness.hpp"

using namespace cutoseen;

namespace {

VelocityField constant_field(const Vec2& c) {
    VelocityField w;
    w.value = [c](const Vec2&, double) { return c; };
    w.gradient = [](const Vec2&, double) { return Mat2{}; };
    return w;
}

} // namespace

TEST_CASE("BDF coefficients: exact rational consistency conditions") {
    for (int k = 1; k <= 4; ++k) {
        std::array<long, 5> num;
        long den;
        BDFScheme::exact_coefficients(k, num, den);
        // sum lambda = 0; sum (-j)^m lambda = delta_{m,1} for m = 1..k
        long s0 = 0;
        for (int j = 0; j <= k; ++j) s0 += num[j];
        CHECK(s0 == 0);
        for (int m = 1; m <= k; ++m) {
            long sm = 0;
            for (int j = 0; j <= k; ++j) {
                long p = 1;
                for (int t = 0; t < m; ++t) p *= -j;
                sm += num[j] * p;
            }
            CHECK(sm == (m == 1 ? den : 0));
        }
    }
    // the table values
    const BDFScheme b2 = BDFScheme::order(2);
    CHECK(b2.lambda[0] == doctest::Approx(1.5));
    CHECK(b2.lambda[1] == doctest::Approx(-2.0));
    CHECK(b2.lambda[2] == doctest::Approx(0.5));
    const BDFScheme b3 = BDFScheme::order(3);
    CHECK(b3.lambda[0] == doctest::Approx(11.0 / 6.0));
    CHECK(b3.lambda[3] == doctest::Approx(-1.0 / 3.0));
    const BDFScheme b4 = BDFScheme::order(4);
    CHECK(b4.lambda[0] == doctest::Approx(25.0 / 12.0));
    CHECK(b4.lambda[4] == doctest::Approx(0.25));
}

TEST_CASE("RK tableau order conditions") {
    for (const char* name : {"rk3", "rk4", "rk5"}) {
        const RKTableau tab = RKTableau::named(name);
        const auto res = tab.order_condition_residuals();
        REQUIRE(!res.empty());
        for (double r : res) CHECK(std::abs(r) < 1e-14);
    }
    CHECK(RKTableau::for_scheme_order(2).order == 3);
    CHECK(RKTableau::for_scheme_order(3).order == 4);
    CHECK(RKTableau::for_scheme_order(4).order == 5);
    CHECK_THROWS_AS(RKTableau::named("rk7"), Error);
    const std::string json = RKTableau::named("rk4").to_json();
    CHECK(json.find("\"order\": 4") != std::string::npos);
}

TEST_CASE("advance_point: constant field and zero field") {
    const RKTableau tab = RKTableau::named("rk4");
    const VelocityField w = constant_field({0.3, -0.2});
    const Vec2 out = advance_point({0.5, 0.5}, 0.0, 0.25, tab, w);
    CHECK((out - Vec2{0.575, 0.45}).norm() < 1e-15);
    const VelocityField z = constant_field({0.0, 0.0});
    const Vec2 still = advance_point({0.1, 0.9}, 0.0, 0.25, tab, z);
    CHECK((still - Vec2{0.1, 0.9}).norm() == 0.0);
}

TEST_CASE("advance_point on a rigid rotation: accuracy and order") {
    const Vec2 c{0.0, 0.0};
    const VelocityField w = rotation_field(c, 1.0);
    const Vec2 x0{1.0, 0.0};
    auto exact = [&](double t) { return Vec2{std::cos(t), std::sin(t)}; };

    const RKTableau rk4 = RKTableau::named("rk4");
    const Vec2 one = advance_point(x0, 0.0, 0.1, rk4, w);
    CHECK((one - exact(0.1)).norm() < 1e-6);
    // halving tau reduces the one-step error by ~2^5 for RK4
    const double e1 = (advance_point(x0, 0.0, 0.1, rk4, w) - exact(0.1)).norm();
    const double e2 = (advance_point(x0, 0.0, 0.05, rk4, w) - exact(0.05)).norm();
    CHECK(e1 / e2 > 24.0);

    // one-step order matches tab.order (Richardson on the global error at T)
    for (const char* name : {"rk3", "rk4", "rk5"}) {
        const RKTableau tab = RKTableau::named(name);
        double err[2];
        for (int lev = 0; lev < 2; ++lev) {
            const int n = 20 << lev;
            const double dt = 1.0 / n;
            Vec2 p = x0;
            for (int m = 0; m < n; ++m) p = advance_point(p, m * dt, dt, tab, w);
            err[lev] = (p - exact(1.0)).norm();
        }
        const double rate = std::log2(err[0] / err[1]);
        CHECK(rate == doctest::Approx(tab.order).epsilon(0.08));
    }
}

TEST_CASE("jacobian: identity for constant fields, FD oracle for smooth ones") {
    const RKTableau tab = RKTableau::named("rk4");
    const VelocityField wc = constant_field({0.4, 0.1});
    const Mat2 jc = flow_jacobian({0.2, 0.7}, 0.0, 0.2, tab, wc);
    CHECK((jc - Mat2::identity()).max_abs() < 1e-15);

    const ProblemCase paper = make_case("oseen-paper", 1.0, 1e-3);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> dist(0.15, 0.85);
    const double tau = 0.05;
    for (int i = 0; i < 20; ++i) {
        const Vec2 x{dist(rng), dist(rng)};
        const Mat2 J = flow_jacobian(x, 0.3, tau, tab, paper.w);
        const double d = 1e-6;
        const Vec2 fx1 = advance_point({x.x + d, x.y}, 0.3, tau, tab, paper.w);
        const Vec2 fx0 = advance_point({x.x - d, x.y}, 0.3, tau, tab, paper.w);
        const Vec2 fy1 = advance_point({x.x, x.y + d}, 0.3, tau, tab, paper.w);
        const Vec2 fy0 = advance_point({x.x, x.y - d}, 0.3, tau, tab, paper.w);
        const Mat2 fd{(fx1.x - fx0.x) / (2 * d), (fy1.x - fy0.x) / (2 * d),
                      (fx1.y - fx0.y) / (2 * d), (fy1.y - fy0.y) / (2 * d)};
        CHECK((J - fd).max_abs() < 1e-8);
    }
}

TEST_CASE("jacobian stays within O(tau) of the identity on the deforming field") {
    const ProblemCase paper = make_case("oseen-paper", 1.0, 1e-3);
    const RKTableau tab = RKTableau::named("rk4");
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    for (double tau : {0.05, 0.025}) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const Vec2 x{dist(rng), dist(rng)};
            worst = std::max(worst, (flow_jacobian(x, 0.0, tau, tab, paper.w) -
                                     Mat2::identity()).max_abs());
        }
        CHECK(worst < 8.0 * tau); // |grad w| <= 2 pi on this field
        // divergence-free field: det J = 1 + O(tau^{order})
        for (int i = 0; i < 50; ++i) {
            const Vec2 x{dist(rng), dist(rng)};
            const double det = flow_jacobian(x, 0.0, tau, tab, paper.w).det();
            CHECK(std::abs(det - 1.0) < 8.0 * tau);
        }
    }
}

TEST_CASE("forward_multi: identity, associativity, global order") {
    const VelocityField w = rotation_field({0.0, 0.0}, 1.0);
    const RKTableau tab = RKTableau::named("rk4");

    FlowMapStack stack(tab, w, 4);
    const double tau = 0.05;
    for (int n = 1; n <= 4; ++n) stack.push(n, (n - 1) * tau, tau);

    const Vec2 x{0.8, -0.1};
    CHECK((stack.forward(x, 2, 2) - x).norm() == 0.0);

    const Vec2 two_jump = stack.forward(x, 0, 2);
    const Vec2 chained = stack.forward(stack.forward(x, 0, 1), 1, 2);
    CHECK((two_jump - chained).norm() < 1e-15);

    // multi-step composition error ~ n tau^{k+2} per the one-step order
    double err[2];
    for (int lev = 0; lev < 2; ++lev) {
        const int n = 8 << lev;
        const double dt = 0.4 / n;
        FlowMapStack s2(tab, w, n);
        for (int m = 1; m <= n; ++m) s2.push(m, (m - 1) * dt, dt);
        const Vec2 y = s2.forward(x, 0, n);
        const Vec2 exact{x.x * std::cos(0.4) - x.y * std::sin(0.4),
                         x.x * std::sin(0.4) + x.y * std::cos(0.4)};
        err[lev] = (y - exact).norm();
    }
    CHECK(std::log2(err[0] / err[1]) == doctest::Approx(4.0).epsilon(0.1));

    CHECK_THROWS_AS(stack.forward(x, -2, 2), Error);
}

TEST_CASE("inverse_map: round trip, zero field, analytic rotation") {
    const ProblemCase paper = make_case("oseen-paper", 1.0, 1e-3);
    const RKTableau tab = RKTableau::named("rk4");
    FlowMapStack stack(tab, paper.w, 3);
    const double tau = 1.0 / 32.0;
    for (int n = 1; n <= 3; ++n) stack.push(n, (n - 1) * tau, tau);

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> dist(0.2, 0.8);
    for (int i = 0; i < 100; ++i) {
        const Vec2 x{dist(rng), dist(rng)};
        const Vec2 y = stack.forward(x, 0, 3);
        const Vec2 back = stack.inverse(y, 0, 3);
        CHECK((back - x).norm() < 1e-12);
    }

    FlowMapStack zero_stack(tab, constant_field({0.0, 0.0}), 2);
    zero_stack.push(1, 0.0, tau);
    const Vec2 y{0.3, 0.4};
    CHECK((zero_stack.inverse(y, 0, 1) - y).norm() == 0.0);

    const VelocityField rot = rotation_field({0.0, 0.0}, 1.0);
    FlowMapStack rstack(tab, rot, 1);
    rstack.push(1, 0.0, 0.1);
    const Vec2 p{0.9, 0.2};
    const Vec2 inv = rstack.inverse(p, 0, 1);
    const Vec2 exact{p.x * std::cos(-0.1) - p.y * std::sin(-0.1),
                     p.x * std::sin(-0.1) + p.y * std::cos(-0.1)};
    CHECK((inv - exact).norm() < 2e-7); // tau^5 one-step + tolerance
}

TEST_CASE("tracked spline stays within the tracking error budget of the flow") {
    // Theorem-style check: the distance between the refit spline and the
    // one-step image of the previous spline is O(tau^{k+2} + tau eta^4)
    const ProblemCase paper = make_case("oseen-paper", 1.0, 1e-3);
    const RKTableau tab = RKTableau::named("rk4");
    const double tau = 1.0 / 32.0;
    MarkerChain chain = circle_markers({0.5, 0.75}, 0.15, 64);
    const SplineInterface before = fit_periodic_spline(chain);
    for (Vec2& p : chain.points) p = advance_point(p, 0.0, tau, tab, paper.w);
    const SplineInterface after = fit_periodic_spline(chain);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const double l = before.period() * i / 500.0;
        const Vec2 mapped = advance_point(before.eval(l), 0.0, tau, tab, paper.w);
        worst = std::max(worst, (after.eval(l) - mapped).norm());
    }
    const double eta = 2.0 * M_PI * 0.15 / 64.0;
    CHECK(worst < 50.0 * (std::pow(tau, 6.0) + tau * std::pow(eta, 4.0)));
}
