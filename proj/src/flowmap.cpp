#include "cutoseen/flowmap.hpp"

#include <nlohmann/json.hpp>

namespace cutoseen {

RKTableau RKTableau::named(const std::string& name) {
    RKTableau t;
    t.name = name;
    if (name == "rk3") { // Kutta's third-order scheme
        t.order = 3;
        t.c = {0.0, 0.5, 1.0};
        t.b = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
        t.a = {{0, 0, 0}, {0.5, 0, 0}, {-1.0, 2.0, 0}};
    } else if (name == "rk4") { // classical fourth-order scheme
        t.order = 4;
        t.c = {0.0, 0.5, 0.5, 1.0};
        t.b = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
        t.a = {{0, 0, 0, 0}, {0.5, 0, 0, 0}, {0, 0.5, 0, 0}, {0, 0, 1.0, 0}};
    } else if (name == "rk5") { // Butcher's six-stage fifth-order scheme
        t.order = 5;
        t.c = {0.0, 0.25, 0.25, 0.5, 0.75, 1.0};
        t.b = {7.0 / 90.0, 0.0, 32.0 / 90.0, 12.0 / 90.0, 32.0 / 90.0, 7.0 / 90.0};
        t.a = {{0, 0, 0, 0, 0, 0},
               {0.25, 0, 0, 0, 0, 0},
               {0.125, 0.125, 0, 0, 0, 0},
               {0, -0.5, 1.0, 0, 0, 0},
               {3.0 / 16.0, 0, 0, 9.0 / 16.0, 0, 0},
               {-3.0 / 7.0, 2.0 / 7.0, 12.0 / 7.0, -12.0 / 7.0, 8.0 / 7.0, 0}};
    } else {
        throw Error("unknown RK tableau: " + name);
    }
    return t;
}

RKTableau RKTableau::for_scheme_order(int k) {
    switch (k) {
        case 2: return named("rk3");
        case 3: return named("rk4");
        case 4: return named("rk5");
        default: throw Error("scheme order k must be 2, 3, or 4");
    }
}

std::vector<double> RKTableau::order_condition_residuals() const {
    const int n = stages();
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            if (a[i][j] != 0.0) return {}; // not explicit

    auto dotc = [&](const std::vector<double>& v) {
        std::vector<double> r(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) r[i] += a[i][j] * v[j];
        return r;
    };
    std::vector<double> c2(n), c3(n), c4(n);
    for (int i = 0; i < n; ++i) {
        c2[i] = c[i] * c[i];
        c3[i] = c2[i] * c[i];
        c4[i] = c3[i] * c[i];
    }
    const auto ac = dotc(c), ac2 = dotc(c2), ac3 = dotc(c3);
    const auto aac = dotc(ac), aac2 = dotc(ac2);
    std::vector<double> cac(n), acac(n);
    for (int i = 0; i < n; ++i) cac[i] = c[i] * ac[i];
    acac = dotc(cac);
    const auto aaac = dotc(aac);

    auto wsum = [&](auto f) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += b[i] * f(i);
        return s;
    };
    std::vector<double> res;
    auto add = [&](double value, double target) { res.push_back(value - target); };
    // row-sum consistency c_i = sum_j a_ij
    for (int i = 0; i < n; ++i) {
        double rs = 0.0;
        for (int j = 0; j < n; ++j) rs += a[i][j];
        res.push_back(rs - c[i]);
    }
    add(wsum([&](int i) { return 1.0; }), 1.0);
    if (order >= 2) add(wsum([&](int i) { return c[i]; }), 0.5);
    if (order >= 3) {
        add(wsum([&](int i) { return c2[i]; }), 1.0 / 3.0);
        add(wsum([&](int i) { return ac[i]; }), 1.0 / 6.0);
    }
    if (order >= 4) {
        add(wsum([&](int i) { return c3[i]; }), 0.25);
        add(wsum([&](int i) { return c[i] * ac[i]; }), 0.125);
        add(wsum([&](int i) { return ac2[i]; }), 1.0 / 12.0);
        add(wsum([&](int i) { return aac[i]; }), 1.0 / 24.0);
    }
    if (order >= 5) {
        add(wsum([&](int i) { return c4[i]; }), 0.2);
        add(wsum([&](int i) { return c2[i] * ac[i]; }), 0.1);
        add(wsum([&](int i) { return ac[i] * ac[i]; }), 0.05);
        add(wsum([&](int i) { return c[i] * ac2[i]; }), 1.0 / 15.0);
        add(wsum([&](int i) { return ac3[i]; }), 0.05);
        add(wsum([&](int i) { return c[i] * aac[i]; }), 1.0 / 30.0);
        add(wsum([&](int i) { return acac[i]; }), 1.0 / 40.0);
        add(wsum([&](int i) { return aac2[i]; }), 1.0 / 60.0);
        add(wsum([&](int i) { return aaac[i]; }), 1.0 / 120.0);
    }
    return res;
}

std::string RKTableau::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["order"] = order;
    j["a"] = a;
    j["b"] = b;
    j["c"] = c;
    return j.dump(2);
}

Vec2 advance_point(const Vec2& x, double t0, double tau, const RKTableau& tab,
                   const VelocityField& w) {
    const int n = tab.stages();
    std::vector<Vec2> k(n);
    for (int i = 0; i < n; ++i) {
        Vec2 xi = x;
        for (int j = 0; j < i; ++j) xi += (tau * tab.a[i][j]) * k[j];
        k[i] = w.value(xi, t0 + tab.c[i] * tau);
    }
    Vec2 out = x;
    for (int i = 0; i < n; ++i) out += (tau * tab.b[i]) * k[i];
    return out;
}

void advance_with_jacobian(const Vec2& x, double t0, double tau, const RKTableau& tab,
                           const VelocityField& w, Vec2& image, Mat2& jac) {
    const int n = tab.stages();
    std::vector<Vec2> k(n);
    std::vector<Mat2> gk(n); // d k_i / d x = grad w * grad phi_i
    for (int i = 0; i < n; ++i) {
        Vec2 xi = x;
        Mat2 dphi = Mat2::identity();
        for (int j = 0; j < i; ++j) {
            xi += (tau * tab.a[i][j]) * k[j];
            dphi += (tau * tab.a[i][j]) * gk[j];
        }
        const double ti = t0 + tab.c[i] * tau;
        k[i] = w.value(xi, ti);
        gk[i] = w.gradient(xi, ti) * dphi;
    }
    image = x;
    jac = Mat2::identity();
    for (int i = 0; i < n; ++i) {
        image += (tau * tab.b[i]) * k[i];
        jac += (tau * tab.b[i]) * gk[i];
    }
}

Mat2 flow_jacobian(const Vec2& x, double t0, double tau, const RKTableau& tab,
                   const VelocityField& w) {
    Vec2 image;
    Mat2 jac;
    advance_with_jacobian(x, t0, tau, tab, w, image, jac);
    return jac;
}

void FlowMapStack::push(int n, double t0, double tau) {
    if (!steps_.empty() && n != newest_ + 1)
        throw Error("flow map stack: steps must be pushed consecutively");
    steps_.push_back({t0, tau});
    newest_ = n;
    while (static_cast<int>(steps_.size()) > depth_) steps_.pop_front();
}

const FlowMapStack::Step& FlowMapStack::step_ending_at(int m) const {
    const int idx = static_cast<int>(steps_.size()) - 1 - (newest_ - m);
    if (idx < 0 || idx >= static_cast<int>(steps_.size()))
        throw Error("flow map stack: step " + std::to_string(m) + " not available");
    return steps_[idx];
}

Vec2 FlowMapStack::forward(const Vec2& x, int m, int n) const {
    if (m > n) throw Error("flow map stack: forward requires m <= n");
    Vec2 p = x;
    for (int s = m + 1; s <= n; ++s) {
        const Step& st = step_ending_at(s);
        p = advance_point(p, st.t0, st.tau, tab_, w_);
    }
    return p;
}

Mat2 FlowMapStack::forward_jacobian(const Vec2& x, int m, int n) const {
    Vec2 p = x;
    Mat2 J = Mat2::identity();
    for (int s = m + 1; s <= n; ++s) {
        const Step& st = step_ending_at(s);
        Vec2 next;
        Mat2 Jstep;
        advance_with_jacobian(p, st.t0, st.tau, tab_, w_, next, Jstep);
        J = Jstep * J;
        p = next;
    }
    return J;
}

Vec2 FlowMapStack::invert_one_step(const Vec2& y, int m) const {
    const Step& st = step_ending_at(m);
    // initial guess: reversed-time RK step
    Vec2 x = advance_point(y, st.t0 + st.tau, -st.tau, tab_, w_);
    double res = 1e300;
    for (int it = 0; it < 50; ++it) {
        Vec2 fx;
        Mat2 J;
        advance_with_jacobian(x, st.t0, st.tau, tab_, w_, fx, J);
        const Vec2 r = fx - y;
        res = r.norm();
        if (res < 1e-13) return x;
        Vec2 step = J.inverse() * r;
        // damped update: halve while the residual grows
        double alpha = 1.0;
        for (int d = 0; d < 30; ++d) {
            const Vec2 cand = x - alpha * step;
            const Vec2 rc = advance_point(cand, st.t0, st.tau, tab_, w_) - y;
            if (rc.norm() < res) {
                x = cand;
                break;
            }
            alpha *= 0.5;
            if (d == 29) throw Error("flow map inversion: Newton stalled");
        }
    }
    if (res < 1e-10) return x;
    throw Error("flow map inversion: Newton did not converge");
}

Vec2 FlowMapStack::inverse(const Vec2& y, int m, int n) const {
    if (m > n) throw Error("flow map stack: inverse requires m <= n");
    Vec2 p = y;
    for (int s = n; s > m; --s) p = invert_one_step(p, s);
    return p;
}

} // namespace cutoseen
