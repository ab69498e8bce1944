#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "cutoseen/core.hpp"

namespace cutoseen {

/// Explicit Runge-Kutta tableau.
struct RKTableau {
    std::string name;
    int order = 0;
    std::vector<std::vector<double>> a; // strictly lower triangular
    std::vector<double> b;
    std::vector<double> c;

    int stages() const { return static_cast<int>(b.size()); }

    /// Residuals of all order conditions up to `order` (17 through order 5);
    /// empty means the tableau shape itself is invalid.
    std::vector<double> order_condition_residuals() const;
    std::string to_json() const;

    /// "rk3" (Kutta), "rk4" (classical), "rk5" (Butcher 6-stage), or the
    /// stepping order k in {2,3,4} via for_scheme_order.
    static RKTableau named(const std::string& name);
    static RKTableau for_scheme_order(int k);
};

/// Advection velocity with its spatial gradient; analytic, smooth, vanishing
/// on the domain boundary.
struct VelocityField {
    std::function<Vec2(const Vec2&, double)> value;
    std::function<Mat2(const Vec2&, double)> gradient;
};

Vec2 advance_point(const Vec2& x, double t0, double tau, const RKTableau& tab,
                   const VelocityField& w);

/// Exact Jacobian of the discrete one-step map (stage recursion).
Mat2 flow_jacobian(const Vec2& x, double t0, double tau, const RKTableau& tab,
                   const VelocityField& w);

/// One RK step together with its Jacobian (shares stage evaluations).
void advance_with_jacobian(const Vec2& x, double t0, double tau, const RKTableau& tab,
                           const VelocityField& w, Vec2& image, Mat2& jac);

/// Ring of the most recent one-step maps X^{m-1,m}; supports multi-step
/// composition and Newton-based inversion.
class FlowMapStack {
public:
    FlowMapStack(RKTableau tab, VelocityField w, int depth)
        : tab_(std::move(tab)), w_(std::move(w)), depth_(depth) {}

    /// Register the one-step map over [t0, t0+tau] ending at step index n.
    void push(int n, double t0, double tau);

    int newest_step() const { return newest_; }
    int oldest_step() const { return newest_ - static_cast<int>(steps_.size()); }
    const RKTableau& tableau() const { return tab_; }
    const VelocityField& velocity() const { return w_; }

    /// X_tau^{m,n}(x): forward composition from step m to step n (m <= n).
    Vec2 forward(const Vec2& x, int m, int n) const;
    /// Jacobian of X_tau^{m,n} at x.
    Mat2 forward_jacobian(const Vec2& x, int m, int n) const;
    /// X_tau^{n,m}(y) = (X_tau^{m,n})^{-1}(y) for m <= n (Newton per one-step map).
    Vec2 inverse(const Vec2& y, int m, int n) const;

    /// Inverse of a single registered one-step map (step index m -> m-1).
    Vec2 invert_one_step(const Vec2& y, int m) const;

private:
    struct Step {
        double t0 = 0.0;
        double tau = 0.0;
    };
    const Step& step_ending_at(int m) const;

    RKTableau tab_;
    VelocityField w_;
    int depth_ = 0;
    int newest_ = 0;
    std::deque<Step> steps_; // steps_.back() ends at newest_
};

} // namespace cutoseen
