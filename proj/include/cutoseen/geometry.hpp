#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cutoseen/core.hpp"

namespace cutoseen {

/// Closed chain of interface markers. Point j sits at curve parameter
/// params[j]; the chain wraps (point J == point 0, params[J] = params[0] + L).
/// Parameters are the arclength values of the initial curve and never change
/// while markers move.
struct MarkerChain {
    std::vector<Vec2> points;   // size J, closing point not duplicated
    std::vector<double> params; // size J+1, strictly increasing
    double eta = 0.0;           // nominal segment size

    int count() const { return static_cast<int>(points.size()); }
    double period() const { return params.back() - params.front(); }

    /// J >= 8, strictly increasing params, non-degenerate and simple polygon.
    void validate() const;

    std::string to_json() const;
    static MarkerChain from_json(const std::string& text);
};

enum class Side { Inside1, Inside2, OnCurve };

struct CurveIntersection {
    double l = 0.0; // curve parameter
    Vec2 point;
};

/// Closed C2 periodic cubic spline through a marker chain. Immutable after
/// construction; queries are safe to call concurrently.
class SplineInterface {
public:
    /// Cubic pieces in local coordinate u = l - knot[j].
    struct Segment {
        Vec2 a, b, c, d; // s(u) = a + b u + c u^2 + d u^3
        double h = 0.0;  // knot spacing
        double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0; // control-point bbox
    };

    SplineInterface() = default;

    int segment_count() const { return static_cast<int>(segments_.size()); }
    double period() const { return period_; }
    double param_origin() const { return knots_.empty() ? 0.0 : knots_.front(); }
    bool counterclockwise() const { return ccw_; }
    const std::vector<double>& knots() const { return knots_; }

    Vec2 eval(double l, int deriv_order = 0) const;
    Vec2 unit_normal(double l) const;

    Side side_of(const Vec2& x) const;
    /// Signed distance info: nearest parameter and unsigned distance.
    struct Nearest {
        double l = 0.0;
        double dist = 0.0;
    };
    Nearest nearest_point(const Vec2& x) const;

    /// Intersections with the axis-aligned segment [a,b] (an element edge),
    /// sorted by curve parameter. Transversal crossings only; tangential
    /// grazing contributes no points.
    std::vector<CurveIntersection> edge_intersections(const Vec2& a, const Vec2& b) const;

    /// Signed enclosed area (positive for counterclockwise orientation).
    double signed_area() const;
    double enclosed_area() const { return std::abs(signed_area()); }
    double length() const;

    void bounding_box(Vec2& lo, Vec2& hi) const;

    /// Tolerance for OnCurve classification (absolute, length units).
    double on_curve_tol() const { return on_tol_; }

    std::string polyline_csv(int samples_per_segment = 8) const;
    std::string to_svg(int samples_per_segment = 8) const;

    friend SplineInterface fit_periodic_spline(const MarkerChain& markers);

private:
    std::vector<double> knots_; // size J+1
    std::vector<Segment> segments_;
    double period_ = 0.0;
    bool ccw_ = true;
    double scale_ = 1.0; // bbox diagonal
    double on_tol_ = 1e-12;
    Vec2 bbox_lo_, bbox_hi_;
    // coarse polyline cache for winding-number queries: (param, point)
    std::vector<double> poly_l_;
    std::vector<Vec2> poly_p_;
    double poly_sagitta_ = 0.0;

    int locate(double l, double& u) const;
    void build_polyline();
};

SplineInterface fit_periodic_spline(const MarkerChain& markers);

/// Chord-length equidistribution: inserts spline midpoints on chords longer
/// than 2*target_eta (repeated until none remain) and removes alternate
/// markers where two consecutive chords are shorter than 0.5*target_eta.
MarkerChain redistribute_markers(const MarkerChain& markers, double target_eta,
                                 const SplineInterface* fitted = nullptr);

/// Markers equally spaced in arclength on a circle, params = initial arclength.
MarkerChain circle_markers(const Vec2& center, double radius, int count);

} // namespace cutoseen
