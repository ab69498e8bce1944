#include "cutoseen/geometry.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cutoseen {

namespace {

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        return (b - a).cross(c - a);
    };
    const double o1 = orient(p1, p2, q1);
    const double o2 = orient(p1, p2, q2);
    const double o3 = orient(q1, q2, p1);
    const double o4 = orient(q1, q2, p2);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

// Cyclic tridiagonal solve (sub/diag/super plus corner couplings) via
// Sherman-Morrison on the standard Thomas algorithm.
std::vector<double> solve_cyclic_tridiag(const std::vector<double>& sub,
                                         const std::vector<double>& diag,
                                         const std::vector<double>& sup,
                                         double corner_top_right,
                                         double corner_bottom_left,
                                         std::vector<double> rhs) {
    const int n = static_cast<int>(diag.size());
    if (n == 1) return {rhs[0] / (diag[0] + corner_top_right + corner_bottom_left)};
    if (n == 2) {
        // dense 2x2, corners merge with off-diagonals
        const double a = diag[0], b = sup[0] + corner_top_right;
        const double c = sub[1] + corner_bottom_left, d = diag[1];
        const double det = a * d - b * c;
        return {(rhs[0] * d - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det};
    }
    auto thomas = [&](std::vector<double> b, std::vector<double> r) {
        std::vector<double> x(n);
        for (int i = 1; i < n; ++i) {
            const double m = sub[i] / b[i - 1];
            b[i] -= m * sup[i - 1];
            r[i] -= m * r[i - 1];
        }
        x[n - 1] = r[n - 1] / b[n - 1];
        for (int i = n - 2; i >= 0; --i) x[i] = (r[i] - sup[i] * x[i + 1]) / b[i];
        return x;
    };
    const double gamma = -diag[0];
    std::vector<double> b = diag;
    b[0] = diag[0] - gamma;
    b[n - 1] = diag[n - 1] - corner_top_right * corner_bottom_left / gamma;
    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = corner_bottom_left;
    const std::vector<double> x = thomas(b, std::move(rhs));
    const std::vector<double> z = thomas(b, u);
    const double fact = (x[0] + corner_top_right * x[n - 1] / gamma) /
                        (1.0 + z[0] + corner_top_right * z[n - 1] / gamma);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = x[i] - fact * z[i];
    return out;
}

// Roots of the cubic c0 + c1 u + c2 u^2 + c3 u^3 on [0, h] with strict sign
// changes only (monotone-interval bracketing; even-multiplicity touch points
// are dropped).
void cubic_sign_change_roots(double c0, double c1, double c2, double c3, double h,
                             double f_tol, std::vector<double>& out) {
    const auto f = [&](double u) { return c0 + u * (c1 + u * (c2 + u * c3)); };
    const auto df = [&](double u) { return c1 + u * (2.0 * c2 + 3.0 * c3 * u); };

    double breaks[4];
    int nb = 0;
    breaks[nb++] = 0.0;
    // critical points of the cubic: 3 c3 u^2 + 2 c2 u + c1 = 0
    const double qa = 3.0 * c3, qb = 2.0 * c2, qc = c1;
    if (std::abs(qa) > 1e-300) {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double r1 = (-qb - sq) / (2.0 * qa);
            const double r2 = (-qb + sq) / (2.0 * qa);
            for (double r : {std::min(r1, r2), std::max(r1, r2)})
                if (r > 0.0 && r < h) breaks[nb++] = r;
        }
    } else if (std::abs(qb) > 1e-300) {
        const double r = -qc / qb;
        if (r > 0.0 && r < h) breaks[nb++] = r;
    }
    breaks[nb++] = h;

    for (int i = 0; i + 1 < nb; ++i) {
        double ua = breaks[i], ub = breaks[i + 1];
        double fa = f(ua), fb = f(ub);
        double root;
        if (std::abs(fa) <= f_tol) {
            root = ua;
            if (i > 0) continue; // root belongs to the previous interval too; report once
        } else if (std::abs(fb) <= f_tol) {
            root = ub;
        } else if ((fa > 0) != (fb > 0)) {
            for (int it = 0; it < 100 && ub - ua > 1e-16 * h; ++it) {
                const double um = 0.5 * (ua + ub);
                const double fm = f(um);
                if ((fm > 0) == (fa > 0)) {
                    ua = um;
                    fa = fm;
                } else {
                    ub = um;
                    fb = fm;
                }
            }
            root = 0.5 * (ua + ub);
            for (int it = 0; it < 3; ++it) {
                const double d = df(root);
                if (std::abs(d) < 1e-300) break;
                const double step = f(root) / d;
                const double next = root - step;
                if (next >= breaks[i] && next <= breaks[i + 1]) root = next;
            }
        } else {
            continue;
        }
        // drop even-multiplicity touch points: require opposite signs strictly
        // away from the root
        const double probe = std::max(1e-9 * h, 1e-12);
        const double lo = std::max(0.0, root - probe), hi = std::min(h, root + probe);
        if (lo > 0.0 && hi < h && (f(lo) > 0) == (f(hi) > 0)) continue;
        out.push_back(root);
    }
}

} // namespace

void MarkerChain::validate() const {
    const int J = count();
    if (J < 8) throw Error("marker chain: need at least 8 markers, got " + std::to_string(J));
    if (static_cast<int>(params.size()) != J + 1)
        throw Error("marker chain: params size must be J+1");
    for (int j = 0; j < J; ++j)
        if (!(params[j + 1] > params[j])) throw Error("marker chain: params not strictly increasing");

    double min_chord = std::numeric_limits<double>::max();
    double scale = 0.0;
    for (int j = 0; j < J; ++j) {
        const Vec2 d = points[(j + 1) % J] - points[j];
        min_chord = std::min(min_chord, d.norm());
        scale = std::max(scale, d.norm());
    }
    if (min_chord < 1e-14 * std::max(scale, 1e-30))
        throw Error("marker chain: two adjacent markers coincide");

    // simple-polygon test over chord segments (bbox-pruned pair sweep)
    for (int i = 0; i < J; ++i) {
        const Vec2 a1 = points[i], a2 = points[(i + 1) % J];
        const double alox = std::min(a1.x, a2.x), ahix = std::max(a1.x, a2.x);
        const double aloy = std::min(a1.y, a2.y), ahiy = std::max(a1.y, a2.y);
        for (int j = i + 2; j < J; ++j) {
            if (i == 0 && j == J - 1) continue; // wrap-adjacent
            const Vec2 b1 = points[j], b2 = points[(j + 1) % J];
            if (std::max(b1.x, b2.x) < alox || std::min(b1.x, b2.x) > ahix ||
                std::max(b1.y, b2.y) < aloy || std::min(b1.y, b2.y) > ahiy)
                continue;
            if (segments_intersect(a1, a2, b1, b2))
                throw Error("marker chain: polygon self-intersects (topology change not supported)");
        }
    }
}

std::string MarkerChain::to_json() const {
    nlohmann::json j;
    j["eta"] = eta;
    j["params"] = params;
    auto& pts = j["points"] = nlohmann::json::array();
    for (const Vec2& p : points) pts.push_back({p.x, p.y});
    return j.dump(2);
}

MarkerChain MarkerChain::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    MarkerChain m;
    m.eta = j.at("eta").get<double>();
    m.params = j.at("params").get<std::vector<double>>();
    for (const auto& p : j.at("points")) m.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return m;
}

SplineInterface fit_periodic_spline(const MarkerChain& markers) {
    markers.validate();
    const int J = markers.count();

    std::vector<double> h(J);
    for (int j = 0; j < J; ++j) h[j] = markers.params[j + 1] - markers.params[j];

    // second-derivative (M) form of the periodic cubic spline
    std::vector<double> sub(J), diag(J), sup(J);
    for (int j = 0; j < J; ++j) {
        const double hm = h[(j + J - 1) % J];
        sub[j] = hm / 6.0;
        diag[j] = (hm + h[j]) / 3.0;
        sup[j] = h[j] / 6.0;
    }
    auto solve_component = [&](auto get) {
        std::vector<double> rhs(J);
        for (int j = 0; j < J; ++j) {
            const double pm = get(markers.points[(j + J - 1) % J]);
            const double pj = get(markers.points[j]);
            const double pp = get(markers.points[(j + 1) % J]);
            const double hm = h[(j + J - 1) % J];
            rhs[j] = (pp - pj) / h[j] - (pj - pm) / hm;
        }
        return solve_cyclic_tridiag(sub, diag, sup, h[J - 1] / 6.0, h[J - 1] / 6.0, std::move(rhs));
    };
    const std::vector<double> Mx = solve_component([](const Vec2& p) { return p.x; });
    const std::vector<double> My = solve_component([](const Vec2& p) { return p.y; });

    SplineInterface s;
    s.knots_ = markers.params;
    s.period_ = markers.period();
    s.segments_.resize(J);
    for (int j = 0; j < J; ++j) {
        const int jn = (j + 1) % J;
        const Vec2 P0 = markers.points[j], P1 = markers.points[jn];
        const Vec2 M0{Mx[j], My[j]}, M1{Mx[jn], My[jn]};
        SplineInterface::Segment seg;
        seg.h = h[j];
        seg.a = P0;
        seg.b = (P1 - P0) / h[j] - (2.0 * M0 + M1) * (h[j] / 6.0);
        seg.c = M0 * 0.5;
        seg.d = (M1 - M0) / (6.0 * h[j]);
        s.segments_[j] = seg;
    }

    // segment bboxes from endpoints + extrema of the cubics
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    for (auto& seg : s.segments_) {
        double xs[8], ys[8];
        int nx = 0, ny = 0;
        auto extrema = [&](double b, double c, double d, double* out, int& n) {
            out[n++] = 0.0;
            out[n++] = seg.h;
            const double qa = 3.0 * d, qb = 2.0 * c, qc = b;
            if (std::abs(qa) > 1e-300) {
                const double disc = qb * qb - 4.0 * qa * qc;
                if (disc >= 0.0) {
                    const double sq = std::sqrt(disc);
                    for (double r : {(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)})
                        if (r > 0 && r < seg.h) out[n++] = r;
                }
            } else if (std::abs(qb) > 1e-300) {
                const double r = -qc / qb;
                if (r > 0 && r < seg.h) out[n++] = r;
            }
        };
        extrema(seg.b.x, seg.c.x, seg.d.x, xs, nx);
        extrema(seg.b.y, seg.c.y, seg.d.y, ys, ny);
        seg.lo_x = 1e300; seg.hi_x = -1e300; seg.lo_y = 1e300; seg.hi_y = -1e300;
        for (int i = 0; i < nx; ++i) {
            const double u = xs[i];
            const double v = seg.a.x + u * (seg.b.x + u * (seg.c.x + u * seg.d.x));
            seg.lo_x = std::min(seg.lo_x, v);
            seg.hi_x = std::max(seg.hi_x, v);
        }
        for (int i = 0; i < ny; ++i) {
            const double u = ys[i];
            const double v = seg.a.y + u * (seg.b.y + u * (seg.c.y + u * seg.d.y));
            seg.lo_y = std::min(seg.lo_y, v);
            seg.hi_y = std::max(seg.hi_y, v);
        }
        lo.x = std::min(lo.x, seg.lo_x);
        hi.x = std::max(hi.x, seg.hi_x);
        lo.y = std::min(lo.y, seg.lo_y);
        hi.y = std::max(hi.y, seg.hi_y);
    }
    s.bbox_lo_ = lo;
    s.bbox_hi_ = hi;
    s.scale_ = (hi - lo).norm();
    s.on_tol_ = 1e-12 * std::max(s.scale_, 1.0);
    s.ccw_ = true; // provisional; fixed after area
    const double area = s.signed_area();
    s.ccw_ = area > 0.0;

    // regularity: |chi'| must stay positive
    for (int j = 0; j < J; ++j) {
        for (double t : {0.1, 0.35, 0.6, 0.85}) {
            const double l = s.knots_[j] + t * h[j];
            if (s.eval(l, 1).norm() < 1e-12 * s.scale_ / s.period_)
                throw Error("spline: degenerate tangent (irregular curve)");
        }
    }
    s.build_polyline();
    return s;
}

int SplineInterface::locate(double l, double& u) const {
    const double l0 = knots_.front();
    double t = std::fmod(l - l0, period_);
    if (t < 0) t += period_;
    t += l0;
    // binary search for segment with knots_[j] <= t < knots_[j+1]
    int lo = 0, hi = segment_count();
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (knots_[mid] <= t)
            lo = mid;
        else
            hi = mid;
    }
    u = t - knots_[lo];
    return lo;
}

Vec2 SplineInterface::eval(double l, int deriv_order) const {
    double u;
    const Segment& s = segments_[locate(l, u)];
    switch (deriv_order) {
        case 0:
            return s.a + u * (s.b + u * (s.c + u * s.d));
        case 1:
            return s.b + u * (2.0 * s.c + 3.0 * u * s.d);
        case 2:
            return 2.0 * s.c + 6.0 * u * s.d;
        default:
            throw Error("spline eval: derivative order must be 0, 1, or 2");
    }
}

Vec2 SplineInterface::unit_normal(double l) const {
    const Vec2 t = eval(l, 1);
    const double n = t.norm();
    if (n < 1e-14) throw Error("unit_normal: vanishing tangent");
    Vec2 nrm{-t.y / n, t.x / n};
    if (ccw_) nrm = -nrm; // outward from the enclosed region
    return nrm;
}

double SplineInterface::signed_area() const {
    // 1/2 * integral of cross(chi, chi'); integrand is quintic per segment
    static const GaussRule1D g = gauss_legendre(4);
    double area = 0.0;
    for (const Segment& s : segments_) {
        double acc = 0.0;
        for (size_t q = 0; q < g.points.size(); ++q) {
            const double u = g.points[q] * s.h;
            const Vec2 p = s.a + u * (s.b + u * (s.c + u * s.d));
            const Vec2 dp = s.b + u * (2.0 * s.c + 3.0 * u * s.d);
            acc += g.weights[q] * p.cross(dp);
        }
        area += 0.5 * acc * s.h;
    }
    return area;
}

double SplineInterface::length() const {
    static const GaussRule1D g = gauss_legendre(8);
    double len = 0.0;
    for (const Segment& s : segments_) {
        double acc = 0.0;
        for (size_t q = 0; q < g.points.size(); ++q) {
            const double u = g.points[q] * s.h;
            acc += g.weights[q] * (s.b + u * (2.0 * s.c + 3.0 * u * s.d)).norm();
        }
        len += acc * s.h;
    }
    return len;
}

void SplineInterface::bounding_box(Vec2& lo, Vec2& hi) const {
    lo = bbox_lo_;
    hi = bbox_hi_;
}

void SplineInterface::build_polyline() {
    poly_l_.clear();
    poly_p_.clear();
    const double tol = 1e-4 * std::max(scale_, 1e-30);
    poly_sagitta_ = tol;
    for (int j = 0; j < segment_count(); ++j) {
        const double l0 = knots_[j], l1 = knots_[j + 1];
        // recursion-free adaptive split: estimate sagitta from the midpoint
        std::vector<std::pair<double, double>> stack{{l0, l1}};
        std::vector<double> pts;
        while (!stack.empty()) {
            auto [a, b] = stack.back();
            stack.pop_back();
            const Vec2 pa = eval(a), pb = eval(b), pm = eval(0.5 * (a + b));
            const Vec2 chord_mid = (pa + pb) * 0.5;
            if ((pm - chord_mid).norm() > tol && b - a > 1e-6 * period_) {
                stack.push_back({0.5 * (a + b), b});
                stack.push_back({a, 0.5 * (a + b)});
            } else {
                pts.push_back(a);
            }
        }
        std::sort(pts.begin(), pts.end());
        for (double l : pts) {
            poly_l_.push_back(l);
            poly_p_.push_back(eval(l));
        }
    }
    // close the loop
    poly_l_.push_back(knots_.back());
    poly_p_.push_back(eval(knots_.front()));
}

SplineInterface::Nearest SplineInterface::nearest_point(const Vec2& x) const {
    // coarse scan over the cached polyline, then Newton on the smooth distance
    int best = 0;
    double best_d2 = 1e300;
    for (size_t i = 0; i < poly_p_.size(); ++i) {
        const double d2 = (poly_p_[i] - x).norm2();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(i);
        }
    }
    const int n = static_cast<int>(poly_l_.size());
    double l = poly_l_[best];
    double lo = poly_l_[(best + n - 1) % n];
    double hi = poly_l_[(best + 1) % n];
    if (lo > l) lo -= period_;
    if (hi < l) hi += period_;
    for (int it = 0; it < 60; ++it) {
        const Vec2 p = eval(l), dp = eval(l, 1), ddp = eval(l, 2);
        const double g = (p - x).dot(dp);
        const double dg = dp.norm2() + (p - x).dot(ddp);
        double step;
        if (std::abs(dg) > 1e-300 && dg > 0) {
            step = -g / dg;
        } else {
            step = (g > 0 ? -1.0 : 1.0) * 0.25 * (hi - lo);
        }
        double ln = l + step;
        if (ln < lo || ln > hi) ln = std::clamp(ln, lo, hi);
        if (std::abs(ln - l) < 1e-15 * period_) {
            l = ln;
            break;
        }
        l = ln;
    }
    // endpoints of the bracket may beat the stationary point
    double d = (eval(l) - x).norm();
    for (double cand : {lo, hi}) {
        const double dc = (eval(cand) - x).norm();
        if (dc < d) {
            d = dc;
            l = cand;
        }
    }
    return {l, d};
}

Side SplineInterface::side_of(const Vec2& x) const {
    const double pad = 2.0 * poly_sagitta_ + on_tol_;
    if (x.x < bbox_lo_.x - pad || x.x > bbox_hi_.x + pad || x.y < bbox_lo_.y - pad ||
        x.y > bbox_hi_.y + pad)
        return Side::Inside2;

    // winding number by angle summation over the cached polyline
    double angle = 0.0;
    double min_d2 = 1e300;
    Vec2 prev = poly_p_.back() - x;
    for (size_t i = 0; i < poly_p_.size(); ++i) {
        const Vec2 cur = poly_p_[i] - x;
        angle += std::atan2(prev.cross(cur), prev.dot(cur));
        // distance to polyline vertex (cheap proxy; refined below if close)
        min_d2 = std::min(min_d2, cur.norm2());
        prev = cur;
    }
    const int winding = static_cast<int>(std::lround(angle / (2.0 * M_PI)));

    if (min_d2 > pad * pad * 16.0) return winding != 0 ? Side::Inside1 : Side::Inside2;

    const Nearest nr = nearest_point(x);
    if (nr.dist <= on_tol_) return Side::OnCurve;
    if (nr.dist > 2.0 * poly_sagitta_) return winding != 0 ? Side::Inside1 : Side::Inside2;
    // inside the polyline uncertainty band: decide by the local tangent
    const Vec2 t = eval(nr.l, 1);
    const double side = t.cross(x - eval(nr.l));
    const bool inside = ccw_ ? side > 0 : side < 0;
    return inside ? Side::Inside1 : Side::Inside2;
}

std::vector<CurveIntersection> SplineInterface::edge_intersections(const Vec2& a,
                                                                   const Vec2& b) const {
    const bool vertical = std::abs(a.x - b.x) <= std::abs(a.y - b.y) * 1e-12;
    const bool horizontal = std::abs(a.y - b.y) <= std::abs(a.x - b.x) * 1e-12;
    if (!vertical && !horizontal)
        throw Error("edge_intersections: segment must be axis-aligned");

    const double c = vertical ? a.x : a.y;
    const double r0 = vertical ? std::min(a.y, b.y) : std::min(a.x, b.x);
    const double r1 = vertical ? std::max(a.y, b.y) : std::max(a.x, b.x);
    const double f_tol = 1e-14 * std::max(scale_, 1.0);

    std::vector<CurveIntersection> hits;
    std::vector<double> roots;
    for (int j = 0; j < segment_count(); ++j) {
        const Segment& s = segments_[j];
        if (vertical) {
            if (c < s.lo_x - f_tol || c > s.hi_x + f_tol) continue;
            if (s.hi_y < r0 - f_tol || s.lo_y > r1 + f_tol) continue;
        } else {
            if (c < s.lo_y - f_tol || c > s.hi_y + f_tol) continue;
            if (s.hi_x < r0 - f_tol || s.lo_x > r1 + f_tol) continue;
        }
        roots.clear();
        if (vertical)
            cubic_sign_change_roots(s.a.x - c, s.b.x, s.c.x, s.d.x, s.h, f_tol, roots);
        else
            cubic_sign_change_roots(s.a.y - c, s.b.y, s.c.y, s.d.y, s.h, f_tol, roots);
        for (double u : roots) {
            const Vec2 p = s.a + u * (s.b + u * (s.c + u * s.d));
            const double along = vertical ? p.y : p.x;
            if (along < r0 || along > r1) continue;
            hits.push_back({knots_[j] + u, vertical ? Vec2{c, p.y} : Vec2{p.x, c}});
        }
    }
    std::sort(hits.begin(), hits.end(),
              [](const CurveIntersection& u, const CurveIntersection& v) { return u.l < v.l; });
    // dedupe roots reported twice at shared segment knots (incl. wrap)
    const double l_tol = 1e-11 * period_;
    std::vector<CurveIntersection> out;
    for (const auto& hit : hits) {
        if (!out.empty() && hit.l - out.back().l < l_tol) continue;
        out.push_back(hit);
    }
    if (out.size() >= 2 && (out.back().l - period_ - out.front().l) > -l_tol &&
        std::abs(out.back().l - period_ - out.front().l) < l_tol)
        out.pop_back();
    return out;
}

std::string SplineInterface::polyline_csv(int samples_per_segment) const {
    std::ostringstream os;
    os << "l,x,y\n";
    os.precision(17);
    for (int j = 0; j < segment_count(); ++j) {
        for (int q = 0; q < samples_per_segment; ++q) {
            const double l = knots_[j] + (knots_[j + 1] - knots_[j]) * q / samples_per_segment;
            const Vec2 p = eval(l);
            os << l << "," << p.x << "," << p.y << "\n";
        }
    }
    const Vec2 p = eval(knots_.front());
    os << knots_.back() << "," << p.x << "," << p.y << "\n";
    return os.str();
}

std::string SplineInterface::to_svg(int samples_per_segment) const {
    std::ostringstream os;
    os.precision(10);
    const double w = bbox_hi_.x - bbox_lo_.x, h = bbox_hi_.y - bbox_lo_.y;
    const double margin = 0.05 * std::max({w, h, 1e-12});
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << bbox_lo_.x - margin << " "
       << -(bbox_hi_.y + margin) << " " << w + 2 * margin << " " << h + 2 * margin << "\">\n";
    os << "<path fill=\"none\" stroke=\"black\" stroke-width=\"" << 0.002 * std::max(w + h, 1e-12)
       << "\" d=\"";
    bool first = true;
    for (int j = 0; j < segment_count(); ++j) {
        for (int q = 0; q < samples_per_segment; ++q) {
            const double l = knots_[j] + (knots_[j + 1] - knots_[j]) * q / samples_per_segment;
            const Vec2 p = eval(l);
            os << (first ? "M " : "L ") << p.x << " " << -p.y << " ";
            first = false;
        }
    }
    os << "Z\"/>\n</svg>\n";
    return os.str();
}

MarkerChain redistribute_markers(const MarkerChain& markers, double target_eta,
                                 const SplineInterface* fitted) {
    if (target_eta <= 0) throw Error("redistribute_markers: target_eta must be positive");
    SplineInterface local;
    if (!fitted) {
        local = fit_periodic_spline(markers);
        fitted = &local;
    }

    std::vector<Vec2> pts = markers.points;
    std::vector<double> par(markers.params.begin(), markers.params.end() - 1);
    const double period = markers.period();
    const double close = markers.params.back();

    // insert spline midpoints on long chords until all are <= 2*eta
    bool inserted = true;
    int guard = 0;
    while (inserted && guard++ < 40) {
        inserted = false;
        std::vector<Vec2> np;
        std::vector<double> npar;
        const int J = static_cast<int>(pts.size());
        for (int j = 0; j < J; ++j) {
            np.push_back(pts[j]);
            npar.push_back(par[j]);
            const double next_par = (j + 1 < J) ? par[j + 1] : close;
            const double chord = (pts[(j + 1) % J] - pts[j]).norm();
            if (chord > 2.0 * target_eta) {
                const double lm = 0.5 * (par[j] + next_par);
                np.push_back(fitted->eval(lm));
                npar.push_back(lm);
                inserted = true;
            }
        }
        pts = std::move(np);
        par = std::move(npar);
    }

    // remove alternate markers where two consecutive chords are short
    {
        const int J = static_cast<int>(pts.size());
        std::vector<bool> keep(J, true);
        int kept = J;
        for (int j = 0; j + 1 < J; ++j) {
            if (!keep[j]) continue;
            const int j1 = j + 1, j2 = (j + 2) % J;
            if (!keep[j1 % J]) continue;
            const double c0 = (pts[j1] - pts[j]).norm();
            const double c1 = (pts[j2] - pts[j1]).norm();
            if (c0 < 0.5 * target_eta && c1 < 0.5 * target_eta) {
                if (kept - 1 < 8)
                    throw Error("redistribute_markers: removal would leave fewer than 8 markers");
                keep[j1] = false;
                --kept;
                ++j; // alternate removal
            }
        }
        std::vector<Vec2> np;
        std::vector<double> npar;
        for (int j = 0; j < J; ++j)
            if (keep[j]) {
                np.push_back(pts[j]);
                npar.push_back(par[j]);
            }
        pts = std::move(np);
        par = std::move(npar);
    }

    MarkerChain out;
    out.points = std::move(pts);
    out.params = std::move(par);
    out.params.push_back(out.params.front() + period);
    out.eta = target_eta;
    out.validate();
    return out;
}

MarkerChain circle_markers(const Vec2& center, double radius, int count) {
    MarkerChain m;
    const double L = 2.0 * M_PI * radius;
    m.eta = L / count;
    for (int j = 0; j < count; ++j) {
        const double th = 2.0 * M_PI * j / count;
        m.points.push_back({center.x + radius * std::cos(th), center.y + radius * std::sin(th)});
        m.params.push_back(L * j / count);
    }
    m.params.push_back(L);
    return m;
}

} // namespace cutoseen
