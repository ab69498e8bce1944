#include "cutoseen/quadrature.hpp"

#include <algorithm>
#include <numeric>

namespace cutoseen {

namespace {

// Split an unwrapped parameter interval [la, lb] (lb > la allowed to exceed
// the period) at spline knots; returns sub-intervals.
std::vector<std::pair<double, double>> split_at_knots(const SplineInterface& s, double la,
                                                      double lb) {
    std::vector<std::pair<double, double>> out;
    const double L = s.period();
    const double l_origin = s.param_origin();
    const auto& knots = s.knots();
    std::vector<double> cuts{la};
    // knots replicated into the unwrapped window
    const double k0 = std::floor((la - l_origin) / L);
    for (double shift = k0 * L; shift < lb - l_origin; shift += L) {
        for (size_t i = 0; i + 1 < knots.size(); ++i) {
            const double v = knots[i] + shift;
            if (v > la + 1e-14 * L && v < lb - 1e-14 * L) cuts.push_back(v);
        }
    }
    cuts.push_back(lb);
    std::sort(cuts.begin(), cuts.end());
    for (size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] - cuts[i] > 1e-15 * L) out.push_back({cuts[i], cuts[i + 1]});
    return out;
}

double arc_green_area(const SplineInterface& s, double l0, double l1, const GaussRule1D& g) {
    // 1/2 * integral over the (signed) traversal of cross(chi, chi')
    double acc = 0.0;
    const double a = std::min(l0, l1), b = std::max(l0, l1);
    for (const auto& [pa, pb] : split_at_knots(s, a, b)) {
        const double span = pb - pa;
        for (size_t q = 0; q < g.points.size(); ++q) {
            const double l = pa + g.points[q] * span;
            acc += g.weights[q] * span * s.eval(l).cross(s.eval(l, 1));
        }
    }
    return 0.5 * (l1 >= l0 ? acc : -acc);
}

struct LoopMoments {
    double area = 0.0;
    Vec2 centroid;
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
};

LoopMoments loop_moments(const CellCutInfo::Loop& loop, const SplineInterface* s) {
    static const GaussRule1D g = gauss_legendre(6);
    double area = 0.0, mx = 0.0, my = 0.0;
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    auto absorb = [&](const Vec2& p) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    };
    for (const auto& piece : loop.pieces) {
        if (!piece.is_arc) {
            // A += 1/2 cross(p0,p1); Cx*A += int x^2/2 dy; Cy*A += -int y^2/2 dx
            const Vec2 p0 = piece.p0, p1 = piece.p1, d = p1 - p0;
            area += 0.5 * p0.cross(p1);
            for (size_t q = 0; q < g.points.size(); ++q) {
                const Vec2 p = p0 + g.points[q] * d;
                mx += g.weights[q] * 0.5 * p.x * p.x * d.y;
                my -= g.weights[q] * 0.5 * p.y * p.y * d.x;
            }
            absorb(p0);
            absorb(p1);
        } else {
            const double a = std::min(piece.l0, piece.l1), b = std::max(piece.l0, piece.l1);
            const double sign = piece.l1 >= piece.l0 ? 1.0 : -1.0;
            for (const auto& [pa, pb] : split_at_knots(*s, a, b)) {
                const double span = pb - pa;
                for (size_t q = 0; q < g.points.size(); ++q) {
                    const double l = pa + g.points[q] * span;
                    const Vec2 p = s->eval(l);
                    const Vec2 dp = s->eval(l, 1);
                    const double w = sign * g.weights[q] * span;
                    area += w * 0.5 * p.cross(dp);
                    mx += w * 0.5 * p.x * p.x * dp.y;
                    my -= w * 0.5 * p.y * p.y * dp.x;
                    absorb(p);
                }
            }
        }
    }
    LoopMoments m;
    m.area = area;
    if (std::abs(area) > 1e-300) m.centroid = {mx / area, my / area};
    m.lo = lo;
    m.hi = hi;
    return m;
}

// Fan (blending) rule about center c: each boundary piece spans a curved or
// straight triangle M(u,v) = c + u (gamma(v) - c). Fails (returns false) when
// a negative Jacobian shows the loop is not star-shaped about c.
bool append_fan_rule(const CellCutInfo::Loop& loop, const SplineInterface* s, const Vec2& c,
                     int nq, double scale, std::vector<Vec2>& pts, std::vector<double>& wts) {
    const GaussRule1D g = gauss_legendre(nq);
    const double neg_tol = -1e-13 * scale * scale;
    std::vector<Vec2> new_pts;
    std::vector<double> new_wts;
    for (const auto& piece : loop.pieces) {
        if (!piece.is_arc) {
            const double det0 = (piece.p0 - c).cross(piece.p1 - c);
            if (det0 < neg_tol) return false;
            if (det0 <= 0.0) continue; // degenerate, zero-measure fan triangle
            for (size_t iu = 0; iu < g.points.size(); ++iu) {
                const double u = g.points[iu];
                for (size_t iv = 0; iv < g.points.size(); ++iv) {
                    const double v = g.points[iv];
                    const Vec2 gm = piece.p0 + v * (piece.p1 - piece.p0);
                    new_pts.push_back(c + u * (gm - c));
                    new_wts.push_back(g.weights[iu] * g.weights[iv] * u * det0);
                }
            }
        } else {
            const double a = std::min(piece.l0, piece.l1), b = std::max(piece.l0, piece.l1);
            const double sign = piece.l1 >= piece.l0 ? 1.0 : -1.0;
            for (const auto& [pa, pb] : split_at_knots(*s, a, b)) {
                const double span = (pb - pa) * sign;
                const double start = sign > 0 ? pa : pb;
                for (size_t iv = 0; iv < g.points.size(); ++iv) {
                    const double l = start + g.points[iv] * span;
                    const Vec2 gm = s->eval(l);
                    const Vec2 dgm = s->eval(l, 1) * span; // d gamma / dv
                    const double det_v = (gm - c).cross(dgm);
                    if (det_v < neg_tol) return false;
                    if (det_v <= 0.0) continue;
                    for (size_t iu = 0; iu < g.points.size(); ++iu) {
                        const double u = g.points[iu];
                        new_pts.push_back(c + u * (gm - c));
                        new_wts.push_back(g.weights[iu] * g.weights[iv] * u * det_v);
                    }
                }
            }
        }
    }
    pts.insert(pts.end(), new_pts.begin(), new_pts.end());
    wts.insert(wts.end(), new_wts.begin(), new_wts.end());
    return true;
}

// One fan attempt over the candidate centers; fills pts/wts on success.
bool fan_loop_with_candidates(const CellCutInfo::Loop& loop, const SplineInterface* spline,
                              int nq, double hh, std::vector<Vec2>& pts,
                              std::vector<double>& wts) {
    const LoopMoments mom = loop_moments(loop, spline);
    std::vector<Vec2> candidates{mom.centroid};
    for (const auto& piece : loop.pieces)
        candidates.push_back(piece.is_arc ? spline->eval(piece.l0) : piece.p0);
    candidates.push_back({0.5 * (mom.lo.x + mom.hi.x), 0.5 * (mom.lo.y + mom.hi.y)});
    for (const auto& piece : loop.pieces) {
        Vec2 mid, dir;
        if (piece.is_arc) {
            const double lm = 0.5 * (piece.l0 + piece.l1);
            mid = spline->eval(lm);
            dir = spline->eval(lm, 1) * (piece.l1 >= piece.l0 ? 1.0 : -1.0);
        } else {
            mid = 0.5 * (piece.p0 + piece.p1);
            dir = piece.p1 - piece.p0;
        }
        const double dn = dir.norm();
        if (dn < 1e-300) continue;
        const Vec2 inward{-dir.y / dn, dir.x / dn}; // left of travel
        for (double f : {0.25, 0.08, 0.02})
            candidates.push_back(mid + (f * hh) * inward);
    }
    for (const Vec2& cand : candidates) {
        std::vector<Vec2> try_pts;
        std::vector<double> try_wts;
        if (!append_fan_rule(loop, spline, cand, nq, hh, try_pts, try_wts)) continue;
        double sum = 0.0;
        bool wok = true;
        for (double w : try_wts) {
            if (w < -1e-14 * hh * hh) {
                wok = false;
                break;
            }
            sum += w;
        }
        if (!wok || std::abs(sum - loop.area) > 1e-9 * hh * hh) continue;
        for (size_t q = 0; q < try_pts.size(); ++q) {
            if (try_wts[q] <= 0.0) continue;
            pts.push_back(try_pts[q]);
            wts.push_back(try_wts[q]);
        }
        return true;
    }
    return false;
}

CellCutInfo::Piece piece_first_half(const SplineInterface* s, const CellCutInfo::Piece& p,
                                    double at_param, const Vec2& at_point) {
    CellCutInfo::Piece out = p;
    if (p.is_arc)
        out.l1 = at_param;
    else
        out.p1 = at_point;
    return out;
}

CellCutInfo::Piece piece_second_half(const SplineInterface* s, const CellCutInfo::Piece& p,
                                     double at_param, const Vec2& at_point) {
    CellCutInfo::Piece out = p;
    if (p.is_arc)
        out.l0 = at_param;
    else
        out.p0 = at_point;
    return out;
}

// Splits the loop along an inward chord from the midpoint of its longest arc
// to the first boundary hit. Needed for loops with no star center (wavy or
// near-tangent arcs).
bool split_loop(const CellCutInfo::Loop& loop, const SplineInterface* spline, double hh,
                CellCutInfo::Loop& out_a, CellCutInfo::Loop& out_b) {
    const int n = static_cast<int>(loop.pieces.size());
    // longest arc piece is the splitting site
    int ia = -1;
    double best_span = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!loop.pieces[i].is_arc) continue;
        const double span = std::abs(loop.pieces[i].l1 - loop.pieces[i].l0);
        if (span > best_span) {
            best_span = span;
            ia = i;
        }
    }
    if (ia < 0) return false;
    const CellCutInfo::Piece& arc = loop.pieces[ia];
    const double lm = 0.5 * (arc.l0 + arc.l1);
    const Vec2 M = spline->eval(lm);
    Vec2 dir = spline->eval(lm, 1) * (arc.l1 >= arc.l0 ? 1.0 : -1.0);
    const double dn = dir.norm();
    if (dn < 1e-300) return false;
    const Vec2 ray{-dir.y / dn, dir.x / dn}; // inward: region lies left of travel

    // first boundary hit of the inward ray
    int ib = -1;
    double best_t = 1e300;
    double hit_param = 0.0;
    Vec2 hit_point;
    for (int i = 0; i < n; ++i) {
        const CellCutInfo::Piece& p = loop.pieces[i];
        if (!p.is_arc) {
            const Vec2 d = p.p1 - p.p0;
            const double det = ray.cross(d);
            if (std::abs(det) < 1e-300) continue;
            // M + t ray = p0 + s d
            const Vec2 rhs = p.p0 - M;
            const double t = rhs.cross(d) / -det * -1.0; // cramer, see below
            const double t2 = (rhs.x * d.y - rhs.y * d.x) / det;
            const double s = (rhs.x * ray.y - rhs.y * ray.x) / det;
            (void)t;
            if (t2 > 1e-9 * hh && s > 1e-9 && s < 1.0 - 1e-9 && t2 < best_t) {
                best_t = t2;
                ib = i;
                hit_point = p.p0 + s * d;
            }
        } else {
            // sampled bracketing of cross(ray, chi(l) - M) = 0 along the arc
            const double a = std::min(p.l0, p.l1), b = std::max(p.l0, p.l1);
            for (const auto& [pa, pb] : split_at_knots(*spline, a, b)) {
                const int samples = 24;
                double prev_l = pa;
                double prev_g = ray.cross(spline->eval(pa) - M);
                for (int q = 1; q <= samples; ++q) {
                    const double l = pa + (pb - pa) * q / samples;
                    const double g = ray.cross(spline->eval(l) - M);
                    if ((prev_g > 0) != (g > 0)) {
                        double la = prev_l, lb2 = l, ga = prev_g;
                        for (int it = 0; it < 60; ++it) {
                            const double lc = 0.5 * (la + lb2);
                            const double gc = ray.cross(spline->eval(lc) - M);
                            if ((gc > 0) == (ga > 0)) {
                                la = lc;
                                ga = gc;
                            } else {
                                lb2 = lc;
                            }
                        }
                        const double lhit = 0.5 * (la + lb2);
                        const Vec2 ph = spline->eval(lhit);
                        const double t = (ph - M).dot(ray);
                        const bool same_arc = i == ia && std::abs(lhit - lm) < 0.05 * best_span;
                        if (t > 1e-6 * hh && t < best_t && !same_arc) {
                            best_t = t;
                            ib = i;
                            hit_param = lhit;
                            hit_point = ph;
                        }
                    }
                    prev_l = l;
                    prev_g = g;
                }
            }
        }
    }
    if (ib < 0) return false;

    const CellCutInfo::Piece chord_qm{false, hit_point, M, 0, 0};
    const CellCutInfo::Piece chord_mq{false, M, hit_point, 0, 0};

    out_a.pieces.clear();
    out_b.pieces.clear();
    if (ib == ia) {
        // the ray hit the same arc: the traversal order of lm vs hit decides
        const bool lm_first = (arc.l1 >= arc.l0) == (lm < hit_param);
        const double first = lm_first ? lm : hit_param;
        const double second = lm_first ? hit_param : lm;
        CellCutInfo::Piece mid = arc;
        mid.l0 = first;
        mid.l1 = second;
        out_a.pieces.push_back(mid);
        out_a.pieces.push_back(lm_first ? chord_qm : chord_mq);
        CellCutInfo::Piece head = arc, tail = arc;
        head.l1 = first;
        tail.l0 = second;
        out_b.pieces.push_back(head);
        out_b.pieces.push_back(lm_first ? chord_mq : chord_qm);
        out_b.pieces.push_back(tail);
        for (int i = 1; i < n; ++i) out_b.pieces.push_back(loop.pieces[(ia + i) % n]);
    } else {
        out_a.pieces.push_back(piece_second_half(spline, arc, lm, M));
        for (int i = (ia + 1) % n; i != ib; i = (i + 1) % n) out_a.pieces.push_back(loop.pieces[i]);
        out_a.pieces.push_back(piece_first_half(spline, loop.pieces[ib], hit_param, hit_point));
        out_a.pieces.push_back(chord_qm);

        out_b.pieces.push_back(piece_second_half(spline, loop.pieces[ib], hit_param, hit_point));
        for (int i = (ib + 1) % n; i != ia; i = (i + 1) % n) out_b.pieces.push_back(loop.pieces[i]);
        out_b.pieces.push_back(piece_first_half(spline, arc, lm, M));
        out_b.pieces.push_back(chord_mq);
    }
    out_a.area = loop_moments(out_a, spline).area;
    out_b.area = loop_moments(out_b, spline).area;
    if (std::abs(out_a.area + out_b.area - loop.area) > 1e-10 * hh * hh) return false;
    if (out_a.area < -1e-12 * hh * hh || out_b.area < -1e-12 * hh * hh) return false;
    return true;
}

// Fan with recursive chord splitting; false means the caller must use the
// bisection fallback.
bool emit_loop_rule(const CellCutInfo::Loop& loop, const SplineInterface* spline, int nq,
                    double hh, int depth, std::vector<Vec2>& pts, std::vector<double>& wts) {
    if (loop.area < 1e-12 * hh * hh) return true; // sliver: empty rule
    if (fan_loop_with_candidates(loop, spline, nq, hh, pts, wts)) return true;
    if (depth >= 6) return false;
    CellCutInfo::Loop a, b;
    if (!split_loop(loop, spline, hh, a, b)) return false;
    return emit_loop_rule(a, spline, nq, hh, depth + 1, pts, wts) &&
           emit_loop_rule(b, spline, nq, hh, depth + 1, pts, wts);
}

void tensor_rule_on_rect(const Vec2& lo, const Vec2& hi, int nq, std::vector<Vec2>& pts,
                         std::vector<double>& wts) {
    const GaussRule1D g = gauss_legendre(nq);
    const double dx = hi.x - lo.x, dy = hi.y - lo.y;
    for (size_t i = 0; i < g.points.size(); ++i)
        for (size_t j = 0; j < g.points.size(); ++j) {
            pts.push_back({lo.x + g.points[i] * dx, lo.y + g.points[j] * dy});
            wts.push_back(g.weights[i] * g.weights[j] * dx * dy);
        }
}

// Recursive bisection fallback: quadtree until sub-rectangles are uncut.
void bisect_rules(const StructuredMesh& mesh, const SplineInterface& s, const Vec2& lo,
                  const Vec2& hi, int depth, int nq, std::vector<Vec2>& p1,
                  std::vector<double>& w1, std::vector<Vec2>& p2, std::vector<double>& w2) {
    const Vec2 corners[4] = {lo, {hi.x, lo.y}, hi, {lo.x, hi.y}};
    bool any1 = false, any2 = false, on = false;
    for (const Vec2& c : corners) {
        const Side side = s.side_of(c);
        if (side == Side::Inside1) any1 = true;
        else if (side == Side::Inside2) any2 = true;
        else on = true;
    }
    bool crossing = on;
    if (!crossing && !(any1 && any2)) {
        for (int e = 0; e < 4 && !crossing; ++e)
            crossing = !s.edge_intersections(corners[e], corners[(e + 1) % 4]).empty();
    } else if (any1 && any2) {
        crossing = true;
    }
    if (!crossing) {
        auto& pts = any1 ? p1 : p2;
        auto& wts = any1 ? w1 : w2;
        tensor_rule_on_rect(lo, hi, nq, pts, wts);
        return;
    }
    if (depth >= 12) {
        Side side = s.side_of({0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)});
        auto& pts = side == Side::Inside1 ? p1 : p2;
        auto& wts = side == Side::Inside1 ? w1 : w2;
        tensor_rule_on_rect(lo, hi, 2, pts, wts);
        return;
    }
    const Vec2 mid{0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)};
    bisect_rules(mesh, s, lo, mid, depth + 1, nq, p1, w1, p2, w2);
    bisect_rules(mesh, s, {mid.x, lo.y}, {hi.x, mid.y}, depth + 1, nq, p1, w1, p2, w2);
    bisect_rules(mesh, s, {lo.x, mid.y}, {mid.x, hi.y}, depth + 1, nq, p1, w1, p2, w2);
    bisect_rules(mesh, s, mid, hi, depth + 1, nq, p1, w1, p2, w2);
}

} // namespace

EdgeRule build_edge_rule(const StructuredMesh& mesh, const GridEdge& edge, int npts) {
    const GaussRule1D g = gauss_legendre(npts);
    const double h = mesh.h();
    EdgeRule rule;
    rule.normal = edge.vertical ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    for (size_t q = 0; q < g.points.size(); ++q) {
        if (edge.vertical)
            rule.points.push_back(
                {mesh.origin.x + edge.i * h, mesh.origin.y + (edge.j + g.points[q]) * h});
        else
            rule.points.push_back(
                {mesh.origin.x + (edge.j + g.points[q]) * h, mesh.origin.y + edge.i * h});
        rule.weights.push_back(g.weights[q] * h);
    }
    return rule;
}

CellCutInfo analyze_cut_cell(const StructuredMesh& mesh, int cell, const SplineInterface& spline) {
    int ci, cj;
    mesh.cell_coords(cell, ci, cj);
    const Vec2 lo = mesh.cell_lo(ci, cj), hi = mesh.cell_hi(ci, cj);
    const double hh = mesh.h();
    const double L = spline.period();

    CellCutInfo info;
    auto raw = cell_boundary_crossings(mesh, spline, ci, cj);
    if (raw.empty())
        throw Error("analyze_cut_cell: element " + std::to_string(cell) +
                    " has no boundary crossings (inconsistent with classification)");
    info.crossings.reserve(raw.size());
    for (const auto& r : raw) info.crossings.push_back({r.l, r.point, r.s});
    const int m = static_cast<int>(info.crossings.size());

    // l-sorted ranks
    std::vector<int> by_l(m);
    std::iota(by_l.begin(), by_l.end(), 0);
    std::sort(by_l.begin(), by_l.end(),
              [&](int a, int b) { return info.crossings[a].l < info.crossings[b].l; });

    // interior arcs between l-consecutive crossings; each crossing must bound
    // exactly one interior arc
    std::vector<int> arc_of(m, -1);       // s-index -> arc id
    std::vector<bool> is_low_end(m, false);
    const auto strictly_inside = [&](const Vec2& p) {
        return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y;
    };
    for (int q = 0; q < m; ++q) {
        const int ia = by_l[q], ib = by_l[(q + 1) % m];
        const double la = info.crossings[ia].l;
        double lb = info.crossings[ib].l;
        if (q + 1 == m) lb += L;
        int inside_votes = 0;
        for (double t : {0.2317, 0.5213, 0.7691})
            if (strictly_inside(spline.eval(la + t * (lb - la)))) ++inside_votes;
        if (inside_votes == 0) continue;
        if (inside_votes != 3)
            throw Error("analyze_cut_cell: ambiguous arc on element " + std::to_string(cell));
        const int arc_id = static_cast<int>(info.arcs.size());
        info.arcs.push_back({la, lb});
        if (arc_of[ia] >= 0 || arc_of[ib] >= 0)
            throw Error("analyze_cut_cell: crossing bounds two interior arcs on element " +
                        std::to_string(cell));
        arc_of[ia] = arc_id;
        arc_of[ib] = arc_id;
        is_low_end[ia] = true;
    }
    if (static_cast<int>(info.arcs.size()) * 2 != m)
        throw Error("analyze_cut_cell: arc/crossing mismatch on element " + std::to_string(cell));
    if (info.arcs.size() > 4)
        throw Error("analyze_cut_cell: more than 4 interface arcs in one element (mesh too "
                    "coarse for the curvature)");

    // perimeter interval sides: flip at each crossing, anchored at corner 0
    const Vec2 corner_pos[4] = {lo, {hi.x, lo.y}, hi, {lo.x, hi.y}};
    Side corner_side[4];
    for (int cidx = 0; cidx < 4; ++cidx) {
        corner_side[cidx] = spline.side_of(corner_pos[cidx]);
        if (corner_side[cidx] == Side::OnCurve) {
            const Vec2 center{0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)};
            corner_side[cidx] = spline.side_of(corner_pos[cidx] + 1e-9 * hh * (center - corner_pos[cidx]));
        }
    }
    std::vector<int> side(m); // phase of interval r = [s_r, s_{r+1})
    {
        int anchor = corner_side[0] == Side::Inside1 ? 1 : 2;
        side[m - 1] = anchor; // interval m-1 wraps past s = 0 (the anchor corner)
        for (int r = 0; r < m - 1; ++r) {
            // walking backward from the wrap interval, flipping at crossings
            side[m - 2 - r] = 3 - side[m - 1 - r];
        }
        // verify remaining corners against their containing intervals
        for (int cidx = 1; cidx < 4; ++cidx) {
            const double sc = cidx * hh;
            int r = m - 1;
            for (int t = 0; t < m - 1; ++t)
                if (info.crossings[t].s < sc && sc < info.crossings[t + 1].s) r = t;
            const int tag = corner_side[cidx] == Side::Inside1 ? 1 : 2;
            if (side[r] != tag)
                throw Error("analyze_cut_cell: corner side inconsistent with crossings on "
                            "element " + std::to_string(cell));
        }
    }

    // straight pieces of interval r, split at corners
    auto interval_pieces = [&](int r) {
        std::vector<CellCutInfo::Piece> pieces;
        const double sa = info.crossings[r].s;
        double sb = info.crossings[(r + 1) % m].s;
        if (sb <= sa) sb += 4.0 * hh;
        Vec2 prev = info.crossings[r].point;
        const int k0 = static_cast<int>(std::floor(sa / hh)) + 1;
        for (int kk = k0; kk * hh < sb; ++kk) {
            const Vec2 cp = corner_pos[kk % 4];
            if ((cp - prev).norm() > 1e-14 * hh) {
                pieces.push_back({false, prev, cp, 0, 0});
                prev = cp;
            }
        }
        const Vec2 last = info.crossings[(r + 1) % m].point;
        if ((last - prev).norm() > 1e-14 * hh) pieces.push_back({false, prev, last, 0, 0});
        return pieces;
    };

    // boundary loops per phase
    for (int phase : {1, 2}) {
        const bool arc_forward = (phase == 1) == spline.counterclockwise();
        std::vector<bool> used(m, false);
        for (int r0 = 0; r0 < m; ++r0) {
            if (side[r0] != phase || used[r0]) continue;
            CellCutInfo::Loop loop;
            int r = r0;
            int guard = 0;
            do {
                if (guard++ > 4 * m)
                    throw Error("analyze_cut_cell: boundary walk did not close on element " +
                                std::to_string(cell));
                used[r] = true;
                for (auto& piece : interval_pieces(r)) loop.pieces.push_back(piece);
                const int b = (r + 1) % m; // crossing ending this interval
                const int arc_id = arc_of[b];
                const auto [alo, ahi] = info.arcs[arc_id];
                CellCutInfo::Piece arc_piece;
                arc_piece.is_arc = true;
                int other = -1;
                for (int t = 0; t < m; ++t)
                    if (t != b && arc_of[t] == arc_id) other = t;
                if (arc_forward) {
                    if (!is_low_end[b])
                        throw Error("analyze_cut_cell: arc direction inconsistent on element " +
                                    std::to_string(cell));
                    arc_piece.l0 = alo;
                    arc_piece.l1 = ahi;
                } else {
                    if (is_low_end[b])
                        throw Error("analyze_cut_cell: arc direction inconsistent on element " +
                                    std::to_string(cell));
                    arc_piece.l0 = ahi;
                    arc_piece.l1 = alo;
                }
                loop.pieces.push_back(arc_piece);
                r = other; // interval starting at the arc's exit crossing
                if (side[r] != phase)
                    throw Error("analyze_cut_cell: side flip lost during walk on element " +
                                std::to_string(cell));
            } while (r != r0);

            const LoopMoments mom = loop_moments(loop, &spline);
            loop.area = mom.area;
            if (loop.area < -1e-10 * hh * hh)
                throw Error("analyze_cut_cell: negatively oriented loop on element " +
                            std::to_string(cell));
            info.loops[phase - 1].push_back(std::move(loop));
        }
    }
    return info;
}

InterfaceRule build_interface_rule(const StructuredMesh& mesh, int cell,
                                   const SplineInterface& spline, int npts) {
    if (npts < 1) throw Error("build_interface_rule: need npts >= 1");
    const CellCutInfo info = analyze_cut_cell(mesh, cell, spline);
    const GaussRule1D g = gauss_legendre(npts);
    InterfaceRule rule;
    rule.element = cell;
    for (const auto& [la, lb] : info.arcs) {
        for (const auto& [pa, pb] : split_at_knots(spline, la, lb)) {
            const double span = pb - pa;
            for (size_t q = 0; q < g.points.size(); ++q) {
                const double l = pa + g.points[q] * span;
                const Vec2 dp = spline.eval(l, 1);
                rule.points.push_back(spline.eval(l));
                rule.weights.push_back(g.weights[q] * span * dp.norm());
                rule.normals.push_back(spline.unit_normal(l));
                rule.params.push_back(l);
            }
        }
    }
    return rule;
}

std::pair<VolumeRule, VolumeRule> build_volume_rules(const StructuredMesh& mesh, int cell,
                                                     const SplineInterface* spline,
                                                     const Classification& c, int order,
                                                     bool* used_fallback) {
    if (order < 2) throw Error("build_volume_rules: order too small");
    const int nq = order / 2 + 2;
    int ci, cj;
    mesh.cell_coords(cell, ci, cj);
    const Vec2 lo = mesh.cell_lo(ci, cj), hi = mesh.cell_hi(ci, cj);
    const double hh = mesh.h();

    VolumeRule r1, r2;
    r1.phase = 1;
    r2.phase = 2;
    r1.element = r2.element = cell;

    if (!c.is_cut(cell)) {
        VolumeRule& r = c.uncut_phase(cell) == 1 ? r1 : r2;
        tensor_rule_on_rect(lo, hi, nq, r.points, r.weights);
        return {r1, r2};
    }
    if (!spline) throw Error("build_volume_rules: cut element but no interface");

    const CellCutInfo info = analyze_cut_cell(mesh, cell, *spline);
    bool ok = true;
    for (int phase : {1, 2}) {
        VolumeRule& r = phase == 1 ? r1 : r2;
        for (const auto& loop : info.loops[phase - 1]) {
            if (!emit_loop_rule(loop, spline, nq, hh, 0, r.points, r.weights)) {
                ok = false;
                break;
            }
        }
        if (!ok) break;
    }
    if (!ok) {
        // fan construction failed even after chord splitting: rebuild both
        // phases by recursive bisection
        r1.points.clear();
        r1.weights.clear();
        r2.points.clear();
        r2.weights.clear();
        bisect_rules(mesh, *spline, lo, hi, 0, nq, r1.points, r1.weights, r2.points, r2.weights);
        if (used_fallback) *used_fallback = true;
    }
    return {r1, r2};
}

QuadratureSet build_quadrature(const StructuredMesh& mesh, const SplineInterface* spline,
                               const Classification& c, int order, int iface_npts) {
    QuadratureSet set;
    set.order = order;
    const int n = mesh.cell_count();
    set.volume1.resize(n);
    set.volume2.resize(n);
    set.interface_.resize(n);
    const double h2 = mesh.h() * mesh.h();
    for (int cell = 0; cell < n; ++cell) {
        bool fb = false;
        auto [r1, r2] = build_volume_rules(mesh, cell, spline, c, order, &fb);
        set.fallback_used = set.fallback_used || fb;
        if (c.is_cut(cell)) {
            set.interface_[cell] = build_interface_rule(mesh, cell, *spline, iface_npts);
            for (const VolumeRule* r : {&r1, &r2})
                if (!r->empty())
                    set.min_cut_fraction = std::min(set.min_cut_fraction, r->total_weight() / h2);
        }
        set.volume1[cell] = std::move(r1);
        set.volume2[cell] = std::move(r2);
    }
    return set;
}

} // namespace cutoseen
