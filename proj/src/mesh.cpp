#include "cutoseen/mesh.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace cutoseen {

int StructuredMesh::locate_cell(const Vec2& x) const {
    const double hh = h();
    int i = static_cast<int>(std::floor((x.x - origin.x) / hh));
    int j = static_cast<int>(std::floor((x.y - origin.y) / hh));
    i = std::clamp(i, 0, cells - 1);
    j = std::clamp(j, 0, cells - 1);
    return cell_index(i, j);
}

std::vector<CellBoundaryCrossing> cell_boundary_crossings(const StructuredMesh& mesh,
                                                          const SplineInterface& spline, int i,
                                                          int j) {
    const Vec2 lo = mesh.cell_lo(i, j), hi = mesh.cell_hi(i, j);
    const double hh = mesh.h();
    double eps = 1e-12 * hh;
    for (int attempt = 0; attempt < 4; ++attempt, eps *= 1000.0) {
        std::vector<CellBoundaryCrossing> out;
        // bottom, right, top, left; s runs CCW from the lower-left corner
        const Vec2 ea[4] = {{lo.x + eps, lo.y}, {hi.x, lo.y + eps}, {hi.x - eps, hi.y},
                            {lo.x, hi.y - eps}};
        const Vec2 eb[4] = {{hi.x - eps, lo.y}, {hi.x, hi.y - eps}, {lo.x + eps, hi.y},
                            {lo.x, lo.y + eps}};
        for (int e = 0; e < 4; ++e) {
            for (const CurveIntersection& hit : spline.edge_intersections(ea[e], eb[e])) {
                double s = 0.0;
                switch (e) {
                    case 0: s = hit.point.x - lo.x; break;
                    case 1: s = hh + (hit.point.y - lo.y); break;
                    case 2: s = 2.0 * hh + (hi.x - hit.point.x); break;
                    case 3: s = 3.0 * hh + (hi.y - hit.point.y); break;
                }
                out.push_back({hit.l, hit.point, s});
            }
        }
        if (out.size() % 2 != 0) continue;
        std::sort(out.begin(), out.end(),
                  [](const CellBoundaryCrossing& a, const CellBoundaryCrossing& b) {
                      return a.s < b.s;
                  });
        return out;
    }
    throw Error("cell_boundary_crossings: inconsistent crossing parity on cell (" +
                std::to_string(i) + "," + std::to_string(j) + ")");
}

Classification classify(const StructuredMesh& mesh, const SplineInterface* spline) {
    Classification c;
    c.cells_per_side = mesh.cells;
    c.h = mesh.h();
    c.flags.assign(mesh.cell_count(), 0);

    if (!spline) {
        for (int idx = 0; idx < mesh.cell_count(); ++idx) c.flags[idx] = 2;
    } else {
        Vec2 blo, bhi;
        spline->bounding_box(blo, bhi);
        const double tol = spline->on_curve_tol();
        if (blo.x < mesh.origin.x + tol || blo.y < mesh.origin.y + tol ||
            bhi.x > mesh.origin.x + mesh.side - tol || bhi.y > mesh.origin.y + mesh.side - tol)
            throw Error("classify: interface touches or leaves the domain boundary");

        const double hh = mesh.h();
        // one element containing the whole interface means h cannot resolve it
        if (bhi.x - blo.x < hh && bhi.y - blo.y < hh) {
            const int i0 = mesh.locate_cell({blo.x, blo.y}) % mesh.cells;
            const int j0 = mesh.locate_cell({blo.x, blo.y}) / mesh.cells;
            const Vec2 chi = mesh.cell_hi(i0, j0);
            const Vec2 clo = mesh.cell_lo(i0, j0);
            if (bhi.x <= chi.x && bhi.y <= chi.y && blo.x >= clo.x && blo.y >= clo.y)
                throw Error("classify: mesh too coarse, one element contains the whole interface");
        }

        const int ib0 = std::max(0, static_cast<int>(std::floor((blo.x - mesh.origin.x) / hh)) - 1);
        const int ib1 = std::min(mesh.cells - 1,
                                 static_cast<int>(std::floor((bhi.x - mesh.origin.x) / hh)) + 1);
        const int jb0 = std::max(0, static_cast<int>(std::floor((blo.y - mesh.origin.y) / hh)) - 1);
        const int jb1 = std::min(mesh.cells - 1,
                                 static_cast<int>(std::floor((bhi.y - mesh.origin.y) / hh)) + 1);

        for (int j = 0; j < mesh.cells; ++j) {
            for (int i = 0; i < mesh.cells; ++i) {
                const int idx = mesh.cell_index(i, j);
                const bool near_band = i >= ib0 && i <= ib1 && j >= jb0 && j <= jb1;
                if (!near_band) {
                    c.flags[idx] = 2; // far outside the interface bbox: phase 2
                    continue;
                }
                const size_t crossings = cell_boundary_crossings(mesh, *spline, i, j).size();
                if (crossings > 0) {
                    c.flags[idx] = 1 | 2 | 4;
                } else {
                    Side side = spline->side_of(mesh.cell_center(i, j));
                    if (side == Side::OnCurve) {
                        // tangent graze through the center: probe off-center
                        side = spline->side_of(mesh.cell_center(i, j) + Vec2{0.29 * hh, 0.17 * hh});
                    }
                    c.flags[idx] = (side == Side::Inside1) ? 1 : 2;
                }
            }
        }
    }

    for (int idx = 0; idx < mesh.cell_count(); ++idx) {
        if (c.is_cut(idx)) c.cut_cells.push_back(idx);
        for (int phase : {1, 2}) {
            if (c.in_cover(idx, phase)) {
                c.cover_cells[phase - 1].push_back(idx);
                if (!c.is_cut(idx)) c.interior_cells[phase - 1].push_back(idx);
            }
        }
    }
    c.ghost[0] = ghost_edges(mesh, c, 1);
    c.ghost[1] = ghost_edges(mesh, c, 2);
    return c;
}

std::vector<GridEdge> ghost_edges(const StructuredMesh& mesh, const Classification& c, int phase) {
    std::vector<GridEdge> edges;
    const int N = mesh.cells;
    // vertical interior edges between (i-1,j) and (i,j)
    for (int j = 0; j < N; ++j) {
        for (int i = 1; i < N; ++i) {
            const int km = mesh.cell_index(i - 1, j), kp = mesh.cell_index(i, j);
            if (!(c.is_cut(km) || c.is_cut(kp))) continue;
            if (!(c.in_cover(km, phase) && c.in_cover(kp, phase))) continue;
            edges.push_back({true, i, j, km, kp});
        }
    }
    for (int j = 1; j < N; ++j) {
        for (int i = 0; i < N; ++i) {
            const int km = mesh.cell_index(i, j - 1), kp = mesh.cell_index(i, j);
            if (!(c.is_cut(km) || c.is_cut(kp))) continue;
            if (!(c.in_cover(km, phase) && c.in_cover(kp, phase))) continue;
            edges.push_back({false, j, i, km, kp});
        }
    }
    return edges;
}

MeshAssumptionReport check_mesh_assumptions(const StructuredMesh& mesh, const Classification& c) {
    MeshAssumptionReport report;
    const int N = mesh.cells;

    for (int phase : {1, 2}) {
        std::vector<uint8_t> interior(mesh.cell_count(), 0);
        for (int idx : c.interior_cells[phase - 1]) interior[idx] = 1;

        // boundary-edge count of interior elements on the boundary of omega_{h,i}
        for (int idx : c.interior_cells[phase - 1]) {
            int i, j;
            mesh.cell_coords(idx, i, j);
            int on_boundary = 0;
            const int di[4] = {-1, 1, 0, 0};
            const int dj[4] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                const int ni = i + di[d], nj = j + dj[d];
                if (ni < 0 || ni >= N || nj < 0 || nj >= N) {
                    ++on_boundary;
                    continue;
                }
                if (!interior[mesh.cell_index(ni, nj)]) ++on_boundary;
            }
            if (on_boundary > 2) ++report.boundary_edge_violations;
        }

        if (c.cut_cells.empty()) continue;

        // adjacency through ghost edges of this phase
        std::vector<std::vector<int>> adj(mesh.cell_count());
        for (const GridEdge& e : c.ghost[phase - 1]) {
            adj[e.cell_minus].push_back(e.cell_plus);
            adj[e.cell_plus].push_back(e.cell_minus);
        }
        for (int start : c.cut_cells) {
            if (!c.in_cover(start, phase)) continue;
            std::vector<int> dist(mesh.cell_count(), -1);
            std::deque<int> queue{start};
            dist[start] = 1;
            int reach = -1;
            while (!queue.empty()) {
                const int k = queue.front();
                queue.pop_front();
                if (interior[k]) {
                    reach = dist[k];
                    break;
                }
                for (int nb : adj[k])
                    if (dist[nb] < 0) {
                        dist[nb] = dist[k] + 1;
                        queue.push_back(nb);
                    }
            }
            if (reach < 0)
                throw Error("mesh assumptions: cut element " + std::to_string(start) +
                            " cannot reach the interior of phase " + std::to_string(phase) +
                            " through ghost edges");
            report.max_chain_len = std::max(report.max_chain_len, reach);
        }
    }
    return report;
}

std::string classification_pgm(const Classification& c) {
    std::ostringstream os;
    const int N = c.cells_per_side;
    os << "P2\n" << N << " " << N << "\n3\n";
    for (int j = N - 1; j >= 0; --j) {
        for (int i = 0; i < N; ++i) {
            const int idx = i + N * j;
            int v = 0;
            if (c.is_cut(idx))
                v = 3;
            else if (c.in_cover(idx, 1))
                v = 1;
            else
                v = 2;
            os << v << (i + 1 == N ? "" : " ");
        }
        os << "\n";
    }
    return os.str();
}

std::string classification_csv(const Classification& c) {
    std::ostringstream os;
    os << "i,j,cover1,cover2,cut\n";
    const int N = c.cells_per_side;
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) {
            const int idx = i + N * j;
            os << i << "," << j << "," << (c.in_cover(idx, 1) ? 1 : 0) << ","
               << (c.in_cover(idx, 2) ? 1 : 0) << "," << (c.is_cut(idx) ? 1 : 0) << "\n";
        }
    return os.str();
}

} // namespace cutoseen
