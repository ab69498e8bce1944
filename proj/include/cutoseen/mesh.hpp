#pragma once

#include <string>
#include <vector>

#include "cutoseen/core.hpp"
#include "cutoseen/geometry.hpp"

namespace cutoseen {

/// Fixed uniform square grid on a square domain; the outer boundary is fitted
/// to grid lines.
struct StructuredMesh {
    Vec2 origin{0.0, 0.0};
    double side = 1.0;
    int cells = 16; // cells per side, h = side / cells

    double h() const { return side / cells; }
    int cell_count() const { return cells * cells; }
    int cell_index(int i, int j) const { return i + cells * j; }
    void cell_coords(int idx, int& i, int& j) const {
        i = idx % cells;
        j = idx / cells;
    }
    Vec2 cell_lo(int i, int j) const { return {origin.x + i * h(), origin.y + j * h()}; }
    Vec2 cell_hi(int i, int j) const { return {origin.x + (i + 1) * h(), origin.y + (j + 1) * h()}; }
    Vec2 cell_center(int i, int j) const {
        return {origin.x + (i + 0.5) * h(), origin.y + (j + 0.5) * h()};
    }
    /// Half-open ownership [x_i, x_{i+1}) with the last cell closed.
    int locate_cell(const Vec2& x) const;
    bool contains(const Vec2& x) const {
        return x.x >= origin.x && x.x <= origin.x + side && x.y >= origin.y &&
               x.y <= origin.y + side;
    }
};

/// Interior grid edge. Vertical edges separate (i-1,j)|(i,j) and carry the
/// fixed normal (1,0); horizontal edges separate (i,j-1)|(i,j) with normal (0,1).
struct GridEdge {
    bool vertical = true;
    int i = 0, j = 0; // grid-line index and offset along the edge
    int cell_minus = 0, cell_plus = 0;
};

struct Classification {
    int cells_per_side = 0;
    double h = 0.0;
    std::vector<uint8_t> flags; // bit0: cover1, bit1: cover2, bit2: cut

    std::vector<int> cut_cells;
    std::vector<int> cover_cells[2];    // T_{h,i}
    std::vector<int> interior_cells[2]; // T_{h,i} \ T_{h,B}
    std::vector<GridEdge> ghost[2];     // E_{i,B}

    bool in_cover(int cell, int phase) const { return flags[cell] & (phase == 1 ? 1 : 2); }
    bool is_cut(int cell) const { return flags[cell] & 4; }
    /// Phase of an uncut cell (1 or 2); cut cells have no single phase.
    int uncut_phase(int cell) const { return in_cover(cell, 1) ? 1 : 2; }
};

/// Classify all elements of the grid against the interface. A null spline
/// means "no interface": every element is an uncut phase-2 element.
Classification classify(const StructuredMesh& mesh, const SplineInterface* spline);

/// Transversal crossings of the interface with the perimeter of cell (i,j),
/// sorted by the CCW perimeter coordinate s (measured from the lower-left
/// corner). Crossings grazing a corner are resolved by shrinking the edge
/// split away from the corner; irrecoverable odd parity throws.
struct CellBoundaryCrossing {
    double l = 0.0;
    Vec2 point;
    double s = 0.0;
};
std::vector<CellBoundaryCrossing> cell_boundary_crossings(const StructuredMesh& mesh,
                                                          const SplineInterface& spline, int i,
                                                          int j);

/// The set E_{i,B}: interior edges touching a cut element whose two neighbor
/// elements both belong to the phase-i cover.
std::vector<GridEdge> ghost_edges(const StructuredMesh& mesh, const Classification& c, int phase);

struct MeshAssumptionReport {
    int max_chain_len = 1;
    int boundary_edge_violations = 0;
};

/// Checks the ghost-edge connectivity assumption: every cut element must
/// reach an interior element of each cover through ghost edges; reports the
/// longest such chain and interior elements with too many boundary edges.
MeshAssumptionReport check_mesh_assumptions(const StructuredMesh& mesh, const Classification& c);

std::string classification_pgm(const Classification& c);
std::string classification_csv(const Classification& c);

} // namespace cutoseen
