#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cutoseen/core.hpp"
#include "cutoseen/geometry.hpp"
#include "cutoseen/mesh.hpp"

namespace cutoseen {

struct VolumeRule {
    std::vector<Vec2> points;
    std::vector<double> weights;
    int phase = 0; // 1 or 2
    int element = -1;

    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
    bool empty() const { return points.empty(); }
};

struct InterfaceRule {
    std::vector<Vec2> points;
    std::vector<double> weights; // arclength weights
    std::vector<Vec2> normals;   // outward from the enclosed phase-1 region
    std::vector<double> params;  // curve parameters l
    int element = -1;

    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
    bool empty() const { return points.empty(); }
};

/// 1D Gauss points along a full grid edge.
struct EdgeRule {
    std::vector<Vec2> points;
    std::vector<double> weights;
    Vec2 normal;
};

EdgeRule build_edge_rule(const StructuredMesh& mesh, const GridEdge& edge, int npts);

template <typename Rule, typename F>
double integrate(const Rule& rule, F&& f) {
    double s = 0.0;
    for (size_t q = 0; q < rule.points.size(); ++q) s += rule.weights[q] * f(rule.points[q]);
    return s;
}

/// Geometric decomposition of one cut cell: boundary crossings, interior
/// spline arcs, and the closed boundary loops of K cap Omega_i for each phase.
struct CellCutInfo {
    struct Crossing {
        double l = 0.0; // curve parameter
        Vec2 point;
        double s = 0.0; // perimeter coordinate, CCW from the lower-left corner
    };
    struct Piece {
        bool is_arc = false;
        Vec2 p0, p1;            // straight piece endpoints
        double l0 = 0, l1 = 0;  // arc piece: traversal from l0 to l1 (signed direction)
    };
    struct Loop {
        std::vector<Piece> pieces;
        double area = 0.0;
    };

    std::vector<Crossing> crossings;               // sorted by s
    std::vector<std::pair<double, double>> arcs;   // interior arcs in +l order
    std::vector<Loop> loops[2];                    // per phase (index phase-1)
};

CellCutInfo analyze_cut_cell(const StructuredMesh& mesh, int cell, const SplineInterface& spline);

InterfaceRule build_interface_rule(const StructuredMesh& mesh, int cell,
                                   const SplineInterface& spline, int npts);

/// Volume rules for both phases of one element. Uncut elements get a tensor
/// Gauss rule on their phase; cut elements get fan rules per boundary loop
/// (exact spline arcs), falling back to recursive bisection when the fan
/// construction fails. Slivers below 1e-12 h^2 yield empty rules.
std::pair<VolumeRule, VolumeRule> build_volume_rules(const StructuredMesh& mesh, int cell,
                                                     const SplineInterface* spline,
                                                     const Classification& c, int order,
                                                     bool* used_fallback = nullptr);

/// All rules for one classification.
struct QuadratureSet {
    std::vector<VolumeRule> volume1;         // per element, possibly empty
    std::vector<VolumeRule> volume2;
    std::vector<InterfaceRule> interface_;   // per element, empty unless cut
    int order = 0;
    bool fallback_used = false;
    double min_cut_fraction = 1.0; // smallest loop area / h^2 among kept loops

    const std::vector<VolumeRule>& volume(int phase) const {
        return phase == 1 ? volume1 : volume2;
    }
};

QuadratureSet build_quadrature(const StructuredMesh& mesh, const SplineInterface* spline,
                               const Classification& c, int order, int iface_npts);

} // namespace cutoseen
