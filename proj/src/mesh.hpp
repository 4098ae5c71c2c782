#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "kernel.hpp"

namespace fsk {

// One dimensional mesh of the domain (a, b) plus a collar of width R on
// both sides.  The interior carries continuous piecewise linear hat
// functions on the nodes; the collar carries one piecewise constant value
// per cell.  Interior nodes are graded toward both endpoints with the
// power law (i/N)^gamma per half, and the strip edges a + strip_eps and
// b - strip_eps are inserted exactly so strip integrals are sums of whole
// cells.
struct CollarMesh1D {
    double a = 0.0;
    double b = 1.0;
    double collar_width = 1.0;
    double gamma = 1.0;
    double target_h = 0.1;
    double strip_eps = 0.0;

    std::vector<double> nodes;       // ascending, front() == a, back() == b
    std::vector<Interval> exterior;  // left collar ascending, then right collar

    int left_exterior_count = 0;  // cells in (a - R, a)

    int interior_node_count() const { return static_cast<int>(nodes.size()); }
    int interior_cell_count() const { return static_cast<int>(nodes.size()) - 1; }
    int exterior_cell_count() const { return static_cast<int>(exterior.size()); }
    Interval interior_cell(int i) const { return {nodes[i], nodes[i + 1]}; }

    // The two collar cells that touch the boundary of (a, b).
    int touching_left() const { return left_exterior_count - 1; }
    int touching_right() const { return left_exterior_count; }
    bool is_touching(int e) const {
        return e == touching_left() || e == touching_right();
    }
};

// Coefficients of a mixed function: one value per interior node (P1) and
// one per exterior cell (P0).
struct DofFunction {
    Eigen::VectorXd interior;
    Eigen::VectorXd exterior;
};

// Builds the mesh.  h is the largest admissible interior cell size and
// controls both the interior node count and the exterior cell size bound
// 2h.  Preconditions: b > a, R > 0, h > 0, gamma >= 1, and
// 0 < strip_eps <= (b - a)/2.
CollarMesh1D build_collar_mesh(double a, double b, double R, double h,
                               double gamma, double strip_eps);

// Interior cells making up the strip of width eps inside each endpoint.
struct StripCells {
    std::vector<int> cells;
    bool covers_domain = false;  // eps >= (b - a)/2: the strip is all of (a, b)
    double width = 0.0;          // total strip measure
};

// Requires the strip edges to be mesh nodes (AlignmentError otherwise).
StripCells strip_cells(const CollarMesh1D& mesh, double eps);

// Nodal values inside, cell midpoint values outside.
DofFunction interpolate(const CollarMesh1D& mesh,
                        const std::function<double(double)>& f);

// JSON document with nodes, exterior cells, and build parameters.
std::string mesh_to_json(const CollarMesh1D& mesh);

}  // namespace fsk
