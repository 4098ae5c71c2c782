#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace fsk {

namespace {

// Inserts pos into the ascending node list, replacing a node that already
// sits within snap distance so cells never degenerate.
void insert_exact(std::vector<double>& nodes, double pos, double snap) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), pos);
    if (it != nodes.end() && std::abs(*it - pos) <= snap) {
        *it = pos;
        return;
    }
    if (it != nodes.begin() && std::abs(*(it - 1) - pos) <= snap) {
        *(it - 1) = pos;
        return;
    }
    nodes.insert(it, pos);
}

}  // namespace

CollarMesh1D build_collar_mesh(double a, double b, double R, double h,
                               double gamma, double strip_eps) {
    if (!(b > a)) throw std::invalid_argument("mesh: b must exceed a");
    if (!(R > 0.0)) throw std::invalid_argument("mesh: collar width must be positive");
    if (!(h > 0.0)) throw std::invalid_argument("mesh: h must be positive");
    if (!(gamma >= 1.0)) throw std::invalid_argument("mesh: gamma must be at least 1");
    const double len = b - a;
    if (!(strip_eps > 0.0 && strip_eps <= 0.5 * len))
        throw std::invalid_argument("mesh: strip_eps must lie in (0, (b-a)/2]");

    CollarMesh1D m;
    m.a = a;
    m.b = b;
    m.collar_width = R;
    m.gamma = gamma;
    m.target_h = h;
    m.strip_eps = strip_eps;

    // Graded half meshes.  The coarsest cell of the power law grading has
    // size < gamma/(2N) * len, so N = ceil(gamma*len/(2h)) keeps every
    // interior cell at or below h.
    const int n_half = std::max(1, static_cast<int>(std::ceil(0.5 * gamma * len / h)));
    const double mid = 0.5 * (a + b);
    std::vector<double>& nodes = m.nodes;
    nodes.reserve(2 * n_half + 3);
    for (int i = 0; i < n_half; ++i) {
        const double t = std::pow(static_cast<double>(i) / n_half, gamma);
        nodes.push_back(a + t * (mid - a));
    }
    nodes.push_back(mid);
    for (int i = n_half - 1; i >= 0; --i) {
        const double t = std::pow(static_cast<double>(i) / n_half, gamma);
        nodes.push_back(b - t * (b - mid));
    }

    const double snap = 1e-12 * len;
    const double pa = a + strip_eps;
    const double pb = b - strip_eps;
    insert_exact(nodes, pa, snap);
    if (std::abs(pb - pa) > snap) insert_exact(nodes, pb, snap);

    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
        if (!(nodes[i] < nodes[i + 1]))
            throw std::logic_error("mesh: nodes not strictly increasing");

    // Uniform collar cells, at most 2h wide, aligned exactly at a and b.
    const int n_ext = std::max(1, static_cast<int>(std::ceil(R / (2.0 * h))));
    m.left_exterior_count = n_ext;
    m.exterior.reserve(2 * n_ext);
    for (int k = 0; k < n_ext; ++k) {
        const double lo = a - R * (n_ext - k) / n_ext;
        const double hi = a - R * (n_ext - k - 1) / n_ext;
        m.exterior.push_back({lo, hi});
    }
    for (int k = 0; k < n_ext; ++k) {
        const double lo = b + R * k / n_ext;
        const double hi = b + R * (k + 1) / n_ext;
        m.exterior.push_back({lo, hi});
    }
    return m;
}

StripCells strip_cells(const CollarMesh1D& mesh, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("strip_cells: eps must be positive");
    const double len = mesh.b - mesh.a;
    const double snap = 1e-12 * len;
    StripCells out;
    if (eps >= 0.5 * len - snap) {
        out.covers_domain = true;
        out.width = len;
        out.cells.resize(mesh.interior_cell_count());
        for (int i = 0; i < mesh.interior_cell_count(); ++i) out.cells[i] = i;
        return out;
    }
    const double pa = mesh.a + eps;
    const double pb = mesh.b - eps;
    auto find_node = [&](double pos) {
        auto it = std::lower_bound(mesh.nodes.begin(), mesh.nodes.end(), pos - snap);
        if (it == mesh.nodes.end() || std::abs(*it - pos) > snap)
            throw AlignmentError(
                "strip_cells: strip edge is not a mesh node; build the mesh with "
                "strip_eps equal to the requested width");
        return static_cast<int>(it - mesh.nodes.begin());
    };
    const int ia = find_node(pa);
    const int ib = find_node(pb);
    for (int i = 0; i < ia; ++i) out.cells.push_back(i);
    for (int i = ib; i < mesh.interior_cell_count(); ++i) out.cells.push_back(i);
    out.width = 2.0 * eps;
    return out;
}

DofFunction interpolate(const CollarMesh1D& mesh,
                        const std::function<double(double)>& f) {
    DofFunction u;
    u.interior.resize(mesh.interior_node_count());
    for (int i = 0; i < mesh.interior_node_count(); ++i) u.interior[i] = f(mesh.nodes[i]);
    u.exterior.resize(mesh.exterior_cell_count());
    for (int e = 0; e < mesh.exterior_cell_count(); ++e) {
        const Interval c = mesh.exterior[e];
        u.exterior[e] = f(0.5 * (c.lo + c.hi));
    }
    return u;
}

std::string mesh_to_json(const CollarMesh1D& mesh) {
    nlohmann::json j;
    j["a"] = mesh.a;
    j["b"] = mesh.b;
    j["collar_width"] = mesh.collar_width;
    j["gamma"] = mesh.gamma;
    j["target_h"] = mesh.target_h;
    j["strip_eps"] = mesh.strip_eps;
    j["nodes"] = mesh.nodes;
    nlohmann::json cells = nlohmann::json::array();
    for (const Interval& c : mesh.exterior) cells.push_back({c.lo, c.hi});
    j["exterior_cells"] = std::move(cells);
    j["left_exterior_count"] = mesh.left_exterior_count;
    return j.dump(2);
}

}  // namespace fsk
