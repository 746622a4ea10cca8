#include "ironloss/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace ironloss {

namespace {

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

// Coordinates along one axis: every breakpoint is a grid line, pieces within
// `band` of an interior breakpoint use half the spacing.
std::vector<double> axis_coordinates(double lo, double hi, std::vector<double> interior, double h,
                                     double band) {
    std::vector<double> breaks{lo, hi};
    breaks.insert(breaks.end(), interior.begin(), interior.end());
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto is_interior = [&](double v) { return v != lo && v != hi; };

    std::vector<double> coords{lo};
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k];
        const double b = breaks[k + 1];
        // (start, end, spacing) pieces of [a, b]
        std::vector<std::array<double, 3>> pieces;
        double start = a;
        double end = b;
        const bool band_a = band > 0.0 && is_interior(a);
        const bool band_b = band > 0.0 && is_interior(b);
        std::vector<std::array<double, 3>> tail;
        if (band_a && a + band < end - 1e-12 * (hi - lo)) {
            pieces.push_back({a, a + band, 0.5 * h});
            start = a + band;
        }
        if (band_b && b - band > start + 1e-12 * (hi - lo)) {
            tail.push_back({b - band, b, 0.5 * h});
            end = b - band;
        }
        const bool whole_band = (band_a || band_b) && pieces.empty() && tail.empty();
        pieces.push_back({start, end, whole_band ? 0.5 * h : h});
        pieces.insert(pieces.end(), tail.begin(), tail.end());

        for (const auto& [s, e, spacing] : pieces) {
            const int cells = std::max(1, static_cast<int>(std::ceil((e - s) / spacing - 1e-9)));
            for (int c = 1; c <= cells; ++c) {
                coords.push_back(c == cells ? e : s + (e - s) * c / cells);
            }
        }
    }
    return coords;
}

struct GridMesh {
    std::vector<double> xs, ys;
    int nx() const { return static_cast<int>(xs.size()); }
    int ny() const { return static_cast<int>(ys.size()); }
    int id(int i, int j) const { return i + j * nx(); }
};

}  // namespace

const char* to_string(Subdomain s) {
    switch (s) {
        case Subdomain::Whole: return "whole";
        case Subdomain::Core: return "core";
        case Subdomain::Coil: return "coil";
    }
    return "?";
}

bool Rect::contains(const Point& p, double tol) const {
    return p.x() >= x0 - tol && p.x() <= x1 + tol && p.y() >= y0 - tol && p.y() <= y1 + tol;
}

double Rect::distance(const Point& p) const {
    const double dx = std::max({x0 - p.x(), 0.0, p.x() - x1});
    const double dy = std::max({y0 - p.y(), 0.0, p.y() - y1});
    return std::hypot(dx, dy);
}

void DomainSpec::validate() const {
    if (!(extents.width() > 0.0) || !(extents.height() > 0.0)) {
        throw GeometryError("domain extents must be strictly positive");
    }
    if (!(mesh_size > 0.0)) throw GeometryError("mesh size must be positive");
    if (refinement_band < 0.0) throw GeometryError("refinement band must be non-negative");
    if (kind == GeometryKind::TransformerHalf) {
        if (coils.empty()) throw GeometryError("transformer geometry needs at least one coil rectangle");
        for (std::size_t k = 0; k < coils.size(); ++k) {
            const Rect& c = coils[k];
            if (!(c.width() > 0.0) || !(c.height() > 0.0)) {
                throw GeometryError("coil rectangle has non-positive extent");
            }
            if (!(c.x0 > extents.x0 && c.x1 < extents.x1 && c.y0 > extents.y0 && c.y1 < extents.y1)) {
                throw GeometryError("coil rectangle intersects the domain boundary");
            }
            for (std::size_t l = 0; l < k; ++l) {
                const Rect& o = coils[l];
                if (c.x0 <= o.x1 && o.x0 <= c.x1 && c.y0 <= o.y1 && o.y0 <= c.y1) {
                    throw GeometryError("coil rectangles overlap or touch");
                }
            }
        }
    }
}

DomainSpec default_transformer_spec() {
    DomainSpec spec;
    spec.kind = GeometryKind::TransformerHalf;
    spec.extents = {0.0, 0.025, -0.030, 0.030};
    spec.coils = {Rect{0.008, 0.017, -0.018, 0.018}};
    spec.mesh_size = 0.001;
    spec.refinement_band = 0.001;
    return spec;
}

Mesh::Mesh(std::vector<Point> nodes, std::vector<std::array<int, 3>> triangles,
           std::vector<Subdomain> labels, std::vector<BoundaryEdge> boundary_edges,
           std::vector<InterfaceEdge> interface_edges)
    : nodes_(std::move(nodes)),
      triangles_(std::move(triangles)),
      labels_(std::move(labels)),
      boundary_edges_(std::move(boundary_edges)),
      interface_edges_(std::move(interface_edges)) {
    if (labels_.size() != triangles_.size()) throw GeometryError("one label per triangle required");
    if (nodes_.empty() || triangles_.empty()) throw GeometryError("empty mesh");
    const int n = num_nodes();
    auto check = [n](int v) {
        if (v < 0 || v >= n) throw GeometryError("node index out of range");
    };
    for (const auto& t : triangles_) {
        for (int v : t) check(v);
    }
    for (int t = 0; t < num_triangles(); ++t) {
        if (!(triangle_area(t) > 0.0)) {
            std::ostringstream msg;
            msg << "triangle " << t << " has non-positive signed area";
            throw GeometryError(msg.str());
        }
    }
    for (const auto& e : boundary_edges_) {
        check(e.a);
        check(e.b);
        if (e.has(edge_tag::robin) == e.has(edge_tag::neumann)) {
            throw GeometryError("boundary edge must be exactly one of Robin or Neumann");
        }
    }
    for (const auto& e : interface_edges_) {
        for (int k = 0; k < 2; ++k) {
            check(e.core[k]);
            check(e.coil[k]);
            if (nodes_[e.core[k]] != nodes_[e.coil[k]]) {
                throw GeometryError("interface node pair with differing coordinates");
            }
        }
    }
    build_index();
}

std::vector<std::pair<int, int>> Mesh::interface_node_pairs() const {
    std::set<std::pair<int, int>> pairs;
    for (const auto& e : interface_edges_) {
        for (int k = 0; k < 2; ++k) pairs.emplace(e.core[k], e.coil[k]);
    }
    return {pairs.begin(), pairs.end()};
}

double Mesh::triangle_area(int t) const {
    const auto& tri = triangles_[t];
    const Point& p0 = nodes_[tri[0]];
    return 0.5 * cross(nodes_[tri[1]] - p0, nodes_[tri[2]] - p0);
}

double Mesh::total_area() const {
    double a = 0.0;
    for (int t = 0; t < num_triangles(); ++t) a += triangle_area(t);
    return a;
}

double Mesh::subdomain_area(Subdomain s) const {
    double a = 0.0;
    for (int t = 0; t < num_triangles(); ++t) {
        if (labels_[t] == s) a += triangle_area(t);
    }
    return a;
}

double Mesh::max_edge_length() const {
    double m = 0.0;
    for (const auto& t : triangles_) {
        for (int k = 0; k < 3; ++k) {
            m = std::max(m, (nodes_[t[k]] - nodes_[t[(k + 1) % 3]]).norm());
        }
    }
    return m;
}

double Mesh::diameter() const { return std::hypot(bbox_.width(), bbox_.height()); }

double Mesh::boundary_length(std::uint8_t tag) const {
    double len = 0.0;
    for (const auto& e : boundary_edges_) {
        if (e.has(tag)) len += (nodes_[e.a] - nodes_[e.b]).norm();
    }
    return len;
}

Eigen::Matrix<double, 3, 2> Mesh::barycentric_gradients(int t) const {
    const auto& tri = triangles_[t];
    const Point& p0 = nodes_[tri[0]];
    const Point e1 = nodes_[tri[1]] - p0;
    const Point e2 = nodes_[tri[2]] - p0;
    const double a2 = cross(e1, e2);
    Eigen::Matrix<double, 3, 2> g;
    g.row(1) << e2.y() / a2, -e2.x() / a2;
    g.row(2) << -e1.y() / a2, e1.x() / a2;
    g.row(0) = -g.row(1) - g.row(2);
    return g;
}

Eigen::Vector3d barycentric_coordinates(const Mesh& mesh, int t, const Point& x) {
    const auto& tri = mesh.triangle(t);
    const Point& p0 = mesh.node(tri[0]);
    const Point e1 = mesh.node(tri[1]) - p0;
    const Point e2 = mesh.node(tri[2]) - p0;
    const Point v = x - p0;
    const double a2 = cross(e1, e2);
    const double l1 = cross(v, e2) / a2;
    const double l2 = cross(e1, v) / a2;
    return {1.0 - l1 - l2, l1, l2};
}

void Mesh::build_index() {
    double xmin = nodes_[0].x(), xmax = xmin, ymin = nodes_[0].y(), ymax = ymin;
    for (const auto& p : nodes_) {
        xmin = std::min(xmin, p.x());
        xmax = std::max(xmax, p.x());
        ymin = std::min(ymin, p.y());
        ymax = std::max(ymax, p.y());
    }
    bbox_ = {xmin, xmax, ymin, ymax};
    const double w = std::max(bbox_.width(), 1e-300);
    const double h = std::max(bbox_.height(), 1e-300);
    const double cells = std::max(1.0, num_triangles() / 2.0);
    grid_nx_ = std::max(1, static_cast<int>(std::ceil(std::sqrt(cells * w / h))));
    grid_ny_ = std::max(1, static_cast<int>(std::ceil(cells / grid_nx_)));
    cell_w_ = w / grid_nx_;
    cell_h_ = h / grid_ny_;
    buckets_.assign(static_cast<std::size_t>(grid_nx_) * grid_ny_, {});

    const double pad = 1e-9 * diameter();
    auto bx = [&](double x) { return std::clamp(static_cast<int>(std::floor((x - bbox_.x0) / cell_w_)), 0, grid_nx_ - 1); };
    auto by = [&](double y) { return std::clamp(static_cast<int>(std::floor((y - bbox_.y0) / cell_h_)), 0, grid_ny_ - 1); };
    for (int t = 0; t < num_triangles(); ++t) {
        const auto& tri = triangles_[t];
        double tx0 = nodes_[tri[0]].x(), tx1 = tx0, ty0 = nodes_[tri[0]].y(), ty1 = ty0;
        for (int k = 1; k < 3; ++k) {
            tx0 = std::min(tx0, nodes_[tri[k]].x());
            tx1 = std::max(tx1, nodes_[tri[k]].x());
            ty0 = std::min(ty0, nodes_[tri[k]].y());
            ty1 = std::max(ty1, nodes_[tri[k]].y());
        }
        for (int j = by(ty0 - pad); j <= by(ty1 + pad); ++j) {
            for (int i = bx(tx0 - pad); i <= bx(tx1 + pad); ++i) {
                buckets_[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * grid_nx_].push_back(t);
            }
        }
    }
}

PointLocation Mesh::locate(const Point& x) const {
    constexpr double tol = 1e-12;
    if (!std::isfinite(x.x()) || !std::isfinite(x.y()) || !bbox_.contains(x, 1e-12 * diameter())) {
        std::ostringstream msg;
        msg << "point (" << x.x() << ", " << x.y() << ") lies outside the mesh";
        throw LocationError(msg.str());
    }
    const int i = std::clamp(static_cast<int>(std::floor((x.x() - bbox_.x0) / cell_w_)), 0, grid_nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((x.y() - bbox_.y0) / cell_h_)), 0, grid_ny_ - 1);
    for (int t : buckets_[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * grid_nx_]) {
        Eigen::Vector3d b = barycentric_coordinates(*this, t, x);
        if (b.minCoeff() >= -tol) {
            b = b.cwiseMax(0.0);
            b /= b.sum();
            return {t, b};
        }
    }
    std::ostringstream msg;
    msg << "point (" << x.x() << ", " << x.y() << ") lies outside the mesh";
    throw LocationError(msg.str());
}

Mesh build_unit_square_mesh(int refinement) {
    if (refinement < 1) throw GeometryError("refinement must be at least 1");
    GridMesh g;
    for (int k = 0; k <= refinement; ++k) {
        g.xs.push_back(static_cast<double>(k) / refinement);
    }
    g.ys = g.xs;
    const int nx = g.nx();
    const int ny = g.ny();

    std::vector<Point> nodes;
    nodes.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) nodes.emplace_back(g.xs[i], g.ys[j]);
    }
    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            const int v00 = g.id(i, j), v10 = g.id(i + 1, j), v11 = g.id(i + 1, j + 1), v01 = g.id(i, j + 1);
            tris.push_back({v00, v10, v11});
            tris.push_back({v00, v11, v01});
        }
    }
    const std::uint8_t tag = edge_tag::robin | edge_tag::measurement;
    std::vector<BoundaryEdge> edges;
    for (int i = 0; i + 1 < nx; ++i) edges.push_back({g.id(i, 0), g.id(i + 1, 0), tag});
    for (int j = 0; j + 1 < ny; ++j) edges.push_back({g.id(nx - 1, j), g.id(nx - 1, j + 1), tag});
    for (int i = nx - 1; i > 0; --i) edges.push_back({g.id(i, ny - 1), g.id(i - 1, ny - 1), tag});
    for (int j = ny - 1; j > 0; --j) edges.push_back({g.id(0, j), g.id(0, j - 1), tag});

    std::vector<Subdomain> labels(tris.size(), Subdomain::Whole);
    return Mesh(std::move(nodes), std::move(tris), std::move(labels), std::move(edges), {});
}

Mesh build_transformer_mesh(const DomainSpec& spec) {
    if (spec.kind != GeometryKind::TransformerHalf) throw GeometryError("spec is not a transformer geometry");
    spec.validate();
    const Rect& ext = spec.extents;

    std::vector<double> bx, by;
    for (const auto& c : spec.coils) {
        bx.insert(bx.end(), {c.x0, c.x1});
        by.insert(by.end(), {c.y0, c.y1});
    }
    GridMesh g;
    g.xs = axis_coordinates(ext.x0, ext.x1, bx, spec.mesh_size, spec.refinement_band);
    g.ys = axis_coordinates(ext.y0, ext.y1, by, spec.mesh_size, spec.refinement_band);
    const int nx = g.nx();
    const int ny = g.ny();

    // cell labels
    std::vector<Subdomain> cell_label(static_cast<std::size_t>(nx - 1) * (ny - 1), Subdomain::Core);
    auto cell = [&](int i, int j) -> Subdomain& { return cell_label[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * (nx - 1)]; };
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            const Point c(0.5 * (g.xs[i] + g.xs[i + 1]), 0.5 * (g.ys[j] + g.ys[j + 1]));
            for (const auto& coil : spec.coils) {
                if (coil.contains(c)) cell(i, j) = Subdomain::Coil;
            }
        }
    }
    auto cell_or_core = [&](int i, int j) {
        if (i < 0 || j < 0 || i >= nx - 1 || j >= ny - 1) return Subdomain::Core;
        return cell(i, j);
    };

    std::vector<Point> nodes;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) nodes.emplace_back(g.xs[i], g.ys[j]);
    }
    // coil-side copies of interface vertices
    std::vector<int> coil_copy(nodes.size(), -1);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            bool any_coil = false, any_core = false;
            for (int dj = -1; dj <= 0; ++dj) {
                for (int di = -1; di <= 0; ++di) {
                    const Subdomain s = cell_or_core(i + di, j + dj);
                    any_coil |= s == Subdomain::Coil;
                    any_core |= s == Subdomain::Core;
                }
            }
            if (any_coil && any_core) {
                coil_copy[g.id(i, j)] = static_cast<int>(nodes.size());
                nodes.push_back(nodes[g.id(i, j)]);
            }
        }
    }
    auto vertex = [&](int i, int j, Subdomain side) {
        const int v = g.id(i, j);
        return (side == Subdomain::Coil && coil_copy[v] >= 0) ? coil_copy[v] : v;
    };

    std::vector<std::array<int, 3>> tris;
    std::vector<Subdomain> labels;
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            const Subdomain s = cell(i, j);
            const int v00 = vertex(i, j, s), v10 = vertex(i + 1, j, s);
            const int v11 = vertex(i + 1, j + 1, s), v01 = vertex(i, j + 1, s);
            tris.push_back({v00, v10, v11});
            tris.push_back({v00, v11, v01});
            labels.insert(labels.end(), {s, s});
        }
    }

    std::vector<InterfaceEdge> iface;
    for (int j = 1; j + 1 < ny; ++j) {  // horizontal edges between cell rows j-1 and j
        for (int i = 0; i + 1 < nx; ++i) {
            if (cell(i, j - 1) != cell(i, j)) {
                iface.push_back({{g.id(i, j), g.id(i + 1, j)}, {coil_copy[g.id(i, j)], coil_copy[g.id(i + 1, j)]}});
            }
        }
    }
    for (int i = 1; i + 1 < nx; ++i) {  // vertical edges between cell columns i-1 and i
        for (int j = 0; j + 1 < ny; ++j) {
            if (cell(i - 1, j) != cell(i, j)) {
                iface.push_back({{g.id(i, j), g.id(i, j + 1)}, {coil_copy[g.id(i, j)], coil_copy[g.id(i, j + 1)]}});
            }
        }
    }

    const std::uint8_t robin = edge_tag::robin;
    const std::uint8_t right = edge_tag::robin | edge_tag::measurement;
    const std::uint8_t left = edge_tag::neumann;
    std::vector<BoundaryEdge> edges;
    for (int i = 0; i + 1 < nx; ++i) edges.push_back({g.id(i, 0), g.id(i + 1, 0), robin});
    for (int j = 0; j + 1 < ny; ++j) edges.push_back({g.id(nx - 1, j), g.id(nx - 1, j + 1), right});
    for (int i = nx - 1; i > 0; --i) edges.push_back({g.id(i, ny - 1), g.id(i - 1, ny - 1), robin});
    for (int j = ny - 1; j > 0; --j) edges.push_back({g.id(0, j), g.id(0, j - 1), left});

    return Mesh(std::move(nodes), std::move(tris), std::move(labels), std::move(edges), std::move(iface));
}

Mesh build_mesh(const DomainSpec& spec) {
    spec.validate();
    if (spec.kind == GeometryKind::UnitSquare) {
        return build_unit_square_mesh(std::max(1, static_cast<int>(std::ceil(1.0 / spec.mesh_size - 1e-9))));
    }
    return build_transformer_mesh(spec);
}

}  // namespace ironloss
