#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ironloss/errors.hpp"

namespace ironloss {

using Point = Eigen::Vector2d;

/// Material region a triangle belongs to. `Whole` is used by single-material
/// domains; the transformer geometry uses `Core` (iron, A) and `Coil` (B).
enum class Subdomain : std::uint8_t { Whole = 0, Core = 1, Coil = 2 };

const char* to_string(Subdomain s);

/// Bit flags on boundary edges.
namespace edge_tag {
inline constexpr std::uint8_t robin = 1;
inline constexpr std::uint8_t neumann = 2;
inline constexpr std::uint8_t measurement = 4;
}  // namespace edge_tag

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    std::uint8_t tags = 0;

    bool has(std::uint8_t tag) const { return (tags & tag) != 0; }
};

/// An edge of the core/coil interface. `core[k]` and `coil[k]` are the two
/// copies of the same geometric vertex.
struct InterfaceEdge {
    std::array<int, 2> core{};
    std::array<int, 2> coil{};
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(const Point& p, double tol = 0.0) const;
    /// Euclidean distance from p to the closed rectangle (0 inside).
    double distance(const Point& p) const;
    Rect grown(double margin) const { return {x0 - margin, x1 + margin, y0 - margin, y1 + margin}; }
};

enum class GeometryKind { UnitSquare, TransformerHalf };

struct DomainSpec {
    GeometryKind kind = GeometryKind::UnitSquare;
    Rect extents{0.0, 1.0, 0.0, 1.0};
    double mesh_size = 1.0 / 32.0;
    /// Coil rectangles (transformer only). Must lie strictly inside `extents`.
    std::vector<Rect> coils;
    /// Width of the band around coil edges meshed at half the target size.
    double refinement_band = 0.0;

    void validate() const;
};

/// Default half cross-section of the small transformer: (0,0.025)x(-0.03,0.03)
/// with one coil slab filling the core window. The coil rectangle is a
/// reconstruction of the published figure, not a measured dimension.
DomainSpec default_transformer_spec();

/// Result of a point query: containing triangle and barycentric coordinates.
struct PointLocation {
    int triangle = -1;
    Eigen::Vector3d barycentric = Eigen::Vector3d::Zero();
};

/// Immutable triangular mesh with subdomain labels, tagged boundary edges and
/// duplicated interface nodes.
class Mesh {
public:
    Mesh() = default;
    Mesh(std::vector<Point> nodes,
         std::vector<std::array<int, 3>> triangles,
         std::vector<Subdomain> labels,
         std::vector<BoundaryEdge> boundary_edges,
         std::vector<InterfaceEdge> interface_edges);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_triangles() const { return static_cast<int>(triangles_.size()); }

    const std::vector<Point>& nodes() const { return nodes_; }
    const Point& node(int i) const { return nodes_[i]; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
    const std::vector<Subdomain>& labels() const { return labels_; }
    Subdomain label(int t) const { return labels_[t]; }
    const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
    const std::vector<InterfaceEdge>& interface_edges() const { return interface_edges_; }

    /// (core node, coil node) pairs of duplicated interface vertices, sorted.
    std::vector<std::pair<int, int>> interface_node_pairs() const;

    double triangle_area(int t) const;
    double total_area() const;
    double subdomain_area(Subdomain s) const;
    double max_edge_length() const;
    const Rect& bounding_box() const { return bbox_; }
    double diameter() const;

    /// Summed length of boundary edges carrying `tag`.
    double boundary_length(std::uint8_t tag) const;

    /// Containing triangle and barycentric coordinates of `x`. On shared edges
    /// the lowest-indexed containing triangle wins. Throws LocationError when x
    /// lies outside the mesh.
    PointLocation locate(const Point& x) const;

    /// Gradients of the three barycentric coordinates on triangle t (rows).
    Eigen::Matrix<double, 3, 2> barycentric_gradients(int t) const;

private:
    void build_index();

    std::vector<Point> nodes_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Subdomain> labels_;
    std::vector<BoundaryEdge> boundary_edges_;
    std::vector<InterfaceEdge> interface_edges_;

    Rect bbox_;
    int grid_nx_ = 0, grid_ny_ = 0;
    double cell_w_ = 0.0, cell_h_ = 0.0;
    std::vector<std::vector<int>> buckets_;
};

/// Barycentric coordinates of x with respect to triangle t (may be negative).
Eigen::Vector3d barycentric_coordinates(const Mesh& mesh, int t, const Point& x);

/// Structured triangulation of (0,1)^2 with `refinement` cells per side; every
/// boundary edge tagged Robin and Measurement.
Mesh build_unit_square_mesh(int refinement);

/// Structured triangulation of the transformer half cross-section with
/// duplicated nodes on the core/coil interface.
Mesh build_transformer_mesh(const DomainSpec& spec);

Mesh build_mesh(const DomainSpec& spec);

/// Free-function form of Mesh::locate.
inline PointLocation locate_point(const Mesh& mesh, const Point& x) { return mesh.locate(x); }

void write_mesh(std::ostream& out, const Mesh& mesh);
Mesh read_mesh(std::istream& in);

}  // namespace ironloss
