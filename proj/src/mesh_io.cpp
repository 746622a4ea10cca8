#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "ironloss/mesh.hpp"

namespace ironloss {

// Plain-text format:
//   ironloss-mesh 1
//   nodes N            then N lines "index x y"
//   triangles T        then T lines "index n1 n2 n3 label"
//   boundary_edges E   then E lines "index a b tags"
//   interface_edges I  then I lines "index core0 core1 coil0 coil1"
void write_mesh(std::ostream& out, const Mesh& mesh) {
    const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "ironloss-mesh 1\n";
    out << "nodes " << mesh.num_nodes() << '\n';
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        out << i << ' ' << mesh.node(i).x() << ' ' << mesh.node(i).y() << '\n';
    }
    out << "triangles " << mesh.num_triangles() << '\n';
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        out << t << ' ' << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << to_string(mesh.label(t)) << '\n';
    }
    out << "boundary_edges " << mesh.boundary_edges().size() << '\n';
    int k = 0;
    for (const auto& e : mesh.boundary_edges()) {
        out << k++ << ' ' << e.a << ' ' << e.b << ' ' << static_cast<int>(e.tags) << '\n';
    }
    out << "interface_edges " << mesh.interface_edges().size() << '\n';
    k = 0;
    for (const auto& e : mesh.interface_edges()) {
        out << k++ << ' ' << e.core[0] << ' ' << e.core[1] << ' ' << e.coil[0] << ' ' << e.coil[1] << '\n';
    }
    out.precision(old_precision);
}

namespace {

std::size_t read_header(std::istream& in, const std::string& expected) {
    std::string word;
    std::size_t count = 0;
    if (!(in >> word >> count) || word != expected) {
        throw IoError("mesh file: expected section '" + expected + "'");
    }
    return count;
}

Subdomain parse_label(const std::string& s) {
    if (s == "whole") return Subdomain::Whole;
    if (s == "core") return Subdomain::Core;
    if (s == "coil") return Subdomain::Coil;
    throw IoError("mesh file: unknown subdomain label '" + s + "'");
}

}  // namespace

Mesh read_mesh(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "ironloss-mesh" || version != 1) {
        throw IoError("mesh file: bad header");
    }
    std::vector<Point> nodes(read_header(in, "nodes"));
    for (auto& p : nodes) {
        int idx;
        double x, y;
        if (!(in >> idx >> x >> y)) throw IoError("mesh file: truncated node block");
        p = {x, y};
    }
    const std::size_t nt = read_header(in, "triangles");
    std::vector<std::array<int, 3>> tris(nt);
    std::vector<Subdomain> labels(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        int idx;
        std::string label;
        if (!(in >> idx >> tris[t][0] >> tris[t][1] >> tris[t][2] >> label)) {
            throw IoError("mesh file: truncated triangle block");
        }
        labels[t] = parse_label(label);
    }
    std::vector<BoundaryEdge> edges(read_header(in, "boundary_edges"));
    for (auto& e : edges) {
        int idx, tags;
        if (!(in >> idx >> e.a >> e.b >> tags)) throw IoError("mesh file: truncated boundary block");
        e.tags = static_cast<std::uint8_t>(tags);
    }
    std::vector<InterfaceEdge> iface(read_header(in, "interface_edges"));
    for (auto& e : iface) {
        int idx;
        if (!(in >> idx >> e.core[0] >> e.core[1] >> e.coil[0] >> e.coil[1])) {
            throw IoError("mesh file: truncated interface block");
        }
    }
    return Mesh(std::move(nodes), std::move(tris), std::move(labels), std::move(edges), std::move(iface));
}

}  // namespace ironloss
