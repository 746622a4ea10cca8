#include "ironloss/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <json.hpp>

namespace ironloss {

AdmissibleRegion AdmissibleRegion::for_disks(const Rect& domain, const std::vector<Rect>& keep_out, double radius,
                                             double relative_margin) {
    const double m = radius * (1.0 + relative_margin);
    AdmissibleRegion r;
    r.outer = domain.grown(-m);
    if (r.outer.x0 > r.outer.x1 || r.outer.y0 > r.outer.y1) {
        throw DesignInfeasibleError("sensor radius too large for the domain");
    }
    for (const auto& k : keep_out) r.excluded.push_back(k.grown(m));
    return r;
}

namespace {
bool strictly_inside(const Rect& r, const Point& p) {
    return p.x() > r.x0 && p.x() < r.x1 && p.y() > r.y0 && p.y() < r.y1;
}
}  // namespace

bool AdmissibleRegion::contains(const Point& p) const {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y())) return false;
    if (!outer.contains(p)) return false;
    for (const auto& e : excluded) {
        if (strictly_inside(e, p)) return false;
    }
    return true;
}

Point AdmissibleRegion::project(const Point& p) const {
    auto clamp = [&](Point q) {
        q.x() = std::clamp(q.x(), outer.x0, outer.x1);
        q.y() = std::clamp(q.y(), outer.y0, outer.y1);
        return q;
    };
    Point q = clamp(p);
    for (const auto& e : excluded) {
        if (!strictly_inside(e, q)) continue;
        // Candidate exits through each face, nearest first.
        std::array<std::pair<double, Point>, 4> exits{{
            {q.x() - e.x0, Point(e.x0, q.y())},
            {e.x1 - q.x(), Point(e.x1, q.y())},
            {q.y() - e.y0, Point(q.x(), e.y0)},
            {e.y1 - q.y(), Point(q.x(), e.y1)},
        }};
        std::sort(exits.begin(), exits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        Point best = exits[0].second;
        for (const auto& [d, cand] : exits) {
            if (contains(cand)) {
                best = cand;
                break;
            }
        }
        q = best;
    }
    return q;
}

void SensorDesign::validate() const {
    if (!(radius > 0.0)) throw DesignInfeasibleError("sensor radius must be positive");
    if (stencil_points < 1) throw DesignInfeasibleError("stencil needs at least one point");
    for (const auto& p : positions) {
        if (!std::isfinite(p.x()) || !std::isfinite(p.y())) throw DesignInfeasibleError("non-finite sensor position");
    }
}

Vector SensorDesign::flatten() const {
    Vector v(2 * positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        v(2 * i) = positions[i].x();
        v(2 * i + 1) = positions[i].y();
    }
    return v;
}

SensorDesign SensorDesign::with_flat(const Vector& p) const {
    if (p.size() % 2 != 0) throw DimensionError("flattened design must have even length");
    SensorDesign d = *this;
    d.positions.resize(p.size() / 2);
    for (Eigen::Index i = 0; i < p.size() / 2; ++i) d.positions[i] = {p(2 * i), p(2 * i + 1)};
    return d;
}

std::vector<Point> stencil(const Point& center, double radius, int q) {
    std::vector<Point> pts{center};
    for (int k = 0; k + 1 < q; ++k) {
        const double a = 2.0 * std::numbers::pi * k / (q - 1);
        pts.emplace_back(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a));
    }
    return pts;
}

namespace {

PointLocation locate_for_sensor(const Mesh& mesh, const Point& x, int sensor) {
    try {
        return mesh.locate(x);
    } catch (const LocationError&) {
        throw DesignInfeasibleError("stencil point of sensor " + std::to_string(sensor) + " lies outside the mesh");
    }
}

}  // namespace

MeasurementRows build_internal_sensor_rows(const Mesh& mesh, const SensorDesign& design) {
    design.validate();
    std::vector<Eigen::Triplet<double>> trips;
    const double w = 1.0 / design.stencil_points;
    MeasurementRows out;
    out.kind = RowKind::Internal;
    for (int i = 0; i < design.count(); ++i) {
        for (const auto& x : stencil(design.positions[i], design.radius, design.stencil_points)) {
            const auto loc = locate_for_sensor(mesh, x, i);
            const auto& tri = mesh.triangle(loc.triangle);
            for (int a = 0; a < 3; ++a) trips.emplace_back(i, tri[a], w * loc.barycentric(a));
        }
        out.sensor.push_back(i);
    }
    out.rows.resize(design.count(), mesh.num_nodes());
    out.rows.setFromTriplets(trips.begin(), trips.end());
    out.rows.makeCompressed();
    return out;
}

namespace {

void derivative_triplets(const Mesh& mesh, const SensorDesign& design, int sensor, int axis, int row,
                         std::vector<Eigen::Triplet<double>>& trips) {
    if (axis != 0 && axis != 1) throw DimensionError("axis must be 0 (x) or 1 (y)");
    if (sensor < 0 || sensor >= design.count()) throw DimensionError("sensor index out of range");
    const double w = 1.0 / design.stencil_points;
    for (const auto& x : stencil(design.positions[sensor], design.radius, design.stencil_points)) {
        const auto loc = locate_for_sensor(mesh, x, sensor);
        const auto g = mesh.barycentric_gradients(loc.triangle);
        const auto& tri = mesh.triangle(loc.triangle);
        for (int a = 0; a < 3; ++a) trips.emplace_back(row, tri[a], w * g(a, axis));
    }
}

}  // namespace

SparseMatrix internal_row_derivative(const Mesh& mesh, const SensorDesign& design, int sensor, int axis) {
    std::vector<Eigen::Triplet<double>> trips;
    derivative_triplets(mesh, design, sensor, axis, 0, trips);
    SparseMatrix r(1, mesh.num_nodes());
    r.setFromTriplets(trips.begin(), trips.end());
    return r;
}

SparseMatrix internal_derivative_rows(const Mesh& mesh, const SensorDesign& design, int axis) {
    design.validate();
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < design.count(); ++i) derivative_triplets(mesh, design, i, axis, i, trips);
    SparseMatrix r(design.count(), mesh.num_nodes());
    r.setFromTriplets(trips.begin(), trips.end());
    r.makeCompressed();
    return r;
}

std::vector<int> measurement_chain(const Mesh& mesh, bool* closed) {
    std::map<int, int> next;
    std::map<int, int> indegree;
    for (const auto& e : mesh.boundary_edges()) {
        if (!e.has(edge_tag::measurement)) continue;
        if (!next.emplace(e.a, e.b).second) throw GeometryError("measurement boundary branches");
        ++indegree[e.b];
        indegree.try_emplace(e.a, 0);
    }
    if (next.empty()) throw GeometryError("mesh has no measurement edges");

    auto lex_less = [&](int a, int b) {
        const Point& pa = mesh.node(a);
        const Point& pb = mesh.node(b);
        return pa.x() < pb.x() || (pa.x() == pb.x() && pa.y() < pb.y());
    };

    std::vector<int> starts;
    for (const auto& [v, d] : indegree) {
        if (d == 0) starts.push_back(v);
    }
    const bool loop = starts.empty();
    if (starts.size() > 1) throw GeometryError("measurement boundary is not a single connected chain");
    int start = loop ? next.begin()->first : starts.front();
    if (loop) {
        for (const auto& [v, w] : next) {
            if (lex_less(v, start)) start = v;
        }
    }

    std::vector<int> chain{start};
    int v = start;
    while (true) {
        auto it = next.find(v);
        if (it == next.end()) break;
        v = it->second;
        chain.push_back(v);
        if (v == start) break;
        if (chain.size() > next.size() + 1) throw GeometryError("measurement chain does not terminate");
    }
    if (chain.size() != next.size() + 1) throw GeometryError("measurement boundary is not a single connected chain");

    if (loop) {
        double twice_area = 0.0;
        for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
            const Point& p = mesh.node(chain[k]);
            const Point& q = mesh.node(chain[k + 1]);
            twice_area += p.x() * q.y() - q.x() * p.y();
        }
        if (twice_area < 0.0) std::reverse(chain.begin(), chain.end());
    } else if (lex_less(chain.back(), chain.front())) {
        std::reverse(chain.begin(), chain.end());
    }
    if (closed) *closed = loop;
    return chain;
}

MeasurementRows build_boundary_pixel_rows(const Mesh& mesh, int pixel_count) {
    if (pixel_count < 1) throw DimensionError("pixel count must be positive");
    const auto chain = measurement_chain(mesh);
    const int edges = static_cast<int>(chain.size()) - 1;
    if (pixel_count > edges) {
        warn("boundary pixel count " + std::to_string(pixel_count) + " exceeds the " + std::to_string(edges) +
             " measurement edges of the mesh");
    }
    std::vector<double> s(chain.size(), 0.0);
    for (int k = 0; k < edges; ++k) s[k + 1] = s[k] + (mesh.node(chain[k + 1]) - mesh.node(chain[k])).norm();
    const double total = s.back();
    const double seg = total / pixel_count;

    std::vector<Eigen::Triplet<double>> trips;
    MeasurementRows out;
    out.kind = RowKind::Boundary;
    int e = 0;
    for (int k = 0; k < pixel_count; ++k) {
        const double a = k * seg;
        const double b = (k + 1 == pixel_count) ? total : (k + 1) * seg;
        while (e > 0 && s[e] > a) --e;
        for (int j = e; j < edges && s[j] < b; ++j) {
            const double len = s[j + 1] - s[j];
            const double lo = std::max(a, s[j]);
            const double hi = std::min(b, s[j + 1]);
            if (hi <= lo) continue;
            const double t0 = (lo - s[j]) / len;
            const double t1 = (hi - s[j]) / len;
            const double wb = 0.5 * (t1 * t1 - t0 * t0) * len;
            const double wa = (t1 - t0) * len - wb;
            trips.emplace_back(k, chain[j], wa / (b - a));
            trips.emplace_back(k, chain[j + 1], wb / (b - a));
            e = j;
        }
        out.sensor.push_back(k);
    }
    out.rows.resize(pixel_count, mesh.num_nodes());
    out.rows.setFromTriplets(trips.begin(), trips.end());
    out.rows.makeCompressed();
    return out;
}

PenaltyValue overlap_penalty(const SensorDesign& design, double weight) {
    if (weight < 0.0) throw ConfigError("overlap penalty weight must be nonnegative");
    PenaltyValue out;
    out.gradient = Vector::Zero(2 * design.count());
    if (weight == 0.0) return out;
    const double reach = 2.0 * design.radius;
    for (int i = 0; i < design.count(); ++i) {
        for (int j = i + 1; j < design.count(); ++j) {
            const Point d = design.positions[i] - design.positions[j];
            const double dist = d.norm();
            if (dist >= reach) continue;
            const double gap = reach - dist;
            out.value += weight * gap * gap;
            if (dist > 0.0) {
                const Point g = (-2.0 * weight * gap / dist) * d;
                out.gradient.segment<2>(2 * i) += g;
                out.gradient.segment<2>(2 * j) -= g;
            }
        }
    }
    return out;
}

std::string design_to_json(const SensorDesign& design) {
    nlohmann::json j;
    j["radius"] = design.radius;
    j["stencil_points"] = design.stencil_points;
    j["positions"] = nlohmann::json::array();
    for (const auto& p : design.positions) j["positions"].push_back({p.x(), p.y()});
    return j.dump(2);
}

SensorDesign design_from_json(const std::string& text) {
    SensorDesign d;
    try {
        const auto j = nlohmann::json::parse(text);
        d.radius = j.at("radius").get<double>();
        d.stencil_points = j.value("stencil_points", 7);
        for (const auto& p : j.at("positions")) {
            if (p.size() != 2) throw DataError("design position must be an [x, y] pair");
            d.positions.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid design JSON: ") + e.what());
    }
    d.validate();
    return d;
}

}  // namespace ironloss
