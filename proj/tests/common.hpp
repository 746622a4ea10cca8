#pragma once

#include <cmath>
#include <random>

#include "ironloss/harness.hpp"

namespace testutil {

using namespace ironloss;

inline double rel_diff(const Matrix& a, const Matrix& b) {
    const double s = std::max(a.norm(), b.norm());
    return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

/// True when every stencil point of every sensor stays in one triangle for
/// coordinate shifts of +-h: finite differences then see a smooth function.
inline bool stencils_clear_of_edges(const Mesh& mesh, const SensorDesign& d, double h) {
    for (const auto& c : d.positions) {
        for (const auto& p : stencil(c, d.radius, d.stencil_points)) {
            const int t = mesh.locate(p).triangle;
            for (int a = 0; a < 2; ++a)
                for (double s : {-h, h}) {
                    Point q = p;
                    q(a) += s;
                    const Eigen::Vector3d b = barycentric_coordinates(mesh, t, q);
                    if (b.minCoeff() <= 1e-12) return false;
                }
        }
    }
    return true;
}

/// Random admissible design whose stencils avoid element edges.
inline SensorDesign random_clear_design(const Mesh& mesh, const AdmissibleRegion& region, SensorDesign tmpl, int count,
                                        std::mt19937_64& rng, double h) {
    std::uniform_real_distribution<double> ux(region.outer.x0, region.outer.x1), uy(region.outer.y0, region.outer.y1);
    for (;;) {
        tmpl.positions.clear();
        while (tmpl.count() < count) {
            const Point p(ux(rng), uy(rng));
            if (region.contains(p)) tmpl.positions.push_back(p);
        }
        if (stencils_clear_of_edges(mesh, tmpl, h)) return tmpl;
    }
}

/// Small unit-square problem: coarse mesh, short time grid.
inline ExperimentConfig small_exp1(int refinement = 12, int observations = 4) {
    ExperimentConfig c = default_config("exp1");
    c.domain.mesh_size = 1.0 / refinement;
    c.time = {0.6, observations, 6};
    c.boundary_pixels = 24;
    c.rank = 20;
    return c;
}

}  // namespace testutil
