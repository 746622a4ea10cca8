#include <cmath>
#include <limits>

#include "ironloss/harness.hpp"

namespace ironloss {

std::vector<GaussianMode> draw_gaussian_modes(std::mt19937_64& rng, int forced_modes) {
    std::uniform_int_distribution<int> count(1, 11);
    std::uniform_real_distribution<double> width(0.0, 100.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int m = forced_modes > 0 ? forced_modes : count(rng);
    std::vector<GaussianMode> modes(m);
    for (auto& g : modes) {
        g.a = width(rng);
        g.b = width(rng);
        g.cx = unit(rng);
        g.cy = unit(rng);
    }
    return modes;
}

Vector evaluate_modes(const Mesh& mesh, const std::vector<GaussianMode>& modes) {
    Vector f = Vector::Zero(mesh.num_nodes());
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        const Point& p = mesh.node(i);
        for (const auto& g : modes) {
            const double dx = p.x() - g.cx, dy = p.y() - g.cy;
            f(i) += std::exp(-g.a * dx * dx - g.b * dy * dy);
        }
    }
    return f;
}

Vector generate_random_source(const Mesh& mesh, std::uint64_t seed, int forced_modes) {
    std::mt19937_64 rng(seed);
    return evaluate_modes(mesh, draw_gaussian_modes(rng, forced_modes));
}

Vector true_source_transformer(const Mesh& mesh, const std::vector<Rect>& coils) {
    std::vector<char> in_coil(mesh.num_nodes(), 0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        if (mesh.label(t) != Subdomain::Coil) continue;
        for (int v : mesh.triangle(t)) in_coil[v] = 1;
    }
    Vector f(mesh.num_nodes());
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        if (in_coil[i]) {
            f(i) = 2.557e5;
            continue;
        }
        double d = std::numeric_limits<double>::infinity();
        for (const auto& c : coils) d = std::min(d, c.distance(mesh.node(i)));
        f(i) = coils.empty() ? 0.0 : 1e5 * std::exp(-150.0 * d);
    }
    return f;
}

namespace {
std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix(parent);
    h = splitmix(h ^ a);
    h = splitmix(h ^ b);
    return splitmix(h ^ c);
}

}  // namespace ironloss
