#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ironloss/harness.hpp"

namespace ironloss {

Json Report::to_json() const {
    Json j;
    j["schema"] = "ironloss.report/1";
    j["experiment"] = experiment;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["config"] = config;
    j["payload"] = payload;
    j["timings"] = timings;
    j["errors"] = errors;
    return j;
}

namespace {
std::ofstream open_out(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}
}  // namespace

void write_json(const std::string& path, const Json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    char buf[32];
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", r[i]);
            out << (i ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Json design_json(const SensorDesign& d) {
    Json pts = Json::array();
    for (const auto& p : d.positions) pts.push_back({p.x(), p.y()});
    return {{"radius", d.radius}, {"stencil_points", d.stencil_points}, {"positions", pts}};
}

Json trajectory_json(const OptTrajectory& t) {
    return {{"iterations", static_cast<int>(t.phi.size()) - 1},
            {"termination", t.termination},
            {"phi", t.phi},
            {"phi_shifted", t.shifted()},
            {"steps", t.steps},
            {"grad_norms", t.grad_norms},
            {"initial", design_json(t.iterates.front())},
            {"final", design_json(t.final_design())}};
}

std::vector<std::vector<double>> trajectory_rows(const OptTrajectory& t) {
    std::vector<std::vector<double>> rows;
    const auto sh = t.shifted();
    for (std::size_t k = 0; k < t.phi.size(); ++k)
        rows.push_back({static_cast<double>(k), t.phi[k], sh[k], t.steps[k], t.grad_norms[k]});
    return rows;
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("spearman: size mismatch");
    if (a.size() < 2) return 0.0;
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace ironloss
