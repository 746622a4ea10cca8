#pragma once

#include <string>
#include <vector>

#include "ironloss/fem.hpp"

namespace ironloss {

enum class RowKind { Internal, Boundary };

/// Sparse m_s x n averaging rows. `sensor[i]` is the sensor id of row i.
struct MeasurementRows {
    SparseMatrix rows;
    RowKind kind = RowKind::Internal;
    std::vector<int> sensor;

    int size() const { return static_cast<int>(rows.rows()); }
};

/// Where sensor centres may go: an outer box minus excluded boxes, both
/// already adjusted for the sensor radius.
struct AdmissibleRegion {
    Rect outer;
    std::vector<Rect> excluded;

    /// Disks of radius r must stay inside `domain` and away from `keep_out`;
    /// a relative safety margin keeps stencil points strictly inside.
    static AdmissibleRegion for_disks(const Rect& domain, const std::vector<Rect>& keep_out, double radius,
                                      double relative_margin = 1e-3);

    bool contains(const Point& p) const;
    /// Nearest-face projection: clamp to the outer box, then push out of any
    /// excluded box through its closest face.
    Point project(const Point& p) const;
};

struct SensorDesign {
    std::vector<Point> positions;
    double radius = 0.05;
    int stencil_points = 7;

    int count() const { return static_cast<int>(positions.size()); }
    void validate() const;

    /// (x_0, y_0, x_1, y_1, ...)
    Vector flatten() const;
    SensorDesign with_flat(const Vector& p) const;
};

/// Centre followed by Q-1 points equally spaced on the circle of radius r.
std::vector<Point> stencil(const Point& center, double radius, int q);

MeasurementRows build_internal_sensor_rows(const Mesh& mesh, const SensorDesign& design);

/// d/dp_axis of the averaging row of one sensor (1 x n).
SparseMatrix internal_row_derivative(const Mesh& mesh, const SensorDesign& design, int sensor, int axis);
/// All sensors at once (m_int x n) for one axis.
SparseMatrix internal_derivative_rows(const Mesh& mesh, const SensorDesign& design, int axis);

/// Equal arc-length pixels along the Measurement-tagged boundary chain. Each
/// row is the exact average of the piecewise-linear trace over its segment.
MeasurementRows build_boundary_pixel_rows(const Mesh& mesh, int pixel_count);

/// Ordered nodes of the measurement chain (closed loops start at the
/// lexicographically smallest vertex and run counter-clockwise; open chains
/// start at their lexicographically smallest end).
std::vector<int> measurement_chain(const Mesh& mesh, bool* closed = nullptr);

struct PenaltyValue {
    double value = 0.0;
    Vector gradient;
};

/// weight * sum_{i<j} max(0, 2r - |p_i - p_j|)^2 and its gradient.
PenaltyValue overlap_penalty(const SensorDesign& design, double weight);

std::string design_to_json(const SensorDesign& design);
SensorDesign design_from_json(const std::string& text);

}  // namespace ironloss
