#pragma once

#include "phasefield/fem.hpp"
#include "phasefield/grid.hpp"
#include "phasefield/reconstruction.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace phasefield {

using Point = Eigen::Vector2d;

/// Ground-truth insulating defects: crack polylines and cavity polygons.
struct DefectSpec {
    std::vector<std::vector<Point>> cracks;
    std::vector<std::vector<Point>> cavities;

    bool empty() const { return cracks.empty() && cavities.empty(); }
    /// Checks vertex counts, polygon simplicity and area, and strictly
    /// positive clearance from the rectangle boundary.
    void validate(double width, double height) const;
};

class ClearanceError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ProfileShape { Plus, Flat };

/// One electrode: a compactly supported current density on a side.
///
/// Plus profile: full amplitude on the central third of the support, half
/// amplitude on the outer thirds. Flat profile: full amplitude throughout.
/// `center` and `width` are fractions of the side length.
struct Electrode {
    Side side;
    double center;
    double width;
    double amplitude;
    ProfileShape shape = ProfileShape::Plus;

    /// Value at physical arclength s along the side of length `length`.
    double value(double s, double length) const;
    /// Exact integral over [s0, s1] along the side.
    double integral(double s0, double s1, double length) const;
    /// Integral over the whole support.
    double total(double length) const;
};

Electrode plus_flux(Side side, double center, double width, double amplitude,
                    ProfileShape shape = ProfileShape::Plus);

/// Sum of electrodes; the boundary current density fed into the domain.
struct FluxProfile {
    std::vector<Electrode> electrodes;

    double value(Side side, double s, const Grid& grid) const;
    double integral(Side side, double s0, double s1, const Grid& grid) const;
    /// Edge-wise averages (exact edge integrals) as a BoundaryFlux.
    BoundaryFlux to_boundary_flux(const Grid& grid) const;
};

/// Source electrode on `plus`, sink on `minus`, identical fractional
/// geometry; the sink amplitude is scaled so the net current is zero.
FluxProfile electrode_pair(Side plus, Side minus, const Grid& grid, double center = 0.5, double width = 0.3,
                           double amplitude = 1.0, ProfileShape shape = ProfileShape::Plus);

/// Refined, jittered data mesh with per-cell conductivity (1 or eta).
struct FineModel {
    Grid grid;
    CellField conductivity;
};

FineModel build_fine_model(const DefectSpec& spec, const Grid& coarse, int refine, double eta, std::uint64_t seed);

struct NoiseSpec {
    double level_f = 0.0;
    double level_g = 0.0;
    std::uint64_t seed = 0;
};

struct MeasurementPoint {
    Side side;
    double s;       // arclength along the side
    double weight;  // quadrature weight (side length / points per side)
    double f;
    double g;
};

/// One electrode configuration's Cauchy pair sampled on gamma.
struct CauchyDataset {
    Side source = Side::Left;
    Side sink = Side::Right;
    SideSet gamma;
    std::vector<MeasurementPoint> points;
    NoiseSpec noise;

    double weighted_flux_sum() const;
    double trace_mean() const;
    /// Throws std::invalid_argument when sum(w f) or mean(g) exceed `tol`.
    void validate(double tol = 1e-9) const;
};

/// Fine-mesh forward solve read off at `points_per_side` equispaced
/// (cell-centred) measurement points on every gamma side.
CauchyDataset simulate_measurement(const FineModel& model, const FluxProfile& flux, SideSet gamma,
                                   int points_per_side, const SolverOptions& options = {});

/// Relative-RMS Gaussian noise; g is re-centred and f re-balanced afterwards.
CauchyDataset add_noise(const CauchyDataset& ds, const NoiseSpec& noise);

/// Linear interpolation of a dataset onto the reconstruction grid's
/// boundary. The flux is re-balanced and the trace re-centred so the
/// discrete problem is compatible.
Measurement to_measurement(const CauchyDataset& ds, const Discretization& disc);

}  // namespace phasefield
