#include "phasefield/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

namespace phasefield {

namespace {

double cross(const Point& a, const Point& b, const Point& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

bool on_segment(const Point& a, const Point& b, const Point& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
           p.y() <= std::max(a.y(), b.y());
}

// Closed segment intersection (touching counts).
bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
    const int d1 = sign(cross(q1, q2, p1));
    const int d2 = sign(cross(q1, q2, p2));
    const int d3 = sign(cross(p1, p2, q1));
    const int d4 = sign(cross(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

bool point_in_triangle(const Point& p, const std::array<Point, 3>& tri) {
    const double c0 = cross(tri[0], tri[1], p);
    const double c1 = cross(tri[1], tri[2], p);
    const double c2 = cross(tri[2], tri[0], p);
    return (c0 >= 0.0 && c1 >= 0.0 && c2 >= 0.0) || (c0 <= 0.0 && c1 <= 0.0 && c2 <= 0.0);
}

bool segment_hits_triangle(const Point& a, const Point& b, const std::array<Point, 3>& tri) {
    if (point_in_triangle(a, tri) || point_in_triangle(b, tri)) return true;
    for (int i = 0; i < 3; ++i)
        if (segments_intersect(a, b, tri[static_cast<std::size_t>(i)], tri[static_cast<std::size_t>((i + 1) % 3)]))
            return true;
    return false;
}

bool point_in_polygon(const Point& p, const std::vector<Point>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
            inside = !inside;
    }
    return inside;
}

double signed_area(const std::vector<Point>& poly) {
    double s = 0.0;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++)
        s += poly[j].x() * poly[i].y() - poly[i].x() * poly[j].y();
    return 0.5 * s;
}

// Piecewise-constant pieces of an electrode: {begin, end, value} in arclength.
std::vector<std::array<double, 3>> pieces(const Electrode& e, double length) {
    const double lo = (e.center - 0.5 * e.width) * length;
    const double w = e.width * length;
    if (e.shape == ProfileShape::Flat) return {{lo, lo + w, e.amplitude}};
    const double third = w / 3.0;
    return {{lo, lo + third, 0.5 * e.amplitude},
            {lo + third, lo + 2.0 * third, e.amplitude},
            {lo + 2.0 * third, lo + w, 0.5 * e.amplitude}};
}

// Nodes along one side in increasing side coordinate.
std::vector<int> side_nodes(const Grid& grid, Side side) {
    const auto edges = boundary_side_edges(grid, SideSet{side});
    std::vector<int> out{edges.front().a};
    for (const auto& e : edges) out.push_back(e.b);
    return out;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return (1.0 - t) * ys[i - 1] + t * ys[i];
}

double rms(const std::vector<MeasurementPoint>& pts, double MeasurementPoint::*field) {
    double s = 0.0;
    for (const auto& p : pts) s += p.*field * (p.*field);
    return pts.empty() ? 0.0 : std::sqrt(s / static_cast<double>(pts.size()));
}

void recenter_trace(std::vector<MeasurementPoint>& pts) {
    double num = 0.0, den = 0.0;
    for (const auto& p : pts) {
        num += p.weight * p.g;
        den += p.weight;
    }
    for (auto& p : pts) p.g -= num / den;
}

void rebalance_flux_shift(std::vector<MeasurementPoint>& pts) {
    double num = 0.0, den = 0.0;
    for (const auto& p : pts) {
        num += p.weight * p.f;
        den += p.weight;
    }
    for (auto& p : pts) p.f -= num / den;
}

// Scales the negative part so the weighted sum vanishes; keeps the support.
void rebalance_flux_scale(std::vector<MeasurementPoint>& pts) {
    double pos = 0.0, neg = 0.0;
    for (const auto& p : pts) (p.f > 0.0 ? pos : neg) += p.weight * p.f;
    if (neg == 0.0 || pos == 0.0) {
        rebalance_flux_shift(pts);
        return;
    }
    const double scale = -pos / neg;
    for (auto& p : pts)
        if (p.f < 0.0) p.f *= scale;
}

bool node_on_side(const Grid& grid, int k, Side side) {
    const int i = k % (grid.nx() + 1);
    const int j = k / (grid.nx() + 1);
    switch (side) {
        case Side::Bottom: return j == 0;
        case Side::Right: return i == grid.nx();
        case Side::Top: return j == grid.ny();
        case Side::Left: return i == 0;
    }
    return false;
}

}  // namespace

void DefectSpec::validate(double width, double height) const {
    auto inside = [&](const Point& p) { return p.x() > 0.0 && p.x() < width && p.y() > 0.0 && p.y() < height; };
    for (const auto& crack : cracks) {
        if (crack.size() < 2) throw std::invalid_argument("crack polyline needs at least two vertices");
        for (const auto& p : crack)
            if (!inside(p)) throw ClearanceError("crack vertex touches or leaves the domain boundary");
    }
    for (const auto& poly : cavities) {
        if (poly.size() < 3) throw std::invalid_argument("cavity polygon needs at least three vertices");
        for (const auto& p : poly)
            if (!inside(p)) throw ClearanceError("cavity vertex touches or leaves the domain boundary");
        if (!(std::abs(signed_area(poly)) > 0.0)) throw std::invalid_argument("cavity polygon has zero area");
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if (adjacent) continue;
                if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                    throw std::invalid_argument("cavity polygon is not simple");
            }
        }
    }
}

double Electrode::value(double s, double length) const {
    for (const auto& [lo, hi, val] : pieces(*this, length))
        if (s >= lo && s < hi) return val;
    return 0.0;
}

double Electrode::integral(double s0, double s1, double length) const {
    double total = 0.0;
    for (const auto& [lo, hi, val] : pieces(*this, length)) {
        const double a = std::max(lo, s0), b = std::min(hi, s1);
        if (b > a) total += (b - a) * val;
    }
    return total;
}

double Electrode::total(double length) const {
    double t = 0.0;
    for (const auto& [lo, hi, val] : pieces(*this, length)) t += (hi - lo) * val;
    return t;
}

Electrode plus_flux(Side side, double center, double width, double amplitude, ProfileShape shape) {
    if (!(width > 0.0 && width < 1.0)) throw std::invalid_argument("electrode width must lie in (0, 1)");
    if (!(center - 0.5 * width >= 0.0 && center + 0.5 * width <= 1.0))
        throw std::invalid_argument("electrode support overflows its side");
    if (!std::isfinite(amplitude)) throw std::invalid_argument("electrode amplitude must be finite");
    return {side, center, width, amplitude, shape};
}

double FluxProfile::value(Side side, double s, const Grid& grid) const {
    double v = 0.0;
    for (const auto& e : electrodes)
        if (e.side == side) v += e.value(s, grid.side_length(side));
    return v;
}

double FluxProfile::integral(Side side, double s0, double s1, const Grid& grid) const {
    double v = 0.0;
    for (const auto& e : electrodes)
        if (e.side == side) v += e.integral(s0, s1, grid.side_length(side));
    return v;
}

BoundaryFlux FluxProfile::to_boundary_flux(const Grid& grid) const {
    BoundaryFlux flux = BoundaryFlux::zero(grid);
    const auto& edges = grid.boundary_edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double s0 = grid.side_coordinate(edges[e].side, edges[e].a);
        const double s1 = grid.side_coordinate(edges[e].side, edges[e].b);
        const double mean = integral(edges[e].side, s0, s1, grid) / (s1 - s0);
        flux.values.row(static_cast<Eigen::Index>(e)).setConstant(mean);
    }
    return flux;
}

FluxProfile electrode_pair(Side plus, Side minus, const Grid& grid, double center, double width, double amplitude,
                           ProfileShape shape) {
    if (plus == minus) throw std::invalid_argument("electrode pair needs two different sides");
    const Electrode source = plus_flux(plus, center, width, amplitude, shape);
    Electrode sink = plus_flux(minus, center, width, 1.0, shape);
    sink.amplitude = -source.total(grid.side_length(plus)) / sink.total(grid.side_length(minus));
    return {{source, sink}};
}

FineModel build_fine_model(const DefectSpec& spec, const Grid& coarse, int refine, double eta, std::uint64_t seed) {
    if (refine < 4) throw std::invalid_argument("fine model refinement must be at least 4");
    if (!(eta > 0.0 && eta <= 1e-4)) throw std::invalid_argument("defect conductivity eta must lie in (0, 1e-4]");
    spec.validate(coarse.width(), coarse.height());

    const Grid base(coarse.nx() * refine, coarse.ny() * refine, coarse.width(), coarse.height());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double radius = 0.25 * std::min(base.hx(), base.hy());
    Eigen::Matrix<double, Eigen::Dynamic, 2> nodes = base.nodes();
    for (int k = 0; k < base.node_count(); ++k) {
        if (base.on_boundary(k)) continue;
        double dx, dy;
        do {
            dx = unit(rng);
            dy = unit(rng);
        } while (dx * dx + dy * dy > 1.0);
        nodes(k, 0) += radius * dx;
        nodes(k, 1) += radius * dy;
    }
    FineModel model{base.with_nodes(std::move(nodes)), CellField::Ones(base.cell_count())};
    for (int t = 0; t < model.grid.cell_count(); ++t)
        if (!(model.grid.cell_area(t) > 0.0)) throw std::logic_error("jitter produced a degenerate triangle");

    for (int t = 0; t < model.grid.cell_count(); ++t) {
        const auto& c = model.grid.cell(t);
        const std::array<Point, 3> tri{model.grid.node(c[0]), model.grid.node(c[1]), model.grid.node(c[2])};
        bool hit = false;
        for (const auto& crack : spec.cracks) {
            for (std::size_t i = 0; i + 1 < crack.size() && !hit; ++i) hit = segment_hits_triangle(crack[i], crack[i + 1], tri);
            if (hit) break;
        }
        if (!hit) {
            const Point centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
            for (const auto& poly : spec.cavities)
                if (point_in_polygon(centroid, poly)) {
                    hit = true;
                    break;
                }
        }
        if (hit) model.conductivity[t] = eta;
    }
    return model;
}

double CauchyDataset::weighted_flux_sum() const {
    double s = 0.0;
    for (const auto& p : points) s += p.weight * p.f;
    return s;
}

double CauchyDataset::trace_mean() const {
    double num = 0.0, den = 0.0;
    for (const auto& p : points) {
        num += p.weight * p.g;
        den += p.weight;
    }
    return den > 0.0 ? num / den : 0.0;
}

void CauchyDataset::validate(double tol) const {
    if (points.empty()) throw std::invalid_argument("dataset has no measurement points");
    for (const auto& p : points) {
        if (!gamma.contains(p.side)) throw std::invalid_argument("measurement point outside gamma");
        if (!(p.weight > 0.0) || !std::isfinite(p.f) || !std::isfinite(p.g) || !std::isfinite(p.s))
            throw std::invalid_argument("measurement point has invalid values");
    }
    double scale = 0.0;
    for (const auto& p : points) scale += p.weight * std::abs(p.f);
    if (std::abs(weighted_flux_sum()) > tol * std::max(scale, 1.0))
        throw std::invalid_argument("dataset flux does not sum to zero");
    double gscale = 0.0;
    for (const auto& p : points) gscale = std::max(gscale, std::abs(p.g));
    if (std::abs(trace_mean()) > tol * std::max(gscale, 1.0)) throw std::invalid_argument("dataset trace mean is not zero");
}

CauchyDataset simulate_measurement(const FineModel& model, const FluxProfile& flux, SideSet gamma,
                                   int points_per_side, const SolverOptions& options) {
    if (points_per_side < 2) throw std::invalid_argument("need at least two measurement points per side");
    if (gamma.empty()) throw std::invalid_argument("gamma must contain at least one side");
    for (const auto& e : flux.electrodes)
        if (!gamma.contains(e.side)) throw std::invalid_argument("electrode placed outside gamma");
    const Grid& grid = model.grid;
    const Gamma fine_gamma(grid, gamma);
    const NodalField load = assemble_neumann_load(grid, flux.to_boundary_flux(grid));
    const SparseMatrix op = assemble_stiffness(grid, model.conductivity);
    const NodalField u = solve_gauged_neumann(op, load, fine_gamma, options);

    CauchyDataset ds;
    ds.gamma = gamma;
    for (const auto& e : flux.electrodes) (e.amplitude > 0.0 ? ds.source : ds.sink) = e.side;
    for (Side side : gamma.sides()) {
        const auto nodes = side_nodes(grid, side);
        std::vector<double> xs, ys;
        for (int k : nodes) {
            xs.push_back(grid.side_coordinate(side, k));
            ys.push_back(u[k]);
        }
        const double length = grid.side_length(side);
        const double w = length / points_per_side;
        for (int k = 0; k < points_per_side; ++k) {
            const double s = (k + 0.5) * w;
            ds.points.push_back({side, s, w, flux.value(side, s, grid), interpolate(xs, ys, s)});
        }
    }
    rebalance_flux_scale(ds.points);
    recenter_trace(ds.points);
    return ds;
}

CauchyDataset add_noise(const CauchyDataset& ds, const NoiseSpec& noise) {
    if (!(noise.level_f >= 0.0) || !(noise.level_g >= 0.0)) throw std::invalid_argument("noise levels must be nonnegative");
    CauchyDataset out = ds;
    out.noise = noise;
    if (noise.level_f == 0.0 && noise.level_g == 0.0) return out;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sg = noise.level_g * rms(ds.points, &MeasurementPoint::g);
    for (auto& p : out.points) p.g += sg * normal(rng);
    const double sf = noise.level_f * rms(ds.points, &MeasurementPoint::f);
    for (auto& p : out.points) p.f += sf * normal(rng);
    recenter_trace(out.points);
    if (noise.level_f > 0.0) rebalance_flux_shift(out.points);
    return out;
}

Measurement to_measurement(const CauchyDataset& ds, const Discretization& disc) {
    const Grid& grid = disc.grid();
    const Gamma& gamma = disc.gamma();
    if (!(ds.gamma == gamma.sides())) throw std::invalid_argument("dataset gamma differs from the reconstruction gamma");

    struct Samples {
        std::vector<double> s, f, g;
    };
    std::array<Samples, 4> by_side;
    for (const auto& p : ds.points) {
        auto& smp = by_side[static_cast<std::size_t>(p.side)];
        smp.s.push_back(p.s);
        smp.f.push_back(p.f);
        smp.g.push_back(p.g);
    }
    for (Side side : gamma.sides().sides()) {
        const auto& smp = by_side[static_cast<std::size_t>(side)];
        if (smp.s.empty()) throw std::invalid_argument("dataset has no points on a gamma side");
        if (!std::is_sorted(smp.s.begin(), smp.s.end()))
            throw std::invalid_argument("dataset points must be ordered along each side");
    }

    BoundaryFlux flux = BoundaryFlux::zero(grid);
    const auto& edges = grid.boundary_edges();
    double gamma_length = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Side side = edges[e].side;
        if (!gamma.sides().contains(side)) continue;
        const auto& smp = by_side[static_cast<std::size_t>(side)];
        flux.values(static_cast<Eigen::Index>(e), 0) = interpolate(smp.s, smp.f, grid.side_coordinate(side, edges[e].a));
        flux.values(static_cast<Eigen::Index>(e), 1) = interpolate(smp.s, smp.f, grid.side_coordinate(side, edges[e].b));
        gamma_length += (grid.node(edges[e].b) - grid.node(edges[e].a)).norm();
    }
    const double shift = boundary_flux_integral(grid, flux) / gamma_length;
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (gamma.sides().contains(edges[e].side)) flux.values.row(static_cast<Eigen::Index>(e)).array() -= shift;

    GammaTrace trace = gamma.constant(0.0);
    for (int l = 0; l < gamma.node_count(); ++l) {
        const int k = gamma.nodes()[static_cast<std::size_t>(l)];
        double sum = 0.0;
        int count = 0;
        for (Side side : gamma.sides().sides()) {
            if (!node_on_side(grid, k, side)) continue;
            const auto& smp = by_side[static_cast<std::size_t>(side)];
            sum += interpolate(smp.s, smp.g, grid.side_coordinate(side, k));
            ++count;
        }
        trace.values[l] = sum / count;
    }
    trace.values.array() -= gamma.mean(trace);
    return Measurement::make(disc, std::move(flux), std::move(trace));
}

}  // namespace phasefield
