#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace phasefield {

/// Nodal (P1) values, one entry per grid vertex.
using NodalField = Eigen::VectorXd;
/// Per-triangle (P0) values.
using CellField = Eigen::VectorXd;

enum class Side : std::uint8_t { Bottom = 0, Right = 1, Top = 2, Left = 3 };

std::string_view to_string(Side side);
Side parse_side(std::string_view name);

/// Small bitset over the four rectangle sides.
class SideSet {
public:
    constexpr SideSet() = default;
    constexpr SideSet(std::initializer_list<Side> sides) {
        for (Side s : sides) insert(s);
    }

    static constexpr SideSet all() { return {Side::Bottom, Side::Right, Side::Top, Side::Left}; }

    constexpr void insert(Side s) { bits_ |= mask(s); }
    constexpr bool contains(Side s) const { return (bits_ & mask(s)) != 0; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr bool operator==(const SideSet&) const = default;

    /// Sides in canonical order (bottom, right, top, left).
    std::vector<Side> sides() const;

private:
    static constexpr std::uint8_t mask(Side s) { return std::uint8_t(1u << static_cast<unsigned>(s)); }
    std::uint8_t bits_ = 0;
};

struct BoundaryEdge {
    int a;  // node with smaller side coordinate
    int b;
    Side side;
};

/// Regular structured triangulation of [0, width] x [0, height].
///
/// Nodes are numbered row-major from the bottom-left corner, node (i, j) has
/// index j * (nx + 1) + i. Every rectangle cell is split along its
/// lower-left to upper-right diagonal into two counter-clockwise triangles.
/// Boundary edges are stored side by side (bottom, right, top, left), each
/// side ordered by increasing coordinate along it.
class Grid {
public:
    Grid(int nx, int ny, double width, double height);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double width() const { return width_; }
    double height() const { return height_; }
    double hx() const { return width_ / nx_; }
    double hy() const { return height_ / ny_; }

    int node_count() const { return static_cast<int>(nodes_.rows()); }
    int cell_count() const { return static_cast<int>(cells_.size()); }
    int node_index(int i, int j) const { return j * (nx_ + 1) + i; }

    const Eigen::Matrix<double, Eigen::Dynamic, 2>& nodes() const { return nodes_; }
    Eigen::Vector2d node(int k) const { return nodes_.row(k).transpose(); }
    const std::array<int, 3>& cell(int t) const { return cells_[static_cast<std::size_t>(t)]; }
    const std::vector<std::array<int, 3>>& cells() const { return cells_; }
    const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }

    /// Signed area of triangle t (positive for every cell of a valid grid).
    double cell_area(int t) const;
    double side_length(Side side) const;
    /// Coordinate of node k along `side`, measured from the side's start.
    double side_coordinate(Side side, int k) const;
    bool on_boundary(int k) const;

    /// Returns a copy with node coordinates replaced. Connectivity is kept,
    /// so callers are responsible for keeping triangles positively oriented.
    Grid with_nodes(Eigen::Matrix<double, Eigen::Dynamic, 2> nodes) const;

private:
    int nx_;
    int ny_;
    double width_;
    double height_;
    Eigen::Matrix<double, Eigen::Dynamic, 2> nodes_;
    std::vector<std::array<int, 3>> cells_;
    std::vector<BoundaryEdge> boundary_edges_;
};

Grid build_grid(int nx, int ny, double width, double height);

/// Per-triangle mean of the vertex values; the exact L2 projection of a P1
/// field onto piecewise constants.
CellField p0_project(const Grid& grid, const NodalField& field);

/// Boundary edges lying on `sides`, grouped in canonical side order and
/// ordered by arclength along each side.
std::vector<BoundaryEdge> boundary_side_edges(const Grid& grid, SideSet sides);

/// Lumped (row-sum) P1 mass, |T|/3 per incident triangle.
NodalField lumped_mass(const Grid& grid);

}  // namespace phasefield
