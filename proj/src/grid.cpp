#include "phasefield/grid.hpp"

#include <stdexcept>

namespace phasefield {

std::string_view to_string(Side side) {
    switch (side) {
        case Side::Bottom: return "bottom";
        case Side::Right: return "right";
        case Side::Top: return "top";
        case Side::Left: return "left";
    }
    return "?";
}

Side parse_side(std::string_view name) {
    if (name == "bottom" || name == "down") return Side::Bottom;
    if (name == "right") return Side::Right;
    if (name == "top" || name == "up") return Side::Top;
    if (name == "left") return Side::Left;
    throw std::invalid_argument("unknown side label '" + std::string(name) + "'");
}

std::vector<Side> SideSet::sides() const {
    std::vector<Side> out;
    for (Side s : {Side::Bottom, Side::Right, Side::Top, Side::Left})
        if (contains(s)) out.push_back(s);
    return out;
}

Grid::Grid(int nx, int ny, double width, double height)
    : nx_(nx), ny_(ny), width_(width), height_(height) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("grid: cell counts must be positive");
    if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("grid: extents must be positive");

    nodes_.resize((nx + 1) * (ny + 1), 2);
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            // Exact end coordinates, so sides sit exactly on the rectangle.
            nodes_(node_index(i, j), 0) = i == nx ? width : width * i / nx;
            nodes_(node_index(i, j), 1) = j == ny ? height : height * j / ny;
        }
    }

    cells_.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int n00 = node_index(i, j);
            const int n10 = node_index(i + 1, j);
            const int n01 = node_index(i, j + 1);
            const int n11 = node_index(i + 1, j + 1);
            cells_.push_back({n00, n10, n11});
            cells_.push_back({n00, n11, n01});
        }
    }

    boundary_edges_.reserve(static_cast<std::size_t>(2 * (nx + ny)));
    for (int i = 0; i < nx; ++i) boundary_edges_.push_back({node_index(i, 0), node_index(i + 1, 0), Side::Bottom});
    for (int j = 0; j < ny; ++j) boundary_edges_.push_back({node_index(nx, j), node_index(nx, j + 1), Side::Right});
    for (int i = 0; i < nx; ++i) boundary_edges_.push_back({node_index(i, ny), node_index(i + 1, ny), Side::Top});
    for (int j = 0; j < ny; ++j) boundary_edges_.push_back({node_index(0, j), node_index(0, j + 1), Side::Left});
}

double Grid::cell_area(int t) const {
    const auto& c = cell(t);
    const Eigen::Vector2d e1 = node(c[1]) - node(c[0]);
    const Eigen::Vector2d e2 = node(c[2]) - node(c[0]);
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

double Grid::side_length(Side side) const {
    return (side == Side::Bottom || side == Side::Top) ? width_ : height_;
}

double Grid::side_coordinate(Side side, int k) const {
    return (side == Side::Bottom || side == Side::Top) ? nodes_(k, 0) : nodes_(k, 1);
}

bool Grid::on_boundary(int k) const {
    const int i = k % (nx_ + 1);
    const int j = k / (nx_ + 1);
    return i == 0 || j == 0 || i == nx_ || j == ny_;
}

Grid Grid::with_nodes(Eigen::Matrix<double, Eigen::Dynamic, 2> nodes) const {
    if (nodes.rows() != nodes_.rows()) throw std::invalid_argument("grid: node count mismatch");
    Grid out = *this;
    out.nodes_ = std::move(nodes);
    return out;
}

Grid build_grid(int nx, int ny, double width, double height) { return Grid(nx, ny, width, height); }

CellField p0_project(const Grid& grid, const NodalField& field) {
    if (field.size() != grid.node_count()) throw std::invalid_argument("p0_project: field size mismatch");
    CellField out(grid.cell_count());
    for (int t = 0; t < grid.cell_count(); ++t) {
        const auto& c = grid.cell(t);
        out[t] = (field[c[0]] + field[c[1]] + field[c[2]]) / 3.0;
    }
    return out;
}

std::vector<BoundaryEdge> boundary_side_edges(const Grid& grid, SideSet sides) {
    if (sides.empty()) throw std::invalid_argument("boundary_side_edges: empty side set");
    std::vector<BoundaryEdge> out;
    for (const auto& e : grid.boundary_edges())
        if (sides.contains(e.side)) out.push_back(e);
    return out;
}

NodalField lumped_mass(const Grid& grid) {
    NodalField m = NodalField::Zero(grid.node_count());
    for (int t = 0; t < grid.cell_count(); ++t) {
        const double third = grid.cell_area(t) / 3.0;
        for (int k : grid.cell(t)) m[k] += third;
    }
    return m;
}

}  // namespace phasefield
