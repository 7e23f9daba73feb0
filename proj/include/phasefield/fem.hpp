#pragma once

#include "phasefield/grid.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasefield {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Element stiffness of the P1 Laplacian on one triangle (unit coefficient).
///
/// With e_i the edge opposite vertex i, grad(lambda_i) is e_i rotated by a
/// quarter turn over 2|T|, so K_ij = (e_i . e_j) / (4 |T|).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> local_stiffness(const Eigen::Matrix<Scalar, 2, 1>& p0,
                                            const Eigen::Matrix<Scalar, 2, 1>& p1,
                                            const Eigen::Matrix<Scalar, 2, 1>& p2) {
    const Eigen::Matrix<Scalar, 2, 1> e[3] = {p2 - p1, p0 - p2, p1 - p0};
    const Scalar area = Scalar(0.5) * (e[2].x() * (-e[1].y()) - e[2].y() * (-e[1].x()));
    Eigen::Matrix<Scalar, 3, 3> k;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) k(i, j) = (e[i].x() * e[j].x() + e[i].y() * e[j].y()) / (Scalar(4) * area);
    return k;
}

/// Constant gradient of a P1 field on every triangle (rows = cells).
Eigen::Matrix<double, Eigen::Dynamic, 2> cell_gradients(const Grid& grid, const NodalField& u);

/// A_ij = sum_T coeff_T int_T grad(lambda_i) . grad(lambda_j).
SparseMatrix assemble_stiffness(const Grid& grid, const CellField& coeff);

/// Piecewise-linear normal flux density on the boundary: row e holds the
/// values at the two endpoints (a, b) of grid.boundary_edges()[e]. The flux
/// may jump across nodes.
struct BoundaryFlux {
    Eigen::Matrix<double, Eigen::Dynamic, 2> values;

    static BoundaryFlux zero(const Grid& grid);
};

/// load_i = int_{boundary} f lambda_i, exact for piecewise-linear f.
NodalField assemble_neumann_load(const Grid& grid, const BoundaryFlux& flux);

/// int_{boundary} f.
double boundary_flux_integral(const Grid& grid, const BoundaryFlux& flux);

/// Values of a trace on the nodes of gamma, in Gamma::nodes() order.
struct GammaTrace {
    SideSet sides;
    Eigen::VectorXd values;
};

/// The accessible boundary part gamma as a union of rectangle sides.
class Gamma {
public:
    Gamma(const Grid& grid, SideSet sides);

    const Grid& grid() const { return *grid_; }
    SideSet sides() const { return sides_; }
    /// Global indices of the nodes on gamma (each node listed once).
    const std::vector<int>& nodes() const { return nodes_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    /// Local (gamma) index of global node k, or -1.
    int local_index(int k) const { return local_[static_cast<std::size_t>(k)]; }
    double length() const { return length_; }

    GammaTrace restrict(const NodalField& u) const;
    GammaTrace constant(double value) const;
    /// Length-weighted trapezoid mean over gamma.
    double mean(const NodalField& u) const;
    double mean(const GammaTrace& t) const;
    /// Exact int_gamma t1 t2 for piecewise-linear traces.
    double inner(const GammaTrace& t1, const GammaTrace& t2) const;
    /// Consistent boundary mass on gamma applied to t, scattered to all nodes.
    NodalField mass_apply(const GammaTrace& t) const;

private:
    struct Edge {
        int a;
        int b;
        double length;
    };
    void check(const GammaTrace& t) const;

    const Grid* grid_;
    SideSet sides_;
    std::vector<int> nodes_;
    std::vector<int> local_;
    std::vector<Edge> edges_;
    double length_ = 0.0;
};

double gamma_inner(const Gamma& gamma, const GammaTrace& t1, const GammaTrace& t2);

class CompatibilityError : public std::runtime_error {
public:
    CompatibilityError(double imbalance, double tolerance);
    double imbalance;
    double tolerance;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(int iterations, double residual);
    int iterations;
    double residual;
};

struct SolverOptions {
    double rel_tol = 1e-10;
    /// 0 selects 10 x (system size).
    int max_iterations = 0;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;  // final ||A x - b||_2 / ||b||_2
};

/// Jacobi-preconditioned CG for a symmetric positive definite system.
NodalField solve_spd(const SparseMatrix& op, const NodalField& rhs, const SolverOptions& options = {},
                     const NodalField* guess = nullptr, SolveReport* report = nullptr);

/// Solves the singular pure-Neumann system A u = rhs (constants in the
/// kernel) with deflated Jacobi-PCG and fixes the gauge mean_gamma(u) = 0.
///
/// Throws CompatibilityError when |sum(rhs)| > 1e-8 ||rhs||_1 and
/// ConvergenceError when the iteration cap is reached.
NodalField solve_gauged_neumann(const SparseMatrix& op, const NodalField& rhs, const Gamma& gamma,
                                const SolverOptions& options = {}, const NodalField* guess = nullptr,
                                SolveReport* report = nullptr);

}  // namespace phasefield
