#include "phasefield/fem.hpp"

#include <cmath>
#include <sstream>

namespace phasefield {

namespace {

std::string format_compat(double imbalance, double tolerance) {
    std::ostringstream os;
    os << "incompatible Neumann data: |sum(rhs)| = " << imbalance << " exceeds " << tolerance;
    return os.str();
}

std::string format_conv(int iterations, double residual) {
    std::ostringstream os;
    os << "CG did not converge after " << iterations << " iterations (relative residual " << residual << ")";
    return os.str();
}

void remove_mean(Eigen::VectorXd& v) { v.array() -= v.mean(); }

// Preconditioned CG. With `deflate` set, the residual is kept in the
// zero-sum subspace, which is the range of a stiffness matrix whose kernel
// is the constants.
void pcg(const SparseMatrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x, const SolverOptions& options,
         bool deflate, SolveReport* report) {
    const Eigen::Index n = b.size();
    const int cap = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(10 * n);
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero();
        if (report) *report = {0, 0.0};
        return;
    }
    const double target = options.rel_tol * bnorm;
    const Eigen::VectorXd inv_diag = a.diagonal().cwiseInverse();

    Eigen::VectorXd r = b - a * x;
    if (deflate) remove_mean(r);
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    Eigen::VectorXd ap(n);
    double rz = r.dot(z);

    int it = 0;
    double rnorm = r.norm();
    while (rnorm > target) {
        if (it >= cap) throw ConvergenceError(it, rnorm / bnorm);
        ap.noalias() = a * p;
        const double alpha = rz / p.dot(ap);
        x.noalias() += alpha * p;
        r.noalias() -= alpha * ap;
        if (deflate) remove_mean(r);
        ++it;
        rnorm = r.norm();
        if (rnorm <= target) {
            // Confirm with the true residual; restart from it if the
            // recursion has drifted.
            r = b - a * x;
            if (deflate) remove_mean(r);
            rnorm = r.norm();
            if (rnorm <= target) break;
            z = inv_diag.cwiseProduct(r);
            p = z;
            rz = r.dot(z);
            continue;
        }
        z = inv_diag.cwiseProduct(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (report) *report = {it, rnorm / bnorm};
}

}  // namespace

CompatibilityError::CompatibilityError(double imbalance_, double tolerance_)
    : std::runtime_error(format_compat(imbalance_, tolerance_)), imbalance(imbalance_), tolerance(tolerance_) {}

ConvergenceError::ConvergenceError(int iterations_, double residual_)
    : std::runtime_error(format_conv(iterations_, residual_)), iterations(iterations_), residual(residual_) {}

Eigen::Matrix<double, Eigen::Dynamic, 2> cell_gradients(const Grid& grid, const NodalField& u) {
    if (u.size() != grid.node_count()) throw std::invalid_argument("cell_gradients: field size mismatch");
    Eigen::Matrix<double, Eigen::Dynamic, 2> g(grid.cell_count(), 2);
    for (int t = 0; t < grid.cell_count(); ++t) {
        const auto& c = grid.cell(t);
        const Eigen::Vector2d p0 = grid.node(c[0]), p1 = grid.node(c[1]), p2 = grid.node(c[2]);
        const Eigen::Vector2d e[3] = {p2 - p1, p0 - p2, p1 - p0};
        const double two_area = e[2].x() * (-e[1].y()) - e[2].y() * (-e[1].x());
        Eigen::Vector2d grad = Eigen::Vector2d::Zero();
        for (int i = 0; i < 3; ++i) grad += u[c[i]] * Eigen::Vector2d(-e[i].y(), e[i].x());
        g.row(t) = grad.transpose() / two_area;
    }
    return g;
}

SparseMatrix assemble_stiffness(const Grid& grid, const CellField& coeff) {
    if (coeff.size() != grid.cell_count()) throw std::invalid_argument("assemble_stiffness: coefficient size mismatch");
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(9 * grid.cell_count()));
    for (int t = 0; t < grid.cell_count(); ++t) {
        if (!(coeff[t] > 0.0) || !std::isfinite(coeff[t]))
            throw std::invalid_argument("assemble_stiffness: coefficient must be positive on every cell");
        const auto& c = grid.cell(t);
        const Eigen::Matrix3d k = coeff[t] * local_stiffness<double>(grid.node(c[0]), grid.node(c[1]), grid.node(c[2]));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) triplets.emplace_back(c[i], c[j], k(i, j));
    }
    SparseMatrix a(grid.node_count(), grid.node_count());
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
}

BoundaryFlux BoundaryFlux::zero(const Grid& grid) {
    return {Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(static_cast<Eigen::Index>(grid.boundary_edges().size()), 2)};
}

NodalField assemble_neumann_load(const Grid& grid, const BoundaryFlux& flux) {
    const auto& edges = grid.boundary_edges();
    if (flux.values.rows() != static_cast<Eigen::Index>(edges.size()))
        throw std::invalid_argument("assemble_neumann_load: flux must cover every boundary edge");
    NodalField load = NodalField::Zero(grid.node_count());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double len = (grid.node(edges[e].b) - grid.node(edges[e].a)).norm();
        const double fa = flux.values(static_cast<Eigen::Index>(e), 0);
        const double fb = flux.values(static_cast<Eigen::Index>(e), 1);
        load[edges[e].a] += len * (2.0 * fa + fb) / 6.0;
        load[edges[e].b] += len * (fa + 2.0 * fb) / 6.0;
    }
    return load;
}

double boundary_flux_integral(const Grid& grid, const BoundaryFlux& flux) {
    const auto& edges = grid.boundary_edges();
    double total = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double len = (grid.node(edges[e].b) - grid.node(edges[e].a)).norm();
        total += 0.5 * len * (flux.values(static_cast<Eigen::Index>(e), 0) + flux.values(static_cast<Eigen::Index>(e), 1));
    }
    return total;
}

Gamma::Gamma(const Grid& grid, SideSet sides) : grid_(&grid), sides_(sides) {
    const auto edges = boundary_side_edges(grid, sides);
    local_.assign(static_cast<std::size_t>(grid.node_count()), -1);
    auto local_of = [&](int k) {
        auto& slot = local_[static_cast<std::size_t>(k)];
        if (slot < 0) {
            slot = static_cast<int>(nodes_.size());
            nodes_.push_back(k);
        }
        return slot;
    };
    for (const auto& e : edges) {
        const double len = (grid.node(e.b) - grid.node(e.a)).norm();
        edges_.push_back({local_of(e.a), local_of(e.b), len});
        length_ += len;
    }
}

void Gamma::check(const GammaTrace& t) const {
    if (!(t.sides == sides_) || t.values.size() != node_count())
        throw std::invalid_argument("gamma trace defined on a different gamma");
}

GammaTrace Gamma::restrict(const NodalField& u) const {
    if (u.size() != grid_->node_count()) throw std::invalid_argument("Gamma::restrict: field size mismatch");
    GammaTrace t{sides_, Eigen::VectorXd(node_count())};
    for (int l = 0; l < node_count(); ++l) t.values[l] = u[nodes_[static_cast<std::size_t>(l)]];
    return t;
}

GammaTrace Gamma::constant(double value) const {
    return {sides_, Eigen::VectorXd::Constant(node_count(), value)};
}

double Gamma::mean(const GammaTrace& t) const {
    check(t);
    double s = 0.0;
    for (const auto& e : edges_) s += 0.5 * e.length * (t.values[e.a] + t.values[e.b]);
    return s / length_;
}

double Gamma::mean(const NodalField& u) const { return mean(restrict(u)); }

double Gamma::inner(const GammaTrace& t1, const GammaTrace& t2) const {
    check(t1);
    check(t2);
    double s = 0.0;
    for (const auto& e : edges_) {
        const double a1 = t1.values[e.a], b1 = t1.values[e.b];
        const double a2 = t2.values[e.a], b2 = t2.values[e.b];
        s += e.length / 6.0 * (2.0 * a1 * a2 + a1 * b2 + b1 * a2 + 2.0 * b1 * b2);
    }
    return s;
}

NodalField Gamma::mass_apply(const GammaTrace& t) const {
    check(t);
    NodalField out = NodalField::Zero(grid_->node_count());
    for (const auto& e : edges_) {
        const double a = t.values[e.a], b = t.values[e.b];
        out[nodes_[static_cast<std::size_t>(e.a)]] += e.length / 6.0 * (2.0 * a + b);
        out[nodes_[static_cast<std::size_t>(e.b)]] += e.length / 6.0 * (a + 2.0 * b);
    }
    return out;
}

double gamma_inner(const Gamma& gamma, const GammaTrace& t1, const GammaTrace& t2) { return gamma.inner(t1, t2); }

NodalField solve_spd(const SparseMatrix& op, const NodalField& rhs, const SolverOptions& options,
                     const NodalField* guess, SolveReport* report) {
    if (rhs.size() != op.rows()) throw std::invalid_argument("solve_spd: rhs size mismatch");
    NodalField x = guess ? *guess : NodalField::Zero(rhs.size());
    pcg(op, rhs, x, options, false, report);
    return x;
}

NodalField solve_gauged_neumann(const SparseMatrix& op, const NodalField& rhs, const Gamma& gamma,
                                const SolverOptions& options, const NodalField* guess, SolveReport* report) {
    if (rhs.size() != op.rows()) throw std::invalid_argument("solve_gauged_neumann: rhs size mismatch");
    const double imbalance = std::abs(rhs.sum());
    const double tolerance = 1e-8 * rhs.lpNorm<1>();
    if (imbalance > tolerance) throw CompatibilityError(imbalance, tolerance);

    NodalField b = rhs;
    remove_mean(b);
    NodalField u = guess ? *guess : NodalField::Zero(rhs.size());
    pcg(op, b, u, options, true, report);
    u.array() -= gamma.mean(u);
    return u;
}

}  // namespace phasefield
