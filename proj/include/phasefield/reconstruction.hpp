#pragma once

#include "phasefield/fem.hpp"
#include "phasefield/grid.hpp"
#include "phasefield/potentials.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace phasefield {

/// Reconstruction grid together with gamma and the phase-independent
/// operators every iteration reuses.
class Discretization {
public:
    Discretization(const Grid& grid, SideSet gamma_sides);

    const Grid& grid() const { return *grid_; }
    const Gamma& gamma() const { return gamma_; }
    /// Stiffness matrix with unit coefficient.
    const SparseMatrix& unit_stiffness() const { return unit_stiffness_; }
    const NodalField& lumped_mass() const { return mass_; }

private:
    const Grid* grid_;
    Gamma gamma_;
    SparseMatrix unit_stiffness_;
    NodalField mass_;
};

/// Descent variable tilde_v = 1 - v with the nodes where it is pinned to 0.
struct PhaseField {
    NodalField tilde_v;
    Eigen::Array<bool, Eigen::Dynamic, 1> mask;

    /// tilde_v = value on interior nodes, 0 on the (masked) boundary.
    static PhaseField boundary_pinned(const Grid& grid, double value);
    /// No pinned nodes.
    static PhaseField unconstrained(NodalField tilde_v);

    NodalField v() const { return NodalField::Ones(tilde_v.size()) - tilde_v; }
    int free_count() const { return static_cast<int>(mask.size() - mask.count()); }
    /// Zeroes the entries of `field` on masked nodes.
    void zero_masked(NodalField& field) const;
};

/// Cauchy pair on the reconstruction grid: boundary flux f (zero mean) and
/// measured trace g on gamma (zero gamma-mean).
struct Measurement {
    BoundaryFlux flux;
    GammaTrace trace;
    NodalField load;  // Neumann load of `flux`

    static Measurement make(const Discretization& disc, BoundaryFlux flux, GammaTrace trace);
};

struct ArmijoParams {
    double initial_step = 1.0;
    double backtrack = 0.5;
    double sigma = 1e-4;
    int max_reductions = 5;
    double growth = 1.2;
};

struct EpsStage {
    double eps;
    int iterations;
};

struct ReconParams {
    double a = 1.0;
    double b = 1.0;
    double c = 0.5;
    double q1 = 0.25;
    std::vector<EpsStage> schedule;
    /// Screening length^2 of the Riesz map; <= 0 selects 1e-3 diam^2.
    double riesz_alpha = -1.0;
    ArmijoParams armijo;
    PotentialKind potential = PotentialKind::SingleWell;
    SolverOptions solver;
    /// Relative dual-norm threshold for leaving a stage early.
    double stage_tolerance = 1e-10;

    /// Geometric eps ladder 2e-4 -> 1e-6 (single well) or 2e-6 (double
    /// well) over five stages, splitting `total_iterations` evenly.
    static std::vector<EpsStage> default_schedule(PotentialKind kind, int total_iterations);
    static ReconParams defaults(PotentialKind kind = PotentialKind::SingleWell);

    double effective_riesz_alpha(const Grid& grid) const;
    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct CostBreakdown {
    double fidelity = 0.0;
    double dirichlet = 0.0;
    double well = 0.0;
    double gradient = 0.0;
    double total = 0.0;
};

/// psi_eps(P0(1 - tilde_v)) on every triangle.
CellField state_coefficient(const Grid& grid, const PhaseField& phase, const PhaseParams& eps);

/// u = H_eps(tilde_v) for one measurement.
NodalField solve_state(const Discretization& disc, const PhaseField& phase, const PhaseParams& eps,
                       const Measurement& data, const SolverOptions& options = {});

/// State solve against an already assembled state operator.
NodalField solve_state(const Discretization& disc, const SparseMatrix& op, const Measurement& data,
                       const SolverOptions& options = {}, const NodalField* guess = nullptr);

/// Adjoint phi: A phi = -2b A u - (2a / eps^q1) M_gamma (u - g), gamma-mean 0.
NodalField solve_adjoint(const Discretization& disc, const SparseMatrix& op, const ReconParams& params,
                         const PhaseParams& eps, const Measurement& data, const NodalField& u,
                         const SolverOptions& options = {}, const NodalField* guess = nullptr);

NodalField solve_adjoint(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                         const PhaseParams& eps, const Measurement& data, const NodalField& u,
                         const SolverOptions& options = {});

/// Discrete functional for given potentials u (one per measurement). The
/// well term uses vertex (lumped) quadrature.
CostBreakdown eval_cost(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                        const PhaseParams& eps, const std::vector<Measurement>& data,
                        const std::vector<NodalField>& states);

/// Derivative of the discrete reduced functional with respect to the nodal
/// values of tilde_v, as a dual vector; zero on masked nodes.
NodalField assemble_gradient(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                             const PhaseParams& eps, const std::vector<Measurement>& data,
                             const std::vector<NodalField>& states, const std::vector<NodalField>& adjoints);

/// Sensitivity U of the state in direction `direction` (P0-projected).
NodalField directional_state_derivative(const Discretization& disc, const PhaseField& phase,
                                        const PhaseParams& eps, const NodalField& u0,
                                        const NodalField& direction, const SolverOptions& options = {});

/// Directional derivative of the reduced functional computed from state
/// sensitivities instead of the adjoint; independent check of
/// assemble_gradient.
double sensitivity_directional_derivative(const Discretization& disc, const PhaseField& phase,
                                          const ReconParams& params, const PhaseParams& eps,
                                          const std::vector<Measurement>& data,
                                          const std::vector<NodalField>& states, const NodalField& direction,
                                          const SolverOptions& options = {});

/// Riesz map of the inner product int(uv) + alpha int(grad u . grad v) with
/// lumped mass and homogeneous Dirichlet values on masked nodes.
class RieszMap {
public:
    RieszMap(const Discretization& disc, double alpha, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask,
             SolverOptions options = {});
    NodalField apply(const NodalField& dual) const;

private:
    std::vector<int> free_;
    int node_count_;
    SparseMatrix reduced_;
    SolverOptions options_;
};

NodalField riesz_lift(const Discretization& disc, const NodalField& dual, double alpha,
                      const Eigen::Array<bool, Eigen::Dynamic, 1>& mask);

/// Mask plus the nodes sitting on a bound of [0, 1] whose gradient points
/// out of the box. Pinning these in the Riesz solve keeps the projected
/// step a descent direction.
Eigen::Array<bool, Eigen::Dynamic, 1> active_bounds(const PhaseField& phase, const NodalField& grad);

/// Phase together with its solved states and cost.
struct Evaluation {
    PhaseField phase;
    SparseMatrix op;  // state operator of `phase`
    std::vector<NodalField> states;
    CostBreakdown cost;
};

/// Solves all states for `phase` and evaluates the functional. `guesses`
/// (one per measurement, may be null) warm-start the solver.
Evaluation evaluate(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                    const PhaseParams& eps, const std::vector<Measurement>& data,
                    const std::vector<NodalField>* guesses = nullptr);

struct IterationRecord {
    int stage = 0;
    int iteration = 0;
    double eps = 0.0;
    CostBreakdown cost;  // after the step
    double step = 0.0;   // accepted step length, 0 when no step was taken
    double dual_norm = 0.0;
    int reductions = 0;
    bool accepted = false;
    bool converged = false;
};

/// Step length carried between iterations.
struct ArmijoState {
    double step = 1.0;
};

struct StepResult {
    Evaluation next;
    IterationRecord record;
};

/// Projected Armijo line search along -delta with truncation to [0, 1].
/// `slope` = <G, delta>. Stops without moving when
/// sqrt(slope) <= converge_norm.
StepResult armijo_step(const Discretization& disc, const ReconParams& params, const PhaseParams& eps,
                       const std::vector<Measurement>& data, const Evaluation& current, const NodalField& delta,
                       double slope, ArmijoState& state, double converge_norm = 0.0);

struct StageSummary {
    double eps = 0.0;
    int iterations = 0;
    CostBreakdown initial_cost;
    CostBreakdown final_cost;
    PhaseField phase;
};

struct ReconstructionResult {
    PhaseField phase;
    std::vector<IterationRecord> history;
    std::vector<StageSummary> stages;
};

class ReconstructionError : public std::runtime_error {
public:
    ReconstructionError(int iteration, const std::string& what);
    int iteration;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Gradient method with eps continuation over params.schedule.
ReconstructionResult run_reconstruction(const Discretization& disc, const ReconParams& params,
                                        const std::vector<Measurement>& data, const PhaseField& initial,
                                        const IterationCallback& on_iteration = {});

}  // namespace phasefield
