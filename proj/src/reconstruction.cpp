#include "phasefield/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace phasefield {

namespace {

double fidelity_weight(const ReconParams& params, const PhaseParams& eps) {
    return params.a / std::pow(eps.eps(), params.q1);
}

void check_sizes(const Discretization& disc, const PhaseField& phase) {
    const int n = disc.grid().node_count();
    if (phase.tilde_v.size() != n || phase.mask.size() != n)
        throw std::invalid_argument("phase field does not match the grid");
}

void check_states(const std::vector<Measurement>& data, const std::vector<NodalField>& states) {
    if (states.size() != data.size()) throw std::invalid_argument("one state per measurement is required");
}

GammaTrace residual_trace(const Discretization& disc, const Measurement& data, const NodalField& u) {
    GammaTrace r = disc.gamma().restrict(u);
    r.values -= data.trace.values;
    return r;
}

std::string iteration_message(int iteration, const std::string& what) {
    std::ostringstream os;
    os << "reconstruction failed at iteration " << iteration << ": " << what;
    return os.str();
}

}  // namespace

Discretization::Discretization(const Grid& grid, SideSet gamma_sides)
    : grid_(&grid),
      gamma_(grid, gamma_sides),
      unit_stiffness_(assemble_stiffness(grid, CellField::Ones(grid.cell_count()))),
      mass_(phasefield::lumped_mass(grid)) {}

PhaseField PhaseField::boundary_pinned(const Grid& grid, double value) {
    PhaseField p;
    p.tilde_v = NodalField::Constant(grid.node_count(), value);
    p.mask.resize(grid.node_count());
    for (int k = 0; k < grid.node_count(); ++k) p.mask[k] = grid.on_boundary(k);
    p.zero_masked(p.tilde_v);
    return p;
}

PhaseField PhaseField::unconstrained(NodalField tilde_v) {
    PhaseField p;
    p.mask = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(tilde_v.size(), false);
    p.tilde_v = std::move(tilde_v);
    return p;
}

void PhaseField::zero_masked(NodalField& field) const {
    for (Eigen::Index k = 0; k < field.size(); ++k)
        if (mask[k]) field[k] = 0.0;
}

Measurement Measurement::make(const Discretization& disc, BoundaryFlux flux, GammaTrace trace) {
    if (!(trace.sides == disc.gamma().sides()) || trace.values.size() != disc.gamma().node_count())
        throw std::invalid_argument("measurement trace is not defined on gamma");
    NodalField load = assemble_neumann_load(disc.grid(), flux);
    return {std::move(flux), std::move(trace), std::move(load)};
}

std::vector<EpsStage> ReconParams::default_schedule(PotentialKind kind, int total_iterations) {
    constexpr int stages = 5;
    const double first = 2e-4;
    const double last = kind == PotentialKind::SingleWell ? 1e-6 : 2e-6;
    std::vector<EpsStage> out;
    for (int s = 0; s < stages; ++s) {
        const double eps = first * std::pow(last / first, double(s) / (stages - 1));
        const int budget = total_iterations / stages + (s < total_iterations % stages ? 1 : 0);
        out.push_back({eps, budget});
    }
    out.back().eps = last;
    return out;
}

ReconParams ReconParams::defaults(PotentialKind kind) {
    ReconParams p;
    p.potential = kind;
    p.schedule = default_schedule(kind, kind == PotentialKind::SingleWell ? 2500 : 1000);
    return p;
}

double ReconParams::effective_riesz_alpha(const Grid& grid) const {
    if (riesz_alpha > 0.0) return riesz_alpha;
    return 1e-3 * (grid.width() * grid.width() + grid.height() * grid.height());
}

void ReconParams::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(what);
    };
    require(a > 0.0, "params.a must be positive");
    require(b > 0.0, "params.b must be positive");
    require(c > 0.0, "params.c must be positive");
    require(q1 > 0.0 && q1 < 0.5, "params.q1 must lie in (0, 1/2)");
    require(!schedule.empty(), "params.schedule must not be empty");
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        require(schedule[s].eps > 0.0 && schedule[s].eps <= 0.5, "params.schedule.eps must lie in (0, 1/2]");
        require(schedule[s].iterations >= 0, "params.schedule.iterations must be nonnegative");
        if (s > 0) require(schedule[s].eps < schedule[s - 1].eps, "params.schedule.eps must be strictly decreasing");
    }
    require(armijo.initial_step > 0.0, "params.armijo.initial_step must be positive");
    require(armijo.backtrack > 0.0 && armijo.backtrack < 1.0, "params.armijo.backtrack must lie in (0, 1)");
    require(armijo.sigma > 0.0 && armijo.sigma < 1.0, "params.armijo.sigma must lie in (0, 1)");
    require(armijo.max_reductions >= 0 && armijo.max_reductions <= 5,
            "params.armijo.max_reductions must lie in [0, 5]");
    require(armijo.growth >= 1.0, "params.armijo.growth must be at least 1");
    require(solver.rel_tol > 0.0, "params.solver.rel_tol must be positive");
    require(stage_tolerance >= 0.0, "params.stage_tolerance must be nonnegative");
}

CellField state_coefficient(const Grid& grid, const PhaseField& phase, const PhaseParams& eps) {
    const CellField v = p0_project(grid, phase.v());
    return v.unaryExpr([&](double t) { return psi_eps(t, eps); });
}

NodalField solve_state(const Discretization& disc, const SparseMatrix& op, const Measurement& data,
                       const SolverOptions& options, const NodalField* guess) {
    return solve_gauged_neumann(op, data.load, disc.gamma(), options, guess);
}

NodalField solve_state(const Discretization& disc, const PhaseField& phase, const PhaseParams& eps,
                       const Measurement& data, const SolverOptions& options) {
    check_sizes(disc, phase);
    const SparseMatrix op = assemble_stiffness(disc.grid(), state_coefficient(disc.grid(), phase, eps));
    return solve_state(disc, op, data, options);
}

NodalField solve_adjoint(const Discretization& disc, const SparseMatrix& op, const ReconParams& params,
                         const PhaseParams& eps, const Measurement& data, const NodalField& u,
                         const SolverOptions& options, const NodalField* guess) {
    const NodalField rhs = -2.0 * params.b * (op * u) -
                           2.0 * fidelity_weight(params, eps) * disc.gamma().mass_apply(residual_trace(disc, data, u));
    try {
        return solve_gauged_neumann(op, rhs, disc.gamma(), options, guess);
    } catch (const CompatibilityError& e) {
        throw std::logic_error(std::string("adjoint right-hand side is not balanced: ") + e.what());
    }
}

NodalField solve_adjoint(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                         const PhaseParams& eps, const Measurement& data, const NodalField& u,
                         const SolverOptions& options) {
    check_sizes(disc, phase);
    const SparseMatrix op = assemble_stiffness(disc.grid(), state_coefficient(disc.grid(), phase, eps));
    return solve_adjoint(disc, op, params, eps, data, u, options);
}

CostBreakdown eval_cost(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                        const PhaseParams& eps, const std::vector<Measurement>& data,
                        const std::vector<NodalField>& states) {
    check_sizes(disc, phase);
    check_states(data, states);
    const Grid& grid = disc.grid();
    const CellField coeff = state_coefficient(grid, phase, eps);
    const double weight = fidelity_weight(params, eps);

    CostBreakdown cost;
    for (std::size_t d = 0; d < data.size(); ++d) {
        const GammaTrace r = residual_trace(disc, data[d], states[d]);
        cost.fidelity += weight * disc.gamma().inner(r, r);
        const auto grad = cell_gradients(grid, states[d]);
        double energy = 0.0;
        for (int t = 0; t < grid.cell_count(); ++t) energy += coeff[t] * grid.cell_area(t) * grad.row(t).squaredNorm();
        cost.dirichlet += params.b * energy;
    }

    const NodalField& m = disc.lumped_mass();
    double well_sum = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k) well_sum += m[k] * well(params.potential, 1.0 - phase.tilde_v[k]);
    cost.well = params.c * params.c / eps.eps() * well_sum;
    cost.gradient = eps.eps() * phase.tilde_v.dot(disc.unit_stiffness() * phase.tilde_v);
    cost.total = cost.fidelity + cost.dirichlet + cost.well + cost.gradient;
    return cost;
}

NodalField assemble_gradient(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                             const PhaseParams& eps, const std::vector<Measurement>& data,
                             const std::vector<NodalField>& states, const std::vector<NodalField>& adjoints) {
    check_sizes(disc, phase);
    check_states(data, states);
    check_states(data, adjoints);
    const Grid& grid = disc.grid();
    const CellField v_cells = p0_project(grid, phase.v());

    // Per-cell density -psi'_eps(v_T) (b |grad u|^2 + grad u . grad phi),
    // summed over measurements before being spread to the vertices.
    Eigen::VectorXd density = Eigen::VectorXd::Zero(grid.cell_count());
    for (std::size_t d = 0; d < data.size(); ++d) {
        const auto gu = cell_gradients(grid, states[d]);
        const auto gp = cell_gradients(grid, adjoints[d]);
        for (int t = 0; t < grid.cell_count(); ++t) {
            const double dpsi = psi_eps_prime(v_cells[t], eps);
            density[t] -= dpsi * (params.b * gu.row(t).squaredNorm() + gu.row(t).dot(gp.row(t)));
        }
    }

    NodalField g = NodalField::Zero(grid.node_count());
    for (int t = 0; t < grid.cell_count(); ++t) {
        const double share = density[t] * grid.cell_area(t) / 3.0;
        for (int k : grid.cell(t)) g[k] += share;
    }

    const NodalField& m = disc.lumped_mass();
    const double well_weight = params.c * params.c / eps.eps();
    for (Eigen::Index k = 0; k < g.size(); ++k)
        g[k] -= well_weight * well_prime(params.potential, 1.0 - phase.tilde_v[k]) * m[k];
    g += 2.0 * eps.eps() * (disc.unit_stiffness() * phase.tilde_v);
    phase.zero_masked(g);
    return g;
}

NodalField directional_state_derivative(const Discretization& disc, const PhaseField& phase,
                                        const PhaseParams& eps, const NodalField& u0,
                                        const NodalField& direction, const SolverOptions& options) {
    check_sizes(disc, phase);
    const Grid& grid = disc.grid();
    const CellField v_cells = p0_project(grid, phase.v());
    const CellField d_cells = p0_project(grid, direction);
    const CellField coeff = v_cells.unaryExpr([&](double t) { return psi_eps(t, eps); });

    NodalField rhs = NodalField::Zero(grid.node_count());
    for (int t = 0; t < grid.cell_count(); ++t) {
        const double w = psi_eps_prime(v_cells[t], eps) * d_cells[t];
        if (w == 0.0) continue;
        const auto& c = grid.cell(t);
        const Eigen::Matrix3d k = local_stiffness<double>(grid.node(c[0]), grid.node(c[1]), grid.node(c[2]));
        const Eigen::Vector3d ut(u0[c[0]], u0[c[1]], u0[c[2]]);
        const Eigen::Vector3d local = w * (k * ut);
        for (int i = 0; i < 3; ++i) rhs[c[i]] += local[i];
    }
    return solve_gauged_neumann(assemble_stiffness(grid, coeff), rhs, disc.gamma(), options);
}

double sensitivity_directional_derivative(const Discretization& disc, const PhaseField& phase,
                                          const ReconParams& params, const PhaseParams& eps,
                                          const std::vector<Measurement>& data,
                                          const std::vector<NodalField>& states, const NodalField& direction,
                                          const SolverOptions& options) {
    check_sizes(disc, phase);
    check_states(data, states);
    const Grid& grid = disc.grid();
    const CellField v_cells = p0_project(grid, phase.v());
    const CellField d_cells = p0_project(grid, direction);
    const double weight = fidelity_weight(params, eps);

    double total = 0.0;
    for (std::size_t d = 0; d < data.size(); ++d) {
        const NodalField sens = directional_state_derivative(disc, phase, eps, states[d], direction, options);
        const GammaTrace r = residual_trace(disc, data[d], states[d]);
        total += 2.0 * weight * disc.gamma().inner(r, disc.gamma().restrict(sens));

        const auto gu = cell_gradients(grid, states[d]);
        const auto gs = cell_gradients(grid, sens);
        double dirichlet = 0.0;
        for (int t = 0; t < grid.cell_count(); ++t) {
            const double area = grid.cell_area(t);
            dirichlet += 2.0 * psi_eps(v_cells[t], eps) * gu.row(t).dot(gs.row(t)) * area;
            dirichlet -= psi_eps_prime(v_cells[t], eps) * gu.row(t).squaredNorm() * d_cells[t] * area;
        }
        total += params.b * dirichlet;
    }

    const NodalField& m = disc.lumped_mass();
    double well_term = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k)
        well_term -= well_prime(params.potential, 1.0 - phase.tilde_v[k]) * direction[k] * m[k];
    total += params.c * params.c / eps.eps() * well_term;
    total += 2.0 * eps.eps() * phase.tilde_v.dot(disc.unit_stiffness() * direction);
    return total;
}

RieszMap::RieszMap(const Discretization& disc, double alpha, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask,
                   SolverOptions options)
    : node_count_(disc.grid().node_count()), options_(options) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("riesz_alpha must be nonnegative");
    if (mask.size() != node_count_) throw std::invalid_argument("mask does not match the grid");
    std::vector<int> local(static_cast<std::size_t>(node_count_), -1);
    for (int k = 0; k < node_count_; ++k) {
        if (!mask[k]) {
            local[static_cast<std::size_t>(k)] = static_cast<int>(free_.size());
            free_.push_back(k);
        }
    }
    std::vector<Eigen::Triplet<double>> triplets;
    const SparseMatrix& stiff = disc.unit_stiffness();
    for (int row = 0; row < stiff.outerSize(); ++row) {
        const int lr = local[static_cast<std::size_t>(row)];
        if (lr < 0) continue;
        triplets.emplace_back(lr, lr, disc.lumped_mass()[row]);
        if (alpha == 0.0) continue;
        for (SparseMatrix::InnerIterator it(stiff, row); it; ++it) {
            const int lc = local[static_cast<std::size_t>(it.col())];
            if (lc >= 0) triplets.emplace_back(lr, lc, alpha * it.value());
        }
    }
    reduced_.resize(static_cast<Eigen::Index>(free_.size()), static_cast<Eigen::Index>(free_.size()));
    reduced_.setFromTriplets(triplets.begin(), triplets.end());
}

NodalField RieszMap::apply(const NodalField& dual) const {
    if (dual.size() != node_count_) throw std::invalid_argument("dual vector does not match the grid");
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t l = 0; l < free_.size(); ++l) rhs[static_cast<Eigen::Index>(l)] = dual[free_[l]];
    const Eigen::VectorXd sol = solve_spd(reduced_, rhs, options_);
    NodalField out = NodalField::Zero(node_count_);
    for (std::size_t l = 0; l < free_.size(); ++l) out[free_[l]] = sol[static_cast<Eigen::Index>(l)];
    return out;
}

NodalField riesz_lift(const Discretization& disc, const NodalField& dual, double alpha,
                      const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
    return RieszMap(disc, alpha, mask).apply(dual);
}

Eigen::Array<bool, Eigen::Dynamic, 1> active_bounds(const PhaseField& phase, const NodalField& grad) {
    Eigen::Array<bool, Eigen::Dynamic, 1> active = phase.mask;
    for (Eigen::Index k = 0; k < active.size(); ++k) {
        const double x = phase.tilde_v[k];
        if ((x <= 0.0 && grad[k] > 0.0) || (x >= 1.0 && grad[k] < 0.0)) active[k] = true;
    }
    return active;
}

Evaluation evaluate(const Discretization& disc, const PhaseField& phase, const ReconParams& params,
                    const PhaseParams& eps, const std::vector<Measurement>& data,
                    const std::vector<NodalField>* guesses) {
    check_sizes(disc, phase);
    Evaluation out{phase, assemble_stiffness(disc.grid(), state_coefficient(disc.grid(), phase, eps)), {}, {}};
    out.states.reserve(data.size());
    for (std::size_t d = 0; d < data.size(); ++d) {
        const NodalField* guess = guesses && d < guesses->size() ? &(*guesses)[d] : nullptr;
        out.states.push_back(solve_state(disc, out.op, data[d], params.solver, guess));
    }
    out.cost = eval_cost(disc, phase, params, eps, data, out.states);
    return out;
}

StepResult armijo_step(const Discretization& disc, const ReconParams& params, const PhaseParams& eps,
                       const std::vector<Measurement>& data, const Evaluation& current, const NodalField& delta,
                       double slope, ArmijoState& state, double converge_norm) {
    IterationRecord record;
    record.eps = eps.eps();
    record.dual_norm = std::sqrt(std::max(slope, 0.0));
    if (slope <= 0.0 || record.dual_norm <= converge_norm) {
        record.cost = current.cost;
        record.converged = true;
        return {current, record};
    }

    const ArmijoParams& ap = params.armijo;
    const double before = current.cost.total;
    std::optional<Evaluation> best;
    double best_step = 0.0;
    double t = state.step;
    for (int reductions = 0; reductions <= ap.max_reductions; ++reductions) {
        PhaseField candidate = current.phase;
        candidate.tilde_v = (current.phase.tilde_v - t * delta).cwiseMax(0.0).cwiseMin(1.0);
        candidate.zero_masked(candidate.tilde_v);
        Evaluation trial = evaluate(disc, candidate, params, eps, data, &current.states);
        if (trial.cost.total <= before - ap.sigma * t * slope) {
            state.step = reductions == 0 ? t * ap.growth : t;
            record.cost = trial.cost;
            record.step = t;
            record.reductions = reductions;
            record.accepted = true;
            return {std::move(trial), record};
        }
        if (!best || trial.cost.total < best->cost.total) {
            best = std::move(trial);
            best_step = t;
        }
        t *= ap.backtrack;
    }

    // Sufficient decrease never reached: keep the best trial if it still
    // lowers the cost, otherwise stay put.
    state.step *= 0.5;
    record.reductions = ap.max_reductions;
    if (best && best->cost.total < before) {
        record.cost = best->cost;
        record.step = best_step;
        record.accepted = true;
        return {std::move(*best), record};
    }
    record.cost = current.cost;
    return {current, record};
}

ReconstructionError::ReconstructionError(int iteration_, const std::string& what)
    : std::runtime_error(iteration_message(iteration_, what)), iteration(iteration_) {}

ReconstructionResult run_reconstruction(const Discretization& disc, const ReconParams& params,
                                        const std::vector<Measurement>& data, const PhaseField& initial,
                                        const IterationCallback& on_iteration) {
    params.validate();
    check_sizes(disc, initial);
    if (data.empty()) throw std::invalid_argument("reconstruction needs at least one measurement");
    bool nonzero = false;
    for (Eigen::Index k = 0; k < initial.tilde_v.size(); ++k) {
        const double x = initial.tilde_v[k];
        if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("initial phase field must lie in [0, 1]");
        if (initial.mask[k] && x != 0.0) throw std::invalid_argument("initial phase field must vanish on masked nodes");
        if (!initial.mask[k] && x != 0.0) nonzero = true;
    }
    if (!nonzero)
        throw std::invalid_argument(
            "initial phase field is identically zero on the free nodes; this is a critical point of the "
            "functional and the gradient method cannot leave it");

    ReconstructionResult result;
    result.phase = initial;
    const double alpha = params.effective_riesz_alpha(disc.grid());
    const RieszMap riesz(disc, alpha, initial.mask, params.solver);
    ArmijoState armijo{params.armijo.initial_step};
    std::vector<NodalField> adjoints(data.size());
    std::vector<NodalField> warm;
    int iteration = 0;

    try {
        for (std::size_t s = 0; s < params.schedule.size(); ++s) {
            const PhaseParams eps(params.schedule[s].eps);
            Evaluation current = evaluate(disc, result.phase, params, eps, data, warm.empty() ? nullptr : &warm);
            StageSummary summary;
            summary.eps = eps.eps();
            summary.initial_cost = current.cost;
            double first_norm = -1.0;

            for (int k = 0; k < params.schedule[s].iterations; ++k) {
                for (std::size_t d = 0; d < data.size(); ++d) {
                    const NodalField* guess = adjoints[d].size() ? &adjoints[d] : nullptr;
                    adjoints[d] = solve_adjoint(disc, current.op, params, eps, data[d], current.states[d],
                                                params.solver, guess);
                }
                const NodalField grad =
                    assemble_gradient(disc, current.phase, params, eps, data, current.states, adjoints);
                const auto active = active_bounds(current.phase, grad);
                const NodalField delta = (active == current.phase.mask).all()
                                             ? riesz.apply(grad)
                                             : RieszMap(disc, alpha, active, params.solver).apply(grad);
                const double slope = grad.dot(delta);
                if (first_norm < 0.0) first_norm = std::sqrt(std::max(slope, 0.0));

                StepResult step = armijo_step(disc, params, eps, data, current, delta, slope, armijo,
                                              params.stage_tolerance * first_norm);
                step.record.stage = static_cast<int>(s);
                step.record.iteration = iteration++;
                ++summary.iterations;
                result.history.push_back(step.record);
                if (on_iteration) on_iteration(step.record);
                current = std::move(step.next);
                if (step.record.converged) break;
            }

            result.phase = current.phase;
            warm = current.states;
            summary.final_cost = current.cost;
            summary.phase = current.phase;
            result.stages.push_back(std::move(summary));
        }
    } catch (const ConvergenceError& e) {
        throw ReconstructionError(iteration, e.what());
    } catch (const CompatibilityError& e) {
        throw ReconstructionError(iteration, e.what());
    }
    return result;
}

}  // namespace phasefield
