#include "phasefield/reconstruction.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace phasefield;

namespace {

BoundaryFlux flux_of_x(const Grid& g) {
    BoundaryFlux f = BoundaryFlux::zero(g);
    const auto& edges = g.boundary_edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].side == Side::Right) f.values.row(static_cast<Eigen::Index>(e)).setConstant(1.0);
        if (edges[e].side == Side::Left) f.values.row(static_cast<Eigen::Index>(e)).setConstant(-1.0);
    }
    return f;
}

// Flux entering through part of the bottom and leaving through the top,
// with a synthetic trace, so the misfit is far from zero.
Measurement synthetic_measurement(const Discretization& disc, unsigned seed) {
    const Grid& g = disc.grid();
    BoundaryFlux f = BoundaryFlux::zero(g);
    const auto& edges = g.boundary_edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double s = g.side_coordinate(edges[e].side, edges[e].a) / g.side_length(edges[e].side);
        if (edges[e].side == Side::Bottom && s >= 0.25 && s < 0.75) f.values.row(static_cast<Eigen::Index>(e)).setConstant(1.0);
        if (edges[e].side == Side::Top && s >= 0.25 && s < 0.75) f.values.row(static_cast<Eigen::Index>(e)).setConstant(-1.0);
        if (edges[e].side == Side::Left) f.values.row(static_cast<Eigen::Index>(e)) << 0.3, 0.3;
        if (edges[e].side == Side::Right) f.values.row(static_cast<Eigen::Index>(e)) << -0.3, -0.3;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.1);
    GammaTrace trace = disc.gamma().restrict(g.nodes().col(1));
    for (auto& x : trace.values) x += n(rng);
    trace.values.array() -= disc.gamma().mean(trace);
    return Measurement::make(disc, f, trace);
}

PhaseField random_phase(const Grid& g, double lo, double hi, unsigned seed) {
    PhaseField p = PhaseField::boundary_pinned(g, 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (Eigen::Index k = 0; k < p.tilde_v.size(); ++k)
        if (!p.mask[k]) p.tilde_v[k] = u(rng);
    return p;
}

NodalField random_direction(const PhaseField& p, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    NodalField d(p.tilde_v.size());
    for (auto& x : d) x = n(rng);
    p.zero_masked(d);
    return d;
}

ReconParams test_params(PotentialKind kind = PotentialKind::SingleWell) {
    ReconParams p = ReconParams::defaults(kind);
    p.a = 2.0;
    p.b = 0.5;
    p.c = 0.3;
    p.solver.rel_tol = 1e-13;
    return p;
}

struct Fixture {
    Grid grid;
    Discretization disc;
    std::vector<Measurement> data;

    explicit Fixture(int n, SideSet gamma = SideSet::all())
        : grid(n, n, 1.0, 1.0), disc(grid, gamma), data{synthetic_measurement(disc, 1), synthetic_measurement(disc, 2)} {}

    double reduced_cost(const PhaseField& phase, const ReconParams& params, const PhaseParams& eps) const {
        return evaluate(disc, phase, params, eps, data).cost.total;
    }

    NodalField gradient(const PhaseField& phase, const ReconParams& params, const PhaseParams& eps) const {
        const Evaluation ev = evaluate(disc, phase, params, eps, data);
        std::vector<NodalField> adj;
        for (std::size_t d = 0; d < data.size(); ++d)
            adj.push_back(solve_adjoint(disc, ev.op, params, eps, data[d], ev.states[d], params.solver));
        return assemble_gradient(disc, phase, params, eps, data, ev.states, adj);
    }
};

}  // namespace

TEST(State, PatchTestWithoutDefect) {
    const Grid g(16, 16, 1.0, 1.0);
    const Discretization disc(g, SideSet::all());
    const Measurement m = Measurement::make(disc, flux_of_x(g), disc.gamma().constant(0.0));
    const NodalField u = solve_state(disc, PhaseField::boundary_pinned(g, 0.0), PhaseParams(0.01), m);
    NodalField exact = g.nodes().col(0);
    exact.array() -= disc.gamma().mean(exact);
    EXPECT_LT((u - exact).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(State, ZeroFluxGivesZeroPotential) {
    const Grid g(6, 6, 1.0, 1.0);
    const Discretization disc(g, SideSet::all());
    const Measurement m = Measurement::make(disc, BoundaryFlux::zero(g), disc.gamma().constant(0.0));
    EXPECT_TRUE(solve_state(disc, random_phase(g, 0.0, 1.0, 3), PhaseParams(0.1), m).isZero(0.0));
}

TEST(State, GaugeHoldsOnPartialGamma) {
    Fixture fx(8, {Side::Left, Side::Top});
    const NodalField u = solve_state(fx.disc, random_phase(fx.grid, 0.0, 1.0, 4), PhaseParams(0.05), fx.data[0]);
    EXPECT_NEAR(fx.disc.gamma().mean(u), 0.0, 1e-13);
}

TEST(Adjoint, VanishesForExactDataWithoutDirichletWeight) {
    const Grid g(8, 8, 1.0, 1.0);
    const Discretization disc(g, SideSet::all());
    const PhaseField phase = random_phase(g, 0.1, 0.9, 5);
    const PhaseParams eps(0.05);
    ReconParams params = test_params();
    Measurement m = Measurement::make(disc, flux_of_x(g), disc.gamma().constant(0.0));
    const NodalField u = solve_state(disc, phase, eps, m);
    m.trace = disc.gamma().restrict(u);
    params.b = 0.0;
    EXPECT_LT(solve_adjoint(disc, phase, params, eps, m, u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Adjoint, ExactDataGivesScaledState) {
    const Grid g(8, 8, 1.0, 1.0);
    const Discretization disc(g, SideSet::all());
    const PhaseField phase = PhaseField::boundary_pinned(g, 0.0);
    const PhaseParams eps(0.05);
    const ReconParams params = test_params();
    Measurement m = Measurement::make(disc, flux_of_x(g), disc.gamma().constant(0.0));
    const NodalField u = solve_state(disc, phase, eps, m);
    m.trace = disc.gamma().restrict(u);
    const NodalField phi = solve_adjoint(disc, phase, params, eps, m, u, params.solver);
    // u already has gamma-mean zero, so no shift is needed.
    EXPECT_LT((phi + 2.0 * params.b * u).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Cost, UndamagedSingleWellHasNoRegularization) {
    Fixture fx(6);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.0);
    const Evaluation ev = evaluate(fx.disc, phase, test_params(), PhaseParams(0.1), fx.data);
    EXPECT_EQ(ev.cost.well, 0.0);
    EXPECT_EQ(ev.cost.gradient, 0.0);
    EXPECT_DOUBLE_EQ(ev.cost.total, ev.cost.fidelity + ev.cost.dirichlet);
}

TEST(Cost, FullyDamagedInteriorWellTerm) {
    Fixture fx(6);
    const ReconParams params = test_params();
    const PhaseParams eps(0.1);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 1.0);
    const Evaluation ev = evaluate(fx.disc, phase, params, eps, fx.data);
    double free_mass = 0.0;
    for (int k = 0; k < fx.grid.node_count(); ++k)
        if (!phase.mask[k]) free_mass += fx.disc.lumped_mass()[k];
    EXPECT_NEAR(ev.cost.well, params.c * params.c / 0.1 * 0.25 * free_mass, 1e-14);
}

TEST(Cost, ZeroEverything) {
    const Grid g(5, 5, 1.0, 1.0);
    const Discretization disc(g, SideSet::all());
    const std::vector<Measurement> data{
        Measurement::make(disc, BoundaryFlux::zero(g), disc.gamma().constant(0.0))};
    const CostBreakdown c = eval_cost(disc, PhaseField::boundary_pinned(g, 0.0), test_params(), PhaseParams(0.1), data,
                                      {NodalField::Zero(g.node_count())});
    EXPECT_EQ(c.total, 0.0);
}

TEST(Cost, FidelityDependsOnlyOnResidual) {
    Fixture fx(6);
    const PhaseField phase = random_phase(fx.grid, 0.2, 0.8, 6);
    const ReconParams params = test_params();
    const PhaseParams eps(0.1);
    const Evaluation ev = evaluate(fx.disc, phase, params, eps, fx.data);
    auto shifted = fx.data;
    std::vector<NodalField> states = ev.states;
    for (std::size_t d = 0; d < shifted.size(); ++d) {
        shifted[d].trace.values.array() += 0.7;
        states[d].array() += 0.7;
    }
    EXPECT_NEAR(eval_cost(fx.disc, phase, params, eps, shifted, states).fidelity, ev.cost.fidelity,
                1e-12 * ev.cost.fidelity);
}

TEST(Gradient, CriticalPointAtUndamagedPhase) {
    Fixture fx(6);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.0);
    EXPECT_TRUE(fx.gradient(phase, test_params(), PhaseParams(0.05)).isZero(0.0));
}

TEST(Gradient, ExplicitTermsOnly) {
    Fixture fx(6);
    ReconParams params = test_params();
    params.a = 0.0;
    params.b = 0.0;
    const PhaseParams eps(0.05);
    const PhaseField phase = random_phase(fx.grid, 0.0, 1.0, 7);
    const std::vector<NodalField> zeros(fx.data.size(), NodalField::Zero(fx.grid.node_count()));
    const NodalField g = assemble_gradient(fx.disc, phase, params, eps, fx.data, zeros, zeros);
    const NodalField& m = fx.disc.lumped_mass();
    NodalField expected = 2.0 * 0.05 * (fx.disc.unit_stiffness() * phase.tilde_v);
    for (Eigen::Index k = 0; k < expected.size(); ++k)
        expected[k] -= params.c * params.c / 0.05 * well_prime(params.potential, 1.0 - phase.tilde_v[k]) * m[k];
    phase.zero_masked(expected);
    EXPECT_LT((g - expected).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
}

class GradientFd : public ::testing::TestWithParam<PotentialKind> {};

TEST_P(GradientFd, MatchesCentralDifferences) {
    Fixture fx(8);
    const ReconParams params = test_params(GetParam());
    const PhaseParams eps(0.05);
    const PhaseField phase = random_phase(fx.grid, 0.1, 0.9, 8);
    const NodalField g = fx.gradient(phase, params, eps);
    const double h = 1e-5;
    for (unsigned r = 0; r < 4; ++r) {
        const NodalField d = random_direction(phase, 100 + r);
        PhaseField plus = phase, minus = phase;
        plus.tilde_v += h * d;
        minus.tilde_v -= h * d;
        const double fd = (fx.reduced_cost(plus, params, eps) - fx.reduced_cost(minus, params, eps)) / (2 * h);
        EXPECT_NEAR(g.dot(d), fd, 1e-6 * std::abs(fd));
    }
}

INSTANTIATE_TEST_SUITE_P(BothWells, GradientFd,
                         ::testing::Values(PotentialKind::SingleWell, PotentialKind::DoubleWell),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Gradient, MatchesSensitivityRoute) {
    Fixture fx(6, {Side::Bottom, Side::Left, Side::Top});
    const ReconParams params = test_params();
    const PhaseParams eps(0.05);
    const PhaseField phase = random_phase(fx.grid, 0.2, 0.8, 9);
    const Evaluation ev = evaluate(fx.disc, phase, params, eps, fx.data);
    const NodalField g = fx.gradient(phase, params, eps);
    for (unsigned r = 0; r < 3; ++r) {
        const NodalField d = random_direction(phase, 200 + r);
        const double s = sensitivity_directional_derivative(fx.disc, phase, params, eps, fx.data, ev.states, d,
                                                            params.solver);
        EXPECT_NEAR(g.dot(d), s, 1e-9 * std::abs(s));
    }
}

TEST(Sensitivity, ZeroDirection) {
    Fixture fx(6);
    const PhaseField phase = random_phase(fx.grid, 0.2, 0.8, 10);
    const PhaseParams eps(0.05);
    const NodalField u = solve_state(fx.disc, phase, eps, fx.data[0]);
    EXPECT_TRUE(directional_state_derivative(fx.disc, phase, eps, u, NodalField::Zero(u.size())).isZero(0.0));
}

TEST(Sensitivity, UndamagedPhaseIsInsensitive) {
    Fixture fx(6);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.0);
    const PhaseParams eps(0.05);
    const NodalField u = solve_state(fx.disc, phase, eps, fx.data[0]);
    EXPECT_TRUE(directional_state_derivative(fx.disc, phase, eps, u, random_direction(phase, 11)).isZero(0.0));
}

TEST(Sensitivity, FirstOrderAgreementWithDifferences) {
    Fixture fx(8);
    const PhaseField phase = random_phase(fx.grid, 0.2, 0.8, 12);
    const PhaseParams eps(0.05);
    SolverOptions tight;
    tight.rel_tol = 1e-13;
    const NodalField d = random_direction(phase, 13);
    const NodalField u0 = solve_state(fx.disc, phase, eps, fx.data[0], tight);
    const NodalField du = directional_state_derivative(fx.disc, phase, eps, u0, d, tight);
    auto state_at = [&](double h) {
        PhaseField p = phase;
        p.tilde_v += h * d;
        return solve_state(fx.disc, p, eps, fx.data[0], tight);
    };
    double previous = 0.0;
    for (double h : {1e-2, 1e-3}) {
        const NodalField fd = (state_at(h) - state_at(-h)) / (2 * h);
        const double err = (fd - du).norm() / du.norm();
        EXPECT_LT(err, 10 * h);
        if (previous > 0.0) EXPECT_LT(err, previous);
        previous = err;
    }
}

TEST(Riesz, ZeroDual) {
    Fixture fx(6);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.5);
    EXPECT_TRUE(riesz_lift(fx.disc, NodalField::Zero(fx.grid.node_count()), 1e-3, phase.mask).isZero(0.0));
}

TEST(Riesz, DiagonalWithoutScreening) {
    Fixture fx(6);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.5);
    const NodalField dual = random_direction(phase, 14);
    const NodalField delta = riesz_lift(fx.disc, dual, 0.0, phase.mask);
    for (Eigen::Index k = 0; k < dual.size(); ++k) {
        if (phase.mask[k]) EXPECT_EQ(delta[k], 0.0);
        else EXPECT_NEAR(delta[k], dual[k] / fx.disc.lumped_mass()[k], 1e-9 * std::abs(dual[k] / fx.disc.lumped_mass()[k]));
    }
}

TEST(Riesz, PositiveDefinite) {
    Fixture fx(7);
    const PhaseField phase = PhaseField::boundary_pinned(fx.grid, 0.5);
    for (unsigned r = 0; r < 5; ++r) {
        const NodalField dual = random_direction(phase, 300 + r);
        EXPECT_GT(dual.dot(riesz_lift(fx.disc, dual, 2e-3, phase.mask)), 0.0);
    }
}

TEST(ActiveBounds, PinsOutwardGradientsOnly) {
    const Grid g(3, 3, 1.0, 1.0);
    PhaseField p = PhaseField::boundary_pinned(g, 0.5);
    const int a = g.node_index(1, 1), b = g.node_index(2, 1), c = g.node_index(1, 2), d = g.node_index(2, 2);
    p.tilde_v[a] = 0.0;
    p.tilde_v[b] = 0.0;
    p.tilde_v[c] = 1.0;
    NodalField grad = NodalField::Zero(g.node_count());
    grad[a] = 1.0;   // would push below 0
    grad[b] = -1.0;  // moves into the box
    grad[c] = -1.0;  // would push above 1
    grad[d] = 5.0;   // interior value
    const auto active = active_bounds(p, grad);
    EXPECT_TRUE(active[a]);
    EXPECT_FALSE(active[b]);
    EXPECT_TRUE(active[c]);
    EXPECT_FALSE(active[d]);
    EXPECT_TRUE(active[g.node_index(0, 0)]);
}

TEST(Armijo, ZeroGradientConverges) {
    Fixture fx(6);
    const ReconParams params = test_params();
    const PhaseParams eps(0.05);
    const Evaluation ev = evaluate(fx.disc, random_phase(fx.grid, 0.2, 0.8, 15), params, eps, fx.data);
    ArmijoState state;
    const StepResult r = armijo_step(fx.disc, params, eps, fx.data, ev, NodalField::Zero(fx.grid.node_count()), 0.0, state);
    EXPECT_TRUE(r.record.converged);
    EXPECT_FALSE(r.record.accepted);
    EXPECT_EQ(r.next.phase.tilde_v, ev.phase.tilde_v);
}

TEST(Armijo, AcceptedStepsDecreaseAndStayInBox) {
    Fixture fx(8);
    const ReconParams params = test_params();
    const PhaseParams eps(0.05);
    Evaluation ev = evaluate(fx.disc, random_phase(fx.grid, 0.1, 0.9, 16), params, eps, fx.data);
    const RieszMap riesz(fx.disc, params.effective_riesz_alpha(fx.grid), ev.phase.mask, params.solver);
    ArmijoState state{50.0};  // deliberately too long to force reductions
    int reduced = 0;
    for (int it = 0; it < 15; ++it) {
        const NodalField g = fx.gradient(ev.phase, params, eps);
        const NodalField delta = riesz.apply(g);
        StepResult r = armijo_step(fx.disc, params, eps, fx.data, ev, delta, g.dot(delta), state);
        EXPECT_LE(r.record.reductions, 5);
        reduced += r.record.reductions;
        if (r.record.accepted) {
            EXPECT_LT(r.record.cost.total, ev.cost.total);
        } else {
            EXPECT_EQ(r.record.cost.total, ev.cost.total);
        }
        const auto& v = r.next.phase.tilde_v;
        EXPECT_GE(v.minCoeff(), 0.0);
        EXPECT_LE(v.maxCoeff(), 1.0);
        for (Eigen::Index k = 0; k < v.size(); ++k)
            if (r.next.phase.mask[k]) EXPECT_EQ(v[k], 0.0);
        ev = std::move(r.next);
    }
    EXPECT_GT(reduced, 0);
}

TEST(Reconstruction, ZeroBudgetReturnsInitial) {
    Fixture fx(6);
    ReconParams params = test_params();
    for (auto& s : params.schedule) s.iterations = 0;
    const PhaseField initial = PhaseField::boundary_pinned(fx.grid, 0.5);
    const auto result = run_reconstruction(fx.disc, params, fx.data, initial);
    EXPECT_EQ(result.phase.tilde_v, initial.tilde_v);
    EXPECT_TRUE(result.history.empty());
    EXPECT_EQ(result.stages.size(), params.schedule.size());
}

TEST(Reconstruction, UndamagedStartRejected) {
    Fixture fx(6);
    try {
        run_reconstruction(fx.disc, test_params(), fx.data, PhaseField::boundary_pinned(fx.grid, 0.0));
        FAIL() << "expected a precondition error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("critical point"), std::string::npos);
    }
}

TEST(Reconstruction, InvalidInitialRejected) {
    Fixture fx(6);
    PhaseField p = PhaseField::boundary_pinned(fx.grid, 0.5);
    p.tilde_v[fx.grid.node_index(2, 2)] = 1.5;
    EXPECT_THROW(run_reconstruction(fx.disc, test_params(), fx.data, p), std::invalid_argument);
    p = PhaseField::boundary_pinned(fx.grid, 0.5);
    p.tilde_v[0] = 0.5;
    EXPECT_THROW(run_reconstruction(fx.disc, test_params(), fx.data, p), std::invalid_argument);
}

TEST(Reconstruction, StagewiseMonotoneAndBoxed) {
    Fixture fx(8);
    ReconParams params = test_params();
    params.schedule = ReconParams::default_schedule(params.potential, 40);
    params.armijo.initial_step = 0.05;
    int callbacks = 0;
    const auto result = run_reconstruction(fx.disc, params, fx.data, PhaseField::boundary_pinned(fx.grid, 0.3),
                                           [&](const IterationRecord&) { ++callbacks; });
    EXPECT_EQ(callbacks, static_cast<int>(result.history.size()));
    ASSERT_EQ(result.stages.size(), 5u);
    for (std::size_t i = 1; i < result.history.size(); ++i)
        if (result.history[i].stage == result.history[i - 1].stage)
            EXPECT_LE(result.history[i].cost.total, result.history[i - 1].cost.total);
    for (const auto& st : result.stages) {
        EXPECT_LE(st.final_cost.total, st.initial_cost.total);
        EXPECT_GE(st.phase.tilde_v.minCoeff(), 0.0);
        EXPECT_LE(st.phase.tilde_v.maxCoeff(), 1.0);
    }
}

TEST(Params, DefaultsAndSchedule) {
    const ReconParams p = ReconParams::defaults();
    EXPECT_EQ(p.a, 1.0);
    EXPECT_EQ(p.b, 1.0);
    EXPECT_EQ(p.c, 0.5);
    EXPECT_EQ(p.q1, 0.25);
    ASSERT_EQ(p.schedule.size(), 5u);
    EXPECT_DOUBLE_EQ(p.schedule.front().eps, 2e-4);
    EXPECT_DOUBLE_EQ(p.schedule.back().eps, 1e-6);
    int total = 0;
    for (const auto& s : p.schedule) total += s.iterations;
    EXPECT_EQ(total, 2500);
    const ReconParams w = ReconParams::defaults(PotentialKind::DoubleWell);
    EXPECT_DOUBLE_EQ(w.schedule.back().eps, 2e-6);
    total = 0;
    for (const auto& s : w.schedule) total += s.iterations;
    EXPECT_EQ(total, 1000);
    EXPECT_DOUBLE_EQ(p.effective_riesz_alpha(Grid(4, 4, 3.0, 4.0)), 1e-3 * 25.0);
}

TEST(Params, ValidationNamesField) {
    ReconParams p = ReconParams::defaults();
    p.q1 = 0.7;
    try {
        p.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("q1"), std::string::npos);
    }
    p = ReconParams::defaults();
    p.armijo.max_reductions = 6;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}
