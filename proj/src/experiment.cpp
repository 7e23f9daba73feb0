#include "phasefield/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace phasefield {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string two_digits(std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02zu", k);
    return buf;
}

std::string hex(std::uint64_t x) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

ordered_json cost_json(const CostBreakdown& c) {
    return {{"total", c.total}, {"fidelity", c.fidelity}, {"dirichlet", c.dirichlet}, {"well", c.well},
            {"gradient", c.gradient}};
}

Grid coarse_grid(const ExperimentConfig& cfg) {
    return Grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.width, cfg.grid.height);
}

}  // namespace

std::vector<CauchyDataset> generate_datasets(const ExperimentConfig& cfg) {
    const DataConfig& data = cfg.data;
    if (data.electrode_pairs.empty()) throw ConfigError("data.electrodes: at least one electrode pair is required");
    const Grid coarse = coarse_grid(cfg);
    const FineModel model = build_fine_model(data.defects, coarse, data.refine, data.eta, data.seed);
    std::vector<CauchyDataset> out;
    for (std::size_t k = 0; k < data.electrode_pairs.size(); ++k) {
        const auto [source, sink] = data.electrode_pairs[k];
        const FluxProfile flux = electrode_pair(source, sink, model.grid, data.electrode.center, data.electrode.width,
                                                data.electrode.amplitude, data.electrode.shape);
        CauchyDataset ds =
            simulate_measurement(model, flux, cfg.grid.gamma, data.measurement_points, cfg.params.solver);
        ds.source = source;
        ds.sink = sink;
        out.push_back(add_noise(ds, {data.noise_f, data.noise_g, data.seed ^ static_cast<std::uint64_t>(k)}));
    }
    return out;
}

std::vector<fs::path> run_generate(const ExperimentConfig& cfg, const std::string& config_text, const fs::path& out) {
    const auto start = std::chrono::steady_clock::now();
    const auto datasets = generate_datasets(cfg);
    std::vector<fs::path> paths;
    ordered_json files = ordered_json::array();
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        const std::string name = "dataset_" + two_digits(k) + "_" + std::string(to_string(datasets[k].source)) + "_" +
                                 std::string(to_string(datasets[k].sink)) + ".csv";
        const fs::path path = out / "datasets" / name;
        write_dataset(datasets[k], path);
        paths.push_back(path);
        files.push_back({{"file", "datasets/" + name}, {"noise_seed", datasets[k].noise.seed}});
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ordered_json manifest = {{"verb", "generate"},
                             {"config_hash", hex(fnv1a(config_text))},
                             {"seed", cfg.data.seed},
                             {"refine", cfg.data.refine},
                             {"eta", cfg.data.eta},
                             {"noise", {{"f", cfg.data.noise_f}, {"g", cfg.data.noise_g}, {"convention", "relative_rms"}}},
                             {"datasets", files},
                             {"wall_clock_seconds", seconds}};
    write_atomically(out / "generate_manifest.json", manifest.dump(2) + "\n");
    return paths;
}

std::vector<CauchyDataset> load_datasets(const fs::path& out) {
    const fs::path dir = out / "datasets";
    if (!fs::is_directory(dir)) throw std::runtime_error("no datasets found in '" + dir.string() + "'; run generate first");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no datasets found in '" + dir.string() + "'; run generate first");
    std::vector<CauchyDataset> out_sets;
    for (const auto& f : files) out_sets.push_back(read_dataset(f));
    return out_sets;
}

ReconstructionResult run_reconstruct(const ExperimentConfig& cfg, const std::string& config_text, const fs::path& out) {
    const auto start = std::chrono::steady_clock::now();
    const auto datasets = load_datasets(out);
    const Grid grid = coarse_grid(cfg);
    const Discretization disc(grid, cfg.grid.gamma);
    std::vector<Measurement> data;
    for (const auto& ds : datasets) data.push_back(to_measurement(ds, disc));

    const PhaseField initial = PhaseField::boundary_pinned(grid, cfg.initial);
    const ReconstructionResult result = run_reconstruction(disc, cfg.params, data, initial);

    const bool csv = cfg.output.csv, pgm = cfg.output.pgm;
    ordered_json stages = ordered_json::array();
    for (std::size_t s = 0; s < result.stages.size(); ++s) {
        const auto& st = result.stages[s];
        write_phase_field(grid, st.phase, out / "phase" / ("stage_" + two_digits(s)), csv, pgm);
        stages.push_back({{"eps", st.eps},
                          {"iterations", st.iterations},
                          {"initial_cost", cost_json(st.initial_cost)},
                          {"final_cost", cost_json(st.final_cost)}});
    }
    write_phase_field(grid, result.phase, out / "phase" / "final", csv, pgm);
    write_history(result.history, out / "history.csv");

    const CostBreakdown final_cost = result.stages.empty() ? CostBreakdown{} : result.stages.back().final_cost;
    std::vector<std::uint64_t> seeds;
    for (const auto& ds : datasets) seeds.push_back(ds.noise.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ordered_json manifest = {{"verb", "reconstruct"},
                             {"config_hash", hex(fnv1a(config_text))},
                             {"seeds", seeds},
                             {"datasets", datasets.size()},
                             {"potential", std::string(to_string(cfg.params.potential))},
                             {"stages", stages},
                             {"final_cost", cost_json(final_cost)},
                             {"wall_clock_seconds", seconds}};
    write_atomically(out / "reconstruct_manifest.json", manifest.dump(2) + "\n");
    return result;
}

GradCheckReport run_gradcheck(const ExperimentConfig& cfg, int directions, double fd_step) {
    ExperimentConfig local = cfg;
    if (local.data.electrode_pairs.empty()) {
        const auto sides = local.grid.gamma.sides();
        if (sides.size() < 2) throw ConfigError("gradcheck needs gamma with at least two sides");
        local.data.electrode_pairs.emplace_back(sides.front(), sides.back());
    }
    const auto datasets = generate_datasets(local);
    const Grid grid = coarse_grid(local);
    const Discretization disc(grid, local.grid.gamma);
    std::vector<Measurement> data;
    for (const auto& ds : datasets) data.push_back(to_measurement(ds, disc));

    ReconParams params = local.params;
    params.solver.rel_tol = 1e-14;
    const PhaseParams eps(params.schedule.empty() ? 2e-4 : params.schedule.front().eps);

    std::mt19937_64 rng(local.data.seed);
    std::uniform_real_distribution<double> inside(0.2, 0.8);
    PhaseField phase = PhaseField::boundary_pinned(grid, 0.0);
    for (Eigen::Index k = 0; k < phase.tilde_v.size(); ++k)
        if (!phase.mask[k]) phase.tilde_v[k] = inside(rng);

    const Evaluation base = evaluate(disc, phase, params, eps, data);
    std::vector<NodalField> adjoints;
    for (std::size_t d = 0; d < data.size(); ++d)
        adjoints.push_back(solve_adjoint(disc, base.op, params, eps, data[d], base.states[d], params.solver));
    const NodalField grad = assemble_gradient(disc, phase, params, eps, data, base.states, adjoints);

    GradCheckReport report;
    report.eps = eps.eps();
    report.free_nodes = phase.free_count();
    report.directions = directions;
    report.fd_step = fd_step;

    NodalField sens = NodalField::Zero(grad.size());
    NodalField unit = NodalField::Zero(grad.size());
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
        if (phase.mask[j]) continue;
        unit[j] = 1.0;
        sens[j] = sensitivity_directional_derivative(disc, phase, params, eps, data, base.states, unit, params.solver);
        unit[j] = 0.0;
    }
    const double scale = sens.cwiseAbs().maxCoeff();
    report.sensitivity_discrepancy = scale > 0.0 ? (grad - sens).cwiseAbs().maxCoeff() / scale : 0.0;

    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < directions; ++r) {
        NodalField dir(grad.size());
        for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = normal(rng);
        phase.zero_masked(dir);
        PhaseField plus = phase, minus = phase;
        plus.tilde_v += fd_step * dir;
        minus.tilde_v -= fd_step * dir;
        const double jp = evaluate(disc, plus, params, eps, data, &base.states).cost.total;
        const double jm = evaluate(disc, minus, params, eps, data, &base.states).cost.total;
        const double fd = (jp - jm) / (2.0 * fd_step);
        const double exact = grad.dot(dir);
        report.fd_error = std::max(report.fd_error, std::abs(exact - fd) / std::max(std::abs(fd), 1e-300));
    }
    return report;
}

std::string format_report(const GradCheckReport& r) {
    std::ostringstream os;
    os << "gradient check at eps = " << format_double(r.eps) << " on " << r.free_nodes << " free nodes\n";
    os << "  adjoint vs sensitivity route: max relative discrepancy " << format_double(r.sensitivity_discrepancy)
       << " (tolerance " << format_double(r.sensitivity_tolerance) << ") "
       << (r.sensitivity_discrepancy <= r.sensitivity_tolerance ? "PASS" : "FAIL") << '\n';
    os << "  adjoint vs central differences (h = " << format_double(r.fd_step) << ", " << r.directions
       << " directions): max relative error " << format_double(r.fd_error) << " (tolerance "
       << format_double(r.fd_tolerance) << ") " << (r.fd_error <= r.fd_tolerance ? "PASS" : "FAIL") << '\n';
    return os.str();
}

void run_render(const fs::path& csv, const fs::path& pgm) { write_pgm(read_phase_csv(csv), pgm); }

}  // namespace phasefield
