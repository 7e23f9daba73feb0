#include "phasefield/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace phasefield;

namespace {

constexpr const char* kOutDirEnv = "PHASEFIELD_OUT_DIR";

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --out beats the environment, which beats the config file.
fs::path output_dir(const ExperimentConfig& cfg, const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    return cfg.output.directory;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-field reconstruction of cracks and cavities from boundary measurements"};
    app.require_subcommand(1);

    std::string config_path, out_flag, phase_csv, pgm_path;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Experiment configuration (JSON)")->required();
        sub->add_option("--out", out_flag, std::string("Output directory (overrides ") + kOutDirEnv + " and the config)");
        sub->add_option("--seed", seed, "Override data.seed");
    };
    auto* generate = app.add_subcommand("generate", "Simulate Cauchy datasets for the configured defects");
    add_common(generate);
    auto* reconstruct = app.add_subcommand("reconstruct", "Run the phase-field reconstruction on stored datasets");
    add_common(reconstruct);
    auto* gradcheck = app.add_subcommand("gradcheck", "Check the adjoint gradient against independent derivatives");
    add_common(gradcheck);
    auto* render = app.add_subcommand("render", "Render a stored phase-field CSV as a PGM image");
    render->add_option("--phase", phase_csv, "Phase-field CSV")->required()->check(CLI::ExistingFile);
    render->add_option("--output,-o", pgm_path, "PGM path (default: CSV path with .pgm extension)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (render->parsed()) {
            fs::path target = pgm_path.empty() ? fs::path(phase_csv).replace_extension(".pgm") : fs::path(pgm_path);
            run_render(phase_csv, target);
            std::cout << "wrote " << target.string() << '\n';
            return 0;
        }

        const std::string text = slurp(config_path);
        ExperimentConfig cfg = parse_config(text);
        if (seed) cfg.data.seed = *seed;
        const fs::path out = output_dir(cfg, out_flag);

        if (generate->parsed()) {
            for (const auto& p : run_generate(cfg, text, out)) std::cout << "wrote " << p.string() << '\n';
            return 0;
        }
        if (reconstruct->parsed()) {
            const auto result = run_reconstruct(cfg, text, out);
            for (std::size_t s = 0; s < result.stages.size(); ++s) {
                const auto& st = result.stages[s];
                std::cout << "stage " << s << "  eps " << format_double(st.eps) << "  iterations " << st.iterations
                          << "  cost " << format_double(st.initial_cost.total) << " -> "
                          << format_double(st.final_cost.total) << '\n';
            }
            std::cout << "results in " << out.string() << '\n';
            return 0;
        }
        const GradCheckReport report = run_gradcheck(cfg);
        std::cout << format_report(report);
        return report.passed() ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
    } catch (const ReconstructionError& e) {
        std::cerr << "reconstruction failed at iteration " << e.iteration << ": " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
}
