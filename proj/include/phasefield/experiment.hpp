#pragma once

#include "phasefield/datagen.hpp"
#include "phasefield/io.hpp"
#include "phasefield/reconstruction.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace phasefield {

/// Noise-free or noisy datasets for every configured electrode pair,
/// generated from the configured defects. Dataset k uses noise seed
/// `seed ^ k`.
std::vector<CauchyDataset> generate_datasets(const ExperimentConfig& cfg);

/// Writes `datasets/dataset_XX_<source>_<sink>.csv` and
/// `generate_manifest.json` under `out`; returns the dataset paths.
std::vector<std::filesystem::path> run_generate(const ExperimentConfig& cfg, const std::string& config_text,
                                                const std::filesystem::path& out);

/// Dataset files written by run_generate, in name order.
std::vector<CauchyDataset> load_datasets(const std::filesystem::path& out);

/// Reconstruction from the dataset files under `out`. Writes
/// `phase/stage_XX.{csv,pgm}`, `phase/final.{csv,pgm}`, `history.csv` and
/// `reconstruct_manifest.json`.
ReconstructionResult run_reconstruct(const ExperimentConfig& cfg, const std::string& config_text,
                                     const std::filesystem::path& out);

struct GradCheckReport {
    int free_nodes = 0;
    double eps = 0.0;
    /// max_j |G_j - D_j| / max_j |D_j| over free nodes, D from state
    /// sensitivities.
    double sensitivity_discrepancy = 0.0;
    /// Worst |<G, d> - fd| / |fd| over the random directions.
    double fd_error = 0.0;
    int directions = 0;
    double fd_step = 0.0;
    double sensitivity_tolerance = 1e-8;
    double fd_tolerance = 1e-4;

    bool passed() const { return sensitivity_discrepancy <= sensitivity_tolerance && fd_error <= fd_tolerance; }
};

/// Compares the adjoint gradient with the sensitivity route and central
/// differences at a random phase field in (0.2, 0.8) on the configured grid.
/// Data come from the configured electrode pairs (generated in memory) or
/// from a single left/right pair when none are configured.
GradCheckReport run_gradcheck(const ExperimentConfig& cfg, int directions = 10, double fd_step = 1e-5);

std::string format_report(const GradCheckReport& report);

/// Renders a stored phase-field CSV to PGM.
void run_render(const std::filesystem::path& csv, const std::filesystem::path& pgm);

}  // namespace phasefield
