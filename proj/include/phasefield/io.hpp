#pragma once

#include "phasefield/datagen.hpp"
#include "phasefield/reconstruction.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace phasefield {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridConfig {
    int nx = 32;
    int ny = 32;
    double width = 1.0;
    double height = 1.0;
    SideSet gamma = SideSet::all();
};

struct ElectrodeConfig {
    double center = 0.5;
    double width = 0.3;
    double amplitude = 1.0;
    ProfileShape shape = ProfileShape::Plus;
};

struct DataConfig {
    DefectSpec defects;
    std::vector<std::pair<Side, Side>> electrode_pairs;
    ElectrodeConfig electrode;
    int refine = 4;
    double eta = 1e-8;
    int measurement_points = 64;
    double noise_f = 0.0;
    double noise_g = 0.0;
    std::uint64_t seed = 1;
};

struct OutputConfig {
    std::string directory = "out";
    bool csv = true;
    bool pgm = true;
};

struct ExperimentConfig {
    GridConfig grid;
    ReconParams params = ReconParams::defaults();
    /// Initial tilde_v on free nodes.
    double initial = 0.5;
    DataConfig data;
    OutputConfig output;
};

/// Parses a JSON experiment description, fills defaults and validates every
/// field. Unknown keys are rejected.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

/// v = 1 - tilde_v as (ny + 1) rows x (nx + 1) columns, bottom row first.
void write_phase_csv(const Grid& grid, const NodalField& v, const std::filesystem::path& path);
/// Rows x columns of values as written by write_phase_csv.
Eigen::MatrixXd read_phase_csv(const std::filesystem::path& path);
/// Plain PGM ("P2", maxval 255), pixel = round(255 clamp(v, 0, 1)), first
/// image row = last matrix row (top of the domain).
void write_pgm(const Eigen::MatrixXd& rows_bottom_up, const std::filesystem::path& path);
/// Writes `<stem>.csv` and `<stem>.pgm`.
void write_phase_field(const Grid& grid, const PhaseField& phase, const std::filesystem::path& stem,
                       bool csv = true, bool pgm = true);

void write_dataset(const CauchyDataset& ds, const std::filesystem::path& path);
CauchyDataset read_dataset(const std::filesystem::path& path);

void write_history(const std::vector<IterationRecord>& history, const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_atomically(const std::filesystem::path& path, const std::string& contents);

/// FNV-1a, used to fingerprint configuration text in run manifests.
std::uint64_t fnv1a(std::string_view text);

}  // namespace phasefield
