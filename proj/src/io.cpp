#include "phasefield/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace phasefield {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

Point parse_point(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(path + ": expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<std::vector<Point>> parse_shapes(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected a list");
    std::vector<std::vector<Point>> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string sub = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array()) throw ConfigError(sub + ": expected a list of points");
        std::vector<Point> pts;
        for (std::size_t k = 0; k < j[i].size(); ++k) pts.push_back(parse_point(j[i][k], sub));
        out.push_back(std::move(pts));
    }
    return out;
}

Side side_at(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a side label");
    try {
        return parse_side(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void parse_grid(const json& j, GridConfig& grid) {
    check_keys(j, "grid", {"nx", "ny", "width", "height", "gamma"});
    read(j, "nx", "grid", grid.nx);
    read(j, "ny", "grid", grid.ny);
    read(j, "width", "grid", grid.width);
    read(j, "height", "grid", grid.height);
    require(grid.nx >= 1, "grid.nx: must be a positive integer");
    require(grid.ny >= 1, "grid.ny: must be a positive integer");
    require(grid.width > 0.0, "grid.width: must be positive");
    require(grid.height > 0.0, "grid.height: must be positive");
    if (j.contains("gamma")) {
        const json& g = j.at("gamma");
        require(g.is_array() && !g.empty(), "grid.gamma: expected a nonempty list of sides");
        grid.gamma = SideSet{};
        for (std::size_t i = 0; i < g.size(); ++i) grid.gamma.insert(side_at(g[i], "grid.gamma"));
    }
}

void parse_params(const json& j, ExperimentConfig& cfg) {
    ReconParams& p = cfg.params;
    check_keys(j, "params", {"a", "b", "c", "q1", "potential", "schedule", "iterations", "riesz_alpha", "armijo",
                             "solver", "initial", "stage_tolerance"});
    read(j, "a", "params", p.a);
    read(j, "b", "params", p.b);
    read(j, "c", "params", p.c);
    read(j, "q1", "params", p.q1);
    read(j, "riesz_alpha", "params", p.riesz_alpha);
    read(j, "initial", "params", cfg.initial);
    read(j, "stage_tolerance", "params", p.stage_tolerance);
    if (j.contains("potential")) {
        try {
            p.potential = parse_potential(j.at("potential").get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("params.potential: ") + e.what());
        }
    }
    require(!(j.contains("schedule") && j.contains("iterations")),
            "params: give either 'schedule' or 'iterations', not both");
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        require(s.is_array() && !s.empty(), "params.schedule: expected a nonempty list");
        p.schedule.clear();
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::string path = "params.schedule[" + std::to_string(i) + "]";
            check_keys(s[i], path, {"eps", "iterations"});
            require(s[i].contains("eps") && s[i].contains("iterations"), path + ": needs eps and iterations");
            EpsStage stage{0.0, 0};
            read(s[i], "eps", path, stage.eps);
            read(s[i], "iterations", path, stage.iterations);
            p.schedule.push_back(stage);
        }
    } else {
        int total = p.potential == PotentialKind::SingleWell ? 2500 : 1000;
        read(j, "iterations", "params", total);
        require(total >= 0, "params.iterations: must be nonnegative");
        p.schedule = ReconParams::default_schedule(p.potential, total);
    }
    if (j.contains("armijo")) {
        const json& a = j.at("armijo");
        check_keys(a, "params.armijo", {"initial_step", "backtrack", "sigma", "max_reductions", "growth"});
        read(a, "initial_step", "params.armijo", p.armijo.initial_step);
        read(a, "backtrack", "params.armijo", p.armijo.backtrack);
        read(a, "sigma", "params.armijo", p.armijo.sigma);
        read(a, "max_reductions", "params.armijo", p.armijo.max_reductions);
        read(a, "growth", "params.armijo", p.armijo.growth);
    }
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        check_keys(s, "params.solver", {"rel_tol", "max_iterations"});
        read(s, "rel_tol", "params.solver", p.solver.rel_tol);
        read(s, "max_iterations", "params.solver", p.solver.max_iterations);
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(cfg.initial > 0.0 && cfg.initial <= 1.0, "params.initial: must lie in (0, 1]");
}

void parse_data(const json& j, const GridConfig& grid, DataConfig& data) {
    check_keys(j, "data", {"cracks", "cavities", "electrodes", "electrode", "refine", "eta", "measurement_points",
                           "noise", "seed"});
    if (j.contains("cracks")) data.defects.cracks = parse_shapes(j.at("cracks"), "data.cracks");
    if (j.contains("cavities")) data.defects.cavities = parse_shapes(j.at("cavities"), "data.cavities");
    try {
        data.defects.validate(grid.width, grid.height);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
    if (j.contains("electrodes")) {
        const json& e = j.at("electrodes");
        require(e.is_array(), "data.electrodes: expected a list of [source, sink] pairs");
        for (std::size_t i = 0; i < e.size(); ++i) {
            const std::string path = "data.electrodes[" + std::to_string(i) + "]";
            require(e[i].is_array() && e[i].size() == 2, path + ": expected [source, sink]");
            const Side a = side_at(e[i][0], path), b = side_at(e[i][1], path);
            require(a != b, path + ": electrodes must sit on two different sides");
            require(grid.gamma.contains(a) && grid.gamma.contains(b), path + ": electrodes must lie on gamma");
            data.electrode_pairs.emplace_back(a, b);
        }
    }
    if (j.contains("electrode")) {
        const json& e = j.at("electrode");
        check_keys(e, "data.electrode", {"center", "width", "amplitude", "profile"});
        read(e, "center", "data.electrode", data.electrode.center);
        read(e, "width", "data.electrode", data.electrode.width);
        read(e, "amplitude", "data.electrode", data.electrode.amplitude);
        if (e.contains("profile")) {
            const std::string shape = e.at("profile").get<std::string>();
            require(shape == "plus" || shape == "flat", "data.electrode.profile: expected 'plus' or 'flat'");
            data.electrode.shape = shape == "plus" ? ProfileShape::Plus : ProfileShape::Flat;
        }
        try {
            plus_flux(Side::Bottom, data.electrode.center, data.electrode.width, data.electrode.amplitude);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError(std::string("data.electrode: ") + ex.what());
        }
        require(data.electrode.amplitude > 0.0, "data.electrode.amplitude: must be positive");
    }
    read(j, "refine", "data", data.refine);
    read(j, "eta", "data", data.eta);
    read(j, "measurement_points", "data", data.measurement_points);
    read(j, "seed", "data", data.seed);
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        check_keys(n, "data.noise", {"f", "g"});
        read(n, "f", "data.noise", data.noise_f);
        read(n, "g", "data.noise", data.noise_g);
    }
    require(data.refine >= 4, "data.refine: must be at least 4");
    require(data.eta > 0.0 && data.eta <= 1e-4, "data.eta: must lie in (0, 1e-4]");
    require(data.measurement_points >= 2, "data.measurement_points: must be at least 2");
    require(data.noise_f >= 0.0, "data.noise.f: must be nonnegative");
    require(data.noise_g >= 0.0, "data.noise.g: must be nonnegative");
}

void parse_output(const json& j, OutputConfig& out) {
    check_keys(j, "output", {"directory", "formats"});
    read(j, "directory", "output", out.directory);
    if (j.contains("formats")) {
        const json& f = j.at("formats");
        require(f.is_array(), "output.formats: expected a list");
        out.csv = out.pgm = false;
        for (const auto& item : f) {
            const std::string name = item.get<std::string>();
            if (name == "csv") out.csv = true;
            else if (name == "pgm") out.pgm = true;
            else throw ConfigError("output.formats: unknown format '" + name + "'");
        }
    }
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double x = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, x);
    if (ec != std::errc() || ptr != last) throw FormatError(where + ": malformed number '" + s + "'");
    return x;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("syntax error at line " + std::to_string(line) + ": " + e.what());
    }
    check_keys(root, "", {"grid", "params", "data", "output"});
    ExperimentConfig cfg;
    if (root.contains("grid")) parse_grid(root.at("grid"), cfg.grid);
    if (root.contains("params")) parse_params(root.at("params"), cfg);
    if (root.contains("data")) parse_data(root.at("data"), cfg.grid, cfg.data);
    if (root.contains("output")) parse_output(root.at("output"), cfg.output);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

void write_phase_csv(const Grid& grid, const NodalField& v, const std::filesystem::path& path) {
    std::ostringstream os;
    for (int j = 0; j <= grid.ny(); ++j) {
        for (int i = 0; i <= grid.nx(); ++i) {
            if (i) os << ',';
            os << format_double(v[grid.node_index(i, j)]);
        }
        os << '\n';
    }
    write_atomically(path, os.str());
}

Eigen::MatrixXd read_phase_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split(line, ','))
            row.push_back(parse_number(cell, path.string() + ":" + std::to_string(lineno)));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": empty phase-field file");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

void write_pgm(const Eigen::MatrixXd& rows_bottom_up, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "P2\n" << rows_bottom_up.cols() << ' ' << rows_bottom_up.rows() << "\n255\n";
    for (Eigen::Index r = rows_bottom_up.rows() - 1; r >= 0; --r) {
        for (Eigen::Index c = 0; c < rows_bottom_up.cols(); ++c) {
            if (c) os << ' ';
            os << std::lround(255.0 * std::clamp(rows_bottom_up(r, c), 0.0, 1.0));
        }
        os << '\n';
    }
    write_atomically(path, os.str());
}

void write_phase_field(const Grid& grid, const PhaseField& phase, const std::filesystem::path& stem, bool csv,
                       bool pgm) {
    const NodalField v = phase.v();
    if (csv) write_phase_csv(grid, v, stem.string() + ".csv");
    if (pgm) {
        Eigen::MatrixXd rows(grid.ny() + 1, grid.nx() + 1);
        for (int j = 0; j <= grid.ny(); ++j)
            for (int i = 0; i <= grid.nx(); ++i) rows(j, i) = v[grid.node_index(i, j)];
        write_pgm(rows, stem.string() + ".pgm");
    }
}

void write_dataset(const CauchyDataset& ds, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "# phasefield cauchy dataset\n";
    os << "# source," << to_string(ds.source) << '\n';
    os << "# sink," << to_string(ds.sink) << '\n';
    os << "# gamma";
    for (Side s : ds.gamma.sides()) os << ',' << to_string(s);
    os << '\n';
    os << "# noise_f," << format_double(ds.noise.level_f) << '\n';
    os << "# noise_g," << format_double(ds.noise.level_g) << '\n';
    os << "# noise_seed," << ds.noise.seed << '\n';
    os << "side,s,weight,f,g\n";
    for (const auto& p : ds.points)
        os << to_string(p.side) << ',' << format_double(p.s) << ',' << format_double(p.weight) << ','
           << format_double(p.f) << ',' << format_double(p.g) << '\n';
    write_atomically(path, os.str());
}

CauchyDataset read_dataset(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    const std::string where = path.string();
    CauchyDataset ds;
    std::set<std::string> seen;
    bool header = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::string at = where + ":" + std::to_string(lineno);
        if (line.rfind("# ", 0) == 0) {
            const auto fields = split(line.substr(2), ',');
            if (fields.empty()) continue;
            const std::string& key = fields[0];
            auto value = [&]() -> const std::string& {
                if (fields.size() < 2) throw FormatError(at + ": missing value for '" + key + "'");
                return fields[1];
            };
            try {
                if (key == "source") ds.source = parse_side(value());
                else if (key == "sink") ds.sink = parse_side(value());
                else if (key == "gamma") {
                    for (std::size_t i = 1; i < fields.size(); ++i) ds.gamma.insert(parse_side(fields[i]));
                } else if (key == "noise_f") ds.noise.level_f = parse_number(value(), at);
                else if (key == "noise_g") ds.noise.level_g = parse_number(value(), at);
                else if (key == "noise_seed") ds.noise.seed = std::stoull(value());
            } catch (const std::invalid_argument& e) {
                throw FormatError(at + ": " + e.what());
            }
            seen.insert(key);
            continue;
        }
        if (!header) {
            if (line != "side,s,weight,f,g") throw FormatError(at + ": expected column header 'side,s,weight,f,g'");
            header = true;
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != 5) throw FormatError(at + ": expected 5 columns");
        MeasurementPoint p{};
        try {
            p.side = parse_side(cells[0]);
        } catch (const std::invalid_argument& e) {
            throw FormatError(at + ": " + e.what());
        }
        p.s = parse_number(cells[1], at);
        p.weight = parse_number(cells[2], at);
        p.f = parse_number(cells[3], at);
        p.g = parse_number(cells[4], at);
        ds.points.push_back(p);
    }
    if (!header || ds.points.empty()) throw FormatError(where + ": malformed dataset (no data rows)");
    if (!seen.count("gamma") || ds.gamma.empty()) throw FormatError(where + ": missing gamma header");
    try {
        ds.validate(1e-9);
    } catch (const std::invalid_argument& e) {
        throw FormatError(where + ": invariant violated: " + e.what());
    }
    return ds;
}

void write_history(const std::vector<IterationRecord>& history, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "stage,iteration,eps,total,fidelity,dirichlet,well,gradient,step,dual_norm,reductions,accepted,converged\n";
    for (const auto& r : history) {
        os << r.stage << ',' << r.iteration << ',' << format_double(r.eps) << ',' << format_double(r.cost.total) << ','
           << format_double(r.cost.fidelity) << ',' << format_double(r.cost.dirichlet) << ','
           << format_double(r.cost.well) << ',' << format_double(r.cost.gradient) << ',' << format_double(r.step)
           << ',' << format_double(r.dual_norm) << ',' << r.reductions << ',' << int(r.accepted) << ','
           << int(r.converged) << '\n';
    }
    write_atomically(path, os.str());
}

void write_atomically(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << contents;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace phasefield
