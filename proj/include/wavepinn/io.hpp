#pragma once

// File formats: grid fields, observation tables, checkpoints, run
// configuration, training logs and reports.
//
// Binary files (fields, checkpoints) are one line of JSON metadata followed by
// a little-endian float64 payload.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wavepinn/constraints.hpp"
#include "wavepinn/errors.hpp"
#include "wavepinn/metrics.hpp"
#include "wavepinn/network.hpp"
#include "wavepinn/trainer.hpp"
#include "wavepinn/wave_theory.hpp"

namespace wavepinn::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// --- paths -------------------------------------------------------------------------

/// Relative output paths resolve against $WAVEPINN_OUTPUT_DIR when it is set.
inline fs::path output_path(const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return p;
    if (const char* dir = std::getenv("WAVEPINN_OUTPUT_DIR"); dir && *dir) return fs::path(dir) / p;
    return p;
}

inline void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// --- raw payloads ---------------------------------------------------------------------

namespace detail {

inline void write_f64(std::ostream& os, const double* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t u;
            std::memcpy(&u, data + i, 8);
            u = __builtin_bswap64(u);
            os.write(reinterpret_cast<const char*>(&u), 8);
        }
    }
}

inline void read_f64(std::istream& is, double* data, std::size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != n * sizeof(double)) throw IoError("payload shorter than declared");
    if constexpr (std::endian::native != std::endian::little) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t u;
            std::memcpy(&u, data + i, 8);
            u = __builtin_bswap64(u);
            std::memcpy(data + i, &u, 8);
        }
    }
}

inline std::pair<json, std::ifstream> open_binary(const fs::path& path, const std::string& format) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw IoError(path.string() + ": missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed header: " + e.what());
    }
    if (header.value("format", "") != format) throw IoError(path.string() + ": not a " + format + " file");
    return {std::move(header), std::move(is)};
}

inline std::ofstream create(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    ensure_parent(path);
    std::ofstream os(path, mode);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

inline std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace detail

// --- field files ------------------------------------------------------------------------

struct FieldFile {
    GridField field;
    json metadata = json::object();  // units, provenance, nyquist flag ...
};

inline void write_field(const fs::path& path, const FieldFile& f) {
    f.field.validate();
    json h = f.metadata;
    h["format"] = "wavepinn-field";
    h["version"] = 1;
    h["nx"] = f.field.nx();
    h["nt"] = f.field.nt();
    h["x0"] = f.field.x0;
    h["dx"] = f.field.dx;
    h["t0"] = f.field.t0;
    h["dt"] = f.field.dt;
    h["quantity"] = to_string(f.field.quantity);
    h["z"] = f.field.z;
    if (!h.contains("units")) h["units"] = f.field.quantity == Quantity::elevation ? "m" : "m^2/s";
    auto os = detail::create(path, std::ios::binary);
    os << h.dump() << '\n';
    // t-major: row i holds every x at time t_i.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = f.field.values;
    detail::write_f64(os, rm.data(), static_cast<std::size_t>(rm.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

inline FieldFile read_field(const fs::path& path) {
    auto [h, is] = detail::open_binary(path, "wavepinn-field");
    FieldFile f;
    try {
        const auto nx = h.at("nx").get<Index>(), nt = h.at("nt").get<Index>();
        if (nx < 2 || nt < 2) throw IoError(path.string() + ": grid needs at least 2 x 2 samples");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(nt, nx);
        detail::read_f64(is, rm.data(), static_cast<std::size_t>(rm.size()));
        if (is.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": payload longer than declared");
        f.field.values = rm;
        f.field.x0 = h.at("x0").get<double>();
        f.field.dx = h.at("dx").get<double>();
        f.field.t0 = h.at("t0").get<double>();
        f.field.dt = h.at("dt").get<double>();
        f.field.quantity = h.at("quantity").get<std::string>() == "potential" ? Quantity::potential : Quantity::elevation;
        f.field.z = h.value("z", 0.0);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad metadata: " + e.what());
    }
    f.field.validate();
    for (const char* k : {"format", "version", "nx", "nt", "x0", "dx", "t0", "dt", "quantity", "z"}) h.erase(k);
    f.metadata = std::move(h);
    return f;
}

/// Text table `t,x,value`, t-major.
inline void write_field_table(const fs::path& path, const GridField& f) {
    auto os = detail::create(path);
    os << "t,x,value\n";
    for (Index i = 0; i < f.nt(); ++i) {
        for (Index j = 0; j < f.nx(); ++j) {
            os << detail::fmt(f.t(i)) << ',' << detail::fmt(f.x(j)) << ',' << detail::fmt(f.values(i, j)) << '\n';
        }
    }
}

inline GridField read_field_table(const fs::path& path, Quantity q = Quantity::elevation) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    std::vector<std::array<double, 3>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::array<double, 3> r{};
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r[0], &r[1], &r[2]) != 3) {
            throw IoError(path.string() + ": malformed row: " + line);
        }
        rows.push_back(r);
    }
    std::set<double> ts, xs;
    for (auto& r : rows) {
        ts.insert(r[0]);
        xs.insert(r[1]);
    }
    const Index nt = static_cast<Index>(ts.size()), nx = static_cast<Index>(xs.size());
    if (nt < 2 || nx < 2 || static_cast<Index>(rows.size()) != nt * nx) {
        throw IoError(path.string() + ": rows do not form a full grid");
    }
    GridField f;
    f.quantity = q;
    f.t0 = *ts.begin();
    f.x0 = *xs.begin();
    f.dt = (*ts.rbegin() - f.t0) / (nt - 1);
    f.dx = (*xs.rbegin() - f.x0) / (nx - 1);
    f.values.resize(nt, nx);
    for (auto& r : rows) {
        const Index i = static_cast<Index>(std::llround((r[0] - f.t0) / f.dt));
        const Index j = static_cast<Index>(std::llround((r[1] - f.x0) / f.dx));
        if (std::abs(f.t(i) - r[0]) > 1e-9 * std::max(1.0, std::abs(r[0])) ||
            std::abs(f.x(j) - r[1]) > 1e-9 * std::max(1.0, std::abs(r[1]))) {
            throw IoError(path.string() + ": grid is not uniform");
        }
        f.values(i, j) = r[2];
    }
    return f;
}

// --- synthesis and extraction -------------------------------------------------------------

struct SynthResult {
    FieldFile elevation;
    std::vector<FieldFile> potentials;  // one per requested z
    bool nyquist_warning = false;
};

/// Analytic fields of a linear sea on a grid. Flags grids that under-resolve
/// the shortest component in x or t.
inline SynthResult synth(const SeaStateSpec& sea, const GridSpec& grid, const std::vector<double>& z_slices = {}) {
    validate(sea);
    SynthResult r;
    r.elevation.field = truth_elevation(sea, grid);
    double k_max = 0.0, w_max = 0.0;
    for (const auto& c : sea.components) {
        k_max = std::max(k_max, c.k);
        w_max = std::max(w_max, c.omega);
    }
    if (k_max > 0.0) {
        const GridField& f = r.elevation.field;
        r.nyquist_warning = f.dx > nyquist_spacing(2.0 * std::numbers::pi / k_max) || f.dt > std::numbers::pi / w_max;
    }
    json sea_json = json::array();
    for (const auto& c : sea.components) {
        sea_json.push_back({{"amplitude", c.amplitude}, {"omega", c.omega}, {"k", c.k}, {"phase", c.phase}});
    }
    const json prov = {{"source", "linear wave theory"}, {"depth", sea.depth}, {"gravity", sea.gravity}, {"components", sea_json}};
    r.elevation.metadata = {{"provenance", prov}, {"nyquist_warning", r.nyquist_warning}};
    for (double z : z_slices) {
        if (z < -sea.depth) throw DomainError("synth: potential slice below the sea bed");
        FieldFile p;
        p.field = grid.empty(Quantity::potential);
        p.field.z = z;
        for (Index i = 0; i < p.field.nt(); ++i) {
            for (Index j = 0; j < p.field.nx(); ++j) p.field.values(i, j) = lwt_potential(sea, p.field.x(j), p.field.t(i), z);
        }
        p.metadata = r.elevation.metadata;
        r.potentials.push_back(std::move(p));
    }
    return r;
}

/// Nearest-column time series at each position.
inline ObservationSet extract_buoys(const GridField& f, const std::vector<double>& positions) {
    f.validate();
    if (positions.empty()) throw DomainError("extract_buoys: no positions");
    ObservationSet obs;
    obs.kind = ObservationKind::buoys;
    obs.points.resize(2, static_cast<Index>(positions.size()) * f.nt());
    obs.values.resize(obs.points.cols());
    Index c = 0;
    for (double x : positions) {
        const double u = (x - f.x0) / f.dx;
        if (!(u >= -0.5) || !(u <= static_cast<double>(f.nx() - 1) + 0.5)) {
            throw DomainError("extract_buoys: position " + detail::fmt(x) + " outside the grid");
        }
        const Index j = std::clamp<Index>(static_cast<Index>(std::llround(u)), 0, f.nx() - 1);
        obs.locations.push_back(f.x(j));
        for (Index i = 0; i < f.nt(); ++i, ++c) {
            obs.points.col(c) = Eigen::Vector2d(f.x(j), f.t(i));
            obs.values[c] = f.values(i, j);
        }
    }
    return obs;
}

/// Nearest-row spatial snapshots, optionally truncated to [x_lo, x_hi].
inline ObservationSet extract_snapshots(const GridField& f, const std::vector<double>& times,
                                        std::optional<std::pair<double, double>> x_extent = std::nullopt) {
    f.validate();
    if (times.empty()) throw DomainError("extract_snapshots: no times");
    std::vector<Index> cols;
    for (Index j = 0; j < f.nx(); ++j) {
        const double x = f.x(j);
        if (!x_extent || (x >= x_extent->first - 1e-12 && x <= x_extent->second + 1e-12)) cols.push_back(j);
    }
    if (cols.empty()) throw DomainError("extract_snapshots: x extent selects no grid columns");
    ObservationSet obs;
    obs.kind = ObservationKind::snapshots;
    obs.points.resize(2, static_cast<Index>(times.size() * cols.size()));
    obs.values.resize(obs.points.cols());
    Index c = 0;
    for (double t : times) {
        const double u = (t - f.t0) / f.dt;
        if (!(u >= -0.5) || !(u <= static_cast<double>(f.nt() - 1) + 0.5)) {
            throw DomainError("extract_snapshots: time " + detail::fmt(t) + " outside the grid");
        }
        const Index i = std::clamp<Index>(static_cast<Index>(std::llround(u)), 0, f.nt() - 1);
        obs.locations.push_back(f.t(i));
        for (Index j : cols) {
            obs.points.col(c) = Eigen::Vector2d(f.x(j), f.t(i));
            obs.values[c++] = f.values(i, j);
        }
    }
    return obs;
}

// --- observation tables --------------------------------------------------------------------

inline void write_observations(const fs::path& path, const ObservationSet& obs) {
    obs.validate();
    auto os = detail::create(path);
    os << "x,t,eta\n";
    for (Index i = 0; i < obs.size(); ++i) {
        os << detail::fmt(obs.points(0, i)) << ',' << detail::fmt(obs.points(1, i)) << ',' << detail::fmt(obs.values[i])
           << '\n';
    }
}

/// Reads `x,t,eta`. Without an explicit kind, a full tensor layout with fewer
/// distinct x than t is read as buoys, the transpose as snapshots, anything
/// else as scattered points.
inline ObservationSet read_observations(const fs::path& path, std::optional<ObservationKind> kind = std::nullopt) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw IoError(path.string() + ": empty file");
    line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
    if (line != "x,t,eta") throw IoError(path.string() + ": expected header x,t,eta");
    std::vector<Eigen::Vector3d> rows;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Eigen::Vector3d r;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r[0], &r[1], &r[2]) != 3) {
            throw IoError(path.string() + ": malformed row: " + line);
        }
        rows.push_back(r);
    }
    ObservationSet obs;
    obs.points.resize(2, static_cast<Index>(rows.size()));
    obs.values.resize(static_cast<Index>(rows.size()));
    std::set<double> xs, ts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        obs.points.col(static_cast<Index>(i)) = rows[i].head<2>();
        obs.values[static_cast<Index>(i)] = rows[i][2];
        xs.insert(rows[i][0]);
        ts.insert(rows[i][1]);
    }
    obs.validate();
    const bool tensor = xs.size() * ts.size() == rows.size();
    obs.kind = kind ? *kind
                    : (tensor && xs.size() < ts.size()   ? ObservationKind::buoys
                       : tensor && ts.size() < xs.size() ? ObservationKind::snapshots
                                                         : ObservationKind::scattered);
    if (obs.kind == ObservationKind::buoys) obs.locations.assign(xs.begin(), xs.end());
    if (obs.kind == ObservationKind::snapshots) obs.locations.assign(ts.begin(), ts.end());
    return obs;
}

// --- model specs -----------------------------------------------------------------------------

inline json to_json(const nn::NetworkSpec& s) {
    return {{"inputs", s.inputs},
            {"embedding",
             {{"enabled", s.embedding.enabled},
              {"n_f", s.embedding.n_f},
              {"init", {s.embedding.init_lo, s.embedding.init_hi}},
              {"layout", s.embedding.layout == nn::FourierLayout::replicate ? "replicate" : "staggered"}}},
            {"hidden_layers", s.mlp.hidden_layers},
            {"width", s.mlp.width},
            {"activation", s.mlp.activation}};
}

inline nn::NetworkSpec network_spec_from_json(const json& j) {
    nn::NetworkSpec s;
    s.inputs = j.at("inputs").get<int>();
    const json& e = j.at("embedding");
    s.embedding.enabled = e.at("enabled").get<bool>();
    s.embedding.n_f = e.at("n_f").get<int>();
    s.embedding.init_lo = e.at("init").at(0).get<double>();
    s.embedding.init_hi = e.at("init").at(1).get<double>();
    s.embedding.layout = e.at("layout").get<std::string>() == "staggered" ? nn::FourierLayout::staggered
                                                                          : nn::FourierLayout::replicate;
    s.mlp.hidden_layers = j.at("hidden_layers").get<int>();
    s.mlp.width = j.at("width").get<int>();
    s.mlp.activation = j.at("activation").get<std::string>();
    return s;
}

inline json to_json(const nn::AxisRange& r) { return json::array({r.lo, r.hi}); }
inline nn::AxisRange range_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

// --- checkpoints ---------------------------------------------------------------------------

struct LoadedCheckpoint {
    nn::PinnModel model;
    ConstraintFields constraints;
    long epoch = 0;
    std::string stage;
};

/// Header, then the model, M and R parameter blobs in that order.
inline void save_checkpoint(const fs::path& path, const nn::PinnModel& model, const ConstraintFields& c, long epoch,
                            const std::string& stage) {
    const auto& m = c.m_net();
    const auto& r = c.r_net();
    const json h = {{"format", "wavepinn-checkpoint"},
                    {"version", 1},
                    {"epoch", epoch},
                    {"stage", stage},
                    {"model", {{"eta", to_json(model.spec().eta)}, {"phi", to_json(model.spec().phi)}, {"seed", model.spec().seed}}},
                    {"box", {{"x", to_json(model.box().x)}, {"t", to_json(model.box().t)}, {"z", to_json(model.box().z)}}},
                    {"constraints",
                     {{"m", to_json(m.net.spec())},
                      {"r", to_json(r.net.spec())},
                      {"ranges", {to_json(m.ranges.at(0)), to_json(m.ranges.at(1))}},
                      {"m_scale", c.m_scale()},
                      {"frozen", c.frozen()},
                      {"checksum", c.checksum()}}},
                    {"sizes", {model.size(), m.params.size(), r.params.size()}}};
    const fs::path tmp = path.string() + ".tmp";
    {
        auto os = detail::create(tmp, std::ios::binary);
        os << h.dump() << '\n';
        detail::write_f64(os, model.params().data(), static_cast<std::size_t>(model.size()));
        detail::write_f64(os, m.params.data(), static_cast<std::size_t>(m.params.size()));
        detail::write_f64(os, r.params.data(), static_cast<std::size_t>(r.params.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline LoadedCheckpoint load_checkpoint(const fs::path& path) {
    auto [h, is] = detail::open_binary(path, "wavepinn-checkpoint");
    try {
        nn::ModelSpec spec;
        spec.eta = network_spec_from_json(h.at("model").at("eta"));
        spec.phi = network_spec_from_json(h.at("model").at("phi"));
        spec.seed = h.at("model").at("seed").get<std::uint64_t>();
        const json& b = h.at("box");
        const nn::DomainBox box{range_from_json(b.at("x")), range_from_json(b.at("t")), range_from_json(b.at("z"))};
        LoadedCheckpoint out;
        out.model = nn::PinnModel(spec, box);
        const json& cj = h.at("constraints");
        const std::vector<nn::AxisRange> ranges{range_from_json(cj.at("ranges").at(0)), range_from_json(cj.at("ranges").at(1))};
        nn::StandaloneNetwork m(network_spec_from_json(cj.at("m")), ranges, 0);
        nn::StandaloneNetwork r(network_spec_from_json(cj.at("r")), ranges, 0);
        const auto sizes = h.at("sizes").get<std::vector<Index>>();
        if (sizes.size() != 3 || sizes[0] != out.model.size() || sizes[1] != m.params.size() || sizes[2] != r.params.size()) {
            throw IoError(path.string() + ": parameter sizes do not match the stored specs");
        }
        detail::read_f64(is, out.model.params().data(), static_cast<std::size_t>(sizes[0]));
        detail::read_f64(is, m.params.data(), static_cast<std::size_t>(sizes[1]));
        detail::read_f64(is, r.params.data(), static_cast<std::size_t>(sizes[2]));
        out.constraints = ConstraintFields(std::move(m), std::move(r), cj.at("m_scale").get<double>());
        if (out.constraints.checksum() != cj.at("checksum").get<std::uint64_t>()) {
            throw IoError(path.string() + ": constraint checksum mismatch");
        }
        if (cj.at("frozen").get<bool>()) out.constraints.freeze();
        out.epoch = h.at("epoch").get<long>();
        out.stage = h.at("stage").get<std::string>();
        return out;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad checkpoint header: " + e.what());
    }
}

// --- training log ---------------------------------------------------------------------------

/// Tab-separated: one header row, then one row per epoch:
/// epoch stage segments active_interior total L_<name>... lambda_<name>... mse_data
class TrainLog {
  public:
    TrainLog(const fs::path& path, const std::vector<std::string>& components) : os_(detail::create(path)) {
        os_ << "epoch\tstage\tsegments\tactive_interior\ttotal";
        for (const auto& c : components) os_ << "\tL_" << c;
        for (const auto& c : components) os_ << "\tlambda_" << c;
        os_ << "\tmse_data\n";
    }

    void append(const EpochRecord& r) {
        os_ << r.epoch << '\t' << r.stage << '\t' << r.segments << '\t' << r.active_interior << '\t' << detail::fmt(r.total);
        for (double v : r.losses) os_ << '\t' << detail::fmt(v);
        for (double v : r.lambdas) os_ << '\t' << detail::fmt(v);
        os_ << '\t' << detail::fmt(r.mse_data) << '\n';
        os_.flush();
    }

  private:
    std::ofstream os_;
};

struct LogTable {
    std::vector<std::string> components;
    std::vector<EpochRecord> records;
};

inline LogTable read_log(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw IoError(path.string() + ": empty log");
    std::vector<std::string> cols;
    {
        std::istringstream ss(line);
        for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    }
    LogTable t;
    for (const auto& c : cols) {
        if (c.rfind("L_", 0) == 0) t.components.push_back(c.substr(2));
    }
    const std::size_t m = t.components.size();
    if (cols.size() != 6 + 2 * m) throw IoError(path.string() + ": unexpected log header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<std::string> f;
        for (std::string c; std::getline(ss, c, '\t');) f.push_back(c);
        if (f.size() != cols.size()) throw IoError(path.string() + ": malformed log row");
        EpochRecord r;
        r.epoch = std::stol(f[0]);
        r.stage = f[1];
        r.segments = std::stoi(f[2]);
        r.active_interior = std::stol(f[3]);
        r.total = std::stod(f[4]);
        for (std::size_t i = 0; i < m; ++i) r.losses.push_back(std::stod(f[5 + i]));
        for (std::size_t i = 0; i < m; ++i) r.lambdas.push_back(std::stod(f[5 + m + i]));
        r.mse_data = std::stod(f.back());
        t.records.push_back(std::move(r));
    }
    return t;
}

// --- run configuration -------------------------------------------------------------------------

struct ObservationLayout {
    std::optional<std::string> file;
    std::vector<double> buoys;      // x positions
    double buoy_dt = 0.05;          // sampling interval of generated buoy series
    std::vector<double> snapshots;  // times
    double snapshot_dx = 0.01;
    std::optional<std::pair<double, double>> x_extent;
};

struct JonswapSource {
    JonswapSpec spec;
    int components = 64;
    double band_fraction = 0.01;  // synthesis band: spectrum above this fraction of its peak
    std::uint64_t seed = 0;
};

struct RegionFromSpectrum {
    double fraction = 0.05;
    double x_lo = 0.0, x_hi = 4.0;
    double t_first = 0.0, t_last = 0.945, t_max = 2.145;
};

struct OutputPaths {
    std::string dir = ".";
    std::string checkpoint = "checkpoint.bin";
    std::string log = "train_log.tsv";
    std::string report = "report.json";
    std::string fields = "estimate";  // prefix of the exported estimate fields
};

struct RunConfig {
    TrainConfig train;
    std::optional<SeaStateSpec> sea;
    std::optional<JonswapSource> jonswap;
    ObservationLayout observations;
    std::optional<RegionFromSpectrum> region_from_spectrum;
    std::optional<GridSpec> grid;
    OutputPaths output;

    /// Analytic sea of the run, drawn from the spectrum when one is configured.
    std::optional<SeaStateSpec> truth() const {
        if (sea) return sea;
        if (!jonswap) return std::nullopt;
        const auto [lo, hi] = spectral_cutoffs(jonswap->spec, jonswap->band_fraction);
        return synthesize_jonswap_sea(jonswap->spec, jonswap->components, lo, hi, jonswap->seed);
    }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; })) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::pair<double, double> pair_of(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline nn::NetworkSpec parse_net(const json& j, nn::NetworkSpec s, const std::string& where) {
    check_keys(j, {"hidden_layers", "width", "fourier_features", "fourier_init", "embedding", "activation"}, where);
    get_if(j, "hidden_layers", s.mlp.hidden_layers);
    get_if(j, "width", s.mlp.width);
    get_if(j, "activation", s.mlp.activation);
    get_if(j, "fourier_features", s.embedding.n_f);
    get_if(j, "embedding", s.embedding.enabled);
    if (j.contains("fourier_init")) std::tie(s.embedding.init_lo, s.embedding.init_hi) = pair_of(j["fourier_init"], where);
    return s;
}

}  // namespace detail

/// Parses a run configuration; unknown keys anywhere are configuration errors.
inline RunConfig parse_run_config(const json& j) {
    using detail::check_keys;
    using detail::get_if;
    RunConfig rc;
    TrainConfig& tc = rc.train;
    try {
        check_keys(j, {"scenario", "domain", "sea", "jonswap", "observations", "model", "collocation", "periodic",
                       "coupling", "constraints", "balancer", "adam", "lbfgs", "schedule", "region", "grid", "output",
                       "threads", "checkpoint_every", "chunk", "seed"},
                   "config");
        const std::string scenario = j.value("scenario", "assimilate");
        if (scenario != "assimilate" && scenario != "predict") throw ConfigError("config: scenario must be assimilate or predict");
        tc.scenario = scenario == "predict" ? Scenario::prediction : Scenario::assimilation;

        if (!j.contains("domain")) throw ConfigError("config: domain is required");
        const json& d = j["domain"];
        check_keys(d, {"x", "t", "depth", "gravity"}, "domain");
        const auto [x0, x1] = detail::pair_of(d.at("x"), "domain.x");
        const auto [t0, t1] = detail::pair_of(d.at("t"), "domain.t");
        tc.domain = {{x0, x1}, {t0, t1}, d.at("depth").get<double>(), d.value("gravity", kStandardGravity)};

        if (j.contains("sea") && j.contains("jonswap")) throw ConfigError("config: give either sea or jonswap, not both");
        if (j.contains("sea")) {
            check_keys(j["sea"], {"components"}, "sea");
            SeaStateSpec sea;
            sea.depth = tc.domain.depth;
            sea.gravity = tc.domain.gravity;
            for (const json& c : j["sea"].at("components")) {
                check_keys(c, {"amplitude", "period", "omega", "phase"}, "sea.components");
                if (c.contains("period") == c.contains("omega")) throw ConfigError("sea.components: give period or omega");
                const double w = c.contains("omega") ? c["omega"].get<double>() : 2.0 * std::numbers::pi / c["period"].get<double>();
                sea.components.push_back(make_component(c.at("amplitude").get<double>(), w, c.value("phase", 0.0), sea.depth, sea.gravity));
            }
            rc.sea = sea;
        }
        if (j.contains("jonswap")) {
            const json& s = j["jonswap"];
            check_keys(s, {"peak_period", "gamma", "hs", "steepness", "components", "band_fraction", "seed"}, "jonswap");
            JonswapSource src;
            src.spec.peak_period = s.at("peak_period").get<double>();
            src.spec.gamma = s.value("gamma", 3.3);
            src.spec.depth = tc.domain.depth;
            src.spec.gravity = tc.domain.gravity;
            if (s.contains("hs")) src.spec.significant_height = s["hs"].get<double>();
            if (s.contains("steepness")) src.spec.steepness = s["steepness"].get<double>();
            get_if(s, "components", src.components);
            get_if(s, "band_fraction", src.band_fraction);
            get_if(s, "seed", src.seed);
            validate(src.spec);
            rc.jonswap = src;
        }

        if (j.contains("observations")) {
            const json& o = j["observations"];
            check_keys(o, {"file", "buoys", "dt", "snapshots", "dx", "x_extent"}, "observations");
            if (o.contains("file")) rc.observations.file = o["file"].get<std::string>();
            get_if(o, "buoys", rc.observations.buoys);
            get_if(o, "dt", rc.observations.buoy_dt);
            get_if(o, "snapshots", rc.observations.snapshots);
            get_if(o, "dx", rc.observations.snapshot_dx);
            if (o.contains("x_extent")) rc.observations.x_extent = detail::pair_of(o["x_extent"], "observations.x_extent");
        }

        if (j.contains("model")) {
            const json& m = j["model"];
            check_keys(m, {"preset", "eta", "phi", "seed"}, "model");
            const std::string preset = m.value("preset", "paper");
            if (preset != "paper" && preset != "desk") throw ConfigError("model.preset: paper or desk");
            std::uint64_t seed = m.value("seed", std::uint64_t{0});
            tc.model = preset == "desk" ? nn::desk_scale_model_spec(seed) : nn::full_scale_model_spec(seed);
            if (m.contains("eta")) tc.model.eta = detail::parse_net(m["eta"], tc.model.eta, "model.eta");
            if (m.contains("phi")) tc.model.phi = detail::parse_net(m["phi"], tc.model.phi, "model.phi");
        }
        if (j.contains("collocation")) {
            const json& c = j["collocation"];
            check_keys(c, {"surface", "bottom", "interior", "periodic", "seed"}, "collocation");
            get_if(c, "surface", tc.counts.surface);
            get_if(c, "bottom", tc.counts.bottom);
            get_if(c, "interior", tc.counts.interior);
            get_if(c, "periodic", tc.counts.periodic);
            get_if(c, "seed", tc.seed);
        }
        get_if(j, "periodic", tc.periodic);
        if (j.contains("coupling")) {
            const auto c = j["coupling"].get<std::string>();
            if (c != "partial" && c != "total") throw ConfigError("coupling: partial or total");
            tc.coupling = c == "total" ? ad::SurfaceCoupling::total : ad::SurfaceCoupling::partial;
        }
        if (j.contains("constraints")) {
            const json& c = j["constraints"];
            check_keys(c, {"net", "adam_epochs", "learning_rate", "lbfgs_iterations", "distance_samples",
                           "squared_distance", "m_tolerance", "r_tolerance", "seed"},
                       "constraints");
            if (c.contains("net")) tc.constraints.net = detail::parse_net(c["net"], tc.constraints.net, "constraints.net");
            get_if(c, "adam_epochs", tc.constraints.adam_epochs);
            get_if(c, "learning_rate", tc.constraints.learning_rate);
            get_if(c, "lbfgs_iterations", tc.constraints.lbfgs_iterations);
            get_if(c, "distance_samples", tc.constraints.distance_samples);
            get_if(c, "squared_distance", tc.constraints.squared_distance);
            get_if(c, "m_tolerance", tc.constraints.m_tolerance);
            get_if(c, "r_tolerance", tc.constraints.r_tolerance);
            get_if(c, "seed", tc.constraints.seed);
        }
        if (j.contains("balancer")) {
            const json& b = j["balancer"];
            check_keys(b, {"enabled", "alpha", "tau", "expected_rho", "loss_floor", "seed"}, "balancer");
            get_if(b, "enabled", tc.balancer.enabled);
            get_if(b, "alpha", tc.balancer.alpha);
            get_if(b, "tau", tc.balancer.tau);
            get_if(b, "expected_rho", tc.balancer.expected_rho);
            get_if(b, "loss_floor", tc.balancer.loss_floor);
            get_if(b, "seed", tc.balancer.seed);
        }
        if (j.contains("adam")) {
            const json& a = j["adam"];
            check_keys(a, {"lr", "beta1", "beta2", "eps", "amsgrad", "epochs"}, "adam");
            get_if(a, "lr", tc.adam.lr);
            get_if(a, "beta1", tc.adam.beta1);
            get_if(a, "beta2", tc.adam.beta2);
            get_if(a, "eps", tc.adam.eps);
            get_if(a, "amsgrad", tc.adam.amsgrad);
            get_if(a, "epochs", tc.adam_epochs);
        }
        if (j.contains("lbfgs")) {
            const json& l = j["lbfgs"];
            check_keys(l, {"history", "max_iterations", "gradient_tolerance", "relative_decrease", "stall_window"}, "lbfgs");
            get_if(l, "history", tc.lbfgs.history);
            get_if(l, "max_iterations", tc.lbfgs.max_iterations);
            get_if(l, "gradient_tolerance", tc.lbfgs.gradient_tolerance);
            get_if(l, "relative_decrease", tc.lbfgs.relative_decrease);
            get_if(l, "stall_window", tc.lbfgs.stall_window);
        }
        if (j.contains("schedule")) {
            const json& s = j["schedule"];
            check_keys(s, {"segments", "t_start", "first_duration", "t_end", "step", "epochs_per_segment",
                           "refinement_epochs", "total_epochs"},
                       "schedule");
            get_if(s, "segments", tc.schedule.segments);
            get_if(s, "t_start", tc.schedule.t_start);
            get_if(s, "first_duration", tc.schedule.first_duration);
            get_if(s, "t_end", tc.schedule.t_end);
            get_if(s, "step", tc.schedule.step);
            get_if(s, "epochs_per_segment", tc.schedule.epochs_per_segment);
            get_if(s, "refinement_epochs", tc.refinement_epochs);
            get_if(s, "total_epochs", tc.total_epochs);
        }
        if (j.contains("region")) {
            const json& r = j["region"];
            if (r.contains("fraction")) {
                check_keys(r, {"fraction", "x", "t_first", "t_last", "t_max"}, "region");
                RegionFromSpectrum rs;
                rs.fraction = r["fraction"].get<double>();
                if (r.contains("x")) std::tie(rs.x_lo, rs.x_hi) = detail::pair_of(r["x"], "region.x");
                get_if(r, "t_first", rs.t_first);
                get_if(r, "t_last", rs.t_last);
                get_if(r, "t_max", rs.t_max);
                if (!rc.jonswap) throw ConfigError("region: group-velocity bounds need a jonswap spectrum");
                const auto [ch, cl] = limiting_group_velocities(rc.jonswap->spec, rs.fraction);
                tc.region = prediction_region_from_snapshots(ch, cl, rs.x_lo, rs.x_hi, rs.t_first, rs.t_last, rs.t_max);
                rc.region_from_spectrum = rs;
            } else {
                check_keys(r, {"c_g_high", "c_g_low", "x_offset_left", "x_extent_right", "t_max"}, "region");
                tc.region = PredictionRegion{r.at("c_g_high").get<double>(), r.at("c_g_low").get<double>(),
                                             r.at("x_offset_left").get<double>(), r.at("x_extent_right").get<double>(),
                                             r.at("t_max").get<double>()};
            }
        }
        if (j.contains("grid")) {
            const json& g = j["grid"];
            check_keys(g, {"x", "nx", "t", "nt"}, "grid");
            GridSpec gs;
            std::tie(gs.x0, gs.x1) = detail::pair_of(g.at("x"), "grid.x");
            std::tie(gs.t0, gs.t1) = detail::pair_of(g.at("t"), "grid.t");
            gs.nx = g.at("nx").get<int>();
            gs.nt = g.at("nt").get<int>();
            (void)gs.empty(Quantity::elevation);
            rc.grid = gs;
        }
        if (j.contains("output")) {
            const json& o = j["output"];
            check_keys(o, {"dir", "checkpoint", "log", "report", "fields"}, "output");
            get_if(o, "dir", rc.output.dir);
            get_if(o, "checkpoint", rc.output.checkpoint);
            get_if(o, "log", rc.output.log);
            get_if(o, "report", rc.output.report);
            get_if(o, "fields", rc.output.fields);
        }
        get_if(j, "threads", tc.threads);
        get_if(j, "checkpoint_every", tc.checkpoint_every);
        get_if(j, "chunk", tc.chunk);
        if (j.contains("seed")) {
            // handled by apply_seed so that the CLI flag and the key behave alike
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(tc, rc.sea ? &*rc.sea : nullptr);
    return rc;
}

/// One seed for every random stream of a run.
inline void apply_seed(RunConfig& rc, std::uint64_t seed) {
    rc.train.model.seed = seed;
    rc.train.seed = seed + 1;
    rc.train.balancer.seed = seed + 2;
    rc.train.constraints.seed = seed + 3;
    if (rc.jonswap) rc.jonswap->seed = seed + 4;
}

inline RunConfig load_run_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    RunConfig rc = parse_run_config(j);
    if (j.contains("seed")) apply_seed(rc, j["seed"].get<std::uint64_t>());
    return rc;
}

/// Observations of a run: read from file or sampled from the analytic sea.
inline ObservationSet make_observations(const RunConfig& rc) {
    const ObservationLayout& o = rc.observations;
    if (o.file) {
        return read_observations(*o.file, o.buoys.empty() ? (o.snapshots.empty() ? std::nullopt
                                                                                   : std::optional(ObservationKind::snapshots))
                                                           : std::optional(ObservationKind::buoys));
    }
    const auto sea = rc.truth();
    if (!sea) throw ConfigError("observations: need a file or an analytic sea to sample");
    const DomainConfig& d = rc.train.domain;
    if (!o.buoys.empty()) {
        const int nt = static_cast<int>(std::llround(d.t.width() / o.buoy_dt)) + 1;
        GridSpec g{d.x.lo, d.x.hi, 2, d.t.lo, d.t.hi, nt};
        ObservationSet obs;
        obs.kind = ObservationKind::buoys;
        obs.locations = o.buoys;
        obs.points.resize(2, static_cast<Index>(o.buoys.size()) * nt);
        obs.values.resize(obs.points.cols());
        const GridField f = g.empty(Quantity::elevation);
        Index c = 0;
        for (double x : o.buoys) {
            for (int i = 0; i < nt; ++i, ++c) {
                obs.points.col(c) = Eigen::Vector2d(x, f.t(i));
                obs.values[c] = lwt_elevation(*sea, x, f.t(i));
            }
        }
        return obs;
    }
    if (!o.snapshots.empty()) {
        const auto [x_lo, x_hi] = o.x_extent.value_or(std::pair{d.x.lo, d.x.hi});
        const int nx = static_cast<int>(std::llround((x_hi - x_lo) / o.snapshot_dx)) + 1;
        ObservationSet obs;
        obs.kind = ObservationKind::snapshots;
        obs.locations = o.snapshots;
        obs.points.resize(2, static_cast<Index>(o.snapshots.size()) * nx);
        obs.values.resize(obs.points.cols());
        Index c = 0;
        for (double t : o.snapshots) {
            for (int j = 0; j < nx; ++j, ++c) {
                const double x = x_lo + (x_hi - x_lo) * j / (nx - 1);
                obs.points.col(c) = Eigen::Vector2d(x, t);
                obs.values[c] = lwt_elevation(*sea, x, t);
            }
        }
        return obs;
    }
    throw ConfigError("observations: give a file, buoy positions or snapshot times");
}

// --- report ---------------------------------------------------------------------------------

inline json report_json(const TrainReport& r) {
    json j;
    j["components"] = r.components;
    j["epochs"] = r.epochs.size();
    j["wall_seconds"] = r.wall_seconds;
    j["termination"] = r.termination;
    j["mse_data_initial"] = r.mse_data_initial;
    j["constraint_fit"] = {{"m_max_error", r.constraint_fit.m_max_error},
                           {"r_max_on_data", r.constraint_fit.r_max_on_data},
                           {"m_loss", r.constraint_fit.m_loss},
                           {"r_loss", r.constraint_fit.r_loss}};
    j["constraints_unchanged"] = r.constraint_checksum_before == r.constraint_checksum_after;
    if (!r.epochs.empty()) {
        j["first"] = {{"total", r.epochs.front().total}, {"losses", r.epochs.front().losses}};
        j["last"] = {{"total", r.epochs.back().total},
                     {"losses", r.epochs.back().losses},
                     {"lambdas", r.epochs.back().lambdas},
                     {"mse_data", r.epochs.back().mse_data}};
    }
    if (r.evaluation) {
        j["ssp_elevation"] = r.evaluation->ssp_elevation;
        j["ssp_surface_potential"] = r.evaluation->ssp_potential;
    }
    return j;
}

inline void write_json(const fs::path& path, const json& j) {
    auto os = detail::create(path);
    os << j.dump(2) << '\n';
}

}  // namespace wavepinn::io
