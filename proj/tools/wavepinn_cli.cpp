// wavepinn: data generation, training and evaluation from the command line.
//
// Exit status: 0 success, 1 configuration error, 2 runtime or numeric error.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <sstream>

#include "wavepinn/io.hpp"
#include "wavepinn/runtime.hpp"

using namespace wavepinn;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string stem_with(const fs::path& p, const std::string& suffix) {
    return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

GridSpec require_grid(const io::RunConfig& rc) {
    if (rc.grid) return *rc.grid;
    const DomainConfig& d = rc.train.domain;
    return GridSpec{d.x.lo, d.x.hi, 101, d.t.lo, d.t.hi, 101};
}

SeaStateSpec require_sea(const io::RunConfig& rc) {
    auto sea = rc.truth();
    if (!sea) throw ConfigError("config has neither sea nor jonswap");
    return *sea;
}

// Cross-section tables: time series at fixed x and spatial profiles at fixed t.
void write_cross_sections(const std::string& prefix, const GridField& truth, const GridField& est,
                          const std::vector<double>& xs, const std::vector<double>& ts) {
    auto nearest = [](double v, double v0, double dv, Index n) {
        return std::clamp<Index>(static_cast<Index>(std::llround((v - v0) / dv)), 0, n - 1);
    };
    for (double x : xs) {
        const Index j = nearest(x, truth.x0, truth.dx, truth.nx());
        const fs::path p = io::output_path(prefix + "_x" + io::detail::fmt(truth.x(j)) + ".tsv");
        auto os = io::detail::create(p);
        os << "t\ttruth\testimate\n";
        for (Index i = 0; i < truth.nt(); ++i) {
            os << io::detail::fmt(truth.t(i)) << '\t' << io::detail::fmt(truth.values(i, j)) << '\t'
               << io::detail::fmt(est.values(i, j)) << '\n';
        }
        std::cout << "wrote " << p.string() << '\n';
    }
    for (double t : ts) {
        const Index i = nearest(t, truth.t0, truth.dt, truth.nt());
        const fs::path p = io::output_path(prefix + "_t" + io::detail::fmt(truth.t(i)) + ".tsv");
        auto os = io::detail::create(p);
        os << "x\ttruth\testimate\n";
        for (Index j = 0; j < truth.nx(); ++j) {
            os << io::detail::fmt(truth.x(j)) << '\t' << io::detail::fmt(truth.values(i, j)) << '\t'
               << io::detail::fmt(est.values(i, j)) << '\n';
        }
        std::cout << "wrote " << p.string() << '\n';
    }
}

void print_metrics(const std::string& label, const GridField& truth, const GridField& est,
                   const std::optional<Eigen::MatrixXd>& mask = std::nullopt) {
    const ErrorSummary s = summarize_error(truth, est);
    const double mse = s.rmse * s.rmse;
    std::printf("%-12s SSP %.6f  MSE %.6e  max|err| %.6e", label.c_str(), s.ssp, mse, s.max_abs);
    if (mask) std::printf("  SSP(region) %.6f", ssp_2d_masked(truth, est, *mask));
    std::printf("\n");
}

int run_training(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::optional<std::string>& observations, bool predict) {
    io::RunConfig rc = io::load_run_config(config_path);
    if (seed) io::apply_seed(rc, *seed);
    if (observations) rc.observations.file = *observations;
    if (predict && !rc.train.region) throw ConfigError("predict: config needs a region");
    const ObservationSet obs = io::make_observations(rc);
    const auto truth = rc.truth();

    const fs::path dir = io::output_path(rc.output.dir);
    fs::create_directories(dir);
    const fs::path ckpt = dir / rc.output.checkpoint;
    std::unique_ptr<io::TrainLog> log;

    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        if (!log) {
            // periodic terms, when present, follow the four core terms
            std::vector<std::string> names;
            for (std::size_t i = 0; i < r.losses.size(); ++i) names.emplace_back(kLossNames[i]);
            log = std::make_unique<io::TrainLog>(dir / rc.output.log, names);
        }
        log->append(r);
        if (r.epoch % 100 == 0) {
            std::fprintf(stderr, "epoch %6ld %-6s total %.4e  mse_data %.3e\n", r.epoch, r.stage.c_str(), r.total,
                         r.mse_data);
        }
    };
    hooks.on_checkpoint = [&](const Checkpoint& c) { io::save_checkpoint(ckpt, c.model, c.constraints, c.epoch, c.stage); };

    const std::optional<GridSpec> grid = truth ? std::optional(require_grid(rc)) : std::nullopt;
    const TrainResult res = predict ? run_prediction(rc.train, obs, truth, grid, hooks)
                                    : run_assimilation(rc.train, obs, truth, grid, hooks);

    io::json report = io::report_json(res.report);
    report["scenario"] = predict ? "predict" : "assimilate";
    report["observations"] = obs.size();
    if (rc.grid || truth) {
        const GridSpec g = require_grid(rc);
        const auto [eta, phi] = model_surface_fields(res.model, res.constraints, g);
        io::FieldFile fe{eta, {{"provenance", "trained model"}}};
        io::FieldFile fp{phi, {{"provenance", "trained model, surface potential"}}};
        io::write_field(dir / (rc.output.fields + "_eta.field"), fe);
        io::write_field(dir / (rc.output.fields + "_phi_surface.field"), fp);
        if (truth) {
            io::write_field(dir / "truth_eta.field", {truth_elevation(*truth, g), {{"provenance", "linear wave theory"}}});
            io::write_field(dir / "truth_phi_surface.field",
                            {truth_surface_potential(*truth, g), {{"provenance", "linear wave theory, surface potential"}}});
        }
    }
    io::write_json(dir / rc.output.report, report);
    std::printf("termination %s after %zu epochs in %.1f s\n", res.report.termination.c_str(), res.report.epochs.size(),
                res.report.wall_seconds);
    if (res.report.evaluation) {
        std::printf("SSP elevation %.6f  SSP surface potential %.6f%s\n", res.report.evaluation->ssp_elevation,
                    res.report.evaluation->ssp_potential, predict ? " (prediction region)" : "");
    }
    std::printf("outputs in %s\n", dir.string().c_str());
    return 0;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    CLI::App app{"Physics-informed wave reconstruction and prediction"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Analytic elevation (and potential slices) on the config grid");
    std::string synth_config, synth_out = "truth_eta.field";
    std::vector<double> synth_z;
    bool synth_table = false;
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--config", synth_config, "Run configuration (JSON)")->required();
    synth->add_option("--out", synth_out, "Elevation field file");
    synth->add_option("--potential-z", synth_z, "Depths of potential slices");
    synth->add_flag("--table", synth_table, "Also write t,x,value text tables");
    synth->add_option("--seed", synth_seed, "Seed override");

    // buoys / snapshots
    auto* buoys = app.add_subcommand("buoys", "Extract buoy time series from a field");
    std::string buoys_field, buoys_positions, buoys_out = "buoys.csv";
    buoys->add_option("--field", buoys_field)->required();
    buoys->add_option("--positions", buoys_positions, "Comma-separated x positions")->required();
    buoys->add_option("--out", buoys_out);

    auto* snaps = app.add_subcommand("snapshots", "Extract spatial snapshots from a field");
    std::string snaps_field, snaps_times, snaps_out = "snapshots.csv";
    std::vector<double> snaps_extent;
    snaps->add_option("--field", snaps_field)->required();
    snaps->add_option("--times", snaps_times, "Comma-separated snapshot times")->required();
    snaps->add_option("--x-extent", snaps_extent, "lo hi")->expected(2);
    snaps->add_option("--out", snaps_out);

    // training
    auto* assim = app.add_subcommand("assimilate", "Reconstruct the wave field from observations");
    auto* pred = app.add_subcommand("predict", "Propagate snapshots forward in time");
    std::string train_config;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::string> train_obs;
    for (auto* s : {assim, pred}) {
        s->add_option("--config", train_config, "Run configuration (JSON)")->required();
        s->add_option("--seed", train_seed, "Seed override for every random stream");
        s->add_option("--observations", train_obs, "Observation table x,t,eta");
    }

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Compare an estimate with the truth");
    std::string eval_truth, eval_est, eval_ckpt, eval_config, eval_prefix;
    std::string eval_xs, eval_ts;
    eval->add_option("--truth", eval_truth, "Truth field file");
    eval->add_option("--estimate", eval_est, "Estimate field file");
    eval->add_option("--checkpoint", eval_ckpt, "Evaluate a checkpoint against the config's analytic sea");
    eval->add_option("--config", eval_config, "Run configuration for --checkpoint");
    eval->add_option("--tables", eval_prefix, "Prefix for cross-section tables");
    eval->add_option("--at-x", eval_xs, "Comma-separated x positions for time-series tables");
    eval->add_option("--at-t", eval_ts, "Comma-separated times for spatial tables");

    // analytic helpers
    auto* disp = app.add_subcommand("dispersion", "Wavenumber and speeds from the dispersion relation");
    std::optional<double> disp_omega, disp_period;
    double disp_depth = 0.0, disp_g = kStandardGravity;
    disp->add_option("--omega", disp_omega, "Angular frequency, rad/s");
    disp->add_option("--period", disp_period, "Period, s");
    disp->add_option("--depth", disp_depth, "Water depth, m")->required();
    disp->add_option("--gravity", disp_g);

    auto* spec = app.add_subcommand("spectrum", "JONSWAP peak parameters, cutoffs and density table");
    auto* region = app.add_subcommand("region", "Limiting group velocities and prediction-region bounds");
    double tp = 0.0, gamma = 3.3, depth = 0.0, fraction = 0.05, grav = kStandardGravity;
    std::optional<double> hs, eps;
    std::string spec_out;
    for (auto* s : {spec, region}) {
        s->add_option("--tp", tp, "Peak period, s")->required();
        s->add_option("--gamma", gamma, "Peak enhancement");
        s->add_option("--depth", depth, "Water depth, m")->required();
        s->add_option("--fraction", fraction, "Cutoff level relative to the peak");
        s->add_option("--gravity", grav);
    }
    spec->add_option("--hs", hs, "Significant wave height, m");
    spec->add_option("--eps", eps, "Steepness 0.5 Hs k_p");
    spec->add_option("--out", spec_out, "Write omega,S table");
    double r_xlo = 0.0, r_xhi = 4.0, r_tfirst = 0.0, r_tlast = 0.945, r_tmax = 2.145;
    region->add_option("--x-lo", r_xlo);
    region->add_option("--x-hi", r_xhi);
    region->add_option("--t-first", r_tfirst);
    region->add_option("--t-last", r_tlast);
    region->add_option("--t-max", r_tmax);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) {
            io::RunConfig rc = io::load_run_config(synth_config);
            if (synth_seed) io::apply_seed(rc, *synth_seed);
            const auto r = io::synth(require_sea(rc), require_grid(rc), synth_z);
            const fs::path out = io::output_path(synth_out);
            io::write_field(out, r.elevation);
            if (synth_table) io::write_field_table(fs::path(out).replace_extension(".csv"), r.elevation.field);
            for (std::size_t i = 0; i < r.potentials.size(); ++i) {
                const fs::path p = stem_with(out, "_phi_z" + io::detail::fmt(synth_z[i]));
                io::write_field(p, r.potentials[i]);
                std::cout << "wrote " << p.string() << '\n';
            }
            if (r.nyquist_warning) std::cerr << "warning: grid is coarser than the Nyquist spacing of the shortest component\n";
            std::cout << "wrote " << out.string() << '\n';
        } else if (*buoys) {
            const auto f = io::read_field(buoys_field);
            const fs::path out = io::output_path(buoys_out);
            io::write_observations(out, io::extract_buoys(f.field, parse_list(buoys_positions)));
            std::cout << "wrote " << out.string() << '\n';
        } else if (*snaps) {
            const auto f = io::read_field(snaps_field);
            std::optional<std::pair<double, double>> ext;
            if (!snaps_extent.empty()) ext = std::pair{snaps_extent[0], snaps_extent[1]};
            const fs::path out = io::output_path(snaps_out);
            io::write_observations(out, io::extract_snapshots(f.field, parse_list(snaps_times), ext));
            std::cout << "wrote " << out.string() << '\n';
        } else if (*assim || *pred) {
            return run_training(train_config, train_seed, train_obs, static_cast<bool>(*pred));
        } else if (*eval) {
            std::vector<std::pair<std::string, std::pair<GridField, GridField>>> pairs;
            std::optional<Eigen::MatrixXd> mask;
            if (!eval_ckpt.empty()) {
                if (eval_config.empty()) throw ConfigError("evaluate: --checkpoint needs --config");
                const io::RunConfig rc = io::load_run_config(eval_config);
                const auto ck = io::load_checkpoint(eval_ckpt);
                const GridSpec g = require_grid(rc);
                const SeaStateSpec sea = require_sea(rc);
                const auto [eta, phi] = model_surface_fields(ck.model, ck.constraints, g);
                pairs.push_back({"elevation", {truth_elevation(sea, g), eta}});
                pairs.push_back({"potential", {truth_surface_potential(sea, g), phi}});
                if (rc.train.region) mask = region_mask(*rc.train.region, pairs[0].second.first);
            } else {
                if (eval_truth.empty() || eval_est.empty()) throw ConfigError("evaluate: give --truth and --estimate, or --checkpoint");
                const auto t = io::read_field(eval_truth), e = io::read_field(eval_est);
                if (!t.field.same_grid(e.field)) throw ConfigError("evaluate: truth and estimate grids differ");
                pairs.push_back({to_string(t.field.quantity), {t.field, e.field}});
            }
            for (const auto& [label, p] : pairs) print_metrics(label, p.first, p.second, mask);
            if (!eval_prefix.empty()) {
                const auto xs = eval_xs.empty() ? std::vector<double>{} : parse_list(eval_xs);
                const auto ts = eval_ts.empty() ? std::vector<double>{} : parse_list(eval_ts);
                for (const auto& [label, p] : pairs) write_cross_sections(eval_prefix + "_" + label, p.first, p.second, xs, ts);
            }
        } else if (*disp) {
            if (disp_omega.has_value() == disp_period.has_value()) throw ConfigError("dispersion: give --omega or --period");
            const double w = disp_omega ? *disp_omega : kTwoPi / *disp_period;
            const double k = solve_dispersion(w, disp_depth, disp_g);
            std::printf("omega %.6f rad/s\nk %.6f rad/m\nL %.4f m\nc_p %.6f m/s\nc_g %.6f m/s\n", w, k, kTwoPi / k,
                        phase_velocity(w, disp_depth, disp_g), group_velocity(w, disp_depth, disp_g));
        } else if (*spec) {
            JonswapSpec js{tp, gamma, hs, eps, depth, grav};
            const auto [lo, hi] = spectral_cutoffs(js, fraction);
            const double k_hi = solve_dispersion(hi, depth, grav);
            std::printf("omega_p %.6f rad/s\nk_p %.6f rad/m\nL_p %.6f m\n", js.peak_frequency(), js.peak_wavenumber(),
                        js.peak_wavelength());
            std::printf("omega_low %.6f rad/s\nomega_high %.6f rad/s\nL_min %.6f m\nnyquist_spacing %.6f m\n", lo, hi,
                        kTwoPi / k_hi, nyquist_spacing(kTwoPi / k_hi));
            if (hs || eps) {
                std::printf("Hs %.6f m\neps %.6f\n", js.hs(), js.eps());
                if (!spec_out.empty()) {
                    const JonswapDensity s(js);
                    const fs::path out = io::output_path(spec_out);
                    auto os = io::detail::create(out);
                    os << "omega,S\n";
                    for (int i = 0; i <= 400; ++i) {
                        const double w = 0.25 * lo + (2.0 * hi - 0.25 * lo) * i / 400.0;
                        os << io::detail::fmt(w) << ',' << io::detail::fmt(s(w)) << '\n';
                    }
                    std::cout << "wrote " << out.string() << '\n';
                }
            } else if (!spec_out.empty()) {
                throw ConfigError("spectrum: --out needs --hs or --eps");
            }
        } else if (*region) {
            JonswapSpec js{tp, gamma, std::nullopt, std::nullopt, depth, grav};
            const auto [lo, hi] = spectral_cutoffs(js, fraction);
            const auto [ch, cl] = limiting_group_velocities(js, fraction);
            const PredictionRegion r = prediction_region_from_snapshots(ch, cl, r_xlo, r_xhi, r_tfirst, r_tlast, r_tmax);
            const auto [b0, b1] = prediction_region_bounds(r, r_tmax);
            std::printf("omega_low %.4f rad/s\nomega_high %.4f rad/s\n", lo, hi);
            std::printf("c_g,h %.3f m/s\nc_g,l %.3f m/s\n", ch, cl);
            std::printf("region at t=%.4f s: [%.4f, %.4f] m\n", r_tmax, b0, b1);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
