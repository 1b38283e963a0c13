#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <random>

#include "wavepinn/io.hpp"

using namespace wavepinn;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "wavepinn_test_io";
    fs::create_directories(dir);
    return dir / name;
}

SeaStateSpec two_waves() {
    SeaStateSpec s;
    s.depth = 30.0;
    s.components = {make_component(0.2, 2 * kPi / 7.0, 0.1, 30.0), make_component(0.1, 2 * kPi / 4.0, -1.0, 30.0)};
    return s;
}

io::json minimal_config() {
    return io::json::parse(R"({
        "scenario": "assimilate",
        "domain": {"x": [0, 40], "t": [0, 10], "depth": 30},
        "sea": {"components": [{"amplitude": 0.2, "period": 7, "phase": 0.1}]},
        "observations": {"buoys": [0, 20, 40], "dt": 0.5},
        "model": {"preset": "desk", "seed": 3},
        "collocation": {"surface": 100, "bottom": 50, "interior": 200, "periodic": 0}
    })");
}

}  // namespace

TEST(FieldFile, BinaryRoundTripIsBitExact) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    io::FieldFile f;
    f.field.values.resize(13, 17);
    for (Index i = 0; i < f.field.values.size(); ++i) f.field.values.data()[i] = n01(rng) * 1e-3;
    f.field.values(0, 0) = 5e-324;
    f.field.values(1, 2) = -0.0;
    f.field.x0 = -3.25;
    f.field.dx = 0.1;
    f.field.t0 = 1.0 / 3.0;
    f.field.dt = 0.05;
    f.field.quantity = Quantity::potential;
    f.field.z = -2.5;
    f.metadata["provenance"] = "unit";
    const auto p = scratch("rt.field");
    io::write_field(p, f);
    const auto g = io::read_field(p);
    ASSERT_EQ(g.field.nt(), 13);
    ASSERT_EQ(g.field.nx(), 17);
    EXPECT_EQ(std::memcmp(g.field.values.data(), f.field.values.data(), sizeof(double) * 13 * 17), 0);
    EXPECT_EQ(g.field.x0, f.field.x0);
    EXPECT_EQ(g.field.t0, f.field.t0);
    EXPECT_EQ(g.field.dx, f.field.dx);
    EXPECT_EQ(g.field.dt, f.field.dt);
    EXPECT_EQ(g.field.quantity, Quantity::potential);
    EXPECT_EQ(g.field.z, -2.5);
    EXPECT_EQ(g.metadata.at("provenance"), "unit");
    EXPECT_EQ(g.metadata.at("units"), "m^2/s");
}

TEST(FieldFile, RejectsTruncatedAndForeignFiles) {
    io::FieldFile f;
    f.field.values = Eigen::MatrixXd::Ones(4, 5);
    f.field.dx = f.field.dt = 1.0;
    const auto p = scratch("trunc.field");
    io::write_field(p, f);
    fs::resize_file(p, fs::file_size(p) - 8);
    EXPECT_THROW(io::read_field(p), IoError);
    const auto q = scratch("foreign.field");
    io::detail::create(q) << "{\"format\":\"other\"}\n";
    EXPECT_THROW(io::read_field(q), IoError);
    EXPECT_THROW(io::read_field(scratch("missing.field")), IoError);
}

TEST(FieldFile, TextTableRoundTrip) {
    GridField f;
    f.values = Eigen::MatrixXd::Random(5, 7);
    f.x0 = 1.0;
    f.dx = 0.5;
    f.t0 = 0.0;
    f.dt = 0.25;
    const auto p = scratch("table.csv");
    io::write_field_table(p, f);
    const GridField g = io::read_field_table(p);
    ASSERT_TRUE(g.same_grid(f, 1e-12));
    EXPECT_EQ(g.values, f.values);
}

TEST(Synth, AnalyticFieldsAndNyquistFlag) {
    const SeaStateSpec sea = two_waves();
    const GridSpec fine{0.0, 40.0, 201, 0.0, 10.0, 101};
    const auto r = io::synth(sea, fine, {-5.0});
    EXPECT_FALSE(r.nyquist_warning);
    EXPECT_NEAR(r.elevation.field.values(7, 11), lwt_elevation(sea, r.elevation.field.x(11), r.elevation.field.t(7)), 1e-15);
    ASSERT_EQ(r.potentials.size(), 1u);
    EXPECT_NEAR(r.potentials[0].field.values(3, 4), lwt_potential(sea, r.potentials[0].field.x(4), r.potentials[0].field.t(3), -5.0),
                1e-13);
    const GridSpec coarse{0.0, 40.0, 3, 0.0, 10.0, 101};
    EXPECT_TRUE(io::synth(sea, coarse).nyquist_warning);
    EXPECT_THROW(io::synth(sea, fine, {-31.0}), DomainError);
}

TEST(Extract, BuoysAndSnapshotsSampleGridLines) {
    const SeaStateSpec sea = two_waves();
    const GridField f = io::synth(sea, GridSpec{0.0, 40.0, 81, 0.0, 10.0, 41}).elevation.field;
    const ObservationSet b = io::extract_buoys(f, {0.0, 20.0, 40.0});
    EXPECT_EQ(b.kind, ObservationKind::buoys);
    ASSERT_EQ(b.size(), 3 * 41);
    for (Index i = 0; i < 41; ++i) EXPECT_EQ(b.values[41 + i], f.values(i, 40));
    EXPECT_THROW(io::extract_buoys(f, {41.0}), DomainError);

    const ObservationSet s = io::extract_snapshots(f, {0.0, 5.0}, std::pair{0.0, 10.0});
    EXPECT_EQ(s.kind, ObservationKind::snapshots);
    ASSERT_EQ(s.size(), 2 * 21);
    EXPECT_EQ(s.values[21 + 20], f.values(20, 20));
    EXPECT_THROW(io::extract_snapshots(f, {11.0}), DomainError);
}

TEST(Observations, CsvRoundTripWithKindInference) {
    const SeaStateSpec sea = two_waves();
    const GridField f = io::synth(sea, GridSpec{0.0, 40.0, 81, 0.0, 10.0, 41}).elevation.field;
    const auto p = scratch("obs.csv");
    io::write_observations(p, io::extract_buoys(f, {0.0, 20.0}));
    const ObservationSet b = io::read_observations(p);
    EXPECT_EQ(b.kind, ObservationKind::buoys);
    EXPECT_EQ(b.locations, (std::vector<double>{0.0, 20.0}));
    EXPECT_EQ(b.values[5], f.values(5, 0));

    io::write_observations(p, io::extract_snapshots(f, {0.0, 2.5, 5.0}));
    EXPECT_EQ(io::read_observations(p).kind, ObservationKind::snapshots);

    io::detail::create(p) << "x,t,eta\n0,0,1\n1,2,3\n";
    EXPECT_EQ(io::read_observations(p).kind, ObservationKind::scattered);
    io::detail::create(p) << "x,t,eta\n0,zero,1\n";
    EXPECT_THROW(io::read_observations(p), IoError);
    io::detail::create(p) << "a,b,c\n";
    EXPECT_THROW(io::read_observations(p), IoError);
}

TEST(Checkpoint, RoundTripRestoresModelAndConstraints) {
    nn::ModelSpec spec;
    spec.eta = {2, {true, 3, -0.4, 0.4}, {2, 8, "tanh"}};
    spec.phi = {3, {true, 3, -0.4, 0.4}, {2, 8, "tanh"}};
    spec.seed = 4;
    const nn::DomainBox box{{0.0, 10.0}, {0.0, 5.0}, {-20.0, 0.5}};
    const nn::PinnModel model(spec, box);
    const std::vector<nn::AxisRange> ranges{{0.0, 10.0}, {0.0, 5.0}};
    ConstraintFields c(nn::StandaloneNetwork({2, {}, {1, 6, "tanh"}}, ranges, 1),
                       nn::StandaloneNetwork({2, {}, {1, 6, "tanh"}}, ranges, 2), 0.3);
    c.freeze();
    const auto p = scratch("ckpt.bin");
    io::save_checkpoint(p, model, c, 123, "adam");
    const auto back = io::load_checkpoint(p);
    EXPECT_EQ(back.epoch, 123);
    EXPECT_EQ(back.stage, "adam");
    EXPECT_EQ(back.model.params(), model.params());
    EXPECT_EQ(back.constraints.checksum(), c.checksum());
    EXPECT_TRUE(back.constraints.frozen());
    EXPECT_EQ(back.constraints.m_scale(), 0.3);
    EXPECT_EQ(back.model.box().z.lo, -20.0);
    EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST(TrainLog, WriteAndReadBack) {
    const auto p = scratch("log.tsv");
    EpochRecord a{0, "adam", {1.0, 2.0}, {0.5, 1.5}, 3.5, 1e-3, 1, 10};
    EpochRecord b{1, "lbfgs", {0.1, 0.2}, {0.5, 1.5}, 0.35, 1e-4, 2, 20};
    {
        io::TrainLog log(p, {"lap", "kin"});
        log.append(a);
        log.append(b);
    }
    const auto t = io::read_log(p);
    EXPECT_EQ(t.components, (std::vector<std::string>{"lap", "kin"}));
    ASSERT_EQ(t.records.size(), 2u);
    EXPECT_EQ(t.records[1].stage, "lbfgs");
    EXPECT_EQ(t.records[1].losses, b.losses);
    EXPECT_EQ(t.records[0].lambdas, a.lambdas);
    EXPECT_EQ(t.records[1].total, 0.35);
    EXPECT_EQ(t.records[1].segments, 2);
    EXPECT_EQ(t.records[1].active_interior, 20);
}

TEST(RunConfig, ParsesAndRejectsUnknownKeys) {
    io::json j = minimal_config();
    const io::RunConfig rc = io::parse_run_config(j);
    EXPECT_EQ(rc.train.scenario, Scenario::assimilation);
    EXPECT_EQ(rc.train.model.eta.mlp.width, 64);
    EXPECT_EQ(rc.train.counts.interior, 200);
    ASSERT_TRUE(rc.sea.has_value());
    EXPECT_NEAR(rc.sea->components[0].omega, 2 * kPi / 7.0, 1e-15);
    const ObservationSet obs = io::make_observations(rc);
    EXPECT_EQ(obs.kind, ObservationKind::buoys);
    EXPECT_EQ(obs.size(), 3 * 21);

    io::json bad = minimal_config();
    bad["adam"] = {{"learning_rat", 1e-3}};
    EXPECT_THROW(io::parse_run_config(bad), ConfigError);
    bad = minimal_config();
    bad["extra"] = 1;
    EXPECT_THROW(io::parse_run_config(bad), ConfigError);
    bad = minimal_config();
    bad["domain"].erase("depth");
    EXPECT_THROW(io::parse_run_config(bad), ConfigError);
    bad = minimal_config();
    bad["scenario"] = "forecast";
    EXPECT_THROW(io::parse_run_config(bad), ConfigError);
    bad = minimal_config();
    bad["schedule"] = {{"step", 0.025}};
    bad["scenario"] = "predict";
    bad["region"] = {{"c_g_high", 3.0}, {"c_g_low", 1.0}, {"x_offset_left", 0.0}, {"x_extent_right", 4.0}, {"t_max", 2.145}};
    EXPECT_THROW(io::parse_run_config(bad), ConfigError);
}

TEST(RunConfig, SeedOverridesEveryStream) {
    io::RunConfig rc = io::parse_run_config(minimal_config());
    io::apply_seed(rc, 100);
    EXPECT_EQ(rc.train.model.seed, 100u);
    EXPECT_EQ(rc.train.seed, 101u);
    EXPECT_EQ(rc.train.balancer.seed, 102u);
    EXPECT_EQ(rc.train.constraints.seed, 103u);
}

TEST(Paths, OutputDirectoryFromEnvironment) {
    ::setenv("WAVEPINN_OUTPUT_DIR", "/tmp/wp_out", 1);
    EXPECT_EQ(io::output_path("a/b.json"), fs::path("/tmp/wp_out/a/b.json"));
    EXPECT_EQ(io::output_path("/abs.json"), fs::path("/abs.json"));
    ::unsetenv("WAVEPINN_OUTPUT_DIR");
    EXPECT_EQ(io::output_path("a.json"), fs::path("a.json"));
}
