// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ciforge/sim.hpp"

using namespace ciforge;
namespace fs = std::filesystem;

namespace {

sim::ExperimentConfig small_ser_config() {
    sim::ExperimentConfig cfg;
    cfg.experiment = sim::Experiment::Ser;
    cfg.K = 4;
    cfg.Nt = 4;
    cfg.M = 16;
    cfg.curves = {{rbc::Scheme::QamCi, sim::Strategy::Lcqp},
                  {rbc::Scheme::RmQam, sim::Strategy::PsQp},
                  {rbc::Scheme::QamCi, sim::Strategy::Zf}};
    cfg.snr_grid_db = {18.0, 24.0};
    cfg.trials = 300;
    cfg.target_errors = 50;
    cfg.seed = 42;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / "ciforge_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("config parsing: keys, ranges, curves, errors") {
    const auto dir = temp_dir("config");
    const auto path = dir / "c.cfg";
    {
        std::ofstream out(path);
        out << "# comment line\n"
               "experiment = ser\n"
               "K = 4\n"
               "Nt = 8\n"
               "M = 16\n"
               "curves = qam, meqam, rmqam:fsqp, zf\n"
               "snr_db = 10:2:16\n"
               "trials = 100\n"
               "seed = 7\n";
    }
    const auto cfg = sim::load_config(path.string());
    CHECK(cfg.K == 4);
    CHECK(cfg.Nt == 8);
    CHECK(cfg.curves.size() == 4);
    CHECK(cfg.curves[0].strategy == sim::Strategy::Lcqp);
    CHECK(cfg.curves[1].strategy == sim::Strategy::PsQp);
    CHECK(cfg.curves[2].strategy == sim::Strategy::FsQp);
    CHECK(cfg.curves[3].strategy == sim::Strategy::Zf);
    CHECK(cfg.snr_grid_db == std::vector<double>{10, 12, 14, 16});
    cfg.validate();

    {
        std::ofstream out(path);
        out << "bogus_key = 1\n";
    }
    CHECK_THROWS_AS(sim::load_config(path.string()), ConfigError);
    {
        std::ofstream out(path);
        out << "K = 4\nNt = 2\nM = 16\ncurves = qam\nsnr_db = 10\ntrials = 5\n";
    }
    CHECK_THROWS_AS(sim::load_config(path.string()).validate(), ConfigError);
    CHECK_THROWS_AS(sim::load_config((dir / "missing.cfg").string()), ConfigError);

    // Strategy/scheme mismatches are rejected.
    {
        std::ofstream out(path);
        out << "K=2\nNt=2\nM=16\ncurves = meqam:lcqp\nsnr_db=10\ntrials=5\n";
    }
    CHECK_THROWS_AS(sim::load_config(path.string()), ConfigError);
}

TEST_CASE("run_ser: determinism and worker independence") {
    auto cfg = small_ser_config();
    cfg.workers = 1;
    const auto a = sim::run_ser(cfg);
    cfg.workers = 2;
    const auto b = sim::run_ser(cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].symbol_errors == b.records[i].symbol_errors);
        CHECK(a.records[i].symbols == b.records[i].symbols);
        CHECK(a.records[i].ser == b.records[i].ser);
    }

    const auto d1 = temp_dir("ser1"), d2 = temp_dir("ser2");
    sim::emit_ser(a.records, d1);
    sim::emit_ser(b.records, d2);
    CHECK(slurp(d1 / "ser.csv") == slurp(d2 / "ser.csv"));
    CHECK(slurp(d1 / "ser.json") == slurp(d2 / "ser.json"));
}

TEST_CASE("run_ser: noise-free SER is zero and CSV schema matches") {
    auto cfg = small_ser_config();
    cfg.snr_grid_db = {200.0}; // effectively noise free
    cfg.trials = 50;
    const auto r = sim::run_ser(cfg);
    for (const auto& rec : r.records) CHECK(rec.symbol_errors == 0);

    const auto dir = temp_dir("schema");
    sim::emit_ser(r.records, dir);
    const auto csv = slurp(dir / "ser.csv");
    CHECK(csv.rfind("scheme,strategy,snr_db,symbol_errors,symbols,ser,stderr\n", 0) == 0);
}

TEST_CASE("records round-trip through the JSON mirror") {
    auto cfg = small_ser_config();
    cfg.trials = 60;
    const auto r = sim::run_ser(cfg);
    const auto dir = temp_dir("roundtrip");
    sim::emit_ser(r.records, dir);
    const auto j = nlohmann::json::parse(slurp(dir / "ser.json"));
    const auto& records = j.at("records");
    REQUIRE(records.size() == r.records.size());
    for (size_t i = 0; i < r.records.size(); ++i) {
        CHECK(records[i].at("scheme").get<std::string>() == r.records[i].scheme);
        CHECK(records[i].at("ser").get<double>() == r.records[i].ser);
        CHECK(records[i].at("stderr").get<double>() == r.records[i].stderr_);
        CHECK(records[i].at("symbols").get<long>() == r.records[i].symbols);
    }
}

TEST_CASE("emit refuses empty record lists and leaves no file behind") {
    const auto dir = temp_dir("empty");
    CHECK_THROWS_AS(sim::emit_ser({}, dir), Error);
    CHECK(!fs::exists(dir / "ser.csv"));
}

TEST_CASE("run_ccdf_alpha: tail limits and scheme ordering") {
    sim::ExperimentConfig cfg;
    cfg.experiment = sim::Experiment::CcdfAlpha;
    cfg.K = 8;
    cfg.Nt = 8;
    cfg.M = 16;
    cfg.curves = {{rbc::Scheme::QamCi, sim::Strategy::Lcqp},
                  {rbc::Scheme::RmQam, sim::Strategy::PsQp}};
    cfg.trials = 400;
    cfg.seed = 3;
    const auto r = sim::run_ccdf_alpha(cfg);
    REQUIRE(r.curves.size() == 2);
    CHECK(r.curves[0].alpha2_db.size() == 400);

    // CCDF rows: nonincreasing in alpha2_db, 1 at the padded low end, 0 at
    // the padded high end.
    for (const auto& curve : {std::string("qam"), std::string("rmqam")}) {
        double prev = 1.1;
        bool first = true;
        double last = -1.0;
        for (const auto& row : r.rows) {
            if (row.scheme != curve) continue;
            if (first) {
                CHECK(row.ccdf == 1.0);
                first = false;
            }
            CHECK(row.ccdf <= prev + 1e-12);
            prev = row.ccdf;
            last = row.ccdf;
        }
        CHECK(last == 0.0);
    }

    // RM-QAM shifts alpha2 down relative to QAM at the median.
    const double q_qam = sim::tail_quantile(r.curves[0].alpha2_db, 0.5);
    const double q_rm = sim::tail_quantile(r.curves[1].alpha2_db, 0.5);
    CHECK(q_rm < q_qam);
}

TEST_CASE("run_sign_pred on a small system") {
    sim::ExperimentConfig cfg;
    cfg.experiment = sim::Experiment::SignPred;
    cfg.K = 4;
    cfg.Nt = 4;
    cfg.M = 16;
    cfg.curves = {{rbc::Scheme::RmQam, sim::Strategy::PsQp}};
    cfg.trials = 300;
    cfg.seed = 11;
    const auto r = sim::run_sign_pred(cfg);
    CHECK(r.d_h.size() + static_cast<size_t>(r.manifest.excluded) == 300);
    // PS-QP can never beat FS-QP on a realization.
    for (size_t i = 0; i < r.d_h.size(); ++i)
        CHECK(r.alpha2_db_ps[i] >= r.alpha2_db_fs[i] - 1e-9);
    // d_H = 0 realizations must have identical objectives.
    for (size_t i = 0; i < r.d_h.size(); ++i)
        if (r.d_h[i] == 0) CHECK(r.alpha2_db_ps[i] == doctest::Approx(r.alpha2_db_fs[i]));
    REQUIRE(!r.dh_rows.empty());
    CHECK(r.dh_rows[0].d_h == 0);
    CHECK(r.dh_rows[0].pmf > 0.3); // prediction is right much of the time
}

TEST_CASE("run_csi_sweep: sigma_e2 = 0 reproduces run_ser at the same rho") {
    sim::ExperimentConfig cfg;
    cfg.experiment = sim::Experiment::CsiSweep;
    cfg.K = 4;
    cfg.Nt = 4;
    cfg.M = 16;
    cfg.curves = {{rbc::Scheme::QamCi, sim::Strategy::Lcqp},
                  {rbc::Scheme::RmQam, sim::Strategy::PsQp}};
    cfg.snr_grid_db = {22.0};
    cfg.sigma_e2_grid = {0.0, 1e-3};
    cfg.trials = 200;
    cfg.target_errors = 40;
    cfg.seed = 5;
    const auto sweep = sim::run_csi_sweep(cfg);

    auto ser_cfg = cfg;
    ser_cfg.experiment = sim::Experiment::Ser;
    ser_cfg.sigma_e2_grid.clear();
    const auto base = sim::run_ser(ser_cfg);

    REQUIRE(sweep.records.size() == 4);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(sweep.records[i].symbol_errors == base.records[i].symbol_errors);
        CHECK(sweep.records[i].symbols == base.records[i].symbols);
    }
    // Noisier CSI cannot help (within sampling noise of this tiny run).
    for (size_t i = 0; i < 2; ++i)
        CHECK(sweep.records[i + 2].ser + 2.0 * sweep.records[i + 2].stderr_ >=
              sweep.records[i].ser - 2.0 * sweep.records[i].stderr_);
}

TEST_CASE("run_props emits one record per analytical check") {
    sim::ExperimentConfig cfg;
    cfg.experiment = sim::Experiment::Props;
    cfg.K = 4;
    cfg.Nt = 4;
    cfg.M = 16;
    cfg.trials = 400;
    cfg.seed = 31;
    const auto r = sim::run_props(cfg);
    REQUIRE(r.records.size() == 4);
    CHECK(r.records[0].check == "prop1_relaxed_mean");
    CHECK(r.records[1].check == "prop2_alignment");
    CHECK(r.records[2].check == "prop3_alignment");
    CHECK(r.records[3].check == "prop4_delta_bound");
    CHECK(r.records[3].pass);
    const auto dir = temp_dir("props");
    sim::emit_props(r.records, dir);
    sim::write_manifest(r.manifest, dir);
    CHECK(fs::exists(dir / "props.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("tail_quantile") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(static_cast<double>(i));
    CHECK(sim::tail_quantile(v, 0.01) == 99.0);
    CHECK(sim::tail_quantile(v, 0.5) == 50.0);
    CHECK_THROWS_AS(sim::tail_quantile({}, 0.5), Error);
}
