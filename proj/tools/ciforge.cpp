// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// CLI simulator. Exit codes: 0 success, 2 configuration error, 3 numerical
// failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "ciforge/sim.hpp"
#include "ciforge/version.hpp"

namespace {

using namespace ciforge;

struct CommonOpts {
    std::string config;
    std::string out = "out";
    long seed_override = -1;
};

sim::ExperimentConfig load(const CommonOpts& opts, sim::Experiment experiment) {
    auto cfg = sim::load_config(opts.config);
    cfg.experiment = experiment;
    if (opts.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
    return cfg;
}

std::filesystem::path out_dir(const CommonOpts& opts) {
    if (const char* env = std::getenv("CIFORGE_OUT")) return env;
    return opts.out;
}

void add_common(CLI::App* app, CommonOpts& opts) {
    app->add_option("--config", opts.config, "experiment config file")->required();
    app->add_option("--seed", opts.seed_override, "override the config seed");
    app->add_option("--out", opts.out, "output directory (default: out)");
}

void print_records_hint(const std::filesystem::path& dir) {
    std::printf("wrote %s\n", dir.string().c_str());
}

int run_sim(sim::Experiment experiment, const CommonOpts& opts) {
    const auto cfg = load(opts, experiment);
    const auto dir = out_dir(opts);
    switch (experiment) {
        case sim::Experiment::Ser: {
            const auto r = sim::run_ser(cfg);
            sim::emit_ser(r.records, dir);
            sim::write_manifest(r.manifest, dir);
            break;
        }
        case sim::Experiment::CcdfAlpha: {
            const auto r = sim::run_ccdf_alpha(cfg);
            sim::emit_ccdf(r.rows, dir, "ccdf_alpha");
            sim::write_manifest(r.manifest, dir);
            break;
        }
        case sim::Experiment::SignPred: {
            const auto r = sim::run_sign_pred(cfg);
            sim::emit_dh(r.dh_rows, dir);
            sim::emit_ccdf(r.alpha_rows, dir, "signpred_alpha");
            sim::write_manifest(r.manifest, dir);
            break;
        }
        case sim::Experiment::CsiSweep: {
            const auto r = sim::run_csi_sweep(cfg);
            sim::emit_csi(r.records, dir);
            sim::write_manifest(r.manifest, dir);
            break;
        }
        case sim::Experiment::Props: break; // handled by `analyze props`
    }
    print_records_hint(dir);
    return 0;
}

int run_props(const CommonOpts& opts) {
    const auto cfg = load(opts, sim::Experiment::Props);
    const auto r = sim::run_props(cfg);
    for (const auto& rec : r.records)
        std::printf("check=%s empirical=%.6g reference=%.6g samples=%ld stderr=%.3g pass=%d\n",
                    rec.check.c_str(), rec.empirical, rec.reference, rec.samples, rec.stderr_,
                    rec.pass ? 1 : 0);
    const auto dir = out_dir(opts);
    sim::emit_props(r.records, dir);
    sim::write_manifest(r.manifest, dir);
    print_records_hint(dir);
    return 0;
}

const char* kind_name(rbc::RealRegionKind k) {
    switch (k) {
        case rbc::RealRegionKind::Singleton: return "singleton";
        case rbc::RealRegionKind::HalfLineLower: return "half_line_lower";
        case rbc::RealRegionKind::HalfLineUpper: return "half_line_upper";
        case rbc::RealRegionKind::OutsidePair: return "outside_pair";
        case rbc::RealRegionKind::FullLine: return "full_line";
    }
    return "?";
}

int dump_constellation(const std::string& scheme_name, int M) {
    const auto scheme = rbc::scheme_from_name(scheme_name);
    const auto c = rbc::build(scheme, M);
    std::printf("scheme=%s M=%d d_min=%.12g E_s=%.12g\n", scheme_name.c_str(), c.M, c.d_min,
                c.E_s);
    for (int m = 0; m < c.M; ++m) {
        const auto& r = c.region(m);
        if (r.kind == rbc::ComplexRegion::Kind::PskCone) {
            std::printf("m=%d kind=psk_cone center_phase=%.12g half_angle=%.12g radius=%.12g\n",
                        m, r.center_phase, r.half_angle, r.radius);
        } else {
            std::printf("m=%d kind=product re=%s:%.12g im=%s:%.12g\n", m, kind_name(r.re.kind),
                        r.re.value, kind_name(r.im.kind), r.im.value);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"constructive-interference precoding simulator"};
    app.set_version_flag("--version", std::string(ciforge::kVersion));
    app.require_subcommand(1);

    auto* sim_cmd = app.add_subcommand("sim", "run a Monte Carlo experiment");
    sim_cmd->require_subcommand(1);
    CommonOpts ser_opts, ccdf_opts, sign_opts, csi_opts, props_opts;
    auto* ser = sim_cmd->add_subcommand("ser", "symbol error rate vs transmit SNR");
    add_common(ser, ser_opts);
    auto* ccdf = sim_cmd->add_subcommand("ccdf", "CCDF of alpha^2");
    add_common(ccdf, ccdf_opts);
    auto* signpred = sim_cmd->add_subcommand("signpred", "sign prediction accuracy");
    add_common(signpred, sign_opts);
    auto* csi = sim_cmd->add_subcommand("csi", "SER vs channel estimation error");
    add_common(csi, csi_opts);

    auto* analyze = app.add_subcommand("analyze", "analytical checks");
    analyze->require_subcommand(1);
    auto* props = analyze->add_subcommand("props", "verify the analytical claims numerically");
    add_common(props, props_opts);

    auto* dump = app.add_subcommand("dump", "inspect built objects");
    auto* dump_const = dump->add_subcommand("constellation", "print region descriptions");
    std::string scheme;
    int M = 16;
    dump_const->add_option("--scheme", scheme, "qam|psk|meqam|rmqam")->required();
    dump_const->add_option("--M", M, "constellation size")->required();

    try {
        app.parse(argc, argv);
        if (ser->parsed()) return run_sim(ciforge::sim::Experiment::Ser, ser_opts);
        if (ccdf->parsed()) return run_sim(ciforge::sim::Experiment::CcdfAlpha, ccdf_opts);
        if (signpred->parsed()) return run_sim(ciforge::sim::Experiment::SignPred, sign_opts);
        if (csi->parsed()) return run_sim(ciforge::sim::Experiment::CsiSweep, csi_opts);
        if (props->parsed()) return run_props(props_opts);
        if (dump_const->parsed()) return dump_constellation(scheme, M);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ciforge::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
