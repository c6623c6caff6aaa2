// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "ciforge/analysis.hpp"
#include "ciforge/channel.hpp"
#include "ciforge/cip.hpp"
#include "ciforge/prng.hpp"
#include "ciforge/rbc.hpp"

using namespace ciforge;

namespace {

channel::Workspace identity_workspace(int K) {
    return channel::make_workspace(channel::ComplexChannel::Identity(K, K));
}

bool outcome_feasible(const rbc::RbcConstellation& c, const cip::PrecodeOutcome& o,
                      const std::vector<int>& m) {
    for (size_t k = 0; k < m.size(); ++k)
        if (!c.region(m[k]).contains(o.s(static_cast<Eigen::Index>(k)), 1e-8)) return false;
    return true;
}

} // namespace

TEST_CASE("assemble: ME-QAM partitions (K=2)") {
    const auto c = rbc::build_meqam(16);
    const auto ws = identity_workspace(2);
    // m=5 -> (1,1) both singletons; m=15 -> (3,3) both sign-flexible.
    const auto inst = cip::assemble(c, ws.gram, {5, 15});
    CHECK(inst.sf_indices == std::vector<int>{1, 3}); // real idx 1, imag idx 3 (0-based)
    CHECK(inst.fixed_indices.size() == 2);
    CHECK(inst.sf_bound == 4.0);
    // Singleton value for l = 1 is 2*1-4+2 = 0.
    CHECK(inst.fixed_values[0] == 0.0);
    CHECK(inst.fixed_values[1] == 0.0);
}

TEST_CASE("assemble: QAM corner and RM-QAM end") {
    const auto qam = rbc::build_qam_ci(16);
    const auto ws1 = identity_workspace(1);
    const auto qi = cip::assemble(qam, ws1.gram, {0});
    CHECK(qi.lower_indices == std::vector<int>{0, 1});
    CHECK(qi.fixed_indices.empty());
    CHECK(qi.end_bound == 3.0);

    const auto rm = rbc::build_rmqam(16);
    const auto ri = cip::assemble(rm, ws1.gram, {0});
    CHECK(ri.theta_indices == std::vector<int>{0});
    CHECK(ri.theta_signs == std::vector<int>{1});
    CHECK(ri.theta_bound == 6.0);
    CHECK(ri.free_indices == std::vector<int>{1});

    const auto ri3 = cip::assemble(rm, ws1.gram, {3});
    CHECK(ri3.theta_signs == std::vector<int>{-1});
}

TEST_CASE("precode_zf nominal points and cross-checks") {
    const auto qam = rbc::build_qam_ci(16);
    const auto ws = identity_workspace(1);
    // m=5 -> (1,1) -> point (-1,-1), alpha2 = 2.
    const auto zf = cip::precode_zf(qam, ws.H, {5});
    CHECK(zf.s(0) == std::complex<double>(-1.0, -1.0));
    CHECK(zf.alpha2 == doctest::Approx(2.0).epsilon(1e-12));

    Prng rng(3);
    const auto H = channel::sample_channel(4, 6, rng);
    const auto wsr = channel::make_workspace(H);
    std::vector<int> m = {3, 7, 12, 0};
    const auto o = cip::precode_zf(qam, wsr.H, m);
    Eigen::VectorXcd s(4);
    for (int k = 0; k < 4; ++k) s(k) = qam.region(m[static_cast<size_t>(k)]).min_energy_point();
    CHECK(std::abs(o.alpha2 - channel::zf_precode(H, s).alpha2) / o.alpha2 < 1e-9);

    // CIP minimizes over a superset of the nominal point.
    const auto lcqp = cip::precode_lcqp(qam, wsr.gram, m);
    CHECK(lcqp.alpha2 <= o.alpha2 + 1e-9);
    CHECK(outcome_feasible(qam, lcqp, m));
}

TEST_CASE("precode_lcqp: identity channel corner optimum") {
    const auto qam = rbc::build_qam_ci(16);
    const auto ws = identity_workspace(1);
    // Corner message 0: both coordinates end at (-3,-3), alpha2 = 18.
    const auto o = cip::precode_lcqp(qam, ws.gram, {0});
    CHECK(o.alpha2 == doctest::Approx(18.0).epsilon(1e-9));
    CHECK(o.s(0).real() == doctest::Approx(-3.0));
    CHECK(o.s(0).imag() == doctest::Approx(-3.0));
}

TEST_CASE("precode_lcqp: all-interior messages are fully determined") {
    const auto qam = rbc::build_qam_ci(16);
    Prng rng(8);
    const auto ws = channel::make_workspace(channel::sample_channel(3, 5, rng));
    const std::vector<int> m = {5, 6, 9}; // (1,1), (2,1), (1,2): all interior
    const auto o = cip::precode_lcqp(qam, ws.gram, m);
    const auto zf = cip::precode_zf(qam, ws.H, m);
    CHECK(std::abs(o.alpha2 - zf.alpha2) < 1e-9 * zf.alpha2);
    const auto fs = cip::precode_fsqp(qam, ws, m);
    CHECK(std::abs(fs.alpha2 - zf.alpha2) < 1e-9 * zf.alpha2);
}

TEST_CASE("PSK LCQP stays in the cones and beats ZF") {
    const auto psk = rbc::build_psk_ci(8);
    Prng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ws = channel::make_workspace(channel::sample_channel(4, 4, rng));
        const auto m = analysis::sample_messages(4, 8, rng);
        const auto o = cip::precode_lcqp(psk, ws.gram, m);
        CHECK(outcome_feasible(psk, o, m));
        CHECK(o.alpha2 <= cip::precode_zf(psk, ws.H, m).alpha2 + 1e-9);
        for (size_t k = 0; k < m.size(); ++k)
            CHECK(psk.detect(o.s(static_cast<Eigen::Index>(k))) == m[k]);
    }
}

TEST_CASE("predict_signs: empty SF set and identity channel") {
    const auto me = rbc::build_meqam(16);
    const auto ws = identity_workspace(2);
    const auto inst_in = cip::assemble(me, ws.gram, {5, 5});
    CHECK(cip::predict_signs(inst_in, ws.Hd).psi.empty());

    // With no sign-flexible entries PS-QP is exactly the equality solve.
    const auto ps = cip::precode_psqp(me, ws, {5, 5});
    std::vector<std::pair<int, double>> fixed;
    for (size_t j = 0; j < inst_in.fixed_indices.size(); ++j)
        fixed.emplace_back(inst_in.fixed_indices[j], inst_in.fixed_values[j]);
    CHECK(ps.alpha2 == doctest::Approx(qp::solve_fixed(inst_in.Q, fixed).objective));

    // Identity channel decouples; relaxed values at SF indices are zero, so
    // the zero convention maps to +1.
    const auto inst = cip::assemble(me, ws.gram, {5, 15});
    const auto psi = cip::predict_signs(inst, ws.Hd);
    REQUIRE(psi.psi.size() == 2);
    CHECK(psi.psi[0] == 1);
    CHECK(psi.psi[1] == 1);
}

TEST_CASE("dominance chain alpha2(FS) <= alpha2(PS) <= alpha2(ZF)") {
    Prng rng(21);
    for (const auto scheme : {rbc::Scheme::MeQam, rbc::Scheme::RmQam}) {
        const auto c = rbc::build(scheme, 16);
        for (int rep = 0; rep < 30; ++rep) {
            const auto ws = channel::make_workspace(channel::sample_channel(4, 4, rng));
            const auto m = analysis::sample_messages(4, 16, rng);
            const auto fs = cip::precode_fsqp(c, ws, m);
            const auto ps = cip::precode_psqp(c, ws, m);
            const auto zf = cip::precode_zf(c, ws.H, m);
            CHECK(fs.alpha2 <= ps.alpha2 + 1e-9);
            CHECK(ps.alpha2 <= zf.alpha2 + 1e-9);
            CHECK(outcome_feasible(c, fs, m));
            CHECK(outcome_feasible(c, ps, m));
            // Noise-free round trip.
            for (size_t k = 0; k < m.size(); ++k) {
                CHECK(c.detect(fs.s(static_cast<Eigen::Index>(k))) == m[k]);
                CHECK(c.detect(ps.s(static_cast<Eigen::Index>(k))) == m[k]);
            }
        }
    }
}

TEST_CASE("FS-QP enumerates every sign pattern and keeps the best") {
    const auto me = rbc::build_meqam(16);
    Prng rng(31);
    const auto ws = channel::make_workspace(channel::sample_channel(2, 3, rng));
    const std::vector<int> m = {15, 5}; // two SF coords from user 0
    const auto inst = cip::assemble(me, ws.gram, m);
    REQUIRE(inst.sf_indices.size() == 2);
    const auto fs = cip::precode_fsqp(me, ws, m);
    for (int a = -1; a <= 1; a += 2)
        for (int b = -1; b <= 1; b += 2) {
            cip::SignPattern psi;
            psi.psi = {a, b};
            const auto o = cip::solve_with_signs(inst, psi, cip::Strategy::FsQp);
            CHECK(fs.alpha2 <= o.alpha2 + 1e-9);
        }
    CHECK(fs.qp_solves == 4);
}

TEST_CASE("FS-QP equals PS-QP objective in a healthy fraction of instances") {
    const auto me = rbc::build_meqam(16);
    Prng rng(44);
    int equal = 0, total = 0;
    while (total < 60) {
        const auto ws = channel::make_workspace(channel::sample_channel(4, 4, rng));
        const auto m = analysis::sample_messages(4, 16, rng);
        const auto inst = cip::assemble(me, ws.gram, m);
        if (inst.sf_indices.empty()) continue;
        const auto fs = cip::precode_fsqp(me, ws, m);
        const auto ps = cip::precode_psqp(me, ws, m);
        equal += std::abs(fs.alpha2 - ps.alpha2) <= 1e-9 * std::max(1.0, fs.alpha2);
        ++total;
    }
    CHECK(equal >= static_cast<int>(0.6 * total));
}

TEST_CASE("FS-QP cap raises SizeError") {
    const auto me = rbc::build_meqam(16);
    Prng rng(50);
    const auto ws = channel::make_workspace(channel::sample_channel(2, 2, rng));
    const std::vector<int> m = {15, 15}; // 4 SF entries
    CHECK_THROWS_AS(cip::precode_fsqp(me, ws, m, 3), SizeError);
}

TEST_CASE("hamming distance") {
    cip::SignPattern a, b;
    a.psi = {1, -1};
    b.psi = {1, -1};
    CHECK(cip::hamming(a, b) == 0);
    b.psi = {-1, 1};
    CHECK(cip::hamming(a, b) == 2);
    b.psi = {1};
    CHECK_THROWS_AS(cip::hamming(a, b), ConfigError);
}

TEST_CASE("relaxed-objective phase symmetry (flip one real sign)") {
    // Rotating row k of H by the unit phase that flips Re(s'_k) leaves the
    // relaxed objective unchanged; this is the mechanism behind the sign
    // symmetry of the constraint-free solution.
    const auto qam = rbc::build_qam_ci(16);
    Prng rng(61);
    for (int rep = 0; rep < 25; ++rep) {
        const auto H = channel::sample_channel(4, 4, rng);
        const auto ws = channel::make_workspace(H);
        const auto m = analysis::sample_messages(4, 16, rng);
        const auto inst = cip::assemble(qam, ws.gram, m);
        if (inst.lower_indices.empty() && inst.upper_indices.empty()) continue;
        const auto rel = analysis::relaxed_solve(inst);
        const auto sp = channel::complex_unstack(rel.s_prime);
        const int k = static_cast<int>(rng.next_below(4));
        if (std::abs(sp(k)) < 1e-9) continue;
        const std::complex<double> d = -std::conj(sp(k)) / sp(k);

        channel::ComplexChannel H2 = H;
        H2.row(k) *= d;
        const auto ws2 = channel::make_workspace(H2);
        Eigen::VectorXcd sp2 = sp;
        sp2(k) *= d;
        const Eigen::VectorXd sd = channel::real_stack(sp2);
        const double obj2 = sd.dot(ws2.gram.Q * sd);
        CHECK(std::abs(obj2 - rel.alpha_prime2) <= 1e-9 * std::max(1.0, rel.alpha_prime2));
        // The transported solution flips Re(s'_k) and keeps Im(s'_k).
        CHECK(sp2(k).real() == doctest::Approx(-sp(k).real()).epsilon(1e-9));
        CHECK(sp2(k).imag() == doctest::Approx(sp(k).imag()).epsilon(1e-9));
    }
}

TEST_CASE("predict_signs with every coordinate sign-flexible") {
    const auto me = rbc::build_meqam(16);
    Prng rng(73);
    const auto ws = channel::make_workspace(channel::sample_channel(1, 2, rng));
    const auto inst = cip::assemble(me, ws.gram, {15});
    const auto psi = cip::predict_signs(inst, ws.Hd);
    CHECK(psi.psi == std::vector<int>{1, 1});
    const auto ps = cip::solve_with_signs(inst, psi, cip::Strategy::PsQp);
    CHECK(me.detect(ps.s(0)) == 15);
}
