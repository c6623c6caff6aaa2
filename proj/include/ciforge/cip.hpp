// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// Per-symbol-vector CIP problems in the real domain: assembly of index
// partitions from region kinds, and the ZF / LCQP / FS-QP / PS-QP solvers.
// PS-QP predicts the sign pattern of the sign-flexible entries in closed
// form from the row-subset pseudoinverse, then solves a single convex QP.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ciforge/channel.hpp"
#include "ciforge/errors.hpp"
#include "ciforge/qp.hpp"
#include "ciforge/rbc.hpp"

namespace ciforge::cip {

enum class Strategy { Zf, Lcqp, FsQp, PsQp };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Zf: return "zf";
        case Strategy::Lcqp: return "lcqp";
        case Strategy::FsQp: return "fsqp";
        case Strategy::PsQp: return "psqp";
    }
    return "?";
}

struct SignPattern {
    std::vector<int> psi; // entries in {-1,+1}, aligned with sf_indices
};

// Real-domain problem data for one symbol vector. Coordinates 0..K-1 are
// real parts, K..2K-1 imaginary parts. Unlisted coordinates are free.
struct CipInstance {
    rbc::Scheme scheme = rbc::Scheme::QamCi;
    int K = 0, L = 0;
    Eigen::MatrixXd Q; // 2K x 2K gram inverse
    std::vector<int> messages;

    std::vector<int> fixed_indices; // equality-pinned coordinates
    std::vector<double> fixed_values;

    std::vector<int> sf_indices; // |s_i| >= sf_bound, sign chosen by psi
    double sf_bound = 0.0;

    std::vector<int> theta_indices; // fixed-sign one-sided bounds (RM-QAM M4)
    std::vector<int> theta_signs;
    double theta_bound = 0.0;

    std::vector<int> free_indices; // unconstrained (RM-QAM imaginary parts)

    std::vector<int> lower_indices; // QAM ends: s_i <= -end_bound
    std::vector<int> upper_indices; // QAM ends: s_i >=  end_bound
    double end_bound = 0.0;

    // PSK: per-user message phase; two cone rows per user.
    std::vector<double> psk_phases;
    double psk_half_angle = 0.0, psk_radius = 0.0;

    int n() const { return 2 * K; }
};

inline CipInstance assemble(const rbc::RbcConstellation& c, const channel::GramInverse& gram,
                            const std::vector<int>& m) {
    const int K = static_cast<int>(m.size());
    if (gram.Q.rows() != 2 * K) throw ConfigError("assemble: Q and message sizes disagree");
    CipInstance inst;
    inst.scheme = c.scheme;
    inst.K = K;
    inst.L = c.L;
    inst.Q = gram.Q;
    inst.messages = m;

    auto pin = [&inst](int idx, double v) {
        inst.fixed_indices.push_back(idx);
        inst.fixed_values.push_back(v);
    };

    switch (c.scheme) {
        case rbc::Scheme::QamCi: {
            inst.end_bound = c.L - 1.0;
            for (int k = 0; k < K; ++k) {
                const auto [lre, lim] = rbc::split_message(m[k], c.L);
                const int lv[2] = {lre, lim};
                for (int axis = 0; axis < 2; ++axis) {
                    const int idx = k + axis * K;
                    if (lv[axis] == 0)
                        inst.lower_indices.push_back(idx);
                    else if (lv[axis] == c.L - 1)
                        inst.upper_indices.push_back(idx);
                    else
                        pin(idx, 2.0 * lv[axis] - c.L + 1.0);
                }
            }
            break;
        }
        case rbc::Scheme::MeQam: {
            inst.sf_bound = static_cast<double>(c.L);
            for (int k = 0; k < K; ++k) {
                const auto [lre, lim] = rbc::split_message(m[k], c.L);
                const int lv[2] = {lre, lim};
                for (int axis = 0; axis < 2; ++axis) {
                    const int idx = k + axis * K;
                    if (lv[axis] == c.L - 1)
                        inst.sf_indices.push_back(idx);
                    else
                        pin(idx, 2.0 * lv[axis] - c.L + 2.0);
                }
            }
            break;
        }
        case rbc::Scheme::RmQam: {
            const rbc::RmLayout lay{c.L};
            inst.sf_bound = static_cast<double>(c.L);
            inst.theta_bound = 2.0 * c.L - 2.0;
            for (int k = 0; k < K; ++k) {
                const int mk = m[k];
                if (lay.is_m1(mk)) {
                    pin(k, lay.m1_re_value(mk));
                    pin(k + K, lay.m1_im_value(mk));
                } else if (lay.is_m2(mk)) {
                    pin(k, lay.m2_re_value(mk));
                    inst.sf_indices.push_back(k + K);
                } else if (lay.is_m3(mk)) {
                    pin(k, lay.m3_value(mk));
                    inst.free_indices.push_back(k + K);
                } else { // M4
                    inst.theta_indices.push_back(k);
                    inst.theta_signs.push_back(mk == lay.m4_right() ? +1 : -1);
                    inst.free_indices.push_back(k + K);
                }
            }
            break;
        }
        case rbc::Scheme::PskCi: {
            inst.psk_half_angle = std::numbers::pi / c.M;
            inst.psk_radius = 1.0 / std::sin(inst.psk_half_angle);
            inst.psk_phases.reserve(static_cast<size_t>(K));
            for (int k = 0; k < K; ++k)
                inst.psk_phases.push_back(2.0 * std::numbers::pi * m[k] / c.M);
            break;
        }
    }
    return inst;
}

// Convex QP for a resolved sign pattern (psi may be null when no SF entries
// exist). Coordinates not mentioned by any constraint stay free.
inline qp::QpProblem lcqp_problem(const CipInstance& inst, const SignPattern* psi) {
    qp::QpProblem p;
    p.Q = inst.Q;
    const int n = inst.n();
    for (size_t j = 0; j < inst.fixed_indices.size(); ++j)
        p.equalities.emplace_back(inst.fixed_indices[j], inst.fixed_values[j]);

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> bounds;
    auto coord_row = [n](int idx, double sign) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
        r(idx) = sign;
        return r;
    };
    for (int i : inst.lower_indices) {
        rows.push_back(coord_row(i, -1.0)); // -s_i >= end_bound
        bounds.push_back(inst.end_bound);
    }
    for (int i : inst.upper_indices) {
        rows.push_back(coord_row(i, +1.0));
        bounds.push_back(inst.end_bound);
    }
    if (!inst.sf_indices.empty()) {
        if (psi == nullptr || psi->psi.size() != inst.sf_indices.size())
            throw ConfigError("sign pattern required for sign-flexible entries");
        for (size_t j = 0; j < inst.sf_indices.size(); ++j) {
            rows.push_back(coord_row(inst.sf_indices[j], static_cast<double>(psi->psi[j])));
            bounds.push_back(inst.sf_bound);
        }
    }
    for (size_t j = 0; j < inst.theta_indices.size(); ++j) {
        rows.push_back(coord_row(inst.theta_indices[j], static_cast<double>(inst.theta_signs[j])));
        bounds.push_back(inst.theta_bound);
    }
    // PSK cone: rotate user k's coordinate pair by the message phase; the
    // wedge membership splits into two half-plane rows.
    const double st = std::sin(inst.psk_half_angle), ct = std::cos(inst.psk_half_angle);
    for (size_t k = 0; k < inst.psk_phases.size(); ++k) {
        const double cp = std::cos(inst.psk_phases[k]), sp = std::sin(inst.psk_phases[k]);
        for (int s = -1; s <= 1; s += 2) {
            // st*Re(s~) + s*(-ct)*Im(s~) >= r*st with
            // Re(s~) = cp*x + sp*y, Im(s~) = -sp*x + cp*y.
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
            r(static_cast<int>(k)) = st * cp - s * ct * (-sp);
            r(static_cast<int>(k) + inst.K) = st * sp - s * ct * cp;
            rows.push_back(r);
            bounds.push_back(inst.psk_radius * st);
        }
    }

    p.A.resize(static_cast<Eigen::Index>(rows.size()), n);
    p.b.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        p.A.row(static_cast<Eigen::Index>(i)) = rows[i];
        p.b(static_cast<Eigen::Index>(i)) = bounds[i];
    }
    return p;
}

struct PrecodeOutcome {
    Eigen::VectorXcd s;
    double alpha2 = 0.0;
    SignPattern psi;
    int qp_solves = 0;
    int iterations = 0;
    Strategy strategy = Strategy::Lcqp;
};

// Zero forcing at the per-region minimum-energy (nominal) points.
inline PrecodeOutcome precode_zf(const rbc::RbcConstellation& c,
                                 const channel::ComplexChannel& H, const std::vector<int>& m) {
    PrecodeOutcome out;
    out.strategy = Strategy::Zf;
    out.s.resize(static_cast<Eigen::Index>(m.size()));
    for (size_t k = 0; k < m.size(); ++k) out.s(static_cast<Eigen::Index>(k)) = c.region(m[k]).min_energy_point();
    out.alpha2 = channel::zf_precode(H, out.s).alpha2;
    return out;
}

namespace detail {

inline PrecodeOutcome from_solution(const CipInstance& inst, const qp::QpSolution& sol,
                                    Strategy strategy) {
    PrecodeOutcome out;
    out.strategy = strategy;
    out.s = channel::complex_unstack(sol.x);
    out.alpha2 = sol.objective;
    out.qp_solves = 1;
    out.iterations = sol.iterations;
    return out;
}

} // namespace detail

// Convex LCQP for the fixed-sign schemes (QAM and PSK CI).
inline PrecodeOutcome precode_lcqp(const rbc::RbcConstellation& c,
                                   const channel::GramInverse& gram,
                                   const std::vector<int>& m) {
    if (c.scheme != rbc::Scheme::QamCi && c.scheme != rbc::Scheme::PskCi)
        throw ConfigError("precode_lcqp expects a fixed-sign scheme");
    const CipInstance inst = assemble(c, gram, m);
    const auto sol = qp::solve_qp(lcqp_problem(inst, nullptr));
    return detail::from_solution(inst, sol, Strategy::Lcqp);
}

// Closed-form sign prediction: psi_hat = sgn(Hd_SF Hd_F^+ s_F) where F is the
// fixed-sign set (RM-QAM M4 entries enter at their boundary theta*(2L-2)).
// Zeros map to +1.
inline SignPattern predict_signs(const CipInstance& inst, const channel::RealChannel& Hd) {
    SignPattern psi;
    if (inst.sf_indices.empty()) return psi;

    std::vector<std::pair<int, double>> fixed;
    fixed.reserve(inst.fixed_indices.size() + inst.theta_indices.size());
    for (size_t j = 0; j < inst.fixed_indices.size(); ++j)
        fixed.emplace_back(inst.fixed_indices[j], inst.fixed_values[j]);
    for (size_t j = 0; j < inst.theta_indices.size(); ++j)
        fixed.emplace_back(inst.theta_indices[j], inst.theta_signs[j] * inst.theta_bound);
    std::sort(fixed.begin(), fixed.end());

    if (fixed.empty()) {
        // Every coordinate is sign-flexible; the relaxed solution is zero and
        // the zero convention picks +1 everywhere.
        psi.psi.assign(inst.sf_indices.size(), +1);
        return psi;
    }

    std::vector<int> iF(fixed.size());
    Eigen::VectorXd sF(static_cast<Eigen::Index>(fixed.size()));
    for (size_t j = 0; j < fixed.size(); ++j) {
        iF[j] = fixed[j].first;
        sF(static_cast<Eigen::Index>(j)) = fixed[j].second;
    }

    channel::GramInverse gram{inst.Q};
    const Eigen::MatrixXd pinv = channel::subrow_pseudoinverse(gram, Hd, iF);
    const Eigen::VectorXd relaxed = Hd(inst.sf_indices, Eigen::all) * (pinv * sF);
    psi.psi.resize(inst.sf_indices.size());
    for (size_t j = 0; j < inst.sf_indices.size(); ++j)
        psi.psi[j] = relaxed(static_cast<Eigen::Index>(j)) < 0.0 ? -1 : +1;
    return psi;
}

inline PrecodeOutcome solve_with_signs(const CipInstance& inst, const SignPattern& psi,
                                       Strategy strategy) {
    const auto sol = qp::solve_qp(lcqp_problem(inst, &psi));
    PrecodeOutcome out = detail::from_solution(inst, sol, strategy);
    out.psi = psi;
    return out;
}

// Algorithm: predict the sign pattern, substitute, solve one LCQP.
inline PrecodeOutcome precode_psqp(const rbc::RbcConstellation& c, const channel::Workspace& ws,
                                   const std::vector<int>& m) {
    if (c.scheme != rbc::Scheme::MeQam && c.scheme != rbc::Scheme::RmQam)
        throw ConfigError("precode_psqp expects a sign-flexible scheme");
    const CipInstance inst = assemble(c, ws.gram, m);
    const SignPattern psi = predict_signs(inst, ws.Hd);
    return solve_with_signs(inst, psi, Strategy::PsQp);
}

// Exhaustive enumeration over sign patterns; globally optimal for the MIQP.
// Patterns are scanned in lexicographic order (-1 before +1) so objective
// ties keep the lexicographically smallest psi.
inline PrecodeOutcome precode_fsqp_instance(const CipInstance& inst, int cap = 16) {
    const int nsf = static_cast<int>(inst.sf_indices.size());
    if (nsf > cap) throw SizeError("FS-QP sign enumeration exceeds cap");
    if (nsf == 0) {
        const auto sol = qp::solve_qp(lcqp_problem(inst, nullptr));
        return detail::from_solution(inst, sol, Strategy::FsQp);
    }
    PrecodeOutcome best;
    bool found = false;
    int solves = 0, iters = 0;
    for (std::uint32_t bits = 0; bits < (1u << nsf); ++bits) {
        SignPattern psi;
        psi.psi.resize(static_cast<size_t>(nsf));
        for (int j = 0; j < nsf; ++j)
            psi.psi[static_cast<size_t>(j)] = (bits >> (nsf - 1 - j)) & 1u ? +1 : -1;
        const auto sol = qp::solve_qp(lcqp_problem(inst, &psi));
        ++solves;
        iters += sol.iterations;
        if (!found || sol.objective < best.alpha2) {
            found = true;
            best = detail::from_solution(inst, sol, Strategy::FsQp);
            best.psi = psi;
        }
    }
    best.qp_solves = solves;
    best.iterations = iters;
    return best;
}

inline PrecodeOutcome precode_fsqp(const rbc::RbcConstellation& c, const channel::Workspace& ws,
                                   const std::vector<int>& m, int cap = 16) {
    const CipInstance inst = assemble(c, ws.gram, m);
    return precode_fsqp_instance(inst, cap);
}

inline int hamming(const SignPattern& a, const SignPattern& b) {
    if (a.psi.size() != b.psi.size()) throw ConfigError("sign pattern length mismatch");
    int d = 0;
    for (size_t i = 0; i < a.psi.size(); ++i) d += a.psi[i] != b.psi[i];
    return d;
}

} // namespace ciforge::cip
