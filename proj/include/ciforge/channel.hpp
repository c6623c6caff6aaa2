// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// Channel generation and the dense linear-algebra kernels shared by every
// precoder: widely-linear real forms, the Gram inverse Q = (Hd Hd^T)^-1,
// zero-forcing, and row-subset pseudoinverses computed from Q blocks.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "ciforge/errors.hpp"
#include "ciforge/prng.hpp"

namespace ciforge::channel {

// K x Nt complex fading matrix, rows are users.
using ComplexChannel = Eigen::MatrixXcd;

// 2K x 2Nt widely-linear form [[Re H, -Im H], [Im H, Re H]].
using RealChannel = Eigen::MatrixXd;

// Symmetric positive-definite (Hd Hd^T)^-1. Materialized because the sign
// prediction and Schur-complement formulas index into it repeatedly.
struct GramInverse {
    Eigen::MatrixXd Q;
};

struct CsiErrorModel {
    double sigma_e2 = 0.0; // per-entry error variance, linear scale

    CsiErrorModel() = default;
    explicit CsiErrorModel(double v) : sigma_e2(v) {
        if (!(v >= 0.0)) throw ConfigError("sigma_e2 must be >= 0");
    }
};

inline constexpr double kDefaultConditionCap = 1e10;

// i.i.d. CN(0,1) entries (real and imaginary parts each variance 1/2).
inline ComplexChannel sample_channel(int K, int Nt, Prng& rng) {
    if (K < 1 || Nt < K) throw ConfigError("channel dimensions require 1 <= K <= Nt");
    ComplexChannel H(K, Nt);
    for (int k = 0; k < K; ++k)
        for (int n = 0; n < Nt; ++n) H(k, n) = rng.next_cnormal(1.0);
    return H;
}

// Additive estimation error: Hhat = H + E, E entries i.i.d. CN(0, sigma_e2).
inline ComplexChannel perturb_csi(const ComplexChannel& H, const CsiErrorModel& model,
                                  Prng& rng) {
    ComplexChannel Hhat = H;
    if (model.sigma_e2 == 0.0) return Hhat;
    for (Eigen::Index k = 0; k < H.rows(); ++k)
        for (Eigen::Index n = 0; n < H.cols(); ++n)
            Hhat(k, n) += rng.next_cnormal(model.sigma_e2);
    return Hhat;
}

// Stacking convention: real parts occupy indices 0..K-1, imaginary parts
// K..2K-1, matching the "+K" index shifts in the RM-QAM problem.
inline Eigen::VectorXd real_stack(const Eigen::VectorXcd& s) {
    const Eigen::Index K = s.size();
    Eigen::VectorXd v(2 * K);
    v.head(K) = s.real();
    v.tail(K) = s.imag();
    return v;
}

inline Eigen::VectorXcd complex_unstack(const Eigen::VectorXd& v) {
    const Eigen::Index K = v.size() / 2;
    Eigen::VectorXcd s(K);
    s.real() = v.head(K);
    s.imag() = v.tail(K);
    return s;
}

inline RealChannel widely_linear(const ComplexChannel& H) {
    const Eigen::Index K = H.rows(), Nt = H.cols();
    RealChannel Hd(2 * K, 2 * Nt);
    Hd.topLeftCorner(K, Nt) = H.real();
    Hd.topRightCorner(K, Nt) = -H.imag();
    Hd.bottomLeftCorner(K, Nt) = H.imag();
    Hd.bottomRightCorner(K, Nt) = H.real();
    return Hd;
}

// Q = (Hd Hd^T)^-1 via a symmetric eigendecomposition; the same factorization
// supplies the conditioning gate (cond(Hd) = sqrt(lmax/lmin)).
inline GramInverse gram_inverse(const RealChannel& Hd,
                                double condition_cap = kDefaultConditionCap) {
    const Eigen::MatrixXd G = Hd * Hd.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success)
        throw SingularChannelError("eigendecomposition of Hd*Hd^T failed");
    const Eigen::VectorXd& lambda = es.eigenvalues();
    const double lmin = lambda(0), lmax = lambda(lambda.size() - 1);
    if (!(lmin > 0.0) || std::sqrt(lmax / lmin) > condition_cap)
        throw SingularChannelError("channel is rank deficient or ill conditioned");
    GramInverse out;
    out.Q = es.eigenvectors() * lambda.cwiseInverse().asDiagonal() *
            es.eigenvectors().transpose();
    out.Q = 0.5 * (out.Q + out.Q.transpose()).eval();
    return out;
}

struct ZfResult {
    Eigen::VectorXcd x; // Nt-dim transmit vector H^H (H H^H)^-1 s
    double alpha2 = 0;  // ||x||^2 = s^H (H H^H)^-1 s
};

inline ZfResult zf_precode(const ComplexChannel& H, const Eigen::VectorXcd& s) {
    if (s.size() != H.rows()) throw ConfigError("zf_precode: dimension mismatch");
    const Eigen::MatrixXcd G = H * H.adjoint();
    Eigen::LLT<Eigen::MatrixXcd> llt(G);
    if (llt.info() != Eigen::Success)
        throw SingularChannelError("H*H^H is not positive definite");
    ZfResult r;
    r.x = H.adjoint() * llt.solve(s);
    r.alpha2 = r.x.squaredNorm();
    return r;
}

// Pseudoinverse of the row subset Hd[rows,:] obtained from Q blocks:
//   Hd_F^+ = Hd_F^T (Q_FF - Q_FFc Q_FcFc^-1 Q_FcF),
// reducing to (Hd^T Q)[:, rows] when the complement is empty.
inline Eigen::MatrixXd subrow_pseudoinverse(const GramInverse& gram, const RealChannel& Hd,
                                            const std::vector<int>& rows) {
    if (rows.empty()) throw ConfigError("subrow_pseudoinverse: empty index set");
    const int n = static_cast<int>(gram.Q.rows());
    std::vector<char> in_set(n, 0);
    for (int r : rows) {
        if (r < 0 || r >= n) throw ConfigError("subrow_pseudoinverse: index out of range");
        in_set[r] = 1;
    }
    std::vector<int> comp;
    comp.reserve(n - rows.size());
    for (int i = 0; i < n; ++i)
        if (!in_set[i]) comp.push_back(i);

    const Eigen::MatrixXd HdF = Hd(rows, Eigen::all);
    if (comp.empty()) return HdF.transpose() * gram.Q(rows, rows);

    const Eigen::MatrixXd Qff = gram.Q(rows, rows);
    const Eigen::MatrixXd Qfc = gram.Q(rows, comp);
    const Eigen::MatrixXd Qcc = gram.Q(comp, comp);
    Eigen::LLT<Eigen::MatrixXd> llt(Qcc);
    if (llt.info() != Eigen::Success)
        throw SingularSubblockError("Q complement block is not positive definite");
    return HdF.transpose() * (Qff - Qfc * llt.solve(Qfc.transpose()));
}

// Channel plus its derived real-domain objects, shared by the precoders.
struct Workspace {
    ComplexChannel H;
    RealChannel Hd;
    GramInverse gram;
};

inline Workspace make_workspace(const ComplexChannel& H,
                                double condition_cap = kDefaultConditionCap) {
    Workspace ws;
    ws.H = H;
    ws.Hd = widely_linear(H);
    ws.gram = gram_inverse(ws.Hd, condition_cap);
    return ws;
}

} // namespace ciforge::channel
