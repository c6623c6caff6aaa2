// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// Strictly convex QP solver: minimize x^T Q x subject to coordinate
// equalities and one-sided linear inequalities a_i^T x >= b_i. A primal
// active-set method handles the per-symbol precoding problems; an
// enumeration oracle and an independent KKT checker back the tests.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ciforge/errors.hpp"

namespace ciforge::qp {

struct QpProblem {
    Eigen::MatrixXd Q;                               // SPD objective kernel
    std::vector<std::pair<int, double>> equalities;  // coordinate pins
    Eigen::MatrixXd A;                               // inequality rows, a_i^T x >= b_i
    Eigen::VectorXd b;

    int n() const { return static_cast<int>(Q.rows()); }
    int num_inequalities() const { return static_cast<int>(A.rows()); }
};

struct QpSolution {
    Eigen::VectorXd x;
    double objective = 0.0;
    std::vector<int> active_set; // tight inequality indices, ascending
    double kkt_residual = 0.0;
    int iterations = 0;
};

namespace detail {

inline constexpr double kFeasTol = 1e-9;
inline constexpr double kStepTol = 1e-11;
inline constexpr double kMultTol = 1e-9;

// Splits {0..n-1} into pinned coordinates (with values) and free ones.
struct Elimination {
    std::vector<int> free_idx;
    std::vector<int> pin_idx;
    Eigen::VectorXd pin_val;
};

inline Elimination eliminate(const QpProblem& p) {
    const int n = p.n();
    std::vector<char> pinned(n, 0);
    Elimination e;
    for (const auto& [i, v] : p.equalities) {
        if (i < 0 || i >= n) throw ConfigError("equality index out of range");
        if (pinned[i]) throw ConfigError("duplicate equality index");
        pinned[i] = 1;
    }
    for (int i = 0; i < n; ++i)
        (pinned[i] ? e.pin_idx : e.free_idx).push_back(i);
    e.pin_val.resize(static_cast<Eigen::Index>(e.pin_idx.size()));
    for (const auto& [i, v] : p.equalities) {
        const auto at = std::lower_bound(e.pin_idx.begin(), e.pin_idx.end(), i) -
                        e.pin_idx.begin();
        e.pin_val(at) = v;
    }
    return e;
}

inline Eigen::VectorXd assemble_full(const Elimination& e, const Eigen::VectorXd& u, int n) {
    Eigen::VectorXd x(n);
    for (size_t j = 0; j < e.pin_idx.size(); ++j) x(e.pin_idx[j]) = e.pin_val(j);
    for (size_t j = 0; j < e.free_idx.size(); ++j) x(e.free_idx[j]) = u(j);
    return x;
}

// Equality-constrained subproblem min u^T P u + 2 q^T u s.t. Aw u = bw.
// Returns false when the KKT matrix is singular (dependent working set).
inline bool solve_eq_kkt(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& Aw, const Eigen::VectorXd& bw,
                         Eigen::VectorXd& u, Eigen::VectorXd& lambda) {
    const Eigen::Index m = Aw.rows(), nf = P.rows();
    Eigen::MatrixXd kkt(nf + m, nf + m);
    kkt.setZero();
    kkt.topLeftCorner(nf, nf) = 2.0 * P;
    if (m > 0) {
        kkt.topRightCorner(nf, m) = -Aw.transpose();
        kkt.bottomLeftCorner(m, nf) = Aw;
    }
    Eigen::VectorXd rhs(nf + m);
    rhs.head(nf) = -2.0 * q;
    rhs.tail(m) = bw;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) return false;
    const Eigen::VectorXd sol = lu.solve(rhs);
    u = sol.head(nf);
    lambda = sol.tail(m);
    return true;
}

} // namespace detail

// Minimizer of x^T Q x with a subset of coordinates pinned; the free block
// solves u = -Q_BB^-1 Q_Bc x_c and the objective equals the Schur-complement
// quadratic form in the pinned values.
inline QpSolution solve_fixed(const Eigen::MatrixXd& Q,
                              const std::vector<std::pair<int, double>>& fixed) {
    const int n = static_cast<int>(Q.rows());
    QpSolution sol;
    sol.x = Eigen::VectorXd::Zero(n);
    if (fixed.empty()) return sol;

    QpProblem p;
    p.Q = Q;
    p.equalities = fixed;
    const auto e = detail::eliminate(p);
    if (e.free_idx.empty()) {
        sol.x = detail::assemble_full(e, Eigen::VectorXd(), n);
    } else {
        const Eigen::MatrixXd Qbb = Q(e.free_idx, e.free_idx);
        const Eigen::MatrixXd Qbc = Q(e.free_idx, e.pin_idx);
        Eigen::LLT<Eigen::MatrixXd> llt(Qbb);
        if (llt.info() != Eigen::Success)
            throw SingularSubblockError("free block of Q is not positive definite");
        const Eigen::VectorXd u = -llt.solve(Qbc * e.pin_val);
        sol.x = detail::assemble_full(e, u, n);
        sol.kkt_residual = (Q * sol.x)(e.free_idx, Eigen::all).cwiseAbs().maxCoeff();
    }
    sol.objective = sol.x.dot(Q * sol.x);
    return sol;
}

// Primal active set: eliminate pins, restore feasibility by projecting the
// unconstrained minimizer, then add/drop one constraint per iteration with
// lowest-index tie-breaks. Iteration cap 100*n.
inline QpSolution solve_qp(const QpProblem& p) {
    const int n = p.n();
    if (p.A.rows() != p.b.size()) throw ConfigError("inequality rows/bounds mismatch");
    {
        Eigen::LLT<Eigen::MatrixXd> spd(p.Q);
        if (spd.info() != Eigen::Success)
            throw ConfigError("objective kernel is not positive definite");
    }
    const auto e = detail::eliminate(p);
    const int nf = static_cast<int>(e.free_idx.size());
    const int m = p.num_inequalities();
    const int iter_cap = 100 * std::max(n, 1);

    QpSolution sol;
    sol.active_set.clear();

    // Reduced data over free coordinates.
    Eigen::MatrixXd P, Ar;
    Eigen::VectorXd q, br;
    Eigen::VectorXd xc = e.pin_val;
    if (nf > 0) {
        P = p.Q(e.free_idx, e.free_idx);
        q = e.pin_idx.empty() ? Eigen::VectorXd::Zero(nf).eval()
                              : (p.Q(e.free_idx, e.pin_idx) * xc).eval();
    }
    std::vector<int> row_ids; // original indices of retained rows
    if (m > 0) {
        std::vector<Eigen::Index> keep;
        br.resize(m);
        Eigen::MatrixXd Afull(m, std::max(nf, 1));
        for (int i = 0; i < m; ++i) {
            Eigen::RowVectorXd ai = Eigen::RowVectorXd::Zero(std::max(nf, 1));
            if (nf > 0) ai = p.A(i, e.free_idx);
            double bi = p.b(i);
            if (!e.pin_idx.empty()) bi -= p.A(i, e.pin_idx).dot(xc);
            if (nf == 0 || ai.cwiseAbs().maxCoeff() < 1e-14) {
                if (bi > detail::kFeasTol)
                    throw QpInfeasibleError("inequality conflicts with pinned coordinates");
                continue;
            }
            Afull.row(static_cast<Eigen::Index>(keep.size())) = ai;
            br(static_cast<Eigen::Index>(keep.size())) = bi;
            keep.push_back(i);
            row_ids.push_back(i);
        }
        Ar = Afull.topRows(static_cast<Eigen::Index>(keep.size()));
        br.conservativeResize(static_cast<Eigen::Index>(keep.size()));
    }
    const int mr = static_cast<int>(row_ids.size());

    if (nf == 0) {
        sol.x = detail::assemble_full(e, Eigen::VectorXd(), n);
        sol.objective = sol.x.dot(p.Q * sol.x);
        for (int i = 0; i < m; ++i)
            if (std::abs(p.A.row(i).dot(sol.x) - p.b(i)) <= detail::kFeasTol)
                sol.active_set.push_back(i);
        return sol;
    }

    Eigen::LLT<Eigen::MatrixXd> lltP(P);
    if (lltP.info() != Eigen::Success)
        throw SingularSubblockError("free block of Q is not positive definite");
    const Eigen::VectorXd u0 = -lltP.solve(q);
    Eigen::VectorXd u = u0;

    // Feasibility restoration: least-norm projection of the unconstrained
    // minimizer onto a growing working set of violated rows, most violated
    // first. When a new row is dependent on the set, older rows are dropped
    // so the projection always exists; genuinely conflicting rows then cycle
    // into the iteration cap.
    {
        std::vector<int> Wr;
        int iters = 0;
        while (true) {
            int worst = -1;
            double worst_v = detail::kFeasTol;
            for (int i = 0; i < mr; ++i) {
                const double v = br(i) - Ar.row(i).dot(u);
                if (v > worst_v) {
                    worst_v = v;
                    worst = i;
                }
            }
            if (worst < 0) break;
            if (++iters > iter_cap)
                throw QpInfeasibleError("feasibility restoration did not converge");
            Wr.push_back(worst);
            for (;;) {
                Eigen::MatrixXd Aw(Wr.size(), nf);
                Eigen::VectorXd bw(Wr.size());
                for (size_t j = 0; j < Wr.size(); ++j) {
                    Aw.row(static_cast<Eigen::Index>(j)) = Ar.row(Wr[j]);
                    bw(static_cast<Eigen::Index>(j)) = br(Wr[j]);
                }
                const Eigen::MatrixXd gram = Aw * Aw.transpose();
                Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
                if (lu.isInvertible()) {
                    u = u0 + Aw.transpose() * lu.solve(bw - Aw * u0);
                    break;
                }
                Wr.erase(Wr.begin()); // drop the oldest dependent row
            }
        }
    }

    // Initial working set: rows active at u, added lowest index first while
    // they stay linearly independent.
    std::vector<int> W;
    {
        Eigen::MatrixXd Aw(mr, nf);
        int nw = 0;
        for (int i = 0; i < mr; ++i) {
            if (std::abs(Ar.row(i).dot(u) - br(i)) > detail::kFeasTol) continue;
            Aw.row(nw) = Ar.row(i);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(
                Aw.topRows(nw + 1).transpose());
            if (qr.rank() == nw + 1) {
                W.push_back(i);
                ++nw;
            }
        }
    }

    bool converged = false;
    for (int it = 0; it < iter_cap && !converged; ++it) {
        sol.iterations = it + 1;
        const int nw = static_cast<int>(W.size());
        Eigen::MatrixXd Aw(nw, nf);
        Eigen::VectorXd bw(nw);
        for (int j = 0; j < nw; ++j) {
            Aw.row(j) = Ar.row(W[j]);
            bw(j) = br(W[j]);
        }
        Eigen::VectorXd ustar, lambda;
        if (!detail::solve_eq_kkt(P, q, Aw, bw, ustar, lambda))
            throw QpNonconvergenceError("degenerate working set");

        const Eigen::VectorXd d = ustar - u;
        if (d.cwiseAbs().maxCoeff() <= detail::kStepTol) {
            // Stationary on the working set; check multiplier signs.
            int drop = -1;
            double most_negative = -detail::kMultTol;
            for (int j = 0; j < nw; ++j) {
                if (lambda(j) < most_negative) {
                    most_negative = lambda(j);
                    drop = j;
                }
            }
            if (drop < 0) {
                u = ustar;
                converged = true;
                continue;
            }
            W.erase(W.begin() + drop);
            continue;
        }

        // Largest step toward ustar that keeps all rows feasible.
        double t = 1.0;
        int blocking = -1;
        for (int i = 0; i < mr; ++i) {
            if (std::find(W.begin(), W.end(), i) != W.end()) continue;
            const double ad = Ar.row(i).dot(d);
            if (ad >= -1e-14) continue; // moving away from this boundary
            const double ti = (br(i) - Ar.row(i).dot(u)) / ad;
            if (ti < t - 1e-14) {
                t = ti;
                blocking = i;
            }
        }
        u += t * d;
        if (blocking >= 0)
            W.push_back(blocking);
        else if (t >= 1.0)
            u = ustar;
        std::sort(W.begin(), W.end());
    }
    if (!converged)
        throw QpNonconvergenceError("active-set iteration cap reached");

    sol.x = detail::assemble_full(e, u, n);
    sol.objective = sol.x.dot(p.Q * sol.x);
    for (int i = 0; i < m; ++i)
        if (std::abs(p.A.row(i).dot(sol.x) - p.b(i)) <= 1e-8) sol.active_set.push_back(i);

    // Residual for the contract: max of stationarity and feasibility terms.
    double feas = 0.0;
    for (int i = 0; i < m; ++i)
        feas = std::max(feas, p.b(i) - p.A.row(i).dot(sol.x));
    Eigen::VectorXd g = 2.0 * (p.Q * sol.x);
    Eigen::MatrixXd C(n, e.pin_idx.size() + sol.active_set.size());
    C.setZero();
    Eigen::Index col = 0;
    for (int i : e.pin_idx) C(i, col++) = 1.0;
    for (int i : sol.active_set) C.col(col++) = p.A.row(i).transpose();
    double stat = g.cwiseAbs().maxCoeff();
    if (C.cols() > 0) {
        const Eigen::VectorXd mu = C.colPivHouseholderQr().solve(g);
        stat = (g - C * mu).cwiseAbs().maxCoeff();
    }
    sol.kkt_residual = std::max(stat, feas);
    return sol;
}

// Test oracle: enumerate all 2^m active-set hypotheses, solve each as an
// equality-constrained KKT system, return the feasible minimum. Hypotheses
// are scanned in ascending bitmask order so ties keep the first hit.
inline QpSolution oracle_qp(const QpProblem& p) {
    const int n = p.n();
    const int m = p.num_inequalities();
    if (m > 16) throw SizeError("oracle_qp supports at most 16 inequalities");
    const auto e = detail::eliminate(p);
    const int nf = static_cast<int>(e.free_idx.size());

    QpSolution best;
    bool found = false;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        Eigen::VectorXd u(nf), lambda;
        if (nf == 0) {
            u.resize(0);
            if (mask != 0) continue; // pins determine x; nothing to activate
        } else {
            std::vector<int> act;
            for (int i = 0; i < m; ++i)
                if (mask & (1u << i)) act.push_back(i);
            Eigen::MatrixXd P = p.Q(e.free_idx, e.free_idx);
            Eigen::VectorXd q = e.pin_idx.empty()
                                    ? Eigen::VectorXd::Zero(nf).eval()
                                    : (p.Q(e.free_idx, e.pin_idx) * e.pin_val).eval();
            Eigen::MatrixXd Aw(act.size(), nf);
            Eigen::VectorXd bw(act.size());
            for (size_t j = 0; j < act.size(); ++j) {
                Aw.row(static_cast<Eigen::Index>(j)) = p.A(act[j], e.free_idx);
                bw(static_cast<Eigen::Index>(j)) =
                    p.b(act[j]) - (e.pin_idx.empty()
                                       ? 0.0
                                       : p.A(act[j], e.pin_idx).dot(e.pin_val));
            }
            if (!detail::solve_eq_kkt(P, q, Aw, bw, u, lambda)) continue;
        }
        const Eigen::VectorXd x = detail::assemble_full(e, u, n);
        bool feasible = true;
        for (int i = 0; i < m && feasible; ++i)
            if (p.A.row(i).dot(x) < p.b(i) - detail::kFeasTol) feasible = false;
        if (!feasible) continue;
        const double obj = x.dot(p.Q * x);
        if (!found || obj < best.objective) {
            found = true;
            best.x = x;
            best.objective = obj;
        }
    }
    if (!found) throw QpInfeasibleError("oracle found no feasible active set");
    best.active_set.clear();
    for (int i = 0; i < m; ++i)
        if (std::abs(p.A.row(i).dot(best.x) - p.b(i)) <= 1e-8) best.active_set.push_back(i);
    return best;
}

// Independent KKT certification (QR least-squares multipliers, no reuse of
// solver internals). Returns the largest violation across the conditions.
inline double kkt_check(const QpProblem& p, const QpSolution& sol, double act_tol = 1e-8) {
    const int n = p.n();
    double worst = 0.0;
    for (const auto& [i, v] : p.equalities)
        worst = std::max(worst, std::abs(sol.x(i) - v));
    std::vector<int> act;
    for (int i = 0; i < p.num_inequalities(); ++i) {
        const double slack = p.A.row(i).dot(sol.x) - p.b(i);
        worst = std::max(worst, -slack);
        if (std::abs(slack) <= act_tol) act.push_back(i);
    }
    const Eigen::VectorXd g = 2.0 * (p.Q * sol.x);
    Eigen::MatrixXd C(n, p.equalities.size() + act.size());
    Eigen::Index col = 0;
    C.setZero();
    for (const auto& [i, v] : p.equalities) C(i, col++) = 1.0;
    for (int i : act) C.col(col++) = p.A.row(i).transpose();
    if (C.cols() == 0) {
        worst = std::max(worst, g.cwiseAbs().maxCoeff());
        return worst;
    }
    const Eigen::VectorXd mu = C.colPivHouseholderQr().solve(g);
    worst = std::max(worst, (g - C * mu).cwiseAbs().maxCoeff());
    for (size_t j = 0; j < act.size(); ++j) {
        const double lam = mu(static_cast<Eigen::Index>(p.equalities.size() + j));
        worst = std::max(worst, -lam); // inequality multipliers must be >= 0
        worst = std::max(worst,
                         std::abs(lam * (p.A.row(act[j]).dot(sol.x) - p.b(act[j]))));
    }
    return worst;
}

} // namespace ciforge::qp
