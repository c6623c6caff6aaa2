// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "ciforge/prng.hpp"
#include "ciforge/qp.hpp"

using namespace ciforge;
using qp::QpProblem;

namespace {

Eigen::MatrixXd random_spd(int n, Prng& rng) {
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.next_normal_pair().first;
    return A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

// Random feasible instance: rows are anchored at a feasible point so the
// oracle always has something to find.
QpProblem random_instance(int n, int n_eq, int n_ineq, Prng& rng) {
    QpProblem p;
    p.Q = random_spd(n, rng);
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0(i) = 2.0 * rng.next_unit() - 1.0;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    for (int j = 0; j < n_eq; ++j) p.equalities.emplace_back(idx[j], x0(idx[j]));
    p.A.resize(n_ineq, n);
    p.b.resize(n_ineq);
    for (int i = 0; i < n_ineq; ++i) {
        for (int j = 0; j < n; ++j) p.A(i, j) = rng.next_normal_pair().first;
        p.b(i) = p.A.row(i).dot(x0) - rng.next_unit(); // feasible at x0 with slack
    }
    return p;
}

} // namespace

TEST_CASE("solve_fixed basics") {
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
    const auto s = qp::solve_fixed(I, {{0, 3.0}});
    CHECK(s.x(0) == 3.0);
    CHECK(s.x(1) == 0.0);
    CHECK(s.objective == doctest::Approx(9.0));

    const auto all = qp::solve_fixed(I, {{0, 1.0}, {1, 2.0}});
    CHECK(all.objective == doctest::Approx(5.0));

    const auto none = qp::solve_fixed(I, {});
    CHECK(none.objective == 0.0);
    CHECK(none.x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_fixed dominates random feasible completions") {
    Prng rng(77);
    const int n = 6;
    const auto Q = random_spd(n, rng);
    std::vector<std::pair<int, double>> fixed = {{0, 1.0}, {2, -2.0}, {5, 0.5}};
    const auto sol = qp::solve_fixed(Q, fixed);
    for (int rep = 0; rep < 10000; ++rep) {
        Eigen::VectorXd x = sol.x;
        for (int i : {1, 3, 4}) x(i) = 4.0 * rng.next_unit() - 2.0;
        CHECK(sol.objective <= x.dot(Q * x) + 1e-10);
    }
}

TEST_CASE("solve_qp: projection onto a half-space") {
    QpProblem p;
    p.Q = Eigen::MatrixXd::Identity(2, 2);
    p.A.resize(1, 2);
    p.A << 1, 0;
    p.b.resize(1);
    p.b << 2.0;
    const auto s = qp::solve_qp(p);
    CHECK(s.x(0) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(s.x(1) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(s.objective == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(s.active_set == std::vector<int>{0});
}

TEST_CASE("solve_qp: pinned coordinate plus bound") {
    QpProblem p;
    p.Q = Eigen::MatrixXd::Identity(2, 2);
    p.equalities = {{1, 0.0}};
    p.A.resize(1, 2);
    p.A << 1, 0;
    p.b.resize(1);
    p.b << 1.0;
    const auto s = qp::solve_qp(p);
    CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.x(1) == 0.0);
    CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("solve_qp detects infeasibility") {
    QpProblem p;
    p.Q = Eigen::MatrixXd::Identity(2, 2);
    p.equalities = {{0, 0.0}};
    p.A.resize(1, 2);
    p.A << 1, 0; // x0 >= 2 conflicts with x0 = 0
    p.b.resize(1);
    p.b << 2.0;
    CHECK_THROWS_AS(qp::solve_qp(p), QpInfeasibleError);
}

TEST_CASE("oracle_qp basics") {
    QpProblem p;
    p.Q = Eigen::MatrixXd::Identity(3, 3);
    p.A.resize(0, 3);
    p.b.resize(0);
    const auto s = qp::oracle_qp(p);
    CHECK(s.objective == doctest::Approx(0.0));
    CHECK(s.x.cwiseAbs().maxCoeff() < 1e-12);

    p.equalities = {{1, 4.0}};
    const auto s2 = qp::oracle_qp(p);
    const auto fixed = qp::solve_fixed(p.Q, p.equalities);
    CHECK(s2.objective == doctest::Approx(fixed.objective));

    QpProblem big;
    big.Q = Eigen::MatrixXd::Identity(2, 2);
    big.A = Eigen::MatrixXd::Ones(17, 2);
    big.b = Eigen::VectorXd::Zero(17);
    CHECK_THROWS_AS(qp::oracle_qp(big), SizeError);
}

TEST_CASE("solve_qp agrees with the enumeration oracle on 300 random instances") {
    Prng rng(2024);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = 2 + static_cast<int>(rng.next_below(7));       // n <= 8
        const int n_eq = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
        const int n_ineq = static_cast<int>(rng.next_below(6));      // <= 5
        const auto p = random_instance(n, n_eq, n_ineq, rng);
        const auto got = qp::solve_qp(p);
        const auto want = qp::oracle_qp(p);
        CHECK(std::abs(got.objective - want.objective) < 1e-6);
        CHECK(qp::kkt_check(p, got) <= 1e-8);
    }
}

TEST_CASE("objective is monotone under constraint addition") {
    Prng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 4;
        auto p = random_instance(n, 1, 4, rng);
        double prev = -1.0;
        for (int rows = 0; rows <= p.A.rows(); ++rows) {
            QpProblem sub = p;
            sub.A = p.A.topRows(rows);
            sub.b = p.b.head(rows);
            const auto s = qp::solve_qp(sub);
            CHECK(s.objective >= prev - 1e-9);
            prev = s.objective;
        }
    }
}

TEST_CASE("scale equivariance") {
    Prng rng(55);
    const auto p = random_instance(5, 1, 3, rng);
    const auto base = qp::solve_qp(p);
    QpProblem scaled = p;
    scaled.Q *= 3.5;
    const auto s = qp::solve_qp(scaled);
    CHECK(std::abs(s.objective - 3.5 * base.objective) < 1e-9 * std::max(1.0, base.objective));
    CHECK((s.x - base.x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("determinism: identical problems give bit-identical solutions") {
    Prng rng(99);
    const auto p = random_instance(6, 2, 5, rng);
    const auto a = qp::solve_qp(p);
    const auto b = qp::solve_qp(p);
    REQUIRE(a.x.size() == b.x.size());
    CHECK(std::memcmp(a.x.data(), b.x.data(), sizeof(double) * a.x.size()) == 0);
    CHECK(std::memcmp(&a.objective, &b.objective, sizeof(double)) == 0);
}

TEST_CASE("kkt_check flags a non-optimal feasible point") {
    QpProblem p;
    p.Q = Eigen::MatrixXd::Identity(2, 2);
    p.A.resize(1, 2);
    p.A << 1, 0;
    p.b.resize(1);
    p.b << 1.0;
    qp::QpSolution bogus;
    bogus.x = Eigen::VectorXd::Constant(2, 3.0); // feasible, not stationary
    bogus.objective = bogus.x.squaredNorm();
    CHECK(qp::kkt_check(p, bogus) > 1e-3);
}
