// Copyright 2026 The dpp-lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <dpplab/barriers.hpp>

#include <gtest/gtest.h>

using namespace dpplab;

TEST(Abc, WorkedExample)
{
    auto r = abc_inequality(2, 0.1, 0.5, 1);
    EXPECT_NEAR(r.lhs, 1 / 2.6 + 1 / 1.6 - 1, 1e-15);
    EXPECT_NEAR(r.rhs, 0.003125, 1e-15);
    EXPECT_TRUE(r.holds);
}

TEST(Abc, DegenerateLimit)
{
    auto r = abc_inequality(1, 1e-15, 0, 2);
    EXPECT_NEAR(r.lhs, 0, 1e-13);
    EXPECT_NEAR(r.rhs, 0, 1e-13);
    EXPECT_TRUE(r.holds);
}

TEST(Abc, RejectsInadmissibleTuples)
{
    EXPECT_THROW(abc_inequality(1, 1, 2, 1), Error);
    EXPECT_THROW(abc_inequality(0, 1, 0, 1), Error);
    EXPECT_THROW(abc_inequality(1, 1, 0, 0), Error);
}

TEST(Abc, RandomAudit)
{
    Rng rng(2024);
    const int n = 1000000;
    int bad = 0;
    for (int i = 0; i < n; ++i) {
        double a = std::exp(rng.uniform(-5, 5)), b = std::exp(rng.uniform(-5, 5));
        double c = (a + b) * rng.uniform(-1, 1) * (1 - 1e-12);
        double s = rng.uniform(1e-6, 10);
        bad += abc_inequality(a, b, c, s).holds ? 0 : 1;
    }
    EXPECT_EQ(bad, 0);
}

TEST(GlobalBarrier, RadiusConditionsAndPsi)
{
    for (int n : {1, 2, 3}) {
        auto b = build_global_barrier(n, 1.5, 0.9);
        double a = 1.5 * std::sqrt(n), c = 2 * std::sqrt(n);
        EXPECT_NEAR(b.value_r2(a * a), 2.0, 1e-9);
        EXPECT_NEAR(b.value_r2(c * c), 0.0, 1e-9);
        EXPECT_LE(1.5 * 1.5 - 0.9 * (b.sigma + 1) / (17.0 * (n + 2)), 0.0);
        EXPECT_GT(1.5 * 1.5 - 0.9 * (b.sigma / 2 + 1) / (17.0 * (n + 2)), 0.0);
        EXPECT_NEAR(b.psi_r2(0) / std::exp(b.log_A + std::log(b.sigma) + std::log(2.25)), 1.0, 1e-12);
        EXPECT_LE(b.eps0, 1 / (1.5 * std::sqrt(2 * (b.sigma + 2))) * (1 + 1e-15));
        double p0 = b.psi_r2(0);
        for (int k = 0; k <= 10000; ++k) {
            double r = 0.25 + 8.0 * k / 10000;
            EXPECT_LE(b.psi_r2(r * r), 0.0);
            EXPECT_LE(b.psi_r2(r * r), p0);
        }
        for (int k = 0; k <= 1000; ++k) {
            double r = 0.25 * k / 1000;
            EXPECT_LE(b.psi_r2(r * r), p0 * (1 + 1e-12));
        }
    }
}

TEST(GlobalBarrier, SigmaForReferenceParameters)
{
    auto b = build_global_barrier(1, 1.5, 0.9);
    EXPECT_EQ(b.sigma, 128.0);
    EXPECT_NEAR(b.eps0, 1 / (1.5 * std::sqrt(260.0)), 1e-15);
}

TEST(GlobalBarrier, VerifiesOnSamples)
{
    auto b = build_global_barrier(1, 1.5, 0.9);
    auto net = direction_net<1>(1.5, 0.01);
    auto ball = uniform_ball_quadrature<1>(20.0);
    std::vector<Vec<1>> samples;
    for (int k = 0; k <= 200; ++k)
        samples.push_back({-2.0 + 4.0 * k / 200});
    for (double eps : {b.eps0, b.eps0 / 2}) {
        auto p = make_params(0.9, eps, 1.5);
        auto rep = verify_global_barrier<1>(b, p, samples, net, ball);
        EXPECT_TRUE(rep.pass) << rep.worst_margin << " " << rep.tol_barrier;
        EXPECT_GE(rep.worst_margin, 0.0);
    }
    auto p = make_params(0.9, 2 * b.eps0, 1.5);
    EXPECT_THROW(verify_global_barrier<1>(b, p, samples, net, ball), Error);
}

TEST(GlobalBarrier, VerifiesIn2d)
{
    auto b = build_global_barrier(2, 1.2, 1.0);
    auto net = direction_net<2>(1.2, 0.05);
    auto ball = uniform_ball_quadrature<2>(10.0);
    std::vector<Vec<2>> samples;
    for (int i = -6; i <= 6; ++i)
        for (int j = -6; j <= 6; ++j)
            if (i * i + j * j <= 36)
                samples.push_back({i * 2.8 / 6, j * 2.8 / 6});
    auto p = make_params(1.0, b.eps0, 1.2);
    auto rep = verify_global_barrier<2>(b, p, samples, net, ball);
    EXPECT_TRUE(rep.pass) << rep.worst_margin;
    EXPECT_LE(rep.tol_barrier, rep.tol_coarse);
}

TEST(GlobalBarrier, AffineProbeHasZeroExtremalValue)
{
    auto net = direction_net<2>(1.5, 0.1);
    auto ball = uniform_ball_quadrature<2>(8.0);
    auto p = make_params(0.5, 0.05, 1.5);
    auto aff = [](const Vec<2> &x) { return 3 - x[0] + 2 * x[1]; };
    EXPECT_NEAR(apply_Lminus<2>(aff, {0.3, -0.2}, p, net, ball).value, 0.0, 1e-9);
}

TEST(AnnularBarrier, BoundaryValuesAndMonotonicity)
{
    auto b = build_annular_barrier<2>({0.5, 0.0}, 0.5, 0.01, 1.5, 0.9, 3.0);
    EXPECT_NEAR(b.value_t(b.rho()), 3.0, 1e-12);
    EXPECT_NEAR(b.value_t(4.0), 0.0, 1e-12);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1000; ++k) {
        double t = b.rho() + (4 - b.rho()) * k / 1000.0;
        double v = b.value_t(t);
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_NEAR(b.kappa, 1.5 * std::sqrt(2 * (b.sigma + 2)), 1e-15);
    EXPECT_NEAR(kappa_factor(b.sigma, 1.5, 0.01, b.kappa * 0.01), 0.5, 1e-14);
    EXPECT_GE(kappa_factor(b.sigma, 1.5, 0.01, 2 * b.kappa * 0.01), 0.5);
    EXPECT_THROW((build_annular_barrier<2>({0, 0}, 0.9 * b.kappa * 0.01, 0.01, 1.5, 0.9, 1.0)), Error);
}

TEST(AnnularBarrier, VerifiesInAnnulus)
{
    const double eps = 0.02;
    auto b = build_annular_barrier<1>({0.0}, 0.5, eps, 1.5, 0.9, 1.0);
    EXPECT_EQ(b.sigma, 8.0);
    auto p = make_params(0.9, eps, 1.5);
    auto net = direction_net<1>(1.5, 0.01);
    auto ball = uniform_ball_quadrature<1>(20.0);
    std::vector<Vec<1>> samples{{2.0}, {-2.0}, {0.51}, {0.55}, {3.9}, {-0.51}};
    auto rep = verify_annular_barrier<1>(b, p, samples, net, ball);
    EXPECT_TRUE(rep.pass) << rep.worst_margin;
    EXPECT_LE(rep.psi_max_outer, 0.0);
    std::vector<Vec<1>> outside{{0.2}};
    EXPECT_THROW(verify_annular_barrier<1>(b, p, outside, net, ball), Error);
}

TEST(InfimumDecay, ConstantFunction)
{
    auto p = make_params(0.9, 0.04, 1.5);
    Vec<1> lo{-7.5}, hi{7.5};
    auto lat = aligned_lattice<1>(lo, hi, 0.01);
    auto u = GridFunction<1>::sample(lat, [](const Vec<1> &) { return 2.0; });
    auto rep = infimum_decay_check<1>(u, p, {1.0}, {0.4, 0.8}, 0.0);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.rho, 0.0);
    for (const auto &row : rep.rows)
        EXPECT_GE(row.bound / row.inf_Br, 1.0);
    EXPECT_THROW(infimum_decay_check<1>(u, p, {1.0}, {0.1}, 0.0), Error);
}

TEST(InfimumDecay, SolvedSupersolution)
{
    auto p = make_params(0.9, 0.04, 1.5);
    auto f = [](const Vec<1> &) { return 0.5; };
    auto g = [](const Vec<1> &x) { return 1.0 + std::abs(x[0]) / 7; };
    auto pr = make_problem<1>(Region<1>::ball({0.0}, 7.0), p, 4, OperatorKind::linear, f, g);
    SolveOptions o;
    o.sweep = Sweep::gauss_seidel;
    o.relaxation = suggested_relaxation<1>(pr);
    auto res = solve_dpp<1>(pr, o);
    ASSERT_TRUE(res.u);
    auto rep = infimum_decay_check<1>(*res.u, p, {1.5}, {0.3, 0.4, 0.8}, 1e-6);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.rows.size(), 3u);
    EXPECT_NEAR(rep.log_C, 16 * std::log(2.0) - std::log(std::pow(3.0, -16) - std::pow(4.0, -16)), 1e-12);
}
