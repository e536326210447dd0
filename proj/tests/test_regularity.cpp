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

#include <dpplab/regularity.hpp>

#include <gtest/gtest.h>

using namespace dpplab;

namespace {

Lattice<1> line(double R, double h) { return aligned_lattice<1>({-R}, {R}, h); }

GridFunction<1> on_line(double R, double h, std::function<double(const Vec<1> &)> fn)
{
    return GridFunction<1>::sample(line(R, h), fn);
}

RegularityConstants standard_constants(double rho = 0.0)
{
    ConstantInputs in;
    in.n = 1;
    in.Lambda = 1.5;
    in.beta = 0.9;
    in.rho = rho;
    in.C_abp = 2.0;
    return build_constants(in);
}

// Solved linear instance on B_7 at eps just below eps0.
struct Solved {
    DppProblem<1> p;
    GridFunction<1> u;
};

Solved solve_standard(int ratio)
{
    auto prm = make_params(0.9, 0.04, 1.5);
    auto p = make_problem<1>(centered_ball<1>(7.0), prm, ratio, OperatorKind::linear,
                             [](const Vec<1> &x) { return std::exp(-x[0] * x[0]); },
                             [](const Vec<1> &x) { return 2 + std::cos(x[0]); });
    SolveOptions o;
    o.sweep = Sweep::gauss_seidel;
    o.relaxation = suggested_relaxation<1>(p);
    o.tol = 1e-11;
    auto r = solve_dpp<1>(p, o);
    EXPECT_TRUE(r.u.has_value());
    return {p, *r.u};
}

} // namespace

TEST(Constants, BarrierDrivenValues)
{
    auto k = standard_constants();
    EXPECT_EQ(k.sigma, 8.0);
    EXPECT_NEAR(k.kappa, 1.5 * std::sqrt(20.0), 1e-12);
    EXPECT_EQ(k.lambda, 16.0);
    EXPECT_NEAR(k.eps0.value(), 1 / (1.5 * std::sqrt(260.0)), 1e-15);
    EXPECT_EQ(k.ell, 3);
    EXPECT_EQ(k.n_conv, 49);
    EXPECT_GE(k.M.log, 0.0);
    EXPECT_GE(k.d.log, 0.0);
    EXPECT_LT(k.one_minus_mu.log, 0.0);
    EXPECT_TRUE(k.vacuous);
    EXPECT_EQ(k.C_abp.tag, Provenance::estimated);
    EXPECT_EQ(k.M.tag, Provenance::paper_formula);
}

TEST(Constants, RoundTripIdentities)
{
    for (double rho : {0.0, 0.01, 1.0}) {
        auto k = standard_constants(rho);
        EXPECT_LE(constants_consistency(k), 1e-12);
    }
    ConstantInputs in;
    in.n = 2;
    in.Lambda = 1.0;
    in.beta = 1.0;
    in.gamma = 0.5;
    in.C_holder = 30.0;
    auto k = build_constants(in);
    EXPECT_LE(constants_consistency(k), 1e-12);
    EXPECT_FALSE(std::isfinite(k.c.log)); // no closed form off the line
}

TEST(Constants, ModerateMuRoundTrip)
{
    double x = 0.3; // 1 - mu
    double la = detail::log_a_from(std::log(x));
    EXPECT_NEAR(std::exp(la) * std::log(1 / (1 - x)), 1.0, 1e-14);
    double le = detail::log_eta_from(la, std::log(4.0), 0.5);
    EXPECT_NEAR(le, -std::exp(la) * std::pow(std::log(8.0), 2), 1e-12);
    // eta = 1 when d = theta
    EXPECT_EQ(detail::log_eta_from(la, std::log(0.5), 0.5), 0.0);
}

TEST(Constants, DeltaAndCTilde)
{
    const double C = 3.0, g = 0.5, lam = 2.0, kap = 4.0;
    double ld = detail::log_delta_from(std::log(C), lam, g);
    EXPECT_NEAR(std::exp(ld), std::pow(std::pow(2.0, 1 + 2 * lam) * C, -1 / g), 1e-18);
    double lt = detail::log_C_tilde_from(std::log(C), lam, g, kap);
    double direct = std::pow(std::pow(2.0, 1 + 2 * lam) * C, 2 * lam / g) *
                    std::max(C * std::pow(2.0, 2 + 2 * lam), std::pow(2 * kap, 2 * lam));
    EXPECT_NEAR(lt, std::log(direct), 1e-12);
}

TEST(Constants, IntegerSelections)
{
    EXPECT_EQ(ell_of(1), 3);
    EXPECT_EQ(ell_of(2), 5);
    EXPECT_EQ(ell_of(4), 7);
    for (int n = 1; n <= 9; ++n) {
        int l = ell_of(n);
        EXPECT_EQ(l % 2, 1);
        EXPECT_LT(l - 2, 3 * std::sqrt(n));
        EXPECT_LE(3 * std::sqrt(n), l + 1e-12);
    }
    int n = spreading_n(2, 0.5);
    EXPECT_EQ(n, 6);
    EXPECT_GT(n * 0.5, 2 * std::sqrt(2.0));
    EXPECT_LT(n * 0.5, 4.5 * std::sqrt(2.0) + 0.5);
}

TEST(Constants, UniformSumDensity)
{
    // two uniforms on (-1, 1): triangle (2 - |s|)/4
    EXPECT_NEAR(std::exp(*log_ball_convolution(1, 2, 0.5)), 0.375, 1e-14);
    EXPECT_NEAR(std::exp(*log_ball_convolution(1, 3, 0.0)), 0.375, 1e-14);
    // near the edge of the support: ((n - s)/2)^{n-1} / (2 (n-1)!)
    const int n = 30;
    const double s = 29.5;
    EXPECT_NEAR(*log_ball_convolution(1, n, s), (n - 1) * std::log(0.25) - std::log(2.0) - std::lgamma(n), 1e-10);
    // the density integrates to one
    double sum = 0.0;
    const int m = 4000;
    for (int i = 0; i < m; ++i) {
        double x = -5 + 10.0 * (i + 0.5) / m;
        sum += std::exp(*log_ball_convolution(1, 5, x)) * 10.0 / m;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_FALSE(log_ball_convolution(1, 3, 3.5));
}

TEST(LevelSet, ZeroFunction)
{
    auto u = on_line(1, 0.01, [](const Vec<1> &) { return 0.0; });
    EXPECT_EQ(level_set_measure<1>(u, 1.0).measure, 0.0);
}

TEST(LevelSet, HalfCube)
{
    auto u = GridFunction<2>::sample(aligned_lattice<2>({-1, -1}, {1, 1}, 0.01), [](const Vec<2> &x) { return x[0]; });
    auto m = level_set_measure<2>(u, 0.0);
    EXPECT_NEAR(m.measure, 0.5, m.slack);
    EXPECT_GT(m.slack, 0.0);
    EXPECT_LT(m.slack, 0.1);
}

TEST(LevelSet, MonotoneInThreshold)
{
    Rng rng(3);
    std::vector<double> v(201);
    for (auto &x : v)
        x = rng.uniform(0, 3);
    GridFunction<1> u(line(1, 0.01), v);
    double prev = 2.0;
    for (double t = -0.5; t < 3.5; t += 0.05) {
        double m = level_set_measure<1>(u, t).measure;
        EXPECT_LE(m, prev);
        EXPECT_LE(m, 1.0);
        EXPECT_GE(m, 0.0);
        prev = m;
    }
}

TEST(MeasureEstimate, ConstantHalf)
{
    auto k = standard_constants();
    auto u = on_line(3.5, 0.008, [](const Vec<1> &) { return 0.5; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto r = measure_estimate_check<1>(u, prm, k, 1e-9);
    EXPECT_EQ(r.measure, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(MeasureEstimate, RejectsLargeInfimum)
{
    auto k = standard_constants();
    auto u = on_line(3.5, 0.008, [](const Vec<1> &) { return 2.0; });
    auto prm = make_params(0.9, 0.04, 1.5);
    EXPECT_THROW(measure_estimate_check<1>(u, prm, k, 1e-9), Error);
    prm.eps = 0.05; // above eps0
    EXPECT_THROW(measure_estimate_check<1>(scaled<1>(u, 4), prm, k, 1e-9), Error);
}

TEST(Spreading, LargeFunctionSatisfiesConclusion)
{
    auto k = standard_constants();
    auto u = on_line(5.5, 0.008, [](const Vec<1> &x) { return 3 - x[0] * x[0] / 100; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto r = spreading_check<1>(u, prm, k, 2.0, 1e-9);
    EXPECT_TRUE(r.pass);
    EXPECT_GT(r.min_Q1, 1.0);
    EXPECT_EQ(r.n, 49);
}

TEST(Superlevel, RescaleFactorAtMostOne)
{
    auto k = standard_constants();
    auto u = on_line(5.5, 0.008, [](const Vec<1> &) { return 0.75; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto r = superlevel_iteration<1>(u, prm, k, k.M.log, 5, 1e-9);
    ASSERT_EQ(r.rows.size(), 5u);
    for (const auto &row : r.rows) {
        EXPECT_LE(row.log_rescale, 0.0);
        EXPECT_TRUE(row.pass);
    }
    EXPECT_EQ(r.L, 0);
    EXPECT_FALSE(r.cz[0].run); // c/K exceeds one with these constants
    EXPECT_THROW(superlevel_iteration<1>(u, prm, k, k.M.log - 1, 5, 1e-9), Error);
}

TEST(Superlevel, GenerationCount)
{
    for (double eps : {0.04, 0.02, 0.011, 0.005}) {
        int L = cz_generations(eps, 0.0413);
        EXPECT_LT(std::ldexp(eps, L), 0.0413);
        EXPECT_GE(std::ldexp(eps, L + 1), 0.0413);
    }
}

TEST(Superlevel, CalibratedLadderRunsDecomposition)
{
    auto u = on_line(1, 0.004, [](const Vec<1> &x) { return 1 + std::exp(-20 * x[0] * x[0]); });
    auto steps = cz_ladder_exercise<1>(u, 1.2, 3, Rational(1, 2), Rational(1, 4), 2);
    ASSERT_EQ(steps.size(), 3u);
    for (const auto &e : steps) {
        if (e.run) {
            EXPECT_TRUE(e.conclusion);
            EXPECT_TRUE(e.audit);
        }
        EXPECT_LE(e.measure_A, e.measure_B);
    }
}

TEST(Decay, BoundedFunctionHasEmptyProfile)
{
    auto k = standard_constants();
    auto u = on_line(1, 0.01, [](const Vec<1> &x) { return std::abs(x[0]); });
    auto prof = level_set_profile<1>(u, power_ladder(2.0, 10));
    auto fit = decay_fit(prof, k);
    EXPECT_TRUE(fit.pass);
    EXPECT_FALSE(fit.fitted);
    // t = 1: the bound is d itself
    EXPECT_NEAR(fit.rows[0].log_bound, k.d.log, 1e-12);
    EXPECT_THROW(decay_fit(LevelSetProfile{}, k), Error);
}

TEST(Decay, FitDominatesProfile)
{
    auto k = standard_constants();
    auto u = on_line(1, 0.001, [](const Vec<1> &x) { return std::pow(std::abs(x[0]) + 1e-3, -1.5); });
    auto prof = level_set_profile<1>(u, power_ladder(2.0, 10));
    for (std::size_t i = 1; i < prof.measures.size(); ++i)
        EXPECT_LE(prof.measures[i], prof.measures[i - 1]);
    auto fit = decay_fit(prof, k);
    ASSERT_TRUE(fit.fitted);
    EXPECT_GE(fit.d_fit, 1.0);
    for (const auto &row : fit.rows) {
        if (row.t > 1 && row.measure > 0) {
            EXPECT_LE(std::log(row.measure), row.log_bound_fit + 1e-12);
        }
    }
}

TEST(DeGiorgi, ShiftedConstant)
{
    auto k = standard_constants();
    auto u = on_line(5.5, 0.008, [](const Vec<1> &) { return 1.25; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto r = de_giorgi_check<1>(u, prm, k, 0.9, 0.5, 1e-9);
    EXPECT_TRUE(r.premise);
    EXPECT_GE(r.margin_inf, 0.0);
    EXPECT_GE(r.margin_osc, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(DeGiorgi, LargeRhoBranchIdentity)
{
    auto k = standard_constants();
    // a concave profile has L+ u < 0, so rho > 0 on B_{kR}
    auto u = on_line(5.5, 0.008, [](const Vec<1> &x) { return 40 - x[0] * x[0]; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto r = de_giorgi_check<1>(u, prm, k, 0.5, 0.5, 1e-9);
    EXPECT_GT(r.rho, 0.0);
    EXPECT_TRUE(r.large_rho_branch);
    EXPECT_TRUE(r.branch_identity);
    EXPECT_TRUE(r.pass);
}

TEST(Holder, ConstantIsUnconstrained)
{
    auto u = on_line(3, 0.008, [](const Vec<1> &) { return 4.0; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto h = holder_estimate<1>(u, prm, 0.0, 2.0, 0.0413, 1e-9);
    EXPECT_TRUE(h.unconstrained);
    EXPECT_EQ(h.C_est, 0.0);
    EXPECT_TRUE(h.audit_pass);
}

TEST(Holder, AffineIsLipschitz)
{
    auto u = on_line(3, 0.008, [](const Vec<1> &x) { return 1 + 0.7 * x[0]; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto h = holder_estimate<1>(u, prm, 0.0, 2.0, 0.0413, 1e-9);
    EXPECT_FALSE(h.unconstrained);
    EXPECT_NEAR(h.gamma_est, 1.0, 1e-12);
    EXPECT_TRUE(h.audit_pass);
    EXPECT_LE(h.audit_pairs, 10000u);
    EXPECT_GT(h.audit_pairs, 1000u);
    for (std::size_t j = 1; j < h.modulus.size(); ++j)
        EXPECT_GE(h.modulus[j], h.modulus[j - 1]);
}

TEST(Holder, RejectsLargeEps)
{
    auto u = on_line(3, 0.05, [](const Vec<1> &) { return 1.0; });
    auto prm = make_params(0.9, 0.1, 1.5);
    EXPECT_THROW(holder_estimate<1>(u, prm, 0.0, 2.0, 0.0413, 1e-9), Error);
}

TEST(Harnack, ConstantQuotientIsOne)
{
    auto k = standard_constants();
    auto u = on_line(7.2, 0.008, [](const Vec<1> &) { return 3.0; });
    auto prm = make_params(0.9, 0.04, 1.5);
    auto h = harnack_report<1>(u, prm, 0.0, k, 1e-9);
    EXPECT_DOUBLE_EQ(h.quotient, 1.0);
    EXPECT_TRUE(h.pass);
}

TEST(Apuja, BracketAtTheEdge)
{
    const double log_C = 0.0, g = 1.0, lam = 1.0, kap = 1.0;
    const double delta = std::exp(detail::log_delta_from(log_C, lam, g));
    for (int k0 = 1; k0 <= 6; ++k0) {
        // kappa eps / (2 delta) = 2^{-(k0+1)} exactly
        double eps = delta / (kap * std::ldexp(1.0, k0));
        EXPECT_EQ(apuja_k0(eps, kap, std::log(delta)), k0);
        EXPECT_EQ(apuja_k0(eps * 1.5, kap, std::log(delta)), k0);
    }
}

TEST(Apuja, SmoothChainStaysInside)
{
    auto u = on_line(3.2, 0.002, [](const Vec<1> &x) { return 2 + std::cos(x[0]); });
    auto t = apuja_iteration_trace<1>(u, 0.01, 0.0, 0.0, 1.0, 1.0, 1.0);
    EXPECT_EQ(t.k0, 4);
    EXPECT_TRUE(t.k0_bracket);
    EXPECT_TRUE(t.identity);
    EXPECT_FALSE(t.escaped_B2);
    EXPECT_FALSE(t.contradiction);
    EXPECT_EQ(t.stop_k, 1);
    EXPECT_TRUE(t.pass);
}

TEST(Apuja, PaperConstantsGiveNoChain)
{
    auto k = standard_constants();
    auto u = on_line(3.2, 0.008, [](const Vec<1> &x) { return 2 + std::cos(x[0]); });
    auto t = apuja_iteration_trace<1>(u, 0.04, 0.0, k.C_lemma.log, 1.0, k.lambda, k.kappa);
    EXPECT_LT(t.k0, 1);
    EXPECT_TRUE(t.steps.empty());
    EXPECT_TRUE(t.pass);
}

TEST(Counterexample, RootsForFourFifths)
{
    auto s = counterexample_spec(0.8, 0.1, 5.0, 30);
    EXPECT_NEAR(s.phi, 2.0, 1e-15);
    EXPECT_NEAR(s.phibar, 0.5, 1e-15);
    EXPECT_LE(s.root_product_error(), 1e-12);
    EXPECT_LE(s.root_sum_error(), 1e-12);
    for (std::size_t k = 1; k + 1 < s.ak.size(); ++k)
        EXPECT_LE(s.recurrence_residual(k), 1e-12);
    // a_1 = a, so the closed form carries a - 1
    for (std::size_t k = 0; k < s.ak.size(); ++k)
        EXPECT_NEAR(s.ak[k] / s.closed_form(k), 1.0, 1e-12);
}

TEST(Counterexample, ExactDppOnBothDimensions)
{
    auto c1 = build_counterexample<1>(0.5, 0.05, 10.0, 4, 2.0);
    EXPECT_LE(c1.max_residual, 1e-12);
    EXPECT_GT(c1.nodes_checked, 100u);
    auto c2 = build_counterexample<2>(0.5, 0.1, 10.0, 4, 2.0);
    EXPECT_LE(c2.max_residual, 1e-12);
    EXPECT_DOUBLE_EQ(detail::min_over<1>(c1.u, centered_ball<1>(1)), 1.0);
    EXPECT_GE(detail::max_over<1>(c1.u, centered_ball<1>(1)), 10.0);
    EXPECT_GE(detail::max_over<2>(c2.u, centered_ball<2>(1)), 10.0);
}

TEST(Counterexample, OverflowIsReported)
{
    try {
        build_counterexample<1>(0.01, 0.01, 10.0, 4, 2.0);
        FAIL() << "expected overflow";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
        EXPECT_NE(std::string(e.what()).find("k ="), std::string::npos);
    }
}

TEST(Counterexample, CorrectedHarnackHoldsWhileQuotientGrows)
{
    for (double a : {10.0, 100.0, 1000.0}) {
        auto cx = build_counterexample<1>(0.5, 0.05, a, 4, 7.0);
        auto net = lattice_direction_net<1>(1.0, 4.0);
        auto res = residual_bounds_field<1>(cx.field, cx.u.lattice(), centered_ball<1>(7), cx.params, net, cx.ball);
        EXPECT_LE(res.lminus_max, 1e-9);
        EXPECT_GE(res.lplus_min, -1e-9);
        ConstantInputs in;
        in.n = 1;
        in.Lambda = 1.0;
        in.beta = 0.5;
        auto k = build_constants(in);
        auto h = harnack_report<1>(cx.u, res, 0.0, cx.params.eps, k, 1e-9);
        EXPECT_GE(h.quotient, a);
        EXPECT_TRUE(h.pass);
    }
}

TEST(Convergence, PoissonErrorsShrink)
{
    auto s = pde_convergence_study<1>("poisson-1d", {0.2, 0.1, 0.05}, 10);
    ASSERT_EQ(s.rows.size(), 3u);
    EXPECT_TRUE(s.monotone);
    EXPECT_GT(s.order, 0.5);
    EXPECT_NEAR(s.limit_quotient, 3.0 / 2.25, 5e-3);
    EXPECT_LT(std::abs(s.rows.back().quotient - s.limit_quotient), std::abs(s.rows.front().quotient - s.limit_quotient));
}

TEST(Convergence, HarmonicQuadraticIsReproduced)
{
    auto s = pde_convergence_study<2>("harmonic-2d", {0.2}, 4, 1e-12);
    EXPECT_LT(s.rows[0].error, 1e-8);
}

TEST(Convergence, AnisotropicPair)
{
    auto s = pde_convergence_study<2>("anisotropic-pair", {0.2}, 4, 1e-12);
    EXPECT_LT(s.rows[0].error, 1e-8);
}

TEST(Convergence, UnknownCase)
{
    EXPECT_THROW(pde_convergence_study<1>("harmonic-2d", {0.1}, 4), Error);
    EXPECT_THROW(pde_convergence_study<2>("nothing", {0.1}, 4), Error);
}

TEST(Pipeline, SolvedInstanceOnSevenBall)
{
    auto s = solve_standard(5);
    const auto &prm = s.p.params;
    const double slack = 1e-6;
    auto k = standard_constants();
    // the statements with the plain L- hypothesis use rho = 0 here
    auto inf3 = detail::min_over<1>(s.u, centered_cube<1>(3));
    auto un = scaled<1>(s.u, inf3);
    EXPECT_TRUE(measure_estimate_check<1>(un, prm, k, slack).pass);
    EXPECT_TRUE(superlevel_iteration<1>(un, prm, k, k.M.log, 5, slack).pass);
    EXPECT_TRUE(spreading_check<1>(un, prm, k, 2.0, slack).pass);
    EXPECT_TRUE(decay_fit(level_set_profile<1>(un, power_ladder(2.0, 10)), k).pass);
    auto dg = de_giorgi_check<1>(scaled<1>(s.u, premise_scale<1>(s.u, 0.5)), prm, k, 0.5, 0.5, slack);
    EXPECT_TRUE(dg.premise);
    EXPECT_TRUE(dg.pass);
    const double rho = 1.0 + slack; // sup f
    auto h5 = holder_estimate<1>(s.u, prm, rho, 2.0, k.eps0.value(), slack);
    EXPECT_TRUE(h5.audit_pass);
    EXPECT_GT(h5.gamma_est, 0.0);
    auto s10 = solve_standard(10);
    auto h10 = holder_estimate<1>(s10.u, s10.p.params, rho, 2.0, k.eps0.value(), slack);
    EXPECT_LE(std::abs(h5.gamma_est - h10.gamma_est), 0.1 + 1e-12);
    auto hr = harnack_report<1>(s.u, prm, rho, k, slack);
    EXPECT_TRUE(hr.pass);
    EXPECT_GE(hr.quotient, 1.0);
}
