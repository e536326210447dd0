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

#pragma once

#include "barriers.hpp"
#include "czdecomp.hpp"
#include "envelope_abp.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <optional>

namespace dpplab {

enum class Provenance { paper_formula, calibrated, estimated };

inline const char *to_string(Provenance p)
{
    switch (p) {
    case Provenance::paper_formula:
        return "paper-formula";
    case Provenance::calibrated:
        return "calibrated";
    case Provenance::estimated:
        return "estimated";
    }
    return "?";
}

// Positive constant kept as its logarithm; most of them leave double range.
struct Constant {
    double log = 0.0;
    Provenance tag = Provenance::paper_formula;

    double value() const { return std::exp(log); }
};

inline double log_add(double a, double b)
{
    if (a == -std::numeric_limits<double>::infinity())
        return b;
    if (b == -std::numeric_limits<double>::infinity())
        return a;
    double m = std::max(a, b);
    if (std::isinf(m))
        return m;
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double safe_log(double x) { return x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

struct ConstantInputs {
    int n = 1;
    double Lambda = 1.0, beta = 1.0;
    double rho = 0.0;      // measured
    double C_abp = 1.0;    // estimated
    double gamma = 1.0;    // estimated
    double C_holder = 1.0; // estimated
    double theta = 0.5;
};

struct RegularityConstants {
    int n = 1;
    double Lambda = 1.0, beta = 1.0, theta = 0.5;

    Constant eps0;
    Constant rho{0.0, Provenance::estimated};
    Constant rho_small; // 1/(2 C_abp C_2)
    Constant C_abp{0.0, Provenance::estimated};
    Constant psi0, Psi0;
    Constant C_ball, c_ball; // 4^{N+1}/beta and |B_1| 4^-N (1 - 4^N/(C beta))
    int ell = 3;
    Constant M, one_minus_mu;
    int n_conv = 0;
    Constant C_conv; // f^{*n}(2 sqrt N e_1 / eps0)
    Constant c;
    Constant a, d, eta;
    double sigma = 0.0, lambda = 0.0, kappa = 0.0;
    Constant gamma{0.0, Provenance::estimated};
    Constant C_holder{0.0, Provenance::estimated};
    Constant C_cond1, C_lemma, delta, C_tilde;
    bool vacuous = false;

    double log_mu() const { return std::log1p(-one_minus_mu.value()); }
    double mu() const { return -std::expm1(std::log1p(-one_minus_mu.value())); }
    double log_eta(double th) const;
};

namespace detail {

inline double log_a_from(double log_one_minus_mu)
{
    // a = 1/log(1/mu); for tiny 1-mu, log(1/mu) = (1-mu)(1 + (1-mu)/2 + ...)
    if (log_one_minus_mu < -30)
        return -log_one_minus_mu;
    return -std::log(-std::log1p(-std::exp(log_one_minus_mu)));
}

inline double log_eta_from(double log_a, double log_d, double theta)
{
    double gap = log_d - std::log(theta);
    if (gap <= 0)
        return 0.0;
    return -std::exp(log_a + 2 * std::log(gap));
}

inline double log_delta_from(double log_C, double lambda, double gamma)
{
    return -((1 + 2 * lambda) * std::log(2.0) + log_C) / gamma;
}

inline double log_C_tilde_from(double log_C, double lambda, double gamma, double kappa)
{
    double head = (2 * lambda / gamma) * ((1 + 2 * lambda) * std::log(2.0) + log_C);
    return head + std::max(log_C + (2 + 2 * lambda) * std::log(2.0), 2 * lambda * std::log(2 * kappa));
}

} // namespace detail

inline double RegularityConstants::log_eta(double th) const { return detail::log_eta_from(a.log, d.log, th); }

// Odd l with l - 2 < 3 sqrt N <= l.
inline int ell_of(int n)
{
    auto l = static_cast<int>(std::ceil(3 * std::sqrt(static_cast<double>(n)) - 1e-12));
    return l % 2 ? l : l + 1;
}

// Smallest integer n with 2 sqrt N < n eps0; it also satisfies n eps0 < 9/2 sqrt N + eps0.
inline int spreading_n(int n, double eps0)
{
    require(eps0 > 0, ErrorKind::precondition, "eps0 must be positive");
    const double s = std::sqrt(static_cast<double>(n));
    auto k = static_cast<int>(std::floor(2 * s / eps0)) + 1;
    require(k * eps0 > 2 * s && k * eps0 < 4.5 * s + eps0, ErrorKind::domain, "no admissible integer n");
    return k;
}

// log of the n-fold self-convolution of the uniform density on B_1, at distance s
// from the origin. Exact only on the line: the density of a sum of n uniforms on
// (-1, 1), through the Irwin-Hall sum evaluated in extended precision.
inline std::optional<double> log_ball_convolution(int dim, int n, double s)
{
    if (dim != 1 || n < 1)
        return std::nullopt;
    s = std::abs(s);
    if (s >= n)
        return std::nullopt;
    using Big = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<400>>;
    require(n <= 600, ErrorKind::domain, "convolution order too large");
    Big y = (Big(s) + n) / 2;
    if (y > Big(n) / 2)
        y = Big(n) - y;
    Big sum = 0, binom = 1, fact = 1;
    for (int k = 1; k < n; ++k)
        fact *= k;
    const auto top = static_cast<int>(boost::multiprecision::floor(y).convert_to<double>());
    for (int k = 0; k <= top && k <= n; ++k) {
        Big t = binom * boost::multiprecision::pow(y - k, n - 1);
        sum += (k % 2 ? -t : t);
        binom = binom * (n - k) / (k + 1);
    }
    Big dens = sum / fact / 2;
    if (dens <= 0)
        return std::nullopt;
    return boost::multiprecision::log(dens).convert_to<double>();
}

inline RegularityConstants build_constants(const ConstantInputs &in)
{
    require(in.beta > 0 && in.beta <= 1, ErrorKind::precondition, "beta must lie in (0, 1]");
    require(in.Lambda >= 1, ErrorKind::precondition, "Lambda must be at least 1");
    require(in.rho >= 0 && in.C_abp > 0 && in.gamma > 0 && in.gamma <= 1 && in.C_holder > 0,
            ErrorKind::precondition, "constant inputs out of range");
    require(in.theta > 0 && in.theta <= 1, ErrorKind::precondition, "theta must lie in (0, 1]");
    const int N = in.n;
    const double ln2 = std::log(2.0);
    RegularityConstants k;
    k.n = N;
    k.Lambda = in.Lambda;
    k.beta = in.beta;
    k.theta = in.theta;

    auto gb = build_global_barrier(N, in.Lambda, in.beta);
    const double eps0 = gb.eps0;
    k.eps0 = {std::log(eps0), Provenance::paper_formula};
    k.rho = {safe_log(in.rho), Provenance::estimated};
    k.C_abp = {std::log(in.C_abp), Provenance::estimated};
    k.psi0 = {gb.log_A + std::log(gb.sigma) + 2 * std::log(in.Lambda), Provenance::paper_formula};
    k.Psi0 = {gb.log_A + std::log1p(-std::exp(gb.log_B - gb.log_A)), Provenance::paper_formula};
    k.C_ball = {(N + 1) * std::log(4.0) - std::log(in.beta), Provenance::paper_formula};
    k.c_ball = {std::log(unit_ball_volume(N)) - N * std::log(4.0) + std::log(0.75), Provenance::paper_formula};
    k.ell = ell_of(N);

    const double C2 = std::pow(ball_volume(N, 2 * std::sqrt(static_cast<double>(N)) + eps0 / 4), 1.0 / N);
    k.rho_small = {-std::log(2 * in.C_abp * C2), Provenance::paper_formula};

    // M = Psi(0) + C (psi(0) + rho) eps0^2
    k.M = {log_add(k.Psi0.log, k.C_ball.log + log_add(k.psi0.log, k.rho.log) + 2 * k.eps0.log),
           Provenance::paper_formula};
    // 1 - mu = c (2 C_1 psi(0) l)^-N
    k.one_minus_mu = {k.c_ball.log - N * (ln2 + k.C_abp.log + k.psi0.log + std::log(k.ell)),
                      Provenance::paper_formula};

    k.n_conv = spreading_n(N, eps0);
    auto lc = log_ball_convolution(N, k.n_conv, 2 * std::sqrt(static_cast<double>(N)) / eps0);
    const double inf = std::numeric_limits<double>::infinity();
    if (lc) {
        k.C_conv = {*lc, Provenance::paper_formula};
        double tail = 0.0;
        if (in.rho > 0)
            tail = in.beta < 1 ? std::log1p(eps0 * eps0 * in.rho / (1 - in.beta)) : inf;
        k.c = {N * k.eps0.log - *lc - k.n_conv * std::log(in.beta) + tail, Provenance::paper_formula};
    } else {
        k.C_conv = {-inf, Provenance::estimated};
        k.c = {inf, Provenance::estimated};
    }

    k.a = {detail::log_a_from(k.one_minus_mu.log), Provenance::paper_formula};
    const double log_inv_mu = -std::log1p(-k.one_minus_mu.value());
    k.d = {std::max(k.M.log, log_add(k.c.log - k.one_minus_mu.log, log_inv_mu)), Provenance::paper_formula};
    k.eta = {k.log_eta(in.theta), Provenance::paper_formula};

    k.sigma = annular_sigma(N, in.Lambda, in.beta);
    k.lambda = 2 * k.sigma;
    k.kappa = annular_kappa(k.sigma, in.Lambda);
    k.gamma = {std::log(in.gamma), Provenance::estimated};
    k.C_holder = {std::log(in.C_holder), Provenance::estimated};
    const double s2 = 2 * k.sigma;
    const double log_decay = s2 * ln2 - std::log(std::pow(3.0, -s2) - std::pow(4.0, -s2));
    const double log_shift = std::log(9.0 * (N + 2) / (in.beta * N));
    k.C_cond1 = {std::max(log_decay, log_shift), Provenance::paper_formula};
    k.C_lemma = {std::max({0.0, k.C_cond1.log, k.C_holder.log}), Provenance::calibrated};
    k.delta = {detail::log_delta_from(k.C_lemma.log, k.lambda, in.gamma), Provenance::paper_formula};
    k.C_tilde = {detail::log_C_tilde_from(k.C_lemma.log, k.lambda, in.gamma, k.kappa), Provenance::paper_formula};
    k.vacuous = k.M.log > std::log(1e6) || k.one_minus_mu.log < std::log(1e-6) || !std::isfinite(k.c.log);
    return k;
}

// Largest deviation, in log space, of the formula-bound constants recomputed
// along a second route: a log(1/mu) = 1, delta^{-2 lambda} times the max term,
// and log(-log eta) = log a + 2 log log(d/theta).
inline double constants_consistency(const RegularityConstants &k)
{
    const double g = k.gamma.value();
    double err = 0.0;
    double x = k.one_minus_mu.value();
    double log_log_inv_mu = x > 1e-300 && k.one_minus_mu.log > -30 ? std::log(-std::log1p(-x)) : k.one_minus_mu.log;
    err = std::max(err, std::abs(k.a.log + log_log_inv_mu));
    double head = -2 * k.lambda * k.delta.log;
    double alt = head + std::max(k.C_lemma.log + (2 + 2 * k.lambda) * std::log(2.0),
                                 2 * k.lambda * std::log(2 * k.kappa));
    err = std::max(err, std::abs(alt - k.C_tilde.log) / std::max(1.0, std::abs(alt)));
    double ld = -g * k.delta.log - (1 + 2 * k.lambda) * std::log(2.0);
    err = std::max(err, std::abs(ld - k.C_lemma.log) / std::max(1.0, std::abs(ld)));
    double gap = k.d.log - std::log(k.theta);
    if (gap > 0 && k.eta.log < 0) {
        double lhs = std::log(-k.eta.log);
        double rhs = k.a.log + 2 * std::log(gap);
        err = std::max(err, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    return err;
}

// ---------------------------------------------------------------------------
// Level sets

template <int N> Region<N> centered_cube(double side) { return Region<N>::cube(zero_vec<N>(), side); }
template <int N> Region<N> centered_ball(double r) { return Region<N>::ball(zero_vec<N>(), r); }

template <int N> std::vector<std::size_t> nodes_in(const Lattice<N> &lat, const Region<N> &r)
{
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (r.contains(lat.node(f)))
            out.push_back(f);
    return out;
}

struct LevelSetMeasure {
    std::size_t count = 0; // nodes of the region where u > t
    double cell = 0.0;     // h^N
    double measure = 0.0;  // count * cell
    double slack = 0.0;    // cell times the nodes within h sqrt(N)/2 of the region boundary
};

template <int N> double boundary_slack(const Lattice<N> &lat, const Region<N> &r)
{
    const double band = lat.h() * std::sqrt(static_cast<double>(N)) / 2;
    std::size_t n = 0;
    for (std::size_t f = 0; f < lat.size(); ++f) {
        auto x = lat.node(f);
        double d = r.contains(x) ? r.depth(x) : r.distance(x);
        if (d <= band)
            ++n;
    }
    return static_cast<double>(n) * lat.cell_volume();
}

template <int N>
LevelSetMeasure level_set_measure(const GridFunction<N> &u, double t, const Region<N> &region = centered_cube<N>(1))
{
    const auto &lat = u.lattice();
    LevelSetMeasure m;
    m.cell = lat.cell_volume();
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (u.at(f) > t && region.contains(lat.node(f)))
            ++m.count;
    m.measure = static_cast<double>(m.count) * m.cell;
    m.slack = boundary_slack<N>(lat, region);
    return m;
}

struct ResidualBounds {
    double lminus_max = -std::numeric_limits<double>::infinity();
    double lplus_min = std::numeric_limits<double>::infinity();
    std::size_t nodes = 0;
};

// max L- u and min L+ u over the lattice nodes of `where`.
template <int N>
ResidualBounds residual_bounds(const GridFunction<N> &u, const OperatorParams &p, const Region<N> &where)
{
    auto nodes = nodes_in<N>(u.lattice(), where);
    auto ext = extremal_field<N>(u.lattice(), u.values(), p, nodes);
    ResidualBounds b;
    b.nodes = nodes.size();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        b.lminus_max = std::max(b.lminus_max, ext.lminus[i]);
        b.lplus_min = std::min(b.lplus_min, ext.lplus[i]);
    }
    return b;
}

// Same bounds for an explicit field, with a caller-supplied net and ball rule.
// Values below the rounding level of the stencil magnitudes count as zero.
template <int N, class F>
ResidualBounds residual_bounds_field(const F &u, const Lattice<N> &lat, const Region<N> &where,
                                     const OperatorParams &p, const DirectionNet<N> &net, const Quadrature<N> &ball)
{
    ResidualBounds b;
    const double e2 = p.eps * p.eps;
    for (std::size_t f = 0; f < lat.size(); ++f) {
        auto x = lat.node(f);
        if (!where.contains(x))
            continue;
        ++b.nodes;
        double mag = std::abs(u(x));
        for (const auto &z : net.points) {
            auto y = scale<N>(z, p.eps);
            mag = std::max({mag, std::abs(u(add<N>(x, y))), std::abs(u(sub<N>(x, y)))});
        }
        for (const auto &q : ball.pairs) {
            auto y = scale<N>(q.z, p.eps);
            mag = std::max({mag, std::abs(u(add<N>(x, y))), std::abs(u(sub<N>(x, y)))});
        }
        const double noise = 1e-13 * mag / e2;
        double lm = apply_Lminus<N>(u, x, p, net, ball).value;
        double lp = apply_Lplus<N>(u, x, p, net, ball).value;
        b.lminus_max = std::max(b.lminus_max, std::abs(lm) <= noise ? 0.0 : lm);
        b.lplus_min = std::min(b.lplus_min, std::abs(lp) <= noise ? 0.0 : lp);
    }
    return b;
}

namespace detail {

template <int N> double min_over(const GridFunction<N> &u, const Region<N> &r)
{
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < u.lattice().size(); ++f)
        if (r.contains(u.lattice().node(f)))
            m = std::min(m, u.at(f));
    return m;
}

template <int N> double max_over(const GridFunction<N> &u, const Region<N> &r)
{
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < u.lattice().size(); ++f)
        if (r.contains(u.lattice().node(f)))
            m = std::max(m, u.at(f));
    return m;
}

template <int N> void require_nonnegative(const GridFunction<N> &u, const Region<N> &r, double slack)
{
    require(min_over<N>(u, r) >= -slack, ErrorKind::precondition, "u must be nonnegative");
}

// measure - slack <= target, with target = exp(log_target) possibly far below 1e-300
// or indistinguishable from 1
inline bool measure_below(double measure, double slack, double log_target)
{
    double m = measure - slack;
    if (m <= 0 || log_target >= 0)
        return true;
    return std::log(m) <= log_target;
}

} // namespace detail

template <int N> GridFunction<N> scaled(const GridFunction<N> &u, double s)
{
    require(s > 0 && std::isfinite(s), ErrorKind::precondition, "scale must be positive");
    std::vector<double> v = u.values();
    for (auto &x : v)
        x /= s;
    return GridFunction<N>(u.lattice(), std::move(v), OutsidePolicy::error);
}

struct MeasureEstimateReport {
    double inf_Q3 = 0.0;
    double rho_measured = 0.0; // max L- u over B_{2 sqrt N}
    double log_M = 0.0;
    double measure = 0.0; // |{u > M} cap Q_1|
    double slack = 0.0;
    double log_one_minus_mu = 0.0;
    bool vacuous = false;
    bool pass = false;
};

// |{u > M} cap Q_1| <= mu whenever inf_{Q_3} u <= 1.
template <int N>
MeasureEstimateReport measure_estimate_check(const GridFunction<N> &u, const OperatorParams &p,
                                             const RegularityConstants &k, double residual_slack)
{
    const double R = 2 * std::sqrt(static_cast<double>(N));
    require(p.eps <= k.eps0.value() * (1 + 1e-12), ErrorKind::precondition, "need eps <= eps0");
    detail::require_nonnegative<N>(u, centered_ball<N>(R), residual_slack);
    MeasureEstimateReport r;
    auto res = residual_bounds<N>(u, p, centered_ball<N>(R));
    r.rho_measured = std::max(0.0, res.lminus_max);
    require(res.lminus_max <= k.rho.value() + residual_slack, ErrorKind::precondition,
            "L- u <= rho fails in B_{2 sqrt N}");
    r.inf_Q3 = detail::min_over<N>(u, centered_cube<N>(3));
    require(r.inf_Q3 <= 1 + 1e-12, ErrorKind::precondition, "need inf over Q_3 at most 1");
    r.log_M = k.M.log;
    auto ls = level_set_measure<N>(u, k.M.value(), centered_cube<N>(1));
    r.measure = ls.measure;
    r.slack = ls.slack;
    r.log_one_minus_mu = k.one_minus_mu.log;
    r.vacuous = k.vacuous;
    // measure - slack <= mu  <=>  1 - measure + slack >= 1 - mu
    double room = 1 - r.measure + r.slack;
    r.pass = room > 0 && std::log(room) >= k.one_minus_mu.log;
    return r;
}

struct SpreadingReport {
    int n = 0;
    double K = 0.0;
    double log_c = 0.0;
    double mass = 0.0; // |{u > K} cap Q_1|
    double slack = 0.0;
    bool triggered = false; // mass - slack > c/K
    double min_Q1 = 0.0;
    bool pass = false;
};

template <int N>
SpreadingReport spreading_check(const GridFunction<N> &u, const OperatorParams &p, const RegularityConstants &k,
                                double K, double residual_slack)
{
    const double e0 = k.eps0.value();
    require(p.eps >= e0 / 2 * (1 - 1e-12) && p.eps <= e0 * (1 + 1e-12), ErrorKind::precondition,
            "need eps0/2 <= eps <= eps0");
    require(K > 0, ErrorKind::precondition, "K must be positive");
    const auto Q10 = centered_cube<N>(10 * std::sqrt(static_cast<double>(N)));
    detail::require_nonnegative<N>(u, Q10, residual_slack);
    auto res = residual_bounds<N>(u, p, Q10);
    require(res.lminus_max <= k.rho.value() + residual_slack, ErrorKind::precondition,
            "L- u <= rho fails in Q_{10 sqrt N}");
    SpreadingReport r;
    r.n = k.n_conv;
    r.K = K;
    r.log_c = k.c.log;
    auto ls = level_set_measure<N>(u, K, centered_cube<N>(1));
    r.mass = ls.measure;
    r.slack = ls.slack;
    r.triggered = !detail::measure_below(r.mass, r.slack, k.c.log - std::log(K));
    r.min_Q1 = detail::min_over<N>(u, centered_cube<N>(1));
    r.pass = !r.triggered || r.min_Q1 > 1 - 1e-9;
    return r;
}

// ---------------------------------------------------------------------------
// Superlevel ladder and the decomposition underneath it

struct CzExercise {
    int k = 0;
    bool run = false;
    std::string status;
    double delta1 = 0.0, delta2 = 0.0;
    int L = 0, L_max = 0;
    double measure_A = 0.0, measure_B = 0.0, bound = 0.0;
    std::size_t selected = 0;
    bool conclusion = false;
    bool audit = false;
    int witness_generation = -1;
};

// {u > level} cap Q_1 on the dyadic grid of generation L_max, sampling u at cell centres.
template <int N> IndicatorGrid<N> superlevel_grid(const GridFunction<N> &u, double level, int L_max)
{
    IndicatorGrid<N> g(L_max);
    const double side = std::ldexp(1.0, -L_max);
    for (std::size_t f = 0; f < g.cells(); ++f) {
        auto k = g.multi(f);
        Vec<N> x;
        for (int i = 0; i < N; ++i)
            x[i] = -0.5 + (static_cast<double>(k[i]) + 0.5) * side;
        if (u(x) > level)
            g.set(f);
    }
    return g;
}

// Generation count so that 2^L eps < eps0 <= 2^{L+1} eps.
inline int cz_generations(double eps, double eps0)
{
    require(eps > 0 && eps < eps0 * (1 + 1e-12), ErrorKind::precondition, "need eps < eps0");
    auto L = static_cast<int>(std::ceil(std::log2(eps0 / eps))) - 1;
    while (std::ldexp(eps, L) >= eps0)
        --L;
    while (std::ldexp(eps, L + 1) < eps0)
        ++L;
    return std::max(L, 0);
}

// Finest grid: at least two generations below L and no coarser than the lattice.
template <int N> int cz_resolution(int L, double h)
{
    int fine = static_cast<int>(std::floor(std::log2(1 / h)));
    return std::max(L + 2, std::min(fine, 20 / N));
}

template <int N>
CzExercise cz_level_step(const GridFunction<N> &u, double lower, double upper, const Rational &d1, const Rational &d2,
                         int L, int L_max)
{
    CzExercise e;
    e.delta1 = d1.convert_to<double>();
    e.delta2 = d2.convert_to<double>();
    e.L = L;
    e.L_max = L_max;
    auto A = superlevel_grid<N>(u, upper, L_max);
    auto B = superlevel_grid<N>(u, lower, L_max);
    e.measure_A = A.measure().template convert_to<double>();
    e.measure_B = B.measure().template convert_to<double>();
    if (A.measure() > d1) {
        e.status = "not run: |A| > delta1";
        return e;
    }
    try {
        auto res = cz_decompose<N>(A, B, d1, d2, L);
        e.run = true;
        e.status = "ok";
        e.selected = res.selected.size();
        e.bound = res.bound.template convert_to<double>();
        e.conclusion = res.conclusion;
        e.audit = cz_audit<N>(A, B, res).pass();
    } catch (const CzHypothesisError<N> &err) {
        e.status = "hypothesis fails";
        e.witness_generation = err.witness.generation;
    }
    return e;
}

struct LadderRow {
    int k = 0;
    double log_level = 0.0; // k log K
    double measure = 0.0;
    double slack = 0.0;
    double log_bound = 0.0; // log(c/((1-mu)K) + mu^k)
    double log_rescale = 0.0; // log 1/(2^{2l} K^{k-1})
    bool pass = false;
};

struct SuperlevelReport {
    double log_K = 0.0;
    int L = 0;
    std::vector<LadderRow> rows;
    std::vector<CzExercise> cz;
    bool pass = false;
};

template <int N>
SuperlevelReport superlevel_iteration(const GridFunction<N> &u, const OperatorParams &p, const RegularityConstants &k,
                                      double log_K, int k_max, double residual_slack)
{
    require(k_max >= 1, ErrorKind::precondition, "k_max must be positive");
    require(log_K >= k.M.log - 1e-12 * std::abs(k.M.log), ErrorKind::precondition, "need K >= M");
    require(p.eps <= k.eps0.value() * (1 + 1e-12), ErrorKind::precondition, "need eps <= eps0");
    const auto Q10 = centered_cube<N>(10 * std::sqrt(static_cast<double>(N)));
    detail::require_nonnegative<N>(u, Q10, residual_slack);
    auto res = residual_bounds<N>(u, p, Q10);
    require(res.lminus_max <= k.rho.value() + residual_slack, ErrorKind::precondition,
            "L- u <= rho fails in Q_{10 sqrt N}");
    require(detail::min_over<N>(u, centered_cube<N>(3)) <= 1 + 1e-12, ErrorKind::precondition,
            "need inf over Q_3 at most 1");
    SuperlevelReport r;
    r.log_K = log_K;
    r.L = cz_generations(p.eps, k.eps0.value());
    const int L_max = cz_resolution<N>(r.L, u.lattice().h());
    const double lead = k.c.log - k.one_minus_mu.log - log_K;
    r.pass = true;
    for (int j = 1; j <= k_max; ++j) {
        LadderRow row;
        row.k = j;
        row.log_level = j * log_K;
        auto ls = level_set_measure<N>(u, std::exp(row.log_level), centered_cube<N>(1));
        row.measure = ls.measure;
        row.slack = ls.slack;
        row.log_bound = log_add(lead, j * k.log_mu());
        row.log_rescale = -(2 * k.ell * std::log(2.0) + (j - 1) * log_K);
        row.pass = detail::measure_below(row.measure, row.slack, row.log_bound) && row.log_rescale <= 0;
        r.pass = r.pass && row.pass;
        r.rows.push_back(row);

        CzExercise e;
        e.k = j;
        e.L = r.L;
        e.L_max = L_max;
        if (k.c.log - log_K >= 0) {
            e.status = "not run: c/K >= 1";
        } else if (k.one_minus_mu.log < -740) {
            e.status = "not run: 1 - mu below double range";
        } else {
            Rational d1 = Rational(1) - Rational(k.one_minus_mu.value());
            Rational d2 = Rational(std::exp(k.c.log - log_K));
            const double lo = std::exp((j - 1) * log_K), hi = std::exp(j * log_K);
            e = cz_level_step<N>(u, lo, hi, d1, d2, r.L, L_max);
            e.k = j;
        }
        r.cz.push_back(e);
    }
    return r;
}

// The same decomposition step on a ladder with caller-chosen thresholds.
template <int N>
std::vector<CzExercise> cz_ladder_exercise(const GridFunction<N> &u, double K, int k_max, const Rational &d1,
                                           const Rational &d2, int L)
{
    require(K > 1, ErrorKind::precondition, "K must exceed 1");
    const int L_max = cz_resolution<N>(L, u.lattice().h());
    std::vector<CzExercise> out;
    for (int j = 1; j <= k_max; ++j) {
        auto e = cz_level_step<N>(u, std::pow(K, j - 1), std::pow(K, j), d1, d2, L, L_max);
        e.k = j;
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Power decay of level sets

struct LevelSetProfile {
    std::vector<double> thresholds;
    std::vector<double> measures;
    double slack = 0.0;
};

template <int N>
LevelSetProfile level_set_profile(const GridFunction<N> &u, const std::vector<double> &thresholds,
                                  const Region<N> &region = centered_cube<N>(1))
{
    LevelSetProfile p;
    p.thresholds = thresholds;
    std::sort(p.thresholds.begin(), p.thresholds.end());
    for (double t : p.thresholds) {
        auto m = level_set_measure<N>(u, t, region);
        p.measures.push_back(m.measure);
        p.slack = m.slack;
    }
    return p;
}

inline std::vector<double> power_ladder(double base, int top)
{
    std::vector<double> t;
    for (int j = 0; j <= top; ++j)
        t.push_back(std::pow(base, j));
    return t;
}

struct LevelDecayRow {
    double t = 0.0, measure = 0.0;
    double log_bound = 0.0;     // formula (a, d)
    double log_bound_fit = 0.0; // fitted (a, d)
    bool pass = false;
};

struct DecayFit {
    double log_a = 0.0, log_d = 0.0; // formula
    bool pass = false;
    bool fitted = false; // enough positive measures for a fit
    double a_fit = 0.0, d_fit = 0.0;
    std::size_t fit_points = 0;
    std::vector<LevelDecayRow> rows;
};

// |{u > t} cap Q_1| <= d exp(-sqrt(log t / a)) for t >= 1.
inline DecayFit decay_fit(const LevelSetProfile &prof, const RegularityConstants &k)
{
    require(!prof.thresholds.empty() && prof.thresholds.size() == prof.measures.size(), ErrorKind::precondition,
            "empty level-set profile");
    DecayFit fit;
    fit.log_a = k.a.log;
    fit.log_d = k.d.log;
    // y = log m against x = sqrt(log t): y = log d - x / sqrt(a)
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < prof.thresholds.size(); ++i) {
        double t = prof.thresholds[i];
        require(t >= 1, ErrorKind::precondition, "thresholds must be at least 1");
        if (t > 1 && prof.measures[i] > 0) {
            xs.push_back(std::sqrt(std::log(t)));
            ys.push_back(std::log(prof.measures[i]));
        }
    }
    fit.fit_points = xs.size();
    double slope = 0.0, icpt = 0.0;
    if (xs.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= static_cast<double>(xs.size());
        my /= static_cast<double>(xs.size());
        double sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - mx) * (xs[i] - mx);
            sxy += (xs[i] - mx) * (ys[i] - my);
        }
        if (sxx > 0) {
            fit.fitted = true;
            slope = std::min(0.0, sxy / sxx);
            icpt = my - slope * mx;
        }
    }
    if (fit.fitted) {
        // raise d until the fitted curve dominates every point
        for (std::size_t i = 0; i < xs.size(); ++i)
            icpt = std::max(icpt, ys[i] - slope * xs[i]);
        icpt = std::max(icpt, 0.0);
        fit.a_fit = slope < 0 ? 1 / (slope * slope) : std::numeric_limits<double>::infinity();
        fit.d_fit = std::exp(icpt);
    }
    fit.pass = true;
    const double root_inv_a = std::exp(-k.a.log / 2);
    for (std::size_t i = 0; i < prof.thresholds.size(); ++i) {
        LevelDecayRow row;
        row.t = prof.thresholds[i];
        row.measure = prof.measures[i];
        const double x = std::sqrt(std::log(row.t));
        row.log_bound = k.d.log - x * root_inv_a;
        row.log_bound_fit = fit.fitted ? icpt + slope * x : std::numeric_limits<double>::quiet_NaN();
        row.pass = detail::measure_below(row.measure, prof.slack, row.log_bound);
        fit.pass = fit.pass && row.pass;
        fit.rows.push_back(row);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// De Giorgi oscillation

struct DeGiorgiReport {
    double theta = 0.0;
    double log_eta = 0.0;
    // small-mass form
    double mass_Q1 = 0.0; // |Q_1 cap {u > 1}|
    bool premise = false;
    double inf_Q3 = 0.0;
    double margin_inf = 0.0; // inf_{Q_3} u - eta
    bool pass_inf = false;
    // oscillation form on B_R with k = 10 N
    double R = 0.0;
    int k = 0;
    double M = 0.0, m = 0.0, sup_BR = 0.0;
    double rho = 0.0;   // max(0, -min L+ u) over B_{kR}
    double log_C = 0.0; // 4 / rho_small
    double rhs = 0.0;
    double margin_osc = 0.0;
    double osc_ratio = 0.0; // (sup_{B_R} u - m) / (M - m)
    bool large_rho_branch = false;
    bool branch_identity = true;
    bool pass_osc = false;
    bool pass = false;
};

template <int N>
DeGiorgiReport de_giorgi_check(const GridFunction<N> &u, const OperatorParams &p, const RegularityConstants &k,
                               double theta, double R, double residual_slack)
{
    require(theta > 0 && theta <= 1, ErrorKind::precondition, "theta must lie in (0, 1]");
    require(R > 0, ErrorKind::precondition, "R must be positive");
    DeGiorgiReport r;
    r.theta = theta;
    r.log_eta = k.log_eta(theta);
    const double eta = std::exp(r.log_eta);

    const auto Q10 = centered_cube<N>(10 * std::sqrt(static_cast<double>(N)));
    detail::require_nonnegative<N>(u, Q10, residual_slack);
    auto res = residual_bounds<N>(u, p, Q10);
    require(res.lminus_max <= eta * k.rho_small.value() + residual_slack, ErrorKind::precondition,
            "L- u <= eta rho fails in Q_{10 sqrt N}");
    auto ls = level_set_measure<N>(u, 1.0, centered_cube<N>(1));
    r.mass_Q1 = ls.measure;
    r.premise = ls.measure >= theta;
    r.inf_Q3 = detail::min_over<N>(u, centered_cube<N>(3));
    r.margin_inf = r.inf_Q3 - eta;
    r.pass_inf = !r.premise || r.margin_inf >= 0;

    r.R = R;
    r.k = 10 * N;
    const auto BkR = centered_ball<N>(r.k * R), BR = centered_ball<N>(R);
    auto resk = residual_bounds<N>(u, p, BkR);
    r.rho = std::max(0.0, -resk.lplus_min);
    r.M = detail::max_over<N>(u, BkR);
    std::vector<double> vals;
    for (auto f : nodes_in<N>(u.lattice(), BR))
        vals.push_back(u.at(f));
    require(!vals.empty(), ErrorKind::precondition, "B_R holds no nodes");
    std::sort(vals.begin(), vals.end());
    auto idx = static_cast<std::size_t>(std::ceil(theta * static_cast<double>(vals.size())));
    r.m = vals[std::min(vals.size(), std::max<std::size_t>(idx, 1)) - 1];
    r.sup_BR = vals.back();
    r.log_C = std::log(4.0) - k.rho_small.log;
    const double corr = r.rho > 0 ? std::exp(r.log_C + 2 * std::log(R) + std::log(r.rho)) : 0.0;
    r.rhs = (1 - eta) * r.M + eta * r.m + corr;
    r.margin_osc = r.rhs - r.sup_BR;
    r.osc_ratio = r.M > r.m ? (r.sup_BR - r.m) / (r.M - r.m) : 0.0;
    if (r.rho > 0 && r.M > r.m) {
        double lhs = std::log(4 * R * R * r.rho);
        double thr = k.rho_small.log + r.log_eta + std::log(r.M - r.m);
        r.large_rho_branch = lhs >= thr;
        // in that branch eta (M - m) <= C R^2 rho
        if (r.large_rho_branch)
            r.branch_identity = r.log_eta + std::log(r.M - r.m) <= r.log_C + 2 * std::log(R) + std::log(r.rho) + 1e-12;
    }
    r.pass_osc = r.margin_osc >= 0;
    r.pass = r.pass_inf && r.pass_osc && r.branch_identity;
    return r;
}

// Scale s with |Q_1 cap {u/s > 1}| >= theta on the lattice.
template <int N> double premise_scale(const GridFunction<N> &u, double theta)
{
    std::vector<double> vals;
    for (auto f : nodes_in<N>(u.lattice(), centered_cube<N>(1)))
        vals.push_back(u.at(f));
    require(!vals.empty(), ErrorKind::precondition, "Q_1 holds no nodes");
    std::sort(vals.begin(), vals.end(), std::greater<>());
    auto need = static_cast<std::size_t>(std::ceil(theta / u.lattice().cell_volume() - 1e-9));
    require(need <= vals.size(), ErrorKind::precondition, "theta exceeds the lattice measure of Q_1");
    double v = vals[std::max<std::size_t>(need, 1) - 1];
    require(v > 0, ErrorKind::precondition, "u vanishes on too much of Q_1");
    return v * (1 - 1e-9);
}

// ---------------------------------------------------------------------------
// Hölder estimate

struct HolderReport {
    double R = 0.0, eps = 0.0, rho = 0.0;
    double sup_abs = 0.0; // sup_{B_R} |u|
    bool unconstrained = false;
    double gamma_est = 0.0, C_est = 0.0;
    double fit_residual = 0.0;
    std::vector<double> radii, modulus; // oscillation modulus on B_{R/2}
    std::vector<double> gamma_grid, C_grid;
    std::size_t fit_nodes = 0, audit_nodes = 0, audit_pairs = 0;
    double audit_worst = 0.0; // max |u(x) - u(z)| / bound
    bool audit_pass = false;
};

template <int N>
HolderReport holder_estimate(const GridFunction<N> &u, const OperatorParams &p, double rho, double R, double eps0,
                             double residual_slack)
{
    require(R > 0 && rho >= 0, ErrorKind::precondition, "need R > 0 and rho >= 0");
    require(p.eps < eps0 * R, ErrorKind::precondition, "need eps < eps0 R");
    auto res = residual_bounds<N>(u, p, centered_ball<N>(R));
    require(res.lminus_max <= rho + residual_slack && res.lplus_min >= -rho - residual_slack,
            ErrorKind::precondition, "residual outside +-rho in B_R");
    HolderReport h;
    h.R = R;
    h.eps = p.eps;
    h.rho = rho;
    const auto &lat = u.lattice();
    for (auto f : nodes_in<N>(lat, centered_ball<N>(R)))
        h.sup_abs = std::max(h.sup_abs, std::abs(u.at(f)));
    const double S = h.sup_abs + R * R * rho;

    auto inner = nodes_in<N>(lat, centered_ball<N>(R / 2));
    require(inner.size() >= 4, ErrorKind::precondition, "B_{R/2} holds too few nodes");
    auto thin = [](const std::vector<std::size_t> &v, std::size_t cap) {
        std::size_t stride = (v.size() + cap - 1) / cap;
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < v.size(); i += std::max<std::size_t>(stride, 1))
            out.push_back(v[i]);
        return out;
    };
    std::vector<std::size_t> fit_set, audit_set;
    for (std::size_t i = 0; i < inner.size(); ++i)
        (i % 2 ? audit_set : fit_set).push_back(inner[i]);
    fit_set = thin(fit_set, 1500);
    audit_set = thin(audit_set, 141);
    h.fit_nodes = fit_set.size();
    h.audit_nodes = audit_set.size();

    const int nr = 12;
    const double r_lo = std::max(2 * p.eps, 2 * lat.h()), r_hi = R;
    for (int j = 0; j < nr; ++j)
        h.radii.push_back(r_lo * std::pow(r_hi / r_lo, j / (nr - 1.0)));
    h.modulus.assign(nr, 0.0);
    for (std::size_t i = 0; i < fit_set.size(); ++i) {
        auto xi = lat.node(fit_set[i]);
        for (std::size_t j = i + 1; j < fit_set.size(); ++j) {
            double d = dist<N>(xi, lat.node(fit_set[j]));
            auto it = std::lower_bound(h.radii.begin(), h.radii.end(), d);
            if (it == h.radii.end())
                continue;
            auto b = static_cast<std::size_t>(it - h.radii.begin());
            h.modulus[b] = std::max(h.modulus[b], std::abs(u.at(fit_set[i]) - u.at(fit_set[j])));
        }
    }
    for (int j = 1; j < nr; ++j)
        h.modulus[j] = std::max(h.modulus[j], h.modulus[j - 1]);

    for (int g = 1; g <= 20; ++g)
        h.gamma_grid.push_back(0.05 * g);
    if (S <= 0 || h.modulus.back() <= 1e-14 * std::max(1.0, S)) {
        h.unconstrained = true;
        h.gamma_est = 1.0;
        h.C_est = 0.0;
        h.C_grid.assign(h.gamma_grid.size(), 0.0);
        h.audit_pass = true;
        return h;
    }
    // log w(r) ~ log C + gamma log r on the radii where the modulus is positive
    double best = std::numeric_limits<double>::infinity();
    for (double g : h.gamma_grid) {
        double mean = 0.0;
        int cnt = 0;
        for (int j = 0; j < nr; ++j)
            if (h.modulus[j] > 0) {
                mean += std::log(h.modulus[j]) - g * std::log(h.radii[j]);
                ++cnt;
            }
        mean /= cnt;
        double ss = 0.0;
        for (int j = 0; j < nr; ++j)
            if (h.modulus[j] > 0) {
                double e = std::log(h.modulus[j]) - g * std::log(h.radii[j]) - mean;
                ss += e * e;
            }
        if (ss < best - 1e-15) {
            best = ss;
            h.gamma_est = g;
        }
    }
    h.fit_residual = best;
    auto worst_ratio = [&](const std::vector<std::size_t> &set, double g, std::size_t *pairs) {
        double w = 0.0;
        const double eg = std::pow(p.eps, g), Rg = std::pow(R, g);
        for (std::size_t i = 0; i < set.size(); ++i) {
            auto xi = lat.node(set[i]);
            for (std::size_t j = i + 1; j < set.size(); ++j) {
                double d = dist<N>(xi, lat.node(set[j]));
                double den = S / Rg * (std::pow(d, g) + eg);
                w = std::max(w, std::abs(u.at(set[i]) - u.at(set[j])) / den);
                if (pairs)
                    ++*pairs;
            }
        }
        return w;
    };
    for (double g : h.gamma_grid)
        h.C_grid.push_back(worst_ratio(fit_set, g, nullptr));
    auto gi = static_cast<std::size_t>(std::llround(h.gamma_est / 0.05)) - 1;
    h.C_est = 1.25 * h.C_grid[gi];
    h.audit_worst = worst_ratio(audit_set, h.gamma_est, &h.audit_pairs) / h.C_est;
    h.audit_pass = h.audit_worst <= 1 + 1e-12;
    return h;
}

// ---------------------------------------------------------------------------
// Harnack

struct HarnackReport {
    double sup_B1 = 0.0, inf_B1 = 0.0, sup_B3 = 0.0;
    double rho = 0.0, eps = 0.0, lambda = 0.0;
    double quotient = 0.0; // sup/inf on B_1
    double log_C_tilde = 0.0;
    double log_rhs = 0.0;  // log C~ (inf + rho + eps^{2 lambda} sup_{B_3})
    double log_sup = 0.0;
    bool pass = false;
};

template <int N>
HarnackReport harnack_report(const GridFunction<N> &u, const ResidualBounds &res, double rho, double eps,
                             const RegularityConstants &k, double slack)
{
    require(res.lminus_max <= rho + slack && res.lplus_min >= -rho - slack, ErrorKind::precondition,
            "residual outside +-rho in B_7");
    require(eps < k.eps0.value() * (1 + 1e-12) && eps * k.kappa < 1, ErrorKind::precondition, "eps too large");
    const auto B3 = centered_ball<N>(3), B1 = centered_ball<N>(1);
    detail::require_nonnegative<N>(u, centered_ball<N>(7), slack);
    HarnackReport h;
    h.rho = rho;
    h.eps = eps;
    h.lambda = k.lambda;
    h.sup_B1 = detail::max_over<N>(u, B1);
    h.inf_B1 = std::max(0.0, detail::min_over<N>(u, B1));
    h.sup_B3 = detail::max_over<N>(u, B3);
    h.quotient = h.inf_B1 > 0 ? h.sup_B1 / h.inf_B1 : std::numeric_limits<double>::infinity();
    h.log_C_tilde = k.C_tilde.log;
    double inner = log_add(safe_log(h.inf_B1 + rho), 2 * k.lambda * std::log(eps) + safe_log(h.sup_B3));
    h.log_rhs = h.log_C_tilde + inner;
    h.log_sup = safe_log(h.sup_B1);
    h.pass = h.log_sup <= h.log_rhs;
    return h;
}

template <int N>
HarnackReport harnack_report(const GridFunction<N> &u, const OperatorParams &p, double rho,
                             const RegularityConstants &k, double slack)
{
    auto res = residual_bounds<N>(u, p, centered_ball<N>(7));
    return harnack_report<N>(u, res, rho, p.eps, k, slack);
}

// ---------------------------------------------------------------------------
// The point chase behind the Harnack bound

struct ChainStep {
    int k = 0;
    double R_k = 0.0;
    double log_M_k = 0.0;
    std::vector<double> x;
    double u = 0.0;
    bool above = false; // u(x_k) > M_k T
};

struct ApujaTrace {
    double log_C = 0.0, gamma = 0.0, lambda = 0.0, kappa = 0.0, eps = 0.0;
    double log_delta = 0.0;
    int k0 = 0;
    bool k0_bracket = false; // 2^{-(k0+1)} <= kappa eps/(2 delta) < 2^{-k0}
    bool identity = true;    // eps^{2 lambda} >= (delta/(2 kappa))^{2 lambda} M_1/M_{k0}
    double log_T = 0.0;      // log(sup_{B_3} u / M_{k0} + inf_{B_1} u + rho)
    std::vector<ChainStep> steps;
    int stop_k = 0;          // first k with u(x_k) <= M_k T, 0 when the chain never starts
    bool escaped_B2 = false;
    bool contradiction = false;
    bool pass = false;
};

inline double log_M_k(int k, double log_C, double log_delta, double lambda)
{
    return std::log(4.0) + log_C - 2 * lambda * (log_delta - k * std::log(2.0));
}

inline int apuja_k0(double eps, double kappa, double log_delta)
{
    // t = kappa eps / (2 delta); k0 = ceil(-log2 t) - 1
    double l2t = (std::log(kappa * eps / 2) - log_delta) / std::log(2.0);
    return static_cast<int>(std::ceil(-l2t - 1e-12)) - 1;
}

template <int N>
ApujaTrace apuja_iteration_trace(const GridFunction<N> &u, double eps, double rho, double log_C, double gamma,
                                 double lambda, double kappa)
{
    require(gamma > 0 && lambda > 0 && kappa > 0 && eps > 0, ErrorKind::precondition, "bad chase constants");
    const auto &lat = u.lattice();
    const auto B3 = centered_ball<N>(3), B1 = centered_ball<N>(1);
    require(detail::min_over<N>(u, B3) > 0, ErrorKind::precondition, "u must be positive on B_3");
    ApujaTrace t;
    t.log_C = log_C;
    t.gamma = gamma;
    t.lambda = lambda;
    t.kappa = kappa;
    t.eps = eps;
    t.log_delta = detail::log_delta_from(log_C, lambda, gamma);
    t.k0 = apuja_k0(eps, kappa, t.log_delta);
    const double l2t = (std::log(kappa * eps / 2) - t.log_delta) / std::log(2.0);
    t.k0_bracket = -(t.k0 + 1) <= l2t + 1e-9 && l2t < -t.k0 + 1e-9;
    const double sup3 = detail::max_over<N>(u, B3), inf1 = detail::min_over<N>(u, B1);
    if (t.k0 >= 1) {
        double lhs = 2 * lambda * std::log(eps);
        double rhs = 2 * lambda * (t.log_delta - std::log(2 * kappa)) + log_M_k(1, log_C, t.log_delta, lambda) -
                     log_M_k(t.k0, log_C, t.log_delta, lambda);
        t.identity = lhs >= rhs - 1e-9 * std::max(1.0, std::abs(rhs));
        t.log_T = std::log(sup3 * std::exp(-log_M_k(t.k0, log_C, t.log_delta, lambda)) + inf1 + rho);

        auto argmax_in = [&](const Region<N> &r) {
            std::size_t best = lat.size();
            for (std::size_t f = 0; f < lat.size(); ++f)
                if (r.contains(lat.node(f)) && (best == lat.size() || u.at(f) > u.at(best)))
                    best = f;
            return best;
        };
        std::size_t cur = argmax_in(B1);
        for (int k = 1; k <= t.k0; ++k) {
            ChainStep s;
            s.k = k;
            s.R_k = std::ldexp(1.0, 1 - k);
            s.log_M_k = log_M_k(k, log_C, t.log_delta, lambda);
            auto x = lat.node(cur);
            s.x.assign(x.begin(), x.end());
            s.u = u.at(cur);
            s.above = std::log(s.u) > s.log_M_k + t.log_T;
            t.steps.push_back(s);
            if (!s.above) {
                t.stop_k = k;
                break;
            }
            if (k == t.k0) {
                t.contradiction = true;
                break;
            }
            cur = argmax_in(Region<N>::ball(x, s.R_k));
            if (norm<N>(lat.node(cur)) >= 2)
                t.escaped_B2 = true;
        }
    }
    t.pass = t.k0_bracket && t.identity && !t.escaped_B2 && !t.contradiction;
    return t;
}

// ---------------------------------------------------------------------------
// The counterexample to the classical Harnack inequality

struct CounterexampleSpec {
    double alpha = 0.5, eps = 0.1, a = 1.0;
    double phi = 0.0, phibar = 0.0;
    std::vector<double> ak; // ak[0] = 1, ak[1] = a

    double closed_form(std::size_t k) const
    {
        return 1 + (a - 1) * (std::pow(phi, k) - std::pow(phibar, k)) / (phi - phibar);
    }
    double root_product_error() const { return std::abs(phi * phibar - 1); }
    double root_sum_error() const { return std::abs(phi + phibar - 2 / alpha) * alpha / 2; }
    // |a_k - (1 - alpha) - alpha (a_{k-1} + a_{k+1})/2| / a_{k+1}
    double recurrence_residual(std::size_t k) const
    {
        double r = ak[k] - (1 - alpha) - alpha * (ak[k - 1] + ak[k + 1]) / 2;
        return std::abs(r) / std::max({1.0, std::abs(ak[k + 1]), std::abs(ak[k])});
    }
};

inline CounterexampleSpec counterexample_spec(double alpha, double eps, double a, std::size_t k_max)
{
    require(alpha > 0 && alpha < 1, ErrorKind::precondition, "alpha must lie in (0, 1)");
    require(eps > 0 && eps < 1, ErrorKind::precondition, "eps must lie in (0, 1)");
    require(a > 0, ErrorKind::precondition, "a must be positive");
    CounterexampleSpec s;
    s.alpha = alpha;
    s.eps = eps;
    s.a = a;
    const double r = std::sqrt(1 - alpha * alpha);
    s.phi = (1 + r) / alpha;
    s.phibar = alpha / (1 + r); // (1 - r)/alpha without the cancellation
    s.ak = {1.0, a};
    for (std::size_t k = 1; k < k_max; ++k) {
        double next = 2 * (s.ak[k] - 1 + alpha) / alpha - s.ak[k - 1];
        if (!std::isfinite(next) || std::abs(next) > 1e300)
            throw Error(ErrorKind::domain, "a_k leaves the float range at k = " + std::to_string(k + 1));
        s.ak.push_back(next);
    }
    return s;
}

template <int N> struct Counterexample {
    CounterexampleSpec spec;
    OperatorParams params;
    MeasureFamily<N> family; // midpoint rule off the atoms
    Quadrature<N> ball;      // midpoint rule
    std::function<double(const Vec<N> &)> field;
    GridFunction<N> u;
    double radius = 0.0;
    double max_residual = 0.0; // relative, over the nodes of B_radius
    std::size_t nodes_checked = 0;
};

template <int N>
Counterexample<N> build_counterexample(double alpha, double eps, double a, int ratio = 4, double radius = 2.0)
{
    require(ratio >= 2 && radius > 0, ErrorKind::precondition, "need ratio >= 2 and a positive radius");
    Counterexample<N> cx;
    const double reach = radius + 2 * eps;
    const auto k_max = static_cast<std::size_t>(std::ceil(reach / eps)) + 2;
    cx.spec = counterexample_spec(alpha, eps, a, k_max);
    cx.radius = radius;
    cx.params = OperatorParams{alpha, 1 - alpha, eps, 1.0};
    cx.family = axis_atom_family<N>(eps, ratio, BallRule::midpoint);
    cx.ball = uniform_ball_quadrature<N>(static_cast<double>(ratio), BallRule::midpoint);
    auto ak = std::make_shared<std::vector<double>>(cx.spec.ak);
    cx.field = [ak, eps](const Vec<N> &x) {
        if (!on_axis_atoms<N>(x, eps))
            return 1.0;
        auto k = static_cast<std::size_t>(std::llround(x[0] / eps));
        require(k < ak->size(), ErrorKind::domain, "atom beyond the tabulated sequence");
        return (*ak)[k];
    };
    Vec<N> lo, hi;
    for (int i = 0; i < N; ++i) {
        lo[i] = -reach;
        hi[i] = reach;
    }
    auto lat = aligned_lattice<N>(lo, hi, eps / ratio);
    cx.u = GridFunction<N>::sample(lat, cx.field);
    const auto where = centered_ball<N>(radius);
    for (std::size_t f = 0; f < lat.size(); ++f) {
        auto x = lat.node(f);
        if (!where.contains(x))
            continue;
        ++cx.nodes_checked;
        const auto &nu = cx.family.at(x);
        double t = alpha * detail::pair_mean<N>(cx.field, x, eps, nu) +
                   (1 - alpha) * detail::pair_mean<N>(cx.field, x, eps, cx.ball);
        double ux = cx.field(x);
        double mag = std::max(1.0, std::abs(ux));
        if (nu.pairs.size() == 1) {
            const auto step = unit_vec<N>(0, eps);
            mag = std::max({mag, std::abs(cx.field(add<N>(x, step))), std::abs(cx.field(sub<N>(x, step)))});
        }
        cx.max_residual = std::max(cx.max_residual, std::abs(t - ux) / mag);
    }
    return cx;
}

// ---------------------------------------------------------------------------
// Convergence to the limit equation

template <int N> struct ClosedFormCase {
    std::string name;
    OperatorParams params;
    Region<N> omega;
    std::function<MeasureFamily<N>(int ratio)> family;
    std::function<double(const Vec<N> &)> f, g, v;
};

inline std::vector<std::string> closed_form_names() { return {"poisson-1d", "harmonic-2d", "anisotropic-pair"}; }

template <int N> ClosedFormCase<N> closed_form_case(const std::string &name)
{
    ClosedFormCase<N> c;
    c.name = name;
    c.omega = centered_ball<N>(1.0);
    if (name == "poisson-1d" && N == 1) {
        // alpha = 0: A = I/(2(N+2)) = I/6, so v'' / 6 = -1
        c.params = OperatorParams{0.0, 1.0, 0.1, 1.0};
        c.family = [](int r) { return uniform_ball_family<N>(r); };
        c.f = [](const Vec<N> &) { return 1.0; };
        c.g = [](const Vec<N> &) { return 0.0; };
        c.v = [](const Vec<N> &x) { return 3 * (1 - x[0] * x[0]); };
        return c;
    }
    if (name == "harmonic-2d" && N == 2) {
        c.params = OperatorParams{0.5, 0.5, 0.1, 1.0};
        c.family = [](int r) { return uniform_ball_family<N>(r); };
        c.f = [](const Vec<N> &) { return 0.0; };
        c.g = [](const Vec<N> &x) { return x[0] * x[0] - x[1] * x[1]; };
        c.v = c.g;
        return c;
    }
    if (name == "anisotropic-pair" && N == 2) {
        // nu = pair at +-Lambda e_1: A = diag(alpha Lambda^2/2, 0) + beta-mean part;
        // v = (1 - x_1^2)/(2 A_11) solves Tr(D^2 v A) = -1
        c.params = OperatorParams{0.5, 0.5, 0.1, 1.5};
        c.f = [](const Vec<N> &) { return 1.0; };
        auto a11 = std::make_shared<double>(0.0);
        c.v = [a11](const Vec<N> &x) { return (1 - x[0] * x[0]) / (2 * *a11); };
        c.g = c.v;
        // the ball part of A is filled per resolution in pde_convergence_study
        c.family = [a11](int r) {
            auto fam = constant_family<N>(pair_quadrature<N>(unit_vec<N>(0, 1.5)), 1.5, "pair");
            auto ball = uniform_ball_quadrature<N>(static_cast<double>(r));
            OperatorParams p{0.5, 0.5, 0.1, 1.5};
            *a11 = limit_matrix<N>(fam.catalog[0], p, &ball)(0, 0);
            return fam;
        };
        return c;
    }
    throw Error(ErrorKind::precondition, "no closed form registered for '" + name + "' in dimension " +
                                             std::to_string(N));
}

struct ConvergenceRow {
    double eps = 0.0, h = 0.0;
    double error = 0.0;    // sup over B_{1/2} of |u_eps - v|
    double quotient = 0.0; // sup/inf of u_eps on B_{1/2}
    std::size_t iterations = 0;
};

struct ConvergenceStudy {
    std::string name;
    std::vector<ConvergenceRow> rows;
    double order = 0.0;          // least-squares slope of log error against log eps
    double limit_quotient = 0.0; // sup/inf of v on B_{1/2}
    bool monotone = false;
};

template <int N>
ConvergenceStudy pde_convergence_study(const std::string &name, const std::vector<double> &eps_ladder, int ratio,
                                       double tol = 1e-11)
{
    require(!eps_ladder.empty(), ErrorKind::precondition, "empty eps ladder");
    auto c = closed_form_case<N>(name);
    ConvergenceStudy s;
    s.name = name;
    const auto half = centered_ball<N>(0.5);
    for (double eps : eps_ladder) {
        auto prm = c.params;
        prm.eps = eps;
        auto p = make_problem<N>(c.omega, prm, ratio, OperatorKind::linear, c.f, c.g);
        p.family = c.family(ratio);
        SolveOptions o;
        o.sweep = Sweep::gauss_seidel;
        o.relaxation = suggested_relaxation<N>(p);
        o.tol = tol;
        auto res = solve_dpp<N>(p, o);
        require(res.u.has_value(), ErrorKind::convergence, "solver did not certify at eps = " + std::to_string(eps));
        ConvergenceRow row;
        row.eps = eps;
        row.h = p.lattice().h();
        row.iterations = res.report.iterations;
        double hi = -std::numeric_limits<double>::infinity(), lo = -hi;
        for (auto f : nodes_in<N>(p.lattice(), half)) {
            double val = res.u->at(f);
            row.error = std::max(row.error, std::abs(val - c.v(p.lattice().node(f))));
            hi = std::max(hi, val);
            lo = std::min(lo, val);
        }
        row.quotient = lo > 0 ? hi / lo : std::numeric_limits<double>::quiet_NaN();
        s.rows.push_back(row);
    }
    s.monotone = true;
    for (std::size_t i = 1; i < s.rows.size(); ++i)
        s.monotone = s.monotone && s.rows[i].error < s.rows[i - 1].error;
    double mx = 0, my = 0;
    int cnt = 0;
    for (const auto &r : s.rows)
        if (r.error > 0) {
            mx += std::log(r.eps);
            my += std::log(r.error);
            ++cnt;
        }
    if (cnt >= 2) {
        mx /= cnt;
        my /= cnt;
        double sxx = 0, sxy = 0;
        for (const auto &r : s.rows)
            if (r.error > 0) {
                sxx += (std::log(r.eps) - mx) * (std::log(r.eps) - mx);
                sxy += (std::log(r.eps) - mx) * (std::log(r.error) - my);
            }
        s.order = sxx > 0 ? sxy / sxx : 0.0;
    }
    // limit quotient from v sampled finely on B_{1/2}
    Vec<N> lo, hi;
    for (int i = 0; i < N; ++i) {
        lo[i] = -0.5;
        hi[i] = 0.5;
    }
    auto fine = aligned_lattice<N>(lo, hi, N == 1 ? 1e-3 : 1e-2);
    double vmax = -std::numeric_limits<double>::infinity(), vmin = -vmax;
    for (auto f : nodes_in<N>(fine, half)) {
        double val = c.v(fine.node(f));
        vmax = std::max(vmax, val);
        vmin = std::min(vmin, val);
    }
    s.limit_quotient = vmin > 0 ? vmax / vmin : std::numeric_limits<double>::quiet_NaN();
    return s;
}

} // namespace dpplab
