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

#include "solver.hpp"

namespace dpplab {

struct AbcResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

// (a+b+c)^-s + (a+b-c)^-s - 2 a^-s >= 2 s a^{-s-1} [-b + (s+1)/2 (1 - (s+2) b/a) c^2/a]
inline AbcResult abc_inequality(double a, double b, double c, double sigma)
{
    require(a > 0 && b > 0 && sigma > 0 && std::abs(c) < a + b, ErrorKind::precondition,
            "abc inequality needs a, b, sigma > 0 and |c| < a + b");
    AbcResult r;
    const double p = std::pow(a + b + c, -sigma), m = std::pow(a + b - c, -sigma), q = std::pow(a, -sigma);
    r.lhs = p + m - 2 * q;
    r.rhs = 2 * sigma * q / a * (-b + (sigma + 1) / 2 * (1 - (sigma + 2) * b / a) * c * c / a);
    const double scale = p + m + 2 * q + std::abs(r.rhs);
    r.holds = r.lhs >= r.rhs - 1e-12 * scale;
    return r;
}

// Smallest sigma on 1, 2, 4, ... with pred(sigma).
template <class P> double sigma_ladder(P &&pred)
{
    double s = 1.0;
    while (!pred(s))
        s *= 2;
    return s;
}

// Psi(x) = A (1+|x|^2)^-sigma - B with Psi = 2 on |x| = 3/2 sqrt N and Psi = 0 on
// |x| = 2 sqrt N. A and B are kept as logarithms since sigma can be large.
struct GlobalBarrier {
    int n = 1;
    double Lambda = 1.0, beta = 1.0;
    double sigma = 1.0;
    double log_A = 0.0, log_B = 0.0;
    double eps0 = 0.0;

    double inner_radius() const { return 1.5 * std::sqrt(static_cast<double>(n)); }
    double outer_radius() const { return 2.0 * std::sqrt(static_cast<double>(n)); }

    double value_r2(double r2) const { return std::exp(log_A - sigma * std::log1p(r2)) - std::exp(log_B); }
    double psi_r2(double r2) const
    {
        double w = std::exp(log_A + std::log(sigma) - (sigma + 1) * std::log1p(r2));
        return w * (Lambda * Lambda - beta * (sigma + 1) / (n + 2) * r2 / (1 + r2));
    }
    template <int N> double value(const Vec<N> &x) const { return value_r2(norm2<N>(x)); }
    template <int N> double psi(const Vec<N> &x) const { return psi_r2(norm2<N>(x)); }
    // Psi(y) / (A (1+|x|^2)^-sigma): the scale-free form used inside operators
    double ratio_r2(double x2, double y2) const { return std::exp(sigma * (std::log1p(x2) - std::log1p(y2))); }
};

inline GlobalBarrier build_global_barrier(int n, double Lambda, double beta)
{
    require(n >= 1, ErrorKind::precondition, "dimension must be positive");
    require(beta > 0 && beta <= 1, ErrorKind::precondition, "beta must lie in (0, 1]");
    require(Lambda >= 1, ErrorKind::precondition, "Lambda must be at least 1");
    GlobalBarrier b;
    b.n = n;
    b.Lambda = Lambda;
    b.beta = beta;
    b.sigma = sigma_ladder([&](double s) { return Lambda * Lambda - beta * (s + 1) / (17.0 * (n + 2)) <= 0; });
    const double la = std::log1p(2.25 * n), lb = std::log1p(4.0 * n);
    // A [(1+a^2)^-s - (1+b^2)^-s] = 2
    b.log_A = std::log(2.0) + b.sigma * la - std::log1p(-std::exp(-b.sigma * (lb - la)));
    b.log_B = b.log_A - b.sigma * lb;
    b.eps0 = 1 / (Lambda * std::sqrt(2 * (b.sigma + 2)));
    return b;
}

// Psi(x) = u_inf (|x-z|^-2s - 4^-2s) / ((r - Lambda eps)^-2s - 4^-2s).
template <int N> struct AnnularBarrier {
    Vec<N> z{};
    double r = 0.0, eps = 0.0, Lambda = 1.0, beta = 1.0;
    double sigma = 1.0;
    double kappa = 0.0;
    double u_inf = 0.0;

    double rho() const { return r - Lambda * eps; }
    double value_t(double t) const
    {
        const double q = std::pow(rho() / 4, 2 * sigma);
        return u_inf * (std::pow(rho() / t, 2 * sigma) - q) / (1 - q);
    }
    double value(const Vec<N> &x) const { return value_t(dist<N>(x, z)); }
    // A sigma |x-z|^{-2 sigma - 2} [Lambda^2 - beta (sigma+1)/(N+2)] in units of A |x-z|^{-2 sigma}
    double psi_scaled(const Vec<N> &x) const
    {
        return sigma / norm2<N>(sub<N>(x, z)) * (Lambda * Lambda - beta * (sigma + 1) / (N + 2));
    }
};

inline double annular_sigma(int n, double Lambda, double beta)
{
    return sigma_ladder([&](double s) { return Lambda * Lambda - beta * (s + 1) / (n + 2) <= 0; });
}

inline double annular_kappa(double sigma, double Lambda) { return Lambda * std::sqrt(2 * (sigma + 2)); }

// 1 - (sigma+2) Lambda^2 eps^2 / r^2; equals 1/2 at r = kappa eps.
inline double kappa_factor(double sigma, double Lambda, double eps, double r)
{
    return 1 - (sigma + 2) * Lambda * Lambda * eps * eps / (r * r);
}

template <int N>
AnnularBarrier<N> build_annular_barrier(const Vec<N> &z, double r, double eps, double Lambda, double beta,
                                        double u_inf)
{
    require(beta > 0 && beta <= 1 && Lambda >= 1 && eps > 0, ErrorKind::precondition, "bad barrier parameters");
    require(u_inf >= 0, ErrorKind::precondition, "u_inf must be nonnegative");
    AnnularBarrier<N> b;
    b.z = z;
    b.r = r;
    b.eps = eps;
    b.Lambda = Lambda;
    b.beta = beta;
    b.u_inf = u_inf;
    b.sigma = annular_sigma(N, Lambda, beta);
    b.kappa = annular_kappa(b.sigma, Lambda);
    require(r > b.kappa * eps, ErrorKind::domain, "annular barrier needs r > kappa eps");
    require(r < 1, ErrorKind::domain, "annular barrier needs r < 1");
    return b;
}

struct BarrierReport {
    double sigma = 0.0, kappa = 0.0, eps = 0.0, eps0 = 0.0;
    double log_A = 0.0, log_B = 0.0;
    std::size_t samples = 0;
    // margins of L-Psi + psi in units of the local scale A w(x) at the sample
    double worst_margin = std::numeric_limits<double>::infinity();
    Vec<3> worst_at{};
    double tol_barrier = 0.0;    // Lipschitz bound x refined net step + second-moment error
    double tol_coarse = 0.0;     // same with the unrefined net resolution
    double psi_max_outer = -std::numeric_limits<double>::infinity(); // annulus: max psi, must be <= 0
    bool pass = false;
};

namespace detail {

// min over B_Lambda of F, from the net then by a projected pattern search
// around the four best net points. Returns (min, final step).
template <int N, class F>
std::pair<double, double> refined_min(const F &fn, const DirectionNet<N> &net, double Lambda)
{
    std::vector<std::pair<double, Vec<N>>> vals;
    vals.reserve(net.points.size());
    for (const auto &z : net.points)
        vals.emplace_back(fn(z), z);
    const std::size_t k = std::min<std::size_t>(4, vals.size());
    std::partial_sort(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(k), vals.end(),
                      [](const auto &a, const auto &b) { return a.first < b.first; });
    double best = vals.front().first;
    const double stop = net.resolution * 1e-4;
    for (std::size_t s = 0; s < k; ++s) {
        auto [v, z] = vals[s];
        double step = net.resolution / 2;
        for (int it = 0; it < 400 && step > stop; ++it) {
            bool moved = false;
            for (int ax = 0; ax < N && !moved; ++ax)
                for (double sg : {-1.0, 1.0}) {
                    Vec<N> w = z;
                    w[ax] += sg * step;
                    double r = norm<N>(w);
                    if (r > Lambda)
                        w = scale<N>(w, Lambda / r);
                    double fw = fn(w);
                    if (fw < v) {
                        v = fw;
                        z = w;
                        moved = true;
                        break;
                    }
                }
            if (!moved)
                step /= 2;
        }
        best = std::min(best, v);
    }
    return {best, stop / 2};
}

struct LocalBounds {
    double grad = 0.0; // sup |grad n| over B_{Lambda eps}(x)
    double hess = 0.0; // sup |D^2 n| over B_eps(x)
};

// One sample: L- of the scale-free profile n (n(x) = 1), plus tolerances.
template <int N, class Profile>
std::array<double, 3> radial_sample(const Profile &n, const Vec<N> &x, const OperatorParams &p,
                                    const DirectionNet<N> &net, const Quadrature<N> &ball, const LocalBounds &lb,
                                    double moment_err)
{
    auto delta = [&](const Vec<N> &z) {
        Vec<N> e = scale<N>(z, p.eps);
        return n(add<N>(x, e)) + n(sub<N>(x, e)) - 2;
    };
    auto [mn, step] = refined_min<N>(delta, net, net.Lambda);
    double mean = 0.0;
    for (std::size_t i = 0; i < ball.pairs.size(); ++i)
        mean += ball.weight(i) * delta(ball.pairs[i].z);
    const double e2 = 2 * p.eps * p.eps;
    const double lminus = (p.alpha * mn + p.beta * mean) / e2;
    // |d/dz delta| <= 2 eps sup|grad n|
    const double lip = 2 * p.eps * lb.grad;
    const double quad = p.beta * p.eps * p.eps * lb.hess * moment_err / e2;
    return {lminus, p.alpha * lip * step / e2 + quad, p.alpha * lip * (net.resolution / 2) / e2 + quad};
}

template <int N> double moment_error(const Quadrature<N> &ball)
{
    Mat<N> m = ball.second_moment() - Mat<N>::Identity() / (N + 2.0);
    return N * m.cwiseAbs().maxCoeff();
}

template <int N> Vec<3> pad3(const Vec<N> &x)
{
    Vec<3> o{};
    for (int i = 0; i < N && i < 3; ++i)
        o[i] = x[i];
    return o;
}

} // namespace detail

// L-Psi + psi >= 0 at the samples, evaluated in closed form.
template <int N>
BarrierReport verify_global_barrier(const GlobalBarrier &b, const OperatorParams &p, const std::vector<Vec<N>> &samples,
                                    const DirectionNet<N> &net, const Quadrature<N> &ball, unsigned jobs = 1)
{
    require(b.n == N, ErrorKind::precondition, "barrier dimension mismatch");
    require(p.eps <= b.eps0 * (1 + 1e-12), ErrorKind::domain, "eps exceeds the barrier threshold eps0");
    BarrierReport rep;
    rep.sigma = b.sigma;
    rep.eps = p.eps;
    rep.eps0 = b.eps0;
    rep.log_A = b.log_A;
    rep.log_B = b.log_B;
    rep.samples = samples.size();
    const double merr = detail::moment_error<N>(ball);
    std::vector<std::array<double, 3>> out(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t lo, std::size_t hi, unsigned) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<N> &x = samples[i];
            const double x2 = norm2<N>(x), r = std::sqrt(x2);
            auto prof = [&](const Vec<N> &y) { return b.ratio_r2(x2, norm2<N>(y)); };
            const double smin = std::pow(std::max(0.0, r - b.Lambda * p.eps), 2);
            const double rmax = r + b.Lambda * p.eps;
            const double nmax = std::exp(b.sigma * (std::log1p(x2) - std::log1p(smin)));
            detail::LocalBounds lb;
            lb.grad = 2 * b.sigma * rmax / (1 + smin) * nmax;
            lb.hess = nmax * (2 * b.sigma / (1 + smin) + 4 * b.sigma * (b.sigma + 1) * rmax * rmax / std::pow(1 + smin, 2));
            auto s = detail::radial_sample<N>(prof, x, p, net, ball, lb, merr);
            // psi / (A (1+|x|^2)^-sigma)
            const double psi = b.sigma / (1 + x2) * (b.Lambda * b.Lambda - b.beta * (b.sigma + 1) / (N + 2) * x2 / (1 + x2));
            out[i] = {s[0] + psi, s[1], s[2]};
        }
    });
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (out[i][0] < rep.worst_margin) {
            rep.worst_margin = out[i][0];
            rep.worst_at = detail::pad3<N>(samples[i]);
        }
        rep.tol_barrier = std::max(rep.tol_barrier, out[i][1]);
        rep.tol_coarse = std::max(rep.tol_coarse, out[i][2]);
    }
    rep.pass = samples.empty() || rep.worst_margin >= -rep.tol_barrier;
    return rep;
}

// L-Psi >= -tol at samples of B_4(z) \ closure B_r(z); psi <= 0 there is reported.
template <int N>
BarrierReport verify_annular_barrier(const AnnularBarrier<N> &b, const OperatorParams &p,
                                     const std::vector<Vec<N>> &samples, const DirectionNet<N> &net,
                                     const Quadrature<N> &ball, unsigned jobs = 1)
{
    require(p.eps * b.kappa < 1, ErrorKind::domain, "eps exceeds the annular threshold");
    for (const auto &x : samples) {
        double t = dist<N>(x, b.z);
        require(t > b.r && t < 4, ErrorKind::domain, "sample outside the annulus");
    }
    BarrierReport rep;
    rep.sigma = b.sigma;
    rep.kappa = b.kappa;
    rep.eps = p.eps;
    rep.eps0 = 1 / b.kappa;
    rep.samples = samples.size();
    const double merr = detail::moment_error<N>(ball);
    std::vector<std::array<double, 4>> out(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t lo, std::size_t hi, unsigned) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<N> x = sub<N>(samples[i], b.z);
            const double t = norm<N>(x);
            auto prof = [&](const Vec<N> &y) { return std::pow(t / norm<N>(y), 2 * b.sigma); };
            const double tmin = t - b.Lambda * p.eps;
            const double nmax = std::pow(t / tmin, 2 * b.sigma);
            detail::LocalBounds lb;
            lb.grad = 2 * b.sigma / tmin * nmax;
            lb.hess = 2 * b.sigma * (2 * b.sigma + 2) / (tmin * tmin) * nmax;
            auto s = detail::radial_sample<N>(prof, x, p, net, ball, lb, merr);
            out[i] = {s[0], s[1], s[2], b.psi_scaled(samples[i])};
        }
    });
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (out[i][0] < rep.worst_margin) {
            rep.worst_margin = out[i][0];
            rep.worst_at = detail::pad3<N>(samples[i]);
        }
        rep.tol_barrier = std::max(rep.tol_barrier, out[i][1]);
        rep.tol_coarse = std::max(rep.tol_coarse, out[i][2]);
        rep.psi_max_outer = std::max(rep.psi_max_outer, out[i][3]);
    }
    rep.pass = samples.empty() || (rep.worst_margin >= -rep.tol_barrier && rep.psi_max_outer <= 0);
    return rep;
}

struct DecayRow {
    double r = 0.0;
    double inf_Br = 0.0;
    double bound = 0.0; // C r^{-2 sigma} inf_B1 (+ rho form)
    bool pass = false;
};

struct DecayReport {
    double sigma = 0.0, kappa = 0.0;
    double log_C = 0.0;       // (3^{-2s} - 4^{-2s})^{-1} 2^{2s}
    double shift_A = 0.0;     // rho > 0: smallest A with 1 - A beta N/(N+2) <= 0
    double rho = 0.0;         // max(0, max L-u) measured on B_7
    double inf_B1 = 0.0;
    std::vector<DecayRow> rows;
    bool pass = false;
};

// inf_{B_r(z)} u <= C (r^{-2 sigma} inf_{B_1} u + rho) on a ladder of radii.
template <int N>
DecayReport infimum_decay_check(const GridFunction<N> &u, const OperatorParams &p, const Vec<N> &z,
                                const std::vector<double> &radii, double rho_max, double slack = 1e-8)
{
    const auto &lat = u.lattice();
    require(norm<N>(z) < 2, ErrorKind::precondition, "z must lie in B_2");
    for (double v : u.values())
        require(v >= -slack, ErrorKind::precondition, "u must be nonnegative");
    DecayReport rep;
    rep.sigma = annular_sigma(N, p.Lambda, p.beta);
    rep.kappa = annular_kappa(rep.sigma, p.Lambda);
    const double s2 = 2 * rep.sigma;
    rep.log_C = s2 * std::log(2.0) - std::log(std::pow(3.0, -s2) - std::pow(4.0, -s2));
    std::vector<std::size_t> b7;
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (norm2<N>(lat.node(f)) < 49)
            b7.push_back(f);
    auto ext = extremal_field<N>(lat, u.values(), p, b7);
    rep.rho = 0.0;
    for (double v : ext.lminus)
        rep.rho = std::max(rep.rho, v);
    require(rep.rho <= rho_max + slack * (1 + rho_max), ErrorKind::precondition, "L- u <= rho fails on B_7");
    rep.shift_A = rep.rho > 0 ? (N + 2.0) / (p.beta * N) : 0.0;
    rep.inf_B1 = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (norm2<N>(lat.node(f)) < 1)
            rep.inf_B1 = std::min(rep.inf_B1, u.at(f));
    rep.pass = true;
    for (double r : radii) {
        require(r > rep.kappa * p.eps && r < 1, ErrorKind::domain, "radius outside (kappa eps, 1)");
        DecayRow row;
        row.r = r;
        row.inf_Br = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < lat.size(); ++f)
            if (dist<N>(lat.node(f), z) < r)
                row.inf_Br = std::min(row.inf_Br, u.at(f));
        // shifted function u - A rho |x|^2 loses at most 9 A rho on B_3
        row.bound = std::exp(rep.log_C - s2 * std::log(r)) * rep.inf_B1 + 9 * rep.shift_A * rep.rho;
        row.pass = row.inf_Br <= row.bound * (1 + slack) + slack;
        rep.pass = rep.pass && row.pass;
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace dpplab
