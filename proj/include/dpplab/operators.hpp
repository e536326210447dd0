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

#include "measures.hpp"

#include <concepts>
#include <limits>

namespace dpplab {

template <class F, int N>
concept ScalarField = requires(const F &f, const Vec<N> &x) {
    { f(x) } -> std::convertible_to<double>;
};

struct OperatorParams {
    double alpha = 0.0;
    double beta = 1.0;
    double eps = 0.1;
    double Lambda = 1.0;
};

inline OperatorParams make_params(double beta, double eps, double Lambda)
{
    require(beta > 0 && beta <= 1, ErrorKind::precondition, "beta must lie in (0, 1]");
    require(eps > 0, ErrorKind::precondition, "eps must be positive");
    require(Lambda >= 1, ErrorKind::precondition, "Lambda must be at least 1");
    return OperatorParams{1.0 - beta, beta, eps, Lambda};
}

// u(x+y) + u(x-y) - 2u(x)
template <int N, ScalarField<N> F> double delta_u(const F &u, const Vec<N> &x, const Vec<N> &y)
{
    return u(add<N>(x, y)) + u(sub<N>(x, y)) - 2.0 * u(x);
}

namespace detail {

// Sum over the quadrature of the pair averages (u(x+eps z) + u(x-eps z))/2.
template <int N, ScalarField<N> F>
double pair_mean(const F &u, const Vec<N> &x, double eps, const Quadrature<N> &q)
{
    double s = 0.0;
    for (const auto &p : q.pairs) {
        Vec<N> y = scale<N>(p.z, eps);
        s += p.weight * 0.5 * (u(add<N>(x, y)) + u(sub<N>(x, y)));
    }
    return s / q.denominator;
}

template <int N, ScalarField<N> F>
double delta_mean(const F &u, const Vec<N> &x, double ux, double eps, const Quadrature<N> &q)
{
    double s = 0.0;
    for (const auto &p : q.pairs) {
        Vec<N> y = scale<N>(p.z, eps);
        s += p.weight * (u(add<N>(x, y)) + u(sub<N>(x, y)) - 2.0 * ux);
    }
    return s / q.denominator;
}

} // namespace detail

struct LValue {
    double direct; // (alpha int u + beta mean u - u(x)) / eps^2
    double delta;  // (alpha int du + beta mean du) / (2 eps^2)
};

template <int N, ScalarField<N> F>
LValue apply_L(const F &u, const Vec<N> &x, const OperatorParams &p, const Quadrature<N> &nu,
               const Quadrature<N> &ball)
{
    const double ux = u(x);
    const double e2 = p.eps * p.eps;
    double direct = p.alpha * detail::pair_mean<N>(u, x, p.eps, nu) +
                    p.beta * detail::pair_mean<N>(u, x, p.eps, ball) - ux;
    double delta = p.alpha * detail::delta_mean<N>(u, x, ux, p.eps, nu) +
                   p.beta * detail::delta_mean<N>(u, x, ux, p.eps, ball);
    return {direct / e2, delta / (2 * e2)};
}

template <int N, ScalarField<N> F>
LValue apply_L(const F &u, const Vec<N> &x, const OperatorParams &p, const MeasureFamily<N> &fam,
               const Quadrature<N> &ball)
{
    return apply_L<N>(u, x, p, fam.at(x), ball);
}

template <int N> struct ExtremalValue {
    double value;
    Vec<N> argz;       // active direction
    double resolution; // of the net the extremum was taken over
};

namespace detail {
template <int N, ScalarField<N> F, class Better>
ExtremalValue<N> extremal(const F &u, const Vec<N> &x, const OperatorParams &p, const DirectionNet<N> &net,
                          const Quadrature<N> &ball, Better better)
{
    require(!net.points.empty(), ErrorKind::precondition, "empty direction net");
    const double ux = u(x);
    double best = 0.0;
    Vec<N> arg = net.points.front();
    bool first = true;
    for (const auto &z : net.points) {
        Vec<N> y = scale<N>(z, p.eps);
        double d = u(add<N>(x, y)) + u(sub<N>(x, y)) - 2.0 * ux;
        if (first || better(d, best)) {
            best = d;
            arg = z;
            first = false;
        }
    }
    double mean = delta_mean<N>(u, x, ux, p.eps, ball);
    return {(p.alpha * best + p.beta * mean) / (2 * p.eps * p.eps), arg, net.resolution};
}
} // namespace detail

template <int N, ScalarField<N> F>
ExtremalValue<N> apply_Lplus(const F &u, const Vec<N> &x, const OperatorParams &p, const DirectionNet<N> &net,
                             const Quadrature<N> &ball)
{
    return detail::extremal<N>(u, x, p, net, ball, [](double a, double b) { return a > b; });
}

template <int N, ScalarField<N> F>
ExtremalValue<N> apply_Lminus(const F &u, const Vec<N> &x, const OperatorParams &p, const DirectionNet<N> &net,
                              const Quadrature<N> &ball)
{
    return detail::extremal<N>(u, x, p, net, ball, [](double a, double b) { return a < b; });
}

// Admissible matrices I <= A <= Lambda I with the averaging quadrature of A B_1.
template <int N> struct PucciNet {
    std::vector<Mat<N>> matrices;
    std::vector<Quadrature<N>> quads;
};

template <int N>
PucciNet<N> pucci_net(const std::vector<Mat<N>> &matrices, double Lambda, double ratio)
{
    PucciNet<N> net;
    for (const auto &A : matrices) {
        Eigen::SelfAdjointEigenSolver<Mat<N>> es(A);
        require(es.eigenvalues().minCoeff() >= 1 - 1e-12 && es.eigenvalues().maxCoeff() <= Lambda + 1e-12,
                ErrorKind::precondition, "Pucci net matrix outside [I, Lambda I]");
        net.matrices.push_back(A);
        // average over B_1 of du(x, eps A y) = average over A B_1 of du(x, eps w)
        net.quads.push_back(ellipsoid_quadrature<N>(A, Lambda, ratio));
    }
    return net;
}

// Diagonal matrices with entries on a geometric ladder of `steps` values in [1, Lambda].
template <int N> PucciNet<N> pucci_diagonal_net(double Lambda, int steps, double ratio)
{
    require(steps >= 1, ErrorKind::precondition, "need at least one ladder step");
    std::vector<double> ladder;
    for (int s = 0; s < steps; ++s)
        ladder.push_back(steps == 1 ? 1.0 : std::pow(Lambda, static_cast<double>(s) / (steps - 1)));
    std::vector<Mat<N>> mats;
    std::vector<int> k(N, 0);
    while (true) {
        Mat<N> A = Mat<N>::Zero();
        for (int i = 0; i < N; ++i)
            A(i, i) = ladder[k[i]];
        mats.push_back(A);
        int ax = N - 1;
        while (ax >= 0) {
            if (++k[ax] < steps)
                break;
            k[ax] = 0;
            --ax;
        }
        if (ax < 0)
            break;
    }
    return pucci_net<N>(mats, Lambda, ratio);
}

struct PucciValue {
    double value;
    std::size_t arg;
};

template <int N, ScalarField<N> F>
PucciValue apply_pucci_plus(const F &u, const Vec<N> &x, const OperatorParams &p, const PucciNet<N> &net)
{
    require(!net.quads.empty(), ErrorKind::precondition, "empty Pucci net");
    const double ux = u(x);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < net.quads.size(); ++i) {
        double m = detail::delta_mean<N>(u, x, ux, p.eps, net.quads[i]);
        if (m > best) {
            best = m;
            arg = i;
        }
    }
    return {best / (2 * p.eps * p.eps), arg};
}

enum class ControlKind { sup_pair, tug_of_war, sup_inf };

template <int N> struct ControlSpec {
    ControlKind kind = ControlKind::tug_of_war;
    DirectionNet<N> net;                       // sup_pair
    std::vector<std::vector<Vec<N>>> catalog;  // sup_inf: the sets V
};

// alpha-term plus beta-mean of the controlled DPP (no source term).
template <int N, ScalarField<N> F>
double apply_controlled(const F &u, const Vec<N> &x, const OperatorParams &p, const ControlSpec<N> &spec,
                        const Quadrature<N> &ball)
{
    double a = 0.0;
    auto pair_avg = [&](const Vec<N> &z) {
        Vec<N> y = scale<N>(z, p.eps);
        return 0.5 * (u(add<N>(x, y)) + u(sub<N>(x, y)));
    };
    switch (spec.kind) {
    case ControlKind::sup_pair: {
        require(!spec.net.points.empty(), ErrorKind::precondition, "empty control net");
        a = -std::numeric_limits<double>::infinity();
        for (const auto &z : spec.net.points)
            a = std::max(a, pair_avg(z));
        break;
    }
    case ControlKind::tug_of_war: {
        double hi = u(x), lo = hi;
        for (const auto &q : ball.pairs) {
            Vec<N> y = scale<N>(q.z, p.eps);
            double v1 = u(add<N>(x, y)), v2 = u(sub<N>(x, y));
            hi = std::max({hi, v1, v2});
            lo = std::min({lo, v1, v2});
        }
        a = 0.5 * (hi + lo);
        break;
    }
    case ControlKind::sup_inf: {
        require(!spec.catalog.empty(), ErrorKind::precondition, "empty control catalog");
        a = -std::numeric_limits<double>::infinity();
        for (const auto &V : spec.catalog) {
            require(!V.empty(), ErrorKind::precondition, "empty control set");
            double m = std::numeric_limits<double>::infinity();
            for (const auto &z : V)
                m = std::min(m, pair_avg(z));
            a = std::max(a, m);
        }
        break;
    }
    }
    return p.alpha * a + p.beta * detail::pair_mean<N>(u, x, p.eps, ball);
}

// (alpha/2) int z z^T dnu + beta/(2(N+2)) I. With `ball` given, the exact second
// moment of the discrete ball average replaces 1/(N+2).
template <int N>
Mat<N> limit_matrix(const Quadrature<N> &nu, const OperatorParams &p, const Quadrature<N> *ball = nullptr)
{
    Mat<N> A = 0.5 * p.alpha * nu.second_moment();
    if (ball)
        A += 0.5 * p.beta * ball->second_moment();
    else
        A += (p.beta / (2.0 * (N + 2))) * Mat<N>::Identity();
    return A;
}

inline std::pair<double, double> ellipticity_band(const OperatorParams &p, int n)
{
    double lo = p.beta / (2.0 * (n + 2));
    return {lo, p.alpha * p.Lambda * p.Lambda / 2 + lo};
}

template <int N> bool within_band(const Mat<N> &A, const OperatorParams &p, double tol = 1e-12)
{
    Eigen::SelfAdjointEigenSolver<Mat<N>> es(A);
    auto [lo, hi] = ellipticity_band(p, N);
    return es.eigenvalues().minCoeff() >= lo - tol && es.eigenvalues().maxCoeff() <= hi + tol;
}

} // namespace dpplab
