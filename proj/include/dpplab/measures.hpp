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

#include "lattice.hpp"

#include <Eigen/Dense>

#include <fstream>
#include <map>
#include <sstream>

namespace dpplab {

template <int N> using Mat = Eigen::Matrix<double, N, N>;

// (weight/2) delta_z + (weight/2) delta_{-z}; z in units of eps. For z = 0 the
// pair collapses to a single atom of the full weight.
template <int N> struct AtomPair {
    Vec<N> z;
    double weight;
};

// Unnormalized weights over a common denominator. Builtin quadratures use small
// integer (or half-integer) weights so that the total mass is exactly one.
template <int N> struct Quadrature {
    std::vector<AtomPair<N>> pairs;
    double denominator = 1.0;

    double weight(std::size_t i) const { return pairs[i].weight / denominator; }

    double mass() const
    {
        double s = 0.0;
        for (const auto &p : pairs)
            s += p.weight;
        return s / denominator;
    }

    double support_radius() const
    {
        double r = 0.0;
        for (const auto &p : pairs)
            r = std::max(r, norm<N>(p.z));
        return r;
    }

    // Integral of z z^T against the measure.
    Mat<N> second_moment() const
    {
        Mat<N> m = Mat<N>::Zero();
        for (const auto &p : pairs)
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    m(i, j) += p.weight * p.z[i] * p.z[j];
        return m / denominator;
    }
};

enum class BallRule { node, midpoint };

namespace detail {

inline bool lex_positive(const double *z, int n)
{
    for (int i = 0; i < n; ++i) {
        if (z[i] > 0)
            return true;
        if (z[i] < 0)
            return false;
    }
    return false;
}

// Points (k + shift)/m of the scaled integer grid inside the set {inside(z) <= 1}.
// Interior points weigh 1, points on the boundary (within 1e-12) weigh 1/2.
template <int N, class Gauge>
Quadrature<N> grid_quadrature(double m, BallRule rule, double reach, Gauge &&gauge)
{
    require(m >= 2.0, ErrorKind::precondition, "need eps/h >= 2 for a ball quadrature");
    const double shift = rule == BallRule::midpoint ? 0.5 : 0.0;
    const auto kmax = static_cast<std::int64_t>(std::ceil(reach * m)) + 1;
    Quadrature<N> q;
    double total = 0.0;
    Index<N> k;
    k.fill(-kmax);
    while (true) {
        Vec<N> z;
        for (int i = 0; i < N; ++i)
            z[i] = (static_cast<double>(k[i]) + shift) / m;
        double g = gauge(z);
        if (g <= 1.0 + 1e-12) {
            double w = g < 1.0 - 1e-12 ? 1.0 : 0.5;
            bool origin = norm2<N>(z) == 0.0;
            if (origin) {
                q.pairs.push_back({z, w});
                total += w;
            } else if (lex_positive(z.data(), N)) {
                q.pairs.push_back({z, 2 * w});
                total += 2 * w;
            }
        }
        int ax = N - 1;
        while (ax >= 0) {
            if (++k[ax] <= kmax)
                break;
            k[ax] = -kmax;
            --ax;
        }
        if (ax < 0)
            break;
    }
    require(total > 0, ErrorKind::precondition, "ball contains no lattice node");
    q.denominator = total;
    return q;
}

} // namespace detail

// Average over B_1 (units of eps) sampled at the lattice offsets k/m, m = eps/h.
template <int N> Quadrature<N> uniform_ball_quadrature(double ratio, BallRule rule = BallRule::node)
{
    return detail::grid_quadrature<N>(ratio, rule, 1.0, [](const Vec<N> &z) { return norm2<N>(z); });
}

template <int N>
Quadrature<N> uniform_ball_quadrature(double eps, const Lattice<N> &lat, BallRule rule = BallRule::node)
{
    require(eps >= 2 * lat.h(), ErrorKind::precondition, "need eps >= 2h");
    return uniform_ball_quadrature<N>(eps / lat.h(), rule);
}

// Uniform average over the ellipsoid S B_1. Requires 1 <= eig(S) <= Lambda.
template <int N> Quadrature<N> ellipsoid_quadrature(const Mat<N> &S, double Lambda, double ratio,
                                                    BallRule rule = BallRule::node)
{
    require((S - S.transpose()).norm() <= 1e-12 * S.norm(), ErrorKind::precondition,
            "ellipsoid matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat<N>> es(S);
    const auto ev = es.eigenvalues();
    require(ev.minCoeff() >= 1.0 - 1e-12 && ev.maxCoeff() <= Lambda + 1e-12, ErrorKind::precondition,
            "ellipsoid must satisfy B_1 in E in B_Lambda");
    const Mat<N> Si = S.inverse();
    return detail::grid_quadrature<N>(ratio, rule, ev.maxCoeff(), [&](const Vec<N> &z) {
        Eigen::Matrix<double, N, 1> v;
        for (int i = 0; i < N; ++i)
            v(i) = z[i];
        return (Si * v).squaredNorm();
    });
}

template <int N> Quadrature<N> pair_quadrature(const Vec<N> &z)
{
    Quadrature<N> q;
    q.pairs.push_back({z, 1.0});
    return q;
}

// x -> nu_x as an index into a catalog of quadratures.
template <int N> struct MeasureFamily {
    std::string label;
    double Lambda = 1.0;
    std::vector<Quadrature<N>> catalog;
    std::function<std::size_t(const Vec<N> &)> selector;

    std::size_t select(const Vec<N> &x) const { return catalog.size() == 1 ? 0 : selector(x); }
    const Quadrature<N> &at(const Vec<N> &x) const { return catalog.at(select(x)); }
};

template <int N>
MeasureFamily<N> constant_family(Quadrature<N> q, double Lambda, std::string label)
{
    require(Lambda >= 1.0, ErrorKind::precondition, "Lambda must be at least 1");
    MeasureFamily<N> fam;
    fam.label = std::move(label);
    fam.Lambda = Lambda;
    fam.catalog.push_back(std::move(q));
    fam.selector = [](const Vec<N> &) { return std::size_t{0}; };
    return fam;
}

template <int N> MeasureFamily<N> uniform_ball_family(double ratio, BallRule rule = BallRule::node)
{
    return constant_family<N>(uniform_ball_quadrature<N>(ratio, rule), 1.0, "uniform-ball");
}

template <int N>
MeasureFamily<N> ellipsoid_family(const std::vector<Mat<N>> &matrices,
                                  std::function<std::size_t(const Vec<N> &)> selector, double Lambda,
                                  double ratio, BallRule rule = BallRule::node)
{
    require(!matrices.empty(), ErrorKind::precondition, "empty ellipsoid catalog");
    MeasureFamily<N> fam;
    fam.label = "ellipsoid";
    fam.Lambda = Lambda;
    for (const auto &S : matrices)
        fam.catalog.push_back(ellipsoid_quadrature<N>(S, Lambda, ratio, rule));
    fam.selector = std::move(selector);
    if (!fam.selector)
        fam.selector = [](const Vec<N> &) { return std::size_t{0}; };
    return fam;
}

// Is x = (k eps, 0, ..., 0) with k >= 1?
template <int N> bool on_axis_atoms(const Vec<N> &x, double eps)
{
    for (int i = 1; i < N; ++i)
        if (std::abs(x[i]) > 1e-9 * eps)
            return false;
    double t = x[0] / eps;
    double k = std::round(t);
    return k >= 1.0 && std::abs(t - k) <= 1e-9;
}

// nu_x = (delta_{e1} + delta_{-e1})/2 on the axis atoms, uniform on B_1 elsewhere.
template <int N> MeasureFamily<N> axis_atom_family(double eps, double ratio, BallRule rule = BallRule::node)
{
    require(eps > 0, ErrorKind::precondition, "eps must be positive");
    MeasureFamily<N> fam;
    fam.label = "axis-atoms";
    fam.Lambda = 1.0;
    fam.catalog.push_back(uniform_ball_quadrature<N>(ratio, rule));
    fam.catalog.push_back(pair_quadrature<N>(unit_vec<N>(0)));
    fam.selector = [eps](const Vec<N> &x) { return on_axis_atoms<N>(x, eps) ? std::size_t{1} : std::size_t{0}; };
    return fam;
}

// Rows: node_index, z_1..z_N, weight. Each row is one symmetric pair. Nodes
// without rows use the fallback quadrature.
template <int N>
MeasureFamily<N> family_from_csv(std::istream &in, const Lattice<N> &lat, Quadrature<N> fallback,
                                 double Lambda)
{
    std::map<std::size_t, Quadrature<N>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        double idx;
        Vec<N> z;
        double w;
        if (!(ss >> idx)) // header row
            continue;
        for (int i = 0; i < N; ++i)
            ss >> z[i];
        ss >> w;
        require(!ss.fail(), ErrorKind::config, "family csv: malformed row " + std::to_string(lineno));
        require(idx >= 0 && idx < static_cast<double>(lat.size()), ErrorKind::config,
                "family csv: node index out of range on row " + std::to_string(lineno));
        rows[static_cast<std::size_t>(idx)].pairs.push_back({z, w});
    }
    MeasureFamily<N> fam;
    fam.label = "custom";
    fam.Lambda = Lambda;
    fam.catalog.push_back(std::move(fallback));
    auto lookup = std::make_shared<std::map<std::size_t, std::size_t>>();
    for (auto &[node, q] : rows) {
        (*lookup)[node] = fam.catalog.size();
        fam.catalog.push_back(std::move(q));
    }
    fam.selector = [lat, lookup](const Vec<N> &x) {
        auto f = lat.nearest(x);
        if (!f)
            return std::size_t{0};
        auto it = lookup->find(*f);
        return it == lookup->end() ? std::size_t{0} : it->second;
    };
    return fam;
}

struct FamilyReport {
    bool pass = true;
    double max_mass_error = 0.0;
    double max_support_radius = 0.0;
    double max_odd_moment = 0.0;
    double min_weight = 0.0;
    std::size_t points_checked = 0;
};

template <int N> FamilyReport validate_family(const MeasureFamily<N> &fam, const std::vector<Vec<N>> &points)
{
    FamilyReport r;
    std::vector<char> seen(fam.catalog.size(), 0);
    for (const auto &x : points) {
        ++r.points_checked;
        std::size_t id = fam.select(x);
        if (seen[id])
            continue;
        seen[id] = 1;
        const auto &q = fam.catalog[id];
        r.max_mass_error = std::max(r.max_mass_error, std::abs(q.mass() - 1.0));
        r.max_support_radius = std::max(r.max_support_radius, q.support_radius());
        for (const auto &p : q.pairs)
            r.min_weight = std::min(r.min_weight, p.weight);
        // pairs are symmetric by construction; the odd moment of the expanded
        // atom list is recomputed anyway
        Vec<N> m1 = zero_vec<N>();
        for (const auto &p : q.pairs) {
            m1 = axpy<N>(m1, 0.5 * p.weight, p.z);
            m1 = axpy<N>(m1, -0.5 * p.weight, p.z);
        }
        r.max_odd_moment = std::max(r.max_odd_moment, norm<N>(m1));
    }
    r.pass = r.max_mass_error <= 1e-12 && r.max_support_radius <= fam.Lambda * (1 + 1e-12) &&
             r.min_weight >= 0.0 && r.max_odd_moment == 0.0;
    return r;
}

template <int N> struct DirectionNet {
    std::vector<Vec<N>> points;
    double resolution = 0.0;
    double Lambda = 1.0;
};

// Cubic grid of spacing res/sqrt(N) inside B_Lambda plus radial projections of
// the grid points just outside, plus 0 and +-Lambda e_i.
template <int N> DirectionNet<N> direction_net(double Lambda, double resolution, std::size_t cap = 400000)
{
    require(resolution > 0, ErrorKind::precondition, "net resolution must be positive");
    const double s = resolution / std::sqrt(static_cast<double>(N));
    const double reach = Lambda + s * std::sqrt(static_cast<double>(N)) / 2;
    const auto kmax = static_cast<std::int64_t>(std::ceil(reach / s));
    double est = std::pow(2.0 * static_cast<double>(kmax) + 1, N);
    require(est <= 4.0 * static_cast<double>(cap), ErrorKind::precondition, "direction net exceeds size cap");
    std::set<Vec<N>> pts;
    auto snap = [](Vec<N> v) {
        for (auto &c : v)
            c = std::round(c * 1e12) / 1e12;
        return v;
    };
    Index<N> k;
    k.fill(-kmax);
    while (true) {
        Vec<N> z;
        for (int i = 0; i < N; ++i)
            z[i] = s * static_cast<double>(k[i]);
        double r = norm<N>(z);
        if (r <= Lambda * (1 + 1e-12))
            pts.insert(snap(z));
        else if (r <= reach)
            pts.insert(snap(scale<N>(z, Lambda / r)));
        int ax = N - 1;
        while (ax >= 0) {
            if (++k[ax] <= kmax)
                break;
            k[ax] = -kmax;
            --ax;
        }
        if (ax < 0)
            break;
    }
    pts.insert(zero_vec<N>());
    for (int i = 0; i < N; ++i) {
        pts.insert(unit_vec<N>(i, Lambda));
        pts.insert(unit_vec<N>(i, -Lambda));
    }
    require(pts.size() <= cap, ErrorKind::precondition, "direction net exceeds size cap");
    DirectionNet<N> net;
    net.points.assign(pts.begin(), pts.end());
    net.resolution = resolution;
    net.Lambda = Lambda;
    return net;
}

// All offsets k/m with |k/m| <= Lambda: these are exactly the lattice-aligned
// directions, so nets built this way contain every builtin atom.
template <int N> DirectionNet<N> lattice_direction_net(double Lambda, double ratio)
{
    auto q = detail::grid_quadrature<N>(ratio, BallRule::node, Lambda,
                                        [Lambda](const Vec<N> &z) { return norm2<N>(z) / (Lambda * Lambda); });
    DirectionNet<N> net;
    net.Lambda = Lambda;
    net.resolution = std::sqrt(static_cast<double>(N)) / ratio;
    for (const auto &p : q.pairs)
        net.points.push_back(p.z);
    return net;
}

} // namespace dpplab
