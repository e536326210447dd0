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

#include "lp.hpp"
#include "solver.hpp"

#include <unordered_map>

namespace dpplab {

enum class EnvelopeMethod { automatic, hull, lp };

template <int N> struct EnvelopeResult {
    Lattice<N> lattice;
    double radius = 0.0;              // envelope ball B_R, R = 2 sqrt N + Lambda eps by default
    EnvelopeMethod method = EnvelopeMethod::lp;
    std::vector<double> gamma;        // full lattice; exactly 0 outside the ball
    std::vector<char> in_ball;
    std::vector<Vec<N>> xi;           // one supergradient per node in the ball
    double tol_contact = 0.0;
    std::vector<std::size_t> contact; // contact nodes, |x| <= 2 sqrt N
    CubeCover<N> cover;

    GridFunction<N> gamma_function() const
    {
        return GridFunction<N>(lattice, gamma, OutsidePolicy::zero);
    }
};

namespace detail {

template <int N> std::vector<std::size_t> ball_nodes(const Lattice<N> &lat, double R)
{
    std::vector<std::size_t> out;
    const double R2 = R * R * (1 + 1e-12);
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (norm2<N>(lat.node(f)) <= R2)
            out.push_back(f);
    return out;
}

// Upper hull of (x, y) pairs sorted by x.
inline void envelope_1d(const std::vector<double> &x, const std::vector<double> &y, std::vector<double> &g,
                        std::vector<double> &slope)
{
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < x.size(); ++i) {
        while (hull.size() >= 2) {
            auto a = hull[hull.size() - 2], b = hull.back();
            double cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if (cross >= 0) // b lies on or below the chord a-i
                hull.pop_back();
            else
                break;
        }
        hull.push_back(i);
    }
    g.assign(x.size(), 0.0);
    slope.assign(x.size(), 0.0);
    std::size_t seg = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (hull.size() == 1) {
            g[i] = y[hull[0]];
            continue;
        }
        while (seg + 2 < hull.size() && x[hull[seg + 1]] <= x[i])
            ++seg;
        auto a = hull[seg], b = hull[seg + 1];
        double s = (y[b] - y[a]) / (x[b] - x[a]);
        g[i] = (i == a) ? y[a] : (i == b ? y[b] : y[a] + s * (x[i] - x[a]));
        // right-hand slope: the smallest supergradient at a hull vertex
        slope[i] = s;
        if (i == b && seg + 2 < hull.size()) {
            auto c = hull[seg + 2];
            slope[i] = (y[c] - y[b]) / (x[c] - x[b]);
        }
    }
}

struct Hull3 {
    struct Face {
        int v[3];
        Eigen::Vector3d n;
        double d;
        bool alive;
    };
    std::vector<Eigen::Vector3d> P;
    std::vector<Face> faces;
    std::unordered_map<std::uint64_t, int> edge; // directed edge -> face

    static std::uint64_t key(int a, int b)
    {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
    }

    int add_face(int a, int b, int c)
    {
        Face f;
        f.v[0] = a;
        f.v[1] = b;
        f.v[2] = c;
        f.n = (P[b] - P[a]).cross(P[c] - P[a]);
        double len = f.n.norm();
        if (len > 0)
            f.n /= len;
        f.d = f.n.dot(P[a]);
        f.alive = true;
        int id = static_cast<int>(faces.size());
        faces.push_back(f);
        edge[key(a, b)] = id;
        edge[key(b, c)] = id;
        edge[key(c, a)] = id;
        return id;
    }

    void kill(int id)
    {
        auto &f = faces[id];
        f.alive = false;
        for (int e = 0; e < 3; ++e) {
            auto it = edge.find(key(f.v[e], f.v[(e + 1) % 3]));
            if (it != edge.end() && it->second == id)
                edge.erase(it);
        }
    }

    void build(double tol)
    {
        const int n = static_cast<int>(P.size());
        require(n >= 4, ErrorKind::precondition, "hull needs at least four points");
        int i0 = 0, i1 = 0, i2 = -1, i3 = -1;
        for (int i = 0; i < n; ++i)
            if ((P[i] - P[i0]).squaredNorm() > (P[i1] - P[i0]).squaredNorm())
                i1 = i;
        double best = 0;
        for (int i = 0; i < n; ++i) {
            double a = (P[i1] - P[i0]).cross(P[i] - P[i0]).norm();
            if (a > best) {
                best = a;
                i2 = i;
            }
        }
        require(i2 >= 0, ErrorKind::precondition, "hull points are collinear");
        Eigen::Vector3d nrm = (P[i1] - P[i0]).cross(P[i2] - P[i0]).normalized();
        best = 0;
        for (int i = 0; i < n; ++i) {
            double h = std::abs(nrm.dot(P[i] - P[i0]));
            if (h > best) {
                best = h;
                i3 = i;
            }
        }
        require(i3 >= 0 && best > tol, ErrorKind::precondition, "hull points are coplanar");
        if (nrm.dot(P[i3] - P[i0]) > 0)
            std::swap(i1, i2);
        // now i3 lies below the plane (i0, i1, i2) oriented outward
        add_face(i0, i1, i2);
        add_face(i0, i3, i1);
        add_face(i1, i3, i2);
        add_face(i2, i3, i0);
        std::vector<char> visible;
        for (int p = 0; p < n; ++p) {
            if (p == i0 || p == i1 || p == i2 || p == i3)
                continue;
            visible.assign(faces.size(), 0);
            std::vector<int> vis;
            for (int f = 0; f < static_cast<int>(faces.size()); ++f)
                if (faces[f].alive && faces[f].n.dot(P[p]) - faces[f].d > tol) {
                    visible[f] = 1;
                    vis.push_back(f);
                }
            if (vis.empty())
                continue;
            std::vector<std::pair<int, int>> horizon;
            for (int f : vis)
                for (int e = 0; e < 3; ++e) {
                    int a = faces[f].v[e], b = faces[f].v[(e + 1) % 3];
                    auto it = edge.find(key(b, a));
                    if (it == edge.end() || !visible[it->second])
                        horizon.emplace_back(a, b);
                }
            for (int f : vis)
                kill(f);
            for (auto [a, b] : horizon)
                add_face(a, b, p);
        }
    }
};

} // namespace detail

// Concave envelope of u^+ over the closed ball of radius R (values on the nodes
// of the ball), with one supergradient per node.
template <int N>
EnvelopeResult<N> concave_envelope(const GridFunction<N> &u, double R, EnvelopeMethod method = EnvelopeMethod::automatic,
                                   unsigned jobs = 1)
{
    const auto &lat = u.lattice();
    auto nodes = detail::ball_nodes<N>(lat, R);
    require(!nodes.empty(), ErrorKind::precondition, "envelope ball contains no lattice node");
    if (method == EnvelopeMethod::automatic)
        method = N <= 2 ? EnvelopeMethod::hull : EnvelopeMethod::lp;
    require(method == EnvelopeMethod::lp || N <= 2, ErrorKind::precondition, "hull method supports N <= 2");
    EnvelopeResult<N> res;
    res.lattice = lat;
    res.radius = R;
    res.method = method;
    res.gamma.assign(lat.size(), 0.0);
    res.in_ball.assign(lat.size(), 0);
    res.xi.assign(lat.size(), zero_vec<N>());
    std::vector<double> up(nodes.size());
    double umax = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        up[i] = std::max(0.0, u.at(nodes[i]));
        umax = std::max(umax, up[i]);
        res.in_ball[nodes[i]] = 1;
    }

    if (method == EnvelopeMethod::lp) {
        // minimize gamma subject to gamma + xi . (x_j - x) >= u_j^+, then xi lexicographically
        const double B = 2 * umax + 1;
        const double Bxi = 1e3 * (umax + 1) / lat.h();
        parallel_for(nodes.size(), jobs, [&](std::size_t lo, std::size_t hi, unsigned) {
            for (std::size_t i = lo; i < hi; ++i) {
                Vec<N> x = lat.node(nodes[i]);
                lp::Problem p;
                p.dim = N + 1;
                p.lo.assign(N + 1, -Bxi);
                p.hi.assign(N + 1, Bxi);
                p.lo[0] = -B;
                p.hi[0] = B;
                for (int k = 0; k <= N; ++k) {
                    std::vector<double> c(N + 1, 0.0);
                    c[k] = 1.0;
                    p.objectives.push_back(c);
                }
                std::vector<double> row(N + 1);
                row[0] = 1.0;
                for (std::size_t j = 0; j < nodes.size(); ++j) {
                    Vec<N> y = lat.node(nodes[j]);
                    for (int k = 0; k < N; ++k)
                        row[k + 1] = y[k] - x[k];
                    p.add(row, up[j]);
                }
                auto sol = lp::solve(p);
                require(sol.has_value(), ErrorKind::precondition, "envelope LP infeasible");
                res.gamma[nodes[i]] = (*sol)[0];
                for (int k = 0; k < N; ++k)
                    res.xi[nodes[i]][k] = (*sol)[k + 1];
            }
        });
        return res;
    }

    if constexpr (N == 1) {
        std::vector<double> xs(nodes.size()), g, s;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            xs[i] = lat.node(nodes[i])[0];
        detail::envelope_1d(xs, up, g, s);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            res.gamma[nodes[i]] = g[i];
            res.xi[nodes[i]][0] = s[i];
        }
    } else if constexpr (N == 2) {
        // tiny deterministic height jitter puts the cloud in general position
        detail::Hull3 H;
        Rng rng(0xC0FFEEULL);
        const double jit = 1e-10 * (1 + umax);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            Vec<N> x = lat.node(nodes[i]);
            H.P.emplace_back(x[0], x[1], up[i] + jit * rng.uniform());
        }
        H.build(1e-14 * (R + umax + 1));
        // Faces through lattice points that are collinear in the plane come out
        // nearly vertical; true upper faces have slope at most 2 R max u^+ / h^2.
        const double h = lat.h();
        const double steep = 4 * (R + 1) * (umax + 1) / (h * h);
        const double nz_min = 1 / std::sqrt(1 + steep * steep);
        std::vector<const detail::Hull3::Face *> upper;
        for (const auto &f : H.faces)
            if (f.alive && f.n.z() > nz_min)
                upper.push_back(&f);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            Vec<N> x = lat.node(nodes[i]);
            double g = std::numeric_limits<double>::infinity();
            for (auto *f : upper)
                g = std::min(g, (f->d - f->n.x() * x[0] - f->n.y() * x[1]) / f->n.z());
            Vec<N> best{std::numeric_limits<double>::infinity(), 0.0};
            for (auto *f : upper) {
                double v = (f->d - f->n.x() * x[0] - f->n.y() * x[1]) / f->n.z();
                if (v <= g + 1e-9 * (1 + std::abs(g))) {
                    Vec<N> xi{-f->n.x() / f->n.z(), -f->n.y() / f->n.z()};
                    if (xi < best)
                        best = xi;
                }
            }
            res.gamma[nodes[i]] = g;
            res.xi[nodes[i]] = best;
        }
    }
    return res;
}

// Nodes with |x| <= 2 sqrt N and Gamma - u <= tol.
template <int N>
std::vector<std::size_t> contact_set(const GridFunction<N> &u, const EnvelopeResult<N> &env, double tol)
{
    const double r2 = 4.0 * N * (1 + 1e-12);
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < env.lattice.size(); ++f) {
        if (!env.in_ball[f])
            continue;
        if (norm2<N>(env.lattice.node(f)) <= r2 && env.gamma[f] - u.at(f) <= tol)
            out.push_back(f);
    }
    return out;
}

// Envelope over B_{2 sqrt N + Lambda eps}, contact set and its eps-cube cover.
template <int N>
EnvelopeResult<N> envelope_with_contact(const GridFunction<N> &u, double eps, double Lambda, double tol_contact,
                                        EnvelopeMethod method = EnvelopeMethod::automatic, unsigned jobs = 1)
{
    auto env = concave_envelope<N>(u, 2 * std::sqrt(static_cast<double>(N)) + Lambda * eps, method, jobs);
    env.tol_contact = tol_contact;
    env.contact = contact_set<N>(u, env, tol_contact);
    std::vector<Vec<N>> pts;
    for (auto f : env.contact)
        pts.push_back(env.lattice.node(f));
    env.cover = epsilon_cube_cover<N>(pts, eps);
    return env;
}

inline double default_tol_contact(double tol_solver, double eps) { return 10 * tol_solver + eps * eps; }

// (sum over cubes of (sup_Q f^+)^N |Q|)^{1/N}. f is evaluated at the lattice nodes
// in each closed cube and, when closed_form is set, also at its centre and corners.
template <int N>
double abp_rhs(const std::function<double(const Vec<N> &)> &f, const CubeCover<N> &cover, const Lattice<N> &lat,
               bool closed_form = true)
{
    if (cover.cubes.empty())
        return 0.0;
    const double s = cover.side, vol = std::pow(s, N), h = lat.h();
    double sum = 0.0;
    for (const auto &k : cover.cubes) {
        Vec<N> c = cover.center(k);
        double best = 0.0;
        bool any = false;
        // lattice nodes inside the closed cube
        Index<N> lo, hi;
        for (int i = 0; i < N; ++i) {
            lo[i] = static_cast<std::int64_t>(std::ceil((c[i] - s / 2 - lat.origin()[i]) / h - 1e-9));
            hi[i] = static_cast<std::int64_t>(std::floor((c[i] + s / 2 - lat.origin()[i]) / h + 1e-9));
        }
        bool nonempty = true;
        for (int i = 0; i < N; ++i)
            nonempty = nonempty && lo[i] <= hi[i];
        if (nonempty) {
            Index<N> m = lo;
            while (true) {
                if (lat.in_bounds(m)) {
                    best = std::max(best, f(lat.node(m)));
                    any = true;
                }
                int ax = N - 1;
                while (ax >= 0) {
                    if (++m[ax] <= hi[ax])
                        break;
                    m[ax] = lo[ax];
                    --ax;
                }
                if (ax < 0)
                    break;
            }
        }
        if (closed_form) {
            best = std::max(best, f(c));
            for (unsigned bits = 0; bits < (1u << N); ++bits) {
                Vec<N> v = c;
                for (int i = 0; i < N; ++i)
                    v[i] += ((bits >> i) & 1u) ? s / 2 : -s / 2;
                best = std::max(best, f(v));
            }
            any = true;
        }
        require(any, ErrorKind::precondition, "cover cube contains no lattice node");
        sum += std::pow(std::max(0.0, best), N) * vol;
    }
    return std::pow(sum, 1.0 / N);
}

struct AbpAudit {
    double sup_u = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool degenerate = false; // sup u <= 0: the estimate holds trivially
    double min_residual = 0.0; // min over B_{2 sqrt N} of L+ u + f
    double residual_slack = 0.0;
    std::size_t contact_nodes = 0;
    std::size_t cover_cubes = 0;
};

// Checks L+u + f >= -slack in B_{2 sqrt N}, u <= 0 outside, then reports sup u / rhs.
template <int N>
AbpAudit abp_ratio_audit(const GridFunction<N> &u, const std::function<double(const Vec<N> &)> &f,
                         const OperatorParams &prm, double residual_slack, double tol_contact, unsigned jobs = 1)
{
    const auto &lat = u.lattice();
    const double r2 = 4.0 * N;
    const double R = 2 * std::sqrt(static_cast<double>(N)) + prm.Lambda * prm.eps;
    std::vector<std::size_t> inner;
    AbpAudit a;
    a.residual_slack = residual_slack;
    for (std::size_t fl = 0; fl < lat.size(); ++fl) {
        Vec<N> x = lat.node(fl);
        double n2 = norm2<N>(x);
        if (n2 < r2)
            inner.push_back(fl);
        else if (n2 <= R * R * (1 + 1e-12))
            require(u.at(fl) <= residual_slack * prm.eps * prm.eps, ErrorKind::precondition,
                    "abp audit: u must be nonpositive outside B_{2 sqrt N}");
    }
    auto ext = extremal_field<N>(lat, u.values(), prm, inner);
    a.min_residual = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner.size(); ++i)
        a.min_residual = std::min(a.min_residual, ext.lplus[i] + f(lat.node(inner[i])));
    require(a.min_residual >= -residual_slack, ErrorKind::precondition, "abp audit: L+ u + f >= 0 fails");
    a.sup_u = -std::numeric_limits<double>::infinity();
    for (auto fl : inner)
        a.sup_u = std::max(a.sup_u, u.at(fl));
    auto env = envelope_with_contact<N>(u, prm.eps, prm.Lambda, tol_contact, EnvelopeMethod::automatic, jobs);
    a.contact_nodes = env.contact.size();
    a.cover_cubes = env.cover.cubes.size();
    a.rhs = abp_rhs<N>([&](const Vec<N> &x) { return std::max(0.0, f(x)); }, env.cover, lat);
    if (a.sup_u <= 0) {
        a.degenerate = true;
        a.ratio = 0.0;
    } else {
        a.ratio = a.rhs > 0 ? a.sup_u / a.rhs : std::numeric_limits<double>::infinity();
    }
    return a;
}

struct NeighborhoodReport {
    double measure = 0.0;       // lattice measure of the sublevel set in B_{eps/4}(x0)
    double ratio = 0.0;         // measure / eps^N
    double predicted = 0.0;     // |B_1| 4^{-N} (1 - 4^N/(C beta))
    double slack = 0.0;         // lattice boundary allowance on the ratio
    double cube_measure = 0.0;  // same over 3 sqrt N Q with the cube's sup f
    double cube_ratio = 0.0;    // cube_measure / |Q|
    bool pass = false;
};

template <int N>
NeighborhoodReport contact_neighborhood_estimate(const GridFunction<N> &u, const EnvelopeResult<N> &env, std::size_t x0,
                                                 double C, const std::function<double(const Vec<N> &)> &f,
                                                 const OperatorParams &prm)
{
    require(std::find(env.contact.begin(), env.contact.end(), x0) != env.contact.end(), ErrorKind::precondition,
            "x0 is not a contact node");
    const auto &lat = env.lattice;
    const Vec<N> c = lat.node(x0);
    const double fx = f(c), eps = prm.eps, h = lat.h();
    require(fx > 0, ErrorKind::precondition, "f(x0) must be positive");
    NeighborhoodReport r;
    const double cut = C * fx * eps * eps;
    const double rad = eps / 4;
    const auto K = static_cast<std::int64_t>(std::ceil(3 * std::sqrt(static_cast<double>(N)) * eps / h)) + 1;
    const auto k0 = lat.multi(x0);
    const Index<N> owner = owner_cube<N>(c, eps);
    const double s = cover_side<N>(eps);
    const Vec<N> qc = env.cover.center(owner);
    const double big = 3 * std::sqrt(static_cast<double>(N)) * s;
    double supf = 0.0;
    for (unsigned bits = 0; bits < (1u << N); ++bits) {
        Vec<N> v = qc;
        for (int i = 0; i < N; ++i)
            v[i] += ((bits >> i) & 1u) ? s / 2 : -s / 2;
        supf = std::max(supf, f(v));
    }
    supf = std::max({supf, f(qc), fx});
    std::size_t nb = 0, nq = 0;
    Index<N> d;
    d.fill(-K);
    while (true) {
        Index<N> m;
        for (int i = 0; i < N; ++i)
            m[i] = k0[i] + d[i];
        if (lat.in_bounds(m)) {
            auto fl = lat.flat(m);
            Vec<N> y = lat.node(m);
            double gap = (env.in_ball[fl] ? env.gamma[fl] : 0.0) - u.at(fl);
            if (dist<N>(y, c) < rad && gap <= cut)
                ++nb;
            bool in_big = true;
            for (int i = 0; i < N; ++i)
                in_big = in_big && std::abs(y[i] - qc[i]) < big / 2;
            if (in_big && gap <= C * supf * eps * eps)
                ++nq;
        }
        int ax = N - 1;
        while (ax >= 0) {
            if (++d[ax] <= K)
                break;
            d[ax] = -K;
            --ax;
        }
        if (ax < 0)
            break;
    }
    r.measure = static_cast<double>(nb) * lat.cell_volume();
    r.ratio = r.measure / std::pow(eps, N);
    r.predicted = unit_ball_volume(N) * std::pow(0.25, N) * (1 - std::pow(4.0, N) / (C * prm.beta));
    // one layer of cells around the sphere of radius eps/4
    r.slack = N * unit_ball_volume(N) * std::pow(rad, N - 1) * h * std::sqrt(static_cast<double>(N)) / std::pow(eps, N);
    r.cube_measure = static_cast<double>(nq) * lat.cell_volume();
    r.cube_ratio = r.cube_measure / std::pow(s, N);
    r.pass = r.ratio >= r.predicted - r.slack;
    return r;
}

} // namespace dpplab
