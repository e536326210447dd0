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

#include "operators.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <chrono>
#include <map>

namespace dpplab {

enum class OperatorKind { linear, sup_pair, tug_of_war, sup_inf };

inline const char *to_string(OperatorKind k)
{
    switch (k) {
    case OperatorKind::linear:
        return "linear";
    case OperatorKind::sup_pair:
        return "sup-pair";
    case OperatorKind::tug_of_war:
        return "tug-of-war";
    case OperatorKind::sup_inf:
        return "sup-inf";
    }
    return "?";
}

template <int N> struct DppProblem {
    std::shared_ptr<const ExtendedDomain<N>> domain;
    OperatorParams params;
    OperatorKind kind = OperatorKind::linear;
    MeasureFamily<N> family;  // linear kind
    ControlSpec<N> control;   // controlled kinds
    Quadrature<N> ball;       // beta-mean over B_1, node rule
    std::function<double(const Vec<N> &)> f;
    std::function<double(const Vec<N> &)> g;

    const Lattice<N> &lattice() const { return domain->lattice(); }
    double ratio() const { return params.eps / lattice().h(); }
};

// Lattice with h = eps/ratio covering Omega and its Lambda*eps strip.
template <int N>
DppProblem<N> make_problem(const Region<N> &omega, const OperatorParams &params, int ratio, OperatorKind kind,
                           std::function<double(const Vec<N> &)> f, std::function<double(const Vec<N> &)> g)
{
    require(ratio >= 2, ErrorKind::precondition, "need eps/h >= 2");
    DppProblem<N> p;
    const double h = params.eps / ratio;
    p.domain = std::make_shared<ExtendedDomain<N>>(omega, params.Lambda * params.eps, h);
    p.params = params;
    p.kind = kind;
    p.ball = uniform_ball_quadrature<N>(static_cast<double>(ratio));
    p.family = constant_family<N>(p.ball, 1.0, "uniform-ball");
    if (kind == OperatorKind::sup_pair)
        p.control.net = lattice_direction_net<N>(params.Lambda, static_cast<double>(ratio));
    p.f = f ? std::move(f) : [](const Vec<N> &) { return 0.0; };
    p.g = std::move(g);
    require(static_cast<bool>(p.g), ErrorKind::precondition, "boundary data required");
    return p;
}

struct SolveReport {
    bool converged = false;
    std::size_t iterations = 0;
    double residual = 0.0;    // certificate: max interior |u - T u|
    double update_norm = 0.0; // last sup-norm change
    double wall_seconds = 0.0;
    double tol = 0.0;
    std::size_t max_iter = 0;
};

enum class Sweep { jacobi, gauss_seidel };
enum class Init { boundary_mean, max_g, min_g, custom };

struct SolveOptions {
    double tol = 1e-10;
    std::size_t max_iter = 0; // 0: 10 n0^2
    Sweep sweep = Sweep::jacobi;
    double relaxation = 1.0;  // over-relaxation for Gauss-Seidel
    std::size_t check_every = 10;
    Init init = Init::boundary_mean;
    std::vector<double> initial; // Init::custom, full lattice vector
    unsigned jobs = 1;
};

template <int N> struct SolveResult {
    std::optional<GridFunction<N>> u; // present only when certified
    SolveReport report;
};

namespace detail {

struct Stencil {
    std::vector<std::int64_t> off;
    std::vector<double> coef;
};

template <int N> struct Compiled {
    const DppProblem<N> *p = nullptr;
    std::vector<std::size_t> nodes; // interior flat indices
    std::vector<double> src;        // eps^2 f per interior node
    std::vector<std::uint32_t> cat; // catalog id per interior node (linear)
    std::vector<Stencil> linear;    // alpha + beta merged, per catalog entry
    Stencil mean;                   // beta part alone
    std::vector<std::int64_t> sup_off;                 // sup-pair
    std::vector<std::int64_t> tow_off;                 // tug-of-war, symmetric node set
    std::vector<std::vector<std::int64_t>> sup_inf_off; // sup-inf
};

template <int N> Index<N> offset_index(const Vec<N> &z, double eps, double h)
{
    Index<N> k;
    for (int i = 0; i < N; ++i)
        k[i] = static_cast<std::int64_t>(std::llround(eps * z[i] / h));
    return k;
}

template <int N> std::int64_t flat_offset(const Index<N> &k, const Lattice<N> &lat)
{
    std::int64_t o = 0;
    for (int i = 0; i < N; ++i)
        o += k[i] * lat.strides()[i];
    return o;
}

template <int N> Compiled<N> compile(const DppProblem<N> &p)
{
    const auto &dom = *p.domain;
    const auto &lat = dom.lattice();
    const double eps = p.params.eps, h = lat.h();
    Compiled<N> c;
    c.p = &p;
    c.nodes = dom.interior();
    Index<N> reach{};
    auto note = [&](const Vec<N> &z) {
        auto k = offset_index<N>(z, eps, h);
        for (int i = 0; i < N; ++i)
            reach[i] = std::max(reach[i], std::abs(k[i]));
        return flat_offset<N>(k, lat);
    };
    auto add_quad = [&](std::map<std::int64_t, double> &acc, const Quadrature<N> &q, double factor) {
        for (const auto &a : q.pairs)
            acc[note(a.z)] += factor * a.weight / (2 * q.denominator);
    };
    std::map<std::int64_t, double> mean_acc;
    add_quad(mean_acc, p.ball, p.params.beta);
    for (auto [o, w] : mean_acc) {
        c.mean.off.push_back(o);
        c.mean.coef.push_back(w);
    }
    switch (p.kind) {
    case OperatorKind::linear:
        for (const auto &q : p.family.catalog) {
            auto acc = mean_acc;
            add_quad(acc, q, p.params.alpha);
            Stencil s;
            for (auto [o, w] : acc) {
                s.off.push_back(o);
                s.coef.push_back(w);
            }
            c.linear.push_back(std::move(s));
        }
        break;
    case OperatorKind::sup_pair:
        require(!p.control.net.points.empty(), ErrorKind::precondition, "empty control net");
        for (const auto &z : p.control.net.points)
            c.sup_off.push_back(note(z));
        break;
    case OperatorKind::tug_of_war:
        c.tow_off.push_back(0);
        for (const auto &a : p.ball.pairs) {
            auto o = note(a.z);
            if (o != 0) {
                c.tow_off.push_back(o);
                c.tow_off.push_back(-o);
            }
        }
        break;
    case OperatorKind::sup_inf:
        require(!p.control.catalog.empty(), ErrorKind::precondition, "empty control catalog");
        for (const auto &V : p.control.catalog) {
            require(!V.empty(), ErrorKind::precondition, "empty control set");
            std::vector<std::int64_t> offs;
            for (const auto &z : V)
                offs.push_back(note(z));
            c.sup_inf_off.push_back(std::move(offs));
        }
        break;
    }
    c.src.resize(c.nodes.size());
    c.cat.resize(c.nodes.size(), 0);
    for (std::size_t i = 0; i < c.nodes.size(); ++i) {
        auto k = lat.multi(c.nodes[i]);
        Vec<N> x = lat.node(k);
        // every step from Omega must land in the extended domain
        for (int a = 0; a < N; ++a) {
            Index<N> lo = k, hi = k;
            lo[a] -= reach[a];
            hi[a] += reach[a];
            require(lat.in_bounds(lo) && lat.in_bounds(hi), ErrorKind::domain,
                    "stencil leaves the lattice at an interior node");
        }
        c.src[i] = eps * eps * p.f(x);
        if (p.kind == OperatorKind::linear) {
            c.cat[i] = static_cast<std::uint32_t>(p.family.select(x));
            require(c.cat[i] < c.linear.size(), ErrorKind::precondition, "family selector out of range");
        }
    }
    return c;
}

template <int N> double apply_T(const Compiled<N> &c, const std::vector<double> &u, std::size_t i)
{
    const auto f = static_cast<std::int64_t>(c.nodes[i]);
    const double *v = u.data();
    auto sym = [&](const Stencil &s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < s.off.size(); ++j)
            acc += s.coef[j] * (v[f + s.off[j]] + v[f - s.off[j]]);
        return acc;
    };
    const double alpha = c.p->params.alpha;
    switch (c.p->kind) {
    case OperatorKind::linear:
        return sym(c.linear[c.cat[i]]) + c.src[i];
    case OperatorKind::sup_pair: {
        double a = -std::numeric_limits<double>::infinity();
        for (auto o : c.sup_off)
            a = std::max(a, 0.5 * (v[f + o] + v[f - o]));
        return alpha * a + sym(c.mean) + c.src[i];
    }
    case OperatorKind::tug_of_war: {
        double hi = v[f], lo = v[f];
        for (auto o : c.tow_off) {
            hi = std::max(hi, v[f + o]);
            lo = std::min(lo, v[f + o]);
        }
        return alpha * 0.5 * (hi + lo) + sym(c.mean) + c.src[i];
    }
    case OperatorKind::sup_inf: {
        double a = -std::numeric_limits<double>::infinity();
        for (const auto &V : c.sup_inf_off) {
            double m = std::numeric_limits<double>::infinity();
            for (auto o : V)
                m = std::min(m, 0.5 * (v[f + o] + v[f - o]));
            a = std::max(a, m);
        }
        return alpha * a + sym(c.mean) + c.src[i];
    }
    }
    return 0.0;
}

template <int N> double certificate(const Compiled<N> &c, const std::vector<double> &u, unsigned jobs)
{
    std::vector<double> part(std::max(1u, jobs), 0.0);
    parallel_for(c.nodes.size(), jobs, [&](std::size_t lo, std::size_t hi, unsigned w) {
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            m = std::max(m, std::abs(apply_T<N>(c, u, i) - u[c.nodes[i]]));
        part[w] = m;
    });
    return *std::max_element(part.begin(), part.end());
}

} // namespace detail

// Chain length from the uniqueness argument: diam(Omega)/(eps/2).
template <int N> double chain_length(const DppProblem<N> &p)
{
    return p.domain->inner().diameter() / (p.params.eps / 2);
}

// Values of g on the strip and the initial guess inside.
template <int N> std::vector<double> initial_values(const DppProblem<N> &p, const SolveOptions &opt)
{
    const auto &dom = *p.domain;
    const auto &lat = dom.lattice();
    if (opt.init == Init::custom) {
        require(opt.initial.size() == lat.size(), ErrorKind::precondition, "initial guess has wrong size");
        std::vector<double> u = opt.initial;
        for (std::size_t f = 0; f < lat.size(); ++f)
            if (dom.classify(f) != NodeClass::interior)
                u[f] = p.g(lat.node(f));
        return u;
    }
    std::vector<double> u(lat.size(), 0.0);
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (dom.classify(f) == NodeClass::outside)
            u[f] = p.g(lat.node(f));
    double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto f : dom.strip()) {
        u[f] = p.g(lat.node(f));
        sum += u[f];
        lo = std::min(lo, u[f]);
        hi = std::max(hi, u[f]);
    }
    double start = dom.strip().empty() ? 0.0 : sum / static_cast<double>(dom.strip().size());
    if (opt.init == Init::max_g)
        start = hi;
    else if (opt.init == Init::min_g)
        start = lo;
    for (auto f : dom.interior())
        u[f] = start;
    return u;
}

template <int N> GridFunction<N> as_grid_function(const DppProblem<N> &p, std::vector<double> values)
{
    return GridFunction<N>(p.lattice(), std::move(values), OutsidePolicy::boundary_data, p.g);
}

// Max interior |u - T u|, one deterministic sweep.
template <int N> double certify(const DppProblem<N> &p, const std::vector<double> &u, unsigned jobs = 1)
{
    auto c = detail::compile<N>(p);
    return detail::certificate<N>(c, u, jobs);
}

// L u + f at interior nodes, i.e. (T u - u)/eps^2, in interior order.
template <int N> std::vector<double> dpp_residual(const DppProblem<N> &p, const std::vector<double> &u)
{
    auto c = detail::compile<N>(p);
    std::vector<double> r(c.nodes.size());
    const double e2 = p.params.eps * p.params.eps;
    for (std::size_t i = 0; i < c.nodes.size(); ++i)
        r[i] = (detail::apply_T<N>(c, u, i) - u[c.nodes[i]]) / e2;
    return r;
}

template <int N> SolveResult<N> solve_dpp(const DppProblem<N> &p, const SolveOptions &opt = {})
{
    require(opt.tol > 0, ErrorKind::precondition, "tolerance must be positive");
    require(opt.relaxation > 0 && opt.relaxation < 2, ErrorKind::precondition, "relaxation must lie in (0, 2)");
    const auto t0 = std::chrono::steady_clock::now();
    auto c = detail::compile<N>(p);
    SolveReport rep;
    rep.tol = opt.tol;
    const double n0 = chain_length<N>(p);
    rep.max_iter = opt.max_iter ? opt.max_iter : static_cast<std::size_t>(10.0 * n0 * n0);
    std::vector<double> u = initial_values<N>(p, opt);
    const unsigned jobs = std::max(1u, opt.jobs);

    if (opt.sweep == Sweep::jacobi) {
        std::vector<double> next = u;
        std::vector<double> part(jobs, 0.0);
        while (true) {
            std::fill(part.begin(), part.end(), 0.0);
            parallel_for(c.nodes.size(), jobs, [&](std::size_t lo, std::size_t hi, unsigned w) {
                double m = 0.0;
                for (std::size_t i = lo; i < hi; ++i) {
                    double t = detail::apply_T<N>(c, u, i);
                    m = std::max(m, std::abs(t - u[c.nodes[i]]));
                    next[c.nodes[i]] = t;
                }
                part[w] = m;
            });
            double res = *std::max_element(part.begin(), part.end());
            rep.update_norm = res;
            if (res <= opt.tol) { // u itself is certified; keep it
                rep.converged = true;
                break;
            }
            if (rep.iterations >= rep.max_iter)
                break;
            std::swap(u, next);
            ++rep.iterations;
        }
    } else {
        const double w = opt.relaxation;
        while (true) {
            double m = 0.0;
            for (std::size_t i = 0; i < c.nodes.size(); ++i) {
                double &ui = u[c.nodes[i]];
                double t = detail::apply_T<N>(c, u, i);
                m = std::max(m, std::abs(t - ui));
                ui += w * (t - ui);
            }
            ++rep.iterations;
            rep.update_norm = m;
            if (rep.iterations % std::max<std::size_t>(1, opt.check_every) == 0 || m <= opt.tol) {
                if (detail::certificate<N>(c, u, jobs) <= opt.tol) {
                    rep.converged = true;
                    break;
                }
            }
            if (rep.iterations >= rep.max_iter)
                break;
        }
    }
    rep.residual = detail::certificate<N>(c, u, jobs);
    rep.converged = rep.converged && rep.residual <= opt.tol;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    SolveResult<N> out;
    out.report = rep;
    if (rep.converged)
        out.u = as_grid_function<N>(p, std::move(u));
    return out;
}

// Over-relaxation factor from the lowest Dirichlet mode of the limit operator.
template <int N> double suggested_relaxation(const DppProblem<N> &p)
{
    const double diam = p.domain->inner().diameter() + 2 * p.params.Lambda * p.params.eps;
    const double amin = p.params.beta / (2.0 * (N + 2));
    const double k = std::numbers::pi / diam;
    const double gap = p.params.eps * p.params.eps * amin * N * k * k;
    return std::min(1.95, 2.0 / (1.0 + std::sqrt(2.0 * gap)));
}

// |{y in B_1 : y_1 > 1/2}| / |B_1|.
inline double cap_fraction(int n)
{
    // fraction of the ball beyond the hyperplane y_1 = t is I_{1-t^2}((n+1)/2, 1/2)/2
    return 0.5 * boost::math::ibeta(0.5 * (n + 1), 0.5, 0.75);
}

struct UniquenessReport {
    double M = 0.0;        // sup (u - v) over interior
    double sup_gap = 0.0;  // sup |u - v|
    double n0 = 0.0;
    double beta_A = 0.0;
    double log_amplification = 0.0; // -n0 log(beta A)
    double tolerance = 0.0;
    bool pass = false;
};

template <int N>
UniquenessReport uniqueness_monitor(const DppProblem<N> &p, const GridFunction<N> &u, const GridFunction<N> &v,
                                    double tol_u, double tol_v)
{
    require(u.lattice().same_as(p.lattice()) && v.lattice().same_as(p.lattice()), ErrorKind::precondition,
            "solutions belong to different problems");
    UniquenessReport r;
    r.M = -std::numeric_limits<double>::infinity();
    for (auto f : p.domain->interior()) {
        double d = u.at(f) - v.at(f);
        r.M = std::max(r.M, d);
        r.sup_gap = std::max(r.sup_gap, std::abs(d));
    }
    r.n0 = chain_length<N>(p);
    r.beta_A = p.params.beta * cap_fraction(N);
    r.log_amplification = -r.n0 * std::log(r.beta_A);
    r.tolerance = tol_u + tol_v;
    r.pass = r.M <= 0.0 || std::log(r.M) <= std::log(r.tolerance) + r.log_amplification;
    return r;
}

struct ComparisonReport {
    bool preconditions = false;
    double sub_defect = 0.0;   // max (u - T u)^+
    double super_defect = 0.0; // max (T v - v)^+
    double boundary_violation = 0.0;
    double max_violation = 0.0; // max interior (u - v)
    double slack = 0.0;
    bool pass = false;
};

// Expected exit-time bound for the walk: the beta-mean alone raises E|X|^2 by
// beta eps^2 N/(N+2) per step.
template <int N> double exit_time_bound(const DppProblem<N> &p)
{
    auto [lo, hi] = p.domain->inner().bounding_box();
    double R = dist<N>(lo, hi) / 2 + p.params.Lambda * p.params.eps;
    double e = p.params.eps;
    return R * R * (N + 2) / (p.params.beta * N * e * e);
}

template <int N>
ComparisonReport comparison_check(const DppProblem<N> &p, const std::vector<double> &u, const std::vector<double> &v,
                                  double tol)
{
    auto c = detail::compile<N>(p);
    ComparisonReport r;
    for (std::size_t i = 0; i < c.nodes.size(); ++i) {
        auto f = c.nodes[i];
        r.sub_defect = std::max(r.sub_defect, u[f] - detail::apply_T<N>(c, u, i));
        r.super_defect = std::max(r.super_defect, detail::apply_T<N>(c, v, i) - v[f]);
    }
    for (auto f : p.domain->strip())
        r.boundary_violation = std::max(r.boundary_violation, u[f] - v[f]);
    r.preconditions = r.sub_defect <= tol && r.super_defect <= tol && r.boundary_violation <= tol;
    if (!r.preconditions)
        throw Error(ErrorKind::precondition, "comparison: residual or boundary check failed");
    r.max_violation = -std::numeric_limits<double>::infinity();
    for (auto f : p.domain->interior())
        r.max_violation = std::max(r.max_violation, u[f] - v[f]);
    r.slack = (r.sub_defect + r.super_defect) * exit_time_bound<N>(p) + r.boundary_violation;
    r.pass = r.max_violation <= r.slack + 1e-14;
    return r;
}

// L-/L+ over the lattice net (all offsets within Lambda) at the given nodes.
template <int N> struct ExtremalField {
    std::vector<double> lminus, lplus;
};

template <int N>
ExtremalField<N> extremal_field(const Lattice<N> &lat, const std::vector<double> &u, const OperatorParams &prm,
                                const std::vector<std::size_t> &nodes)
{
    const double ratio = prm.eps / lat.h();
    auto net = lattice_direction_net<N>(prm.Lambda, ratio);
    auto ball = uniform_ball_quadrature<N>(ratio);
    std::vector<std::int64_t> noff, boff;
    std::vector<double> bw;
    Index<N> reach{};
    for (const auto &z : net.points) {
        auto k = detail::offset_index<N>(z, prm.eps, lat.h());
        for (int i = 0; i < N; ++i)
            reach[i] = std::max(reach[i], std::abs(k[i]));
        noff.push_back(detail::flat_offset<N>(k, lat));
    }
    for (const auto &a : ball.pairs) {
        boff.push_back(detail::flat_offset<N>(detail::offset_index<N>(a.z, prm.eps, lat.h()), lat));
        bw.push_back(a.weight / ball.denominator);
    }
    ExtremalField<N> out;
    const double e2 = 2 * prm.eps * prm.eps;
    for (auto f : nodes) {
        auto k = lat.multi(f);
        for (int a = 0; a < N; ++a) {
            Index<N> lo = k, hi = k;
            lo[a] -= reach[a];
            hi[a] += reach[a];
            require(lat.in_bounds(lo) && lat.in_bounds(hi), ErrorKind::domain, "extremal stencil leaves lattice");
        }
        const auto fi = static_cast<std::int64_t>(f);
        const double ux = u[f];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
        for (auto o : noff) {
            double d = u[fi + o] + u[fi - o] - 2 * ux;
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        for (std::size_t j = 0; j < boff.size(); ++j)
            mean += bw[j] * (u[fi + boff[j]] + u[fi - boff[j]] - 2 * ux);
        out.lminus.push_back((prm.alpha * lo + prm.beta * mean) / e2);
        out.lplus.push_back((prm.alpha * hi + prm.beta * mean) / e2);
    }
    return out;
}

} // namespace dpplab
