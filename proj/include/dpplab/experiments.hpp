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

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "regularity.hpp"
#include "report.hpp"

namespace dpplab {

// ---------------------------------------------------------------------------
// JSON views of the module reports

NLOHMANN_JSON_SERIALIZE_ENUM(Provenance, {{Provenance::paper_formula, "paper-formula"},
                                          {Provenance::calibrated, "calibrated"},
                                          {Provenance::estimated, "estimated"}})

inline void to_json(Json &j, const Constant &c)
{
    j = Json{{"log", c.log}, {"value", c.value()}, {"tag", c.tag}};
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(RegularityConstants, n, Lambda, beta, theta, eps0, rho, rho_small, C_abp, psi0,
                                   Psi0, C_ball, c_ball, ell, M, one_minus_mu, n_conv, C_conv, c, a, d, eta, sigma,
                                   lambda, kappa, gamma, C_holder, C_cond1, C_lemma, delta, C_tilde, vacuous)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(SolveReport, converged, iterations, residual, update_norm, tol, max_iter)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(ResidualBounds, lminus_max, lplus_min, nodes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(MeasureEstimateReport, inf_Q3, rho_measured, log_M, measure, slack,
                                   log_one_minus_mu, vacuous, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(SpreadingReport, n, K, log_c, mass, slack, triggered, min_Q1, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(CzExercise, k, run, status, delta1, delta2, L, L_max, measure_A, measure_B, bound,
                                   selected, conclusion, audit, witness_generation)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(LadderRow, k, log_level, measure, slack, log_bound, log_rescale, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(SuperlevelReport, log_K, L, rows, cz, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(LevelDecayRow, t, measure, log_bound, log_bound_fit, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(DecayFit, log_a, log_d, pass, fitted, a_fit, d_fit, fit_points, rows)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(DeGiorgiReport, theta, log_eta, mass_Q1, premise, inf_Q3, margin_inf, pass_inf, R,
                                   k, M, m, sup_BR, rho, log_C, rhs, margin_osc, osc_ratio, large_rho_branch,
                                   branch_identity, pass_osc, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(HolderReport, R, eps, rho, sup_abs, unconstrained, gamma_est, C_est, fit_residual,
                                   radii, modulus, gamma_grid, C_grid, fit_nodes, audit_nodes, audit_pairs,
                                   audit_worst, audit_pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(HarnackReport, sup_B1, inf_B1, sup_B3, rho, eps, lambda, quotient, log_C_tilde,
                                   log_rhs, log_sup, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(ChainStep, k, R_k, log_M_k, x, u, above)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(ApujaTrace, log_C, gamma, lambda, kappa, eps, log_delta, k0, k0_bracket, identity,
                                   log_T, steps, stop_k, escaped_B2, contradiction, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(BarrierReport, sigma, kappa, eps, eps0, log_A, log_B, samples, worst_margin,
                                   worst_at, tol_barrier, tol_coarse, psi_max_outer, pass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(AbpAudit, sup_u, rhs, ratio, degenerate, min_residual, residual_slack,
                                   contact_nodes, cover_cubes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(ConvergenceRow, eps, h, error, quotient, iterations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_ONLY_SERIALIZE(ConvergenceStudy, name, rows, order, limit_quotient, monotone)

inline Json to_json(const FunctionSpec &s)
{
    Json j{{"kind", s.kind}};
    if (s.kind == "constant" || s.kind == "cosine" || s.kind == "affine" || s.kind == "quadratic")
        j["value"] = s.value;
    if (s.kind == "gaussian" || s.kind == "cosine")
        j["amplitude"] = s.amplitude;
    if (s.kind == "gaussian") {
        j["width"] = s.width;
        j["center"] = s.center;
    }
    if (s.kind == "cosine")
        j["frequency"] = s.frequency;
    if (s.kind == "affine")
        j["slope"] = s.slope;
    if (s.kind == "quadratic")
        j["coefficient"] = s.coefficient;
    return j;
}

inline Json to_json(const ProblemConfig &p)
{
    Json j;
    if (!p.preset.empty())
        j["preset"] = p.preset;
    j["dim"] = p.dim;
    j["domain"] = p.domain;
    j["radius"] = p.radius;
    j["eps"] = p.eps;
    j["ratio"] = p.ratio;
    j["alpha"] = 1 - p.beta;
    j["beta"] = p.beta;
    j["Lambda"] = p.Lambda;
    j["operator"] = operator_name(p.op);
    if (p.op == OperatorKind::linear) {
        Json fam{{"kind", p.family.kind}};
        if (p.family.kind == "pair")
            fam["direction"] = p.family.direction;
        if (p.family.kind == "ellipsoid") {
            fam["axes"] = p.family.axes;
            fam["shells"] = p.family.shells;
        }
        if (p.family.kind == "random-ellipsoid") {
            fam["cell"] = p.family.cell;
            fam["span"] = p.family.span;
            fam["seed"] = *p.family.seed;
        }
        j["family"] = fam;
    }
    if (p.op == OperatorKind::sup_inf)
        j["control_sets"] = p.control_sets;
    j["f"] = to_json(p.f);
    j["g"] = to_json(p.g);
    return j;
}

// ---------------------------------------------------------------------------
// From descriptors to problems

template <int N> Vec<N> to_vec(const std::vector<double> &v)
{
    require(v.size() == static_cast<std::size_t>(N), ErrorKind::config, "vector length does not match dim");
    Vec<N> x;
    for (int i = 0; i < N; ++i)
        x[i] = v[static_cast<std::size_t>(i)];
    return x;
}

template <int N> std::function<double(const Vec<N> &)> make_function(const FunctionSpec &s)
{
    if (s.kind == "zero")
        return [](const Vec<N> &) { return 0.0; };
    if (s.kind == "constant")
        return [v = s.value](const Vec<N> &) { return v; };
    if (s.kind == "gaussian")
        return [a = s.amplitude, w = s.width, c = to_vec<N>(s.center)](const Vec<N> &x) {
            return a * std::exp(-norm2<N>(sub<N>(x, c)) / (w * w));
        };
    if (s.kind == "cosine")
        return [v = s.value, a = s.amplitude, k = s.frequency](const Vec<N> &x) { return v + a * std::cos(k * x[0]); };
    if (s.kind == "affine")
        return [v = s.value, b = to_vec<N>(s.slope)](const Vec<N> &x) { return v + dot<N>(b, x); };
    if (s.kind == "quadratic")
        return [v = s.value, c = s.coefficient](const Vec<N> &x) { return v + c * norm2<N>(x); };
    throw Error(ErrorKind::config, "unknown function kind '" + s.kind + "'");
}

template <int N> Region<N> make_domain(const ProblemConfig &p)
{
    return p.domain == "cube" ? centered_cube<N>(2 * p.radius) : centered_ball<N>(p.radius);
}

template <int N> Mat<N> diagonal(const std::vector<double> &d)
{
    Mat<N> S = Mat<N>::Zero();
    for (int i = 0; i < N; ++i)
        S(i, i) = d.at(static_cast<std::size_t>(i));
    return S;
}

template <int N> MeasureFamily<N> make_family(const FamilySpec &s, double Lambda, int ratio)
{
    const double m = static_cast<double>(ratio);
    if (s.kind == "uniform-ball")
        return uniform_ball_family<N>(m);
    if (s.kind == "pair")
        return constant_family<N>(pair_quadrature<N>(to_vec<N>(s.direction)), Lambda, "pair");
    if (s.kind == "ellipsoid") {
        std::vector<Mat<N>> mats;
        for (const auto &a : s.axes)
            mats.push_back(diagonal<N>(a));
        auto fam = ellipsoid_family<N>(
            mats,
            [radii = s.shells](const Vec<N> &x) {
                double r = norm<N>(x);
                return static_cast<std::size_t>(std::upper_bound(radii.begin(), radii.end(), r) - radii.begin());
            },
            Lambda, m);
        fam.label = "ellipsoid-shells";
        return fam;
    }
    if (s.kind == "random-ellipsoid") {
        // one ellipsoid per slab of width `cell` in x_1, semi-axes drawn in [1, Lambda]
        Rng rng(*s.seed);
        const auto slabs = static_cast<std::size_t>(std::ceil(2 * s.span / s.cell));
        std::vector<Mat<N>> mats;
        for (std::size_t i = 0; i < slabs; ++i) {
            std::vector<double> d(N);
            for (auto &v : d)
                v = rng.uniform(1.0, Lambda);
            mats.push_back(diagonal<N>(d));
        }
        auto fam = ellipsoid_family<N>(
            mats,
            [span = s.span, cell = s.cell, slabs](const Vec<N> &x) {
                double t = std::floor((x[0] + span) / cell);
                t = std::clamp(t, 0.0, static_cast<double>(slabs - 1));
                return static_cast<std::size_t>(t);
            },
            Lambda, m);
        fam.label = "random-ellipsoid";
        return fam;
    }
    throw Error(ErrorKind::config, "unknown family kind '" + s.kind + "'");
}

template <int N> DppProblem<N> build_problem(const ProblemConfig &c, int ratio = 0)
{
    require(c.dim == N, ErrorKind::precondition, "problem dimension mismatch");
    if (ratio == 0)
        ratio = c.ratio;
    auto prm = make_params(c.beta, c.eps, c.Lambda);
    auto p = make_problem<N>(make_domain<N>(c), prm, ratio, c.op, make_function<N>(c.f), make_function<N>(c.g));
    if (c.op == OperatorKind::linear)
        p.family = make_family<N>(c.family, c.Lambda, ratio);
    if (c.op == OperatorKind::tug_of_war)
        p.control.kind = ControlKind::tug_of_war;
    if (c.op == OperatorKind::sup_pair)
        p.control.kind = ControlKind::sup_pair;
    if (c.op == OperatorKind::sup_inf) {
        p.control.kind = ControlKind::sup_inf;
        for (const auto &V : c.control_sets) {
            std::vector<Vec<N>> set;
            for (const auto &z : V)
                set.push_back(to_vec<N>(z));
            p.control.catalog.push_back(std::move(set));
        }
    }
    return p;
}

template <int N> struct Solved {
    DppProblem<N> problem;
    SolveReport report;
    GridFunction<N> u;
};

template <int N> Solved<N> solve_config(const ProblemConfig &c, int ratio, double tol, unsigned jobs)
{
    auto p = build_problem<N>(c, ratio);
    SolveOptions o;
    o.sweep = Sweep::gauss_seidel;
    o.relaxation = suggested_relaxation<N>(p);
    o.tol = tol;
    o.jobs = jobs;
    auto r = solve_dpp<N>(p, o);
    require(r.u.has_value(), ErrorKind::convergence,
            "solver stopped after " + std::to_string(r.report.iterations) + " iterations with residual " +
                std::to_string(r.report.residual));
    return {std::move(p), r.report, std::move(*r.u)};
}

// ---------------------------------------------------------------------------
// The regularity pipeline on one solved instance

struct PipelineOptions {
    double tol = 1e-11;
    std::optional<double> slack;
    int second_ratio = 0; // 0: skip the second resolution
    double holder_R = 2.0;
    double gamma_spread = 0.1;
    int k_max = 5;
    double K = 2.0;
    int ladder_top = 10;
    double theta = 0.5, R_dg = 0.5;
    double c_max = 10.0;
    unsigned jobs = 1;
};

struct PipelineResult {
    Json report;
    std::map<std::string, bool> checks;

    bool all(std::initializer_list<const char *> names) const
    {
        for (const char *n : names) {
            auto it = checks.find(n);
            if (it == checks.end() || !it->second)
                return false;
        }
        return true;
    }
};

// C_abp from the sup-pair Poisson problem on B_{2 sqrt N} with the instance's f.
template <int N> std::pair<double, AbpAudit> estimate_c_abp(const ProblemConfig &c, double tol, double slack,
                                                            unsigned jobs)
{
    ProblemConfig q = c;
    q.domain = "ball";
    q.radius = 2 * std::sqrt(static_cast<double>(N));
    q.op = OperatorKind::sup_pair;
    q.g = FunctionSpec{};
    q.g.center.assign(N, 0.0);
    q.g.slope.assign(N, 0.0);
    auto s = solve_config<N>(q, q.ratio, tol, jobs);
    auto audit = abp_ratio_audit<N>(s.u, make_function<N>(q.f), s.problem.params, slack,
                                    default_tol_contact(tol, q.eps), jobs);
    return {std::max(1.0, audit.ratio), audit};
}

template <int N> PipelineResult regularity_pipeline(const ProblemConfig &c, const PipelineOptions &o)
{
    PipelineResult out;
    Json &rep = out.report;
    rep["problem"] = to_json(c);
    const double slack = o.slack ? *o.slack : 10 * o.tol / (c.eps * c.eps);
    rep["residual_slack"] = slack;

    auto s = solve_config<N>(c, c.ratio, o.tol, o.jobs);
    const auto &prm = s.problem.params;
    rep["solve"] = s.report;
    const auto B7 = centered_ball<N>(7);
    auto res = residual_bounds<N>(s.u, prm, B7);
    rep["residual_B7"] = res;
    const double rho_minus = std::max(0.0, res.lminus_max);
    const double rho = std::max({0.0, res.lminus_max, -res.lplus_min});

    auto [c_abp, abp] = estimate_c_abp<N>(c, o.tol, slack, o.jobs);
    rep["abp"] = abp;

    // Hölder first: its (C, gamma) feed the Harnack constant
    ConstantInputs in0;
    in0.n = N;
    in0.Lambda = c.Lambda;
    in0.beta = c.beta;
    const double eps0 = build_constants(in0).eps0.value();
    auto h1 = holder_estimate<N>(s.u, prm, rho, o.holder_R, eps0, slack);
    Json hj{{"first", h1}};
    bool holder_ok = h1.audit_pass && h1.gamma_est > 0;
    if (o.second_ratio > 0) {
        auto s2 = solve_config<N>(c, o.second_ratio, o.tol, o.jobs);
        auto res2 = residual_bounds<N>(s2.u, s2.problem.params, B7);
        const double rho2 = std::max({0.0, res2.lminus_max, -res2.lplus_min});
        auto h2 = holder_estimate<N>(s2.u, s2.problem.params, rho2, o.holder_R, eps0, slack);
        hj["second_ratio"] = o.second_ratio;
        hj["second_solve"] = s2.report;
        hj["second"] = h2;
        const double spread = std::abs(h1.gamma_est - h2.gamma_est);
        hj["gamma_spread"] = spread;
        holder_ok = holder_ok && h2.audit_pass && spread <= o.gamma_spread + 1e-12;
    }
    rep["holder"] = hj;
    out.checks["holder"] = holder_ok;

    ConstantInputs in = in0;
    in.rho = rho_minus;
    in.C_abp = c_abp;
    in.gamma = h1.unconstrained ? 1.0 : h1.gamma_est;
    in.C_holder = h1.unconstrained ? 1.0 : std::max(1.0, h1.C_est);
    in.theta = o.theta;
    auto k = build_constants(in);
    rep["constants"] = k;

    // supersolution statements on u / inf_{Q_3} u
    const double inf3 = detail::min_over<N>(s.u, centered_cube<N>(3));
    require(inf3 > 0, ErrorKind::hypothesis, "u must be positive on Q_3");
    auto un = scaled<N>(s.u, inf3);
    rep["inf_Q3"] = inf3;
    auto me = measure_estimate_check<N>(un, prm, k, slack);
    rep["measure_estimate"] = me;
    out.checks["measure_estimate"] = me.pass;
    auto sp = spreading_check<N>(un, prm, k, o.K, slack);
    rep["spreading"] = sp;
    out.checks["spreading"] = sp.pass;
    auto sl = superlevel_iteration<N>(un, prm, k, k.M.log, o.k_max, slack);
    rep["superlevel"] = sl;
    out.checks["superlevel"] = sl.pass;
    const int L = cz_generations(prm.eps, k.eps0.value());
    auto ladder = cz_ladder_exercise<N>(un, o.K, o.k_max, Rational(1, 2), Rational(1, 4), L);
    rep["cz_calibrated"] = Json{{"K", o.K}, {"delta1", "1/2"}, {"delta2", "1/4"}, {"steps", ladder}};
    bool cz_ok = true;
    for (const auto &e : ladder)
        if (e.run)
            cz_ok = cz_ok && e.conclusion && e.audit;
    out.checks["cz_calibrated"] = cz_ok;
    auto prof = level_set_profile<N>(un, power_ladder(2.0, o.ladder_top));
    auto dec = decay_fit(prof, k);
    rep["decay"] = dec;
    out.checks["decay"] = dec.pass;

    auto dg = de_giorgi_check<N>(scaled<N>(s.u, premise_scale<N>(s.u, o.theta)), prm, k, o.theta, o.R_dg, slack);
    rep["de_giorgi"] = dg;
    out.checks["de_giorgi"] = dg.premise && dg.pass && dg.margin_inf >= 0 && dg.margin_osc >= 0;

    auto hr = harnack_report<N>(s.u, res, rho, prm.eps, k, slack);
    rep["harnack"] = hr;
    out.checks["harnack"] = hr.pass;
    auto tr = apuja_iteration_trace<N>(s.u, prm.eps, rho, k.C_lemma.log, in.gamma, k.lambda, k.kappa);
    rep["harnack_chain"] = tr;
    out.checks["harnack_chain"] = tr.pass;

    Json checks = Json::object();
    for (const auto &[name, ok] : out.checks)
        checks[name] = ok;
    rep["checks"] = checks;
    return out;
}

// ---------------------------------------------------------------------------
// Experiment runs

struct Outcome {
    Json report;
    Series series;
    bool pass = false;
    // extra files: name -> bytes
    std::vector<std::pair<std::string, std::string>> files;
};

struct RunContext {
    unsigned jobs = 1;
};

namespace detail {

inline Json header(const ExperimentConfig &c)
{
    Json j;
    j["schema"] = 1;
    j["kind"] = info(c.kind).name;
    if (c.seed)
        j["seed"] = *c.seed;
    j["statement"] = info(c.kind).statement;
    j["tolerances"] = Json{{"solver", c.tol_solver}};
    if (c.slack)
        j["tolerances"]["slack"] = *c.slack;
    return j;
}

inline PipelineOptions pipeline_options(const ExperimentConfig &c, unsigned jobs)
{
    PipelineOptions o;
    o.tol = c.tol_solver;
    o.slack = c.slack;
    o.holder_R = c.params.R;
    o.gamma_spread = c.params.gamma_spread;
    o.k_max = c.params.k_max;
    o.K = c.params.K;
    o.ladder_top = c.params.ladder_top;
    o.theta = c.params.theta;
    o.R_dg = c.params.R_dg;
    o.c_max = c.params.c_max;
    o.jobs = jobs;
    return o;
}

inline double num(const Json &j) { return j.get<double>(); }

inline void name_value(Series &s, const std::string &name, double v) { s.add({name, v}); }

template <int N> Outcome run_solve(const ExperimentConfig &c, const RunContext &ctx)
{
    Outcome out;
    auto s = solve_config<N>(c.problem, c.problem.ratio, c.tol_solver, ctx.jobs);
    const auto &dom = *s.problem.domain;
    double gmin = std::numeric_limits<double>::infinity(), gmax = -gmin;
    for (auto f : dom.strip()) {
        gmin = std::min(gmin, s.u.at(f));
        gmax = std::max(gmax, s.u.at(f));
    }
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    for (auto f : dom.interior()) {
        umin = std::min(umin, s.u.at(f));
        umax = std::max(umax, s.u.at(f));
    }
    out.report["problem"] = to_json(c.problem);
    out.report["solve"] = s.report;
    out.report["nodes"] = dom.interior().size();
    out.report["u_range"] = {umin, umax};
    out.report["g_range"] = {gmin, gmax};
    const bool source_free = c.problem.f.kind == "zero";
    out.report["source_free"] = source_free;
    const double tol = 10 * c.tol_solver;
    bool mp = !source_free || (umin >= gmin - tol && umax <= gmax + tol);
    out.report["maximum_principle"] = source_free ? Json(mp) : Json("not applicable");
    out.pass = s.report.converged && mp;
    std::vector<std::string> cols;
    for (int i = 0; i < N; ++i)
        cols.push_back("x" + std::to_string(i + 1));
    cols.push_back("u");
    out.series = Series(cols);
    for (auto f : dom.interior()) {
        auto x = s.problem.lattice().node(f);
        std::vector<Series::Cell> row(x.begin(), x.end());
        row.push_back(s.u.at(f));
        out.series.add(row);
    }
    return out;
}

template <int N> std::vector<Vec<N>> random_points(Rng &rng, std::size_t n, double r_in, double r_out)
{
    std::vector<Vec<N>> pts;
    while (pts.size() < n) {
        auto x = rng.in_ball<N>(r_out);
        if (norm<N>(x) > r_in)
            pts.push_back(x);
    }
    return pts;
}

template <int N> Outcome run_barrier(const ExperimentConfig &c, const RunContext &ctx)
{
    Outcome out;
    const auto &p = c.problem;
    const auto &e = c.params;
    Rng rng(*c.seed);
    const double step = e.net_step ? *e.net_step : (N == 1 ? 0.01 : 0.05);
    const double ball_ratio = e.ball_ratio ? *e.ball_ratio : (N == 1 ? 20.0 : 10.0);
    auto net = direction_net<N>(p.Lambda, step);
    auto ball = uniform_ball_quadrature<N>(ball_ratio);
    out.series = Series({"barrier", "eps", "samples", "worst_margin", "tol_barrier", "pass"});

    auto gb = build_global_barrier(N, p.Lambda, p.beta);
    const double rn = std::sqrt(static_cast<double>(N));
    Json glob;
    glob["sigma"] = gb.sigma;
    glob["eps0"] = gb.eps0;
    glob["value_inner"] = gb.value_r2(2.25 * N);
    glob["value_outer"] = gb.value_r2(4.0 * N);
    const bool bc = std::abs(gb.value_r2(2.25 * N) - 2) <= 1e-9 && std::abs(gb.value_r2(4.0 * N)) <= 1e-9;
    glob["boundary_values"] = bc;
    // psi <= 0 for |x| >= 1/4 on a radius ladder out to the sampling radius
    double psi_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 10000; ++i) {
        double r = 0.25 + (2 * rn + p.Lambda - 0.25) * i / 10000.0;
        psi_max = std::max(psi_max, gb.psi_r2(r * r));
    }
    glob["psi_max_outside_quarter"] = psi_max;
    bool pass = bc && psi_max <= 0;
    auto samples = random_points<N>(rng, e.samples, 0.0, 2 * rn);
    Json runs = Json::array();
    for (double eps : {gb.eps0, gb.eps0 / 2}) {
        auto prm = make_params(p.beta, eps, p.Lambda);
        auto r = verify_global_barrier<N>(gb, prm, samples, net, ball, ctx.jobs);
        runs.push_back(r);
        out.series.add({std::string("global"), eps, static_cast<std::int64_t>(r.samples), r.worst_margin,
                        r.tol_barrier, static_cast<std::int64_t>(r.pass)});
        pass = pass && r.pass;
    }
    glob["runs"] = runs;
    out.report["global"] = glob;

    // annular barrier around the origin with inner radius r >= kappa eps
    const double sa = annular_sigma(N, p.Lambda, p.beta);
    const double kap = annular_kappa(sa, p.Lambda);
    const double eps_a = std::min(gb.eps0, e.annular_r / (2 * kap));
    Json ann;
    ann["sigma"] = sa;
    ann["kappa"] = kap;
    ann["r"] = e.annular_r;
    Json aruns = Json::array();
    for (double eps : {eps_a, eps_a / 2}) {
        auto b = build_annular_barrier<N>(zero_vec<N>(), e.annular_r, eps, p.Lambda, p.beta, e.annular_u_inf);
        const bool abc = std::abs(b.value_t(b.rho()) - e.annular_u_inf) <= 1e-9 * std::max(1.0, e.annular_u_inf) &&
                         std::abs(b.value_t(4.0)) <= 1e-9 * std::max(1.0, e.annular_u_inf);
        auto pts = random_points<N>(rng, e.samples, e.annular_r * (1 + 1e-9), 4.0);
        auto prm = make_params(p.beta, eps, p.Lambda);
        auto r = verify_annular_barrier<N>(b, prm, pts, net, ball, ctx.jobs);
        Json jr = r;
        jr["boundary_values"] = abc;
        aruns.push_back(jr);
        out.series.add({std::string("annular"), eps, static_cast<std::int64_t>(r.samples), r.worst_margin,
                        r.tol_barrier, static_cast<std::int64_t>(r.pass && abc)});
        pass = pass && r.pass && abc && r.psi_max_outer <= 0;
    }
    ann["runs"] = aruns;
    out.report["annular"] = ann;
    out.pass = pass;
    return out;
}

template <int N> Outcome run_abp(const ExperimentConfig &c, const RunContext &ctx)
{
    Outcome out;
    const double slack = c.residual_slack();
    auto [cab, audit] = estimate_c_abp<N>(c.problem, c.tol_solver, slack, ctx.jobs);
    out.report["problem"] = to_json(c.problem);
    out.report["audit"] = audit;
    out.report["C_abp_estimate"] = cab;
    out.report["c_max"] = c.params.c_max;
    out.pass = std::isfinite(audit.ratio) && audit.ratio <= c.params.c_max;
    out.series = Series({"sup_u", "rhs", "ratio", "contact_nodes", "cover_cubes"});
    out.series.add({audit.sup_u, audit.rhs, audit.ratio, static_cast<std::int64_t>(audit.contact_nodes),
                    static_cast<std::int64_t>(audit.cover_cubes)});
    return out;
}

template <int N> Outcome run_cz(const ExperimentConfig &c, const RunContext &)
{
    Outcome out;
    const auto &e = c.params;
    const Rational d1 = parse_rational(e.delta1), d2 = parse_rational(e.delta2);
    Rng rng(*c.seed);
    out.series = Series({"instance", "measure_A", "measure_B", "bound", "selected", "conclusion", "audit"});
    bool pass = true;
    std::size_t failures = 0;
    Json first;
    for (std::size_t i = 0; i < e.instances; ++i) {
        auto inst = generate_cz_instance<N>(rng, e.L, d1);
        auto r = cz_decompose<N>(inst.A, inst.B, d1, d2, e.L);
        auto a = cz_audit<N>(inst.A, inst.B, r);
        bool ok = r.conclusion && a.pass();
        pass = pass && ok;
        failures += ok ? 0 : 1;
        out.series.add({static_cast<std::int64_t>(i), static_cast<double>(r.measure_A),
                        static_cast<double>(r.measure_B), static_cast<double>(r.bound),
                        static_cast<std::int64_t>(r.selected.size()), static_cast<std::int64_t>(r.conclusion),
                        static_cast<std::int64_t>(a.pass())});
        if (i == 0) {
            first["measure_A"] = r.measure_A.str();
            first["measure_B"] = r.measure_B.str();
            first["bound"] = r.bound.str();
            first["selected"] = r.selected.size();
            first["residual"] = r.residual.size();
            if (e.bitmaps) {
                std::ostringstream a_os, b_os;
                inst.A.save(a_os);
                inst.B.save(b_os);
                out.files.emplace_back("cz_A.czig", a_os.str());
                out.files.emplace_back("cz_B.czig", b_os.str());
            }
        }
    }
    out.report["dim"] = N;
    out.report["L"] = e.L;
    out.report["delta1"] = d1.str();
    out.report["delta2"] = d2.str();
    out.report["instances"] = e.instances;
    out.report["instances_checked"] = out.series.rows.size();
    out.report["failures"] = failures;
    out.report["first_instance"] = first;
    out.pass = pass;
    return out;
}

template <int N> Outcome run_pipeline_kind(const ExperimentConfig &c, const RunContext &ctx)
{
    Outcome out;
    auto o = pipeline_options(c, ctx.jobs);
    if (c.kind == ExperimentKind::holder)
        o.second_ratio = c.params.second_ratio ? c.params.second_ratio : 2 * c.problem.ratio;
    auto pr = regularity_pipeline<N>(c.problem, o);
    out.report = pr.report;
    out.series = Series({"quantity", "value"});
    switch (c.kind) {
    case ExperimentKind::levelsets: {
        out.pass = pr.all({"measure_estimate", "spreading", "superlevel", "decay"});
        out.series = Series({"t", "measure", "log_bound", "log_bound_fit"});
        for (const auto &row : pr.report["decay"]["rows"])
            out.series.add({num(row["t"]), num(row["measure"]), num(row["log_bound"]),
                            num(row["log_bound_fit"])});
        break;
    }
    case ExperimentKind::de_giorgi: {
        out.pass = pr.all({"de_giorgi"});
        const auto &d = pr.report["de_giorgi"];
        for (const char *key : {"log_eta", "mass_Q1", "inf_Q3", "margin_inf", "M", "m", "sup_BR", "rho", "log_C",
                                "rhs", "margin_osc", "osc_ratio"})
            name_value(out.series, key, num(d[key]));
        break;
    }
    case ExperimentKind::holder: {
        out.pass = pr.all({"holder"});
        out.series = Series({"ratio", "radius", "modulus"});
        for (const char *which : {"first", "second"}) {
            const auto &h = pr.report["holder"][which];
            const std::int64_t ratio = std::string(which) == "first" ? c.problem.ratio : o.second_ratio;
            for (std::size_t i = 0; i < h["radii"].size(); ++i)
                out.series.add({ratio, num(h["radii"][i]), num(h["modulus"][i])});
        }
        break;
    }
    case ExperimentKind::harnack: {
        out.pass = pr.all({"harnack"});
        const auto &h = pr.report["harnack"];
        for (const char *key : {"sup_B1", "inf_B1", "sup_B3", "rho", "quotient", "log_C_tilde", "log_rhs", "log_sup"})
            name_value(out.series, key, num(h[key]));
        break;
    }
    default:
        throw Error(ErrorKind::precondition, "not a pipeline experiment");
    }
    return out;
}

struct CounterexampleRun {
    Json report;
    bool pass = false;
    double quotient = 0.0;
};

template <int N>
CounterexampleRun counterexample_run(double alpha, double eps, double a, int ratio, double radius)
{
    CounterexampleRun out;
    auto cx = build_counterexample<N>(alpha, eps, a, ratio, radius);
    auto net = lattice_direction_net<N>(1.0, static_cast<double>(ratio));
    auto res = residual_bounds_field<N>(cx.field, cx.u.lattice(), centered_ball<N>(std::min(radius, 7.0)),
                                        cx.params, net, cx.ball);
    ConstantInputs in;
    in.n = N;
    in.Lambda = 1.0;
    in.beta = 1 - alpha;
    auto k = build_constants(in);
    const double tol = 1e-12;
    double rec = 0.0;
    for (std::size_t i = 1; i + 1 < cx.spec.ak.size(); ++i)
        rec = std::max(rec, cx.spec.recurrence_residual(i));
    Json &j = out.report;
    j["a"] = a;
    j["alpha"] = alpha;
    j["eps"] = eps;
    j["phi"] = cx.spec.phi;
    j["phibar"] = cx.spec.phibar;
    j["root_product_error"] = cx.spec.root_product_error();
    j["root_sum_error"] = cx.spec.root_sum_error();
    j["recurrence_residual"] = rec;
    j["dpp_residual"] = cx.max_residual;
    j["nodes_checked"] = cx.nodes_checked;
    j["extremal_bounds"] = res;
    bool ok = cx.max_residual <= tol && cx.spec.root_product_error() <= tol && cx.spec.root_sum_error() <= tol &&
              rec <= tol;
    const bool harnack_domain = radius >= 7.0;
    if (harnack_domain) {
        const double rho = std::max({0.0, res.lminus_max, -res.lplus_min});
        auto h = harnack_report<N>(cx.u, res, rho, eps, k, 1e-9);
        j["constants"] = Json{{"eps0", k.eps0}, {"lambda", k.lambda}, {"kappa", k.kappa}, {"C_tilde", k.C_tilde}};
        j["harnack"] = h;
        out.quotient = h.quotient;
        ok = ok && h.quotient >= a && h.pass;
    } else {
        j["harnack"] = "needs radius >= 7";
        out.quotient = detail::max_over<N>(cx.u, centered_ball<N>(1)) / detail::min_over<N>(cx.u, centered_ball<N>(1));
        ok = ok && out.quotient >= a;
    }
    j["quotient"] = out.quotient;
    j["pass"] = ok;
    out.pass = ok;
    return out;
}

inline Outcome run_counterexample(const ExperimentConfig &c)
{
    Outcome out;
    const auto &e = c.params;
    out.series = Series({"a", "quotient", "dpp_residual", "log_rhs", "log_sup", "pass"});
    Json runs = Json::array();
    bool pass = true;
    for (double a : e.a_values) {
        auto r = e.dim == 1 ? counterexample_run<1>(e.alpha, e.cx_eps, a, e.cx_ratio, e.cx_radius)
                               : counterexample_run<2>(e.alpha, e.cx_eps, a, e.cx_ratio, e.cx_radius);
        pass = pass && r.pass;
        const auto &h = r.report["harnack"];
        double lr = h.is_object() ? num(h["log_rhs"]) : std::numeric_limits<double>::quiet_NaN();
        double ls = h.is_object() ? num(h["log_sup"]) : std::numeric_limits<double>::quiet_NaN();
        out.series.add({a, r.quotient, num(r.report["dpp_residual"]), lr, ls,
                        static_cast<std::int64_t>(r.pass)});
        runs.push_back(r.report);
    }
    out.report["dim"] = e.dim;
    out.report["radius"] = e.cx_radius;
    out.report["ratio"] = e.cx_ratio;
    out.report["runs"] = runs;
    out.pass = pass;
    return out;
}

inline Outcome run_convergence(const ExperimentConfig &c)
{
    Outcome out;
    const auto &e = c.params;
    ConvergenceStudy s = e.closed_form == "poisson-1d"
                             ? pde_convergence_study<1>(e.closed_form, e.eps_ladder, e.conv_ratio, c.tol_solver)
                             : pde_convergence_study<2>(e.closed_form, e.eps_ladder, e.conv_ratio, c.tol_solver);
    out.report["study"] = s;
    bool pass = s.monotone;
    if (e.max_final_error) {
        out.report["max_final_error"] = *e.max_final_error;
        pass = pass && !s.rows.empty() && s.rows.back().error <= *e.max_final_error;
    }
    out.series = Series({"eps", "h", "sup_error", "quotient", "iterations"});
    for (const auto &r : s.rows)
        out.series.add({r.eps, r.h, r.error, r.quotient, static_cast<std::int64_t>(r.iterations)});
    out.pass = pass;
    return out;
}

template <int N> Outcome run_dim(const ExperimentConfig &c, const RunContext &ctx)
{
    switch (c.kind) {
    case ExperimentKind::solve:
        return run_solve<N>(c, ctx);
    case ExperimentKind::barrier_check:
        return run_barrier<N>(c, ctx);
    case ExperimentKind::abp_check:
        return run_abp<N>(c, ctx);
    case ExperimentKind::cz_demo:
        return run_cz<N>(c, ctx);
    case ExperimentKind::levelsets:
    case ExperimentKind::de_giorgi:
    case ExperimentKind::holder:
        return run_pipeline_kind<N>(c, ctx);
    case ExperimentKind::harnack:
        if (c.params.source == "counterexample")
            return run_counterexample(c);
        return run_pipeline_kind<N>(c, ctx);
    case ExperimentKind::counterexample:
        return run_counterexample(c);
    case ExperimentKind::convergence:
        return run_convergence(c);
    }
    throw Error(ErrorKind::precondition, "unknown experiment kind");
}

} // namespace detail

// Runs the experiment. Statement failures come back as pass = false; violated
// preconditions and hypotheses propagate as Error.
inline Outcome run_experiment(const ExperimentConfig &c, const RunContext &ctx = {})
{
    int dim = c.has_problem ? c.problem.dim : 1;
    if (c.kind == ExperimentKind::cz_demo || c.kind == ExperimentKind::counterexample)
        dim = c.params.dim;
    Outcome out = dim == 1 ? detail::run_dim<1>(c, ctx) : detail::run_dim<2>(c, ctx);
    Json rep = detail::header(c);
    for (auto it = out.report.begin(); it != out.report.end(); ++it)
        rep[it.key()] = it.value();
    rep["pass"] = out.pass;
    out.report = std::move(rep);
    return out;
}

// Report for a run that stopped on a violated precondition or hypothesis.
inline Json error_report(const ExperimentConfig &c, const Error &e)
{
    Json rep = detail::header(c);
    rep["error"] = Json{{"kind", to_string(e.kind())}, {"message", e.what()}};
    rep["pass"] = false;
    return rep;
}

} // namespace dpplab
