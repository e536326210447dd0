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

// Acceptance run: one line per criterion, nonzero exit if any criterion fails.

#include "cz_oracle.hpp"

#include <dpplab/experiments.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <thread>

using namespace dpplab;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
    Json record; // everything a rerun must reproduce
};

unsigned jobs()
{
    return std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
}

std::string fmt(const char *f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

template <int N> GridFunction<N> random_grid(const Lattice<N> &lat, Rng &rng, OutsidePolicy pol = OutsidePolicy::error)
{
    std::vector<double> v(lat.size());
    for (auto &x : v)
        x = rng.uniform(-1, 1);
    return GridFunction<N>(lat, std::move(v), pol);
}

template <int N> Lattice<N> square(double half, double h)
{
    Vec<N> lo, hi;
    lo.fill(-half);
    hi.fill(half);
    return aligned_lattice<N>(lo, hi, h);
}

// full report and CSV of one experiment run, as the CLI would write them
Json experiment_record(const std::string &toml, Outcome &out)
{
    out = run_experiment(parse_config(toml, "acceptance"), RunContext{jobs()});
    Json files = Json::object();
    for (const auto &[name, bytes] : out.files)
        files[name] = std::to_string(std::hash<std::string>{}(bytes));
    return Json{{"report", dump_json(out.report)}, {"series", to_csv(out.series)}, {"files", files}};
}

// ---------------------------------------------------------------------------

template <int N> void affine_identities(Rng &rng, double &worst)
{
    for (int t = 0; t < 20; ++t) {
        Vec<N> c;
        for (auto &v : c)
            v = rng.uniform(-3, 3);
        const double c0 = rng.uniform(-5, 5);
        auto aff = [&](const Vec<N> &x) { return c0 + dot<N>(c, x); };
        const double L = rng.uniform(1.0, 2.0);
        auto p = make_params(rng.uniform(0.2, 1.0), rng.uniform(0.02, 0.3), L);
        auto ball = uniform_ball_quadrature<N>(5);
        auto nu = ellipsoid_quadrature<N>(Mat<N>::Identity() * L, L, 5);
        auto net = direction_net<N>(L, 0.1);
        auto pn = pucci_diagonal_net<N>(L, 3, 5);
        auto x = rng.in_ball<N>(1);
        auto l = apply_L<N>(aff, x, p, nu, ball);
        for (double v : {l.direct, l.delta, apply_Lplus<N>(aff, x, p, net, ball).value,
                         apply_Lminus<N>(aff, x, p, net, ball).value, apply_pucci_plus<N>(aff, x, p, pn).value})
            worst = std::max(worst, std::abs(v));
    }
}

Verdict operator_identities()
{
    Verdict v;
    Rng rng(101);
    double affine = 0;
    affine_identities<1>(rng, affine);
    affine_identities<2>(rng, affine);

    auto lat = aligned_lattice<2>({-1, -1}, {1, 1}, 0.05);
    auto p = make_params(0.3, 0.2, 1.0);
    auto ball = uniform_ball_quadrature<2>(4);
    auto nu = ellipsoid_quadrature<2>(Mat<2>::Identity(), 1.0, 4);
    double forms = 0;
    for (int t = 0; t < 20; ++t) {
        auto u = random_grid<2>(lat, rng);
        auto l = apply_L<2>(u, Vec<2>{0.0, 0.0}, p, nu, ball);
        forms = std::max(forms, std::abs(l.direct - l.delta) / std::max(1.0, std::abs(l.direct)));
    }

    const double eps = 0.2, L = 1.5;
    const int ratio = 4;
    auto lat2 = aligned_lattice<2>({-1, -1}, {1, 1}, eps / ratio);
    auto p2 = make_params(0.5, eps, L);
    auto ball2 = uniform_ball_quadrature<2>(ratio);
    Mat<2> S;
    S << 1.3, 0.1, 0.1, 1.1;
    auto nu2 = ellipsoid_quadrature<2>(S, L, ratio);
    auto net = lattice_direction_net<2>(L, ratio);
    double sandwich = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
        auto u = random_grid<2>(lat2, rng);
        Vec<2> x{0.05 * static_cast<double>(rng.below(5)), -0.05 * static_cast<double>(rng.below(5))};
        double l = apply_L<2>(u, x, p2, nu2, ball2).delta;
        sandwich = std::max({sandwich, apply_Lminus<2>(u, x, p2, net, ball2).value - l,
                             l - apply_Lplus<2>(u, x, p2, net, ball2).value});
    }
    v.pass = affine <= 1e-10 && forms <= 1e-12 && sandwich <= 0;
    v.detail = "affine max " + fmt("%.2e", affine) + ", delta/direct rel " + fmt("%.2e", forms) +
               ", sandwich violation " + fmt("%.2e", std::max(0.0, sandwich));
    v.record = Json{{"affine", affine}, {"forms", forms}, {"sandwich", sandwich}};
    return v;
}

template <int N> double moment_error()
{
    Mat<N> m = uniform_ball_quadrature<N>(20).second_moment();
    const double axial = 1.0 / (N + 2), radial = static_cast<double>(N) / (N + 2);
    double e = std::abs(m.trace() - radial) / radial;
    for (int i = 0; i < N; ++i)
        e = std::max(e, std::abs(m(i, i) - axial) / axial);
    return e;
}

Verdict quadrature_moments()
{
    Verdict v;
    double e1 = moment_error<1>(), e2 = moment_error<2>(), e3 = moment_error<3>();
    v.pass = std::max({e1, e2, e3}) <= 0.01;
    v.detail = "relative error N=1 " + fmt("%.2e", e1) + ", N=2 " + fmt("%.2e", e2) + ", N=3 " + fmt("%.2e", e3);
    v.record = Json{{"N1", e1}, {"N2", e2}, {"N3", e3}};
    return v;
}

template <int N> double max_principle_violation(Rng &rng, int t)
{
    double c0 = rng.uniform(-1, 1), c1 = rng.uniform(-2, 2), c2 = rng.uniform(0.5, 3);
    auto g = [=](const Vec<N> &x) { return c0 + std::sin(c2 * x[0] + c1) + (N > 1 ? 0.5 * x[N - 1] : 0.0); };
    const double eps = N == 1 ? 0.2 : 0.25;
    auto prm = make_params(rng.uniform(0.2, 1.0), eps, 1.5);
    auto kind = static_cast<OperatorKind>(t % 3);
    auto p = make_problem<N>(Region<N>::ball(zero_vec<N>(), 1.0), prm, 4, kind, nullptr, g);
    p.control.net = lattice_direction_net<N>(1.5, 4);
    SolveOptions o;
    o.tol = 1e-10;
    o.sweep = Sweep::gauss_seidel;
    o.check_every = 5;
    auto r = solve_dpp(p, o);
    if (!r.u)
        return std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto f : p.domain->strip()) {
        lo = std::min(lo, r.u->at(f));
        hi = std::max(hi, r.u->at(f));
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (auto f : p.domain->interior())
        worst = std::max({worst, lo - r.u->at(f), r.u->at(f) - hi});
    return worst;
}

Verdict solver_checks()
{
    Verdict v;
    Rng rng(303);
    double mp = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 20; ++t)
        mp = std::max(mp, t < 12 ? max_principle_violation<1>(rng, t) : max_principle_violation<2>(rng, t));
    const double mp_tol = 1e-9;

    Outcome out;
    Json rec = experiment_record("schema = 1\nkind = \"convergence\"\n[experiment]\ncase = \"poisson-1d\"\n"
                                 "eps = [0.2, 0.1, 0.05]\nratio = 10\nmax_final_error = 0.05\n",
                                 out);
    const auto &rows = out.report["study"]["rows"];
    std::string errs;
    for (const auto &r : rows)
        errs += (errs.empty() ? "" : " > ") + fmt("%.4f", r["error"].get<double>());
    const bool monotone = out.report["study"]["monotone"].get<bool>();
    const double final_err = rows.back()["error"].get<double>();
    v.pass = mp <= mp_tol && monotone && final_err <= 0.05;
    v.detail = "maximum principle worst excess " + fmt("%.1e", std::max(0.0, mp)) + " on 20 instances; " +
               "Poisson sup-error " + errs + (monotone ? " (decreasing)" : " (not decreasing)") + ", final " +
               fmt("%.4f", final_err) + " vs 0.05";
    v.record = Json{{"max_principle", mp}, {"convergence", rec}};
    return v;
}

Verdict abc_audit()
{
    Verdict v;
    Rng rng(404);
    const int n = 1000000;
    int bad = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        double a = std::exp(rng.uniform(-5, 5)), b = std::exp(rng.uniform(-5, 5));
        double c = (a + b) * rng.uniform(-1, 1) * (1 - 1e-12);
        double s = rng.uniform(1e-6, 10);
        auto r = abc_inequality(a, b, c, s);
        bad += r.holds ? 0 : 1;
        worst = std::min(worst, r.lhs - r.rhs);
    }
    v.pass = bad == 0;
    v.detail = std::to_string(n) + " tuples, " + std::to_string(bad) + " failures, min lhs - rhs " +
               fmt("%.2e", worst);
    v.record = Json{{"failures", bad}, {"min_gap", worst}};
    return v;
}

Verdict barrier_checks()
{
    Verdict v;
    Json rec;
    std::string detail;
    for (int n : {1, 2}) {
        Outcome out;
        rec["N" + std::to_string(n)] =
            experiment_record("schema = 1\nkind = \"barrier-check\"\nseed = 505\n[problem]\ndim = " +
                                  std::to_string(n) + "\nbeta = 0.9\nLambda = 1.5\n[experiment]\nsamples = 1000\n",
                              out);
        const auto &g = out.report["global"];
        double gm = std::numeric_limits<double>::infinity(), am = gm;
        for (const auto &r : g["runs"])
            gm = std::min(gm, r["worst_margin"].get<double>());
        for (const auto &r : out.report["annular"]["runs"])
            am = std::min(am, r["worst_margin"].get<double>());
        v.pass = v.pass && out.pass;
        detail += (detail.empty() ? "" : "; ") + std::string("N=") + std::to_string(n) + " sigma " +
                  fmt("%g", g["sigma"].get<double>()) + ", global margin " + fmt("%.2e", gm) + ", annular margin " +
                  fmt("%.2e", am) + (out.pass ? "" : " FAILED");
    }
    v.detail = detail;
    v.record = rec;
    return v;
}

template <int N> bool oracle_agrees(const CzInstance<N> &in, const Rational &d1, const Rational &d2, int L)
{
    auto r = cz_decompose<N>(in.A, in.B, d1, d2, L);
    std::set<DyadicCube<N>> sel, res;
    dpplab::testing::oracle<N>(in.A, DyadicCube<N>::root(), L, d1, d2, sel, res);
    std::set<DyadicCube<N>> got_sel, got_res(r.residual.begin(), r.residual.end());
    for (const auto &s : r.selected)
        got_sel.insert(s.cube);
    return got_sel == sel && got_res == res && r.conclusion && cz_audit<N>(in.A, in.B, r).pass();
}

Verdict cz_checks()
{
    Verdict v;
    Json rec;
    std::size_t instances = 0, failed = 0;
    const char *runs[] = {"dim = 1\nL = 6\ndelta1 = \"1/3\"\ndelta2 = \"1/7\"\ninstances = 500\n",
                          "dim = 2\nL = 5\ndelta1 = \"1/4\"\ndelta2 = \"1/9\"\ninstances = 500\n"};
    int i = 0;
    for (const char *r : runs) {
        Outcome out;
        rec["run" + std::to_string(i++)] = experiment_record(
            std::string("schema = 1\nkind = \"cz-demo\"\nseed = 606\n[experiment]\n") + r + "bitmaps = false\n", out);
        instances += out.report["instances_checked"].get<std::size_t>();
        failed += out.report["failures"].get<std::size_t>();
        v.pass = v.pass && out.pass;
    }
    Rng rng(607);
    int mismatches = 0;
    for (int t = 0; t < 100; ++t) {
        bool ok = t % 2 == 0 ? oracle_agrees<1>(generate_cz_instance<1>(rng, 5, Rational(1, 3)), Rational(1, 3),
                                                 Rational(1, 7), 5)
                             : oracle_agrees<2>(generate_cz_instance<2>(rng, 3, Rational(1, 4)), Rational(1, 4),
                                                 Rational(1, 9), 3);
        mismatches += ok ? 0 : 1;
    }
    v.pass = v.pass && instances == 1000 && failed == 0 && mismatches == 0;
    v.detail = std::to_string(instances) + " instances, " + std::to_string(failed) +
               " conclusion/audit failures; oracle mismatches " + std::to_string(mismatches) + " of 100";
    rec["oracle_mismatches"] = mismatches;
    v.record = rec;
    return v;
}

template <int N> double envelope_properties(std::uint64_t seed, double h)
{
    // majorant, supergradient inequality, idempotence and monotonicity; returns the worst violation
    auto lat = square<N>(1.2, h);
    Rng rng(seed);
    auto u = random_grid<N>(lat, rng, OutsidePolicy::zero);
    auto env = concave_envelope<N>(u, 1.0);
    double worst = 0;
    for (std::size_t f = 0; f < lat.size(); ++f) {
        if (!env.in_ball[f])
            continue;
        worst = std::max(worst, std::max(0.0, u.at(f)) - env.gamma[f]);
        for (std::size_t g = 0; g < lat.size(); g += 3)
            if (env.in_ball[g])
                worst = std::max(worst, env.gamma[g] - env.gamma[f] -
                                            dot<N>(env.xi[f], sub<N>(lat.node(g), lat.node(f))));
    }
    auto again = concave_envelope<N>(env.gamma_function(), 1.0);
    auto bigger = u;
    for (auto &x : bigger.values())
        x += 0.1;
    auto up = concave_envelope<N>(bigger, 1.0);
    for (std::size_t f = 0; f < lat.size(); ++f) {
        worst = std::max(worst, std::abs(again.gamma[f] - env.gamma[f]));
        worst = std::max(worst, env.gamma[f] - up.gamma[f]);
    }
    return worst;
}

Verdict envelope_checks()
{
    Verdict v;
    double agree = 0;
    for (int t = 0; t < 10; ++t) {
        auto lat1 = square<1>(1.2, 0.05);
        Rng r1(700 + t), r2(800 + t);
        auto u1 = random_grid<1>(lat1, r1, OutsidePolicy::zero);
        auto a1 = concave_envelope<1>(u1, 1.0, EnvelopeMethod::hull);
        auto b1 = concave_envelope<1>(u1, 1.0, EnvelopeMethod::lp);
        for (std::size_t f = 0; f < lat1.size(); ++f)
            agree = std::max(agree, std::abs(a1.gamma[f] - b1.gamma[f]));
        auto lat2 = square<2>(1.2, 0.2);
        auto u2 = random_grid<2>(lat2, r2, OutsidePolicy::zero);
        auto a2 = concave_envelope<2>(u2, 1.0, EnvelopeMethod::hull);
        auto b2 = concave_envelope<2>(u2, 1.0, EnvelopeMethod::lp);
        for (std::size_t f = 0; f < lat2.size(); ++f)
            agree = std::max(agree, std::abs(a2.gamma[f] - b2.gamma[f]));
    }

    // spike at the origin: the envelope on B_1 is the tent 1 - |x|
    double tent = 0;
    auto lat = square<1>(1.5, 0.1);
    auto spike = GridFunction<1>::sample(lat, [](const Vec<1> &x) { return std::abs(x[0]) < 1e-9 ? 1.0 : 0.0; },
                                         OutsidePolicy::zero);
    for (auto m : {EnvelopeMethod::hull, EnvelopeMethod::lp}) {
        auto env = concave_envelope<1>(spike, 1.0, m);
        for (std::size_t f = 0; f < lat.size(); ++f) {
            double r = std::abs(lat.node(f)[0]);
            tent = std::max(tent, std::abs(env.gamma[f] - (r <= 1 + 1e-9 ? 1 - r : 0.0)));
        }
    }
    // in the plane the tent is exact along the axes, where the lattice reaches the unit circle
    auto lat2 = square<2>(1.5, 0.1);
    auto spike2 = GridFunction<2>::sample(lat2, [](const Vec<2> &x) { return norm<2>(x) < 1e-9 ? 1.0 : 0.0; },
                                          OutsidePolicy::zero);
    auto env2 = concave_envelope<2>(spike2, 1.0);
    double tent2 = 0;
    for (std::size_t f = 0; f < lat2.size(); ++f) {
        auto x = lat2.node(f);
        if (!env2.in_ball[f])
            continue;
        if (std::abs(x[1]) < 1e-9 || std::abs(x[0]) < 1e-9)
            tent2 = std::max(tent2, std::abs(env2.gamma[f] - (1 - norm<2>(x))));
        else
            tent2 = std::max(tent2, env2.gamma[f] - (1 - norm<2>(x)));
    }

    double props = 0;
    for (int t = 0; t < 3; ++t) {
        props = std::max(props, envelope_properties<1>(900 + t, 0.02));
        props = std::max(props, envelope_properties<2>(950 + t, 0.1));
    }
    v.pass = agree <= 1e-8 && tent <= 1e-8 && tent2 <= 1e-8 && props <= 1e-8;
    v.detail = "hull vs LP " + fmt("%.1e", agree) + " on 20 instances, tent 1D " + fmt("%.1e", tent) + " 2D " +
               fmt("%.1e", tent2) + ", property violations " + fmt("%.1e", props);
    v.record = Json{{"agree", agree}, {"tent", tent}, {"tent2", tent2}, {"props", props}};
    return v;
}

Verdict counterexample_checks()
{
    Verdict v;
    Outcome out;
    Json rec = experiment_record("schema = 1\nkind = \"harnack\"\n[experiment]\nsource = \"counterexample\"\n"
                                 "a_values = [10.0, 100.0, 1000.0]\nalpha = 0.5\neps = 0.05\nradius = 7.0\n"
                                 "ratio = 4\n",
                                 out);
    double res = 0, roots = 0;
    std::string q;
    for (const auto &r : out.report["runs"]) {
        res = std::max({res, r["dpp_residual"].get<double>(), r["recurrence_residual"].get<double>()});
        roots = std::max({roots, r["root_product_error"].get<double>(), r["root_sum_error"].get<double>()});
        q += (q.empty() ? "" : ", ") + fmt("a=%g", r["a"].get<double>()) + " quotient " +
             fmt("%.3g", r["quotient"].get<double>()) +
             (r["harnack"]["pass"].get<bool>() ? " corrected ok" : " corrected FAILED");
    }
    v.pass = out.pass && res <= 1e-12 && roots <= 1e-12;
    v.detail = "residual " + fmt("%.1e", res) + ", roots " + fmt("%.1e", roots) + "; " + q;
    v.record = rec;
    return v;
}

Verdict pipeline_checks()
{
    Verdict v;
    Json rec;
    const char *needed[] = {"measure_estimate", "superlevel", "decay", "de_giorgi", "holder", "harnack"};
    int passed = 0;
    std::string failures;
    double spread = 0;
    for (const auto &p : regularity_presets()) {
        Outcome out;
        try {
            rec[p.preset] = experiment_record("schema = 1\nkind = \"holder\"\n[problem]\npreset = \"" + p.preset +
                                                  "\"\n[experiment]\nsecond_ratio = 10\n",
                                              out);
        } catch (const Error &e) {
            failures += " " + p.preset + "(" + e.what() + ")";
            rec[p.preset] = e.what();
            continue;
        }
        bool ok = true;
        std::string missing;
        for (const char *k : needed)
            if (!out.report["checks"][k].get<bool>()) {
                ok = false;
                missing += std::string(missing.empty() ? "" : ",") + k;
            }
        spread = std::max(spread, out.report["holder"]["gamma_spread"].get<double>());
        passed += ok ? 1 : 0;
        if (!ok)
            failures += " " + p.preset + "(" + missing + ")";
    }
    v.pass = passed == 10;
    v.detail = std::to_string(passed) + "/10 instances pass, worst gamma spread " + fmt("%.3f", spread) +
               (failures.empty() ? "" : "; failing:" + failures);
    v.record = rec;
    return v;
}

struct Criterion {
    int id;
    const char *name;
    double budget; // seconds
    std::function<Verdict()> run;
};

} // namespace

int main()
{
    std::vector<Criterion> all{
        {1, "operator identities", 10, operator_identities},
        {2, "quadrature moments", 10, quadrature_moments},
        {3, "solver", 120, solver_checks},
        {4, "abc inequality", 30, abc_audit},
        {5, "barriers", 120, barrier_checks},
        {6, "stopped decomposition", 60, cz_checks},
        {7, "concave envelope", 120, envelope_checks},
        {8, "counterexample", 60, counterexample_checks},
        {9, "regularity pipeline", 900, pipeline_checks},
    };
    bool ok = true;
    std::vector<Json> first;
    auto timed = [](const Criterion &c, double &secs) {
        auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception &e) {
            v.pass = false;
            v.detail = std::string("error: ") + e.what();
            v.record = v.detail;
        }
        secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return v;
    };
    for (const auto &c : all) {
        double secs = 0;
        auto v = timed(c, secs);
        const bool pass = v.pass && secs <= c.budget;
        ok = ok && pass;
        std::printf("criterion %d: %s  %s: %s [%.1fs of %.0fs]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                    v.detail.c_str(), secs, c.budget);
        std::fflush(stdout);
        first.push_back(v.record);
    }

    // every run again with the same seeds; the records must match byte for byte
    int differ = 0;
    std::string which;
    for (std::size_t i = 0; i < all.size(); ++i) {
        double secs = 0;
        auto v = timed(all[i], secs);
        if (dump_json(v.record) != dump_json(first[i])) {
            ++differ;
            which += " " + std::to_string(all[i].id);
        }
    }
    const bool repro = differ == 0;
    ok = ok && repro;
    std::printf("criterion 10: %s  reproducibility: %zu runs repeated, %d differ%s\n", repro ? "PASS" : "FAIL",
                all.size(), differ, which.empty() ? "" : (" (criteria" + which + ")").c_str());
    return ok ? 0 : 1;
}
