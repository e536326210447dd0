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

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "common.hpp"
#include "czdecomp.hpp"
#include "solver.hpp"

namespace dpplab {

enum class ExperimentKind {
    solve,
    barrier_check,
    abp_check,
    cz_demo,
    levelsets,
    de_giorgi,
    holder,
    harnack,
    counterexample,
    convergence
};

struct ExperimentInfo {
    ExperimentKind kind;
    std::string name;
    bool randomized;
    std::string statement; // the statement the run checks
    std::string summary;
};

inline const std::vector<ExperimentInfo> &experiment_catalog()
{
    static const std::vector<ExperimentInfo> cat = {
        {ExperimentKind::solve, "solve", false,
         "Given f and g, the DPP u(x) = alpha int u(x + eps z) dnu_x(z) + beta avg_{B_eps(x)} u + eps^2 f(x) "
         "has a unique bounded solution with u = g outside Omega.",
         "Fixed-point solve with a residual certificate; reports the maximum principle when f = 0."},
        {ExperimentKind::barrier_check, "barrier-check", true,
         "There are sigma, eps0 and a radial Psi with Psi = 2 on |x| = (3/2) sqrt N, Psi = 0 on |x| = 2 sqrt N, "
         "and L-_eps Psi >= -psi for eps < eps0, where psi <= 0 outside B_{1/4}. The annular barrier satisfies "
         "L-_eps v >= 0 in B_4(z) minus B_r(z) once r >= kappa eps.",
         "Closed-form evaluation of L- on both barriers at random samples, at eps0 and eps0/2."},
        {ExperimentKind::abp_check, "abp-check", false,
         "If L+_eps u >= -f in B_{2 sqrt N} and u <= 0 outside, then sup u <= C (sum over eps-cubes meeting the "
         "contact set of (sup_Q f+)^N |Q|)^{1/N}.",
         "Solves a sup-pair Poisson problem, builds the concave envelope and its cube cover, reports sup u / rhs."},
        {ExperimentKind::cz_demo, "cz-demo", true,
         "Let A subset B subset Q_1 with |A| <= delta1. Suppose pre(Q) subset B whenever a dyadic cube Q of "
         "generation at most L has |A cap Q| > delta1 |Q|, and Q subset B whenever Q has generation L and "
         "|A cap Q| > delta2 |Q|. Then |A| <= delta1 |B| + delta2.",
         "Exact-rational stopped decomposition on generated instances with a structural audit."},
        {ExperimentKind::levelsets, "levelsets", false,
         "For u >= 0 with L-_eps u <= rho and inf_{Q_3} u <= 1: |{u > M} cap Q_1| <= mu, "
         "|{u > K^k} cap Q_1| <= c/((1 - mu) K) + mu^k for K >= M, and "
         "|{u > t} cap Q_1| <= d exp(-sqrt(log t / a)) for t >= 1.",
         "Measure estimate, large-eps spreading, superlevel ladder and level-set decay on a solved instance."},
        {ExperimentKind::de_giorgi, "de-giorgi", false,
         "Given theta in (0, 1): if u >= 0, L-_eps u <= eta rho in Q_{10 sqrt N} and |Q_1 cap {u > 1}| >= theta, "
         "then inf_{Q_3} u >= eta. In oscillation form, L+_eps u >= -rho and u <= M in B_{kR} with "
         "|B_R cap {u <= m}| >= theta |B_R| give sup_{B_R} u <= (1 - eta) M + eta m + C R^2 rho.",
         "Infimum and oscillation forms on a solved instance normalised to the theta-quantile."},
        {ExperimentKind::holder, "holder", false,
         "A solution with |L u| <= rho in B_R satisfies |u(x) - u(z)| <= C R^{-gamma} (sup |u| + R^2 rho) "
         "(|x - z|^gamma + eps^gamma) for x, z in B_{R/2}.",
         "Fits (C, gamma) on one half of B_{R/2}, audits them on the other half, repeats at a finer lattice."},
        {ExperimentKind::harnack, "harnack", false,
         "A nonnegative solution in B_7 with |L u| <= rho satisfies sup_{B_1} u <= C (inf_{B_1} u + rho + "
         "eps^{2 lambda} sup_{B_3} u); without the eps^{2 lambda} term the bound fails.",
         "Evaluates the corrected inequality with the formula constant on a solve or on the explicit "
         "counterexample."},
        {ExperimentKind::counterexample, "counterexample", false,
         "With nu_x = (delta_{e1} + delta_{-e1})/2 on the atoms k eps e1 and uniform elsewhere, u = a_k on the "
         "atoms and 1 elsewhere solves the DPP, and sup_{B_1} u / inf_{B_1} u >= a for any a.",
         "Exact DPP residual, root identities and the Harnack quotient against the corrected inequality."},
        {ExperimentKind::convergence, "convergence", false,
         "As eps -> 0 the DPP solutions converge uniformly to the solution of Tr(D^2 v A) = -f with the limit "
         "matrix A = (alpha/2) int z z^T dnu + beta/(2(N+2)) I.",
         "Sup-norm error against a closed-form PDE solution on an eps ladder."},
    };
    return cat;
}

inline std::optional<ExperimentKind> find_kind(const std::string &name)
{
    for (const auto &e : experiment_catalog())
        if (e.name == name)
            return e.kind;
    return std::nullopt;
}

inline const ExperimentInfo &info(ExperimentKind k)
{
    for (const auto &e : experiment_catalog())
        if (e.kind == k)
            return e;
    throw Error(ErrorKind::precondition, "unregistered experiment kind");
}

namespace detail {

inline std::size_t edit_distance(const std::string &a, const std::string &b)
{
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

} // namespace detail

// Close names first; every kind sharing a prefix or substring is included.
inline std::vector<std::string> suggest_kinds(const std::string &bad)
{
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto &e : experiment_catalog()) {
        auto d = detail::edit_distance(bad, e.name);
        bool related = !bad.empty() && (e.name.find(bad) != std::string::npos || bad.find(e.name) != std::string::npos);
        if (d <= 3 || related)
            scored.emplace_back(d, e.name);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (auto &s : scored)
        out.push_back(s.second);
    return out;
}

// ---------------------------------------------------------------------------
// Problem descriptors

struct FunctionSpec {
    std::string kind = "zero"; // zero | constant | gaussian | cosine | affine | quadratic
    double value = 0.0;
    double amplitude = 1.0, width = 1.0, frequency = 1.0, coefficient = 0.0;
    std::vector<double> center, slope;
};

struct FamilySpec {
    std::string kind = "uniform-ball"; // uniform-ball | pair | ellipsoid | random-ellipsoid
    std::vector<double> direction;
    std::vector<std::vector<double>> axes; // ellipsoid: one diagonal per shell
    std::vector<double> shells;            // increasing radii separating the entries of axes
    double cell = 1.0;                     // random-ellipsoid
    double span = 8.0;
    std::optional<std::uint64_t> seed;
};

struct ProblemConfig {
    std::string preset;
    int dim = 1;
    std::string domain = "ball"; // ball | cube
    double radius = 7.0;         // ball radius or cube half side
    double eps = 0.04;
    int ratio = 5;
    double beta = 0.9, Lambda = 1.5;
    OperatorKind op = OperatorKind::linear;
    FamilySpec family;
    std::vector<std::vector<std::vector<double>>> control_sets; // sup-inf: the sets V
    FunctionSpec f, g;
};

struct ExperimentParams {
    // barrier-check
    std::size_t samples = 1000;
    std::optional<double> net_step;
    std::optional<double> ball_ratio;
    double annular_r = 0.5, annular_u_inf = 1.0;
    // abp-check
    double c_max = 10.0;
    // cz-demo
    int L = 4;
    std::string delta1 = "1/2", delta2 = "1/4";
    std::size_t instances = 100;
    bool bitmaps = true;
    // levelsets, de-giorgi
    int k_max = 5;
    double K = 2.0;
    int ladder_top = 10;
    double theta = 0.5, R_dg = 0.5;
    // holder
    double R = 2.0;
    int second_ratio = 0; // 0: twice the problem ratio
    double gamma_spread = 0.1;
    // harnack, counterexample
    std::string source = "solve";
    std::vector<double> a_values{10.0, 100.0, 1000.0};
    double alpha = 0.5, cx_eps = 0.05, cx_radius = 7.0;
    int cx_ratio = 4;
    int dim = 1; // cz-demo, counterexample
    // convergence
    std::string closed_form = "poisson-1d";
    std::vector<double> eps_ladder{0.2, 0.1, 0.05};
    int conv_ratio = 10;
    std::optional<double> max_final_error;
};

struct ExperimentConfig {
    int schema = 1;
    ExperimentKind kind = ExperimentKind::solve;
    std::optional<std::uint64_t> seed;
    bool has_problem = false;
    ProblemConfig problem;
    ExperimentParams params;
    double tol_solver = 1e-11;
    std::optional<double> slack; // residual slack; default 10 tol / eps^2
    std::string out_dir;
    std::string source_name;

    double residual_slack() const
    {
        return slack ? *slack : 10 * tol_solver / (problem.eps * problem.eps);
    }
};

// Ten N = 1 instances on B_7 at eps = 0.04 < eps0 for Lambda = 1.5, beta = 0.9.
inline std::vector<ProblemConfig> regularity_presets()
{
    auto fn = [](std::string kind, double value) {
        FunctionSpec s;
        s.kind = std::move(kind);
        s.value = value;
        s.center = {0.0};
        s.slope = {0.0};
        return s;
    };
    auto one = fn("constant", 1.0), flat = fn("constant", 1.0), zero = fn("zero", 0.0);
    auto bump = fn("gaussian", 0.0);
    auto wave = fn("cosine", 2.0);
    auto tilt = fn("affine", 3.0);
    tilt.slope = {1.0 / 7};
    auto base = [](const std::string &name, OperatorKind op, FunctionSpec f, FunctionSpec g) {
        ProblemConfig p;
        p.preset = name;
        p.op = op;
        p.f = std::move(f);
        p.g = std::move(g);
        return p;
    };
    std::vector<ProblemConfig> out;
    out.push_back(base("uniform-a", OperatorKind::linear, one, wave));
    out.push_back(base("uniform-b", OperatorKind::linear, bump, flat));
    auto ell = base("ellipsoid-shells", OperatorKind::linear, bump, wave);
    ell.family.kind = "ellipsoid";
    ell.family.axes = {{1.5}, {1.25}, {1.0}};
    ell.family.shells = {1.0, 3.0};
    out.push_back(ell);
    auto pa = base("pair-a", OperatorKind::linear, bump, wave);
    pa.family.kind = "pair";
    pa.family.direction = {1.5};
    out.push_back(pa);
    auto pb = base("pair-b", OperatorKind::linear, fn("constant", 0.5), tilt);
    pb.family.kind = "pair";
    pb.family.direction = {1.0};
    out.push_back(pb);
    out.push_back(base("tow-a", OperatorKind::tug_of_war, bump, wave));
    out.push_back(base("tow-b", OperatorKind::tug_of_war, zero, wave));
    out.push_back(base("sup-pair", OperatorKind::sup_pair, one, wave));
    auto si = base("sup-inf", OperatorKind::sup_inf, bump, wave);
    si.control_sets = {{{1.5}, {0.5}}, {{1.0}}};
    out.push_back(si);
    auto re = base("random-ellipsoid", OperatorKind::linear, bump, tilt);
    re.family.kind = "random-ellipsoid";
    re.family.seed = 11;
    out.push_back(re);
    return out;
}

inline std::optional<ProblemConfig> find_preset(const std::string &name)
{
    for (auto &p : regularity_presets())
        if (p.preset == name)
            return p;
    return std::nullopt;
}

inline OperatorKind parse_operator(const std::string &s)
{
    if (s == "linear")
        return OperatorKind::linear;
    if (s == "sup-pair")
        return OperatorKind::sup_pair;
    if (s == "tug-of-war")
        return OperatorKind::tug_of_war;
    if (s == "sup-inf")
        return OperatorKind::sup_inf;
    throw Error(ErrorKind::config, "unknown operator '" + s + "'");
}

inline std::string operator_name(OperatorKind k)
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

// ---------------------------------------------------------------------------
// TOML reading with field diagnostics

namespace detail {

class Fields {
  public:
    Fields(const toml::table &t, std::string path, std::string source)
        : t_(t), path_(std::move(path)), src_(std::move(source))
    {
    }

    [[noreturn]] void fail(const std::string &key, const std::string &msg) const
    {
        std::ostringstream os;
        os << src_;
        const toml::node *n = t_.get(key);
        if (n && n->source().begin.line)
            os << ":" << n->source().begin.line;
        else if (t_.source().begin.line)
            os << ":" << t_.source().begin.line;
        os << ": " << where(key) << ": " << msg;
        throw Error(ErrorKind::config, os.str());
    }

    bool has(const std::string &key) const { return t_.contains(key); }

    double number(const std::string &key, double def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        if (auto v = n->value_exact<double>())
            return *v;
        if (auto v = n->value_exact<std::int64_t>())
            return static_cast<double>(*v);
        fail(key, "expected a number");
    }

    std::optional<double> maybe_number(const std::string &key)
    {
        if (!has(key))
            return std::nullopt;
        return number(key, 0.0);
    }

    std::int64_t integer(const std::string &key, std::int64_t def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        if (auto v = n->value_exact<std::int64_t>())
            return *v;
        fail(key, "expected an integer");
    }

    bool boolean(const std::string &key, bool def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        if (auto v = n->value_exact<bool>())
            return *v;
        fail(key, "expected true or false");
    }

    std::string string(const std::string &key, const std::string &def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        if (auto v = n->value_exact<std::string>())
            return *v;
        fail(key, "expected a string");
    }

    // Accepts "1/3" strings as well as plain numbers.
    std::string rational(const std::string &key, const std::string &def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        if (auto v = n->value_exact<std::string>())
            return *v;
        if (auto v = n->value_exact<std::int64_t>())
            return std::to_string(*v);
        if (n->is_floating_point())
            fail(key, "give a fraction as a string such as \"1/4\" so it is read exactly");
        fail(key, "expected a fraction");
    }

    std::vector<double> numbers(const std::string &key, std::vector<double> def)
    {
        const toml::node *n = take(key);
        if (!n)
            return def;
        const toml::array *a = n->as_array();
        if (!a)
            fail(key, "expected an array of numbers");
        return to_numbers(*a, key);
    }

    std::vector<std::vector<double>> vectors(const std::string &key)
    {
        const toml::node *n = take(key);
        if (!n)
            return {};
        const toml::array *a = n->as_array();
        if (!a)
            fail(key, "expected an array of arrays");
        std::vector<std::vector<double>> out;
        for (const auto &e : *a) {
            const toml::array *row = e.as_array();
            if (!row)
                fail(key, "expected an array of arrays");
            out.push_back(to_numbers(*row, key));
        }
        return out;
    }

    std::vector<std::vector<std::vector<double>>> vector_sets(const std::string &key)
    {
        const toml::node *n = take(key);
        if (!n)
            return {};
        const toml::array *a = n->as_array();
        if (!a)
            fail(key, "expected an array of sets of vectors");
        std::vector<std::vector<std::vector<double>>> out;
        for (const auto &set : *a) {
            const toml::array *s = set.as_array();
            if (!s)
                fail(key, "expected an array of sets of vectors");
            std::vector<std::vector<double>> vs;
            for (const auto &e : *s) {
                const toml::array *row = e.as_array();
                if (!row)
                    fail(key, "each vector must be an array of numbers");
                vs.push_back(to_numbers(*row, key));
            }
            out.push_back(std::move(vs));
        }
        return out;
    }

    const toml::table *table(const std::string &key)
    {
        const toml::node *n = take(key);
        if (!n)
            return nullptr;
        if (!n->is_table())
            fail(key, "expected a table");
        return n->as_table();
    }

    std::string path() const { return path_; }
    const std::string &source() const { return src_; }

    // Unknown keys are typos more often than not.
    void finish() const
    {
        for (const auto &[k, v] : t_) {
            std::string key(k.str());
            if (!seen_.count(key))
                fail(key, "unknown key");
        }
    }

  private:
    std::string where(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    const toml::node *take(const std::string &key)
    {
        seen_.insert(key);
        return t_.get(key);
    }

    std::vector<double> to_numbers(const toml::array &a, const std::string &key) const
    {
        std::vector<double> out;
        for (const auto &e : a) {
            if (auto v = e.value_exact<double>())
                out.push_back(*v);
            else if (auto i = e.value_exact<std::int64_t>())
                out.push_back(static_cast<double>(*i));
            else
                fail(key, "expected numbers");
        }
        return out;
    }

    const toml::table &t_;
    std::string path_, src_;
    std::set<std::string> seen_;
};

inline void check(bool ok, Fields &f, const std::string &key, const std::string &msg)
{
    if (!ok)
        f.fail(key, msg);
}

inline FunctionSpec read_function(const toml::table &t, const std::string &path, const std::string &src, int dim)
{
    Fields r(t, path, src);
    FunctionSpec s;
    s.kind = r.string("kind", "zero");
    static const std::set<std::string> kinds = {"zero", "constant", "gaussian", "cosine", "affine", "quadratic"};
    check(kinds.count(s.kind) > 0, r, "kind", "unknown function kind '" + s.kind + "'");
    s.value = r.number("value", 0.0);
    s.amplitude = r.number("amplitude", 1.0);
    s.width = r.number("width", 1.0);
    check(s.width > 0, r, "width", "must be positive");
    s.frequency = r.number("frequency", 1.0);
    s.coefficient = r.number("coefficient", 0.0);
    s.center = r.numbers("center", std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    check(static_cast<int>(s.center.size()) == dim, r, "center", "needs one entry per dimension");
    s.slope = r.numbers("slope", std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    check(static_cast<int>(s.slope.size()) == dim, r, "slope", "needs one entry per dimension");
    r.finish();
    return s;
}

inline FamilySpec read_family(const toml::table &t, const std::string &path, const std::string &src, int dim,
                              double Lambda)
{
    Fields r(t, path, src);
    FamilySpec s;
    s.kind = r.string("kind", "uniform-ball");
    static const std::set<std::string> kinds = {"uniform-ball", "pair", "ellipsoid", "random-ellipsoid"};
    check(kinds.count(s.kind) > 0, r, "kind", "unknown family kind '" + s.kind + "'");
    if (s.kind == "pair") {
        s.direction = r.numbers("direction", {});
        check(static_cast<int>(s.direction.size()) == dim, r, "direction", "needs one entry per dimension");
        double n2 = 0;
        for (double v : s.direction)
            n2 += v * v;
        check(n2 > 0 && std::sqrt(n2) <= Lambda * (1 + 1e-12), r, "direction", "must be nonzero and lie in B_Lambda");
    }
    if (s.kind == "ellipsoid") {
        s.axes = r.vectors("axes");
        check(!s.axes.empty(), r, "axes", "at least one ellipsoid is required");
        for (const auto &a : s.axes) {
            check(static_cast<int>(a.size()) == dim, r, "axes", "each entry needs one semi-axis per dimension");
            for (double v : a)
                check(v >= 1 && v <= Lambda, r, "axes", "semi-axes must lie in [1, Lambda]");
        }
        s.shells = r.numbers("shells", {});
        check(s.shells.size() + 1 == s.axes.size(), r, "shells", "needs one radius fewer than axes");
        check(std::is_sorted(s.shells.begin(), s.shells.end()), r, "shells", "radii must increase");
    }
    if (s.kind == "random-ellipsoid") {
        s.cell = r.number("cell", 1.0);
        check(s.cell > 0, r, "cell", "must be positive");
        s.span = r.number("span", 8.0);
        check(s.span > 0, r, "span", "must be positive");
        check(r.has("seed"), r, "seed", "a randomized family needs a seed");
        auto sd = r.integer("seed", 0);
        check(sd >= 0, r, "seed", "must be nonnegative");
        s.seed = static_cast<std::uint64_t>(sd);
    }
    r.finish();
    return s;
}

inline void read_problem(const toml::table &t, const std::string &src, ProblemConfig &p)
{
    Fields r(t, "problem", src);
    if (r.has("preset")) {
        auto name = r.string("preset", "");
        auto pre = find_preset(name);
        if (!pre) {
            std::string names;
            for (const auto &q : regularity_presets())
                names += (names.empty() ? "" : ", ") + q.preset;
            r.fail("preset", "unknown preset '" + name + "' (known: " + names + ")");
        }
        p = *pre;
    }
    p.dim = static_cast<int>(r.integer("dim", p.dim));
    check(p.dim == 1 || p.dim == 2, r, "dim", "must be 1 or 2");
    p.domain = r.string("domain", p.domain);
    check(p.domain == "ball" || p.domain == "cube", r, "domain", "must be \"ball\" or \"cube\"");
    p.radius = r.number("radius", p.radius);
    check(p.radius > 0, r, "radius", "must be positive");
    p.eps = r.number("eps", p.eps);
    check(p.eps > 0 && p.eps < 1, r, "eps", "must lie in (0, 1)");
    p.ratio = static_cast<int>(r.integer("ratio", p.ratio));
    check(p.ratio >= 2 && p.ratio <= 64, r, "ratio", "eps/h must be an integer in [2, 64]");
    p.beta = r.number("beta", p.beta);
    if (r.has("alpha")) {
        double a = r.number("alpha", 0.0);
        check(a >= 0 && a < 1, r, "alpha", "must lie in [0, 1)");
        if (r.has("beta"))
            check(std::abs(a + p.beta - 1) <= 1e-12, r, "alpha", "alpha + beta must equal 1");
        p.beta = 1 - a;
    }
    check(p.beta > 0 && p.beta <= 1, r, "beta", "must lie in (0, 1]");
    p.Lambda = r.number("Lambda", p.Lambda);
    check(p.Lambda >= 1, r, "Lambda", "must be at least 1");
    if (r.has("operator")) {
        auto op = r.string("operator", "linear");
        try {
            p.op = parse_operator(op);
        } catch (const Error &) {
            r.fail("operator", "must be one of linear, sup-pair, tug-of-war, sup-inf");
        }
    }
    if (auto *ft = r.table("family"))
        p.family = read_family(*ft, "problem.family", src, p.dim, p.Lambda);
    if (r.has("control_sets")) {
        p.control_sets = r.vector_sets("control_sets");
        for (const auto &V : p.control_sets) {
            check(!V.empty(), r, "control_sets", "empty control set");
            for (const auto &z : V) {
                check(static_cast<int>(z.size()) == p.dim, r, "control_sets", "vectors need one entry per dimension");
                double n2 = 0;
                for (double v : z)
                    n2 += v * v;
                check(std::sqrt(n2) <= p.Lambda * (1 + 1e-12), r, "control_sets", "vectors must lie in B_Lambda");
            }
        }
    }
    if (p.op == OperatorKind::sup_inf && p.control_sets.empty())
        r.fail("control_sets", "the sup-inf operator needs control_sets");
    if (auto *ft = r.table("f"))
        p.f = read_function(*ft, "problem.f", src, p.dim);
    if (auto *gt = r.table("g"))
        p.g = read_function(*gt, "problem.g", src, p.dim);
    if (p.f.center.size() != static_cast<std::size_t>(p.dim))
        p.f.center.assign(static_cast<std::size_t>(p.dim), 0.0);
    if (p.g.center.size() != static_cast<std::size_t>(p.dim))
        p.g.center.assign(static_cast<std::size_t>(p.dim), 0.0);
    if (p.f.slope.size() != static_cast<std::size_t>(p.dim))
        p.f.slope.assign(static_cast<std::size_t>(p.dim), 0.0);
    if (p.g.slope.size() != static_cast<std::size_t>(p.dim))
        p.g.slope.assign(static_cast<std::size_t>(p.dim), 0.0);
    if (!p.family.direction.empty())
        check(static_cast<int>(p.family.direction.size()) == p.dim, r, "family", "direction does not match dim");
    r.finish();
}

inline void read_experiment(const toml::table &t, const std::string &src, ExperimentKind kind, ExperimentParams &e)
{
    Fields r(t, "experiment", src);
    switch (kind) {
    case ExperimentKind::barrier_check: {
        auto s = r.integer("samples", 1000);
        check(s >= 1 && s <= 1000000, r, "samples", "must lie in [1, 10^6]");
        e.samples = static_cast<std::size_t>(s);
        e.net_step = r.maybe_number("net_step");
        if (e.net_step)
            check(*e.net_step > 0, r, "net_step", "must be positive");
        e.ball_ratio = r.maybe_number("ball_ratio");
        if (e.ball_ratio)
            check(*e.ball_ratio >= 2, r, "ball_ratio", "must be at least 2");
        e.annular_r = r.number("annular_r", e.annular_r);
        check(e.annular_r > 0 && e.annular_r < 4, r, "annular_r", "must lie in (0, 4)");
        e.annular_u_inf = r.number("annular_u_inf", e.annular_u_inf);
        check(e.annular_u_inf >= 0, r, "annular_u_inf", "must be nonnegative");
        break;
    }
    case ExperimentKind::abp_check:
        e.c_max = r.number("c_max", e.c_max);
        check(e.c_max > 0, r, "c_max", "must be positive");
        break;
    case ExperimentKind::cz_demo: {
        e.L = static_cast<int>(r.integer("L", e.L));
        check(e.L >= 0 && e.L <= 6, r, "L", "must lie in [0, 6]");
        e.delta1 = r.rational("delta1", e.delta1);
        e.delta2 = r.rational("delta2", e.delta2);
        for (const char *key : {"delta1", "delta2"}) {
            const std::string &v = std::string(key) == "delta1" ? e.delta1 : e.delta2;
            Rational q;
            try {
                q = parse_rational(v);
            } catch (const std::exception &) {
                r.fail(key, "not a fraction: '" + v + "'");
            }
            check(q > 0 && q < 1, r, key, "must lie in (0, 1)");
        }
        auto n = r.integer("instances", 100);
        check(n >= 1 && n <= 100000, r, "instances", "must lie in [1, 10^5]");
        e.instances = static_cast<std::size_t>(n);
        e.bitmaps = r.boolean("bitmaps", e.bitmaps);
        e.dim = static_cast<int>(r.integer("dim", e.dim));
        check(e.dim == 1 || e.dim == 2, r, "dim", "must be 1 or 2");
        break;
    }
    case ExperimentKind::levelsets:
        e.k_max = static_cast<int>(r.integer("k_max", e.k_max));
        check(e.k_max >= 1 && e.k_max <= 20, r, "k_max", "must lie in [1, 20]");
        e.K = r.number("K", e.K);
        check(e.K > 1, r, "K", "must exceed 1");
        e.ladder_top = static_cast<int>(r.integer("ladder_top", e.ladder_top));
        check(e.ladder_top >= 1 && e.ladder_top <= 60, r, "ladder_top", "must lie in [1, 60]");
        break;
    case ExperimentKind::de_giorgi:
        e.theta = r.number("theta", e.theta);
        check(e.theta > 0 && e.theta <= 1, r, "theta", "must lie in (0, 1]");
        e.R_dg = r.number("R", e.R_dg);
        check(e.R_dg > 0, r, "R", "must be positive");
        break;
    case ExperimentKind::holder:
        e.R = r.number("R", e.R);
        check(e.R > 0, r, "R", "must be positive");
        e.second_ratio = static_cast<int>(r.integer("second_ratio", 0));
        check(e.second_ratio == 0 || (e.second_ratio >= 2 && e.second_ratio <= 64), r, "second_ratio",
              "must be 0 or lie in [2, 64]");
        e.gamma_spread = r.number("gamma_spread", e.gamma_spread);
        check(e.gamma_spread >= 0, r, "gamma_spread", "must be nonnegative");
        break;
    case ExperimentKind::harnack:
    case ExperimentKind::counterexample: {
        if (kind == ExperimentKind::harnack) {
            e.source = r.string("source", e.source);
            check(e.source == "solve" || e.source == "counterexample", r, "source",
                  "must be \"solve\" or \"counterexample\"");
        }
        if (r.has("a"))
            e.a_values = {r.number("a", 10.0)};
        else
            e.a_values = r.numbers("a_values", e.a_values);
        check(!e.a_values.empty(), r, "a_values", "at least one value is required");
        for (double a : e.a_values)
            check(a >= 1, r, r.has("a") ? "a" : "a_values", "a must be at least 1");
        e.alpha = r.number("alpha", e.alpha);
        check(e.alpha > 0 && e.alpha < 1, r, "alpha", "must lie in (0, 1)");
        e.cx_eps = r.number("eps", e.cx_eps);
        check(e.cx_eps > 0 && e.cx_eps < 1, r, "eps", "must lie in (0, 1)");
        e.cx_radius = r.number("radius", e.cx_radius);
        check(e.cx_radius > 0, r, "radius", "must be positive");
        e.cx_ratio = static_cast<int>(r.integer("ratio", e.cx_ratio));
        check(e.cx_ratio >= 2 && e.cx_ratio <= 64, r, "ratio", "must lie in [2, 64]");
        e.dim = static_cast<int>(r.integer("dim", e.dim));
        check(e.dim == 1 || e.dim == 2, r, "dim", "must be 1 or 2");
        break;
    }
    case ExperimentKind::convergence: {
        e.closed_form = r.string("case", e.closed_form);
        auto names = [] {
            std::vector<std::string> v{"poisson-1d", "harmonic-2d", "anisotropic-pair"};
            return v;
        }();
        check(std::find(names.begin(), names.end(), e.closed_form) != names.end(), r, "case",
              "unknown case '" + e.closed_form + "'");
        e.eps_ladder = r.numbers("eps", e.eps_ladder);
        check(!e.eps_ladder.empty(), r, "eps", "at least one eps is required");
        for (double v : e.eps_ladder)
            check(v > 0 && v < 1, r, "eps", "entries must lie in (0, 1)");
        e.conv_ratio = static_cast<int>(r.integer("ratio", e.conv_ratio));
        check(e.conv_ratio >= 2 && e.conv_ratio <= 64, r, "ratio", "must lie in [2, 64]");
        e.max_final_error = r.maybe_number("max_final_error");
        break;
    }
    case ExperimentKind::solve:
        break;
    }
    r.finish();
}

} // namespace detail

inline bool needs_problem(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::cz_demo:
    case ExperimentKind::counterexample:
    case ExperimentKind::convergence:
        return false;
    default:
        return true;
    }
}

// Parses a TOML document; every error is ErrorKind::config with a line number.
inline ExperimentConfig parse_config(const std::string &text, const std::string &source = "config")
{
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error &e) {
        std::ostringstream os;
        os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw Error(ErrorKind::config, os.str());
    }
    ExperimentConfig c;
    c.source_name = source;
    detail::Fields r(root, "", source);
    if (!r.has("schema"))
        r.fail("schema", "missing; this version reads schema = 1");
    c.schema = static_cast<int>(r.integer("schema", 1));
    detail::check(c.schema == 1, r, "schema", "unsupported schema version");
    if (!r.has("kind"))
        r.fail("kind", "missing experiment kind");
    auto kname = r.string("kind", "");
    auto kind = find_kind(kname);
    if (!kind) {
        std::string s;
        auto close = suggest_kinds(kname);
        for (const auto &n : close)
            s += (s.empty() ? "" : ", ") + n;
        if (close.empty())
            for (const auto &e : experiment_catalog())
                s += (s.empty() ? "" : ", ") + e.name;
        r.fail("kind", "unknown experiment kind '" + kname + "'; " +
                           (close.empty() ? "known kinds: " : "did you mean: ") + s);
    }
    c.kind = *kind;
    if (r.has("seed")) {
        auto sd = r.integer("seed", 0);
        detail::check(sd >= 0, r, "seed", "must be nonnegative");
        c.seed = static_cast<std::uint64_t>(sd);
    }
    if (info(c.kind).randomized && !c.seed)
        r.fail("seed", "experiment '" + kname + "' is randomized and needs a seed");
    const toml::table *pt = r.table("problem");
    if (pt) {
        c.has_problem = true;
        detail::read_problem(*pt, source, c.problem);
    }
    if (const toml::table *et = r.table("experiment"))
        detail::read_experiment(*et, source, c.kind, c.params);
    else
        detail::read_experiment(toml::table{}, source, c.kind, c.params);
    bool wants_problem = needs_problem(c.kind) &&
                         !(c.kind == ExperimentKind::harnack && c.params.source == "counterexample");
    if (!pt && wants_problem)
        r.fail("problem", "experiment '" + kname + "' needs a [problem] table");
    if (const toml::table *tt = r.table("tolerances")) {
        detail::Fields f(*tt, "tolerances", source);
        c.tol_solver = f.number("solver", c.tol_solver);
        detail::check(c.tol_solver > 0 && c.tol_solver < 1e-2, f, "solver", "must lie in (0, 1e-2)");
        c.slack = f.maybe_number("slack");
        if (c.slack)
            detail::check(*c.slack >= 0, f, "slack", "must be nonnegative");
        f.finish();
    }
    if (const toml::table *ot = r.table("output")) {
        detail::Fields f(*ot, "output", source);
        c.out_dir = f.string("dir", "");
        f.finish();
    }
    r.finish();
    return c;
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::config, "cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

} // namespace dpplab
