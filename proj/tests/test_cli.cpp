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

#include <dpplab/experiments.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dpplab;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string &text)
{
    try {
        parse_config(text, "t.toml");
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        return e.what();
    }
    ADD_FAILURE() << "accepted:\n" << text;
    return {};
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name)
{
    auto d = fs::temp_directory_path() / ("dpp-lab-test-" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string &args, const fs::path &log)
{
    std::string cmd = std::string(DPPLAB_CLI) + " " + args + " >" + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const fs::path &dir, const std::string &name, const std::string &text)
{
    auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

} // namespace

TEST(Config, MinimalSolve)
{
    auto c = parse_config("schema = 1\nkind = \"solve\"\n[problem]\neps = 0.1\nratio = 4\n");
    EXPECT_EQ(c.kind, ExperimentKind::solve);
    EXPECT_TRUE(c.has_problem);
    EXPECT_EQ(c.problem.eps, 0.1);
    EXPECT_EQ(c.problem.ratio, 4);
    EXPECT_NEAR(c.residual_slack(), 10 * 1e-11 / 0.01, 1e-20);
}

TEST(Config, AlphaBetaConsistency)
{
    auto c = parse_config("schema = 1\nkind = \"solve\"\n[problem]\nalpha = 0.25\n");
    EXPECT_DOUBLE_EQ(c.problem.beta, 0.75);
    auto m = config_error("schema = 1\nkind = \"solve\"\n[problem]\nalpha = 0.3\nbeta = 0.9\n");
    EXPECT_NE(m.find("alpha"), std::string::npos) << m;
}

TEST(Config, BetaZeroIsRejectedWithLine)
{
    auto m = config_error("schema = 1\nkind = \"solve\"\n[problem]\nbeta = 0.0\n");
    EXPECT_NE(m.find("t.toml:4"), std::string::npos) << m;
    EXPECT_NE(m.find("problem.beta"), std::string::npos) << m;
}

TEST(Config, FieldDiagnostics)
{
    auto m = config_error("schema = 1\nkind = \"solve\"\n[problem]\neps = \"small\"\n");
    EXPECT_NE(m.find("t.toml:4"), std::string::npos) << m;
    m = config_error("schema = 1\nkind = \"solve\"\n[problem]\nepsilon = 0.1\n");
    EXPECT_NE(m.find("epsilon"), std::string::npos) << m;
    m = config_error("schema = 1\nkind = \"solve\"\n[problem\n");
    EXPECT_NE(m.find("t.toml:3"), std::string::npos) << m;
    m = config_error("schema = 2\nkind = \"solve\"\n");
    EXPECT_NE(m.find("schema"), std::string::npos) << m;
    config_error("kind = \"solve\"\n[problem]\n");
    config_error("schema = 1\nkind = \"solve\"\n[problem]\nLambda = 0.5\n");
    config_error("schema = 1\nkind = \"solve\"\n[problem]\ndim = 4\n");
    config_error("schema = 1\nkind = \"solve\"\n[problem]\npreset = \"nope\"\n");
    config_error("schema = 1\nkind = \"solve\"\n");
}

TEST(Config, SeedRequiredForRandomizedKinds)
{
    auto m = config_error("schema = 1\nkind = \"barrier-check\"\n[problem]\n");
    EXPECT_NE(m.find("seed"), std::string::npos) << m;
    config_error("schema = 1\nkind = \"cz-demo\"\n");
    auto c = parse_config("schema = 1\nkind = \"cz-demo\"\nseed = 3\n");
    ASSERT_TRUE(c.seed);
    EXPECT_EQ(*c.seed, 3u);
}

TEST(Config, CzFractionsAreExact)
{
    auto c = parse_config("schema = 1\nkind = \"cz-demo\"\nseed = 1\n[experiment]\ndelta1 = \"2/7\"\n");
    EXPECT_EQ(parse_rational(c.params.delta1), Rational(2, 7));
    config_error("schema = 1\nkind = \"cz-demo\"\nseed = 1\n[experiment]\ndelta1 = \"3/2\"\n");
}

TEST(Config, PresetsResolveAndOverride)
{
    EXPECT_EQ(regularity_presets().size(), 10u);
    for (const auto &p : regularity_presets()) {
        auto c = parse_config("schema = 1\nkind = \"holder\"\n[problem]\npreset = \"" + p.preset + "\"\n");
        EXPECT_EQ(c.problem.dim, 1);
        EXPECT_EQ(c.problem.op, p.op) << p.preset;
    }
    auto c = parse_config("schema = 1\nkind = \"holder\"\n[problem]\npreset = \"uniform-a\"\neps = 0.08\n");
    EXPECT_EQ(c.problem.eps, 0.08);
}

TEST(Config, HarnackOnCounterexampleNeedsNoProblem)
{
    auto c = parse_config("schema = 1\nkind = \"harnack\"\n[experiment]\nsource = \"counterexample\"\na = 10\n");
    EXPECT_FALSE(c.has_problem);
    ASSERT_EQ(c.params.a_values.size(), 1u);
    config_error("schema = 1\nkind = \"harnack\"\n[experiment]\nsource = \"solve\"\n");
}

TEST(Catalog, TenKindsAndSuggestions)
{
    EXPECT_EQ(experiment_catalog().size(), 10u);
    for (const auto &e : experiment_catalog()) {
        EXPECT_EQ(find_kind(e.name), e.kind);
        EXPECT_FALSE(e.statement.empty());
    }
    EXPECT_FALSE(find_kind("bogus"));
    auto s = suggest_kinds("harnak");
    ASSERT_FALSE(s.empty());
    EXPECT_EQ(s.front(), "harnack");
    EXPECT_TRUE(suggest_kinds("bogus").empty());
    auto m = config_error("schema = 1\nkind = \"sovle\"\n");
    EXPECT_NE(m.find("did you mean: solve"), std::string::npos) << m;
}

TEST(Report, FullPrecisionAndNonFinite)
{
    Json j;
    j["x"] = 0.1;
    j["big"] = std::numeric_limits<double>::infinity();
    j["v"] = std::vector<double>{1.0 / 3, 2};
    auto s = dump_json(j);
    EXPECT_NE(s.find("0.10000000000000001"), std::string::npos) << s;
    EXPECT_NE(s.find("\"inf\""), std::string::npos) << s;
    EXPECT_NE(s.find("[0.33333333333333331, 2]"), std::string::npos) << s;
    auto back = Json::parse(s);
    EXPECT_EQ(back["x"].get<double>(), 0.1);
}

TEST(Report, CsvQuotingAndLineEnds)
{
    Series s({"name", "value"});
    s.add({std::string("plain"), 1.5});
    s.add({std::string("a,b"), std::int64_t{2}});
    s.add({std::string("say \"hi\""), 0.1});
    EXPECT_EQ(to_csv(s), "name,value\r\nplain,1.5\r\n\"a,b\",2\r\n\"say \"\"hi\"\"\",0.10000000000000001\r\n");
    EXPECT_THROW(s.add({1.0}), Error);
}

TEST(Run, ReportIsReproducible)
{
    auto c = parse_config("schema = 1\nkind = \"cz-demo\"\nseed = 9\n[experiment]\ndim = 2\nL = 3\ninstances = 20\n");
    auto a = run_experiment(c), b = run_experiment(c);
    EXPECT_TRUE(a.pass);
    EXPECT_EQ(dump_json(a.report), dump_json(b.report));
    EXPECT_EQ(to_csv(a.series), to_csv(b.series));
    ASSERT_EQ(a.files.size(), b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i)
        EXPECT_EQ(a.files[i].second, b.files[i].second);
}

TEST(Binary, ListAndDescribe)
{
    auto d = scratch("describe");
    EXPECT_EQ(run_cli("list", d / "list.txt"), 0);
    EXPECT_NE(slurp(d / "list.txt").find("convergence"), std::string::npos);
    EXPECT_EQ(run_cli("describe de-giorgi", d / "dg.txt"), 0);
    EXPECT_NE(slurp(d / "dg.txt").find("inf_{Q_3} u >= eta"), std::string::npos);
    EXPECT_EQ(run_cli("describe bogus", d / "bogus.txt"), 1);
    EXPECT_NE(slurp(d / "bogus.txt").find("known kinds"), std::string::npos);
    EXPECT_EQ(run_cli("frobnicate", d / "usage.txt"), 1);
}

TEST(Binary, ExitCodes)
{
    auto d = scratch("exit");
    auto beta0 = write_config(d, "beta0.toml", "schema = 1\nkind = \"solve\"\n[problem]\nbeta = 0\n");
    EXPECT_EQ(run_cli("run " + beta0.string() + " --out " + (d / "b0").string(), d / "b0.txt"), 1);
    EXPECT_NE(slurp(d / "b0.txt").find("beta0.toml:4"), std::string::npos) << slurp(d / "b0.txt");
    EXPECT_EQ(run_cli("run " + (d / "missing.toml").string(), d / "missing.txt"), 1);

    auto harnack = write_config(d, "harnack.toml",
                                "schema = 1\nkind = \"harnack\"\n[experiment]\nsource = \"counterexample\"\n"
                                "a = 10\neps = 0.05\n");
    EXPECT_EQ(run_cli("run " + harnack.string() + " --out " + (d / "h").string(), d / "h.txt"), 0)
        << slurp(d / "h.txt");
    auto rep = Json::parse(slurp(d / "h" / "report.json"));
    EXPECT_TRUE(rep["pass"].get<bool>());
    EXPECT_GE(rep["runs"][0]["quotient"].get<double>(), 10.0);
    EXPECT_TRUE(fs::exists(d / "h" / "series.csv"));
    EXPECT_TRUE(fs::exists(d / "h" / "report.meta.json"));

    // a statement that does not hold exits 2, not 1
    auto conv = write_config(d, "conv.toml",
                             "schema = 1\nkind = \"convergence\"\n[experiment]\neps = [0.2, 0.1]\nratio = 5\n"
                             "max_final_error = 1e-6\n");
    EXPECT_EQ(run_cli("run " + conv.string() + " --out " + (d / "c").string(), d / "c.txt"), 2);
    auto csv = slurp(d / "c" / "series.csv");
    EXPECT_EQ(csv.rfind("eps,h,sup_error,", 0), 0u) << csv;
}

TEST(Binary, SameConfigSameBytes)
{
    auto d = scratch("repro");
    auto cfg = write_config(d, "b.toml",
                            "schema = 1\nkind = \"barrier-check\"\nseed = 5\n[problem]\n[experiment]\nsamples = 50\n");
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + (d / "a").string() + " --jobs 1", d / "a.txt"), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + (d / "b").string() + " --jobs 3", d / "b.txt"), 0);
    EXPECT_EQ(slurp(d / "a" / "report.json"), slurp(d / "b" / "report.json"));
    EXPECT_EQ(slurp(d / "a" / "series.csv"), slurp(d / "b" / "series.csv"));
}
