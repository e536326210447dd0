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

// dpp-lab: runs one experiment per invocation and writes report.json and series.csv.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <dpplab/experiments.hpp>

namespace fs = std::filesystem;
using namespace dpplab;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_usage = 1;
constexpr int exit_statement = 2;

std::string utc_now()
{
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_outputs(const fs::path &dir, const Json &report, const Series *series, const Outcome *out,
                   const Json &meta)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    write_text((dir / "report.json").string(), dump_json(report));
    write_text((dir / "series.csv").string(), to_csv(series ? *series : Series({"quantity", "value"})));
    if (out)
        for (const auto &[name, bytes] : out->files)
            write_text((dir / name).string(), bytes);
    write_text((dir / "report.meta.json").string(), dump_json(meta));
}

int cmd_list()
{
    for (const auto &e : experiment_catalog())
        std::cout << e.name << (e.randomized ? "  (seeded)" : "") << "\n    " << e.summary << "\n";
    return exit_pass;
}

int cmd_describe(const std::string &kind)
{
    auto k = find_kind(kind);
    if (!k) {
        std::cerr << "dpp-lab: unknown experiment kind '" << kind << "'\n";
        auto close = suggest_kinds(kind);
        std::cerr << (close.empty() ? "known kinds:" : "did you mean:");
        if (close.empty())
            for (const auto &e : experiment_catalog())
                close.push_back(e.name);
        for (const auto &s : close)
            std::cerr << ' ' << s;
        std::cerr << "\n";
        return exit_usage;
    }
    const auto &e = info(*k);
    std::cout << e.name << "\n\nStatement checked:\n  " << e.statement << "\n\nMethod:\n  " << e.summary << "\n";
    if (e.randomized)
        std::cout << "\nRandomized: the config must set `seed`.\n";
    return exit_pass;
}

int cmd_run(const std::string &path, const std::string &out_flag, unsigned jobs)
{
    ExperimentConfig cfg;
    try {
        cfg = load_config(path);
    } catch (const Error &e) {
        std::cerr << "dpp-lab: " << e.what() << "\n";
        return exit_usage;
    }
    fs::path dir = !out_flag.empty()        ? fs::path(out_flag)
                   : !cfg.out_dir.empty() ? fs::path(cfg.out_dir)
                                          : fs::path("out") / info(cfg.kind).name;
    Json meta;
    meta["config"] = path;
    meta["started"] = utc_now();
    meta["jobs"] = jobs;
    auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    try {
        auto out = run_experiment(cfg, RunContext{jobs});
        meta["wall_seconds"] = wall();
        write_outputs(dir, out.report, &out.series, &out, meta);
        std::cout << info(cfg.kind).name << ": " << (out.pass ? "PASS" : "FAIL") << " (" << dir.string() << ")\n";
        return out.pass ? exit_pass : exit_statement;
    } catch (const Error &e) {
        if (e.kind() == ErrorKind::config || e.kind() == ErrorKind::io) {
            std::cerr << "dpp-lab: " << e.what() << "\n";
            return exit_usage;
        }
        // a violated hypothesis is a failed check, not a usage error
        meta["wall_seconds"] = wall();
        try {
            write_outputs(dir, error_report(cfg, e), nullptr, nullptr, meta);
        } catch (const Error &io) {
            std::cerr << "dpp-lab: " << io.what() << "\n";
            return exit_usage;
        }
        std::cerr << "dpp-lab: " << e.what() << "\n";
        std::cout << info(cfg.kind).name << ": FAIL (" << dir.string() << ")\n";
        return exit_statement;
    }
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Discrete DPP regularity laboratory"};
    app.require_subcommand(1);
    auto *run = app.add_subcommand("run", "run the experiment described by a config file");
    std::string config, out_dir;
    unsigned jobs = 1;
    run->add_option("config", config, "experiment config (TOML)")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1u, 256u));
    auto *list = app.add_subcommand("list", "list experiment kinds");
    auto *describe = app.add_subcommand("describe", "show the statement an experiment checks");
    std::string kind;
    describe->add_option("kind", kind, "experiment kind")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? exit_pass : exit_usage;
    }
    if (*list)
        return cmd_list();
    if (*describe)
        return cmd_describe(kind);
    return cmd_run(config, out_dir, jobs);
}
