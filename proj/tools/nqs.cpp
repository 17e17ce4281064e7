// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

// nqs: train, fci, energy, sample and bench subcommands.

#include <nqs/commands.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::string fcidump;
    std::string output;
    std::string checkpoint;
    std::string metrics;
    std::string k;
    long long iterations = -1;
    long long seed = -1;
    long long n_count = -1;
    long long threads = -1;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("-c,--config", o.config, "INI configuration file");
    cmd->add_option("-s,--set", o.sets, "Override, section.key=value (repeatable)");
    cmd->add_option("--fcidump", o.fcidump, "Integral file (system.fcidump)");
    cmd->add_option("-o,--output", o.output, "Result file (output.result)");
    cmd->add_option("--threads", o.threads, "Thread count (run.threads)");
}

void add_sampling(CLI::App* cmd, Options& o) {
    cmd->add_option("--checkpoint", o.checkpoint, "Input checkpoint (input.checkpoint)");
    cmd->add_option("--seed", o.seed, "Sampling seed (train.seed)");
    cmd->add_option("--n-count", o.n_count, "Samples per pass (train.n_count)");
    cmd->add_option("--k", o.k, "Chunk size or inf (train.k)");
}

std::vector<std::string> overrides(const Options& o) {
    std::vector<std::string> out;
    if (!o.fcidump.empty()) out.push_back("system.fcidump=" + o.fcidump);
    if (!o.output.empty()) out.push_back("output.result=" + o.output);
    if (!o.checkpoint.empty()) out.push_back("input.checkpoint=" + o.checkpoint);
    if (!o.metrics.empty()) out.push_back("output.metrics=" + o.metrics);
    if (!o.k.empty()) out.push_back("train.k=" + o.k);
    if (o.iterations >= 0) out.push_back("train.iterations=" + std::to_string(o.iterations));
    if (o.seed >= 0) out.push_back("train.seed=" + std::to_string(o.seed));
    if (o.n_count >= 0) out.push_back("train.n_count=" + std::to_string(o.n_count));
    if (o.threads >= 0) out.push_back("run.threads=" + std::to_string(o.threads));
    out.insert(out.end(), o.sets.begin(), o.sets.end());
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-network quantum states for molecular ground states"};
    app.require_subcommand(1);
    Options o;
    std::string save;

    auto* train = app.add_subcommand("train", "Optimise the ansatz by variational Monte Carlo");
    add_common(train, o);
    add_sampling(train, o);
    train->add_option("--iterations", o.iterations, "Iterations (train.iterations)");
    train->add_option("--metrics", o.metrics, "Metrics stream (output.metrics)");
    train->add_option("--save", save, "Output checkpoint (output.checkpoint)");

    auto* fci = app.add_subcommand("fci", "Exact ground state over the determinant space");
    add_common(fci, o);

    auto* energy = app.add_subcommand("energy", "Energy of a checkpoint");
    add_common(energy, o);
    add_sampling(energy, o);

    auto* sample = app.add_subcommand("sample", "One sampling pass with a per-layer trace");
    add_common(sample, o);
    add_sampling(sample, o);

    auto* bench = app.add_subcommand("bench", "Kernel and thread-scaling timings (CSV)");
    add_common(bench, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? nqs::kExitOk : nqs::kExitConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        std::map<std::string, std::string> entries;
        if (!o.config.empty()) entries = nqs::read_ini(o.config);
        auto ov = overrides(o);
        if (!save.empty()) ov.push_back("output.checkpoint=" + save);
        const nqs::RunConfig config = nqs::build_run_config(std::move(entries), ov);
        return nqs::run_command(name, config, std::cout, std::cerr);
    } catch (const nqs::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return nqs::kExitConfig;
    }
}
