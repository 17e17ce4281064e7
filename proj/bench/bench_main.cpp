// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

// Scalar vs batched local-energy kernel and E_loc thread scaling; CSV on stdout.

#include <nqs/bench.hpp>
#include <nqs/cluster.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"nqs kernel benchmark"};
    nqs::BenchConfig c;
    app.add_option("--n-spatial", c.n_spatial, "Spatial orbitals");
    app.add_option("--n-alpha", c.n_alpha, "Alpha electrons");
    app.add_option("--n-beta", c.n_beta, "Beta electrons");
    app.add_option("--block", c.block, "Kets per kernel call");
    app.add_option("--repeats", c.repeats, "Timing repeats (best kept)");
    app.add_option("--samples", c.eloc_samples, "Samples in the E_loc stage");
    app.add_option("--threads", c.threads, "Thread counts for the E_loc stage");
    app.add_option("--seed", c.seed, "Integral seed");
    CLI11_PARSE(app, argc, argv);
    try {
        const nqs::BenchReport report = nqs::run_bench(c);
        nqs::write_bench_csv(std::cout, report);
        std::cerr << "kernel speedup " << report.kernel_speedup() << ", max |diff| " << report.kernel_max_diff << '\n';
    } catch (const nqs::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
