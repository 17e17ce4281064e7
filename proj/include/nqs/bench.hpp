// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file bench.hpp
 * @brief Synthetic integral tables and the scalar-vs-batched and
 * thread-scaling measurements of the local-energy stage.
 */

#pragma once

#include <nqs/integrals.hpp>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace nqs {

/// Random real integrals with the 8-fold (pq|rs) symmetry and a dominant ascending diagonal in h.
[[nodiscard]] IntegralTable random_table(int n_spatial, int n_elec, int ms2, std::uint64_t seed);

struct BenchConfig {
    int n_spatial = 20;
    int n_alpha = 5;
    int n_beta = 5;
    std::size_t block = 4096;
    int repeats = 3;
    std::size_t eloc_samples = 128;
    std::vector<int> threads{1, 2, 4};
    std::uint64_t seed = 7;

    /// Throws ConfigError.
    void validate() const;
};

struct BenchRow {
    std::string stage;
    std::string variant;
    int threads = 1;
    int n_spin_orbitals = 0;
    std::size_t block = 0;
    double seconds = 0.0;
    double speedup = 1.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    /// Largest |batched - scalar| over the measured block.
    double kernel_max_diff = 0.0;
    /// Largest |E_loc(t threads) - E_loc(1 thread)|.
    double eloc_max_diff = 0.0;

    [[nodiscard]] double kernel_speedup() const;
    /// Speedup of the E_loc stage at `threads`, 0 if not measured.
    [[nodiscard]] double eloc_speedup(int threads) const;
};

/// Best-of-repeats timings; speedups are relative to the scalar kernel and to the first thread count.
[[nodiscard]] BenchReport run_bench(const BenchConfig& config);

void write_bench_csv(std::ostream& out, const BenchReport& report);

} // namespace nqs
