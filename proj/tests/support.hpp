// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nqs/ansatz.hpp>
#include <nqs/bench.hpp>
#include <nqs/integrals.hpp>
#include <nqs/oracle.hpp>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

namespace nqs::test {

inline std::string data_path(const std::string& name) { return std::string(NQS_DATA_DIR) + "/" + name; }

inline IntegralTable h2_table() { return load_fcidump(data_path("h2_sto3g.fcidump")); }
inline IntegralTable h4_table() { return load_fcidump(data_path("h4_sto3g.fcidump")); }
inline IntegralTable n2_table() { return load_fcidump(data_path("n2_sto3g.fcidump")); }

// frozen oracle results for the committed fixtures
inline constexpr double kH2Fci = -1.1372838345;
inline constexpr double kH2Hf = -1.1167593074;
inline constexpr double kH4Fci = -2.1663874486;
inline constexpr double kH4Hf = -2.0985459370;

inline AnsatzConfig small_config(int k, int na, int nb, std::uint64_t seed = 1) {
    AnsatzConfig c;
    c.n_spatial = k;
    c.n_alpha = na;
    c.n_beta = nb;
    c.n_layers = 2;
    c.n_head = 2;
    c.d_model = 8;
    c.phase_hidden = {8, 8};
    c.seed = seed;
    return c;
}

inline Onv random_state(int k, int na, int nb, std::mt19937_64& rng) {
    std::vector<int> a(static_cast<std::size_t>(k)), b;
    for (int i = 0; i < k; ++i) a[static_cast<std::size_t>(i)] = i;
    b = a;
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    Onv n(2 * k);
    for (int i = 0; i < na; ++i) n.set(2 * a[static_cast<std::size_t>(i)]);
    for (int i = 0; i < nb; ++i) n.set(2 * b[static_cast<std::size_t>(i)] + 1);
    return n;
}

inline Onv random_bits(int n_so, std::mt19937_64& rng) {
    Onv n(n_so);
    for (int i = 0; i < n_so; ++i)
        if (rng() & 1) n.set(i);
    return n;
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("nqs_test_" + std::to_string(std::random_device{}()) + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

} // namespace nqs::test
