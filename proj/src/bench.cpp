// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/bench.hpp>

#include <nqs/cluster.hpp>
#include <nqs/eloc.hpp>
#include <nqs/oracle.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace nqs {

namespace {

/// Deterministic amplitudes that cost almost nothing to evaluate.
class HashedAmplitude final : public WavefunctionEvaluator {
public:
    void evaluate(std::span<const Onv> configs, std::span<WavefunctionValue> out) const override {
        for (std::size_t i = 0; i < configs.size(); ++i) {
            const std::size_t h = configs[i].hash();
            out[i] = {-1e-3 * static_cast<double>(h % 1000), (h >> 20) & 1 ? 3.141592653589793 : 0.0};
        }
    }
};

template <class F>
double best_of(int repeats, F&& body) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

Onv random_determinant(int n_spatial, int n_alpha, int n_beta, std::mt19937_64& rng) {
    std::vector<int> a(static_cast<std::size_t>(n_spatial)), b;
    std::iota(a.begin(), a.end(), 0);
    b = a;
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    Onv n(2 * n_spatial);
    for (int i = 0; i < n_alpha; ++i) n.set(2 * a[static_cast<std::size_t>(i)]);
    for (int i = 0; i < n_beta; ++i) n.set(2 * b[static_cast<std::size_t>(i)] + 1);
    return n;
}

} // namespace

IntegralTable random_table(int n_spatial, int n_elec, int ms2, std::uint64_t seed) {
    IntegralTable t(n_spatial, n_elec, ms2);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    t.set_e_core(u(rng));
    for (int p = 0; p < n_spatial; ++p)
        for (int q = 0; q <= p; ++q) t.set_h1(p, q, p == q ? -2.0 + 0.25 * p + u(rng) : u(rng));
    for (int p = 0; p < n_spatial; ++p)
        for (int q = 0; q <= p; ++q)
            for (int r = 0; r < n_spatial; ++r)
                for (int s = 0; s <= r; ++s) {
                    if (t.pair(r, s) > t.pair(p, q)) continue;
                    const double diag = (p == q && r == s) ? 0.5 : 0.0;
                    t.set_h2(p, q, r, s, diag + 0.5 * u(rng));
                }
    return t;
}

void BenchConfig::validate() const {
    if (n_spatial < 1 || n_spatial > kMaxChunks * 32) throw ConfigError("bench: n_spatial out of range");
    if (n_alpha < 0 || n_beta < 0 || n_alpha > n_spatial || n_beta > n_spatial)
        throw ConfigError("bench: electron counts do not fit the orbitals");
    if (block < 1) throw ConfigError("bench: block must be at least 1");
    if (repeats < 1) throw ConfigError("bench: repeats must be at least 1");
    if (eloc_samples < 1) throw ConfigError("bench: eloc_samples must be at least 1");
    if (threads.empty()) throw ConfigError("bench: threads list is empty");
    for (int t : threads)
        if (t < 1) throw ConfigError("bench: thread counts must be positive");
}

double BenchReport::kernel_speedup() const {
    for (const auto& r : rows)
        if (r.stage == "kernel" && r.variant == "batched") return r.speedup;
    return 0.0;
}

double BenchReport::eloc_speedup(int threads) const {
    for (const auto& r : rows)
        if (r.stage == "eloc" && r.threads == threads) return r.speedup;
    return 0.0;
}

BenchReport run_bench(const BenchConfig& config) {
    config.validate();
    const IntegralTable table =
        random_table(config.n_spatial, config.n_alpha + config.n_beta, config.n_alpha - config.n_beta, config.seed);
    const int n_so = table.n_spin_orbitals();
    BenchReport report;

    // one bra against `block` kets from its connected set, cycled if short
    const Onv bra = hf_determinant(config.n_spatial, config.n_alpha, config.n_beta);
    const std::vector<Onv> conn = connected(bra);
    std::vector<Onv> kets;
    kets.reserve(config.block);
    for (std::size_t i = 0; i < config.block; ++i) kets.push_back(conn[i % conn.size()]);
    KetBlock block(n_so);
    block.reserve(kets.size());
    for (const auto& k : kets) block.push_back(k);

    // enough passes per timing that one sample spans a few milliseconds
    const std::size_t passes = std::max<std::size_t>(1, (std::size_t{1} << 20) / kets.size());
    std::vector<double> scalar(kets.size()), batched(kets.size());
    const double t_scalar = best_of(config.repeats, [&] {
        for (std::size_t it = 0; it < passes; ++it)
            for (std::size_t i = 0; i < kets.size(); ++i) scalar[i] = matrix_element(bra, kets[i], table);
    }) / static_cast<double>(passes);
    const double t_batched = best_of(config.repeats, [&] {
        for (std::size_t it = 0; it < passes; ++it) batched_kernel(bra, block, table, batched);
    }) / static_cast<double>(passes);
    for (std::size_t i = 0; i < kets.size(); ++i)
        report.kernel_max_diff = std::max(report.kernel_max_diff, std::abs(scalar[i] - batched[i]));
    report.rows.push_back({"kernel", "scalar", 1, n_so, kets.size(), t_scalar, 1.0});
    report.rows.push_back({"kernel", "batched", 1, n_so, kets.size(), t_batched, t_scalar / t_batched});

    // E_loc stage over distinct random samples
    std::mt19937_64 rng(config.seed ^ 0x5eedULL);
    std::set<Onv> distinct;
    const std::size_t space = FciBasis::dimension(config.n_spatial, config.n_alpha, config.n_beta);
    const std::size_t want = std::min(config.eloc_samples, space);
    while (distinct.size() < want) distinct.insert(random_determinant(config.n_spatial, config.n_alpha, config.n_beta, rng));
    SampleBatch samples;
    samples.depth = config.n_spatial;
    for (const auto& n : distinct) samples.push_back(n, 1, 0.0);

    const HashedAmplitude psi;
    std::vector<std::complex<double>> base;
    double t_one = 0.0;
    for (int t : config.threads) {
        LocalEnergyReport rep;
        const double secs = best_of(config.repeats, [&] {
            rep = local_energy_batch(samples, psi, table, ElocMode::Accurate, ElocOptions{t, true});
        });
        if (base.empty()) {
            base = rep.values;
            t_one = secs;
        }
        for (std::size_t i = 0; i < base.size(); ++i)
            report.eloc_max_diff = std::max(report.eloc_max_diff, std::abs(rep.values[i] - base[i]));
        report.rows.push_back({"eloc", "batched", t, n_so, samples.size(), secs, t_one / secs});
    }
    return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
    out << "stage,variant,threads,n_spin_orbitals,block,seconds,speedup\n";
    for (const auto& r : report.rows)
        out << r.stage << ',' << r.variant << ',' << r.threads << ',' << r.n_spin_orbitals << ',' << r.block << ','
            << r.seconds << ',' << r.speedup << '\n';
}

} // namespace nqs
