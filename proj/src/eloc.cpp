// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/eloc.hpp>

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace nqs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double single_element(const Onv& n, const Single& s, const IntegralTable& t) {
    const int p = s.p, q = s.q;
    if ((p ^ q) & 1) return 0.0;
    double v = t.h1(p >> 1, q >> 1);
    for (int c = 0; c < n.n_chunks(); ++c) {
        std::uint64_t w = n.chunk(c);
        while (w) {
            const int r = 64 * c + std::countr_zero(w);
            w &= w - 1;
            if (r == p) continue;
            v += antisymmetrized(t, p, r, q, r);
        }
    }
    return s.sign * v;
}

// ---------------------------------------------------------------------------
// Branch-free double-excitation lanes
// ---------------------------------------------------------------------------

template <int NC>
inline int first_bit(const std::uint64_t (&w)[NC], int sentinel) noexcept {
    int idx = sentinel;
    for (int c = NC - 1; c >= 0; --c) idx = w[c] ? 64 * c + std::countr_zero(w[c]) : idx;
    return idx;
}

template <int NC>
inline void drop_first_bit(std::uint64_t (&w)[NC]) noexcept {
    bool found = false;
    for (int c = 0; c < NC; ++c) {
        const bool take = !found && w[c] != 0;
        w[c] = take ? (w[c] & (w[c] - 1)) : w[c];
        found = found || take;
    }
}

inline int strictly_inside(int x, int a, int b) noexcept {
    const int lo = a < b ? a : b;
    const int hi = a < b ? b : a;
    return static_cast<int>(x > lo) & static_cast<int>(x < hi);
}

template <int NC>
std::size_t kernel_impl(const Onv& bra, const KetBlock& kets, const IntegralTable& t, double* out) {
    const int nso = bra.size();
    const int last = nso - 1;
    std::uint64_t bra_w[NC];
    for (int c = 0; c < NC; ++c) bra_w[c] = bra.chunk(c);
    const std::uint64_t* cols[NC];
    for (int c = 0; c < NC; ++c) cols[c] = kets.chunk(c);
    // occupied bra orbitals strictly below each index
    std::uint8_t below[kMaxSpinOrbitals];
    for (int i = 0, acc = 0; i < nso; ++i) {
        below[i] = static_cast<std::uint8_t>(acc);
        acc += bra.test(i) ? 1 : 0;
    }
    // spatial pair index of every spin-orbital pair, and its triangular offset
    thread_local std::vector<std::int32_t> sop;
    thread_local std::vector<std::size_t> tri;
    sop.resize(static_cast<std::size_t>(nso) * nso);
    for (int a = 0; a < nso; ++a)
        for (int b = 0; b < nso; ++b) sop[static_cast<std::size_t>(a) * nso + b] = t.pair(a >> 1, b >> 1);
    const std::size_t n_pairs = static_cast<std::size_t>(t.n_spatial()) * (t.n_spatial() + 1) / 2;
    tri.resize(n_pairs);
    for (std::size_t k = 0; k < n_pairs; ++k) tri[k] = k * (k + 1) / 2;
    const std::int32_t* pr = sop.data();
    const std::size_t* tr = tri.data();
    const double* h2 = t.h2_data();

    const std::size_t n = kets.size();
    std::size_t n_fallback = 0;
    std::uint8_t fallback[kKernelLanes];
    std::int16_t single_p[kKernelLanes], single_q[kKernelLanes];
    double diagonal = 0.0;
    bool have_diagonal = false;

    for (std::size_t base = 0; base < n; base += kKernelLanes) {
        const int lanes = static_cast<int>(std::min<std::size_t>(kKernelLanes, n - base));
        for (int l = 0; l < lanes; ++l) {
            const std::size_t i = base + static_cast<std::size_t>(l);
            std::uint64_t bo[NC], ko[NC];
            for (int c = 0; c < NC; ++c) {
                const std::uint64_t ket = cols[c][i];
                const std::uint64_t x = bra_w[c] ^ ket;
                bo[c] = x & bra_w[c];
                ko[c] = x & ket;
            }
            // annihilated p<q and created r<s; a lane is a double iff both sides hold exactly two bits
            int p = first_bit<NC>(bo, nso);
            drop_first_bit<NC>(bo);
            int q = first_bit<NC>(bo, nso);
            drop_first_bit<NC>(bo);
            int r = first_bit<NC>(ko, nso);
            drop_first_bit<NC>(ko);
            int s = first_bit<NC>(ko, nso);
            drop_first_bit<NC>(ko);
            std::uint64_t rest = 0;
            for (int c = 0; c < NC; ++c) rest |= bo[c] | ko[c];
            const bool is_double = (q < nso) & (s < nso) & (rest == 0);
            // 0 double, 1 diagonal, 2 single, 3 disconnected
            const int kind = is_double ? 0 : (p == nso && r == nso) ? 1 : (q == nso && s == nso && p < nso && r < nso) ? 2 : 3;
            single_p[l] = static_cast<std::int16_t>(p);
            single_q[l] = static_cast<std::int16_t>(r);
            p = std::min(p, last);
            q = std::min(q, last);
            r = std::min(r, last);
            s = std::min(s, last);

            const int parity = below[p] + below[q] + below[r] + below[s] + static_cast<int>(q < s) +
                               static_cast<int>(p < r) + strictly_inside(q, p, r) + strictly_inside(s, p, r);
            const double sign = 1.0 - 2.0 * static_cast<double>(parity & 1);

            const int sp = p & 1, sq = q & 1, sr = r & 1, ss = s & 1;
            const std::int32_t pr_ = pr[p * nso + r], qs = pr[q * nso + s];
            const std::int32_t ps = pr[p * nso + s], qr = pr[q * nso + r];
            const std::size_t id = tr[std::max(pr_, qs)] + static_cast<std::size_t>(std::min(pr_, qs));
            const std::size_t ie = tr[std::max(ps, qr)] + static_cast<std::size_t>(std::min(ps, qr));
            const double direct = h2[id] * static_cast<double>((sp == sr) & (sq == ss));
            const double exchange = h2[ie] * static_cast<double>((sp == ss) & (sq == sr));
            out[i] = sign * (direct - exchange);
            fallback[l] = static_cast<std::uint8_t>(kind);
        }
        std::uint8_t any = 0;
        for (int l = 0; l < lanes; ++l) any |= fallback[l];
        if (any) {
            for (int l = 0; l < lanes; ++l) {
                if (!fallback[l]) continue;
                const std::size_t i = base + static_cast<std::size_t>(l);
                if (fallback[l] == 1) {
                    if (!have_diagonal) diagonal = diagonal_energy(bra, t);
                    have_diagonal = true;
                    out[i] = diagonal;
                } else if (fallback[l] == 2) {
                    const int a = single_p[l], b = single_q[l];
                    out[i] = single_element(bra, Single{a, b, parity_sign(bra, a, b)}, t);
                } else {
                    out[i] = 0.0;
                }
                ++n_fallback;
            }
        }
    }
    return n_fallback;
}

} // namespace

double diagonal_energy(const Onv& n, const IntegralTable& t) {
    const std::vector<int> occ = n.occupied();
    double e = t.e_core();
    for (std::size_t i = 0; i < occ.size(); ++i) {
        const int p = occ[i];
        e += t.h1(p >> 1, p >> 1);
        for (std::size_t j = i + 1; j < occ.size(); ++j) {
            const int q = occ[j];
            e += antisymmetrized(t, p, q, p, q);
        }
    }
    return e;
}

double matrix_element(const Onv& n, const Onv& m, const IntegralTable& table) {
    if (n.size() != table.n_spin_orbitals() || m.size() != table.n_spin_orbitals())
        throw std::invalid_argument("matrix_element: ONV size does not match the integral table");
    const ExcitationClass ex = classify(n, m);
    if (std::holds_alternative<Diagonal>(ex)) return diagonal_energy(n, table);
    if (const auto* s = std::get_if<Single>(&ex)) return single_element(n, *s, table);
    if (const auto* d = std::get_if<Double>(&ex)) return d->sign * antisymmetrized(table, d->p, d->q, d->r, d->s);
    return 0.0;
}

KetBlock::KetBlock(int n_spin_orbitals) : n_so_(n_spin_orbitals) {
    if (n_spin_orbitals < 0 || n_spin_orbitals > kMaxSpinOrbitals)
        throw std::invalid_argument("KetBlock: spin orbital count out of range");
}

void KetBlock::reserve(std::size_t n) {
    for (int c = 0; c < n_chunks(); ++c) data_[c].reserve(n);
}

void KetBlock::push_back(const Onv& ket) {
    for (int c = 0; c < n_chunks(); ++c) {
        auto& col = data_[c];
        if (col.size() <= size_) col.resize(size_ + 1);
        col[size_] = ket.chunk(c);
    }
    ++size_;
}

Onv KetBlock::at(std::size_t i) const {
    Onv o(n_so_);
    for (int c = 0; c < n_chunks(); ++c) o.set_chunk(c, data_[c][i]);
    return o;
}

void batched_kernel(const Onv& bra, const KetBlock& kets, const IntegralTable& table, std::span<double> out,
                    KernelStats* stats) {
    if (bra.size() != table.n_spin_orbitals() || kets.n_spin_orbitals() != bra.size())
        throw std::invalid_argument("batched_kernel: ONV size does not match the integral table");
    if (out.size() < kets.size()) throw std::invalid_argument("batched_kernel: output span too small");
    std::size_t fb = 0;
    switch (bra.n_chunks()) {
    case 1: fb = kernel_impl<1>(bra, kets, table, out.data()); break;
    case 2: fb = kernel_impl<2>(bra, kets, table, out.data()); break;
    case 3: fb = kernel_impl<3>(bra, kets, table, out.data()); break;
    case 4: fb = kernel_impl<4>(bra, kets, table, out.data()); break;
    default: break;
    }
    if (stats) {
        stats->lanes += kets.size();
        stats->fallback_lanes += fb;
    }
}

// ---------------------------------------------------------------------------
// Local energies
// ---------------------------------------------------------------------------

namespace {

void check_samples(const SampleBatch& samples, const IntegralTable& table) {
    if (samples.counts.size() != samples.size())
        throw std::invalid_argument("local_energy: counts and prefixes are misaligned");
    for (const Onv& n : samples.prefixes)
        if (n.size() != table.n_spin_orbitals())
            throw std::invalid_argument("local_energy: sample size does not match the integral table");
}

void check_nonzero(const SampleBatch& samples, std::size_t i, const WavefunctionValue& v) {
    if (v.is_zero() && samples.counts[i] > 0)
        throw std::domain_error("local_energy: Psi(n) = 0 for sampled configuration " + samples.prefixes[i].to_string());
}

} // namespace

LocalEnergyReport local_energy_batch(const SampleBatch& samples, const WavefunctionEvaluator& psi,
                                     const IntegralTable& table, ElocMode mode, const ElocOptions& options) {
    check_samples(samples, table);
    LocalEnergyReport report;
    report.mode = mode;
    const std::size_t nu = samples.size();
    report.values.assign(nu, {});
    if (nu == 0) return report;

    const int nso = table.n_spin_orbitals();
    const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();

    // Per sample: indices into `distinct` of the kets that contribute, in connected() order.
    std::vector<Onv> distinct;
    std::vector<WavefunctionValue> distinct_psi;
    std::vector<std::size_t> offsets(nu + 1, 0);
    std::vector<std::uint32_t> refs;
    std::vector<WavefunctionValue> sample_psi(nu);

    auto t0 = Clock::now();
    std::vector<std::vector<std::uint32_t>> lists(nu);
    if (mode == ElocMode::Accurate) {
        // connected sets, then a sharded dedupe; distinct order depends on the data only
        std::vector<std::vector<Onv>> conn(nu);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
        for (std::size_t i = 0; i < nu; ++i) conn[i] = connected(samples.prefixes[i]);
        for (std::size_t i = 0; i < nu; ++i) offsets[i + 1] = offsets[i] + conn[i].size();
        const std::size_t total = offsets[nu];
        if (total > std::numeric_limits<std::uint32_t>::max())
            throw std::length_error("local_energy: connected set too large");

        constexpr std::size_t kShards = 256;
        std::vector<std::uint8_t> shard(total);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
        for (std::size_t i = 0; i < nu; ++i)
            for (std::size_t j = 0; j < conn[i].size(); ++j)
                shard[offsets[i] + j] = static_cast<std::uint8_t>((conn[i][j].hash() * 0x9e3779b97f4a7c15ULL) >> 56);
        std::vector<std::size_t> shard_start(kShards + 1, 0);
        for (std::uint8_t sh : shard) ++shard_start[sh + 1u];
        for (std::size_t k = 0; k < kShards; ++k) shard_start[k + 1] += shard_start[k];
        std::vector<std::uint32_t> members(total);
        {
            std::vector<std::size_t> fill(shard_start.begin(), shard_start.end() - 1);
            for (std::size_t e = 0; e < total; ++e) members[fill[shard[e]]++] = static_cast<std::uint32_t>(e);
        }
        std::vector<std::size_t> owner(total);
        for (std::size_t i = 0; i < nu; ++i)
            for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) owner[e] = i;
        auto ket = [&](std::size_t e) -> const Onv& { return conn[owner[e]][e - offsets[owner[e]]]; };

        refs.resize(total);
        std::vector<std::vector<Onv>> shard_distinct(kShards);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
        for (std::size_t k = 0; k < kShards; ++k) {
            std::unordered_map<Onv, std::uint32_t, OnvHash> index;
            index.reserve(shard_start[k + 1] - shard_start[k]);
            for (std::size_t m = shard_start[k]; m < shard_start[k + 1]; ++m) {
                const std::uint32_t e = members[m];
                const auto [it, inserted] =
                    index.try_emplace(ket(e), static_cast<std::uint32_t>(shard_distinct[k].size()));
                if (inserted) shard_distinct[k].push_back(ket(e));
                refs[e] = it->second;
            }
        }
        std::vector<std::uint32_t> base(kShards + 1, 0);
        for (std::size_t k = 0; k < kShards; ++k)
            base[k + 1] = base[k] + static_cast<std::uint32_t>(shard_distinct[k].size());
        distinct.resize(base[kShards]);
        for (std::size_t k = 0; k < kShards; ++k)
            std::copy(shard_distinct[k].begin(), shard_distinct[k].end(), distinct.begin() + base[k]);
#pragma omp parallel for num_threads(threads) schedule(static)
        for (std::size_t e = 0; e < total; ++e) refs[e] += base[shard[e]];

        distinct_psi.resize(distinct.size());
        const auto tp = Clock::now();
        psi.evaluate(distinct, distinct_psi);
        report.psi_seconds = seconds_since(tp);
        report.psi_evaluations = distinct.size();
        for (std::size_t i = 0; i < nu; ++i) sample_psi[i] = distinct_psi[refs[offsets[i]]];
    } else {
        // Lookup table over the sampled set only.
        psi.evaluate(samples.prefixes, sample_psi);
        report.psi_evaluations = nu;
        std::unordered_map<Onv, std::uint32_t, OnvHash> lut;
        lut.reserve(nu);
        for (std::size_t i = 0; i < nu; ++i) lut.emplace(samples.prefixes[i], static_cast<std::uint32_t>(i));
        distinct = samples.prefixes;
        distinct_psi = sample_psi;
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
        for (std::size_t i = 0; i < nu; ++i) {
            for (const Onv& m : connected(samples.prefixes[i])) {
                const auto it = lut.find(m);
                if (it != lut.end()) lists[i].push_back(it->second);
            }
        }
        for (std::size_t i = 0; i < nu; ++i) {
            offsets[i + 1] = offsets[i] + lists[i].size();
            refs.insert(refs.end(), lists[i].begin(), lists[i].end());
        }
        report.lut_build_seconds = seconds_since(t0);
    }
    for (std::size_t i = 0; i < nu; ++i) check_nonzero(samples, i, sample_psi[i]);

    const auto tk = Clock::now();
    std::size_t fallback_total = 0;
#pragma omp parallel num_threads(threads) reduction(+ : fallback_total)
    {
        KetBlock block(nso);
        std::vector<double> h;
        KernelStats stats;
#pragma omp for schedule(dynamic, 4)
        for (std::size_t i = 0; i < nu; ++i) {
            const std::size_t begin = offsets[i], end = offsets[i + 1];
            const std::size_t len = end - begin;
            h.resize(len);
            const Onv& n = samples.prefixes[i];
            if (options.batched) {
                block.clear();
                for (std::size_t j = begin; j < end; ++j) block.push_back(distinct[refs[j]]);
                batched_kernel(n, block, table, h, &stats);
            } else {
                for (std::size_t j = 0; j < len; ++j) h[j] = matrix_element(n, distinct[refs[begin + j]], table);
            }
            const std::complex<double> log_n = sample_psi[i].log_value();
            std::complex<double> acc{};
            for (std::size_t j = 0; j < len; ++j) {
                const WavefunctionValue& vm = distinct_psi[refs[begin + j]];
                if (vm.is_zero() || h[j] == 0.0) continue;
                acc += h[j] * std::exp(vm.log_value() - log_n);
            }
            report.values[i] = acc;
        }
        fallback_total += stats.fallback_lanes;
    }
    report.kernel_seconds = seconds_since(tk);
    report.fallback_lanes = fallback_total;
    report.matrix_elements = refs.size();
    return report;
}

std::vector<std::complex<double>> local_energy_reference(const SampleBatch& samples, const WavefunctionEvaluator& psi,
                                                         const IntegralTable& table, ElocMode mode) {
    check_samples(samples, table);
    std::vector<std::complex<double>> out(samples.size());
    std::vector<WavefunctionValue> psi_n(samples.size());
    psi.evaluate(samples.prefixes, psi_n);
    AmplitudeTable lut;
    if (mode == ElocMode::SampleSpace)
        for (std::size_t i = 0; i < samples.size(); ++i) lut.insert(samples.prefixes[i], psi_n[i]);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        check_nonzero(samples, i, psi_n[i]);
        const std::complex<double> amp_n = psi_n[i].value();
        std::complex<double> acc{};
        for (const Onv& m : connected(samples.prefixes[i])) {
            WavefunctionValue vm;
            if (mode == ElocMode::Accurate) {
                psi.evaluate(std::span<const Onv>(&m, 1), std::span<WavefunctionValue>(&vm, 1));
            } else if (const auto* hit = lut.find(m)) {
                vm = *hit;
            }
            if (vm.is_zero()) continue;
            acc += matrix_element(samples.prefixes[i], m, table) * vm.value() / amp_n;
        }
        out[i] = acc;
    }
    return out;
}

} // namespace nqs
