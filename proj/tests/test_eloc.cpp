// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <nqs/eloc.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nqs;

namespace {

AmplitudeTable fci_amplitudes(const FciBasis& basis, const std::vector<double>& v) {
    AmplitudeTable psi;
    for (std::size_t i = 0; i < basis.size(); ++i) psi.insert(basis[i], std::complex<double>(v[i], 0.0));
    return psi;
}

SampleBatch batch_of(const std::vector<Onv>& states) {
    SampleBatch b;
    b.depth = states.empty() ? 0 : states[0].size() / 2;
    for (const Onv& n : states) b.push_back(n, 1, 0.0);
    return b;
}

/// Random complex amplitudes, nonzero on every state.
AmplitudeTable random_amplitudes(const FciBasis& basis, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    AmplitudeTable psi;
    for (const Onv& n : basis.states()) psi.insert(n, WavefunctionValue{u(rng), 3.0 * u(rng)});
    return psi;
}

} // namespace

TEST_CASE("diagonal element of the reference is the HF energy") {
    const auto t = test::h2_table();
    const Onv hf = hf_determinant(2, 1, 1);
    CHECK(matrix_element(hf, hf, t) == doctest::Approx(test::kH2Hf).epsilon(1e-10));
    CHECK(diagonal_energy(hf, t) == matrix_element(hf, hf, t));
}

TEST_CASE("disconnected pairs give exactly zero") {
    const auto t = random_table(4, 4, 0, 1);
    CHECK(matrix_element(Onv::from_string("11110000"), Onv::from_string("00001111"), t) == 0.0);
    CHECK(matrix_element(Onv::from_string("11100100"), Onv::from_string("00011110"), t) == 0.0);
}

TEST_CASE("size mismatch is rejected") {
    const auto t = random_table(4, 4, 0, 1);
    CHECK_THROWS_AS((void)matrix_element(Onv(6), Onv(6), t), std::invalid_argument);
}

TEST_CASE("matrix elements equal the second-quantized oracle on 2K = 8") {
    const auto t = random_table(4, 4, 0, 21);
    const FciBasis basis(4, 2, 2);
    for (const Onv& n : basis.states()) {
        const auto column = apply_second_quantized(t, n);
        for (const Onv& m : basis.states()) {
            const auto it = column.find(m);
            const double want = it == column.end() ? 0.0 : it->second;
            CHECK(std::abs(matrix_element(m, n, t) - want) < 1e-12);
        }
    }
}

TEST_CASE("Hamiltonian is Hermitian on 2K <= 12") {
    const int systems[][3] = {{4, 2, 2}, {5, 3, 2}, {6, 3, 3}};
    for (const auto& s : systems) {
        const auto t = random_table(s[0], s[1] + s[2], s[1] - s[2], 7);
        const FciBasis basis(s[0], s[1], s[2]);
        for (std::size_t i = 0; i < basis.size(); i += 3)
            for (std::size_t j = 0; j < basis.size(); ++j)
                CHECK(matrix_element(basis[i], basis[j], t) == matrix_element(basis[j], basis[i], t));
    }
}

TEST_CASE("batched kernel equals the scalar path") {
    std::mt19937_64 rng(2);
    for (const int k : {4, 12, 20, 33, 40}) {
        const int na = k / 3 + 1, nb = k / 4 + 1;
        const auto t = random_table(k, na + nb, na - nb, 100 + static_cast<std::uint64_t>(k));
        const Onv bra = test::random_state(k, na, nb, rng);
        KetBlock block(2 * k);
        std::vector<Onv> kets = connected(bra);
        for (int extra = 0; extra < 37; ++extra) kets.push_back(test::random_state(k, na, nb, rng));
        std::shuffle(kets.begin(), kets.end(), rng);
        for (const Onv& m : kets) block.push_back(m);
        std::vector<double> out(kets.size());
        KernelStats stats;
        batched_kernel(bra, block, t, out, &stats);
        CHECK(stats.lanes == kets.size());
        for (std::size_t i = 0; i < kets.size(); ++i) CHECK(std::abs(out[i] - matrix_element(bra, kets[i], t)) <= 1e-12);
    }
}

TEST_CASE("an all-doubles block takes no fallback lane") {
    std::mt19937_64 rng(3);
    const auto t = random_table(10, 8, 0, 5);
    const Onv bra = test::random_state(10, 4, 4, rng);
    KetBlock block(20);
    std::vector<Onv> kets;
    for (const Onv& m : connected(bra))
        if (std::holds_alternative<Double>(classify(bra, m))) kets.push_back(m);
    for (const Onv& m : kets) block.push_back(m);
    std::vector<double> out(kets.size());
    KernelStats stats;
    batched_kernel(bra, block, t, out, &stats);
    CHECK(stats.fallback_lanes == 0);
    for (std::size_t i = 0; i < kets.size(); ++i) CHECK(out[i] == matrix_element(bra, kets[i], t));
}

TEST_CASE("ket blocks are chunk-major") {
    KetBlock block(130);
    Onv a(130), b(130);
    a.set(0);
    b.set(129);
    block.push_back(a);
    block.push_back(b);
    CHECK(block.n_chunks() == 3);
    CHECK(block.chunk(0)[0] == 1ULL);
    CHECK(block.chunk(2)[1] == 2ULL);
    CHECK(block.at(1) == b);
}

TEST_CASE("exact eigenvector gives zero-variance local energies") {
    for (const auto& t : {test::h2_table(), test::h4_table()}) {
        const FciResult fci = fci_ground_state(t, t.n_alpha(), t.n_beta());
        const FciBasis basis(t.n_spatial(), t.n_alpha(), t.n_beta());
        const AmplitudeTable psi = fci_amplitudes(basis, fci.vector);
        std::vector<Onv> support;
        for (std::size_t i = 0; i < basis.size(); ++i)
            if (std::abs(fci.vector[i]) > 1e-8) support.push_back(basis[i]);
        const auto rep = local_energy_batch(batch_of(support), psi, t, ElocMode::Accurate);
        for (const auto& e : rep.values) {
            CHECK(std::abs(e.real() - fci.e0) < 1e-8);
            CHECK(std::abs(e.imag()) < 1e-12);
        }
    }
}

TEST_CASE("HF indicator collapses to the diagonal") {
    const auto t = test::h4_table();
    const Onv hf = hf_determinant(4, 2, 2);
    AmplitudeTable psi;
    psi.insert(hf, std::complex<double>(1.0, 0.0));
    const auto rep = local_energy_batch(batch_of({hf}), psi, t, ElocMode::Accurate);
    CHECK(rep.values[0].real() == doctest::Approx(hf_energy(t, 2, 2)).epsilon(1e-14));
    CHECK(rep.psi_evaluations == connected(hf).size());
}

TEST_CASE("full-space SampleSpace equals Accurate") {
    const auto t = random_table(4, 4, 0, 8);
    const FciBasis basis(4, 2, 2);
    const AmplitudeTable psi = random_amplitudes(basis, 4);
    const SampleBatch all = batch_of(basis.states());
    const auto acc = local_energy_batch(all, psi, t, ElocMode::Accurate);
    const auto lut = local_energy_batch(all, psi, t, ElocMode::SampleSpace);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(acc.values[i] == lut.values[i]);
}

TEST_CASE("SampleSpace drops configurations outside the sample set") {
    const auto t = test::h2_table();
    const FciBasis basis(2, 1, 1);
    const AmplitudeTable psi = random_amplitudes(basis, 5);
    const SampleBatch one = batch_of({basis[0]});
    const auto rep = local_energy_batch(one, psi, t, ElocMode::SampleSpace);
    CHECK(rep.values[0].real() == doctest::Approx(matrix_element(basis[0], basis[0], t)));
    CHECK(rep.psi_evaluations == 1);
}

TEST_CASE("full-space mean equals the Rayleigh quotient") {
    const auto t = random_table(4, 4, 0, 12);
    const FciBasis basis(4, 2, 2);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(basis.size());
    AmplitudeTable psi;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = u(rng);
        psi.insert(basis[i], std::complex<double>(v[i], 0.0));
    }
    const SparseHamiltonian h = build_hamiltonian(t, basis);
    std::vector<double> hv;
    h.multiply(v, hv);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += v[i] * hv[i];
        den += v[i] * v[i];
    }
    const auto rep = local_energy_batch(batch_of(basis.states()), psi, t, ElocMode::Accurate);
    std::complex<double> mean{};
    for (std::size_t i = 0; i < v.size(); ++i) mean += (v[i] * v[i] / den) * rep.values[i];
    CHECK(std::abs(mean.real() - num / den) < 1e-10);
}

TEST_CASE("batched and reference paths agree in both modes") {
    const auto t = random_table(5, 5, 1, 13);
    const FciBasis basis(5, 3, 2);
    const AmplitudeTable psi = random_amplitudes(basis, 6);
    std::vector<Onv> some;
    for (std::size_t i = 0; i < basis.size(); i += 4) some.push_back(basis[i]);
    const SampleBatch b = batch_of(some);
    for (const ElocMode mode : {ElocMode::Accurate, ElocMode::SampleSpace}) {
        const auto fast = local_energy_batch(b, psi, t, mode);
        const auto scalar = local_energy_batch(b, psi, t, mode, ElocOptions{1, false});
        const auto ref = local_energy_reference(b, psi, t, mode);
        REQUIRE(fast.values.size() == some.size());
        for (std::size_t i = 0; i < some.size(); ++i) {
            CHECK(fast.values[i] == scalar.values[i]);
            CHECK(std::abs(fast.values[i] - ref[i]) < 1e-10);
        }
    }
}

TEST_CASE("results are bitwise stable across thread counts") {
    const auto t = random_table(8, 8, 0, 14);
    const FciBasis basis(8, 4, 4);
    const AmplitudeTable psi = random_amplitudes(basis, 7);
    std::vector<Onv> some;
    for (std::size_t i = 0; i < basis.size(); i += 17) some.push_back(basis[i]);
    const SampleBatch b = batch_of(some);
    const auto one = local_energy_batch(b, psi, t, ElocMode::Accurate, ElocOptions{1, true});
    for (int threads : {2, 3, 4}) {
        const auto many = local_energy_batch(b, psi, t, ElocMode::Accurate, ElocOptions{threads, true});
        CHECK(many.values == one.values);
        CHECK(many.psi_evaluations == one.psi_evaluations);
    }
}

TEST_CASE("each distinct connected configuration is evaluated once") {
    const auto t = test::h4_table();
    const FciBasis basis(4, 2, 2);
    const AmplitudeTable psi = random_amplitudes(basis, 8);
    const auto rep = local_energy_batch(batch_of(basis.states()), psi, t, ElocMode::Accurate);
    CHECK(rep.psi_evaluations == basis.size());
    CHECK(rep.values.size() == basis.size());
}

TEST_CASE("a zero amplitude on a counted sample is an error") {
    const auto t = test::h2_table();
    AmplitudeTable psi;
    const Onv hf = hf_determinant(2, 1, 1);
    CHECK_THROWS_AS((void)local_energy_batch(batch_of({hf}), psi, t, ElocMode::Accurate), std::domain_error);
    CHECK_THROWS_AS((void)local_energy_reference(batch_of({hf}), psi, t, ElocMode::Accurate), std::domain_error);
}
