// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <nqs/eloc.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace nqs;

namespace {

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("number operator term lands on the diagonal") {
    IntegralTable t(2, 2, 0);
    t.set_h1(0, 0, -0.8);
    const auto col = apply_second_quantized(t, Onv::from_string("1100"));
    REQUIRE(col.size() == 1);
    CHECK(col.at(Onv::from_string("1100")) == doctest::Approx(-1.6));
}

TEST_CASE("hopping past an occupied orbital flips the sign") {
    IntegralTable t(2, 2, 0);
    t.set_h1(0, 1, 0.3);
    const auto col = apply_second_quantized(t, Onv::from_string("1100"));
    CHECK(col.at(Onv::from_string("0110")) == doctest::Approx(-0.3));
    CHECK(col.at(Onv::from_string("1001")) == doctest::Approx(0.3));
    CHECK(matrix_element(Onv::from_string("0110"), Onv::from_string("1100"), t) == doctest::Approx(-0.3));
}

TEST_CASE("oracle columns are consistent with their transposes") {
    const auto t = random_table(3, 3, 1, 4);
    const FciBasis basis(3, 2, 1);
    for (const Onv& n : basis.states()) {
        const auto col = apply_second_quantized(t, n);
        for (const auto& [m, v] : col) {
            const auto back = apply_second_quantized(t, m);
            CHECK(std::abs(back.at(n) - v) < 1e-12);
        }
    }
}

TEST_CASE("basis has the binomial size in sorted order") {
    const FciBasis basis(5, 3, 2);
    CHECK(basis.size() == 100);
    CHECK(FciBasis::dimension(5, 3, 2) == 100);
    CHECK(FciBasis::dimension(10, 7, 7) == 14400);
    CHECK(std::is_sorted(basis.states().begin(), basis.states().end()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        CHECK(basis[i].count_alpha() == 3);
        CHECK(basis[i].count_beta() == 2);
        CHECK(basis.index(basis[i]) == i);
    }
    CHECK_FALSE(basis.index(Onv::from_string("1111000000")).has_value());
}

TEST_CASE("sparse Hamiltonian is symmetric and matches matrix_element") {
    const auto t = random_table(5, 5, 1, 5);
    const FciBasis basis(5, 3, 2);
    const SparseHamiltonian h = build_hamiltonian(t, basis);
    CHECK(h.dim == basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = 0; j < basis.size(); ++j) {
            CHECK(std::abs(h.at(i, j) - h.at(j, i)) < 1e-12);
            CHECK(std::abs(h.at(i, j) - matrix_element(basis[i], basis[j], t)) < 1e-12);
        }
}

TEST_CASE("one electron in one orbital") {
    std::istringstream in(" &FCI NORB=1,NELEC=1,MS2=1 &END\n-0.75 1 1 0 0\n0.25 0 0 0 0\n");
    const auto t = parse_fcidump(in);
    const FciResult r = fci_ground_state(t, 1, 0);
    CHECK(r.dim == 1);
    CHECK(r.e0 == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("frozen fixture energies") {
    const auto h2 = test::h2_table();
    CHECK(fci_ground_state(h2, 1, 1).e0 == doctest::Approx(test::kH2Fci).epsilon(1e-9));
    CHECK(hf_energy(h2, 1, 1) == doctest::Approx(test::kH2Hf).epsilon(1e-9));
    const auto h4 = test::h4_table();
    CHECK(fci_ground_state(h4, 2, 2).e0 == doctest::Approx(test::kH4Fci).epsilon(1e-9));
    CHECK(hf_energy(h4, 2, 2) == doctest::Approx(test::kH4Hf).epsilon(1e-9));
}

TEST_CASE("ground state is normalized, sign-fixed and variational") {
    const auto t = random_table(5, 5, 1, 6);
    const FciResult r = fci_ground_state(t, 3, 2);
    CHECK(r.dense);
    CHECK(norm2(r.vector) == doctest::Approx(1.0).epsilon(1e-12));
    const auto big = std::max_element(r.vector.begin(), r.vector.end(),
                                      [](double a, double b) { return std::abs(a) < std::abs(b); });
    CHECK(*big > 0.0);
    const FciBasis basis(5, 3, 2);
    for (const Onv& n : basis.states()) CHECK(r.e0 <= diagonal_energy(n, t) + 1e-12);
}

TEST_CASE("Lanczos agrees with the dense solver") {
    const auto t = random_table(7, 6, 0, 9);
    const FciResult dense = fci_ground_state(t, 3, 3);
    FciOptions o;
    o.dense_max_dim = 10;
    const FciResult iter = fci_ground_state(t, 3, 3, o);
    CHECK(dense.dense);
    CHECK_FALSE(iter.dense);
    CHECK(iter.residual <= 1e-9);
    CHECK(iter.e0 == doctest::Approx(dense.e0).epsilon(1e-11));
    double overlap = 0.0;
    for (std::size_t i = 0; i < dense.vector.size(); ++i) overlap += dense.vector[i] * iter.vector[i];
    CHECK(overlap == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("dimension cap is enforced") {
    const auto t = random_table(6, 6, 0, 1);
    FciOptions o;
    o.max_dim = 10;
    CHECK_THROWS_AS((void)fci_ground_state(t, 3, 3, o), std::length_error);
}

TEST_CASE("HF energy is the reference diagonal entry") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = random_table(5, 4, 0, seed);
        const Onv hf = hf_determinant(5, 2, 2);
        CHECK(hf == Onv::from_string("1111000000"));
        const FciBasis basis(5, 2, 2);
        const SparseHamiltonian h = build_hamiltonian(t, basis);
        const std::size_t i = *basis.index(hf);
        CHECK(hf_energy(t, 2, 2) == doctest::Approx(h.at(i, i)).epsilon(1e-13));
        CHECK(hf_energy(t, 2, 2) == matrix_element(hf, hf, t));
    }
}
