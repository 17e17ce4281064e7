// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file oracle.hpp
 * @brief Ground-truth engines for desk-scale systems.
 *
 * apply_second_quantized() walks every operator string of the Hamiltonian
 * and tracks fermionic signs by counting occupations below each acted
 * index. It shares nothing with the Slater-Condon code in eloc and is the
 * independent check on it. fci_ground_state() diagonalizes H over the full
 * determinant space.
 */

#pragma once

#include <nqs/integrals.hpp>
#include <nqs/onv.hpp>

#include <cstddef>
#include <optional>
#include <unordered_map>
#include <vector>

namespace nqs {

/// Coefficients <m|H|n> for every m reached from n.
[[nodiscard]] std::unordered_map<Onv, double, OnvHash> apply_second_quantized(const IntegralTable& table,
                                                                              const Onv& n);

/// All ONVs with exactly (n_alpha, n_beta) electrons, ascending in Onv order.
class FciBasis {
public:
    FciBasis(int n_spatial, int n_alpha, int n_beta);

    [[nodiscard]] std::size_t size() const noexcept { return states_.size(); }
    [[nodiscard]] const Onv& operator[](std::size_t i) const noexcept { return states_[i]; }
    [[nodiscard]] const std::vector<Onv>& states() const noexcept { return states_; }
    [[nodiscard]] std::optional<std::size_t> index(const Onv& n) const;

    /// C(K, n_alpha) * C(K, n_beta) without building the basis.
    [[nodiscard]] static std::size_t dimension(int n_spatial, int n_alpha, int n_beta) noexcept;

private:
    std::vector<Onv> states_;
    std::unordered_map<Onv, std::size_t, OnvHash> index_;
};

/// Hamiltonian over an FciBasis in CSR form.
struct SparseHamiltonian {
    std::size_t dim = 0;
    std::vector<std::size_t> row_offsets;
    std::vector<std::uint32_t> columns;
    std::vector<double> values;

    void multiply(const std::vector<double>& x, std::vector<double>& y) const;
    [[nodiscard]] double at(std::size_t row, std::size_t col) const;
};

[[nodiscard]] SparseHamiltonian build_hamiltonian(const IntegralTable& table, const FciBasis& basis);

struct FciOptions {
    /// Dimensions up to this use a dense symmetric eigensolver.
    std::size_t dense_max_dim = 4096;
    std::size_t max_dim = 1'000'000;
    double residual_tolerance = 1e-9;
    int krylov_size = 120;
    int max_restarts = 50;
};

struct FciResult {
    double e0 = 0.0;
    std::vector<double> vector;
    std::size_t dim = 0;
    std::size_t n_iterations = 0;
    bool dense = false;
    double residual = 0.0;
};

/**
 * Lowest eigenpair of H over the (n_alpha, n_beta) determinant space.
 * The vector is normalized with its largest-magnitude component positive.
 * Throws std::length_error above options.max_dim.
 */
[[nodiscard]] FciResult fci_ground_state(const IntegralTable& table, int n_alpha, int n_beta,
                                         const FciOptions& options = {});

/// The aufbau determinant: lowest n_alpha alpha and n_beta beta spin orbitals.
[[nodiscard]] Onv hf_determinant(int n_spatial, int n_alpha, int n_beta);
[[nodiscard]] double hf_energy(const IntegralTable& table, int n_alpha, int n_beta);

} // namespace nqs
