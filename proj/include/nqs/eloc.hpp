// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file eloc.hpp
 * @brief Slater-Condon matrix elements and the local-energy kernels.
 *
 * Two paths compute the same quantities:
 *  - the scalar reference (matrix_element, local_energy_reference): branchy
 *    Slater-Condon rules, serial, kept as the baseline and test oracle;
 *  - the batched path (batched_kernel, local_energy_batch): kets in a
 *    chunk-major block, the double-excitation formula evaluated for every
 *    lane, non-double lanes routed to the scalar fallback, samples spread
 *    over OpenMP threads.
 *
 * E_loc sums always run in connected() order, so results do not depend on
 * the thread count.
 */

#pragma once

#include <nqs/integrals.hpp>
#include <nqs/onv.hpp>
#include <nqs/sample_batch.hpp>
#include <nqs/wavefunction.hpp>

#include <array>
#include <complex>
#include <span>
#include <vector>

namespace nqs {

/// Lane width of the batched kernel's fixed-size blocks.
inline constexpr int kKernelLanes = 8;

[[nodiscard]] double diagonal_energy(const Onv& n, const IntegralTable& table);

/// <n|H|m> by the Slater-Condon rules. Throws std::invalid_argument on size mismatch.
[[nodiscard]] double matrix_element(const Onv& n, const Onv& m, const IntegralTable& table);

/// Kets stored chunk-major: chunk c of ket i lives at chunk(c)[i].
class KetBlock {
public:
    explicit KetBlock(int n_spin_orbitals = 0);

    void clear() noexcept { size_ = 0; }
    void reserve(std::size_t n);
    void push_back(const Onv& ket);

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] int n_spin_orbitals() const noexcept { return n_so_; }
    [[nodiscard]] int n_chunks() const noexcept { return (n_so_ + 63) >> 6; }
    [[nodiscard]] const std::uint64_t* chunk(int c) const noexcept { return data_[c].data(); }
    [[nodiscard]] Onv at(std::size_t i) const;

private:
    int n_so_ = 0;
    std::size_t size_ = 0;
    std::array<std::vector<std::uint64_t>, kMaxChunks> data_;
};

struct KernelStats {
    std::size_t lanes = 0;
    std::size_t fallback_lanes = 0;
};

/// out[i] = <bra|H|kets[i]>.
void batched_kernel(const Onv& bra, const KetBlock& kets, const IntegralTable& table, std::span<double> out,
                    KernelStats* stats = nullptr);

enum class ElocMode { SampleSpace, Accurate };

struct LocalEnergyReport {
    std::vector<std::complex<double>> values;
    ElocMode mode = ElocMode::Accurate;
    std::size_t psi_evaluations = 0;
    std::size_t matrix_elements = 0;
    std::size_t fallback_lanes = 0;
    double lut_build_seconds = 0.0;
    double psi_seconds = 0.0;
    double kernel_seconds = 0.0;
};

struct ElocOptions {
    /// 0 uses the OpenMP default.
    int threads = 0;
    bool batched = true;
};

/**
 * E_loc(n) = sum_m <n|H|m> Psi(m)/Psi(n) for every unique sample.
 *
 * Accurate mode evaluates Psi once on every distinct connected m.
 * SampleSpace mode builds a lookup table over the samples only and drops
 * m outside it. Throws std::domain_error if Psi(n) = 0 for a counted sample.
 */
[[nodiscard]] LocalEnergyReport local_energy_batch(const SampleBatch& samples, const WavefunctionEvaluator& psi,
                                                   const IntegralTable& table, ElocMode mode,
                                                   const ElocOptions& options = {});

/// Serial scalar reference for local_energy_batch.
[[nodiscard]] std::vector<std::complex<double>> local_energy_reference(const SampleBatch& samples,
                                                                       const WavefunctionEvaluator& psi,
                                                                       const IntegralTable& table, ElocMode mode);

} // namespace nqs
