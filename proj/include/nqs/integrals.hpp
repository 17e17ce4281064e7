// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file integrals.hpp
 * @brief Molecular integral table and FCIDUMP reader/writer.
 *
 * Spatial integrals are stored in chemists' notation (pq|rs). Spin orbitals
 * are interleaved: spin orbital 2k is spatial orbital k with spin alpha,
 * 2k+1 is spatial orbital k with spin beta. Every module uses this layout.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace nqs {

class FcidumpError : public std::runtime_error {
public:
    enum class Kind { Parse, Range, Consistency };

    FcidumpError(Kind kind, std::size_t line, const std::string& what);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    Kind kind_;
    std::size_t line_;
};

/**
 * Core energy plus one- and two-electron spatial integrals (Hartree).
 *
 * h1 is dense and kept symmetric. h2 holds one value per 8-fold symmetry
 * class, addressed by the packed compound index pair(pair(p,q), pair(r,s));
 * symmetry is completed at lookup. Immutable once handed to the kernels.
 */
class IntegralTable {
public:
    IntegralTable() = default;
    IntegralTable(int n_spatial, int n_elec, int ms2);

    [[nodiscard]] int n_spatial() const noexcept { return n_spatial_; }
    [[nodiscard]] int n_spin_orbitals() const noexcept { return 2 * n_spatial_; }
    [[nodiscard]] int n_elec() const noexcept { return n_elec_; }
    [[nodiscard]] int ms2() const noexcept { return ms2_; }
    [[nodiscard]] int n_alpha() const noexcept { return (n_elec_ + ms2_) / 2; }
    [[nodiscard]] int n_beta() const noexcept { return (n_elec_ - ms2_) / 2; }

    [[nodiscard]] double e_core() const noexcept { return e_core_; }
    void set_e_core(double v) noexcept { e_core_ = v; }

    [[nodiscard]] double h1(int p, int q) const noexcept {
        return h1_[static_cast<std::size_t>(p) * n_spatial_ + q];
    }
    void set_h1(int p, int q, double v);

    [[nodiscard]] double h2(int p, int q, int r, int s) const noexcept {
        return h2_[pair_index(pair(p, q), pair(r, s))];
    }
    void set_h2(int p, int q, int r, int s, double v);

    /// Packed pair index of spatial orbitals (p,q), symmetric in its arguments.
    [[nodiscard]] std::int32_t pair(int p, int q) const noexcept {
        return pair_[static_cast<std::size_t>(p) * n_spatial_ + q];
    }
    [[nodiscard]] double h2_by_pairs(std::int32_t pq, std::int32_t rs) const noexcept {
        return h2_[pair_index(pq, rs)];
    }

    [[nodiscard]] static constexpr std::size_t pair_index(std::size_t i, std::size_t j) noexcept {
        return i >= j ? i * (i + 1) / 2 + j : j * (j + 1) / 2 + i;
    }

    [[nodiscard]] std::size_t h2_storage_size() const noexcept { return h2_.size(); }
    /// Packed (pq|rs) storage indexed by pair_index.
    [[nodiscard]] const double* h2_data() const noexcept { return h2_.data(); }

    friend bool operator==(const IntegralTable&, const IntegralTable&) = default;

private:
    int n_spatial_ = 0;
    int n_elec_ = 0;
    int ms2_ = 0;
    double e_core_ = 0.0;
    std::vector<double> h1_;
    std::vector<double> h2_;
    std::vector<std::int32_t> pair_;
};

/// h_pq lifted to spin orbitals; zero across spins. Throws std::out_of_range.
[[nodiscard]] double spin_orbital_h1(const IntegralTable& table, int p, int q);

/// (pq|rs) over spin orbitals: nonzero only when spin(p)==spin(q) and spin(r)==spin(s).
[[nodiscard]] inline double spin_orbital_eri(const IntegralTable& t, int p, int q, int r, int s) noexcept {
    if (((p ^ q) & 1) || ((r ^ s) & 1)) return 0.0;
    return t.h2(p >> 1, q >> 1, r >> 1, s >> 1);
}

/// Antisymmetrized <pq||rs> = (pr|qs) - (ps|qr) over spin orbitals.
[[nodiscard]] inline double antisymmetrized(const IntegralTable& t, int p, int q, int r, int s) noexcept {
    return spin_orbital_eri(t, p, r, q, s) - spin_orbital_eri(t, p, s, q, r);
}

/**
 * Parse FCIDUMP text. Header keys NORB, NELEC, MS2 are required; ORBSYM,
 * ISYM are accepted and ignored, anything else is ignored with a warning
 * appended to @p warnings (when given).
 */
[[nodiscard]] IntegralTable parse_fcidump(std::istream& in, std::vector<std::string>* warnings = nullptr);
[[nodiscard]] IntegralTable load_fcidump(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Canonical records: one per nonzero symmetry-unique integral, then h1, then core.
void write_fcidump(std::ostream& out, const IntegralTable& table);

} // namespace nqs
