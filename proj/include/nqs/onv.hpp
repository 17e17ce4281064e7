// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file onv.hpp
 * @brief Bit-packed occupation number vectors and determinant algebra.
 *
 * Bit i of an Onv is the occupation of spin orbital i, with bit 0 in the
 * least significant position of chunk 0. Even spin orbitals are alpha, odd
 * are beta, so spatial orbital k owns bits 2k and 2k+1. The same layout
 * doubles as an autoregressive token prefix: token k = n_{k,alpha} + 2 n_{k,beta}.
 */

#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nqs {

inline constexpr int kMaxChunks = 4;
inline constexpr int kMaxSpinOrbitals = 64 * kMaxChunks;

inline constexpr std::uint64_t kAlphaMask = 0x5555555555555555ULL;
inline constexpr std::uint64_t kBetaMask = 0xAAAAAAAAAAAAAAAAULL;

class Onv {
public:
    Onv() = default;
    explicit Onv(int n_spin_orbitals);

    /// "1100" -> orbitals 0 and 1 occupied (orbital 0 first).
    [[nodiscard]] static Onv from_string(std::string_view bits);
    [[nodiscard]] static Onv from_occupied(int n_spin_orbitals, std::span<const int> occupied);

    [[nodiscard]] int size() const noexcept { return n_; }
    [[nodiscard]] int n_chunks() const noexcept { return (n_ + 63) >> 6; }

    [[nodiscard]] bool test(int i) const noexcept { return (bits_[i >> 6] >> (i & 63)) & 1ULL; }
    void set(int i) noexcept { bits_[i >> 6] |= 1ULL << (i & 63); }
    void reset(int i) noexcept { bits_[i >> 6] &= ~(1ULL << (i & 63)); }
    void flip(int i) noexcept { bits_[i >> 6] ^= 1ULL << (i & 63); }

    [[nodiscard]] std::uint64_t chunk(int c) const noexcept { return bits_[c]; }
    void set_chunk(int c, std::uint64_t v) noexcept { bits_[c] = v; }
    [[nodiscard]] const std::array<std::uint64_t, kMaxChunks>& chunks() const noexcept { return bits_; }

    [[nodiscard]] int count() const noexcept;
    [[nodiscard]] int count_alpha() const noexcept;
    [[nodiscard]] int count_beta() const noexcept;

    /// Occupied spin orbitals, ascending.
    [[nodiscard]] std::vector<int> occupied() const;

    [[nodiscard]] std::string to_string() const;
    [[nodiscard]] std::size_t hash() const noexcept;

    friend bool operator==(const Onv& a, const Onv& b) noexcept = default;

    /// Orders by the bit pattern read as an unsigned integer (highest chunk first).
    friend std::strong_ordering operator<=>(const Onv& a, const Onv& b) noexcept {
        if (a.n_ != b.n_) return a.n_ <=> b.n_;
        for (int c = kMaxChunks - 1; c >= 0; --c)
            if (a.bits_[c] != b.bits_[c]) return a.bits_[c] <=> b.bits_[c];
        return std::strong_ordering::equal;
    }

private:
    std::array<std::uint64_t, kMaxChunks> bits_{};
    int n_ = 0;
};

struct OnvHash {
    std::size_t operator()(const Onv& o) const noexcept { return o.hash(); }
};

// ---------------------------------------------------------------------------
// Excitation classification
// ---------------------------------------------------------------------------

struct Diagonal {
    friend bool operator==(const Diagonal&, const Diagonal&) = default;
};

/// Orbital p occupied in the bra only, q in the ket only.
struct Single {
    int p = 0;
    int q = 0;
    int sign = 1;
    friend bool operator==(const Single&, const Single&) = default;
};

/// p<q occupied in the bra only, r<s in the ket only; <n|H|m> = sign * <pq||rs>.
struct Double {
    int p = 0, q = 0, r = 0, s = 0;
    int sign = 1;
    friend bool operator==(const Double&, const Double&) = default;
};

struct Disconnected {
    friend bool operator==(const Disconnected&, const Disconnected&) = default;
};

using ExcitationClass = std::variant<Diagonal, Single, Double, Disconnected>;

/// Number of set bits strictly between spin orbitals lo and hi (lo < hi).
[[nodiscard]] int count_between(const Onv& n, int lo, int hi) noexcept;

/// Fermionic sign of moving an electron between p and q in n.
[[nodiscard]] inline int parity_sign(const Onv& n, int p, int q) noexcept {
    const int lo = p < q ? p : q;
    const int hi = p < q ? q : p;
    return (count_between(n, lo, hi) & 1) ? -1 : 1;
}

/// Throws std::invalid_argument when lengths differ.
[[nodiscard]] ExcitationClass classify(const Onv& n, const Onv& m);

/// n itself, spin-conserving singles, then same-spin and opposite-spin doubles.
void for_each_connected(const Onv& n, const std::function<void(const Onv&)>& visit);
[[nodiscard]] std::vector<Onv> connected(const Onv& n);

/// Upper bound on |connected(n)| for an (n_alpha, n_beta) state over k spatial orbitals.
[[nodiscard]] std::size_t connected_count(int k, int n_alpha, int n_beta) noexcept;

// ---------------------------------------------------------------------------
// Token view
// ---------------------------------------------------------------------------

enum Token : std::uint8_t { kVacuum = 0, kAlpha = 1, kBeta = 2, kPaired = 3 };
inline constexpr std::uint8_t kBeginToken = 4;

[[nodiscard]] inline int token_at(const Onv& n, int k) noexcept {
    return static_cast<int>((n.chunk((2 * k) >> 6) >> ((2 * k) & 63)) & 3ULL);
}
inline void set_token(Onv& n, int k, int token) noexcept {
    const int bit = 2 * k;
    std::uint64_t c = n.chunk(bit >> 6);
    c &= ~(3ULL << (bit & 63));
    c |= static_cast<std::uint64_t>(token & 3) << (bit & 63);
    n.set_chunk(bit >> 6, c);
}

[[nodiscard]] std::vector<std::uint8_t> to_tokens(const Onv& n);
/// Throws std::invalid_argument on a token outside {0,1,2,3}.
[[nodiscard]] Onv from_tokens(std::span<const std::uint8_t> tokens);

} // namespace nqs

template <>
struct std::hash<nqs::Onv> {
    std::size_t operator()(const nqs::Onv& o) const noexcept { return o.hash(); }
};
