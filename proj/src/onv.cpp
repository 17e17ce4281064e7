// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/onv.hpp>

#include <stdexcept>

namespace nqs {

namespace {

constexpr std::uint64_t low_mask(int n) noexcept {
    return n <= 0 ? 0ULL : (n >= 64 ? ~0ULL : (1ULL << n) - 1ULL);
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Lowest set bit index across chunks of a difference mask; -1 if none.
int lowest_bit(const std::array<std::uint64_t, kMaxChunks>& bits, int n_chunks) noexcept {
    for (int c = 0; c < n_chunks; ++c)
        if (bits[c]) return 64 * c + std::countr_zero(bits[c]);
    return -1;
}

int collect_bits(const std::array<std::uint64_t, kMaxChunks>& bits, int n_chunks, int* out, int max_out) noexcept {
    int found = 0;
    for (int c = 0; c < n_chunks; ++c) {
        std::uint64_t w = bits[c];
        while (w) {
            if (found == max_out) return found + 1;
            out[found++] = 64 * c + std::countr_zero(w);
            w &= w - 1;
        }
    }
    return found;
}

} // namespace

Onv::Onv(int n_spin_orbitals) : n_(n_spin_orbitals) {
    if (n_spin_orbitals < 0 || n_spin_orbitals > kMaxSpinOrbitals)
        throw std::invalid_argument("Onv: spin orbital count must be in [0, " + std::to_string(kMaxSpinOrbitals) + "]");
}

Onv Onv::from_string(std::string_view bits) {
    Onv o(static_cast<int>(bits.size()));
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] == '1') o.set(static_cast<int>(i));
        else if (bits[i] != '0') throw std::invalid_argument("Onv::from_string: expected only '0' and '1'");
    }
    return o;
}

Onv Onv::from_occupied(int n_spin_orbitals, std::span<const int> occupied) {
    Onv o(n_spin_orbitals);
    for (int i : occupied) {
        if (i < 0 || i >= n_spin_orbitals) throw std::out_of_range("Onv::from_occupied: index out of range");
        o.set(i);
    }
    return o;
}

int Onv::count() const noexcept {
    int c = 0;
    for (auto w : bits_) c += std::popcount(w);
    return c;
}

int Onv::count_alpha() const noexcept {
    int c = 0;
    for (auto w : bits_) c += std::popcount(w & kAlphaMask);
    return c;
}

int Onv::count_beta() const noexcept {
    int c = 0;
    for (auto w : bits_) c += std::popcount(w & kBetaMask);
    return c;
}

std::vector<int> Onv::occupied() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count()));
    for (int c = 0; c < n_chunks(); ++c) {
        std::uint64_t w = bits_[c];
        while (w) {
            out.push_back(64 * c + std::countr_zero(w));
            w &= w - 1;
        }
    }
    return out;
}

std::string Onv::to_string() const {
    std::string s(static_cast<std::size_t>(n_), '0');
    for (int i = 0; i < n_; ++i)
        if (test(i)) s[static_cast<std::size_t>(i)] = '1';
    return s;
}

std::size_t Onv::hash() const noexcept {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(n_));
    for (int c = 0; c < n_chunks(); ++c) h = splitmix64(h ^ bits_[c]);
    return static_cast<std::size_t>(h);
}

int count_between(const Onv& n, int lo, int hi) noexcept {
    int total = 0;
    const int first = lo + 1;
    const int last = hi; // exclusive
    if (first >= last) return 0;
    const int c0 = first >> 6, c1 = (last - 1) >> 6;
    for (int c = c0; c <= c1; ++c) {
        std::uint64_t mask = ~0ULL;
        if (c == c0) mask &= ~low_mask(first & 63);
        if (c == c1) mask &= low_mask(((last - 1) & 63) + 1);
        total += std::popcount(n.chunk(c) & mask);
    }
    return total;
}

ExcitationClass classify(const Onv& n, const Onv& m) {
    if (n.size() != m.size()) throw std::invalid_argument("classify: ONV lengths differ");
    const int nc = n.n_chunks();
    std::array<std::uint64_t, kMaxChunks> bra_only{}, ket_only{};
    int diff = 0;
    for (int c = 0; c < nc; ++c) {
        const std::uint64_t x = n.chunk(c) ^ m.chunk(c);
        bra_only[c] = x & n.chunk(c);
        ket_only[c] = x & m.chunk(c);
        diff += std::popcount(x);
    }
    if (diff == 0) return Diagonal{};
    if (diff == 2) {
        const int p = lowest_bit(bra_only, nc);
        const int q = lowest_bit(ket_only, nc);
        if (p < 0 || q < 0) return Disconnected{};
        return Single{p, q, parity_sign(n, p, q)};
    }
    if (diff == 4) {
        int annihilated[2], created[2];
        if (collect_bits(bra_only, nc, annihilated, 2) != 2 || collect_bits(ket_only, nc, created, 2) != 2)
            return Disconnected{};
        Double d{annihilated[0], annihilated[1], created[0], created[1], 1};
        // |n> = a+_p a_r a+_q a_s |m>: apply s->q, then r->p on the intermediate.
        int sign = parity_sign(m, d.q, d.s);
        Onv mid = m;
        mid.reset(d.s);
        mid.set(d.q);
        sign *= parity_sign(mid, d.p, d.r);
        d.sign = sign;
        return d;
    }
    return Disconnected{};
}

void for_each_connected(const Onv& n, const std::function<void(const Onv&)>& visit) {
    const int nso = n.size();
    std::vector<int> occ[2], vir[2];
    for (int i = 0; i < nso; ++i) (n.test(i) ? occ : vir)[i & 1].push_back(i);

    visit(n);

    std::vector<int> all_occ = n.occupied();
    for (int p : all_occ) {
        for (int q : vir[p & 1]) {
            Onv m = n;
            m.reset(p);
            m.set(q);
            visit(m);
        }
    }

    // same-spin doubles, alpha then beta
    for (int spin = 0; spin < 2; ++spin) {
        const auto& o = occ[spin];
        const auto& v = vir[spin];
        for (std::size_t i = 0; i < o.size(); ++i)
            for (std::size_t j = i + 1; j < o.size(); ++j)
                for (std::size_t a = 0; a < v.size(); ++a)
                    for (std::size_t b = a + 1; b < v.size(); ++b) {
                        Onv m = n;
                        m.reset(o[i]);
                        m.reset(o[j]);
                        m.set(v[a]);
                        m.set(v[b]);
                        visit(m);
                    }
    }

    // opposite-spin doubles
    for (int pa : occ[0])
        for (int pb : occ[1])
            for (int va : vir[0])
                for (int vb : vir[1]) {
                    Onv m = n;
                    m.reset(pa);
                    m.reset(pb);
                    m.set(va);
                    m.set(vb);
                    visit(m);
                }
}

std::vector<Onv> connected(const Onv& n) {
    std::vector<Onv> out;
    const int k = n.size() / 2;
    out.reserve(connected_count(k, n.count_alpha(), n.count_beta()));
    for_each_connected(n, [&](const Onv& m) { out.push_back(m); });
    return out;
}

std::size_t connected_count(int k, int n_alpha, int n_beta) noexcept {
    auto c2 = [](std::size_t x) { return x * (x > 0 ? x - 1 : 0) / 2; };
    const std::size_t oa = static_cast<std::size_t>(n_alpha), ob = static_cast<std::size_t>(n_beta);
    const std::size_t va = static_cast<std::size_t>(k - n_alpha), vb = static_cast<std::size_t>(k - n_beta);
    return 1 + oa * va + ob * vb + c2(oa) * c2(va) + c2(ob) * c2(vb) + oa * va * ob * vb;
}

std::vector<std::uint8_t> to_tokens(const Onv& n) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n.size() / 2));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<std::uint8_t>(token_at(n, static_cast<int>(k)));
    return out;
}

Onv from_tokens(std::span<const std::uint8_t> tokens) {
    Onv o(static_cast<int>(2 * tokens.size()));
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (tokens[k] > 3) throw std::invalid_argument("from_tokens: token outside {0,1,2,3}");
        set_token(o, static_cast<int>(k), tokens[k]);
    }
    return o;
}

} // namespace nqs
