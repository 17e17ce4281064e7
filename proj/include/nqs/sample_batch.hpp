// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nqs/onv.hpp>

#include <cstdint>
#include <numeric>
#include <vector>

namespace nqs {

/**
 * Unique autoregressive prefixes with multiplicities.
 *
 * A prefix of depth t fixes the tokens of spatial orbitals 0..t-1; its Onv
 * has no bits set beyond 2t. At depth K the prefixes are complete
 * configurations. logp is the accumulated log-probability of each prefix.
 */
struct SampleBatch {
    int depth = 0;
    std::vector<Onv> prefixes;
    std::vector<std::uint64_t> counts;
    std::vector<double> logp;

    [[nodiscard]] std::size_t size() const noexcept { return prefixes.size(); }
    [[nodiscard]] bool empty() const noexcept { return prefixes.empty(); }

    [[nodiscard]] std::uint64_t total_count() const noexcept {
        return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    }

    void push_back(const Onv& prefix, std::uint64_t count, double log_prob) {
        prefixes.push_back(prefix);
        counts.push_back(count);
        logp.push_back(log_prob);
    }

    void append(const SampleBatch& other) {
        prefixes.insert(prefixes.end(), other.prefixes.begin(), other.prefixes.end());
        counts.insert(counts.end(), other.counts.begin(), other.counts.end());
        logp.insert(logp.end(), other.logp.begin(), other.logp.end());
    }

    /// Contiguous slice [begin, end).
    [[nodiscard]] SampleBatch slice(std::size_t begin, std::size_t end) const {
        SampleBatch out;
        out.depth = depth;
        out.prefixes.assign(prefixes.begin() + static_cast<std::ptrdiff_t>(begin),
                            prefixes.begin() + static_cast<std::ptrdiff_t>(end));
        out.counts.assign(counts.begin() + static_cast<std::ptrdiff_t>(begin),
                          counts.begin() + static_cast<std::ptrdiff_t>(end));
        out.logp.assign(logp.begin() + static_cast<std::ptrdiff_t>(begin),
                        logp.begin() + static_cast<std::ptrdiff_t>(end));
        return out;
    }
};

} // namespace nqs
