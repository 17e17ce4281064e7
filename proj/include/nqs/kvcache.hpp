// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file kvcache.hpp
 * @brief Fixed-capacity key/value cache pool for autoregressive sampling.
 *
 * Storage is allocated once: per layer, K and V arrays of
 * [capacity x max_seq x d_model] doubles, row-major by cache row. Each row
 * also remembers the input token fed at every cached position so evicted
 * rows can be rebuilt.
 *
 * Layer expansion is two-phase. plan_expansion() turns per-row child counts
 * into an immutable MovePlan; apply_expansion() executes it. Rows whose
 * children land beyond the capacity are not materialized, and the caller
 * keeps their prefixes for later recomputation.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace nqs {

class CacheError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Contiguous block of rows copied from [src, src + rows) to [dst, dst + rows).
struct CopyRange {
    std::size_t src = 0;
    std::size_t dst = 0;
    std::size_t rows = 0;

    bool operator==(const CopyRange&) const = default;
};

struct MovePlan {
    std::uint64_t epoch = 0;
    std::size_t live_before = 0;
    /// Child rows materialized: min(sum of multiplicities, capacity).
    std::size_t planned_rows = 0;
    /// Children that did not fit and must be resampled from their prefixes.
    std::size_t deferred_rows = 0;
    /// Leading rows with multiplicity 1 that stay where they are.
    std::size_t in_place_rows = 0;
    /// Executed in order; every source is read before it is overwritten.
    std::vector<CopyRange> moves;
};

/// Token prefixes of evicted rows, enough to rebuild their K/V entries.
struct RecomputeTicket {
    std::vector<std::vector<std::uint8_t>> inputs;
};

struct CacheCounters {
    std::size_t bytes_moved = 0;
    std::size_t rows_moved = 0;
    std::size_t recomputes = 0;
    std::size_t peak_rows = 0;
    std::size_t evicted_rows = 0;
};

class CachePool {
public:
    CachePool(int n_layers, int max_seq, int d_model, std::size_t capacity);

    [[nodiscard]] int n_layers() const noexcept { return n_layers_; }
    [[nodiscard]] int max_seq() const noexcept { return max_seq_; }
    [[nodiscard]] int d_model() const noexcept { return d_model_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] std::size_t live_rows() const noexcept { return live_; }
    [[nodiscard]] int valid_len(std::size_t row) const { return valid_len_.at(row); }
    [[nodiscard]] std::uint64_t epoch() const noexcept { return epoch_; }
    [[nodiscard]] const CacheCounters& counters() const noexcept { return counters_; }
    void reset_counters() noexcept { counters_ = {}; }

    /// Bytes held by the K/V/token arrays; fixed at construction.
    [[nodiscard]] std::size_t allocated_bytes() const noexcept;
    /// Bytes one row occupies across all layers, K and V, at full length.
    [[nodiscard]] std::size_t row_bytes() const noexcept;

    /// Drop every row and make `rows` empty rows live.
    void activate(std::size_t rows);

    /// Cached keys of (layer, row); valid_len(row) * d_model entries.
    [[nodiscard]] const double* keys(int layer, std::size_t row) const noexcept;
    [[nodiscard]] const double* values(int layer, std::size_t row) const noexcept;
    [[nodiscard]] std::span<const std::uint8_t> inputs(std::size_t row) const;

    /**
     * Append one position to every live row. keys/values are laid out
     * [n_layers][live_rows][d_model]; tokens holds the input token per row.
     * Throws CacheError when no rows are live or a row is full.
     */
    void append(std::span<const double> keys, std::span<const double> values, std::span<const std::uint8_t> tokens);

    /// Throws std::invalid_argument if multiplicities.size() != live_rows() or an entry exceeds 4.
    [[nodiscard]] MovePlan plan_expansion(std::span<const int> multiplicities) const;
    /// Throws CacheError if the pool changed since the plan was made.
    void apply_expansion(const MovePlan& plan);

    /// Free rows [begin, end); later rows shift down to keep the live set contiguous.
    RecomputeTicket evict_and_mark(std::size_t begin, std::size_t end);
    /// Record that a ticket's rows were rebuilt.
    void note_recompute(std::size_t times = 1) noexcept { counters_.recomputes += times; }

private:
    [[nodiscard]] std::size_t offset(int layer, std::size_t row) const noexcept {
        return (static_cast<std::size_t>(layer) * capacity_ + row) * static_cast<std::size_t>(max_seq_) *
               static_cast<std::size_t>(d_model_);
    }
    void move_rows(const CopyRange& r);

    int n_layers_;
    int max_seq_;
    int d_model_;
    std::size_t capacity_;
    std::size_t live_ = 0;
    std::uint64_t epoch_ = 0;
    std::vector<double> k_;
    std::vector<double> v_;
    std::vector<std::uint8_t> tokens_;
    std::vector<int> valid_len_;
    CacheCounters counters_;
};

} // namespace nqs
