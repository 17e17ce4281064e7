// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file sampler.hpp
 * @brief Autoregressive unique-sample generation with pruning and hybrid BFS/DFS.
 *
 * Child counts for a prefix are a multinomial draw whose random stream is
 * keyed by (seed, iteration, depth, prefix bits). The same prefix therefore
 * gets the same children no matter which rank, chunk or traversal order
 * reaches it. Sampling from the root to the leaves with any chunk size k
 * produces the same leaves in the same (lexicographic token) order.
 */

#pragma once

#include <nqs/kvcache.hpp>
#include <nqs/onv.hpp>
#include <nqs/sample_batch.hpp>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace nqs {

/// Probabilities of tokens {vac, alpha, beta, alpha+beta} at one position.
using Distribution = std::array<double, 4>;

/// Bit j set iff token j keeps (n_alpha, n_beta) reachable after position t.
[[nodiscard]] std::uint8_t valid_mask(int alpha_used, int beta_used, int t, int n_spatial, int n_alpha, int n_beta);

/// valid_mask for the next position of a prefix of depth t.
[[nodiscard]] std::uint8_t prefix_mask(const Onv& prefix, int t, int n_spatial, int n_alpha, int n_beta);

/// Source of masked, renormalized conditionals for the sampler.
class ConditionalModel {
public:
    virtual ~ConditionalModel() = default;

    [[nodiscard]] virtual int n_spatial() const = 0;
    [[nodiscard]] virtual int n_alpha() const = 0;
    [[nodiscard]] virtual int n_beta() const = 0;

    /// Stateless: out[i] = p(token_t | prefix_i) for t = batch.depth.
    virtual void conditionals(const SampleBatch& batch, std::span<Distribution> out) const = 0;

    [[nodiscard]] virtual bool has_cache() const { return false; }
    /// Shape of a CachePool usable with this model: {n_layers, max_seq, d_model}.
    [[nodiscard]] virtual std::array<int, 3> cache_shape() const { return {0, 0, 0}; }
    /// As conditionals(), reading and extending pool rows that hold the batch prefixes.
    virtual void cached_conditionals(CachePool& pool, const SampleBatch& batch, std::span<Distribution> out) const;
    /// Rebuild the pool so row i holds the cache of batch prefix i.
    virtual void prefill(CachePool& pool, const SampleBatch& batch) const;
};

/// Identifies one sampling pass; child draws are a pure function of key and prefix.
struct SampleKey {
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
};

/// Deterministic 64-bit key of a (key, depth, prefix) triple.
[[nodiscard]] std::uint64_t draw_key(const SampleKey& key, int depth, const Onv& prefix) noexcept;

/// Multinomial split of `count` trials over p, drawn from the stream `stream_key`.
[[nodiscard]] std::array<std::uint64_t, 4> multinomial_draw(std::uint64_t count, const Distribution& p,
                                                            std::uint64_t stream_key);

/**
 * Children of every prefix, in parent order then token order. multiplicities
 * (if given) receives the number of surviving children per parent.
 * Throws std::invalid_argument on a row whose sum differs from 1 by more than 1e-9.
 */
[[nodiscard]] SampleBatch sample_layer(const SampleBatch& batch, std::span<const Distribution> conditionals,
                                       const SampleKey& key, std::vector<int>* multiplicities = nullptr);

inline constexpr std::size_t kUnboundedChunk = std::numeric_limits<std::size_t>::max();

struct SamplerOptions {
    /// BFS/DFS threshold and cache-pool capacity.
    std::size_t k = kUnboundedChunk;
    bool use_cache = true;
    bool record_trace = false;
};

struct LayerTrace {
    int depth = 0;
    std::size_t unique = 0;
    std::uint64_t counts = 0;
    bool dfs = false;
};

struct SamplerStats {
    /// First depth at which the breadth reached k; -1 if never.
    int switch_layer = -1;
    std::size_t dfs_chunks = 0;
    std::size_t recomputes = 0;
    std::size_t peak_live_rows = 0;
    std::size_t pool_capacity = 0;
    std::size_t pool_bytes_start = 0;
    std::size_t pool_bytes_end = 0;
    std::size_t bytes_moved = 0;
    /// Largest breadth seen before the first split layer, per sample_from call.
    std::size_t peak_unique = 0;
    std::vector<LayerTrace> trace;

    void merge(const SamplerStats& other);
};

/// Rows a pool needs for a pass: min(k, n_count, widest valid prefix layer).
[[nodiscard]] std::size_t pool_capacity_for(std::size_t k, std::uint64_t n_count, int n_spatial, int n_alpha,
                                            int n_beta);

/// Number of valid prefixes at each depth 0..K.
[[nodiscard]] std::vector<std::uint64_t> valid_prefix_counts(int n_spatial, int n_alpha, int n_beta);

/**
 * Sample from `start` down to target_depth. Runs BFS while the breadth stays
 * within k; wider layers are cut into chunks of at most k rows, the first
 * driven on and the rest stacked, each chunk finished before the next is
 * popped. Output is in lexicographic token order.
 */
[[nodiscard]] SampleBatch sample_from(const ConditionalModel& model, const SampleBatch& start, int target_depth,
                                      const SampleKey& key, const SamplerOptions& options = {},
                                      SamplerStats* stats = nullptr);

/// sample_from the root (one empty prefix carrying n_count) to depth K.
[[nodiscard]] SampleBatch hybrid_sample(const ConditionalModel& model, std::uint64_t n_count, const SampleKey& key,
                                        const SamplerOptions& options = {}, SamplerStats* stats = nullptr);

/// Root batch: depth 0, one empty prefix with count n_count (empty if n_count = 0).
[[nodiscard]] SampleBatch root_batch(int n_spatial, std::uint64_t n_count);

/// One JSON object per line: depth, unique, counts, dfs, then a summary line.
[[nodiscard]] std::string trace_lines(const SamplerStats& stats);

/// Conditionals of a fixed normalized amplitude vector over valid ONVs.
class ExactConditionals final : public ConditionalModel {
public:
    /// probabilities[i] = |Psi(states[i])|^2; need not be normalized.
    ExactConditionals(int n_spatial, int n_alpha, int n_beta, std::span<const Onv> states,
                      std::span<const double> probabilities);

    [[nodiscard]] int n_spatial() const override { return n_spatial_; }
    [[nodiscard]] int n_alpha() const override { return n_alpha_; }
    [[nodiscard]] int n_beta() const override { return n_beta_; }
    void conditionals(const SampleBatch& batch, std::span<Distribution> out) const override;

private:
    int n_spatial_;
    int n_alpha_;
    int n_beta_;
    std::vector<Onv> states_;
    std::vector<double> probs_;
};

} // namespace nqs
