// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cluster.hpp
 * @brief In-process virtual-rank cluster: process groups, collectives,
 * multi-stage workload partitioning and density-aware load balance.
 *
 * Ranks run in lockstep in one process. Every rank samples the same
 * quadtree down to each split layer (draws are keyed by prefix, so they
 * agree), then keeps its contiguous slice of the layer.
 */

#pragma once

#include <nqs/sample_batch.hpp>
#include <nqs/sampler.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nqs {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SimulationFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PartitionPlan {
    std::vector<int> group_sizes{1};
    std::vector<int> split_layers{1};

    [[nodiscard]] int n_ranks() const noexcept;
    /// Throws ConfigError on mismatched lengths, non-positive sizes or layers outside [1, K).
    void validate(int n_spatial) const;
};

struct RankTopology {
    int rank = 0;
    /// Per stage: ranks across which the layer is split (size G_n[i]).
    std::vector<std::vector<int>> vert;
    /// Per stage: ranks that keep the same slice after the split.
    std::vector<std::vector<int>> horiz;
};

/// Throws ConfigError if a stage's group size is not divisible by its G_n entry.
[[nodiscard]] RankTopology init_groups(int rank, const PartitionPlan& plan);

/// Synchronous scalar collectives; every member must have posted before a reduction.
class CollectiveBoard {
public:
    explicit CollectiveBoard(int n_ranks);

    void post(int rank, double value);
    void clear();
    /// Throws SimulationFault if a member of the group has not posted.
    [[nodiscard]] double all_reduce_mean(std::span<const int> group) const;
    /// Values in group order; throws SimulationFault on a missing member.
    [[nodiscard]] std::vector<double> all_gather(std::span<const int> group) const;

private:
    std::vector<std::optional<double>> slots_;
};

/// [begin, end) ranges into a batch.
using Slices = std::vector<std::pair<std::size_t, std::size_t>>;

/// Contiguous cuts: cut j falls after the first item where the running weight reaches total * j / parts.
[[nodiscard]] Slices greedy_partition(std::span<const double> weights, int parts);

/**
 * Split by counts, scale each segment's weights by its member's density,
 * split again. warnings (if given) receives a note when some slice is empty.
 */
[[nodiscard]] Slices partition_weighted(const SampleBatch& batch, std::span<const double> densities, int parts,
                                        std::vector<std::string>* warnings = nullptr);

enum class BalanceStrategy { DensityAware, CountSplit, UniqueSplit };

/// Previous-iteration unique/count ratio per rank; starts at 1.
struct DensityState {
    std::vector<double> density;

    explicit DensityState(int n_ranks = 1) : density(static_cast<std::size_t>(n_ranks), 1.0) {}
};

struct ParallelSamplingOptions {
    SamplerOptions sampler;
    BalanceStrategy strategy = BalanceStrategy::DensityAware;
};

struct ParallelSamplingResult {
    std::vector<SampleBatch> leaves;
    std::vector<std::size_t> unique;
    std::vector<std::uint64_t> counts;
    std::vector<SamplerStats> stats;
    /// Per rank: breadth held at each split layer before and after the cut.
    std::vector<std::vector<std::size_t>> pre_split_unique;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t max_unique() const;
    [[nodiscard]] std::size_t min_unique() const;
    /// Leaves of all ranks concatenated in rank order.
    [[nodiscard]] SampleBatch merged() const;
};

/// Sample as every virtual rank and update `state` with each rank's new density.
[[nodiscard]] ParallelSamplingResult run_parallel_sampling(const ConditionalModel& model, const PartitionPlan& plan,
                                                           std::uint64_t n_count, const SampleKey& key,
                                                           DensityState& state,
                                                           const ParallelSamplingOptions& options = {});

/**
 * Synthetic unconstrained quadtree with region-dependent spread: under a
 * first token of 0 every later token is uniform, elsewhere one token takes
 * most of the mass. Used for load-balance studies.
 */
class SkewedTreeModel final : public ConditionalModel {
public:
    SkewedTreeModel(int n_spatial, Distribution root, double peak);

    [[nodiscard]] int n_spatial() const override { return n_spatial_; }
    [[nodiscard]] int n_alpha() const override { return n_spatial_; }
    [[nodiscard]] int n_beta() const override { return n_spatial_; }
    void conditionals(const SampleBatch& batch, std::span<Distribution> out) const override;

private:
    int n_spatial_;
    Distribution root_;
    double peak_;
};

} // namespace nqs
