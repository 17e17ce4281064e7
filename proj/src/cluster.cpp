// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/cluster.hpp>

#include <algorithm>
#include <numeric>

namespace nqs {

int PartitionPlan::n_ranks() const noexcept {
    int n = 1;
    for (int g : group_sizes) n *= g;
    return n;
}

void PartitionPlan::validate(int n_spatial) const {
    if (group_sizes.empty()) throw ConfigError("plan: group_sizes is empty");
    if (group_sizes.size() != split_layers.size())
        throw ConfigError("plan: group_sizes and split_layers must have the same length");
    for (int g : group_sizes)
        if (g < 1) throw ConfigError("plan: group sizes must be positive");
    for (std::size_t i = 0; i < split_layers.size(); ++i) {
        if (split_layers[i] < 1 || split_layers[i] >= n_spatial)
            throw ConfigError("plan: split layer " + std::to_string(split_layers[i]) + " outside [1, " +
                              std::to_string(n_spatial) + ")");
        if (i > 0 && split_layers[i] <= split_layers[i - 1])
            throw ConfigError("plan: split layers must be strictly increasing");
    }
}

RankTopology init_groups(int rank, const PartitionPlan& plan) {
    const int np = plan.n_ranks();
    if (rank < 0 || rank >= np) throw ConfigError("init_groups: rank out of range");
    RankTopology topo;
    topo.rank = rank;
    std::vector<int> group(static_cast<std::size_t>(np));
    std::iota(group.begin(), group.end(), 0);
    for (int g : plan.group_sizes) {
        const int ws = static_cast<int>(group.size());
        if (g < 1 || ws % g != 0)
            throw ConfigError("init_groups: group of " + std::to_string(ws) + " ranks cannot split " +
                              std::to_string(g) + " ways");
        const int s = ws / g;
        const int li = static_cast<int>(std::find(group.begin(), group.end(), rank) - group.begin());
        std::vector<int> vert, horiz;
        for (int j = 0; j < g; ++j) vert.push_back(group[static_cast<std::size_t>(li % s + s * j)]);
        const int block = (li / s) * s;
        for (int j = 0; j < s; ++j) horiz.push_back(group[static_cast<std::size_t>(block + j)]);
        topo.vert.push_back(vert);
        topo.horiz.push_back(horiz);
        group = std::move(horiz);
    }
    return topo;
}

CollectiveBoard::CollectiveBoard(int n_ranks) : slots_(static_cast<std::size_t>(n_ranks)) {}

void CollectiveBoard::post(int rank, double value) { slots_.at(static_cast<std::size_t>(rank)) = value; }

void CollectiveBoard::clear() { std::fill(slots_.begin(), slots_.end(), std::nullopt); }

std::vector<double> CollectiveBoard::all_gather(std::span<const int> group) const {
    std::vector<double> out;
    out.reserve(group.size());
    for (int r : group) {
        if (r < 0 || static_cast<std::size_t>(r) >= slots_.size() || !slots_[static_cast<std::size_t>(r)])
            throw SimulationFault("collective: rank " + std::to_string(r) + " never arrived (deadlock)");
        out.push_back(*slots_[static_cast<std::size_t>(r)]);
    }
    return out;
}

double CollectiveBoard::all_reduce_mean(std::span<const int> group) const {
    if (group.empty()) throw SimulationFault("collective: empty group");
    const auto values = all_gather(group);
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

Slices greedy_partition(std::span<const double> weights, int parts) {
    if (parts < 1) throw std::invalid_argument("partition: parts must be positive");
    const std::size_t n = weights.size();
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<std::size_t> cuts{0};
    std::size_t i = 0;
    double running = 0.0;
    for (int j = 1; j < parts; ++j) {
        const double target = total * j / parts;
        while (i < n && running < target) running += weights[i++];
        cuts.push_back(i);
    }
    cuts.push_back(n);
    Slices out;
    for (int j = 0; j < parts; ++j) out.emplace_back(cuts[static_cast<std::size_t>(j)], cuts[static_cast<std::size_t>(j) + 1]);
    return out;
}

Slices partition_weighted(const SampleBatch& batch, std::span<const double> densities, int parts,
                          std::vector<std::string>* warnings) {
    if (batch.empty()) throw std::invalid_argument("partition: empty batch");
    if (densities.size() != static_cast<std::size_t>(parts))
        throw std::invalid_argument("partition: one density per part required");
    std::vector<double> w(batch.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(batch.counts[i]);
    const Slices first = greedy_partition(w, parts);
    for (int j = 0; j < parts; ++j)
        for (std::size_t i = first[static_cast<std::size_t>(j)].first; i < first[static_cast<std::size_t>(j)].second; ++i)
            w[i] *= densities[static_cast<std::size_t>(j)];
    Slices out = greedy_partition(w, parts);
    if (warnings && static_cast<std::size_t>(parts) > batch.size())
        warnings->push_back("partition: " + std::to_string(parts) + " parts over " + std::to_string(batch.size()) +
                            " prefixes leaves some members empty");
    return out;
}

std::size_t ParallelSamplingResult::max_unique() const {
    return unique.empty() ? 0 : *std::max_element(unique.begin(), unique.end());
}

std::size_t ParallelSamplingResult::min_unique() const {
    return unique.empty() ? 0 : *std::min_element(unique.begin(), unique.end());
}

SampleBatch ParallelSamplingResult::merged() const {
    SampleBatch out;
    if (!leaves.empty()) out.depth = leaves.front().depth;
    for (const auto& b : leaves) out.append(b);
    return out;
}

ParallelSamplingResult run_parallel_sampling(const ConditionalModel& model, const PartitionPlan& plan,
                                             std::uint64_t n_count, const SampleKey& key, DensityState& state,
                                             const ParallelSamplingOptions& options) {
    plan.validate(model.n_spatial());
    const int np = plan.n_ranks();
    if (state.density.size() != static_cast<std::size_t>(np)) state.density.assign(static_cast<std::size_t>(np), 1.0);
    std::vector<RankTopology> topo;
    for (int r = 0; r < np; ++r) topo.push_back(init_groups(r, plan));

    ParallelSamplingResult res;
    const auto n = static_cast<std::size_t>(np);
    res.stats.resize(n);
    res.pre_split_unique.resize(n);
    std::vector<SampleBatch> batch(n, root_batch(model.n_spatial(), n_count));
    CollectiveBoard reduce_board(np), gather_board(np);

    // G_n = [1] is a single rank with nothing to split
    const bool trivial = np == 1;
    for (std::size_t stage = 0; stage < plan.group_sizes.size() && !trivial; ++stage) {
        const int layer = plan.split_layers[stage];
        const int parts = plan.group_sizes[stage];
        for (std::size_t r = 0; r < n; ++r) {
            batch[r] = sample_from(model, batch[r], layer, key, options.sampler, &res.stats[r]);
            res.pre_split_unique[r].push_back(batch[r].size());
        }
        reduce_board.clear();
        gather_board.clear();
        for (int r = 0; r < np; ++r) reduce_board.post(r, state.density[static_cast<std::size_t>(r)]);
        for (int r = 0; r < np; ++r)
            gather_board.post(r, reduce_board.all_reduce_mean(topo[static_cast<std::size_t>(r)].horiz[stage]));
        for (int r = 0; r < np; ++r) {
            const auto& vert = topo[static_cast<std::size_t>(r)].vert[stage];
            const auto me = static_cast<std::size_t>(std::find(vert.begin(), vert.end(), r) - vert.begin());
            SampleBatch& b = batch[static_cast<std::size_t>(r)];
            if (b.empty()) continue;
            Slices slices;
            switch (options.strategy) {
            case BalanceStrategy::DensityAware: {
                const auto dlst = gather_board.all_gather(vert);
                slices = partition_weighted(b, dlst, parts, &res.warnings);
                break;
            }
            case BalanceStrategy::CountSplit: {
                const std::vector<double> ones(static_cast<std::size_t>(parts), 1.0);
                slices = partition_weighted(b, ones, parts, &res.warnings);
                break;
            }
            case BalanceStrategy::UniqueSplit: {
                const std::vector<double> unit(b.size(), 1.0);
                slices = greedy_partition(unit, parts);
                break;
            }
            }
            b = b.slice(slices[me].first, slices[me].second);
        }
    }

    res.leaves.resize(n);
    res.unique.resize(n);
    res.counts.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        res.leaves[r] = sample_from(model, batch[r], model.n_spatial(), key, options.sampler, &res.stats[r]);
        res.unique[r] = res.leaves[r].size();
        res.counts[r] = res.leaves[r].total_count();
        if (res.counts[r] > 0)
            state.density[r] = static_cast<double>(res.unique[r]) / static_cast<double>(res.counts[r]);
    }
    return res;
}

SkewedTreeModel::SkewedTreeModel(int n_spatial, Distribution root, double peak)
    : n_spatial_(n_spatial), root_(root), peak_(peak) {
    if (n_spatial < 1) throw std::invalid_argument("SkewedTreeModel: need at least one orbital");
    if (peak < 0.25 || peak > 1.0) throw std::invalid_argument("SkewedTreeModel: peak must lie in [0.25, 1]");
}

void SkewedTreeModel::conditionals(const SampleBatch& batch, std::span<Distribution> out) const {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.depth == 0) {
            out[i] = root_;
            continue;
        }
        if (token_at(batch.prefixes[i], 0) == 0) {
            out[i] = {0.25, 0.25, 0.25, 0.25};
            continue;
        }
        const auto favored = static_cast<std::size_t>(batch.prefixes[i].hash() & 3);
        Distribution p;
        p.fill((1.0 - peak_) / 3.0);
        p[favored] = peak_;
        out[i] = p;
    }
}

} // namespace nqs
