// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <nqs/cluster.hpp>

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

using namespace nqs;

namespace {

using Groups = std::vector<std::vector<int>>;

std::map<Onv, std::uint64_t> as_multiset(const SampleBatch& b) {
    std::map<Onv, std::uint64_t> m;
    for (std::size_t i = 0; i < b.size(); ++i) m[b.prefixes[i]] += b.counts[i];
    return m;
}

SampleBatch with_counts(const std::vector<std::uint64_t>& counts) {
    SampleBatch b;
    b.depth = 2;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        Onv p(8);
        set_token(p, 0, static_cast<int>(i % 4));
        set_token(p, 1, static_cast<int>(i / 4));
        b.push_back(p, counts[i], 0.0);
    }
    return b;
}

Ansatz random_ansatz(int k, int na, int nb, std::uint64_t seed) {
    Ansatz a(test::small_config(k, na, nb, seed));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.6);
    for (auto& t : a.params().tensors())
        for (double& v : t.value) v = g(rng);
    return a;
}

} // namespace

TEST_CASE("worked topology example") {
    const PartitionPlan plan{{2, 2, 3}, {6, 8, 10}};
    CHECK(plan.n_ranks() == 12);
    const RankTopology t = init_groups(0, plan);
    CHECK(t.vert == Groups{{0, 6}, {0, 3}, {0, 1, 2}});
    CHECK(t.horiz == Groups{{0, 1, 2, 3, 4, 5}, {0, 1, 2}, {0}});
}

TEST_CASE("a single group holds every rank") {
    const PartitionPlan plan{{1}, {1}};
    const RankTopology t = init_groups(0, plan);
    CHECK(t.vert == Groups{{0}});
    CHECK(t.horiz == Groups{{0}});
}

TEST_CASE("groups tile the ranks at every stage") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 60; ++trial) {
        PartitionPlan plan;
        plan.group_sizes.clear();
        plan.split_layers.clear();
        int np = 1;
        const int stages = 1 + static_cast<int>(rng() % 3);
        for (int s = 0; s < stages; ++s) {
            const int g = 1 + static_cast<int>(rng() % 4);
            if (np * g > 64) break;
            np *= g;
            plan.group_sizes.push_back(g);
            plan.split_layers.push_back(s + 1);
        }
        if (plan.group_sizes.empty()) continue;
        std::vector<RankTopology> topo;
        for (int r = 0; r < np; ++r) topo.push_back(init_groups(r, plan));
        int size = np;
        for (std::size_t s = 0; s < plan.group_sizes.size(); ++s) {
            const int g = plan.group_sizes[s];
            std::set<std::vector<int>> verts, horizs;
            for (int r = 0; r < np; ++r) {
                const auto& v = topo[static_cast<std::size_t>(r)].vert[s];
                const auto& h = topo[static_cast<std::size_t>(r)].horiz[s];
                CHECK(static_cast<int>(v.size()) == g);
                CHECK(static_cast<int>(h.size()) == size / g);
                CHECK(std::count(v.begin(), v.end(), r) == 1);
                CHECK(std::count(h.begin(), h.end(), r) == 1);
                if (s > 0) {
                    const auto& parent = topo[static_cast<std::size_t>(r)].horiz[s - 1];
                    for (int m : h) CHECK(std::count(parent.begin(), parent.end(), m) == 1);
                }
                verts.insert(v);
                horizs.insert(h);
            }
            for (const auto* family : {&verts, &horizs}) {
                std::vector<int> all;
                for (const auto& grp : *family) all.insert(all.end(), grp.begin(), grp.end());
                std::sort(all.begin(), all.end());
                std::vector<int> want(static_cast<std::size_t>(np));
                for (int r = 0; r < np; ++r) want[static_cast<std::size_t>(r)] = r;
                CHECK(all == want);
            }
            size /= g;
        }
    }
}

TEST_CASE("plan validation") {
    CHECK_THROWS_AS((PartitionPlan{{2, 2}, {2}}.validate(4)), ConfigError);
    CHECK_THROWS_AS((PartitionPlan{{2}, {4}}.validate(4)), ConfigError);
    CHECK_THROWS_AS((PartitionPlan{{2, 2}, {3, 2}}.validate(4)), ConfigError);
    CHECK_THROWS_AS((PartitionPlan{{0}, {1}}.validate(4)), ConfigError);
    CHECK_NOTHROW((PartitionPlan{{2, 2}, {2, 3}}.validate(4)));
    CHECK_THROWS_AS((void)init_groups(4, PartitionPlan{{2, 2}, {1, 2}}), ConfigError);
}

TEST_CASE("collectives") {
    CollectiveBoard board(4);
    for (int r = 0; r < 4; ++r) board.post(r, r);
    const std::vector<int> grp{0, 1, 2, 3};
    CHECK(board.all_gather(grp) == std::vector<double>{0, 1, 2, 3});
    CollectiveBoard pair(2);
    pair.post(0, 0.5);
    pair.post(1, 1.0);
    const std::vector<int> both{0, 1};
    CHECK(pair.all_reduce_mean(both) == 0.75);
    CollectiveBoard same(3);
    for (int r = 0; r < 3; ++r) same.post(r, 0.3);
    const std::vector<int> three{0, 1, 2};
    CHECK(same.all_reduce_mean(three) == doctest::Approx(0.3));
}

TEST_CASE("a missing member is a simulation fault") {
    CollectiveBoard board(3);
    board.post(0, 1.0);
    board.post(2, 1.0);
    const std::vector<int> grp{0, 1, 2};
    CHECK_THROWS_AS((void)board.all_reduce_mean(grp), SimulationFault);
    CHECK_THROWS_AS((void)board.all_gather(grp), SimulationFault);
    board.post(1, 1.0);
    CHECK(board.all_reduce_mean(grp) == 1.0);
    board.clear();
    CHECK_THROWS_AS((void)board.all_gather(grp), SimulationFault);
}

TEST_CASE("partition examples") {
    const SampleBatch even = with_counts({4, 4, 4, 4});
    const std::vector<double> ones{1.0, 1.0};
    const Slices s = partition_weighted(even, ones, 2);
    CHECK(s == Slices{{0, 2}, {2, 4}});
    const std::vector<double> one{1.0};
    CHECK(partition_weighted(even, one, 1) == Slices{{0, 4}});
}

namespace {

/// Smallest achievable max(left, right) scaled workload over all contiguous two-way cuts.
double best_two_way(const std::vector<double>& w) {
    double best = 1e300;
    for (std::size_t cut = 0; cut <= w.size(); ++cut) {
        double left = 0.0, right = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) (i < cut ? left : right) += w[i];
        best = std::min(best, std::max(left, right));
    }
    return best;
}

double split_cost(const std::vector<double>& w, std::size_t cut) {
    double left = 0.0, right = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) (i < cut ? left : right) += w[i];
    return std::max(left, right);
}

} // namespace

TEST_CASE("density scaling shifts the cut toward the sparser member") {
    // member 1 half as dense: its first-pass segment weighs half, so it takes more counts
    const SampleBatch b = with_counts({2, 2, 2, 2, 2, 2, 2, 2});
    const std::vector<double> d{1.0, 0.5};
    const Slices s = partition_weighted(b, d, 2);
    CHECK(s == Slices{{0, 3}, {3, 8}});
    const std::vector<double> scaled{2, 2, 2, 2, 1, 1, 1, 1};
    CHECK(split_cost(scaled, s[0].second) == best_two_way(scaled));
}

TEST_CASE("two prefixes leave no room to shift") {
    const SampleBatch b = with_counts({8, 8});
    const std::vector<double> d{1.0, 0.5};
    const Slices s = partition_weighted(b, d, 2);
    CHECK(s == Slices{{0, 1}, {1, 2}});
    CHECK(split_cost({8.0, 4.0}, s[0].second) == best_two_way({8.0, 4.0}));
}

TEST_CASE("two parts over one prefix warn") {
    const SampleBatch b = with_counts({10});
    std::vector<std::string> warnings;
    const std::vector<double> d{1.0, 1.0};
    const Slices s = partition_weighted(b, d, 2, &warnings);
    CHECK(s.size() == 2);
    CHECK(s[0].second - s[0].first + s[1].second - s[1].first == 1);
    CHECK(warnings.size() == 1);
}

TEST_CASE("slices are contiguous and cover the batch") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::uint64_t> counts(1 + rng() % 16);
        for (auto& c : counts) c = 1 + rng() % 50;
        const int parts = 1 + static_cast<int>(rng() % 5);
        std::vector<double> d(static_cast<std::size_t>(parts));
        for (double& x : d) x = 0.05 + static_cast<double>(rng() % 100) / 100.0;
        const Slices s = partition_weighted(with_counts(counts), d, parts);
        REQUIRE(static_cast<int>(s.size()) == parts);
        CHECK(s.front().first == 0);
        CHECK(s.back().second == counts.size());
        for (std::size_t j = 0; j + 1 < s.size(); ++j) CHECK(s[j].second == s[j + 1].first);
        for (const auto& [b, e] : s) CHECK(b <= e);
    }
}

TEST_CASE("one rank equals plain sampling") {
    const Ansatz a = random_ansatz(4, 2, 2, 1);
    DensityState state;
    const auto res = run_parallel_sampling(a, PartitionPlan{}, 10000, {3, 0}, state);
    const SampleBatch ref = hybrid_sample(a, 10000, {3, 0});
    REQUIRE(res.leaves.size() == 1);
    CHECK(res.leaves[0].prefixes == ref.prefixes);
    CHECK(res.leaves[0].counts == ref.counts);
    CHECK(state.density[0] == doctest::Approx(static_cast<double>(ref.size()) / 10000.0));
}

TEST_CASE("union of rank leaves equals the single-rank run on H4") {
    const Ansatz a = random_ansatz(4, 2, 2, 2);
    const std::vector<PartitionPlan> plans{{{2}, {2}}, {{2, 2}, {2, 3}}, {{3, 2}, {1, 2}}};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SampleBatch ref = hybrid_sample(a, 100000, {seed, 0});
        for (const PartitionPlan& plan : plans)
            for (BalanceStrategy strategy :
                 {BalanceStrategy::DensityAware, BalanceStrategy::CountSplit, BalanceStrategy::UniqueSplit}) {
                DensityState state(plan.n_ranks());
                state.density[0] = 0.3;
                const auto res = run_parallel_sampling(a, plan, 100000, {seed, 0}, state, {.strategy = strategy});
                CHECK(as_multiset(res.merged()) == as_multiset(ref));
                std::uint64_t total = 0;
                for (auto c : res.counts) total += c;
                CHECK(total == 100000);
            }
    }
}

TEST_CASE("density-aware balance beats count and unique splits on a skewed tree") {
    const SkewedTreeModel model(10, {0.4, 0.2, 0.2, 0.2}, 0.7);
    const PartitionPlan plan{{4, 4}, {3, 4}};
    auto max_unique = [&](BalanceStrategy s) {
        DensityState state(plan.n_ranks());
        std::size_t last = 0;
        for (std::uint64_t it = 0; it < 3; ++it)
            last = run_parallel_sampling(model, plan, 200000, {21, it}, state, {.strategy = s}).max_unique();
        return last;
    };
    const std::size_t density = max_unique(BalanceStrategy::DensityAware);
    const std::size_t count = max_unique(BalanceStrategy::CountSplit);
    const std::size_t unique = max_unique(BalanceStrategy::UniqueSplit);
    INFO("density " << density << " count " << count << " unique " << unique);
    CHECK(density <= count);
    CHECK(count <= unique);
}

TEST_CASE("multi-stage plans keep the pre-split breadth small") {
    const SkewedTreeModel model(10, {0.25, 0.25, 0.25, 0.25}, 0.9);
    DensityState one_state(16), multi_state(16);
    const auto one = run_parallel_sampling(model, PartitionPlan{{16}, {6}}, 100000, {5, 0}, one_state);
    const auto multi = run_parallel_sampling(model, PartitionPlan{{4, 4}, {2, 6}}, 100000, {5, 0}, multi_state);
    CHECK(as_multiset(one.merged()) == as_multiset(multi.merged()));
    std::size_t one_peak = 0, multi_peak = 0;
    for (const auto& r : one.pre_split_unique) one_peak = std::max(one_peak, r.back());
    for (const auto& r : multi.pre_split_unique) multi_peak = std::max(multi_peak, r.back());
    CHECK(multi_peak < one_peak);
}
