// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/sampler.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace nqs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept { return splitmix64(h ^ splitmix64(v)); }

} // namespace

std::uint8_t valid_mask(int alpha_used, int beta_used, int t, int n_spatial, int n_alpha, int n_beta) {
    const int remaining = n_spatial - t - 1;
    std::uint8_t mask = 0;
    for (int tok = 0; tok < 4; ++tok) {
        const int a = alpha_used + (tok & 1);
        const int b = beta_used + (tok >> 1);
        if (a <= n_alpha && b <= n_beta && n_alpha - a <= remaining && n_beta - b <= remaining)
            mask |= static_cast<std::uint8_t>(1u << tok);
    }
    return mask;
}

std::uint8_t prefix_mask(const Onv& prefix, int t, int n_spatial, int n_alpha, int n_beta) {
    int a = 0, b = 0;
    for (int k = 0; k < t; ++k) {
        const int tok = token_at(prefix, k);
        a += tok & 1;
        b += tok >> 1;
    }
    return valid_mask(a, b, t, n_spatial, n_alpha, n_beta);
}

void ConditionalModel::cached_conditionals(CachePool&, const SampleBatch&, std::span<Distribution>) const {
    throw std::logic_error("conditional model has no cache path");
}

void ConditionalModel::prefill(CachePool&, const SampleBatch&) const {
    throw std::logic_error("conditional model has no cache path");
}

std::uint64_t draw_key(const SampleKey& key, int depth, const Onv& prefix) noexcept {
    std::uint64_t h = combine(splitmix64(key.seed), key.iteration);
    h = combine(h, static_cast<std::uint64_t>(depth));
    for (auto c : prefix.chunks()) h = combine(h, c);
    return h;
}

std::array<std::uint64_t, 4> multinomial_draw(std::uint64_t count, const Distribution& p, std::uint64_t stream_key) {
    std::array<std::uint64_t, 4> out{0, 0, 0, 0};
    int last = -1;
    for (int j = 0; j < 4; ++j)
        if (p[static_cast<std::size_t>(j)] > 0.0) last = j;
    if (last < 0 || count == 0) return out;
    std::mt19937_64 rng(stream_key);
    std::uint64_t remaining = count;
    double mass = 1.0;
    for (int j = 0; j <= last && remaining > 0; ++j) {
        const double pj = p[static_cast<std::size_t>(j)];
        if (pj <= 0.0) continue;
        if (j == last) {
            out[static_cast<std::size_t>(j)] = remaining;
            break;
        }
        const double q = std::clamp(pj / mass, 0.0, 1.0);
        std::binomial_distribution<std::uint64_t> binom(remaining, q);
        const std::uint64_t n = binom(rng);
        out[static_cast<std::size_t>(j)] = n;
        remaining -= n;
        mass -= pj;
    }
    return out;
}

SampleBatch sample_layer(const SampleBatch& batch, std::span<const Distribution> conditionals, const SampleKey& key,
                         std::vector<int>* multiplicities) {
    if (conditionals.size() != batch.size()) throw std::invalid_argument("sample_layer: one distribution per prefix");
    SampleBatch out;
    out.depth = batch.depth + 1;
    if (multiplicities) multiplicities->assign(batch.size(), 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Distribution& p = conditionals[i];
        double sum = 0.0;
        for (double x : p) {
            if (!(x >= 0.0)) throw std::invalid_argument("sample_layer: negative or NaN probability");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("sample_layer: conditional row " + std::to_string(i) + " sums to " +
                                        std::to_string(sum));
        const auto draws = multinomial_draw(batch.counts[i], p, draw_key(key, batch.depth, batch.prefixes[i]));
        for (int j = 0; j < 4; ++j) {
            const auto n = draws[static_cast<std::size_t>(j)];
            if (n == 0) continue;
            Onv child = batch.prefixes[i];
            set_token(child, batch.depth, j);
            out.push_back(child, n, batch.logp[i] + std::log(p[static_cast<std::size_t>(j)]));
            if (multiplicities) ++(*multiplicities)[i];
        }
    }
    return out;
}

void SamplerStats::merge(const SamplerStats& other) {
    if (switch_layer < 0 || (other.switch_layer >= 0 && other.switch_layer < switch_layer))
        switch_layer = other.switch_layer;
    dfs_chunks += other.dfs_chunks;
    recomputes += other.recomputes;
    peak_live_rows = std::max(peak_live_rows, other.peak_live_rows);
    pool_capacity = std::max(pool_capacity, other.pool_capacity);
    pool_bytes_start = std::max(pool_bytes_start, other.pool_bytes_start);
    pool_bytes_end = std::max(pool_bytes_end, other.pool_bytes_end);
    bytes_moved += other.bytes_moved;
    peak_unique = std::max(peak_unique, other.peak_unique);
    trace.insert(trace.end(), other.trace.begin(), other.trace.end());
}

std::vector<std::uint64_t> valid_prefix_counts(int n_spatial, int n_alpha, int n_beta) {
    std::vector<std::uint64_t> out(static_cast<std::size_t>(n_spatial) + 1, 0);
    for (int t = 0; t <= n_spatial; ++t) {
        double total = 0.0;
        for (int a = 0; a <= std::min(t, n_alpha); ++a)
            for (int b = 0; b <= std::min(t, n_beta); ++b) {
                if (n_alpha - a > n_spatial - t || n_beta - b > n_spatial - t) continue;
                total += std::exp(std::lgamma(t + 1.0) - std::lgamma(a + 1.0) - std::lgamma(t - a + 1.0) +
                                  std::lgamma(t + 1.0) - std::lgamma(b + 1.0) - std::lgamma(t - b + 1.0));
            }
        out[static_cast<std::size_t>(t)] =
            total >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(std::llround(total));
    }
    return out;
}

std::size_t pool_capacity_for(std::size_t k, std::uint64_t n_count, int n_spatial, int n_alpha, int n_beta) {
    const auto widths = valid_prefix_counts(n_spatial, n_alpha, n_beta);
    const std::uint64_t widest = *std::max_element(widths.begin(), widths.end());
    const std::uint64_t cap = std::min<std::uint64_t>({static_cast<std::uint64_t>(k), n_count, widest});
    return static_cast<std::size_t>(std::max<std::uint64_t>(cap, 1));
}

SampleBatch root_batch(int n_spatial, std::uint64_t n_count) {
    SampleBatch b;
    b.depth = 0;
    if (n_count > 0) b.push_back(Onv(2 * n_spatial), n_count, 0.0);
    return b;
}

SampleBatch sample_from(const ConditionalModel& model, const SampleBatch& start, int target_depth,
                        const SampleKey& key, const SamplerOptions& options, SamplerStats* stats) {
    if (target_depth < start.depth || target_depth > model.n_spatial())
        throw std::invalid_argument("sample_from: target depth out of range");
    SamplerStats st;
    SampleBatch result;
    result.depth = target_depth;
    if (start.empty() || start.total_count() == 0) {
        if (stats) stats->merge(st);
        return result;
    }
    const std::size_t k = std::max<std::size_t>(options.k, 1);
    const bool use_cache = options.use_cache && model.has_cache();
    std::optional<CachePool> pool;
    if (use_cache) {
        const auto shape = model.cache_shape();
        const std::size_t cap =
            pool_capacity_for(k, start.total_count(), model.n_spatial(), model.n_alpha(), model.n_beta());
        pool.emplace(shape[0], shape[1], shape[2], cap);
        st.pool_capacity = cap;
        st.pool_bytes_start = pool->allocated_bytes();
    }

    std::vector<SampleBatch> stack;
    auto defer = [&](const SampleBatch& b) {
        // chunks of at most k rows after the first, pushed so they pop in order
        for (std::size_t end = b.size(); end > k;) {
            const std::size_t begin = k + ((end - k - 1) / k) * k;
            stack.push_back(b.slice(begin, end));
            end = begin;
        }
    };
    auto record = [&](const SampleBatch& b, bool dfs) {
        st.peak_unique = std::max(st.peak_unique, b.size());
        if (options.record_trace) st.trace.push_back({b.depth, b.size(), b.total_count(), dfs});
    };

    SampleBatch current;
    if (start.size() > k) {
        st.switch_layer = start.depth;
        current = start.slice(0, k);
        defer(start);
    } else {
        current = start;
        if (start.size() == k) st.switch_layer = start.depth;
    }
    st.dfs_chunks = 1;
    bool popped = false;
    while (true) {
        if (use_cache) {
            model.prefill(*pool, current);
            if (popped) pool->note_recompute();
        }
        st.peak_live_rows = std::max(st.peak_live_rows, current.size());
        std::vector<Distribution> probs;
        std::vector<int> mult;
        while (current.depth < target_depth) {
            probs.resize(current.size());
            if (use_cache) model.cached_conditionals(*pool, current, probs);
            else model.conditionals(current, probs);
            SampleBatch children = sample_layer(current, probs, key, &mult);
            record(children, st.switch_layer >= 0);
            if (children.size() >= k && st.switch_layer < 0) st.switch_layer = children.depth;
            if (use_cache) pool->apply_expansion(pool->plan_expansion(mult));
            if (children.size() > k) {
                current = children.slice(0, k);
                defer(children);
            } else {
                current = std::move(children);
            }
            st.peak_live_rows = std::max(st.peak_live_rows, current.size());
        }
        result.append(current);
        if (use_cache && pool->live_rows() > 0) (void)pool->evict_and_mark(0, pool->live_rows());
        if (stack.empty()) break;
        current = std::move(stack.back());
        stack.pop_back();
        ++st.dfs_chunks;
        popped = true;
    }
    if (use_cache) {
        st.recomputes = pool->counters().recomputes;
        st.bytes_moved = pool->counters().bytes_moved;
        st.peak_live_rows = std::max(st.peak_live_rows, pool->counters().peak_rows);
        st.pool_bytes_end = pool->allocated_bytes();
    } else {
        st.recomputes = st.dfs_chunks - 1;
    }
    if (stats) stats->merge(st);
    return result;
}

SampleBatch hybrid_sample(const ConditionalModel& model, std::uint64_t n_count, const SampleKey& key,
                          const SamplerOptions& options, SamplerStats* stats) {
    return sample_from(model, root_batch(model.n_spatial(), n_count), model.n_spatial(), key, options, stats);
}

std::string trace_lines(const SamplerStats& stats) {
    std::ostringstream out;
    for (const auto& t : stats.trace)
        out << nlohmann::json{{"depth", t.depth}, {"unique", t.unique}, {"counts", t.counts}, {"dfs", t.dfs}}.dump()
            << '\n';
    out << nlohmann::json{{"switch_layer", stats.switch_layer},
                          {"dfs_chunks", stats.dfs_chunks},
                          {"recomputes", stats.recomputes},
                          {"peak_live_rows", stats.peak_live_rows},
                          {"pool_capacity", stats.pool_capacity},
                          {"bytes_moved", stats.bytes_moved}}
               .dump()
        << '\n';
    return out.str();
}

ExactConditionals::ExactConditionals(int n_spatial, int n_alpha, int n_beta, std::span<const Onv> states,
                                     std::span<const double> probabilities)
    : n_spatial_(n_spatial), n_alpha_(n_alpha), n_beta_(n_beta), states_(states.begin(), states.end()),
      probs_(probabilities.begin(), probabilities.end()) {
    if (states_.size() != probs_.size()) throw std::invalid_argument("ExactConditionals: size mismatch");
}

void ExactConditionals::conditionals(const SampleBatch& batch, std::span<Distribution> out) const {
    const int t = batch.depth;
    if (t >= n_spatial_) throw std::invalid_argument("conditionals: prefix length must be below K");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Onv& pre = batch.prefixes[i];
        Distribution m{0.0, 0.0, 0.0, 0.0};
        for (std::size_t s = 0; s < states_.size(); ++s) {
            bool match = true;
            for (int pos = 0; pos < t && match; ++pos) match = token_at(states_[s], pos) == token_at(pre, pos);
            if (match) m[static_cast<std::size_t>(token_at(states_[s], t))] += probs_[s];
        }
        const std::uint8_t mask = prefix_mask(pre, t, n_spatial_, n_alpha_, n_beta_);
        for (int j = 0; j < 4; ++j)
            if (!((mask >> j) & 1)) m[static_cast<std::size_t>(j)] = 0.0;
        double total = m[0] + m[1] + m[2] + m[3];
        if (total <= 0.0) {
            for (int j = 0; j < 4; ++j) m[static_cast<std::size_t>(j)] = (mask >> j) & 1 ? 1.0 : 0.0;
            total = m[0] + m[1] + m[2] + m[3];
        }
        for (double& x : m) x /= total;
        out[i] = m;
    }
}

} // namespace nqs
