// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/kvcache.hpp>

#include <algorithm>
#include <cstring>
#include <string>

namespace nqs {

CachePool::CachePool(int n_layers, int max_seq, int d_model, std::size_t capacity)
    : n_layers_(n_layers), max_seq_(max_seq), d_model_(d_model), capacity_(capacity) {
    if (n_layers < 1 || max_seq < 1 || d_model < 1 || capacity < 1)
        throw std::invalid_argument("CachePool: all dimensions must be positive");
    const std::size_t per_layer = capacity * static_cast<std::size_t>(max_seq) * static_cast<std::size_t>(d_model);
    k_.assign(per_layer * static_cast<std::size_t>(n_layers), 0.0);
    v_.assign(per_layer * static_cast<std::size_t>(n_layers), 0.0);
    tokens_.assign(capacity * static_cast<std::size_t>(max_seq), 0);
    valid_len_.assign(capacity, 0);
}

std::size_t CachePool::allocated_bytes() const noexcept {
    return (k_.capacity() + v_.capacity()) * sizeof(double) + tokens_.capacity() + valid_len_.capacity() * sizeof(int);
}

std::size_t CachePool::row_bytes() const noexcept {
    return static_cast<std::size_t>(n_layers_) * 2 * static_cast<std::size_t>(max_seq_) *
               static_cast<std::size_t>(d_model_) * sizeof(double) +
           static_cast<std::size_t>(max_seq_);
}

void CachePool::activate(std::size_t rows) {
    if (rows > capacity_)
        throw CacheError("CachePool: " + std::to_string(rows) + " rows exceed capacity " + std::to_string(capacity_));
    live_ = rows;
    std::fill(valid_len_.begin(), valid_len_.end(), 0);
    counters_.peak_rows = std::max(counters_.peak_rows, live_);
    ++epoch_;
}

const double* CachePool::keys(int layer, std::size_t row) const noexcept { return k_.data() + offset(layer, row); }

const double* CachePool::values(int layer, std::size_t row) const noexcept { return v_.data() + offset(layer, row); }

std::span<const std::uint8_t> CachePool::inputs(std::size_t row) const {
    if (row >= live_) throw CacheError("CachePool: row " + std::to_string(row) + " is not live");
    return {tokens_.data() + row * static_cast<std::size_t>(max_seq_), static_cast<std::size_t>(valid_len_[row])};
}

void CachePool::append(std::span<const double> keys, std::span<const double> values,
                       std::span<const std::uint8_t> tokens) {
    if (live_ == 0) throw CacheError("CachePool: append with no live rows");
    const auto d = static_cast<std::size_t>(d_model_);
    const std::size_t need = static_cast<std::size_t>(n_layers_) * live_ * d;
    if (keys.size() != need || values.size() != need || tokens.size() != live_)
        throw CacheError("CachePool: append shape does not match live rows");
    for (std::size_t r = 0; r < live_; ++r)
        if (valid_len_[r] >= max_seq_) throw CacheError("CachePool: row " + std::to_string(r) + " is full");
    for (int l = 0; l < n_layers_; ++l)
        for (std::size_t r = 0; r < live_; ++r) {
            const std::size_t dst = offset(l, r) + static_cast<std::size_t>(valid_len_[r]) * d;
            const std::size_t src = (static_cast<std::size_t>(l) * live_ + r) * d;
            std::copy_n(keys.data() + src, d, k_.data() + dst);
            std::copy_n(values.data() + src, d, v_.data() + dst);
        }
    for (std::size_t r = 0; r < live_; ++r) {
        tokens_[r * static_cast<std::size_t>(max_seq_) + static_cast<std::size_t>(valid_len_[r])] = tokens[r];
        ++valid_len_[r];
    }
    ++epoch_;
}

MovePlan CachePool::plan_expansion(std::span<const int> multiplicities) const {
    if (multiplicities.size() != live_)
        throw std::invalid_argument("plan_expansion: expected " + std::to_string(live_) + " multiplicities, got " +
                                    std::to_string(multiplicities.size()));
    for (int m : multiplicities)
        if (m < 0 || m > 4) throw std::invalid_argument("plan_expansion: multiplicity outside 0..4");

    MovePlan plan;
    plan.epoch = epoch_;
    plan.live_before = live_;
    std::size_t total = 0;
    for (int m : multiplicities) total += static_cast<std::size_t>(m);
    plan.planned_rows = std::min(total, capacity_);
    plan.deferred_rows = total - plan.planned_rows;

    while (plan.in_place_rows < live_ && multiplicities[plan.in_place_rows] == 1 && plan.in_place_rows < capacity_)
        ++plan.in_place_rows;

    // Parent i owns destinations [off_i, off_i + m_i). When off_i + m_i <= i the
    // parent moves toward the front; those go first, ascending. The rest move
    // toward the back and go last, descending. Neither pass clobbers a source
    // that is still unread.
    std::vector<CopyRange> forward;
    std::vector<CopyRange> backward;
    std::size_t off = 0;
    for (std::size_t i = 0; i < live_ && off < plan.planned_rows; ++i) {
        const auto m = static_cast<std::size_t>(multiplicities[i]);
        const std::size_t end = std::min(off + m, plan.planned_rows);
        if (i >= plan.in_place_rows && m > 0) {
            if (off + m <= i) {
                for (std::size_t d = off; d < end; ++d) forward.push_back({i, d, 1});
            } else {
                for (std::size_t d = off; d < end; ++d)
                    if (d != i) backward.push_back({i, d, 1});
            }
        }
        off += m;
    }
    std::reverse(backward.begin(), backward.end());

    // merge runs of single-row copies that shift a contiguous block by one offset
    auto merge_into = [&plan](const std::vector<CopyRange>& list, bool ascending) {
        const std::size_t first = plan.moves.size();
        for (const CopyRange& c : list) {
            if (plan.moves.size() > first) {
                CopyRange& last = plan.moves.back();
                const bool same_shift = last.dst + c.src == last.src + c.dst;
                if (ascending && same_shift && c.src == last.src + last.rows) {
                    ++last.rows;
                    continue;
                }
                if (!ascending && same_shift && c.src + 1 == last.src) {
                    --last.src;
                    --last.dst;
                    ++last.rows;
                    continue;
                }
            }
            plan.moves.push_back(c);
        }
    };
    merge_into(forward, true);
    merge_into(backward, false);
    return plan;
}

void CachePool::move_rows(const CopyRange& r) {
    const auto d = static_cast<std::size_t>(d_model_);
    const auto seq = static_cast<std::size_t>(max_seq_);
    auto one = [&](std::size_t s, std::size_t t) {
        const auto len = static_cast<std::size_t>(valid_len_[s]);
        for (int l = 0; l < n_layers_; ++l) {
            std::memmove(k_.data() + offset(l, t), k_.data() + offset(l, s), len * d * sizeof(double));
            std::memmove(v_.data() + offset(l, t), v_.data() + offset(l, s), len * d * sizeof(double));
        }
        std::memmove(tokens_.data() + t * seq, tokens_.data() + s * seq, len);
        valid_len_[t] = valid_len_[s];
        counters_.bytes_moved += static_cast<std::size_t>(n_layers_) * 2 * len * d * sizeof(double) + len;
        ++counters_.rows_moved;
    };
    if (r.dst < r.src) {
        for (std::size_t i = 0; i < r.rows; ++i) one(r.src + i, r.dst + i);
    } else {
        for (std::size_t i = r.rows; i-- > 0;) one(r.src + i, r.dst + i);
    }
}

void CachePool::apply_expansion(const MovePlan& plan) {
    if (plan.epoch != epoch_ || plan.live_before != live_) throw CacheError("apply_expansion: stale move plan");
    for (const CopyRange& r : plan.moves) move_rows(r);
    live_ = plan.planned_rows;
    counters_.peak_rows = std::max(counters_.peak_rows, live_);
    ++epoch_;
}

RecomputeTicket CachePool::evict_and_mark(std::size_t begin, std::size_t end) {
    if (begin > end || end > live_) throw CacheError("evict_and_mark: row range is not live");
    RecomputeTicket ticket;
    ticket.inputs.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
        const auto in = inputs(r);
        ticket.inputs.emplace_back(in.begin(), in.end());
    }
    if (end < live_) move_rows({end, begin, live_ - end});
    counters_.evicted_rows += end - begin;
    live_ -= end - begin;
    ++epoch_;
    return ticket;
}

} // namespace nqs
