// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file ansatz.hpp
 * @brief Transformer wavefunction: autoregressive amplitude plus MLP phase.
 *
 * Amplitude: a pre-norm decoder-only transformer reads BOS followed by the
 * occupation tokens of orbitals 0..K-2 and emits 4-way logits per position.
 * Invalid tokens are masked and the rest renormalized, so
 * log|Psi(n)| = 1/2 sum_t log p(token_t | tokens_<t) and sum_n |Psi(n)|^2 = 1.
 *
 * Phase: an MLP on the 2K occupation bits.
 *
 * All math is float64 with per-row loops whose order does not depend on the
 * batch, so cached steps, prefill and stateless recomputation agree bitwise.
 */

#pragma once

#include <nqs/checkpoint.hpp>
#include <nqs/kvcache.hpp>
#include <nqs/onv.hpp>
#include <nqs/sample_batch.hpp>
#include <nqs/sampler.hpp>
#include <nqs/wavefunction.hpp>

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nqs {

enum class PhaseActivation { Tanh, Relu };

struct AnsatzConfig {
    int n_spatial = 0;
    int n_alpha = 0;
    int n_beta = 0;
    int n_layers = 8;
    int n_head = 8;
    int d_model = 64;
    std::vector<int> phase_hidden{512, 512};
    PhaseActivation phase_activation = PhaseActivation::Tanh;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on inconsistent sizes.
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static AnsatzConfig from_json(const nlohmann::json& j);
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    [[nodiscard]] std::size_t size() const noexcept { return value.size(); }
};

/// Named parameter tensors with gradient slots of identical shape.
class ParameterSet {
public:
    Tensor& add(std::string name, std::vector<std::size_t> shape);

    [[nodiscard]] std::vector<Tensor>& tensors() noexcept { return tensors_; }
    [[nodiscard]] const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    [[nodiscard]] Tensor* find(const std::string& name);
    [[nodiscard]] const Tensor* find(const std::string& name) const;
    [[nodiscard]] std::size_t n_values() const noexcept;
    void zero_grad();

private:
    std::vector<Tensor> tensors_;
};

/// Masked softmax over the allowed tokens; disallowed entries are exactly 0.
[[nodiscard]] Distribution masked_softmax(const std::array<double, 4>& logits, std::uint8_t mask);

class Ansatz final : public WavefunctionEvaluator, public ConditionalModel {
public:
    explicit Ansatz(const AnsatzConfig& config);

    [[nodiscard]] const AnsatzConfig& config() const noexcept { return config_; }
    [[nodiscard]] ParameterSet& params() noexcept { return params_; }
    [[nodiscard]] const ParameterSet& params() const noexcept { return params_; }

    [[nodiscard]] int n_spatial() const override { return config_.n_spatial; }
    [[nodiscard]] int n_alpha() const override { return config_.n_alpha; }
    [[nodiscard]] int n_beta() const override { return config_.n_beta; }

    /// Throws std::invalid_argument if batch.depth >= K.
    void conditionals(const SampleBatch& batch, std::span<Distribution> out) const override;
    [[nodiscard]] bool has_cache() const override { return true; }
    [[nodiscard]] std::array<int, 3> cache_shape() const override;
    /// Throws CacheError when the pool rows do not hold the batch prefixes at this depth.
    void cached_conditionals(CachePool& pool, const SampleBatch& batch, std::span<Distribution> out) const override;
    void prefill(CachePool& pool, const SampleBatch& batch) const override;

    void evaluate(std::span<const Onv> configs, std::span<WavefunctionValue> out) const override;
    [[nodiscard]] WavefunctionValue evaluate(const Onv& n) const;
    [[nodiscard]] double phase(const Onv& n) const;

    /**
     * grad = Re sum_n w_n d ln Psi*(n), with d ln Psi* = d log|Psi| - i d phase.
     * Gradient slots are overwritten; parameters with no path get zeros.
     * Throws std::invalid_argument on a length mismatch.
     */
    void backward(std::span<const Onv> configs, std::span<const std::complex<double>> weights);

    [[nodiscard]] std::vector<NamedArray> export_arrays() const;
    /// Throws CheckpointError on a missing or misshapen tensor.
    void import_arrays(const CheckpointData& data);

private:
    struct Layer {
        std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_pr, b_pr;
    };
    struct RowScratch;

    [[nodiscard]] const double* p(std::size_t index) const noexcept { return params_.tensors()[index].value.data(); }

    /// One position of one row: reads keys/values of positions < pos, writes this position's k/v per layer.
    void step_row(int pos, int input, const double* const* past_k, const double* const* past_v, double* new_k,
                  double* new_v, std::array<double, 4>& logits, RowScratch& s) const;
    [[nodiscard]] std::array<double, 4> stateless_logits(const Onv& prefix, int depth, RowScratch& s) const;
    [[nodiscard]] double phase_forward(const Onv& n, std::vector<std::vector<double>>* acts) const;

    AnsatzConfig config_;
    ParameterSet params_;
    std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, w_head_ = 0, b_head_ = 0;
    std::vector<Layer> layers_;
    std::vector<std::size_t> phase_w_, phase_b_;
};

/// Input token fed at position pos for a prefix: BOS at 0, else token pos-1.
[[nodiscard]] inline int input_token(const Onv& prefix, int pos) noexcept {
    return pos == 0 ? kBeginToken : token_at(prefix, pos - 1);
}

} // namespace nqs
