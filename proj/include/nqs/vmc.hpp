// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file vmc.hpp
 * @brief Variational Monte Carlo training loop.
 *
 * One iteration: sample on every virtual rank, local energies per rank,
 * global count-weighted mean, gradient 2 Re < d ln Psi* (E_loc - <E>) >,
 * AdamW step with the warmup/inverse-sqrt learning rate.
 */

#pragma once

#include <nqs/ansatz.hpp>
#include <nqs/checkpoint.hpp>
#include <nqs/cluster.hpp>
#include <nqs/eloc.hpp>
#include <nqs/integrals.hpp>

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace nqs {

struct EnergyEstimate {
    std::complex<double> mean;
    double variance = 0.0;
};

/// Count-weighted mean and variance of E_loc. Throws std::invalid_argument on N_count = 0 or a length mismatch.
[[nodiscard]] EnergyEstimate energy_estimate(const SampleBatch& batch, std::span<const std::complex<double>> eloc);
/// Same with explicit probability weights (need not be normalized).
[[nodiscard]] EnergyEstimate energy_estimate(std::span<const double> weights,
                                             std::span<const std::complex<double>> eloc);

/// w_n = 2 p_n (E_loc(n) - <E>) with p_n = weights_n / sum(weights).
[[nodiscard]] std::vector<std::complex<double>> gradient_weights(std::span<const double> weights,
                                                                 std::span<const std::complex<double>> eloc,
                                                                 std::complex<double> mean);

/// Fill the ansatz gradient slots with d<E>/d theta estimated on the batch.
void gradient_assemble(const SampleBatch& batch, std::span<const std::complex<double>> eloc,
                       std::complex<double> mean, Ansatz& ansatz);
void gradient_assemble(std::span<const Onv> configs, std::span<const double> weights,
                       std::span<const std::complex<double>> eloc, std::complex<double> mean, Ansatz& ansatz);

/// lr_scale * d_model^-0.5 * min((t+1)^-0.5, t * n_warmup^-1.5).
[[nodiscard]] double lr_schedule(std::int64_t t, int d_model, int n_warmup, double lr_scale = 1.0);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    void step(ParameterSet& params, double lr);
    [[nodiscard]] std::int64_t steps() const noexcept { return t_; }
    [[nodiscard]] const AdamWConfig& config() const noexcept { return config_; }

    void export_arrays(const ParameterSet& params, std::vector<NamedArray>& out) const;
    void import_arrays(const ParameterSet& params, const CheckpointData& data, std::int64_t steps);

private:
    AdamWConfig config_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct TrainConfig {
    std::uint64_t n_count = 10000;
    std::size_t k = kUnboundedChunk;
    int iterations = 100;
    int n_warmup = 2000;
    double lr_scale = 1.0;
    AdamWConfig adam;
    ElocMode eloc_mode = ElocMode::Accurate;
    PartitionPlan plan;
    BalanceStrategy strategy = BalanceStrategy::DensityAware;
    std::uint64_t seed = 0;
    bool use_cache = true;
    int threads = 0;

    /// Throws ConfigError.
    void validate(int n_spatial) const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static TrainConfig from_json(const nlohmann::json& j);
};

struct IterationMetrics {
    std::int64_t iteration = 0;
    double energy = 0.0;
    double energy_imag = 0.0;
    double variance = 0.0;
    double lr = 0.0;
    std::vector<std::size_t> unique_per_rank;
    std::size_t recomputes = 0;
    std::size_t cache_bytes_moved = 0;
    std::size_t psi_evaluations = 0;
    double sampling_seconds = 0.0;
    double eloc_seconds = 0.0;
    double backward_seconds = 0.0;

    [[nodiscard]] std::size_t max_unique() const;
    [[nodiscard]] std::size_t min_unique() const;
    /// Deterministic fields first; timings under "timing".
    [[nodiscard]] nlohmann::json to_json() const;
};

class Trainer {
public:
    Trainer(const TrainConfig& config, const IntegralTable& table, Ansatz& ansatz);

    /// One full iteration. Throws std::runtime_error on a non-finite energy.
    IterationMetrics step();
    [[nodiscard]] std::int64_t iteration() const noexcept { return iteration_; }
    [[nodiscard]] const TrainConfig& config() const noexcept { return config_; }

    [[nodiscard]] CheckpointData checkpoint() const;
    /// Throws CheckpointError if the checkpoint does not fit the ansatz.
    void restore(const CheckpointData& data);

private:
    TrainConfig config_;
    const IntegralTable& table_;
    Ansatz& ansatz_;
    AdamW optimizer_;
    DensityState density_;
    std::int64_t iteration_ = 0;
};

/// Header line written before the first iteration record.
[[nodiscard]] nlohmann::json metrics_header(const TrainConfig& config, const Ansatz& ansatz);

/**
 * Run until trainer.iteration() == config.iterations, writing one JSON line
 * per iteration to metrics (if non-null). Returns the metrics of the run.
 */
std::vector<IterationMetrics> train(Trainer& trainer, std::ostream* metrics);

} // namespace nqs
