// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/vmc.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nqs {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* mode_name(ElocMode m) { return m == ElocMode::Accurate ? "accurate" : "sample_space"; }

const char* strategy_name(BalanceStrategy s) {
    switch (s) {
    case BalanceStrategy::DensityAware: return "density";
    case BalanceStrategy::CountSplit: return "count";
    case BalanceStrategy::UniqueSplit: return "unique";
    }
    return "density";
}

} // namespace

EnergyEstimate energy_estimate(std::span<const double> weights, std::span<const std::complex<double>> eloc) {
    if (weights.size() != eloc.size()) throw std::invalid_argument("energy_estimate: length mismatch");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("energy_estimate: N_count is zero");
    EnergyEstimate e;
    for (std::size_t i = 0; i < eloc.size(); ++i) e.mean += (weights[i] / total) * eloc[i];
    for (std::size_t i = 0; i < eloc.size(); ++i) e.variance += (weights[i] / total) * std::norm(eloc[i] - e.mean);
    return e;
}

EnergyEstimate energy_estimate(const SampleBatch& batch, std::span<const std::complex<double>> eloc) {
    std::vector<double> w(batch.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(batch.counts[i]);
    return energy_estimate(w, eloc);
}

std::vector<std::complex<double>> gradient_weights(std::span<const double> weights,
                                                   std::span<const std::complex<double>> eloc,
                                                   std::complex<double> mean) {
    if (weights.size() != eloc.size()) throw std::invalid_argument("gradient: length mismatch");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("gradient: N_count is zero");
    std::vector<std::complex<double>> out(weights.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * (weights[i] / total) * (eloc[i] - mean);
    return out;
}

void gradient_assemble(std::span<const Onv> configs, std::span<const double> weights,
                       std::span<const std::complex<double>> eloc, std::complex<double> mean, Ansatz& ansatz) {
    if (configs.size() != weights.size()) throw std::invalid_argument("gradient: length mismatch");
    const auto w = gradient_weights(weights, eloc, mean);
    ansatz.backward(configs, w);
}

void gradient_assemble(const SampleBatch& batch, std::span<const std::complex<double>> eloc,
                       std::complex<double> mean, Ansatz& ansatz) {
    std::vector<double> w(batch.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(batch.counts[i]);
    gradient_assemble(batch.prefixes, w, eloc, mean, ansatz);
}

double lr_schedule(std::int64_t t, int d_model, int n_warmup, double lr_scale) {
    const auto td = static_cast<double>(t);
    const double a = std::pow(td + 1.0, -0.5);
    const double b = td * std::pow(static_cast<double>(n_warmup), -1.5);
    return lr_scale * std::pow(static_cast<double>(d_model), -0.5) * std::min(a, b);
}

void AdamW::step(ParameterSet& params, double lr) {
    auto& ts = params.tensors();
    if (m_.size() != ts.size()) {
        m_.clear();
        v_.clear();
        for (const auto& t : ts) {
            m_.emplace_back(t.size(), 0.0);
            v_.emplace_back(t.size(), 0.0);
        }
    }
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        auto& val = ts[i].value;
        const auto& g = ts[i].grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < val.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mh = m[j] / c1;
            const double vh = v[j] / c2;
            val[j] -= lr * (mh / (std::sqrt(vh) + config_.eps) + config_.weight_decay * val[j]);
        }
    }
}

void AdamW::export_arrays(const ParameterSet& params, std::vector<NamedArray>& out) const {
    const auto& ts = params.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const bool have = i < m_.size();
        out.push_back({"adam.m/" + ts[i].name, ts[i].shape, have ? m_[i] : std::vector<double>(ts[i].size(), 0.0)});
        out.push_back({"adam.v/" + ts[i].name, ts[i].shape, have ? v_[i] : std::vector<double>(ts[i].size(), 0.0)});
    }
}

void AdamW::import_arrays(const ParameterSet& params, const CheckpointData& data, std::int64_t steps) {
    m_.clear();
    v_.clear();
    for (const auto& t : params.tensors()) {
        const NamedArray* m = data.find("adam.m/" + t.name);
        const NamedArray* v = data.find("adam.v/" + t.name);
        if (!m || !v || m->data.size() != t.size() || v->data.size() != t.size())
            throw CheckpointError("checkpoint: optimizer state missing for '" + t.name + "'");
        m_.push_back(m->data);
        v_.push_back(v->data);
    }
    t_ = steps;
}

void TrainConfig::validate(int n_spatial) const {
    if (n_count < 1) throw ConfigError("train: n_count must be at least 1");
    if (n_warmup < 1) throw ConfigError("train: n_warmup must be at least 1");
    if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
    if (k < 1) throw ConfigError("train: chunk size k must be at least 1");
    if (!(lr_scale >= 0.0)) throw ConfigError("train: lr_scale must be non-negative");
    if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 || adam.eps <= 0.0 ||
        adam.weight_decay < 0.0)
        throw ConfigError("train: invalid AdamW hyperparameters");
    plan.validate(n_spatial);
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["n_count"] = n_count;
    j["k"] = k == kUnboundedChunk ? nlohmann::json("inf") : nlohmann::json(k);
    j["iterations"] = iterations;
    j["n_warmup"] = n_warmup;
    j["lr_scale"] = lr_scale;
    j["adam"] = {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}, {"weight_decay", adam.weight_decay}};
    j["eloc_mode"] = mode_name(eloc_mode);
    j["group_sizes"] = plan.group_sizes;
    j["split_layers"] = plan.split_layers;
    j["strategy"] = strategy_name(strategy);
    j["seed"] = seed;
    j["use_cache"] = use_cache;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.n_count = j.at("n_count").get<std::uint64_t>();
    c.k = j.at("k").is_string() ? kUnboundedChunk : j.at("k").get<std::size_t>();
    c.iterations = j.at("iterations").get<int>();
    c.n_warmup = j.at("n_warmup").get<int>();
    c.lr_scale = j.at("lr_scale").get<double>();
    const auto& a = j.at("adam");
    c.adam = {a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("eps").get<double>(),
              a.at("weight_decay").get<double>()};
    c.eloc_mode = j.at("eloc_mode").get<std::string>() == "accurate" ? ElocMode::Accurate : ElocMode::SampleSpace;
    c.plan.group_sizes = j.at("group_sizes").get<std::vector<int>>();
    c.plan.split_layers = j.at("split_layers").get<std::vector<int>>();
    const auto s = j.at("strategy").get<std::string>();
    c.strategy = s == "count" ? BalanceStrategy::CountSplit
                 : s == "unique" ? BalanceStrategy::UniqueSplit
                                 : BalanceStrategy::DensityAware;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.use_cache = j.at("use_cache").get<bool>();
    return c;
}

std::size_t IterationMetrics::max_unique() const {
    return unique_per_rank.empty() ? 0 : *std::max_element(unique_per_rank.begin(), unique_per_rank.end());
}

std::size_t IterationMetrics::min_unique() const {
    return unique_per_rank.empty() ? 0 : *std::min_element(unique_per_rank.begin(), unique_per_rank.end());
}

nlohmann::json IterationMetrics::to_json() const {
    nlohmann::json j;
    j["iteration"] = iteration;
    j["energy"] = energy;
    j["energy_imag"] = energy_imag;
    j["variance"] = variance;
    j["lr"] = lr;
    j["n_unique"] = unique_per_rank;
    j["max_unique"] = max_unique();
    j["min_unique"] = min_unique();
    j["recomputes"] = recomputes;
    j["cache_bytes_moved"] = cache_bytes_moved;
    j["psi_evaluations"] = psi_evaluations;
    j["timing"] = {{"sampling_s", sampling_seconds}, {"eloc_s", eloc_seconds}, {"backward_s", backward_seconds}};
    return j;
}

Trainer::Trainer(const TrainConfig& config, const IntegralTable& table, Ansatz& ansatz)
    : config_(config), table_(table), ansatz_(ansatz), optimizer_(config.adam),
      density_(config.plan.n_ranks()) {
    const auto& ac = ansatz.config();
    if (ac.n_spatial != table.n_spatial() || ac.n_alpha != table.n_alpha() || ac.n_beta != table.n_beta())
        throw ConfigError("train: ansatz dimensions do not match the integrals");
    config_.validate(table.n_spatial());
}

IterationMetrics Trainer::step() {
    IterationMetrics m;
    m.iteration = iteration_;
    const SampleKey key{config_.seed, static_cast<std::uint64_t>(iteration_)};

    auto t0 = std::chrono::steady_clock::now();
    ParallelSamplingOptions popt;
    popt.sampler.k = config_.k;
    popt.sampler.use_cache = config_.use_cache;
    popt.strategy = config_.strategy;
    const ParallelSamplingResult sampled =
        run_parallel_sampling(ansatz_, config_.plan, config_.n_count, key, density_, popt);
    m.sampling_seconds = seconds_since(t0);
    m.unique_per_rank = sampled.unique;
    for (const auto& s : sampled.stats) {
        m.recomputes += s.recomputes;
        m.cache_bytes_moved += s.bytes_moved;
    }

    // per-rank local energies, then the count-weighted global reduction
    t0 = std::chrono::steady_clock::now();
    const SampleBatch all = sampled.merged();
    std::vector<std::complex<double>> eloc;
    eloc.reserve(all.size());
    ElocOptions eopt;
    eopt.threads = config_.threads;
    for (const auto& leaves : sampled.leaves) {
        if (leaves.empty()) continue;
        const LocalEnergyReport rep = local_energy_batch(leaves, ansatz_, table_, config_.eloc_mode, eopt);
        eloc.insert(eloc.end(), rep.values.begin(), rep.values.end());
        m.psi_evaluations += rep.psi_evaluations;
    }
    m.eloc_seconds = seconds_since(t0);

    const EnergyEstimate est = energy_estimate(all, eloc);
    m.energy = est.mean.real();
    m.energy_imag = est.mean.imag();
    m.variance = est.variance;
    if (!std::isfinite(m.energy) || !std::isfinite(m.variance)) {
        std::ostringstream msg;
        msg << "train: non-finite energy at iteration " << iteration_ << " (mean " << est.mean << ", variance "
            << est.variance << ", unique " << all.size() << ")";
        throw std::runtime_error(msg.str());
    }

    t0 = std::chrono::steady_clock::now();
    gradient_assemble(all, eloc, est.mean, ansatz_);
    m.lr = lr_schedule(iteration_, ansatz_.config().d_model, config_.n_warmup, config_.lr_scale);
    optimizer_.step(ansatz_.params(), m.lr);
    m.backward_seconds = seconds_since(t0);
    ++iteration_;
    return m;
}

CheckpointData Trainer::checkpoint() const {
    CheckpointData data;
    data.meta["ansatz"] = ansatz_.config().to_json();
    data.meta["train"] = config_.to_json();
    data.meta["iteration"] = iteration_;
    data.meta["optimizer_steps"] = optimizer_.steps();
    data.meta["density"] = density_.density;
    data.arrays = ansatz_.export_arrays();
    optimizer_.export_arrays(ansatz_.params(), data.arrays);
    return data;
}

void Trainer::restore(const CheckpointData& data) {
    try {
        const AnsatzConfig saved = AnsatzConfig::from_json(data.meta.at("ansatz"));
        const AnsatzConfig& cur = ansatz_.config();
        if (saved.to_json() != cur.to_json()) throw CheckpointError("checkpoint: ansatz configuration differs");
        ansatz_.import_arrays(data);
        optimizer_.import_arrays(ansatz_.params(), data, data.meta.at("optimizer_steps").get<std::int64_t>());
        iteration_ = data.meta.at("iteration").get<std::int64_t>();
        density_.density = data.meta.at("density").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
    }
}

nlohmann::json metrics_header(const TrainConfig& config, const Ansatz& ansatz) {
    return {{"header", true},
            {"train", config.to_json()},
            {"ansatz", ansatz.config().to_json()},
            {"n_parameters", ansatz.params().n_values()}};
}

std::vector<IterationMetrics> train(Trainer& trainer, std::ostream* metrics) {
    std::vector<IterationMetrics> out;
    while (trainer.iteration() < trainer.config().iterations) {
        out.push_back(trainer.step());
        if (metrics) *metrics << out.back().to_json().dump() << '\n' << std::flush;
    }
    return out;
}

} // namespace nqs
