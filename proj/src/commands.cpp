// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/commands.hpp>

#include <nqs/oracle.hpp>

#include <omp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace nqs {

namespace {

IntegralTable require_table(const RunConfig& c) {
    if (c.fcidump.empty()) throw ConfigError("config: 'system.fcidump' is required");
    return load_fcidump(c.fcidump);
}

AnsatzConfig ansatz_for(const RunConfig& c, const IntegralTable& t) {
    AnsatzConfig a = c.ansatz;
    a.n_spatial = t.n_spatial();
    a.n_alpha = t.n_alpha();
    a.n_beta = t.n_beta();
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return a;
}

/// Ansatz from input.checkpoint when given, else freshly initialised.
std::unique_ptr<Ansatz> load_ansatz(const RunConfig& c, const IntegralTable& t, CheckpointData* data) {
    if (c.input_checkpoint.empty()) return std::make_unique<Ansatz>(ansatz_for(c, t));
    CheckpointData ck = load_checkpoint(c.input_checkpoint);
    AnsatzConfig a;
    try {
        a = AnsatzConfig::from_json(ck.meta.at("ansatz"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
    }
    if (a.n_spatial != t.n_spatial() || a.n_alpha != t.n_alpha() || a.n_beta != t.n_beta())
        throw ConfigError("config: checkpoint does not match the system in 'system.fcidump'");
    auto ansatz = std::make_unique<Ansatz>(a);
    ansatz->import_arrays(ck);
    if (data) *data = std::move(ck);
    return ansatz;
}

/// Opens `path` for writing, or returns `fallback` when path is empty.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (path.empty()) return;
        file_.open(path, std::ios::out | std::ios::trunc);
        if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
        stream_ = &file_;
    }
    std::ostream& get() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

void emit_json(const std::string& path, std::ostream& out, const nlohmann::json& j) {
    Sink sink(path, out);
    sink.get() << j.dump() << '\n';
}

void apply_threads(const RunConfig& c) {
    int threads = c.threads;
    if (const auto cap = thread_cap_from_env()) threads = threads > 0 ? std::min(threads, *cap) : *cap;
    if (threads > 0) omp_set_num_threads(threads);
}

} // namespace

std::string leaf_digest(const SampleBatch& leaves) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        mix(leaves.prefixes[i].to_string());
        mix(":" + std::to_string(leaves.counts[i]) + ";");
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const IntegralTable table = require_table(c);
    CheckpointData resume;
    auto ansatz = load_ansatz(c, table, &resume);
    Trainer trainer(c.train, table, *ansatz);
    if (!c.input_checkpoint.empty()) trainer.restore(resume);

    Sink metrics(c.metrics_path, out);
    metrics.get() << metrics_header(c.train, *ansatz).dump() << '\n';
    IterationMetrics last;
    bool any = false;
    while (trainer.iteration() < c.train.iterations) {
        last = trainer.step();
        any = true;
        metrics.get() << last.to_json().dump() << '\n' << std::flush;
        if (c.checkpoint_every > 0 && !c.checkpoint_path.empty() && trainer.iteration() % c.checkpoint_every == 0)
            save_checkpoint(c.checkpoint_path, trainer.checkpoint());
    }
    if (!c.checkpoint_path.empty()) save_checkpoint(c.checkpoint_path, trainer.checkpoint());
    if (!c.result_path.empty()) {
        nlohmann::json r{{"iterations", trainer.iteration()}, {"n_parameters", ansatz->params().n_values()}};
        r["energy"] = any ? nlohmann::json(last.energy) : nlohmann::json(nullptr);
        r["variance"] = any ? nlohmann::json(last.variance) : nlohmann::json(nullptr);
        emit_json(c.result_path, out, r);
    }
    if (any) err << "iteration " << trainer.iteration() << " energy " << std::setprecision(10) << last.energy << '\n';
    return kExitOk;
}

int cmd_fci(const RunConfig& c, std::ostream& out, std::ostream&) {
    const IntegralTable table = require_table(c);
    const FciResult r = fci_ground_state(table, table.n_alpha(), table.n_beta());
    nlohmann::json j{{"e0", r.e0},
                     {"dim", r.dim},
                     {"n_iterations", r.n_iterations},
                     {"method", r.dense ? "dense" : "lanczos"},
                     {"residual", r.residual},
                     {"hf_energy", hf_energy(table, table.n_alpha(), table.n_beta())}};
    emit_json(c.result_path, out, j);
    return kExitOk;
}

int cmd_energy(const RunConfig& c, std::ostream& out, std::ostream&) {
    if (c.input_checkpoint.empty()) throw ConfigError("config: 'input.checkpoint' is required");
    const IntegralTable table = require_table(c);
    const auto ansatz = load_ansatz(c, table, nullptr);
    nlohmann::json j;
    if (c.full_space) {
        const FciBasis basis(table.n_spatial(), table.n_alpha(), table.n_beta());
        SampleBatch all;
        all.depth = table.n_spatial();
        for (const Onv& n : basis.states()) all.push_back(n, 1, 0.0);
        std::vector<WavefunctionValue> psi(all.size());
        ansatz->evaluate(all.prefixes, psi);
        std::vector<double> w(all.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(2.0 * psi[i].log_amplitude);
        const auto rep = local_energy_batch(all, *ansatz, table, ElocMode::Accurate, ElocOptions{c.threads, true});
        const EnergyEstimate e = energy_estimate(w, rep.values);
        j = {{"energy", e.mean.real()}, {"energy_imag", e.mean.imag()}, {"variance", e.variance},
             {"n_unique", all.size()}, {"full_space", true}};
    } else {
        SamplerOptions so;
        so.k = c.train.k;
        so.use_cache = c.train.use_cache;
        const SampleBatch leaves = hybrid_sample(*ansatz, c.train.n_count, SampleKey{c.train.seed, 0}, so);
        const auto rep = local_energy_batch(leaves, *ansatz, table, c.train.eloc_mode, ElocOptions{c.threads, true});
        const EnergyEstimate e = energy_estimate(leaves, rep.values);
        j = {{"energy", e.mean.real()}, {"energy_imag", e.mean.imag()}, {"variance", e.variance},
             {"n_unique", leaves.size()}, {"n_count", c.train.n_count}, {"full_space", false}};
    }
    emit_json(c.result_path, out, j);
    return kExitOk;
}

int cmd_sample(const RunConfig& c, std::ostream& out, std::ostream&) {
    const IntegralTable table = require_table(c);
    const auto ansatz = load_ansatz(c, table, nullptr);
    SamplerOptions so;
    so.k = c.train.k;
    so.use_cache = c.train.use_cache;
    so.record_trace = true;
    SamplerStats stats;
    const SampleBatch leaves = hybrid_sample(*ansatz, c.train.n_count, SampleKey{c.train.seed, 0}, so, &stats);
    nlohmann::json j{{"n_count", leaves.total_count()},
                     {"n_unique", leaves.size()},
                     {"k", so.k == kUnboundedChunk ? nlohmann::json("inf") : nlohmann::json(so.k)},
                     {"digest", leaf_digest(leaves)},
                     {"switch_layer", stats.switch_layer},
                     {"dfs_chunks", stats.dfs_chunks},
                     {"recomputes", stats.recomputes},
                     {"pool_capacity", stats.pool_capacity},
                     {"pool_bytes_start", stats.pool_bytes_start},
                     {"pool_bytes_end", stats.pool_bytes_end},
                     {"bytes_moved", stats.bytes_moved}};
    if (!c.trace_path.empty()) {
        Sink trace(c.trace_path, out);
        trace.get() << trace_lines(stats);
    }
    emit_json(c.result_path, out, j);
    return kExitOk;
}

int cmd_bench(const RunConfig& c, std::ostream& out, std::ostream& err) {
    BenchConfig bc = c.bench;
    if (const auto cap = thread_cap_from_env()) {
        std::vector<int> kept;
        for (int t : bc.threads) {
            if (t <= *cap) kept.push_back(t);
            else err << "bench: skipping " << t << " threads above NQS_NUM_THREADS=" << *cap << '\n';
        }
        bc.threads = kept;
    }
    const BenchReport report = run_bench(bc);
    {
        Sink csv(c.csv_path, out);
        write_bench_csv(csv.get(), report);
    }
    if (!c.result_path.empty()) {
        nlohmann::json j{{"kernel_speedup", report.kernel_speedup()},
                         {"kernel_max_diff", report.kernel_max_diff},
                         {"eloc_max_diff", report.eloc_max_diff}};
        for (int t : bc.threads) j["eloc_speedup"][std::to_string(t)] = report.eloc_speedup(t);
        emit_json(c.result_path, out, j);
    }
    return kExitOk;
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        apply_threads(config);
        if (name == "train") return cmd_train(config, out, err);
        if (name == "fci") return cmd_fci(config, out, err);
        if (name == "energy") return cmd_energy(config, out, err);
        if (name == "sample") return cmd_sample(config, out, err);
        if (name == "bench") return cmd_bench(config, out, err);
        err << "error: unknown command '" << name << "'\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace nqs
