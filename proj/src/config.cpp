// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/config.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <set>
#include <sstream>

namespace nqs {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "system.fcidump",
        "ansatz.n_layers", "ansatz.n_head", "ansatz.d_model", "ansatz.phase_hidden", "ansatz.phase_activation",
        "ansatz.seed",
        "train.n_count", "train.k", "train.iterations", "train.n_warmup", "train.lr_scale", "train.beta1",
        "train.beta2", "train.eps", "train.weight_decay", "train.eloc_mode", "train.group_sizes",
        "train.split_layers", "train.strategy", "train.seed", "train.use_cache", "train.checkpoint_every",
        "input.checkpoint",
        "output.metrics", "output.checkpoint", "output.result", "output.trace", "output.csv",
        "energy.full_space",
        "bench.n_spatial", "bench.n_alpha", "bench.n_beta", "bench.block", "bench.repeats", "bench.eloc_samples",
        "bench.threads", "bench.seed",
        "run.threads",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("config: '" + key + "' expects a number, got '" + raw + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + raw + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& raw) {
    std::vector<int> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
    if (out.empty()) throw ConfigError("config: '" + key + "' is an empty list");
    return out;
}

} // namespace

std::map<std::string, std::string> read_ini(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    std::map<std::string, std::string> out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body) out[section + "." + key] = value.get_value<std::string>();
    }
    return out;
}

RunConfig build_run_config(std::map<std::string, std::string> entries, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config: override '" + o + "' is not of the form section.key=value");
        entries[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
    }
    for (const auto& [key, value] : entries)
        if (!known_keys().contains(key)) throw ConfigError("config: unknown key '" + key + "'");

    RunConfig c;
    for (const auto& [key, v] : entries) {
        if (key == "system.fcidump") c.fcidump = v;
        else if (key == "ansatz.n_layers") c.ansatz.n_layers = parse_number<int>(key, v);
        else if (key == "ansatz.n_head") c.ansatz.n_head = parse_number<int>(key, v);
        else if (key == "ansatz.d_model") c.ansatz.d_model = parse_number<int>(key, v);
        else if (key == "ansatz.phase_hidden") c.ansatz.phase_hidden = parse_int_list(key, v);
        else if (key == "ansatz.phase_activation") {
            if (v == "tanh") c.ansatz.phase_activation = PhaseActivation::Tanh;
            else if (v == "relu") c.ansatz.phase_activation = PhaseActivation::Relu;
            else throw ConfigError("config: 'ansatz.phase_activation' must be tanh or relu");
        } else if (key == "ansatz.seed") c.ansatz.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "train.n_count") c.train.n_count = parse_number<std::uint64_t>(key, v);
        else if (key == "train.k") c.train.k = (v == "inf") ? kUnboundedChunk : parse_number<std::size_t>(key, v);
        else if (key == "train.iterations") c.train.iterations = parse_number<int>(key, v);
        else if (key == "train.n_warmup") c.train.n_warmup = parse_number<int>(key, v);
        else if (key == "train.lr_scale") c.train.lr_scale = parse_number<double>(key, v);
        else if (key == "train.beta1") c.train.adam.beta1 = parse_number<double>(key, v);
        else if (key == "train.beta2") c.train.adam.beta2 = parse_number<double>(key, v);
        else if (key == "train.eps") c.train.adam.eps = parse_number<double>(key, v);
        else if (key == "train.weight_decay") c.train.adam.weight_decay = parse_number<double>(key, v);
        else if (key == "train.eloc_mode") {
            if (v == "accurate") c.train.eloc_mode = ElocMode::Accurate;
            else if (v == "sample_space") c.train.eloc_mode = ElocMode::SampleSpace;
            else throw ConfigError("config: 'train.eloc_mode' must be accurate or sample_space");
        } else if (key == "train.group_sizes") c.train.plan.group_sizes = parse_int_list(key, v);
        else if (key == "train.split_layers") c.train.plan.split_layers = parse_int_list(key, v);
        else if (key == "train.strategy") {
            if (v == "density") c.train.strategy = BalanceStrategy::DensityAware;
            else if (v == "count") c.train.strategy = BalanceStrategy::CountSplit;
            else if (v == "unique") c.train.strategy = BalanceStrategy::UniqueSplit;
            else throw ConfigError("config: 'train.strategy' must be density, count or unique");
        } else if (key == "train.seed") c.train.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "train.use_cache") c.train.use_cache = parse_bool(key, v);
        else if (key == "train.checkpoint_every") c.checkpoint_every = parse_number<int>(key, v);
        else if (key == "input.checkpoint") c.input_checkpoint = v;
        else if (key == "output.metrics") c.metrics_path = v;
        else if (key == "output.checkpoint") c.checkpoint_path = v;
        else if (key == "output.result") c.result_path = v;
        else if (key == "output.trace") c.trace_path = v;
        else if (key == "output.csv") c.csv_path = v;
        else if (key == "energy.full_space") c.full_space = parse_bool(key, v);
        else if (key == "bench.n_spatial") c.bench.n_spatial = parse_number<int>(key, v);
        else if (key == "bench.n_alpha") c.bench.n_alpha = parse_number<int>(key, v);
        else if (key == "bench.n_beta") c.bench.n_beta = parse_number<int>(key, v);
        else if (key == "bench.block") c.bench.block = parse_number<std::size_t>(key, v);
        else if (key == "bench.repeats") c.bench.repeats = parse_number<int>(key, v);
        else if (key == "bench.eloc_samples") c.bench.eloc_samples = parse_number<std::size_t>(key, v);
        else if (key == "bench.threads") c.bench.threads = parse_int_list(key, v);
        else if (key == "bench.seed") c.bench.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "run.threads") c.threads = parse_number<int>(key, v);
    }
    if (c.checkpoint_every < 0) throw ConfigError("config: 'train.checkpoint_every' must be non-negative");
    if (c.threads < 0) throw ConfigError("config: 'run.threads' must be non-negative");
    c.train.threads = c.threads;
    return c;
}

std::optional<int> thread_cap_from_env() {
    const char* raw = std::getenv("NQS_NUM_THREADS");
    if (!raw || !*raw) return std::nullopt;
    const int n = parse_number<int>("NQS_NUM_THREADS", raw);
    if (n < 1) throw ConfigError("config: NQS_NUM_THREADS must be a positive integer");
    return n;
}

} // namespace nqs
