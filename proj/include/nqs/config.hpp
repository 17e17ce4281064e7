// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief Run configuration: an INI document with one section per module,
 * overridden by `section.key=value` pairs from the command line.
 *
 * Recognised keys:
 *   [system]  fcidump
 *   [ansatz]  n_layers n_head d_model phase_hidden phase_activation seed
 *   [train]   n_count k iterations n_warmup lr_scale beta1 beta2 eps weight_decay
 *             eloc_mode group_sizes split_layers strategy seed use_cache checkpoint_every
 *   [input]   checkpoint
 *   [output]  metrics checkpoint result trace csv
 *   [energy]  full_space
 *   [bench]   n_spatial n_alpha n_beta block repeats eloc_samples threads seed
 *   [run]     threads
 * Lists are comma separated; k accepts "inf".
 */

#pragma once

#include <nqs/ansatz.hpp>
#include <nqs/bench.hpp>
#include <nqs/vmc.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nqs {

struct RunConfig {
    std::string fcidump;
    AnsatzConfig ansatz;
    TrainConfig train;
    int checkpoint_every = 0;
    std::string input_checkpoint;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string result_path;
    std::string trace_path;
    std::string csv_path;
    bool full_space = false;
    BenchConfig bench;
    int threads = 0;
};

/// Flat "section.key" -> value view of an INI file. Throws ConfigError on syntax errors.
[[nodiscard]] std::map<std::string, std::string> read_ini(const std::string& path);

/**
 * Merge file entries with overrides ("section.key=value"), reject unknown
 * keys and malformed values, and build the typed configuration.
 * Throws ConfigError naming the offending key.
 */
[[nodiscard]] RunConfig build_run_config(std::map<std::string, std::string> entries,
                                         const std::vector<std::string>& overrides);

/// Thread cap from NQS_NUM_THREADS, if set to a positive integer. Throws ConfigError otherwise.
[[nodiscard]] std::optional<int> thread_cap_from_env();

} // namespace nqs
