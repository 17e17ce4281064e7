// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file commands.hpp
 * @brief Subcommands of the `nqs` binary. Each returns a process exit code.
 */

#pragma once

#include <nqs/config.hpp>

#include <iosfwd>
#include <string>

namespace nqs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Train; metrics to output.metrics (default: out), checkpoint to output.checkpoint.
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Exact ground state: JSON {e0, dim, n_iterations, ...}.
int cmd_fci(const RunConfig& config, std::ostream& out, std::ostream& err);
/// One-shot energy of a checkpoint, sampled or summed over the full space.
int cmd_energy(const RunConfig& config, std::ostream& out, std::ostream& err);
/// One sampling pass with a per-layer trace and a leaf digest.
int cmd_sample(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Kernel and thread-scaling timings as CSV.
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);

/**
 * Dispatch by name after applying the thread settings. Configuration
 * errors map to kExitConfig, every other failure to kExitRuntime, each
 * with a one-line message on err.
 */
int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err);

/// FNV-1a over the leaves' bit strings and counts, as 16 hex digits.
[[nodiscard]] std::string leaf_digest(const SampleBatch& leaves);

} // namespace nqs
