// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file checkpoint.hpp
 * @brief Named-tensor container: magic, JSON header, raw little-endian doubles.
 *
 * Layout: the 8-byte magic "NQSCKPT1", a uint64 header length, the JSON
 * header ({"meta": ..., "arrays": [{"name", "shape"}...]}), then every
 * array's values as float64 in header order.
 */

#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace nqs {

inline constexpr char kCheckpointMagic[] = "NQSCKPT1";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

struct CheckpointData {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    [[nodiscard]] const NamedArray* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const CheckpointData& data);
[[nodiscard]] CheckpointData read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
[[nodiscard]] CheckpointData load_checkpoint(const std::filesystem::path& path);

} // namespace nqs
