// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/checkpoint.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

namespace nqs {

const NamedArray* CheckpointData::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

void write_checkpoint(std::ostream& out, const CheckpointData& data) {
    nlohmann::json header;
    header["meta"] = data.meta;
    header["arrays"] = nlohmann::json::array();
    for (const auto& a : data.arrays) {
        const std::size_t n = std::accumulate(a.shape.begin(), a.shape.end(), std::size_t{1}, std::multiplies<>());
        if (n != a.data.size()) throw CheckpointError("checkpoint: array '" + a.name + "' shape does not match data");
        header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
    }
    const std::string text = header.dump();
    const auto len = static_cast<std::uint64_t>(text.size());
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : data.arrays)
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!out) throw CheckpointError("checkpoint: write failed");
}

CheckpointData read_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("checkpoint: bad magic");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1ULL << 32)) throw CheckpointError("checkpoint: bad header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("checkpoint: truncated header");

    CheckpointData data;
    try {
        const auto header = nlohmann::json::parse(text);
        data.meta = header.at("meta");
        for (const auto& entry : header.at("arrays")) {
            NamedArray a;
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<std::vector<std::size_t>>();
            data.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
    }
    for (auto& a : data.arrays) {
        const std::size_t n = std::accumulate(a.shape.begin(), a.shape.end(), std::size_t{1}, std::multiplies<>());
        a.data.resize(n);
        in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw CheckpointError("checkpoint: truncated array '" + a.name + "'");
    }
    return data;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot open " + tmp.string());
        write_checkpoint(out, data);
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    return read_checkpoint(in);
}

} // namespace nqs
