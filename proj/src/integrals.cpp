// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/integrals.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

namespace nqs {

namespace {

std::string kind_prefix(FcidumpError::Kind kind) {
    switch (kind) {
    case FcidumpError::Kind::Parse: return "parse error";
    case FcidumpError::Kind::Range: return "range error";
    case FcidumpError::Kind::Consistency: return "consistency error";
    }
    return "error";
}

constexpr double kDuplicateTolerance = 1e-12;

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

bool is_header_end(const std::string& line) {
    const std::string u = upper(line);
    if (u.find("&END") != std::string::npos) return true;
    const auto first = u.find_first_not_of(" \t\r");
    return first != std::string::npos && u[first] == '/' &&
           u.find_first_not_of(" \t\r", first + 1) == std::string::npos;
}

std::optional<int> leading_int(const std::string& value) {
    std::istringstream is(value);
    int v = 0;
    if (is >> v) return v;
    return std::nullopt;
}

} // namespace

FcidumpError::FcidumpError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error("FCIDUMP " + kind_prefix(kind) + " at line " + std::to_string(line) + ": " + what)
    , kind_(kind)
    , line_(line) {}

IntegralTable::IntegralTable(int n_spatial, int n_elec, int ms2)
    : n_spatial_(n_spatial), n_elec_(n_elec), ms2_(ms2) {
    if (n_spatial < 1) throw std::invalid_argument("IntegralTable: n_spatial must be >= 1");
    if (n_elec < 0 || std::abs(ms2) > n_elec || ((n_elec + ms2) & 1))
        throw std::invalid_argument("IntegralTable: inconsistent NELEC/MS2");
    if ((n_elec + ms2) / 2 > n_spatial || (n_elec - ms2) / 2 > n_spatial)
        throw std::invalid_argument("IntegralTable: more electrons than orbitals");
    const auto k = static_cast<std::size_t>(n_spatial);
    h1_.assign(k * k, 0.0);
    pair_.resize(k * k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < k; ++q)
            pair_[p * k + q] = static_cast<std::int32_t>(pair_index(p, q));
    const std::size_t npair = k * (k + 1) / 2;
    h2_.assign(npair * (npair + 1) / 2, 0.0);
}

void IntegralTable::set_h1(int p, int q, double v) {
    h1_[static_cast<std::size_t>(p) * n_spatial_ + q] = v;
    h1_[static_cast<std::size_t>(q) * n_spatial_ + p] = v;
}

void IntegralTable::set_h2(int p, int q, int r, int s, double v) {
    h2_[pair_index(pair(p, q), pair(r, s))] = v;
}

double spin_orbital_h1(const IntegralTable& table, int p, int q) {
    const int n = table.n_spin_orbitals();
    if (p < 0 || q < 0 || p >= n || q >= n)
        throw std::out_of_range("spin_orbital_h1: index out of range");
    if ((p ^ q) & 1) return 0.0;
    return table.h1(p >> 1, q >> 1);
}

IntegralTable parse_fcidump(std::istream& in, std::vector<std::string>* warnings) {
    std::string line;
    std::size_t lineno = 0;
    std::string header;
    bool header_closed = false;
    while (std::getline(in, line)) {
        ++lineno;
        header += ' ';
        header += line;
        if (is_header_end(line)) {
            header_closed = true;
            break;
        }
    }
    if (!header_closed) throw FcidumpError(FcidumpError::Kind::Parse, lineno, "missing header terminator");

    // key = value pairs; a value runs until the next key
    std::string body = upper(header);
    for (const char* marker : {"&FCI", "&END"}) {
        for (auto pos = body.find(marker); pos != std::string::npos; pos = body.find(marker))
            body.replace(pos, std::char_traits<char>::length(marker), " ");
    }
    static const std::regex key_re(R"(([A-Z_][A-Z0-9_]*)\s*=)");
    std::map<std::string, std::string> keys;
    struct KeyPos {
        std::string name;
        std::size_t key_begin;
        std::size_t value_begin;
    };
    std::vector<KeyPos> found;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), key_re); it != std::sregex_iterator(); ++it) {
        const auto pos = static_cast<std::size_t>(it->position());
        found.push_back({(*it)[1].str(), pos, pos + static_cast<std::size_t>(it->length())});
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
        const std::size_t end = i + 1 < found.size() ? found[i + 1].key_begin : body.size();
        keys[found[i].name] = body.substr(found[i].value_begin, end - found[i].value_begin);
    }

    auto require = [&](const char* name) {
        const auto it = keys.find(name);
        if (it == keys.end())
            throw FcidumpError(FcidumpError::Kind::Parse, lineno, std::string("header is missing ") + name);
        const auto v = leading_int(it->second);
        if (!v) throw FcidumpError(FcidumpError::Kind::Parse, lineno, std::string("malformed value for ") + name);
        return *v;
    };
    const int norb = require("NORB");
    const int nelec = require("NELEC");
    int ms2 = 0;
    if (keys.contains("MS2")) ms2 = require("MS2");
    if (warnings) {
        for (const auto& [key, value] : keys) {
            if (key == "NORB" || key == "NELEC" || key == "MS2" || key == "ORBSYM" || key == "ISYM") continue;
            warnings->push_back("ignoring unrecognized FCIDUMP header key " + key);
        }
    }
    if (norb < 1) throw FcidumpError(FcidumpError::Kind::Parse, lineno, "NORB must be positive");

    IntegralTable table = [&] {
        try {
            return IntegralTable(norb, nelec, ms2);
        } catch (const std::invalid_argument& e) {
            throw FcidumpError(FcidumpError::Kind::Parse, lineno, e.what());
        }
    }();

    // Seen flags detect conflicting duplicates of the same canonical entry.
    std::vector<std::uint8_t> seen_h2(table.h2_storage_size(), 0);
    std::vector<std::uint8_t> seen_h1(static_cast<std::size_t>(norb) * norb, 0);
    bool seen_core = false;

    auto check_duplicate = [&](std::uint8_t& seen, double old_value, double value) {
        if (seen && std::abs(old_value - value) > kDuplicateTolerance) {
            std::ostringstream msg;
            msg << std::setprecision(17) << "conflicting duplicate record (" << old_value << " vs " << value << ")";
            throw FcidumpError(FcidumpError::Kind::Consistency, lineno, msg.str());
        }
        seen = 1;
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        // Fortran writers may emit D exponents.
        std::replace(line.begin(), line.end(), 'D', 'E');
        std::replace(line.begin(), line.end(), 'd', 'e');
        std::istringstream is(line);
        double value = 0.0;
        long long idx[4] = {0, 0, 0, 0};
        if (!(is >> value >> idx[0] >> idx[1] >> idx[2] >> idx[3]))
            throw FcidumpError(FcidumpError::Kind::Parse, lineno, "malformed record '" + line + "'");
        std::string extra;
        if (is >> extra) throw FcidumpError(FcidumpError::Kind::Parse, lineno, "trailing data in record");
        for (long long v : idx) {
            if (v < 0 || v > norb)
                throw FcidumpError(FcidumpError::Kind::Range, lineno,
                                   "orbital index " + std::to_string(v) + " outside [1, " + std::to_string(norb) + "]");
        }
        const int i = static_cast<int>(idx[0]) - 1, j = static_cast<int>(idx[1]) - 1;
        const int k = static_cast<int>(idx[2]) - 1, l = static_cast<int>(idx[3]) - 1;
        if (idx[0] == 0 && idx[1] == 0 && idx[2] == 0 && idx[3] == 0) {
            std::uint8_t flag = seen_core ? 1 : 0;
            check_duplicate(flag, table.e_core(), value);
            seen_core = true;
            table.set_e_core(value);
        } else if (idx[2] == 0 && idx[3] == 0) {
            if (idx[0] == 0 || idx[1] == 0)
                throw FcidumpError(FcidumpError::Kind::Range, lineno, "one-electron record with zero index");
            const std::size_t a = static_cast<std::size_t>(std::max(i, j)) * norb + std::min(i, j);
            check_duplicate(seen_h1[a], table.h1(i, j), value);
            table.set_h1(i, j, value);
        } else {
            if (idx[0] == 0 || idx[1] == 0 || idx[2] == 0 || idx[3] == 0)
                throw FcidumpError(FcidumpError::Kind::Range, lineno, "two-electron record with zero index");
            const std::size_t slot = IntegralTable::pair_index(table.pair(i, j), table.pair(k, l));
            check_duplicate(seen_h2[slot], table.h2(i, j, k, l), value);
            table.set_h2(i, j, k, l, value);
        }
    }
    return table;
}

IntegralTable load_fcidump(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open FCIDUMP file '" + path + "'");
    return parse_fcidump(in, warnings);
}

void write_fcidump(std::ostream& out, const IntegralTable& table) {
    const int k = table.n_spatial();
    out << " &FCI NORB=" << k << ",NELEC=" << table.n_elec() << ",MS2=" << table.ms2() << ",\n &END\n";
    out << std::setprecision(17) << std::scientific;
    for (int p = 0; p < k; ++p)
        for (int q = 0; q <= p; ++q)
            for (int r = 0; r < k; ++r)
                for (int s = 0; s <= r; ++s) {
                    if (table.pair(r, s) > table.pair(p, q)) continue;
                    const double v = table.h2(p, q, r, s);
                    if (v != 0.0) out << v << ' ' << p + 1 << ' ' << q + 1 << ' ' << r + 1 << ' ' << s + 1 << '\n';
                }
    for (int p = 0; p < k; ++p)
        for (int q = 0; q <= p; ++q) {
            const double v = table.h1(p, q);
            if (v != 0.0) out << v << ' ' << p + 1 << ' ' << q + 1 << " 0 0\n";
        }
    out << table.e_core() << " 0 0 0 0\n";
}

} // namespace nqs
