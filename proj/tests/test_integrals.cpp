// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace nqs;

namespace {

const char* kHeader = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n";

IntegralTable parse(const std::string& text, std::vector<std::string>* warnings = nullptr) {
    std::istringstream in(text);
    return parse_fcidump(in, warnings);
}

FcidumpError::Kind error_kind(const std::string& text) {
    try {
        (void)parse(text);
    } catch (const FcidumpError& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return FcidumpError::Kind::Parse;
}

} // namespace

TEST_CASE("core, one- and two-electron records map to their fields") {
    const auto t = parse(std::string(kHeader) + "0.5 0 0 0 0\n-1.25 1 1 0 0\n0.67 1 2 1 2\n");
    CHECK(t.n_spatial() == 2);
    CHECK(t.n_elec() == 2);
    CHECK(t.e_core() == 0.5);
    CHECK(t.h1(0, 0) == -1.25);
    const int perms[8][4] = {{0, 1, 0, 1}, {1, 0, 0, 1}, {0, 1, 1, 0}, {1, 0, 1, 0},
                             {0, 1, 0, 1}, {1, 0, 0, 1}, {0, 1, 1, 0}, {1, 0, 1, 0}};
    for (const auto& p : perms) CHECK(t.h2(p[0], p[1], p[2], p[3]) == 0.67);
    CHECK(t.h2(0, 0, 1, 1) == 0.0);
}

TEST_CASE("malformed input raises typed errors") {
    CHECK(error_kind(" &FCI NELEC=2 &END\n") == FcidumpError::Kind::Parse);
    CHECK(error_kind(" &FCI NORB=2,NELEC=2\n") == FcidumpError::Kind::Parse);
    CHECK(error_kind(std::string(kHeader) + "0.1 3 1 0 0\n") == FcidumpError::Kind::Range);
    CHECK(error_kind(std::string(kHeader) + "0.1 1 1 1 1\n0.2 1 1 1 1\n") == FcidumpError::Kind::Consistency);
    CHECK(error_kind(std::string(kHeader) + "0.1 2 1 0 0\n0.2 1 2 0 0\n") == FcidumpError::Kind::Consistency);
    CHECK(error_kind(std::string(kHeader) + "abc 1 1 0 0\n") == FcidumpError::Kind::Parse);
    // equal duplicates are accepted
    CHECK_NOTHROW((void)parse(std::string(kHeader) + "0.1 2 1 2 1\n0.1 1 2 1 2\n"));
}

TEST_CASE("parse errors carry the line number") {
    try {
        (void)parse(std::string(kHeader) + "0.1 1 1 0 0\n0.1 9 1 0 0\n");
        FAIL("expected a range error");
    } catch (const FcidumpError& e) {
        CHECK(e.line() == 6);
    }
}

TEST_CASE("unknown header keys only warn") {
    std::vector<std::string> warnings;
    const auto t = parse(" &FCI NORB=1,NELEC=1,MS2=1,UHF=.FALSE. &END\n-0.5 1 1 0 0\n", &warnings);
    CHECK(t.h1(0, 0) == -0.5);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("UHF") != std::string::npos);
}

TEST_CASE("spin-orbital one-electron lookup") {
    const auto t = parse(std::string(kHeader) + "-1.0 1 1 0 0\n0.3 1 2 0 0\n-0.7 2 2 0 0\n");
    CHECK(spin_orbital_h1(t, 0, 2) == 0.3);
    CHECK(spin_orbital_h1(t, 0, 1) == 0.0);
    CHECK(spin_orbital_h1(t, 3, 3) == -0.7);
    CHECK(spin_orbital_h1(t, 1, 3) == 0.3);
    CHECK_THROWS_AS((void)spin_orbital_h1(t, 0, 4), std::out_of_range);
    CHECK_THROWS_AS((void)spin_orbital_h1(t, -1, 0), std::out_of_range);
}

TEST_CASE("two-electron lookups agree over all eight permutations") {
    const auto t = random_table(5, 4, 0, 11);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const int p = static_cast<int>(rng() % 5), q = static_cast<int>(rng() % 5);
        const int r = static_cast<int>(rng() % 5), s = static_cast<int>(rng() % 5);
        const double v = t.h2(p, q, r, s);
        CHECK(t.h2(q, p, r, s) == v);
        CHECK(t.h2(p, q, s, r) == v);
        CHECK(t.h2(q, p, s, r) == v);
        CHECK(t.h2(r, s, p, q) == v);
        CHECK(t.h2(s, r, p, q) == v);
        CHECK(t.h2(r, s, q, p) == v);
        CHECK(t.h2(s, r, q, p) == v);
    }
}

TEST_CASE("write then parse round-trips exactly") {
    for (const auto& t : {random_table(4, 4, 0, 3), random_table(6, 5, 1, 4), test::h4_table()}) {
        std::stringstream ss;
        write_fcidump(ss, t);
        CHECK(parse_fcidump(ss) == t);
    }
}

TEST_CASE("record order and whitespace do not matter") {
    std::stringstream ss;
    const auto t = random_table(4, 2, 0, 9);
    write_fcidump(ss, t);
    std::string text = ss.str();
    const auto end = text.find("&END");
    const auto body_start = text.find('\n', end) + 1;
    std::vector<std::string> lines;
    std::istringstream body(text.substr(body_start));
    for (std::string l; std::getline(body, l);) lines.push_back("   " + l + " \t ");
    std::mt19937_64 rng(2);
    std::shuffle(lines.begin(), lines.end(), rng);
    std::string shuffled = text.substr(0, body_start);
    for (const auto& l : lines) shuffled += l + "\n\n";
    CHECK(parse(shuffled) == t);
}

TEST_CASE("committed fixtures load with consistent electron counts") {
    const auto h2 = test::h2_table();
    CHECK(h2.n_spatial() == 2);
    CHECK(h2.n_alpha() == 1);
    CHECK(h2.n_beta() == 1);
    const auto h4 = test::h4_table();
    CHECK(h4.n_spatial() == 4);
    CHECK(h4.n_elec() == 4);
    const auto n2 = test::n2_table();
    CHECK(n2.n_spatial() == 10);
    CHECK(n2.n_alpha() == 7);
    CHECK(n2.n_beta() == 7);
    for (int p = 0; p < n2.n_spatial(); ++p)
        for (int q = 0; q < n2.n_spatial(); ++q) CHECK(n2.h1(p, q) == n2.h1(q, p));
}

TEST_CASE("missing files are reported") {
    CHECK_THROWS_AS((void)load_fcidump("/nonexistent/x.fcidump"), std::runtime_error);
}
