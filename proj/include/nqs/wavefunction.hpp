// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nqs/onv.hpp>

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <unordered_map>

namespace nqs {

/// Psi(n) = exp(log_amplitude + i * phase). A zero amplitude has log_amplitude = -inf.
struct WavefunctionValue {
    double log_amplitude = -std::numeric_limits<double>::infinity();
    double phase = 0.0;

    [[nodiscard]] bool is_zero() const noexcept { return log_amplitude == -std::numeric_limits<double>::infinity(); }
    [[nodiscard]] std::complex<double> log_value() const noexcept { return {log_amplitude, phase}; }
    [[nodiscard]] std::complex<double> value() const noexcept {
        return is_zero() ? std::complex<double>{} : std::polar(std::exp(log_amplitude), phase);
    }
};

/// Anything that maps configurations to amplitudes.
class WavefunctionEvaluator {
public:
    virtual ~WavefunctionEvaluator() = default;
    virtual void evaluate(std::span<const Onv> configs, std::span<WavefunctionValue> out) const = 0;
};

/// Explicit amplitudes; configurations outside the table have Psi = 0.
class AmplitudeTable final : public WavefunctionEvaluator {
public:
    AmplitudeTable() = default;

    void insert(const Onv& n, WavefunctionValue v) { table_[n] = v; }
    void insert(const Onv& n, std::complex<double> amplitude) {
        if (amplitude == std::complex<double>{}) table_[n] = WavefunctionValue{};
        else table_[n] = WavefunctionValue{std::log(std::abs(amplitude)), std::arg(amplitude)};
    }
    void reserve(std::size_t n) { table_.reserve(n); }
    [[nodiscard]] std::size_t size() const noexcept { return table_.size(); }
    [[nodiscard]] const WavefunctionValue* find(const Onv& n) const {
        const auto it = table_.find(n);
        return it == table_.end() ? nullptr : &it->second;
    }

    void evaluate(std::span<const Onv> configs, std::span<WavefunctionValue> out) const override {
        for (std::size_t i = 0; i < configs.size(); ++i) {
            const auto* v = find(configs[i]);
            out[i] = v ? *v : WavefunctionValue{};
        }
    }

private:
    std::unordered_map<Onv, WavefunctionValue, OnvHash> table_;
};

} // namespace nqs
