// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <nqs/vmc.hpp>

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace nqs;

namespace {

void randomize(Ansatz& a, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (auto& t : a.params().tensors())
        for (double& v : t.value) v = g(rng);
}

SampleBatch full_batch(const FciBasis& basis) {
    SampleBatch b;
    b.depth = basis.states().empty() ? 0 : basis[0].size() / 2;
    for (const Onv& n : basis.states()) b.push_back(n, 1, 0.0);
    return b;
}

/// <Psi|H|Psi> / <Psi|Psi> over the whole determinant space.
std::pair<std::vector<double>, std::vector<std::complex<double>>> full_space_terms(const Ansatz& a,
                                                                                   const IntegralTable& t,
                                                                                   const SampleBatch& all) {
    std::vector<double> w(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) w[i] = std::exp(2.0 * a.evaluate(all.prefixes[i]).log_amplitude);
    const LocalEnergyReport r = local_energy_batch(all, a, t, ElocMode::Accurate);
    return {w, r.values};
}

double full_space_energy(const Ansatz& a, const IntegralTable& t, const SampleBatch& all) {
    const auto [w, e] = full_space_terms(a, t, all);
    return energy_estimate(w, e).mean.real();
}

TrainConfig quick_train(int iterations) {
    TrainConfig c;
    c.n_count = 2000;
    c.iterations = iterations;
    c.n_warmup = 20;
    c.seed = 4;
    return c;
}

std::vector<double> flat(const Ansatz& a) {
    std::vector<double> out;
    for (const auto& t : a.params().tensors()) out.insert(out.end(), t.value.begin(), t.value.end());
    return out;
}

} // namespace

TEST_CASE("count-weighted mean") {
    SampleBatch b;
    b.depth = 1;
    b.push_back(Onv::from_string("10"), 3, 0.0);
    b.push_back(Onv::from_string("01"), 1, 0.0);
    const std::vector<std::complex<double>> e{0.0, 4.0};
    const EnergyEstimate est = energy_estimate(b, e);
    CHECK(est.mean == std::complex<double>(1.0, 0.0));
    CHECK(est.variance == doctest::Approx(3.0));
}

TEST_CASE("constant local energy has zero variance") {
    SampleBatch b;
    b.depth = 1;
    for (int i = 0; i < 4; ++i) b.push_back(Onv::from_string(i % 2 ? "10" : "01"), 5, 0.0);
    const std::vector<std::complex<double>> e(4, {-1.25, 0.0});
    const EnergyEstimate est = energy_estimate(b, e);
    CHECK(est.mean.real() == -1.25);
    CHECK(est.variance == 0.0);
}

TEST_CASE("estimator argument errors") {
    SampleBatch empty;
    CHECK_THROWS_AS((void)energy_estimate(empty, std::vector<std::complex<double>>{}), std::invalid_argument);
    SampleBatch b;
    b.push_back(Onv::from_string("10"), 1, 0.0);
    CHECK_THROWS_AS((void)energy_estimate(b, std::vector<std::complex<double>>(2)), std::invalid_argument);
}

TEST_CASE("exact amplitudes give the ground energy") {
    const IntegralTable t = test::h2_table();
    const FciResult fci = fci_ground_state(t, 1, 1);
    const FciBasis basis(2, 1, 1);
    AmplitudeTable psi;
    SampleBatch b;
    b.depth = 2;
    std::vector<double> w;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (std::abs(fci.vector[i]) < 1e-12) continue;
        psi.insert(basis[i], std::complex<double>(fci.vector[i], 0.0));
        b.push_back(basis[i], 1, 0.0);
    }
    const LocalEnergyReport r = local_energy_batch(b, psi, t, ElocMode::Accurate);
    const EnergyEstimate est = energy_estimate(b, r.values);
    CHECK(std::abs(est.mean.real() - test::kH2Fci) < 1e-8);
    CHECK(est.variance < 1e-12);
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_schedule(0, 64, 2000) == 0.0);
    CHECK(lr_schedule(2000, 64, 2000) == doctest::Approx(2.7944e-3).epsilon(1e-4));
    CHECK(lr_schedule(2000, 64, 2000) == doctest::Approx(0.125 / std::sqrt(2001.0)).epsilon(1e-15));
    CHECK(lr_schedule(10, 64, 2000, 0.5) == doctest::Approx(0.5 * lr_schedule(10, 64, 2000)));
    for (std::int64_t t = 1; t < 2000; ++t) CHECK(lr_schedule(t, 64, 2000) > lr_schedule(t - 1, 64, 2000));
    for (std::int64_t t = 2000; t < 10000; t += 7) CHECK(lr_schedule(t + 1, 64, 2000) < lr_schedule(t, 64, 2000));
}

TEST_CASE("centered weights vanish for constant local energy") {
    Ansatz a(test::small_config(2, 1, 1));
    randomize(a, 0.3, 1);
    const FciBasis basis(2, 1, 1);
    const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
    const std::vector<std::complex<double>> e(4, {-0.7, 0.2});
    const auto gw = gradient_weights(w, e, {-0.7, 0.2});
    for (const auto& x : gw) CHECK(x == std::complex<double>{});
    gradient_assemble(basis.states(), w, e, {-0.7, 0.2}, a);
    for (const auto& t : a.params().tensors())
        for (double g : t.grad) CHECK(g == 0.0);
}

TEST_CASE("scaling counts leaves the gradient unchanged") {
    const IntegralTable t = test::h4_table();
    Ansatz a(test::small_config(4, 2, 2));
    randomize(a, 0.3, 2);
    const SampleBatch b = hybrid_sample(a, 5000, {1, 0});
    const LocalEnergyReport r = local_energy_batch(b, a, t, ElocMode::Accurate);
    const auto mean = energy_estimate(b, r.values).mean;
    gradient_assemble(b, r.values, mean, a);
    std::vector<double> g1;
    for (const auto& x : a.params().tensors()) g1.insert(g1.end(), x.grad.begin(), x.grad.end());
    SampleBatch scaled = b;
    for (auto& c : scaled.counts) c *= 7;
    const auto mean7 = energy_estimate(scaled, r.values).mean;
    CHECK(std::abs(mean7 - mean) < 1e-13);
    gradient_assemble(scaled, r.values, mean7, a);
    std::size_t i = 0;
    for (const auto& x : a.params().tensors())
        for (double g : x.grad) {
            CHECK(g == doctest::Approx(g1[i]).epsilon(1e-10));
            ++i;
        }
    CHECK_THROWS_AS(gradient_assemble(b, std::vector<std::complex<double>>(1), mean, a), std::invalid_argument);
}

TEST_CASE("assembled gradient matches finite differences of the energy") {
    struct Case {
        IntegralTable table;
        AnsatzConfig config;
    };
    AnsatzConfig toy = test::small_config(2, 1, 1);
    toy.n_layers = 1;
    toy.d_model = 4;
    toy.phase_hidden = {4};
    std::vector<Case> cases{{test::h2_table(), toy}, {test::h4_table(), test::small_config(4, 2, 2)}};
    for (auto& c : cases) {
        Ansatz a(c.config);
        randomize(a, 0.4, 3);
        const FciBasis basis(c.table.n_spatial(), c.table.n_alpha(), c.table.n_beta());
        const SampleBatch all = full_batch(basis);
        const auto [w, e] = full_space_terms(a, c.table, all);
        gradient_assemble(basis.states(), w, e, energy_estimate(w, e).mean, a);
        const double h = 1e-5;
        double worst = 0.0;
        std::string where;
        for (auto& t : a.params().tensors())
            for (std::size_t j = 0; j < t.value.size(); ++j) {
                const double keep = t.value[j];
                t.value[j] = keep + h;
                const double ep = full_space_energy(a, c.table, all);
                t.value[j] = keep - h;
                const double em = full_space_energy(a, c.table, all);
                t.value[j] = keep;
                const double fd = (ep - em) / (2.0 * h);
                const double bound = std::max(1e-3 * std::max(std::abs(fd), std::abs(t.grad[j])), 1e-8);
                const double ratio = std::abs(fd - t.grad[j]) / bound;
                if (ratio > worst) {
                    worst = ratio;
                    where = t.name + "[" + std::to_string(j) + "]";
                }
            }
        INFO("worst parameter " << where);
        CHECK(worst <= 1.0);
    }
}

TEST_CASE("energy is real when the phase is zero") {
    const IntegralTable t = test::h4_table();
    Ansatz a(test::small_config(4, 2, 2));
    randomize(a, 0.4, 5);
    for (auto& x : a.params().tensors())
        if (x.name.starts_with("phase.")) std::fill(x.value.begin(), x.value.end(), 0.0);
    const SampleBatch b = hybrid_sample(a, 10000, {2, 0});
    const LocalEnergyReport r = local_energy_batch(b, a, t, ElocMode::Accurate);
    CHECK(std::abs(energy_estimate(b, r.values).mean.imag()) < 1e-10);
}

TEST_CASE("full-space energy respects the variational bound") {
    for (const IntegralTable& t : {test::h2_table(), test::h4_table()}) {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            Ansatz a(test::small_config(t.n_spatial(), t.n_alpha(), t.n_beta(), seed));
            randomize(a, 0.5, seed);
            const FciBasis basis(t.n_spatial(), t.n_alpha(), t.n_beta());
            const double e = full_space_energy(a, t, full_batch(basis));
            CHECK(e >= fci_ground_state(t, t.n_alpha(), t.n_beta()).e0 - 1e-10);
        }
    }
}

TEST_CASE("AdamW step") {
    ParameterSet p;
    Tensor& x = p.add("x", {2});
    x.value = {1.0, -2.0};
    x.grad = {0.5, -0.5};
    AdamW opt;
    opt.step(p, 0.1);
    CHECK(opt.steps() == 1);
    // first step moves each coordinate by lr against the gradient sign, after decay
    CHECK(p.tensors()[0].value[0] == doctest::Approx(1.0 * (1 - 0.1 * 0.01) - 0.1).epsilon(1e-7));
    CHECK(p.tensors()[0].value[1] == doctest::Approx(-2.0 * (1 - 0.1 * 0.01) + 0.1).epsilon(1e-7));
    p.tensors()[0].grad = {0.0, 0.0};
    AdamW still(AdamWConfig{.weight_decay = 0.0});
    const auto before = p.tensors()[0].value;
    still.step(p, 0.1);
    CHECK(p.tensors()[0].value == before);
}

TEST_CASE("train config validation and round trip") {
    TrainConfig c = quick_train(3);
    c.k = 64;
    c.plan = {{2}, {1}};
    c.strategy = BalanceStrategy::UniqueSplit;
    c.eloc_mode = ElocMode::SampleSpace;
    CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
    c.k = kUnboundedChunk;
    CHECK(c.to_json()["k"] == "inf");
    CHECK(TrainConfig::from_json(c.to_json()).k == kUnboundedChunk);
    TrainConfig bad = quick_train(1);
    bad.n_count = 0;
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
    bad = quick_train(1);
    bad.n_warmup = 0;
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
    bad = quick_train(1);
    bad.plan = {{2}, {2}};
    CHECK_THROWS_AS(bad.validate(2), ConfigError);
}

TEST_CASE("trainer rejects a mismatched ansatz") {
    const IntegralTable t = test::h2_table();
    Ansatz a(test::small_config(4, 2, 2));
    CHECK_THROWS(Trainer(quick_train(1), t, a));
}

TEST_CASE("zero iterations leave the parameters untouched") {
    const IntegralTable t = test::h2_table();
    Ansatz a(test::small_config(2, 1, 1));
    const auto before = flat(a);
    Trainer trainer(quick_train(0), t, a);
    std::ostringstream metrics;
    const auto out = train(trainer, &metrics);
    CHECK(out.empty());
    CHECK(metrics.str().empty());
    CHECK(flat(a) == before);
    CHECK(trainer.checkpoint().meta["iteration"] == 0);
}

TEST_CASE("restart reproduces the uninterrupted run bit for bit") {
    const IntegralTable t = test::h4_table();
    for (const PartitionPlan& plan : {PartitionPlan{}, PartitionPlan{{2, 2}, {1, 2}}}) {
        TrainConfig cfg = quick_train(6);
        cfg.plan = plan;
        Ansatz full(test::small_config(4, 2, 2));
        Trainer a(cfg, t, full);
        const auto straight = train(a, nullptr);

        Ansatz first(test::small_config(4, 2, 2));
        TrainConfig half = cfg;
        half.iterations = 3;
        Trainer b(half, t, first);
        (void)train(b, nullptr);
        std::stringstream ss;
        write_checkpoint(ss, b.checkpoint());

        Ansatz second(test::small_config(4, 2, 2));
        randomize(second, 0.3, 77);
        Trainer c(cfg, t, second);
        c.restore(read_checkpoint(ss));
        CHECK(c.iteration() == 3);
        const auto resumed = train(c, nullptr);
        REQUIRE(resumed.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(resumed[i].iteration == straight[i + 3].iteration);
            CHECK(resumed[i].energy == straight[i + 3].energy);
            CHECK(resumed[i].unique_per_rank == straight[i + 3].unique_per_rank);
        }
        CHECK(flat(second) == flat(full));
    }
}

TEST_CASE("restore rejects a different architecture") {
    const IntegralTable t = test::h4_table();
    Ansatz a(test::small_config(4, 2, 2));
    Trainer tr(quick_train(1), t, a);
    const CheckpointData data = tr.checkpoint();
    AnsatzConfig other = test::small_config(4, 2, 2);
    other.d_model = 16;
    Ansatz b(other);
    Trainer tb(quick_train(1), t, b);
    CHECK_THROWS_AS(tb.restore(data), CheckpointError);
}

TEST_CASE("metrics records carry the per-rank breadth") {
    const IntegralTable t = test::h4_table();
    Ansatz a(test::small_config(4, 2, 2));
    TrainConfig cfg = quick_train(2);
    cfg.plan = {{2}, {2}};
    Trainer trainer(cfg, t, a);
    std::ostringstream metrics;
    const auto out = train(trainer, &metrics);
    REQUIRE(out.size() == 2);
    CHECK(out[0].unique_per_rank.size() == 2);
    CHECK(out[0].max_unique() >= out[0].min_unique());
    std::istringstream lines(metrics.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("energy"));
        CHECK(j.contains("timing"));
        ++n;
    }
    CHECK(n == 2);
    CHECK(metrics_header(cfg, a)["header"] == true);
}

TEST_CASE("short H2 training lowers the energy") {
    const IntegralTable t = test::h2_table();
    Ansatz a(test::small_config(2, 1, 1));
    TrainConfig cfg = quick_train(60);
    cfg.lr_scale = 4.0;
    Trainer trainer(cfg, t, a);
    const auto out = train(trainer, nullptr);
    CHECK(out.back().energy < out.front().energy);
    CHECK(out.back().energy >= test::kH2Fci - 1e-9);
}
