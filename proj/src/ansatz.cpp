// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/ansatz.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace nqs {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// y = x W + b with W stored [n_in x n_out]
void linear(const double* x, int n_in, const double* w, const double* b, int n_out, double* y) {
    for (int o = 0; o < n_out; ++o) y[o] = b[o];
    for (int i = 0; i < n_in; ++i) {
        const double xi = x[i];
        const double* row = w + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_out);
        for (int o = 0; o < n_out; ++o) y[o] += xi * row[o];
    }
}

// dW += x^T dy, db += dy, dx = dy W^T (dx may be null)
void linear_backward(const double* x, const double* dy, int n_in, int n_out, const double* w, double* dw, double* db,
                     double* dx) {
    for (int o = 0; o < n_out; ++o) db[o] += dy[o];
    for (int i = 0; i < n_in; ++i) {
        const double xi = x[i];
        const double* row = w + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_out);
        double* drow = dw + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_out);
        double acc = 0.0;
        for (int o = 0; o < n_out; ++o) {
            drow[o] += xi * dy[o];
            acc += dy[o] * row[o];
        }
        if (dx) dx[i] = acc;
    }
}

void layer_norm(const double* x, int n, const double* g, const double* b, double* y, double* xhat, double* rstd) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= n;
    const double r = 1.0 / std::sqrt(var + kLnEps);
    for (int i = 0; i < n; ++i) {
        const double h = (x[i] - mean) * r;
        if (xhat) xhat[i] = h;
        y[i] = g[i] * h + b[i];
    }
    if (rstd) *rstd = r;
}

// dx += LN'(dy)
void layer_norm_backward(const double* dy, const double* xhat, double rstd, const double* g, int n, double* dg,
                         double* db, double* dx) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = dy[i] * g[i];
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
        mean_d += d;
        mean_dx += d * xhat[i];
    }
    mean_d /= n;
    mean_dx /= n;
    for (int i = 0; i < n; ++i) dx[i] += rstd * (dy[i] * g[i] - mean_d - xhat[i] * mean_dx);
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

double activate(PhaseActivation a, double x) { return a == PhaseActivation::Tanh ? std::tanh(x) : std::max(x, 0.0); }

double activate_grad(PhaseActivation a, double z, double y) {
    return a == PhaseActivation::Tanh ? 1.0 - y * y : (z > 0.0 ? 1.0 : 0.0);
}

void truncated_normal(std::vector<double>& v, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : v) {
        double z;
        do z = normal(rng);
        while (std::abs(z) > 2.0);
        x = kInitStd * z;
    }
}

double log_sum_exp_masked(const std::array<double, 4>& l, std::uint8_t mask) {
    double m = kNegInf;
    for (int j = 0; j < 4; ++j)
        if ((mask >> j) & 1) m = std::max(m, l[j]);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (int j = 0; j < 4; ++j)
        if ((mask >> j) & 1) s += std::exp(l[j] - m);
    return m + std::log(s);
}

const char* activation_name(PhaseActivation a) { return a == PhaseActivation::Tanh ? "tanh" : "relu"; }

} // namespace

void AnsatzConfig::validate() const {
    if (n_spatial < 1 || 2 * n_spatial > kMaxSpinOrbitals) throw std::invalid_argument("ansatz: bad orbital count");
    if (n_alpha < 0 || n_beta < 0 || n_alpha > n_spatial || n_beta > n_spatial)
        throw std::invalid_argument("ansatz: electron counts out of range");
    if (n_layers < 1 || n_head < 1 || d_model < 1) throw std::invalid_argument("ansatz: sizes must be positive");
    if (d_model % n_head != 0) throw std::invalid_argument("ansatz: d_model must be divisible by n_head");
    for (int h : phase_hidden)
        if (h < 1) throw std::invalid_argument("ansatz: phase hidden sizes must be positive");
}

nlohmann::json AnsatzConfig::to_json() const {
    return {{"n_spatial", n_spatial}, {"n_alpha", n_alpha},       {"n_beta", n_beta},
            {"n_layers", n_layers},   {"n_head", n_head},         {"d_model", d_model},
            {"phase_hidden", phase_hidden}, {"phase_activation", activation_name(phase_activation)},
            {"seed", seed}};
}

AnsatzConfig AnsatzConfig::from_json(const nlohmann::json& j) {
    AnsatzConfig c;
    c.n_spatial = j.at("n_spatial").get<int>();
    c.n_alpha = j.at("n_alpha").get<int>();
    c.n_beta = j.at("n_beta").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_head = j.at("n_head").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.phase_hidden = j.at("phase_hidden").get<std::vector<int>>();
    const auto act = j.at("phase_activation").get<std::string>();
    if (act == "tanh") c.phase_activation = PhaseActivation::Tanh;
    else if (act == "relu") c.phase_activation = PhaseActivation::Relu;
    else throw std::invalid_argument("ansatz: unknown phase activation '" + act + "'");
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Tensor& ParameterSet::add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    tensors_.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    return tensors_.back();
}

Tensor* ParameterSet::find(const std::string& name) {
    for (auto& t : tensors_)
        if (t.name == name) return &t;
    return nullptr;
}

const Tensor* ParameterSet::find(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return &t;
    return nullptr;
}

std::size_t ParameterSet::n_values() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

Distribution masked_softmax(const std::array<double, 4>& logits, std::uint8_t mask) {
    Distribution p{0.0, 0.0, 0.0, 0.0};
    double m = kNegInf;
    for (int j = 0; j < 4; ++j)
        if ((mask >> j) & 1) m = std::max(m, logits[j]);
    if (m == kNegInf) return p;
    double s = 0.0;
    for (int j = 0; j < 4; ++j)
        if ((mask >> j) & 1) {
            p[j] = std::exp(logits[j] - m);
            s += p[j];
        }
    for (double& x : p) x /= s;
    return p;
}

struct Ansatz::RowScratch {
    std::vector<double> x, h, qkv, att, tmp, f, scores;
    std::vector<double> local_k, local_v;
    std::vector<const double*> past_k, past_v;
    std::vector<double> new_k, new_v;

    explicit RowScratch(const AnsatzConfig& c) {
        const auto d = static_cast<std::size_t>(c.d_model);
        const auto L = static_cast<std::size_t>(c.n_layers);
        const auto K = static_cast<std::size_t>(c.n_spatial);
        x.resize(d);
        h.resize(d);
        qkv.resize(3 * d);
        att.resize(d);
        tmp.resize(d);
        f.resize(4 * d);
        scores.resize(K + 1);
        local_k.resize(L * K * d);
        local_v.resize(L * K * d);
        past_k.resize(L);
        past_v.resize(L);
        new_k.resize(L * d);
        new_v.resize(L * d);
    }
};

Ansatz::Ansatz(const AnsatzConfig& config) : config_(config) {
    config_.validate();
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto K = static_cast<std::size_t>(config_.n_spatial);
    std::vector<std::size_t> weights; // tensors drawn from the truncated normal
    std::vector<std::size_t> gains;   // layer-norm gains start at one

    auto add = [&](const std::string& name, std::vector<std::size_t> shape) {
        params_.add(name, std::move(shape));
        return params_.tensors().size() - 1;
    };
    tok_emb_ = add("amp.tok_emb", {5, d});
    weights.push_back(tok_emb_);
    pos_emb_ = add("amp.pos_emb", {K, d});
    weights.push_back(pos_emb_);
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string pre = "amp.h" + std::to_string(l) + ".";
        Layer L{};
        L.ln1_g = add(pre + "ln1.g", {d});
        L.ln1_b = add(pre + "ln1.b", {d});
        L.w_qkv = add(pre + "attn.w_qkv", {d, 3 * d});
        L.b_qkv = add(pre + "attn.b_qkv", {3 * d});
        L.w_o = add(pre + "attn.w_o", {d, d});
        L.b_o = add(pre + "attn.b_o", {d});
        L.ln2_g = add(pre + "ln2.g", {d});
        L.ln2_b = add(pre + "ln2.b", {d});
        L.w_fc = add(pre + "mlp.w_fc", {d, 4 * d});
        L.b_fc = add(pre + "mlp.b_fc", {4 * d});
        L.w_pr = add(pre + "mlp.w_proj", {4 * d, d});
        L.b_pr = add(pre + "mlp.b_proj", {d});
        weights.insert(weights.end(), {L.w_qkv, L.w_o, L.w_fc, L.w_pr});
        gains.insert(gains.end(), {L.ln1_g, L.ln2_g});
        layers_.push_back(L);
    }
    lnf_g_ = add("amp.lnf.g", {d});
    lnf_b_ = add("amp.lnf.b", {d});
    gains.push_back(lnf_g_);
    w_head_ = add("amp.head.w", {d, 4});
    b_head_ = add("amp.head.b", {4});
    weights.push_back(w_head_);

    std::size_t fan_in = 2 * K;
    for (std::size_t i = 0; i <= config_.phase_hidden.size(); ++i) {
        const std::size_t out = i < config_.phase_hidden.size() ? static_cast<std::size_t>(config_.phase_hidden[i]) : 1;
        const std::string pre = "phase.l" + std::to_string(i) + ".";
        phase_w_.push_back(add(pre + "w", {fan_in, out}));
        phase_b_.push_back(add(pre + "b", {out}));
        weights.push_back(phase_w_.back());
        fan_in = out;
    }

    std::mt19937_64 rng(config_.seed);
    std::sort(weights.begin(), weights.end());
    for (std::size_t idx : weights) truncated_normal(params_.tensors()[idx].value, rng);
    for (std::size_t idx : gains) std::fill(params_.tensors()[idx].value.begin(), params_.tensors()[idx].value.end(), 1.0);
}

std::array<int, 3> Ansatz::cache_shape() const { return {config_.n_layers, config_.n_spatial, config_.d_model}; }

void Ansatz::step_row(int pos, int input, const double* const* past_k, const double* const* past_v, double* new_k,
                      double* new_v, std::array<double, 4>& logits, RowScratch& s) const {
    const int d = config_.d_model;
    const int H = config_.n_head;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* tok = p(tok_emb_) + static_cast<std::size_t>(input) * static_cast<std::size_t>(d);
    const double* pe = p(pos_emb_) + static_cast<std::size_t>(pos) * static_cast<std::size_t>(d);
    double* x = s.x.data();
    for (int i = 0; i < d; ++i) x[i] = tok[i] + pe[i];

    for (int l = 0; l < config_.n_layers; ++l) {
        const Layer& L = layers_[static_cast<std::size_t>(l)];
        layer_norm(x, d, p(L.ln1_g), p(L.ln1_b), s.h.data(), nullptr, nullptr);
        linear(s.h.data(), d, p(L.w_qkv), p(L.b_qkv), 3 * d, s.qkv.data());
        const double* q = s.qkv.data();
        const double* kn = s.qkv.data() + d;
        const double* vn = s.qkv.data() + 2 * d;
        std::copy_n(kn, d, new_k + static_cast<std::size_t>(l) * static_cast<std::size_t>(d));
        std::copy_n(vn, d, new_v + static_cast<std::size_t>(l) * static_cast<std::size_t>(d));
        for (int hh = 0; hh < H; ++hh) {
            const int o = hh * dh;
            double mx = kNegInf;
            for (int j = 0; j <= pos; ++j) {
                const double* kj = j < pos ? past_k[l] + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) : kn;
                double acc = 0.0;
                for (int e = 0; e < dh; ++e) acc += q[o + e] * kj[o + e];
                s.scores[static_cast<std::size_t>(j)] = acc * scale;
                mx = std::max(mx, acc * scale);
            }
            double z = 0.0;
            for (int j = 0; j <= pos; ++j) {
                s.scores[static_cast<std::size_t>(j)] = std::exp(s.scores[static_cast<std::size_t>(j)] - mx);
                z += s.scores[static_cast<std::size_t>(j)];
            }
            for (int e = 0; e < dh; ++e) s.att[static_cast<std::size_t>(o + e)] = 0.0;
            for (int j = 0; j <= pos; ++j) {
                const double a = s.scores[static_cast<std::size_t>(j)] / z;
                const double* vj = j < pos ? past_v[l] + static_cast<std::size_t>(j) * static_cast<std::size_t>(d) : vn;
                for (int e = 0; e < dh; ++e) s.att[static_cast<std::size_t>(o + e)] += a * vj[o + e];
            }
        }
        linear(s.att.data(), d, p(L.w_o), p(L.b_o), d, s.tmp.data());
        for (int i = 0; i < d; ++i) x[i] += s.tmp[static_cast<std::size_t>(i)];
        layer_norm(x, d, p(L.ln2_g), p(L.ln2_b), s.h.data(), nullptr, nullptr);
        linear(s.h.data(), d, p(L.w_fc), p(L.b_fc), 4 * d, s.f.data());
        for (double& v : s.f) v = gelu(v);
        linear(s.f.data(), 4 * d, p(L.w_pr), p(L.b_pr), d, s.tmp.data());
        for (int i = 0; i < d; ++i) x[i] += s.tmp[static_cast<std::size_t>(i)];
    }
    layer_norm(x, d, p(lnf_g_), p(lnf_b_), s.h.data(), nullptr, nullptr);
    linear(s.h.data(), d, p(w_head_), p(b_head_), 4, logits.data());
}

std::array<double, 4> Ansatz::stateless_logits(const Onv& prefix, int depth, RowScratch& s) const {
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto K = static_cast<std::size_t>(config_.n_spatial);
    std::array<double, 4> logits{};
    for (int l = 0; l < config_.n_layers; ++l) {
        s.past_k[static_cast<std::size_t>(l)] = s.local_k.data() + static_cast<std::size_t>(l) * K * d;
        s.past_v[static_cast<std::size_t>(l)] = s.local_v.data() + static_cast<std::size_t>(l) * K * d;
    }
    for (int pos = 0; pos <= depth; ++pos) {
        step_row(pos, input_token(prefix, pos), s.past_k.data(), s.past_v.data(), s.new_k.data(), s.new_v.data(),
                 logits, s);
        for (int l = 0; l < config_.n_layers; ++l) {
            const std::size_t base = (static_cast<std::size_t>(l) * K + static_cast<std::size_t>(pos)) * d;
            std::copy_n(s.new_k.data() + static_cast<std::size_t>(l) * d, d, s.local_k.data() + base);
            std::copy_n(s.new_v.data() + static_cast<std::size_t>(l) * d, d, s.local_v.data() + base);
        }
    }
    return logits;
}

void Ansatz::conditionals(const SampleBatch& batch, std::span<Distribution> out) const {
    if (batch.depth < 0 || batch.depth >= config_.n_spatial)
        throw std::invalid_argument("conditionals: prefix length must be below K");
    if (out.size() != batch.size()) throw std::invalid_argument("conditionals: output size mismatch");
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel
    {
        RowScratch s(config_);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const Onv& pre = batch.prefixes[static_cast<std::size_t>(i)];
            const auto logits = stateless_logits(pre, batch.depth, s);
            out[static_cast<std::size_t>(i)] = masked_softmax(
                logits, prefix_mask(pre, batch.depth, config_.n_spatial, config_.n_alpha, config_.n_beta));
        }
    }
}

namespace {

void check_pool(const CachePool& pool, const std::array<int, 3>& shape) {
    if (pool.n_layers() != shape[0] || pool.max_seq() < shape[1] || pool.d_model() != shape[2])
        throw CacheError("ansatz: cache pool shape does not match the network");
}

} // namespace

void Ansatz::cached_conditionals(CachePool& pool, const SampleBatch& batch, std::span<Distribution> out) const {
    if (batch.depth < 0 || batch.depth >= config_.n_spatial)
        throw std::invalid_argument("conditionals: prefix length must be below K");
    if (out.size() != batch.size()) throw std::invalid_argument("conditionals: output size mismatch");
    check_pool(pool, cache_shape());
    if (pool.live_rows() != batch.size())
        throw CacheError("ansatz: cache holds " + std::to_string(pool.live_rows()) + " rows, batch has " +
                         std::to_string(batch.size()));
    const int depth = batch.depth;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        if (pool.valid_len(r) != depth) throw CacheError("ansatz: cache row length does not match prefix depth");
        const auto in = pool.inputs(r);
        for (int pos = 0; pos < depth; ++pos)
            if (in[static_cast<std::size_t>(pos)] != input_token(batch.prefixes[r], pos))
                throw CacheError("ansatz: cache row " + std::to_string(r) + " holds a different prefix");
    }

    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto L = static_cast<std::size_t>(config_.n_layers);
    const std::size_t rows = batch.size();
    std::vector<double> stage_k(L * rows * d), stage_v(L * rows * d);
    std::vector<std::uint8_t> tokens(rows);
    const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel
    {
        RowScratch s(config_);
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto r = static_cast<std::size_t>(i);
            for (std::size_t l = 0; l < L; ++l) {
                s.past_k[l] = pool.keys(static_cast<int>(l), r);
                s.past_v[l] = pool.values(static_cast<int>(l), r);
            }
            std::array<double, 4> logits{};
            const int input = input_token(batch.prefixes[r], depth);
            step_row(depth, input, s.past_k.data(), s.past_v.data(), s.new_k.data(), s.new_v.data(), logits, s);
            for (std::size_t l = 0; l < L; ++l) {
                std::copy_n(s.new_k.data() + l * d, d, stage_k.data() + (l * rows + r) * d);
                std::copy_n(s.new_v.data() + l * d, d, stage_v.data() + (l * rows + r) * d);
            }
            tokens[r] = static_cast<std::uint8_t>(input);
            out[r] = masked_softmax(logits,
                                    prefix_mask(batch.prefixes[r], depth, config_.n_spatial, config_.n_alpha,
                                                config_.n_beta));
        }
    }
    if (rows > 0) pool.append(stage_k, stage_v, tokens);
}

void Ansatz::prefill(CachePool& pool, const SampleBatch& batch) const {
    check_pool(pool, cache_shape());
    pool.activate(batch.size());
    if (batch.empty()) return;
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto L = static_cast<std::size_t>(config_.n_layers);
    const std::size_t rows = batch.size();
    std::vector<double> stage_k(L * rows * d), stage_v(L * rows * d);
    std::vector<std::uint8_t> tokens(rows);
    const auto n = static_cast<std::ptrdiff_t>(rows);
    for (int pos = 0; pos < batch.depth; ++pos) {
#pragma omp parallel
        {
            RowScratch s(config_);
#pragma omp for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                const auto r = static_cast<std::size_t>(i);
                for (std::size_t l = 0; l < L; ++l) {
                    s.past_k[l] = pool.keys(static_cast<int>(l), r);
                    s.past_v[l] = pool.values(static_cast<int>(l), r);
                }
                std::array<double, 4> logits{};
                const int input = input_token(batch.prefixes[r], pos);
                step_row(pos, input, s.past_k.data(), s.past_v.data(), s.new_k.data(), s.new_v.data(), logits, s);
                for (std::size_t l = 0; l < L; ++l) {
                    std::copy_n(s.new_k.data() + l * d, d, stage_k.data() + (l * rows + r) * d);
                    std::copy_n(s.new_v.data() + l * d, d, stage_v.data() + (l * rows + r) * d);
                }
                tokens[r] = static_cast<std::uint8_t>(input);
            }
        }
        pool.append(stage_k, stage_v, tokens);
    }
}

double Ansatz::phase_forward(const Onv& n, std::vector<std::vector<double>>* acts) const {
    const int nso = 2 * config_.n_spatial;
    std::vector<double> a(static_cast<std::size_t>(nso));
    for (int i = 0; i < nso; ++i) a[static_cast<std::size_t>(i)] = n.test(i) ? 1.0 : 0.0;
    if (acts) acts->push_back(a);
    const std::size_t n_lin = phase_w_.size();
    for (std::size_t i = 0; i < n_lin; ++i) {
        const Tensor& w = params_.tensors()[phase_w_[i]];
        const int n_in = static_cast<int>(w.shape[0]);
        const int n_out = static_cast<int>(w.shape[1]);
        std::vector<double> z(static_cast<std::size_t>(n_out));
        linear(a.data(), n_in, w.value.data(), p(phase_b_[i]), n_out, z.data());
        if (i + 1 < n_lin) {
            if (acts) acts->push_back(z);
            for (double& v : z) v = activate(config_.phase_activation, v);
        }
        a = std::move(z);
        if (acts) acts->push_back(a);
    }
    return a[0];
}

double Ansatz::phase(const Onv& n) const { return phase_forward(n, nullptr); }

WavefunctionValue Ansatz::evaluate(const Onv& n) const {
    RowScratch s(config_);
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto K = static_cast<std::size_t>(config_.n_spatial);
    for (int l = 0; l < config_.n_layers; ++l) {
        s.past_k[static_cast<std::size_t>(l)] = s.local_k.data() + static_cast<std::size_t>(l) * K * d;
        s.past_v[static_cast<std::size_t>(l)] = s.local_v.data() + static_cast<std::size_t>(l) * K * d;
    }
    WavefunctionValue out;
    double logp = 0.0;
    std::array<double, 4> logits{};
    for (int pos = 0; pos < config_.n_spatial; ++pos) {
        step_row(pos, input_token(n, pos), s.past_k.data(), s.past_v.data(), s.new_k.data(), s.new_v.data(), logits,
                 s);
        for (int l = 0; l < config_.n_layers; ++l) {
            const std::size_t base = (static_cast<std::size_t>(l) * K + static_cast<std::size_t>(pos)) * d;
            std::copy_n(s.new_k.data() + static_cast<std::size_t>(l) * d, d, s.local_k.data() + base);
            std::copy_n(s.new_v.data() + static_cast<std::size_t>(l) * d, d, s.local_v.data() + base);
        }
        const std::uint8_t mask = prefix_mask(n, pos, config_.n_spatial, config_.n_alpha, config_.n_beta);
        const int tok = token_at(n, pos);
        if (!((mask >> tok) & 1)) {
            logp = kNegInf;
            break;
        }
        logp += logits[static_cast<std::size_t>(tok)] - log_sum_exp_masked(logits, mask);
    }
    out.log_amplitude = 0.5 * logp;
    out.phase = phase_forward(n, nullptr);
    return out;
}

void Ansatz::evaluate(std::span<const Onv> configs, std::span<WavefunctionValue> out) const {
    if (out.size() != configs.size()) throw std::invalid_argument("evaluate: output size mismatch");
    const auto n = static_cast<std::ptrdiff_t>(configs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = evaluate(configs[static_cast<std::size_t>(i)]);
}

void Ansatz::backward(std::span<const Onv> configs, std::span<const std::complex<double>> weights) {
    if (configs.size() != weights.size())
        throw std::invalid_argument("backward: " + std::to_string(configs.size()) + " configurations but " +
                                    std::to_string(weights.size()) + " weights");
    params_.zero_grad();
    const int d = config_.d_model;
    const int H = config_.n_head;
    const int dh = d / H;
    const int T = config_.n_spatial;
    const int nL = config_.n_layers;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto D = static_cast<std::size_t>(d);
    const auto TT = static_cast<std::size_t>(T);
    auto& P = params_.tensors();
    auto g = [&P](std::size_t idx) { return P[idx].grad.data(); };

    // activations, reused across samples
    struct LayerTape {
        std::vector<double> x0, xhat1, rstd1, h1, qkv, probs, att, x1, xhat2, rstd2, h2, f, gf;
    };
    std::vector<LayerTape> tape(static_cast<std::size_t>(nL));
    for (auto& lt : tape) {
        lt.x0.resize(TT * D);
        lt.xhat1.resize(TT * D);
        lt.rstd1.resize(TT);
        lt.h1.resize(TT * D);
        lt.qkv.resize(TT * 3 * D);
        lt.probs.resize(static_cast<std::size_t>(H) * TT * TT);
        lt.att.resize(TT * D);
        lt.x1.resize(TT * D);
        lt.xhat2.resize(TT * D);
        lt.rstd2.resize(TT);
        lt.h2.resize(TT * D);
        lt.f.resize(TT * 4 * D);
        lt.gf.resize(TT * 4 * D);
    }
    std::vector<double> xl(TT * D), xhatf(TT * D), rstdf(TT), hf(TT * D), dlogits(TT * 4);
    std::vector<double> dx(TT * D), dhid(TT * D), dp(TT), dqkv(TT * 3 * D), datt(TT * D), dgf(TT * 4 * D),
        tmp(4 * D);
    std::vector<int> inputs(TT);

    for (std::size_t n = 0; n < configs.size(); ++n) {
        const Onv& cfg = configs[n];
        const double c_amp = 0.5 * weights[n].real();
        const double c_ph = weights[n].imag();
        if (c_amp != 0.0) {
            // forward with tape
            for (int t = 0; t < T; ++t) {
                inputs[static_cast<std::size_t>(t)] = input_token(cfg, t);
                const double* tok = p(tok_emb_) + static_cast<std::size_t>(inputs[static_cast<std::size_t>(t)]) * D;
                const double* pe = p(pos_emb_) + static_cast<std::size_t>(t) * D;
                for (std::size_t i = 0; i < D; ++i) tape[0].x0[static_cast<std::size_t>(t) * D + i] = tok[i] + pe[i];
            }
            for (int l = 0; l < nL; ++l) {
                const Layer& L = layers_[static_cast<std::size_t>(l)];
                LayerTape& lt = tape[static_cast<std::size_t>(l)];
                for (int t = 0; t < T; ++t) {
                    const std::size_t r = static_cast<std::size_t>(t);
                    layer_norm(&lt.x0[r * D], d, p(L.ln1_g), p(L.ln1_b), &lt.h1[r * D], &lt.xhat1[r * D],
                               &lt.rstd1[r]);
                    linear(&lt.h1[r * D], d, p(L.w_qkv), p(L.b_qkv), 3 * d, &lt.qkv[r * 3 * D]);
                }
                for (int t = 0; t < T; ++t) {
                    const std::size_t r = static_cast<std::size_t>(t);
                    const double* q = &lt.qkv[r * 3 * D];
                    for (int hh = 0; hh < H; ++hh) {
                        const int o = hh * dh;
                        double* pr = &lt.probs[(static_cast<std::size_t>(hh) * TT + r) * TT];
                        double mx = kNegInf;
                        for (int j = 0; j <= t; ++j) {
                            const double* kj = &lt.qkv[static_cast<std::size_t>(j) * 3 * D + D];
                            double acc = 0.0;
                            for (int e = 0; e < dh; ++e) acc += q[o + e] * kj[o + e];
                            pr[j] = acc * scale;
                            mx = std::max(mx, acc * scale);
                        }
                        double z = 0.0;
                        for (int j = 0; j <= t; ++j) {
                            pr[j] = std::exp(pr[j] - mx);
                            z += pr[j];
                        }
                        for (int j = 0; j <= t; ++j) pr[j] /= z;
                        for (int j = t + 1; j < T; ++j) pr[j] = 0.0;
                        double* at = &lt.att[r * D + static_cast<std::size_t>(o)];
                        for (int e = 0; e < dh; ++e) at[e] = 0.0;
                        for (int j = 0; j <= t; ++j) {
                            const double* vj = &lt.qkv[static_cast<std::size_t>(j) * 3 * D + 2 * D];
                            for (int e = 0; e < dh; ++e) at[e] += pr[j] * vj[o + e];
                        }
                    }
                    linear(&lt.att[r * D], d, p(L.w_o), p(L.b_o), d, tmp.data());
                    for (std::size_t i = 0; i < D; ++i) lt.x1[r * D + i] = lt.x0[r * D + i] + tmp[i];
                    layer_norm(&lt.x1[r * D], d, p(L.ln2_g), p(L.ln2_b), &lt.h2[r * D], &lt.xhat2[r * D],
                               &lt.rstd2[r]);
                    linear(&lt.h2[r * D], d, p(L.w_fc), p(L.b_fc), 4 * d, &lt.f[r * 4 * D]);
                    for (std::size_t i = 0; i < 4 * D; ++i) lt.gf[r * 4 * D + i] = gelu(lt.f[r * 4 * D + i]);
                    double* xout = l + 1 < nL ? &tape[static_cast<std::size_t>(l + 1)].x0[r * D] : &xl[r * D];
                    linear(&lt.gf[r * 4 * D], 4 * d, p(L.w_pr), p(L.b_pr), d, tmp.data());
                    for (std::size_t i = 0; i < D; ++i) xout[i] = lt.x1[r * D + i] + tmp[i];
                }
            }
            bool reachable = true;
            for (int t = 0; t < T; ++t) {
                const std::size_t r = static_cast<std::size_t>(t);
                layer_norm(&xl[r * D], d, p(lnf_g_), p(lnf_b_), &hf[r * D], &xhatf[r * D], &rstdf[r]);
                std::array<double, 4> logits{};
                linear(&hf[r * D], d, p(w_head_), p(b_head_), 4, logits.data());
                const std::uint8_t mask = prefix_mask(cfg, t, config_.n_spatial, config_.n_alpha, config_.n_beta);
                const int tok = token_at(cfg, t);
                if (!((mask >> tok) & 1)) {
                    reachable = false;
                    break;
                }
                const Distribution pr = masked_softmax(logits, mask);
                for (int j = 0; j < 4; ++j)
                    dlogits[r * 4 + static_cast<std::size_t>(j)] = c_amp * ((j == tok ? 1.0 : 0.0) - pr[static_cast<std::size_t>(j)]);
            }
            if (reachable) {
                // head and final norm
                std::fill(dx.begin(), dx.end(), 0.0);
                for (int t = 0; t < T; ++t) {
                    const std::size_t r = static_cast<std::size_t>(t);
                    linear_backward(&hf[r * D], &dlogits[r * 4], d, 4, p(w_head_), g(w_head_), g(b_head_), &dhid[r * D]);
                    layer_norm_backward(&dhid[r * D], &xhatf[r * D], rstdf[r], p(lnf_g_), d, g(lnf_g_), g(lnf_b_),
                                        &dx[r * D]);
                }
                for (int l = nL - 1; l >= 0; --l) {
                    const Layer& L = layers_[static_cast<std::size_t>(l)];
                    LayerTape& lt = tape[static_cast<std::size_t>(l)];
                    // mlp: x2 = x1 + gelu(ln2(x1) W_fc) W_pr
                    for (int t = 0; t < T; ++t) {
                        const std::size_t r = static_cast<std::size_t>(t);
                        linear_backward(&lt.gf[r * 4 * D], &dx[r * D], 4 * d, d, p(L.w_pr), g(L.w_pr), g(L.b_pr),
                                        &dgf[r * 4 * D]);
                        for (std::size_t i = 0; i < 4 * D; ++i) dgf[r * 4 * D + i] *= gelu_grad(lt.f[r * 4 * D + i]);
                        linear_backward(&lt.h2[r * D], &dgf[r * 4 * D], d, 4 * d, p(L.w_fc), g(L.w_fc), g(L.b_fc),
                                        &dhid[r * D]);
                        layer_norm_backward(&dhid[r * D], &lt.xhat2[r * D], lt.rstd2[r], p(L.ln2_g), d, g(L.ln2_g),
                                            g(L.ln2_b), &dx[r * D]);
                    }
                    // attention: x1 = x0 + att W_o
                    for (int t = 0; t < T; ++t) {
                        const std::size_t r = static_cast<std::size_t>(t);
                        linear_backward(&lt.att[r * D], &dx[r * D], d, d, p(L.w_o), g(L.w_o), g(L.b_o), &datt[r * D]);
                    }
                    std::fill(dqkv.begin(), dqkv.end(), 0.0);
                    for (int hh = 0; hh < H; ++hh) {
                        const int o = hh * dh;
                        for (int t = 0; t < T; ++t) {
                            const std::size_t r = static_cast<std::size_t>(t);
                            const double* pr = &lt.probs[(static_cast<std::size_t>(hh) * TT + r) * TT];
                            const double* da = &datt[r * D + static_cast<std::size_t>(o)];
                            const double* q = &lt.qkv[r * 3 * D];
                            double dot_pa = 0.0;
                            for (int j = 0; j <= t; ++j) {
                                const double* vj = &lt.qkv[static_cast<std::size_t>(j) * 3 * D + 2 * D];
                                double acc = 0.0;
                                for (int e = 0; e < dh; ++e) acc += da[e] * vj[o + e];
                                dp[static_cast<std::size_t>(j)] = acc;
                                dot_pa += pr[j] * acc;
                                double* dvj = &dqkv[static_cast<std::size_t>(j) * 3 * D + 2 * D];
                                for (int e = 0; e < dh; ++e) dvj[o + e] += pr[j] * da[e];
                            }
                            double* dq = &dqkv[r * 3 * D];
                            for (int j = 0; j <= t; ++j) {
                                const double ds = pr[j] * (dp[static_cast<std::size_t>(j)] - dot_pa) * scale;
                                const double* kj = &lt.qkv[static_cast<std::size_t>(j) * 3 * D + D];
                                double* dkj = &dqkv[static_cast<std::size_t>(j) * 3 * D + D];
                                for (int e = 0; e < dh; ++e) {
                                    dq[o + e] += ds * kj[o + e];
                                    dkj[o + e] += ds * q[o + e];
                                }
                            }
                        }
                    }
                    for (int t = 0; t < T; ++t) {
                        const std::size_t r = static_cast<std::size_t>(t);
                        linear_backward(&lt.h1[r * D], &dqkv[r * 3 * D], d, 3 * d, p(L.w_qkv), g(L.w_qkv), g(L.b_qkv),
                                        &dhid[r * D]);
                        layer_norm_backward(&dhid[r * D], &lt.xhat1[r * D], lt.rstd1[r], p(L.ln1_g), d, g(L.ln1_g),
                                            g(L.ln1_b), &dx[r * D]);
                    }
                }
                for (int t = 0; t < T; ++t) {
                    const std::size_t r = static_cast<std::size_t>(t);
                    double* dtok = g(tok_emb_) + static_cast<std::size_t>(inputs[r]) * D;
                    double* dpos = g(pos_emb_) + r * D;
                    for (std::size_t i = 0; i < D; ++i) {
                        dtok[i] += dx[r * D + i];
                        dpos[i] += dx[r * D + i];
                    }
                }
            }
        }
        if (c_ph != 0.0) {
            std::vector<std::vector<double>> acts;
            (void)phase_forward(cfg, &acts);
            // acts: input, then (z, a) per hidden layer, then output
            std::vector<double> delta{c_ph};
            const std::size_t n_lin = phase_w_.size();
            for (std::size_t i = n_lin; i-- > 0;) {
                const Tensor& w = P[phase_w_[i]];
                const int n_in = static_cast<int>(w.shape[0]);
                const int n_out = static_cast<int>(w.shape[1]);
                const std::vector<double>& a_in = i == 0 ? acts[0] : acts[2 * i];
                std::vector<double> da(static_cast<std::size_t>(n_in));
                linear_backward(a_in.data(), delta.data(), n_in, n_out, w.value.data(), g(phase_w_[i]),
                                g(phase_b_[i]), da.data());
                if (i > 0) {
                    const std::vector<double>& z = acts[2 * i - 1];
                    for (std::size_t k = 0; k < da.size(); ++k)
                        da[k] *= activate_grad(config_.phase_activation, z[k], a_in[k]);
                }
                delta = std::move(da);
            }
        }
    }
}

std::vector<NamedArray> Ansatz::export_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& t : params_.tensors()) out.push_back({t.name, t.shape, t.value});
    return out;
}

void Ansatz::import_arrays(const CheckpointData& data) {
    for (auto& t : params_.tensors()) {
        const NamedArray* a = data.find(t.name);
        if (!a) throw CheckpointError("checkpoint: missing tensor '" + t.name + "'");
        if (a->shape != t.shape) throw CheckpointError("checkpoint: tensor '" + t.name + "' has the wrong shape");
        t.value = a->data;
    }
}

} // namespace nqs
