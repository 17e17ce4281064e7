// Copyright 2026 The nqsdesk Authors
// SPDX-License-Identifier: Apache-2.0

#include <nqs/oracle.hpp>

#include <nqs/eloc.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nqs {

namespace {

// Sign bookkeeping: acting at orbital i picks up (-1)^(occupied orbitals below i).
int occupied_below(const Onv& n, int i) {
    int c = 0;
    for (int j = 0; j < i; ++j) c += n.test(j) ? 1 : 0;
    return c;
}

bool annihilate(Onv& n, int i, int& sign) {
    if (!n.test(i)) return false;
    if (occupied_below(n, i) & 1) sign = -sign;
    n.reset(i);
    return true;
}

bool create(Onv& n, int i, int& sign) {
    if (n.test(i)) return false;
    if (occupied_below(n, i) & 1) sign = -sign;
    n.set(i);
    return true;
}

std::size_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::size_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
    return r;
}

void combinations(int n, int k, std::vector<std::uint64_t>& out) {
    if (k == 0) {
        out.push_back(0);
        return;
    }
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        std::uint64_t mask = 0;
        for (int i : idx) mask |= 1ULL << i;
        out.push_back(mask);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) break;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

void normalize_sign(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::size_t big = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[big])) big = i;
    const double scale = (v.empty() || v[big] >= 0.0 ? 1.0 : -1.0) / norm;
    for (double& x : v) x *= scale;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

std::unordered_map<Onv, double, OnvHash> apply_second_quantized(const IntegralTable& table, const Onv& n) {
    const int nso = table.n_spin_orbitals();
    if (n.size() != nso) throw std::invalid_argument("apply_second_quantized: ONV size does not match table");
    std::unordered_map<Onv, double, OnvHash> out;
    out[n] += table.e_core();

    // sum_pq h_pq a+_p a_q
    for (int p = 0; p < nso; ++p)
        for (int q = 0; q < nso; ++q) {
            const double h = spin_orbital_h1(table, p, q);
            if (h == 0.0) continue;
            Onv m = n;
            int sign = 1;
            if (!annihilate(m, q, sign) || !create(m, p, sign)) continue;
            out[m] += sign * h;
        }

    // 1/4 sum_pqrs <pq||rs> a+_p a+_q a_s a_r
    for (int p = 0; p < nso; ++p)
        for (int q = 0; q < nso; ++q)
            for (int r = 0; r < nso; ++r)
                for (int s = 0; s < nso; ++s) {
                    const double v = antisymmetrized(table, p, q, r, s);
                    if (v == 0.0) continue;
                    Onv m = n;
                    int sign = 1;
                    if (!annihilate(m, r, sign) || !annihilate(m, s, sign) || !create(m, q, sign) ||
                        !create(m, p, sign))
                        continue;
                    out[m] += 0.25 * sign * v;
                }
    return out;
}

FciBasis::FciBasis(int n_spatial, int n_alpha, int n_beta) {
    if (n_spatial < 1 || 2 * n_spatial > kMaxSpinOrbitals || n_spatial > 64)
        throw std::invalid_argument("FciBasis: unsupported orbital count");
    if (n_alpha < 0 || n_beta < 0 || n_alpha > n_spatial || n_beta > n_spatial)
        throw std::invalid_argument("FciBasis: electron counts out of range");
    std::vector<std::uint64_t> alpha, beta;
    combinations(n_spatial, n_alpha, alpha);
    combinations(n_spatial, n_beta, beta);
    states_.reserve(alpha.size() * beta.size());
    for (std::uint64_t a : alpha)
        for (std::uint64_t b : beta) {
            Onv o(2 * n_spatial);
            for (int k = 0; k < n_spatial; ++k) {
                if ((a >> k) & 1ULL) o.set(2 * k);
                if ((b >> k) & 1ULL) o.set(2 * k + 1);
            }
            states_.push_back(o);
        }
    std::sort(states_.begin(), states_.end());
    index_.reserve(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], i);
}

std::optional<std::size_t> FciBasis::index(const Onv& n) const {
    const auto it = index_.find(n);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t FciBasis::dimension(int n_spatial, int n_alpha, int n_beta) noexcept {
    return binomial(n_spatial, n_alpha) * binomial(n_spatial, n_beta);
}

void SparseHamiltonian::multiply(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(dim, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) acc += values[k] * x[columns[k]];
        y[i] = acc;
    }
}

double SparseHamiltonian::at(std::size_t row, std::size_t col) const {
    for (std::size_t k = row_offsets[row]; k < row_offsets[row + 1]; ++k)
        if (columns[k] == col) return values[k];
    return 0.0;
}

SparseHamiltonian build_hamiltonian(const IntegralTable& table, const FciBasis& basis) {
    const std::size_t dim = basis.size();
    const int nso = table.n_spin_orbitals();
    std::vector<std::vector<std::uint32_t>> cols(dim);
    std::vector<std::vector<double>> vals(dim);

#pragma omp parallel
    {
        KetBlock block(nso);
        std::vector<double> h;
#pragma omp for schedule(dynamic, 16)
        for (std::size_t i = 0; i < dim; ++i) {
            const Onv& n = basis[i];
            block.clear();
            for_each_connected(n, [&](const Onv& m) { block.push_back(m); });
            h.resize(block.size());
            batched_kernel(n, block, table, h);
            auto& c = cols[i];
            auto& v = vals[i];
            for (std::size_t j = 0; j < block.size(); ++j) {
                if (h[j] == 0.0) continue;
                const auto col = basis.index(block.at(j));
                if (!col) continue;
                c.push_back(static_cast<std::uint32_t>(*col));
                v.push_back(h[j]);
            }
        }
    }

    SparseHamiltonian H;
    H.dim = dim;
    H.row_offsets.assign(dim + 1, 0);
    for (std::size_t i = 0; i < dim; ++i) H.row_offsets[i + 1] = H.row_offsets[i] + cols[i].size();
    H.columns.reserve(H.row_offsets[dim]);
    H.values.reserve(H.row_offsets[dim]);
    for (std::size_t i = 0; i < dim; ++i) {
        H.columns.insert(H.columns.end(), cols[i].begin(), cols[i].end());
        H.values.insert(H.values.end(), vals[i].begin(), vals[i].end());
    }
    return H;
}

namespace {

FciResult dense_ground_state(const SparseHamiltonian& H) {
    const auto n = static_cast<Eigen::Index>(H.dim);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < H.dim; ++i)
        for (std::size_t k = H.row_offsets[i]; k < H.row_offsets[i + 1]; ++k)
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(H.columns[k])) = H.values[k];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    if (solver.info() != Eigen::Success) throw std::runtime_error("fci: dense eigensolver failed");
    FciResult r;
    r.e0 = solver.eigenvalues()(0);
    r.vector.assign(solver.eigenvectors().col(0).data(), solver.eigenvectors().col(0).data() + n);
    r.dim = H.dim;
    r.n_iterations = 1;
    r.dense = true;
    return r;
}

// Restarted Lanczos with full reorthogonalization; restarts from the current Ritz vector.
FciResult lanczos_ground_state(const SparseHamiltonian& H, const std::vector<double>& guess, const FciOptions& opt) {
    const std::size_t dim = H.dim;
    const int m_max = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opt.krylov_size), dim));
    std::vector<double> start = guess;
    normalize_sign(start);

    FciResult r;
    r.dim = dim;
    std::vector<std::vector<double>> basis;
    std::vector<double> w;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        basis.clear();
        basis.push_back(start);
        std::vector<double> alpha, beta;
        double ritz = 0.0, residual = 0.0;
        Eigen::VectorXd ritz_vec;
        for (int j = 0; j < m_max; ++j) {
            H.multiply(basis.back(), w);
            ++r.n_iterations;
            const double a = dot(w, basis.back());
            alpha.push_back(a);
            // full reorthogonalization, applied twice
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& v : basis) {
                    const double c = dot(w, v);
                    for (std::size_t i = 0; i < dim; ++i) w[i] -= c * v[i];
                }
            const double b = std::sqrt(dot(w, w));

            const auto m = static_cast<Eigen::Index>(alpha.size());
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                T(i, i) = alpha[static_cast<std::size_t>(i)];
                if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri(T);
            ritz = tri.eigenvalues()(0);
            ritz_vec = tri.eigenvectors().col(0);
            residual = std::abs(b * ritz_vec(m - 1));
            if (residual < opt.residual_tolerance || b < 1e-14 || j + 1 == m_max) break;
            beta.push_back(b);
            for (double& x : w) x /= b;
            basis.push_back(w);
        }
        std::vector<double> x(dim, 0.0);
        for (std::size_t k = 0; k < basis.size() && static_cast<Eigen::Index>(k) < ritz_vec.size(); ++k) {
            const double c = ritz_vec(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < dim; ++i) x[i] += c * basis[k][i];
        }
        normalize_sign(x);
        // true residual of the Ritz pair
        H.multiply(x, w);
        double res2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) res2 += (w[i] - ritz * x[i]) * (w[i] - ritz * x[i]);
        r.e0 = ritz;
        r.vector = x;
        r.residual = std::sqrt(res2);
        if (r.residual < opt.residual_tolerance) return r;
        start = std::move(x);
    }
    throw std::runtime_error("fci: Lanczos did not converge (residual " + std::to_string(r.residual) + ")");
}

} // namespace

FciResult fci_ground_state(const IntegralTable& table, int n_alpha, int n_beta, const FciOptions& options) {
    const std::size_t dim = FciBasis::dimension(table.n_spatial(), n_alpha, n_beta);
    if (dim > options.max_dim)
        throw std::length_error("fci: basis dimension " + std::to_string(dim) + " exceeds cap " +
                                std::to_string(options.max_dim));
    if (dim == 0) throw std::invalid_argument("fci: empty determinant space");
    const FciBasis basis(table.n_spatial(), n_alpha, n_beta);
    const SparseHamiltonian H = build_hamiltonian(table, basis);

    FciResult r;
    if (dim <= options.dense_max_dim) {
        r = dense_ground_state(H);
    } else {
        std::vector<double> guess(dim, 0.0);
        // HF determinant plus a small deterministic spread so the start overlaps every symmetry sector
        const auto hf = basis.index(hf_determinant(table.n_spatial(), n_alpha, n_beta));
        for (std::size_t i = 0; i < dim; ++i) guess[i] = 1e-3 * std::sin(0.7 * static_cast<double>(i) + 0.3);
        if (hf) guess[*hf] = 1.0;
        r = lanczos_ground_state(H, guess, options);
    }
    normalize_sign(r.vector);
    r.dim = dim;
    return r;
}

Onv hf_determinant(int n_spatial, int n_alpha, int n_beta) {
    Onv o(2 * n_spatial);
    for (int k = 0; k < n_alpha; ++k) o.set(2 * k);
    for (int k = 0; k < n_beta; ++k) o.set(2 * k + 1);
    return o;
}

double hf_energy(const IntegralTable& table, int n_alpha, int n_beta) {
    return diagonal_energy(hf_determinant(table.n_spatial(), n_alpha, n_beta), table);
}

} // namespace nqs
