// Copyright 2026 The dpp-lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "common.hpp"

#include <optional>

// Seidel's randomized incremental LP in small dimension with a lexicographic
// objective list and a bounding box. Constraints are a . v >= b.
namespace dpplab::lp {

struct Problem {
    int dim = 0;
    std::vector<double> A; // row-major, rows x dim
    std::vector<double> b;
    std::vector<double> lo, hi;
    std::vector<std::vector<double>> objectives; // minimized in order

    std::size_t rows() const { return b.size(); }
    void add(const std::vector<double> &a, double rhs)
    {
        A.insert(A.end(), a.begin(), a.end());
        b.push_back(rhs);
    }
};

namespace detail {

inline std::vector<double> box_optimum(const Problem &p)
{
    const int d = p.dim;
    std::vector<double> v(d);
    std::vector<char> fixed(d, 0);
    for (const auto &c : p.objectives) {
        double cmax = 0.0;
        for (int j = 0; j < d; ++j)
            cmax = std::max(cmax, std::abs(c[j]));
        for (int j = 0; j < d; ++j) {
            if (fixed[j] || std::abs(c[j]) <= 1e-14 * cmax)
                continue;
            v[j] = c[j] > 0 ? p.lo[j] : p.hi[j];
            fixed[j] = 1;
        }
    }
    for (int j = 0; j < d; ++j)
        if (!fixed[j])
            v[j] = p.lo[j];
    return v;
}

inline double slack_tol(double b) { return 1e-11 * (1.0 + std::abs(b)); }

// One variable: intersect the half-lines and pick the end the objectives prefer.
inline std::optional<std::vector<double>> solve_1d(const Problem &p, std::size_t upto)
{
    double lo = p.lo[0], hi = p.hi[0];
    for (std::size_t i = 0; i < upto; ++i) {
        double a = p.A[i], b = p.b[i];
        if (std::abs(a) <= 1e-300) {
            if (b > slack_tol(b))
                return std::nullopt;
            continue;
        }
        if (a > 0)
            lo = std::max(lo, b / a);
        else
            hi = std::min(hi, b / a);
    }
    if (lo > hi + 1e-11 * (1.0 + std::abs(lo)))
        return std::nullopt;
    hi = std::max(hi, lo);
    double pick = lo;
    for (const auto &c : p.objectives) {
        if (std::abs(c[0]) > 1e-14) {
            pick = c[0] > 0 ? lo : hi;
            break;
        }
    }
    return std::vector<double>{pick};
}

inline std::optional<std::vector<double>> solve_rec(const Problem &p)
{
    const int d = p.dim;
    if (d == 1)
        return solve_1d(p, p.rows());
    std::vector<double> v = box_optimum(p);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double *ai = &p.A[i * d];
        double s = 0.0;
        for (int j = 0; j < d; ++j)
            s += ai[j] * v[j];
        if (s >= p.b[i] - slack_tol(p.b[i]))
            continue;
        // optimum moves onto a_i . v = b_i; eliminate the dominant variable
        int k = 0;
        for (int j = 1; j < d; ++j)
            if (std::abs(ai[j]) > std::abs(ai[k]))
                k = j;
        if (std::abs(ai[k]) <= 1e-300)
            return std::nullopt;
        const double beta0 = p.b[i] / ai[k];
        std::vector<double> gam(d - 1);
        for (int j = 0, l = 0; j < d; ++j)
            if (j != k)
                gam[l++] = ai[j] / ai[k];
        Problem q;
        q.dim = d - 1;
        for (int j = 0; j < d; ++j)
            if (j != k) {
                q.lo.push_back(p.lo[j]);
                q.hi.push_back(p.hi[j]);
            }
        std::vector<double> row(d - 1);
        // v_k >= lo_k and v_k <= hi_k
        for (int l = 0; l < d - 1; ++l)
            row[l] = -gam[l];
        q.add(row, p.lo[k] - beta0);
        for (int l = 0; l < d - 1; ++l)
            row[l] = gam[l];
        q.add(row, beta0 - p.hi[k]);
        for (std::size_t r = 0; r < i; ++r) {
            const double *ar = &p.A[r * d];
            for (int j = 0, l = 0; j < d; ++j)
                if (j != k) {
                    row[l] = ar[j] - ar[k] * gam[l];
                    ++l;
                }
            q.add(row, p.b[r] - ar[k] * beta0);
        }
        for (const auto &c : p.objectives) {
            std::vector<double> cc(d - 1);
            for (int j = 0, l = 0; j < d; ++j)
                if (j != k) {
                    cc[l] = c[j] - c[k] * gam[l];
                    ++l;
                }
            q.objectives.push_back(std::move(cc));
        }
        auto w = solve_rec(q);
        if (!w)
            return std::nullopt;
        double vk = beta0;
        for (int l = 0; l < d - 1; ++l)
            vk -= gam[l] * (*w)[l];
        for (int j = 0, l = 0; j < d; ++j)
            v[j] = j == k ? vk : (*w)[l++];
    }
    return v;
}

} // namespace detail

// Constraint order is shuffled with a fixed seed, so the result is deterministic.
inline std::optional<std::vector<double>> solve(Problem p, std::uint64_t seed = 0x5eedULL)
{
    require(p.dim >= 1, ErrorKind::precondition, "LP needs at least one variable");
    const std::size_t n = p.rows();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i)
        perm[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);
    Problem q;
    q.dim = p.dim;
    q.lo = p.lo;
    q.hi = p.hi;
    q.objectives = p.objectives;
    q.A.reserve(p.A.size());
    for (auto i : perm) {
        q.A.insert(q.A.end(), p.A.begin() + static_cast<std::ptrdiff_t>(i * p.dim),
                   p.A.begin() + static_cast<std::ptrdiff_t>((i + 1) * p.dim));
        q.b.push_back(p.b[i]);
    }
    return detail::solve_rec(q);
}

} // namespace dpplab::lp
