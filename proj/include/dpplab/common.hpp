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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dpplab {

template <int N> using Vec = std::array<double, N>;
template <int N> using Index = std::array<std::int64_t, N>;

enum class ErrorKind { precondition, domain, hypothesis, convergence, config, io };

inline const char *to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::precondition:
        return "precondition";
    case ErrorKind::domain:
        return "domain";
    case ErrorKind::hypothesis:
        return "hypothesis";
    case ErrorKind::convergence:
        return "convergence";
    case ErrorKind::config:
        return "config";
    case ErrorKind::io:
        return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string &msg)
{
    if (!cond)
        throw Error(kind, msg);
}

template <int N> Vec<N> zero_vec()
{
    Vec<N> v{};
    v.fill(0.0);
    return v;
}

template <int N> Vec<N> unit_vec(int axis, double scale = 1.0)
{
    Vec<N> v = zero_vec<N>();
    v[axis] = scale;
    return v;
}

template <int N> Vec<N> add(const Vec<N> &a, const Vec<N> &b)
{
    Vec<N> r;
    for (int i = 0; i < N; ++i)
        r[i] = a[i] + b[i];
    return r;
}

template <int N> Vec<N> sub(const Vec<N> &a, const Vec<N> &b)
{
    Vec<N> r;
    for (int i = 0; i < N; ++i)
        r[i] = a[i] - b[i];
    return r;
}

template <int N> Vec<N> scale(const Vec<N> &a, double s)
{
    Vec<N> r;
    for (int i = 0; i < N; ++i)
        r[i] = a[i] * s;
    return r;
}

template <int N> Vec<N> axpy(const Vec<N> &x, double s, const Vec<N> &y)
{
    Vec<N> r;
    for (int i = 0; i < N; ++i)
        r[i] = x[i] + s * y[i];
    return r;
}

template <int N> double dot(const Vec<N> &a, const Vec<N> &b)
{
    double s = 0.0;
    for (int i = 0; i < N; ++i)
        s += a[i] * b[i];
    return s;
}

template <int N> double norm2(const Vec<N> &a) { return dot<N>(a, a); }
template <int N> double norm(const Vec<N> &a) { return std::sqrt(norm2<N>(a)); }
template <int N> double dist(const Vec<N> &a, const Vec<N> &b) { return norm<N>(sub<N>(a, b)); }

// |B_1| in R^N.
inline double unit_ball_volume(int n)
{
    return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

inline double ball_volume(int n, double r) { return unit_ball_volume(n) * std::pow(r, n); }

// Portable uniform draws: std distributions are not specified bit-for-bit across
// standard libraries, the engine is.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t bits() { return eng_(); }
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : eng_() % n; }
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * uniform());
    }
    template <int N> Vec<N> in_ball(double r)
    {
        while (true) {
            Vec<N> v;
            for (int i = 0; i < N; ++i)
                v[i] = uniform(-r, r);
            if (norm2<N>(v) < r * r)
                return v;
        }
    }

  private:
    std::mt19937_64 eng_;
};

// Splits [0, n) into contiguous chunks, one per worker. Each index is written by
// exactly one worker so results do not depend on the worker count.
template <class F> void parallel_for(std::size_t n, unsigned jobs, F &&body)
{
    if (jobs <= 1 || n < 2048) {
        body(std::size_t{0}, n, 0u);
        return;
    }
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(n / 1024));
    std::vector<std::thread> pool;
    std::size_t chunk = (n + jobs - 1) / jobs;
    for (unsigned w = 0; w < jobs; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([&body, lo, hi, w] { body(lo, hi, w); });
    }
    for (auto &t : pool)
        t.join();
}

} // namespace dpplab
