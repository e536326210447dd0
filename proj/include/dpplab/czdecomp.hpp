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

#include "lattice.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstring>
#include <istream>
#include <ostream>

namespace dpplab {

using Rational = boost::multiprecision::cpp_rational;

// "p/q", an integer, or a decimal such as "0.25" (read exactly).
inline Rational parse_rational(const std::string &s)
{
    require(!s.empty(), ErrorKind::config, "empty rational");
    auto dot = s.find('.');
    if (dot == std::string::npos && s.find_first_of("eE") == std::string::npos)
        return Rational(s);
    require(s.find_first_of("eE") == std::string::npos, ErrorKind::config, "exponent notation not supported: " + s);
    std::string digits = s.substr(0, dot) + s.substr(dot + 1);
    bool neg = !digits.empty() && digits[0] == '-';
    if (neg)
        digits.erase(0, 1);
    // a leading zero would select octal
    digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size()));
    require(digits.find_first_not_of("0123456789") == std::string::npos, ErrorKind::config, "bad rational: " + s);
    boost::multiprecision::cpp_int num = digits.empty() ? 0 : boost::multiprecision::cpp_int(digits), den = 1;
    for (std::size_t i = dot + 1; i < s.size(); ++i)
        den *= 10;
    return Rational(neg ? -num : num, den);
}

// A subset of Q_1 given as a union of finest dyadic cells of generation L_max.
template <int N> class IndicatorGrid {
  public:
    IndicatorGrid() = default;
    explicit IndicatorGrid(int L_max) : L_(L_max)
    {
        require(L_max >= 0 && N * L_max <= 30, ErrorKind::precondition, "indicator grid too fine");
        side_ = std::int64_t{1} << L_max;
        bits_.assign(std::size_t{1} << (N * L_max), 0);
    }

    int L_max() const { return L_; }
    std::int64_t side() const { return side_; }
    std::size_t cells() const { return bits_.size(); }

    std::size_t flat(const Index<N> &k) const
    {
        std::size_t f = 0;
        for (int i = 0; i < N; ++i) {
            require(k[i] >= 0 && k[i] < side_, ErrorKind::precondition, "cell index out of range");
            f = f * static_cast<std::size_t>(side_) + static_cast<std::size_t>(k[i]);
        }
        return f;
    }
    Index<N> multi(std::size_t f) const
    {
        Index<N> k;
        for (int i = N - 1; i >= 0; --i) {
            k[i] = static_cast<std::int64_t>(f % static_cast<std::size_t>(side_));
            f /= static_cast<std::size_t>(side_);
        }
        return k;
    }

    bool get(std::size_t f) const { return bits_[f] != 0; }
    bool get(const Index<N> &k) const { return get(flat(k)); }
    void set(std::size_t f, bool v = true) { bits_[f] = v ? 1 : 0; }
    void set(const Index<N> &k, bool v = true) { set(flat(k), v); }

    // Marks every finest cell of the dyadic cube.
    void fill(const DyadicCube<N> &q, bool v = true)
    {
        require(q.generation <= L_, ErrorKind::precondition, "cube finer than the grid");
        const int d = L_ - q.generation;
        const std::int64_t w = std::int64_t{1} << d;
        Index<N> o{};
        while (true) {
            Index<N> k;
            for (int i = 0; i < N; ++i)
                k[i] = (q.index[i] << d) + o[i];
            set(k, v);
            int ax = N - 1;
            while (ax >= 0) {
                if (++o[ax] < w)
                    break;
                o[ax] = 0;
                --ax;
            }
            if (ax < 0)
                break;
        }
    }

    std::uint64_t count() const
    {
        std::uint64_t c = 0;
        for (auto b : bits_)
            c += b;
        return c;
    }
    Rational measure() const { return Rational(count(), static_cast<std::uint64_t>(cells())); }

    bool subset_of(const IndicatorGrid &o) const
    {
        require(o.L_ == L_, ErrorKind::precondition, "grids differ in resolution");
        for (std::size_t f = 0; f < bits_.size(); ++f)
            if (bits_[f] && !o.bits_[f])
                return false;
        return true;
    }

    bool operator==(const IndicatorGrid &) const = default;

    // "CZIG", uint8 N, uint8 L_max, then cells bit-packed LSB first in row-major order.
    void save(std::ostream &os) const
    {
        os.write("CZIG", 4);
        const char hdr[2] = {static_cast<char>(N), static_cast<char>(L_)};
        os.write(hdr, 2);
        std::vector<char> buf((bits_.size() + 7) / 8, 0);
        for (std::size_t f = 0; f < bits_.size(); ++f)
            if (bits_[f])
                buf[f / 8] = static_cast<char>(buf[f / 8] | (1 << (f % 8)));
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        require(static_cast<bool>(os), ErrorKind::io, "failed to write indicator grid");
    }

    static IndicatorGrid load(std::istream &is)
    {
        char magic[4];
        unsigned char hdr[2];
        is.read(magic, 4);
        is.read(reinterpret_cast<char *>(hdr), 2);
        require(static_cast<bool>(is) && std::memcmp(magic, "CZIG", 4) == 0, ErrorKind::io, "not an indicator grid");
        require(hdr[0] == N, ErrorKind::io, "indicator grid dimension mismatch");
        IndicatorGrid g(hdr[1]);
        std::vector<char> buf((g.bits_.size() + 7) / 8);
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        require(static_cast<bool>(is), ErrorKind::io, "truncated indicator grid");
        for (std::size_t f = 0; f < g.bits_.size(); ++f)
            g.bits_[f] = (static_cast<unsigned char>(buf[f / 8]) >> (f % 8)) & 1u;
        return g;
    }

  private:
    int L_ = 0;
    std::int64_t side_ = 1;
    std::vector<std::uint8_t> bits_;
};

// Cell counts of every dyadic cube, generation by generation.
template <int N> class CountPyramid {
  public:
    explicit CountPyramid(const IndicatorGrid<N> &g) : L_(g.L_max()), levels_(static_cast<std::size_t>(g.L_max()) + 1)
    {
        auto &fine = levels_[static_cast<std::size_t>(L_)];
        fine.resize(g.cells());
        for (std::size_t f = 0; f < g.cells(); ++f)
            fine[f] = g.get(f) ? 1 : 0;
        for (int gen = L_ - 1; gen >= 0; --gen) {
            const std::int64_t side = std::int64_t{1} << gen;
            auto &lvl = levels_[static_cast<std::size_t>(gen)];
            lvl.assign(std::size_t{1} << (N * gen), 0);
            const auto &up = levels_[static_cast<std::size_t>(gen) + 1];
            for (std::size_t f = 0; f < up.size(); ++f) {
                // parent of a child index: halve every coordinate
                std::size_t rest = f, pf = 0, mul = 1;
                for (int i = N - 1; i >= 0; --i) {
                    std::size_t k = rest % static_cast<std::size_t>(2 * side);
                    rest /= static_cast<std::size_t>(2 * side);
                    pf += (k / 2) * mul;
                    mul *= static_cast<std::size_t>(side);
                }
                lvl[pf] += up[f];
            }
        }
    }

    std::uint64_t count(const DyadicCube<N> &q) const
    {
        require(q.generation <= L_, ErrorKind::precondition, "cube finer than the grid");
        const std::int64_t side = std::int64_t{1} << q.generation;
        std::size_t f = 0;
        for (int i = 0; i < N; ++i)
            f = f * static_cast<std::size_t>(side) + static_cast<std::size_t>(q.index[i]);
        return levels_[static_cast<std::size_t>(q.generation)][f];
    }
    std::uint64_t cells(const DyadicCube<N> &q) const { return std::uint64_t{1} << (N * (L_ - q.generation)); }
    bool full(const DyadicCube<N> &q) const { return count(q) == cells(q); }

  private:
    int L_;
    std::vector<std::vector<std::uint64_t>> levels_;
};

enum class CzReason { threshold_predecessor, level_L };

inline const char *to_string(CzReason r)
{
    return r == CzReason::threshold_predecessor ? "threshold-delta1-predecessor" : "level-L-delta2";
}

template <int N> struct CzSelected {
    DyadicCube<N> cube;
    CzReason reason;
    DyadicCube<N> trigger; // the child that exceeded delta1 (threshold case), else the cube
};

template <int N> struct CzResult {
    Rational delta1, delta2;
    int L = 0;
    std::vector<CzSelected<N>> selected; // Q_B, in traversal order
    std::vector<DyadicCube<N>> residual; // G_L
    Rational measure_A, measure_B, measure_selected;
    Rational bound;                      // delta1 |B| + delta2
    bool conclusion = false;             // |A| <= bound
};

// Hypothesis failure: the cube that should lie in B but does not.
template <int N> struct CzHypothesisError : Error {
    DyadicCube<N> witness;
    DyadicCube<N> trigger;
    CzHypothesisError(const std::string &msg, DyadicCube<N> w, DyadicCube<N> t)
        : Error(ErrorKind::hypothesis, msg), witness(w), trigger(t)
    {
    }
};

namespace detail {

inline bool exceeds(std::uint64_t count, std::uint64_t cells, const Rational &delta)
{
    return Rational(count) > delta * Rational(cells);
}

} // namespace detail

// The stopped decomposition: split down to generation L, select pre(Q) when
// |A cap Q| > delta1 |Q|, and at generation L also select Q when |A cap Q| > delta2 |Q|.
template <int N>
CzResult<N> cz_decompose(const IndicatorGrid<N> &A, const IndicatorGrid<N> &B, const Rational &delta1,
                         const Rational &delta2, int L)
{
    require(A.L_max() == B.L_max(), ErrorKind::precondition, "A and B differ in resolution");
    require(delta1 > 0 && delta1 < 1 && delta2 > 0 && delta2 < 1, ErrorKind::precondition,
            "delta1 and delta2 must lie in (0, 1)");
    require(L >= 0 && L <= A.L_max(), ErrorKind::precondition, "L exceeds the grid resolution");
    require(A.subset_of(B), ErrorKind::precondition, "A must be contained in B");
    CountPyramid<N> pa(A), pb(B);
    const auto root = DyadicCube<N>::root();
    require(!detail::exceeds(pa.count(root), pa.cells(root), delta1), ErrorKind::precondition, "|A| > delta1");

    CzResult<N> res;
    res.delta1 = delta1;
    res.delta2 = delta2;
    res.L = L;
    std::vector<DyadicCube<N>> active{root};
    for (int gen = 1; gen <= L; ++gen) {
        std::vector<DyadicCube<N>> next;
        for (const auto &P : active) {
            auto kids = P.children();
            const DyadicCube<N> *hit = nullptr;
            for (const auto &Q : kids)
                if (detail::exceeds(pa.count(Q), pa.cells(Q), delta1)) {
                    hit = &Q;
                    break;
                }
            if (hit) {
                if (!pb.full(P))
                    throw CzHypothesisError<N>("a cube above delta1 has a predecessor not contained in B", P, *hit);
                res.selected.push_back({P, CzReason::threshold_predecessor, *hit});
            } else {
                next.insert(next.end(), kids.begin(), kids.end());
            }
        }
        active = std::move(next);
    }
    for (const auto &Q : active) {
        if (detail::exceeds(pa.count(Q), pa.cells(Q), delta2)) {
            if (!pb.full(Q))
                throw CzHypothesisError<N>("a generation-L cube above delta2 is not contained in B", Q, Q);
            res.selected.push_back({Q, CzReason::level_L, Q});
        } else {
            res.residual.push_back(Q);
        }
    }
    const Rational total(static_cast<std::uint64_t>(A.cells()));
    res.measure_A = Rational(pa.count(root)) / total;
    res.measure_B = Rational(pb.count(root)) / total;
    res.measure_selected = 0;
    for (const auto &s : res.selected)
        res.measure_selected += Rational(pa.cells(s.cube)) / total;
    res.bound = delta1 * res.measure_B + delta2;
    res.conclusion = res.measure_A <= res.bound;
    return res;
}

struct CzAudit {
    bool disjoint = true;
    bool inside_B = true;
    bool selected_density = true;  // |A cap Q| <= delta1 |Q| on Q_B
    bool level_condition = true;   // level-L cubes exceed delta2 and their parent does not exceed delta1
    bool residual_density = true;  // |A cap Q| <= delta2 |Q| on G_L
    bool partition = true;         // Q_B and G_L tile Q_1
    bool summation = true;         // |A| = sum over Q_B + sum over G_L
    bool conclusion = true;
    std::string first_failure;

    bool pass() const
    {
        return disjoint && inside_B && selected_density && level_condition && residual_density && partition &&
               summation && conclusion;
    }
};

template <int N>
CzAudit cz_audit(const IndicatorGrid<N> &A, const IndicatorGrid<N> &B, const CzResult<N> &r)
{
    CountPyramid<N> pa(A), pb(B);
    CzAudit a;
    auto fail = [&](bool &flag, const std::string &what) {
        if (flag && a.first_failure.empty())
            a.first_failure = what;
        flag = false;
    };
    const std::uint64_t total = A.cells();
    // coverage multiplicity of every finest cell
    std::vector<std::uint32_t> hits(total, 0);
    auto mark = [&](const DyadicCube<N> &q) {
        const int d = A.L_max() - q.generation;
        const std::int64_t w = std::int64_t{1} << d;
        Index<N> o{};
        while (true) {
            Index<N> k;
            for (int i = 0; i < N; ++i)
                k[i] = (q.index[i] << d) + o[i];
            ++hits[A.flat(k)];
            int ax = N - 1;
            while (ax >= 0) {
                if (++o[ax] < w)
                    break;
                o[ax] = 0;
                --ax;
            }
            if (ax < 0)
                break;
        }
    };
    for (const auto &s : r.selected)
        mark(s.cube);
    for (auto h : hits)
        if (h > 1) {
            fail(a.disjoint, "selected cubes overlap");
            break;
        }
    std::uint64_t sumA = 0, cover = 0;
    for (const auto &s : r.selected) {
        const auto &Q = s.cube;
        if (!pb.full(Q))
            fail(a.inside_B, "selected cube not contained in B");
        if (detail::exceeds(pa.count(Q), pa.cells(Q), r.delta1))
            fail(a.selected_density, "selected cube above delta1");
        if (s.reason == CzReason::level_L) {
            bool ok = Q.generation == r.L && detail::exceeds(pa.count(Q), pa.cells(Q), r.delta2);
            if (Q.generation > 0)
                ok = ok && !detail::exceeds(pa.count(Q.pre()), pa.cells(Q.pre()), r.delta1);
            if (!ok)
                fail(a.level_condition, "level-L selection not justified");
        } else if (!(s.trigger.generation == Q.generation + 1 && Q.contains(s.trigger) &&
                     detail::exceeds(pa.count(s.trigger), pa.cells(s.trigger), r.delta1))) {
            fail(a.level_condition, "threshold selection not justified");
        }
        sumA += pa.count(Q);
        cover += pa.cells(Q);
    }
    for (const auto &Q : r.residual) {
        if (Q.generation != r.L)
            fail(a.partition, "residual cube not of generation L");
        if (detail::exceeds(pa.count(Q), pa.cells(Q), r.delta2))
            fail(a.residual_density, "residual cube above delta2");
        mark(Q);
        sumA += pa.count(Q);
        cover += pa.cells(Q);
    }
    if (cover != total || std::any_of(hits.begin(), hits.end(), [](std::uint32_t h) { return h != 1; }))
        fail(a.partition, "selected and residual cubes do not tile Q_1");
    if (sumA != pa.count(DyadicCube<N>::root()))
        fail(a.summation, "measure of A does not decompose");
    const Rational mA(pa.count(DyadicCube<N>::root()), total), mB(pb.count(DyadicCube<N>::root()), total);
    if (!(mA <= r.delta1 * mB + r.delta2))
        fail(a.conclusion, "conclusion inequality fails");
    return a;
}

template <int N> struct CzInstance {
    IndicatorGrid<N> A, B;
};

// Build Q_B first, fill A inside each cube at density <= delta1; the hypotheses then hold.
template <int N> CzInstance<N> generate_cz_instance(Rng &rng, int L, const Rational &d1)
{
    const int Lmax = L + 2;
    CzInstance<N> in{IndicatorGrid<N>(Lmax), IndicatorGrid<N>(Lmax)};
    std::vector<DyadicCube<N>> chosen;
    std::vector<DyadicCube<N>> stack{DyadicCube<N>::root()};
    while (!stack.empty()) {
        auto q = stack.back();
        stack.pop_back();
        double u = rng.uniform();
        if (q.generation > 0 && u < 0.25)
            chosen.push_back(q);
        else if (q.generation < L && u < 0.8)
            for (const auto &c : q.children())
                stack.push_back(c);
    }
    for (const auto &q : chosen) {
        in.B.fill(q);
        const int d = Lmax - q.generation;
        const std::uint64_t cells = std::uint64_t{1} << (N * d);
        // at most floor(delta1 * cells) cells of A in q
        Rational cap = d1 * cells;
        const auto top = static_cast<std::uint64_t>(boost::multiprecision::numerator(cap) /
                                                    boost::multiprecision::denominator(cap));
        auto k = std::min(top, static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(top + 1)));
        std::vector<std::size_t> cellsv;
        const std::int64_t w = std::int64_t{1} << d;
        for (std::uint64_t t = 0; t < cells; ++t) {
            Index<N> kk;
            std::uint64_t rest = t;
            for (int i = N - 1; i >= 0; --i) {
                kk[i] = (q.index[i] << d) + static_cast<std::int64_t>(rest % static_cast<std::uint64_t>(w));
                rest /= static_cast<std::uint64_t>(w);
            }
            cellsv.push_back(in.A.flat(kk));
        }
        for (std::size_t i = cellsv.size(); i > 1; --i)
            std::swap(cellsv[i - 1], cellsv[rng.below(i)]);
        for (std::uint64_t i = 0; i < k; ++i)
            in.A.set(cellsv[i]);
    }
    // a few extra B cells outside A
    for (int t = 0; t < 5; ++t)
        in.B.set(rng.below(in.B.cells()));
    return in;
}

} // namespace dpplab
