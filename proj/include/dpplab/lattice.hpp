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

#include <functional>
#include <memory>
#include <optional>
#include <set>

namespace dpplab {

template <int N> struct Region {
    enum class Kind { ball, cube, annulus, box, complement };

    Kind kind = Kind::ball;
    Vec<N> center = zero_vec<N>();
    double radius = 1.0;     // ball radius, cube side, annulus outer radius
    double inner_radius = 0; // annulus only
    Vec<N> lo = zero_vec<N>(), hi = zero_vec<N>();
    std::shared_ptr<const Region> base; // complement only

    static Region ball(const Vec<N> &c, double r)
    {
        require(r > 0, ErrorKind::precondition, "ball radius must be positive");
        Region g;
        g.kind = Kind::ball;
        g.center = c;
        g.radius = r;
        return g;
    }
    // Q_r(c): |y_i - c_i| < r/2.
    static Region cube(const Vec<N> &c, double side)
    {
        require(side > 0, ErrorKind::precondition, "cube side must be positive");
        Region g;
        g.kind = Kind::cube;
        g.center = c;
        g.radius = side;
        return g;
    }
    // B_R(c) minus the closed ball of radius r.
    static Region annulus(const Vec<N> &c, double r, double R)
    {
        require(0 < r && r < R, ErrorKind::precondition, "annulus needs 0 < r < R");
        Region g;
        g.kind = Kind::annulus;
        g.center = c;
        g.radius = R;
        g.inner_radius = r;
        return g;
    }
    static Region box(const Vec<N> &lo, const Vec<N> &hi)
    {
        for (int i = 0; i < N; ++i)
            require(hi[i] > lo[i], ErrorKind::precondition, "degenerate box");
        Region g;
        g.kind = Kind::box;
        g.lo = lo;
        g.hi = hi;
        return g;
    }
    static Region complement(const Region &r)
    {
        Region g;
        g.kind = Kind::complement;
        g.base = std::make_shared<const Region>(r);
        return g;
    }

    bool bounded() const { return kind != Kind::complement; }

    bool contains(const Vec<N> &x) const
    {
        switch (kind) {
        case Kind::ball:
            return dist<N>(x, center) < radius;
        case Kind::cube:
            for (int i = 0; i < N; ++i)
                if (!(std::abs(x[i] - center[i]) < radius / 2))
                    return false;
            return true;
        case Kind::annulus: {
            double d = dist<N>(x, center);
            return d > inner_radius && d < radius;
        }
        case Kind::box:
            for (int i = 0; i < N; ++i)
                if (!(x[i] > lo[i] && x[i] < hi[i]))
                    return false;
            return true;
        case Kind::complement:
            return !base->contains(x);
        }
        return false;
    }

    // Euclidean distance from x to the region (0 inside).
    double distance(const Vec<N> &x) const
    {
        switch (kind) {
        case Kind::ball:
            return std::max(0.0, dist<N>(x, center) - radius);
        case Kind::cube: {
            double s = 0;
            for (int i = 0; i < N; ++i) {
                double t = std::max(0.0, std::abs(x[i] - center[i]) - radius / 2);
                s += t * t;
            }
            return std::sqrt(s);
        }
        case Kind::annulus: {
            double d = dist<N>(x, center);
            if (d >= radius)
                return d - radius;
            if (d <= inner_radius)
                return inner_radius - d;
            return 0.0;
        }
        case Kind::box: {
            double s = 0;
            for (int i = 0; i < N; ++i) {
                double t = std::max({0.0, lo[i] - x[i], x[i] - hi[i]});
                s += t * t;
            }
            return std::sqrt(s);
        }
        case Kind::complement:
            return base->depth(x);
        }
        return 0.0;
    }

    // Distance from x to the complement of the region (0 outside).
    double depth(const Vec<N> &x) const
    {
        if (kind == Kind::complement)
            return base->distance(x);
        if (!contains(x))
            return 0.0;
        switch (kind) {
        case Kind::ball:
            return radius - dist<N>(x, center);
        case Kind::cube: {
            double m = radius;
            for (int i = 0; i < N; ++i)
                m = std::min(m, radius / 2 - std::abs(x[i] - center[i]));
            return m;
        }
        case Kind::annulus: {
            double d = dist<N>(x, center);
            return std::min(d - inner_radius, radius - d);
        }
        case Kind::box: {
            double m = hi[0] - lo[0];
            for (int i = 0; i < N; ++i)
                m = std::min({m, x[i] - lo[i], hi[i] - x[i]});
            return m;
        }
        default:
            return 0.0;
        }
    }

    std::pair<Vec<N>, Vec<N>> bounding_box() const
    {
        require(bounded(), ErrorKind::precondition, "unbounded region");
        Vec<N> a, b;
        for (int i = 0; i < N; ++i) {
            switch (kind) {
            case Kind::ball:
            case Kind::annulus:
                a[i] = center[i] - radius;
                b[i] = center[i] + radius;
                break;
            case Kind::cube:
                a[i] = center[i] - radius / 2;
                b[i] = center[i] + radius / 2;
                break;
            default:
                a[i] = lo[i];
                b[i] = hi[i];
            }
        }
        return {a, b};
    }

    double diameter() const
    {
        auto [a, b] = bounding_box();
        if (kind == Kind::ball || kind == Kind::annulus)
            return 2 * radius;
        return dist<N>(a, b);
    }
};

template <int N> class Lattice {
  public:
    Lattice() = default;
    Lattice(const Vec<N> &origin, double h, const Index<N> &counts)
        : origin_(origin), h_(h), counts_(counts)
    {
        require(h > 0, ErrorKind::precondition, "lattice spacing must be positive");
        std::int64_t s = 1;
        for (int i = N - 1; i >= 0; --i) {
            require(counts[i] >= 1, ErrorKind::precondition, "empty lattice axis");
            strides_[i] = s;
            s *= counts[i];
        }
        size_ = static_cast<std::size_t>(s);
    }

    const Vec<N> &origin() const { return origin_; }
    double h() const { return h_; }
    const Index<N> &counts() const { return counts_; }
    const Index<N> &strides() const { return strides_; }
    std::size_t size() const { return size_; }
    double cell_volume() const { return std::pow(h_, N); }

    // Row-major, last axis fastest.
    std::size_t flat(const Index<N> &k) const
    {
        std::int64_t f = 0;
        for (int i = 0; i < N; ++i)
            f += k[i] * strides_[i];
        return static_cast<std::size_t>(f);
    }
    Index<N> multi(std::size_t f) const
    {
        Index<N> k;
        auto r = static_cast<std::int64_t>(f);
        for (int i = 0; i < N; ++i) {
            k[i] = r / strides_[i];
            r -= k[i] * strides_[i];
        }
        return k;
    }
    bool in_bounds(const Index<N> &k) const
    {
        for (int i = 0; i < N; ++i)
            if (k[i] < 0 || k[i] >= counts_[i])
                return false;
        return true;
    }
    Vec<N> node(const Index<N> &k) const
    {
        Vec<N> x;
        for (int i = 0; i < N; ++i)
            x[i] = origin_[i] + h_ * static_cast<double>(k[i]);
        return x;
    }
    Vec<N> node(std::size_t f) const { return node(multi(f)); }

    Index<N> nearest_index(const Vec<N> &x) const
    {
        Index<N> k;
        for (int i = 0; i < N; ++i)
            k[i] = static_cast<std::int64_t>(std::llround((x[i] - origin_[i]) / h_));
        return k;
    }
    std::optional<std::size_t> nearest(const Vec<N> &x) const
    {
        auto k = nearest_index(x);
        if (!in_bounds(k))
            return std::nullopt;
        return flat(k);
    }

    bool same_as(const Lattice &o) const
    {
        return origin_ == o.origin_ && h_ == o.h_ && counts_ == o.counts_;
    }

  private:
    Vec<N> origin_{};
    double h_ = 1.0;
    Index<N> counts_{};
    Index<N> strides_{};
    std::size_t size_ = 0;
};

// Nodes lo + h*k, k = 0..floor(side/h), per axis.
template <int N> Lattice<N> build_lattice(const Region<N> &box, double h)
{
    require(h > 0, ErrorKind::precondition, "lattice spacing must be positive");
    auto [lo, hi] = box.bounding_box();
    Index<N> counts;
    for (int i = 0; i < N; ++i) {
        double side = hi[i] - lo[i];
        require(side > 0, ErrorKind::precondition, "degenerate box");
        counts[i] = static_cast<std::int64_t>(std::floor(side / h + 1e-9)) + 1;
        require(counts[i] >= 2, ErrorKind::precondition, "fewer than two nodes per axis");
    }
    return Lattice<N>(lo, h, counts);
}

// Lattice on hZ^N whose nodes cover the closed box [lo, hi].
template <int N> Lattice<N> aligned_lattice(const Vec<N> &lo, const Vec<N> &hi, double h)
{
    require(h > 0, ErrorKind::precondition, "lattice spacing must be positive");
    Vec<N> origin;
    Index<N> counts;
    for (int i = 0; i < N; ++i) {
        auto a = static_cast<std::int64_t>(std::floor(lo[i] / h + 1e-9));
        auto b = static_cast<std::int64_t>(std::ceil(hi[i] / h - 1e-9));
        origin[i] = static_cast<double>(a) * h;
        counts[i] = std::max<std::int64_t>(b - a + 1, 2);
    }
    return Lattice<N>(origin, h, counts);
}

enum class NodeClass : std::uint8_t { outside = 0, interior = 1, strip = 2 };

// Omega together with the lattice nodes at distance at most margin = Lambda*eps.
template <int N> class ExtendedDomain {
  public:
    ExtendedDomain(const Region<N> &omega, double margin, double h) : inner_(omega), margin_(margin)
    {
        require(margin > 0, ErrorKind::precondition, "margin must be positive");
        auto [lo, hi] = omega.bounding_box();
        for (int i = 0; i < N; ++i) {
            lo[i] -= margin + h;
            hi[i] += margin + h;
        }
        lattice_ = aligned_lattice<N>(lo, hi, h);
        cls_.assign(lattice_.size(), NodeClass::outside);
        const double cut = margin * (1 + 1e-12);
        for (std::size_t f = 0; f < lattice_.size(); ++f) {
            Vec<N> x = lattice_.node(f);
            if (omega.contains(x)) {
                cls_[f] = NodeClass::interior;
                interior_.push_back(f);
            } else if (omega.distance(x) <= cut) {
                cls_[f] = NodeClass::strip;
                strip_.push_back(f);
            }
        }
        require(!interior_.empty(), ErrorKind::precondition, "domain contains no lattice node");
    }

    const Region<N> &inner() const { return inner_; }
    double margin() const { return margin_; }
    const Lattice<N> &lattice() const { return lattice_; }
    NodeClass classify(std::size_t f) const { return cls_[f]; }
    const std::vector<std::size_t> &interior() const { return interior_; }
    const std::vector<std::size_t> &strip() const { return strip_; }
    bool in_outer(std::size_t f) const { return cls_[f] != NodeClass::outside; }

  private:
    Region<N> inner_;
    double margin_;
    Lattice<N> lattice_;
    std::vector<NodeClass> cls_;
    std::vector<std::size_t> interior_, strip_;
};

// Dyadic open subcube of Q_1 = (-1/2, 1/2)^N.
template <int N> struct DyadicCube {
    int generation = 0;
    Index<N> index{};

    static DyadicCube root() { return DyadicCube{}; }

    std::vector<DyadicCube> children() const
    {
        std::vector<DyadicCube> out;
        out.reserve(std::size_t{1} << N);
        for (unsigned bits = 0; bits < (1u << N); ++bits) {
            DyadicCube c;
            c.generation = generation + 1;
            for (int i = 0; i < N; ++i)
                c.index[i] = 2 * index[i] + ((bits >> (N - 1 - i)) & 1u);
            out.push_back(c);
        }
        return out;
    }

    DyadicCube pre() const
    {
        require(generation >= 1, ErrorKind::precondition, "the root cube has no predecessor");
        DyadicCube p;
        p.generation = generation - 1;
        for (int i = 0; i < N; ++i)
            p.index[i] = index[i] >> 1;
        return p;
    }

    bool contains(const DyadicCube &q) const
    {
        if (q.generation < generation)
            return false;
        int d = q.generation - generation;
        for (int i = 0; i < N; ++i)
            if ((q.index[i] >> d) != index[i])
                return false;
        return true;
    }

    double side() const { return std::ldexp(1.0, -generation); }
    double lower(int axis) const { return -0.5 + std::ldexp(static_cast<double>(index[axis]), -generation); }

    auto operator<=>(const DyadicCube &) const = default;
};

enum class OffLattice { nearest, multilinear };
enum class OutsidePolicy { boundary_data, zero, error };

template <int N> class GridFunction {
  public:
    GridFunction() = default;
    GridFunction(Lattice<N> lat, std::vector<double> values,
                 OutsidePolicy policy = OutsidePolicy::error,
                 std::function<double(const Vec<N> &)> boundary = {},
                 OffLattice rule = OffLattice::nearest)
        : lat_(std::move(lat)), v_(std::move(values)), policy_(policy), g_(std::move(boundary)),
          rule_(rule)
    {
        require(v_.size() == lat_.size(), ErrorKind::precondition, "value count does not match lattice");
        for (double x : v_)
            require(std::isfinite(x), ErrorKind::precondition, "grid function values must be finite");
        if (policy_ == OutsidePolicy::boundary_data)
            require(static_cast<bool>(g_), ErrorKind::precondition, "boundary policy needs data");
    }

    template <class F>
    static GridFunction sample(const Lattice<N> &lat, F &&fn, OutsidePolicy policy = OutsidePolicy::error)
    {
        std::vector<double> v(lat.size());
        for (std::size_t f = 0; f < lat.size(); ++f)
            v[f] = fn(lat.node(f));
        return GridFunction(lat, std::move(v), policy);
    }

    const Lattice<N> &lattice() const { return lat_; }
    const std::vector<double> &values() const { return v_; }
    std::vector<double> &values() { return v_; }
    double at(std::size_t f) const { return v_[f]; }
    OffLattice rule() const { return rule_; }
    void set_rule(OffLattice r) { rule_ = r; }

    double operator()(const Vec<N> &x) const
    {
        if (rule_ == OffLattice::nearest) {
            auto k = lat_.nearest_index(x);
            if (lat_.in_bounds(k))
                return v_[lat_.flat(k)];
            return outside(x);
        }
        Index<N> base;
        Vec<N> t;
        for (int i = 0; i < N; ++i) {
            double s = (x[i] - lat_.origin()[i]) / lat_.h();
            double fl = std::floor(s);
            base[i] = static_cast<std::int64_t>(fl);
            t[i] = s - fl;
            if (t[i] < 1e-12) { // on a node plane up to rounding
                t[i] = 0.0;
            } else if (t[i] > 1.0 - 1e-12) {
                t[i] = 0.0;
                base[i] += 1;
            }
        }
        double acc = 0.0;
        for (unsigned bits = 0; bits < (1u << N); ++bits) {
            double w = 1.0;
            Index<N> k = base;
            for (int i = 0; i < N; ++i) {
                bool up = (bits >> i) & 1u;
                w *= up ? t[i] : 1.0 - t[i];
                k[i] += up ? 1 : 0;
            }
            if (w == 0.0)
                continue;
            if (!lat_.in_bounds(k))
                return outside(x);
            acc += w * v_[lat_.flat(k)];
        }
        return acc;
    }

  private:
    double outside(const Vec<N> &x) const
    {
        switch (policy_) {
        case OutsidePolicy::boundary_data:
            return g_(x);
        case OutsidePolicy::zero:
            return 0.0;
        case OutsidePolicy::error:
            break;
        }
        throw Error(ErrorKind::domain, "grid function evaluated outside its lattice");
    }

    Lattice<N> lat_;
    std::vector<double> v_;
    OutsidePolicy policy_ = OutsidePolicy::error;
    std::function<double(const Vec<N> &)> g_;
    OffLattice rule_ = OffLattice::nearest;
};

// Cubes of side s = eps/(4 sqrt N), centers on sZ^N.
template <int N> struct CubeCover {
    double side = 0.0;
    std::vector<Index<N>> cubes; // sorted, unique

    Vec<N> center(const Index<N> &k) const
    {
        Vec<N> c;
        for (int i = 0; i < N; ++i)
            c[i] = side * static_cast<double>(k[i]);
        return c;
    }
    bool closure_contains(const Index<N> &k, const Vec<N> &p) const
    {
        const double tol = 1e-12 * side;
        for (int i = 0; i < N; ++i)
            if (std::abs(p[i] - side * static_cast<double>(k[i])) > side / 2 + tol)
                return false;
        return true;
    }
    double measure() const { return static_cast<double>(cubes.size()) * std::pow(side, N); }
};

namespace detail {
template <int N> std::vector<Index<N>> touching_cells(const Vec<N> &p, double s)
{
    const double tol = 1e-12;
    std::array<std::pair<std::int64_t, std::int64_t>, N> range;
    for (int i = 0; i < N; ++i) {
        double t = p[i] / s;
        range[i] = {static_cast<std::int64_t>(std::ceil(t - 0.5 - tol)),
                    static_cast<std::int64_t>(std::floor(t + 0.5 + tol))};
    }
    std::vector<Index<N>> out;
    Index<N> k;
    for (int i = 0; i < N; ++i)
        k[i] = range[i].first;
    while (true) {
        out.push_back(k);
        int ax = N - 1;
        while (ax >= 0) {
            if (++k[ax] <= range[ax].second)
                break;
            k[ax] = range[ax].first;
            --ax;
        }
        if (ax < 0)
            break;
    }
    return out;
}
} // namespace detail

template <int N> double cover_side(double eps) { return eps / (4.0 * std::sqrt(static_cast<double>(N))); }

template <int N> CubeCover<N> epsilon_cube_cover(const std::vector<Vec<N>> &points, double eps)
{
    require(eps > 0, ErrorKind::precondition, "eps must be positive");
    CubeCover<N> cover;
    cover.side = cover_side<N>(eps);
    std::set<Index<N>> cells;
    for (const auto &p : points)
        for (const auto &k : detail::touching_cells<N>(p, cover.side))
            cells.insert(k);
    cover.cubes.assign(cells.begin(), cells.end());
    return cover;
}

// Shared faces belong to the lexicographically smallest closed cube containing p.
template <int N> Index<N> owner_cube(const Vec<N> &p, double eps)
{
    return detail::touching_cells<N>(p, cover_side<N>(eps)).front();
}

template <int N> double region_measure_on_lattice(const Region<N> &r, const Lattice<N> &lat)
{
    require(r.bounded(), ErrorKind::precondition, "cannot measure an unbounded region");
    std::size_t n = 0;
    for (std::size_t f = 0; f < lat.size(); ++f)
        if (r.contains(lat.node(f)))
            ++n;
    return static_cast<double>(n) * lat.cell_volume();
}

} // namespace dpplab
