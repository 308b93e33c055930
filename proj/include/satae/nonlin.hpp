#pragma once

// Activation catalog. Every activation with a flat (zero-derivative) region has
// a complementary function f_c(z) = distance from z to the nearest flat region.
// Activations without flat regions can be given an f_c through the multi-scale
// average-variation construction in numeric_comp().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "satae/errors.hpp"
#include "satae/text.hpp"

namespace satae {

enum class NonlinKind : std::uint8_t {
    shrink = 0,
    relu = 1,
    satlin = 2,
    linear = 3,
    tabulated = 4,
};

inline std::string_view to_string(NonlinKind kind) {
    switch (kind) {
        case NonlinKind::shrink: return "shrink";
        case NonlinKind::relu: return "relu";
        case NonlinKind::satlin: return "satlin";
        case NonlinKind::linear: return "linear";
        case NonlinKind::tabulated: return "tabulated";
    }
    return "unknown";
}

inline NonlinKind parse_nonlin_kind(std::string_view name) {
    if (name == "shrink") return NonlinKind::shrink;
    if (name == "relu" || name == "rectified-linear") return NonlinKind::relu;
    if (name == "satlin" || name == "saturated-linear") return NonlinKind::satlin;
    if (name == "linear") return NonlinKind::linear;
    throw std::invalid_argument("unknown nonlinearity '" + std::string(name) + "'");
}

/// Closed interval; either end may be infinite.
struct Interval {
    double lo;
    double hi;

    bool contains(double z) const { return z >= lo && z <= hi; }

    double distance(double z) const {
        if (z < lo) return lo - z;
        if (z > hi) return z - hi;
        return 0.0;
    }

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// The set S = {z | f'(z) = 0}, restricted to intervals of positive length.
class SaturationSet {
public:
    SaturationSet() = default;

    explicit SaturationSet(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
        for (std::size_t i = 0; i < intervals_.size(); ++i) {
            const auto& iv = intervals_[i];
            if (!(iv.lo < iv.hi)) {
                throw std::invalid_argument("saturation interval must have positive length");
            }
            if (i > 0 && !(intervals_[i - 1].hi < iv.lo)) {
                throw std::invalid_argument("saturation intervals must be sorted and disjoint");
            }
        }
    }

    bool empty() const { return intervals_.empty(); }
    std::span<const Interval> intervals() const { return intervals_; }

    bool contains(double z) const {
        return std::any_of(intervals_.begin(), intervals_.end(), [z](const Interval& iv) { return iv.contains(z); });
    }

    double distance(double z) const {
        if (empty()) {
            throw EmptySaturationSet("saturation set is empty");
        }
        double best = std::numeric_limits<double>::infinity();
        for (const auto& iv : intervals_) {
            best = std::min(best, iv.distance(z));
        }
        return best;
    }

    friend bool operator==(const SaturationSet&, const SaturationSet&) = default;

private:
    std::vector<Interval> intervals_;
};

/// Uniformly spaced abscissae start, start + step, ..., start + (size-1)*step.
struct UniformGrid {
    double start = 0.0;
    double step = 1.0;
    std::size_t size = 0;

    double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
    double back() const { return at(size - 1); }

    // Grid over [lo, hi] with the given spacing; hi is rounded to the nearest node.
    static UniformGrid over(double lo, double hi, double step) {
        if (!(step > 0.0) || !(hi >= lo)) {
            throw std::invalid_argument("grid needs lo <= hi and step > 0");
        }
        const auto intervals = static_cast<std::size_t>(std::llround((hi - lo) / step));
        return UniformGrid{lo, step, intervals + 1};
    }
};

/// Sampled activation produced by numeric_comp().
struct CompTable {
    UniformGrid grid;
    std::vector<double> f;
    std::vector<double> abs_fprime;
    std::vector<double> fc;
};

namespace detail {

// Piecewise-linear interpolation, constant beyond either end.
inline double interp(const UniformGrid& g, std::span<const double> v, double z) {
    if (z <= g.start) return v.front();
    if (z >= g.back()) return v.back();
    const double t = (z - g.start) / g.step;
    auto i = static_cast<std::size_t>(t);
    if (i >= g.size - 1) i = g.size - 2;
    const double frac = t - static_cast<double>(i);
    return v[i] + frac * (v[i + 1] - v[i]);
}

// Slope of the interpolant on the half-open segment holding z; zero outside the grid.
inline double interp_slope(const UniformGrid& g, std::span<const double> v, double z) {
    if (z < g.start || z >= g.back()) return 0.0;
    auto i = static_cast<std::size_t>((z - g.start) / g.step);
    if (i >= g.size - 1) i = g.size - 2;
    return (v[i + 1] - v[i]) / g.step;
}

inline double sign(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Activation descriptor. Cheap to copy; tabulated kinds share their table.
class Nonlinearity {
public:
    static Nonlinearity shrink(double lambda = 1.0) { return {NonlinKind::shrink, checked_width(lambda)}; }
    static Nonlinearity relu() { return {NonlinKind::relu, 1.0}; }
    static Nonlinearity satlin(double lambda = 1.0) { return {NonlinKind::satlin, checked_width(lambda)}; }
    static Nonlinearity linear() { return {NonlinKind::linear, 1.0}; }

    static Nonlinearity from_kind(NonlinKind kind, double lambda = 1.0) {
        switch (kind) {
            case NonlinKind::shrink: return shrink(lambda);
            case NonlinKind::relu: return relu();
            case NonlinKind::satlin: return satlin(lambda);
            case NonlinKind::linear: return linear();
            case NonlinKind::tabulated: break;
        }
        throw std::invalid_argument("tabulated nonlinearities are built by numeric_comp()");
    }

    static Nonlinearity tabulated(CompTable table) {
        const auto n = table.grid.size;
        if (n < 2 || !(table.grid.step > 0.0)) {
            throw std::invalid_argument("tabulated nonlinearity needs >= 2 strictly increasing nodes");
        }
        if (table.f.size() != n || table.abs_fprime.size() != n || table.fc.size() != n) {
            throw std::invalid_argument("tabulated columns must match the grid size");
        }
        Nonlinearity out{NonlinKind::tabulated, 1.0};
        out.table_ = std::make_shared<const CompTable>(std::move(table));
        return out;
    }

    NonlinKind kind() const { return kind_; }
    double width() const { return width_; }
    const CompTable* table() const { return table_.get(); }

    double operator()(double z) const { return eval(z); }

    double eval(double z) const {
        switch (kind_) {
            case NonlinKind::shrink: return detail::sign(z) * std::max(std::abs(z) - width_, 0.0);
            case NonlinKind::relu: return std::max(z, 0.0);
            case NonlinKind::satlin: return std::clamp(z, -width_, width_);
            case NonlinKind::linear: return z;
            case NonlinKind::tabulated: return detail::interp(table_->grid, table_->f, z);
        }
        return 0.0;
    }

    // Kinks take the flat-side value 0.
    double deriv(double z) const {
        switch (kind_) {
            case NonlinKind::shrink: return std::abs(z) > width_ ? 1.0 : 0.0;
            case NonlinKind::relu: return z > 0.0 ? 1.0 : 0.0;
            case NonlinKind::satlin: return std::abs(z) < width_ ? 1.0 : 0.0;
            case NonlinKind::linear: return 1.0;
            case NonlinKind::tabulated: return detail::interp_slope(table_->grid, table_->f, z);
        }
        return 0.0;
    }

    SaturationSet saturation_set() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        switch (kind_) {
            case NonlinKind::shrink: return SaturationSet({{-width_, width_}});
            case NonlinKind::relu: return SaturationSet({{-inf, 0.0}});
            case NonlinKind::satlin: return SaturationSet({{-inf, -width_}, {width_, inf}});
            case NonlinKind::linear: return SaturationSet{};
            case NonlinKind::tabulated: return tabulated_saturation_set();
        }
        return SaturationSet{};
    }

    bool has_saturation() const { return kind_ != NonlinKind::linear; }

    /// f_c(z). For the closed-form kinds this is the exact distance to S; for
    /// tabulated kinds it interpolates the stored multi-scale table.
    double comp(double z) const {
        switch (kind_) {
            case NonlinKind::shrink: return std::max(std::abs(z) - width_, 0.0);
            case NonlinKind::relu: return std::max(z, 0.0);
            case NonlinKind::satlin: return std::max(width_ - std::abs(z), 0.0);
            case NonlinKind::linear: throw EmptySaturationSet("linear activation has no saturation region");
            case NonlinKind::tabulated: return detail::interp(table_->grid, table_->fc, z);
        }
        return 0.0;
    }

    double comp_deriv(double z) const {
        switch (kind_) {
            case NonlinKind::shrink: return std::abs(z) > width_ ? detail::sign(z) : 0.0;
            case NonlinKind::relu: return z > 0.0 ? 1.0 : 0.0;
            case NonlinKind::satlin: return std::abs(z) < width_ ? -detail::sign(z) : 0.0;
            case NonlinKind::linear: throw EmptySaturationSet("linear activation has no saturation region");
            case NonlinKind::tabulated: return detail::interp_slope(table_->grid, table_->fc, z);
        }
        return 0.0;
    }

    // Points where f' or f_c' jumps; finite-difference checks stay clear of these.
    std::vector<double> kinks() const {
        switch (kind_) {
            case NonlinKind::shrink: return {-width_, width_};
            case NonlinKind::satlin: return {-width_, 0.0, width_};
            case NonlinKind::relu: return {0.0};
            default: return {};
        }
    }

private:
    Nonlinearity(NonlinKind kind, double width) : kind_(kind), width_(width) {}

    static double checked_width(double lambda) {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw std::invalid_argument("activation width must be positive and finite");
        }
        return lambda;
    }

    // Runs of at least two flat nodes, plus the constant extrapolation tails.
    SaturationSet tabulated_saturation_set() const {
        constexpr double inf = std::numeric_limits<double>::infinity();
        const auto& t = *table_;
        const std::size_t n = t.grid.size;
        const double scale = *std::max_element(t.abs_fprime.begin(), t.abs_fprime.end());
        const double tol = 1e-12 * std::max(scale, 1.0);
        std::vector<Interval> out;
        std::size_t i = 0;
        while (i < n) {
            if (t.abs_fprime[i] > tol) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < n && t.abs_fprime[j + 1] <= tol) ++j;
            const bool touches_lo = i == 0;
            const bool touches_hi = j == n - 1;
            if (j > i || touches_lo || touches_hi) {
                out.push_back({touches_lo ? -inf : t.grid.at(i), touches_hi ? inf : t.grid.at(j)});
            }
            i = j + 1;
        }
        if (out.empty() || out.front().lo != -inf) out.insert(out.begin(), {-inf, t.grid.start});
        if (out.back().hi != inf) out.push_back({t.grid.back(), inf});
        return SaturationSet(std::move(out));
    }

    NonlinKind kind_;
    double width_;
    std::shared_ptr<const CompTable> table_;
};

/// Scale weighting for the multi-scale average variation.
struct VariationWeights {
    double rate = 1.0;            // w(l) = exp(-rate * l)
    double scale_cutoff = 20.0;   // integrate l over [0, scale_cutoff]
    double grid_step = 0.01;      // trapezoid step along l

    double operator()(double l) const { return std::exp(-rate * l); }

    void validate() const {
        if (!(rate > 0.0) || !(scale_cutoff > 0.0) || !(grid_step > 0.0)) {
            throw std::invalid_argument("variation weights need positive rate, cutoff and step");
        }
        // Mass beyond the cutoff relative to the total mass 1/rate.
        if (std::exp(-rate * scale_cutoff) >= 1e-8) {
            throw std::invalid_argument("scale cutoff leaves more than 1e-8 of the weight mass untreated");
        }
    }
};

namespace detail {

// Antiderivative of the piecewise-linear interpolant of `a`, extended by the
// end values outside the grid, with C(grid.start) = 0.
class CumulativeIntegral {
public:
    CumulativeIntegral(const UniformGrid& grid, std::span<const double> a) : grid_(grid), a_(a), prefix_(a.size()) {
        prefix_[0] = 0.0;
        for (std::size_t k = 1; k < a.size(); ++k) {
            prefix_[k] = prefix_[k - 1] + 0.5 * grid.step * (a[k - 1] + a[k]);
        }
    }

    double at_node(std::size_t k) const { return prefix_[k]; }

    double operator()(double x) const {
        const double h = grid_.step;
        if (x <= grid_.start) return -a_.front() * (grid_.start - x);
        if (x >= grid_.back()) return prefix_.back() + a_.back() * (x - grid_.back());
        const double pos = (x - grid_.start) / h;
        auto k = static_cast<std::size_t>(pos);
        if (k >= grid_.size - 1) k = grid_.size - 2;
        const double t = pos - static_cast<double>(k);
        return prefix_[k] + h * t * (a_[k] + 0.5 * t * (a_[k + 1] - a_[k]));
    }

private:
    UniformGrid grid_;
    std::span<const double> a_;
    std::vector<double> prefix_;
};

// Shortest interior run of flat or non-flat samples, ignoring isolated flat nodes.
inline std::size_t narrowest_feature_nodes(std::span<const double> a) {
    const double scale = *std::max_element(a.begin(), a.end());
    const double tol = 1e-12 * std::max(scale, 1.0);
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::size_t i = 0;
    const std::size_t n = a.size();
    while (i < n) {
        const bool flat = a[i] <= tol;
        std::size_t j = i;
        while (j + 1 < n && (a[j + 1] <= tol) == flat) ++j;
        const bool interior = i > 0 && j + 1 < n;
        const std::size_t count = j - i + 1;
        if (interior && !(flat && count == 1)) {
            best = std::min(best, count);
        }
        i = j + 1;
    }
    return best;
}

}  // namespace detail

/// Builds f_c = min(M+ f, M- f) from |f'| sampled on `grid`.
///
/// M+ f(x) = integral over scales l of w(l) * (1/l) * integral_x^{x+l} |f'|, and
/// M- mirrors it to the left. The inner integral is exact for the piecewise-linear
/// interpolant of the samples (|f'| is held constant beyond the grid ends); the
/// scale integral is a trapezoid rule on [0, scale_cutoff]. `f_values`, when
/// given, becomes the tabulated f; otherwise f is the running integral of |f'|.
///
/// Throws GridTooCoarse when an interior flat or non-flat run of |f'| spans
/// fewer than ten samples or ten scale steps.
inline Nonlinearity numeric_comp(const UniformGrid& grid, std::span<const double> fprime, const VariationWeights& weights,
                                 std::span<const double> f_values = {}) {
    weights.validate();
    if (grid.size < 2 || fprime.size() != grid.size || !(grid.step > 0.0)) {
        throw std::invalid_argument("numeric_comp needs >= 2 samples on a grid with positive step");
    }
    if (!f_values.empty() && f_values.size() != grid.size) {
        throw std::invalid_argument("f samples must match the grid size");
    }
    std::vector<double> a(fprime.size());
    std::transform(fprime.begin(), fprime.end(), a.begin(), [](double v) { return std::abs(v); });

    const std::size_t narrowest = detail::narrowest_feature_nodes(a);
    if (narrowest != std::numeric_limits<std::size_t>::max()) {
        const double width = static_cast<double>(narrowest) * grid.step;
        if (narrowest < 10 || weights.grid_step > width / 10.0) {
            throw GridTooCoarse("narrowest feature of |f'| spans " + format_double(width) +
                                ", less than ten quadrature steps");
        }
    }

    const detail::CumulativeIntegral cumulative(grid, a);
    const auto scale_steps = static_cast<std::size_t>(std::ceil(weights.scale_cutoff / weights.grid_step - 1e-9));
    const double ds = weights.scale_cutoff / static_cast<double>(scale_steps);
    std::vector<double> w(scale_steps + 1);
    for (std::size_t m = 0; m <= scale_steps; ++m) {
        w[m] = weights(static_cast<double>(m) * ds) * ((m == 0 || m == scale_steps) ? 0.5 : 1.0);
    }

    CompTable table;
    table.grid = grid;
    table.abs_fprime = a;
    table.fc.resize(grid.size);
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double x = grid.at(k);
        const double cx = cumulative.at_node(k);
        // At l = 0 the average variation is the local value |f'(x)| in both directions.
        double m_plus = w[0] * a[k];
        double m_minus = w[0] * a[k];
        for (std::size_t m = 1; m <= scale_steps; ++m) {
            const double l = static_cast<double>(m) * ds;
            m_plus += w[m] * (cumulative(x + l) - cx) / l;
            m_minus += w[m] * (cx - cumulative(x - l)) / l;
        }
        table.fc[k] = std::max(0.0, std::min(m_plus, m_minus) * ds);
    }

    if (f_values.empty()) {
        table.f.resize(grid.size);
        for (std::size_t k = 0; k < grid.size; ++k) table.f[k] = cumulative.at_node(k);
    } else {
        table.f.assign(f_values.begin(), f_values.end());
    }
    return Nonlinearity::tabulated(std::move(table));
}

/// Samples f and f' on `grid` and forwards to the table-based overload.
inline Nonlinearity numeric_comp(const std::function<double(double)>& f, const std::function<double(double)>& fprime,
                                 const UniformGrid& grid, const VariationWeights& weights = {}) {
    std::vector<double> fs(grid.size);
    std::vector<double> ds(grid.size);
    for (std::size_t k = 0; k < grid.size; ++k) {
        fs[k] = f(grid.at(k));
        ds[k] = fprime(grid.at(k));
    }
    return numeric_comp(grid, ds, weights, fs);
}

/// `z,fc` table with full double precision.
inline std::string comp_table_csv(const Nonlinearity& f, const UniformGrid& grid) {
    std::string out = "z,fc\n";
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double z = grid.at(k);
        out += format_double(z);
        out += ',';
        out += format_double(f.comp(z));
        out += '\n';
    }
    return out;
}

}  // namespace satae
