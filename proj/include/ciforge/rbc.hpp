// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// Region-based constellations: messages map directly to feasible regions of
// the complex plane instead of points. Implements the QAM/PSK CI baselines
// and the mirrored-ends (ME-QAM) and real-extended (RM-QAM) schemes, with
// exact region algebra (membership, minimum-energy points, pair distances)
// and the matching detectors. Amplitudes are in d_min = 2 units throughout.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "ciforge/errors.hpp"

namespace ciforge::rbc {

enum class Scheme { QamCi, PskCi, MeQam, RmQam };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::QamCi: return "qam";
        case Scheme::PskCi: return "psk";
        case Scheme::MeQam: return "meqam";
        case Scheme::RmQam: return "rmqam";
    }
    return "?";
}

inline Scheme scheme_from_name(const std::string& name) {
    if (name == "qam") return Scheme::QamCi;
    if (name == "psk") return Scheme::PskCi;
    if (name == "meqam") return Scheme::MeQam;
    if (name == "rmqam") return Scheme::RmQam;
    throw ConfigError("unknown scheme: " + name);
}

// ---------------------------------------------------------------------------
// 1-D regions
// ---------------------------------------------------------------------------

enum class RealRegionKind {
    Singleton,     // {v}
    HalfLineLower, // (-inf, b]
    HalfLineUpper, // [b, +inf)
    OutsidePair,   // (-inf, -b] U [b, +inf), b > 0 (sign-flexible)
    FullLine,      // R
};

struct RealRegion {
    RealRegionKind kind = RealRegionKind::Singleton;
    double value = 0.0; // singleton value or bound b

    static RealRegion singleton(double v) { return {RealRegionKind::Singleton, v}; }
    static RealRegion half_line_lower(double b) { return {RealRegionKind::HalfLineLower, b}; }
    static RealRegion half_line_upper(double b) { return {RealRegionKind::HalfLineUpper, b}; }
    static RealRegion outside_pair(double b) {
        if (!(b > 0.0)) throw ConfigError("outside pair requires b > 0");
        return {RealRegionKind::OutsidePair, b};
    }
    static RealRegion full_line() { return {RealRegionKind::FullLine, 0.0}; }

    bool contains(double x, double slack = 0.0) const {
        switch (kind) {
            case RealRegionKind::Singleton: return std::abs(x - value) <= slack;
            case RealRegionKind::HalfLineLower: return x <= value + slack;
            case RealRegionKind::HalfLineUpper: return x >= value - slack;
            case RealRegionKind::OutsidePair: return std::abs(x) >= value - slack;
            case RealRegionKind::FullLine: return true;
        }
        return false;
    }

    // |.|-smallest member; OutsidePair resolves the sign tie to +b.
    double min_energy_point() const {
        switch (kind) {
            case RealRegionKind::Singleton: return value;
            case RealRegionKind::HalfLineLower: return std::min(value, 0.0);
            case RealRegionKind::HalfLineUpper: return std::max(value, 0.0);
            case RealRegionKind::OutsidePair: return value;
            case RealRegionKind::FullLine: return 0.0;
        }
        return 0.0;
    }

    bool sign_flexible() const {
        return kind == RealRegionKind::OutsidePair || kind == RealRegionKind::FullLine;
    }
};

namespace detail {

struct Interval {
    double lo, hi;
};

inline int intervals_of(const RealRegion& r, Interval out[2]) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (r.kind) {
        case RealRegionKind::Singleton: out[0] = {r.value, r.value}; return 1;
        case RealRegionKind::HalfLineLower: out[0] = {-inf, r.value}; return 1;
        case RealRegionKind::HalfLineUpper: out[0] = {r.value, inf}; return 1;
        case RealRegionKind::OutsidePair:
            out[0] = {-inf, -r.value};
            out[1] = {r.value, inf};
            return 2;
        case RealRegionKind::FullLine: out[0] = {-inf, inf}; return 1;
    }
    return 0;
}

inline double interval_gap(const Interval& a, const Interval& b) {
    return std::max({0.0, b.lo - a.hi, a.lo - b.hi});
}

} // namespace detail

inline double region_distance(const RealRegion& a, const RealRegion& b) {
    detail::Interval ia[2], ib[2];
    const int na = detail::intervals_of(a, ia);
    const int nb = detail::intervals_of(b, ib);
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) d = std::min(d, detail::interval_gap(ia[i], ib[j]));
    return d;
}

// ---------------------------------------------------------------------------
// 2-D regions
// ---------------------------------------------------------------------------

struct ComplexRegion {
    enum class Kind { Product, PskCone };
    Kind kind = Kind::Product;
    RealRegion re, im;
    // PSK cone: wedge with apex at radius*e^{j*center_phase}, opening outward
    // with the given half angle.
    double center_phase = 0.0, half_angle = 0.0, radius = 0.0;

    static ComplexRegion product(RealRegion re, RealRegion im) {
        ComplexRegion r;
        r.kind = Kind::Product;
        r.re = re;
        r.im = im;
        return r;
    }
    static ComplexRegion psk_cone(double phase, double half_angle, double radius) {
        if (!(radius > 0.0)) throw ConfigError("psk cone requires radius > 0");
        ComplexRegion r;
        r.kind = Kind::PskCone;
        r.center_phase = phase;
        r.half_angle = half_angle;
        r.radius = radius;
        return r;
    }

    bool contains(std::complex<double> s, double slack = 0.0) const {
        if (kind == Kind::Product)
            return re.contains(s.real(), slack) && im.contains(s.imag(), slack);
        const std::complex<double> t = s * std::polar(1.0, -center_phase);
        const double st = std::sin(half_angle), ct = std::cos(half_angle);
        return t.real() * st - std::abs(t.imag()) * ct >= radius * st - slack;
    }

    std::complex<double> min_energy_point() const {
        if (kind == Kind::Product) return {re.min_energy_point(), im.min_energy_point()};
        return std::polar(radius, center_phase);
    }

    bool sign_flexible_re() const { return kind == Kind::Product && re.sign_flexible(); }
    bool sign_flexible_im() const { return kind == Kind::Product && im.sign_flexible(); }
};

namespace detail {

struct Ray {
    double px, py; // origin
    double ux, uy; // unit direction
};

inline double point_ray_distance(double x, double y, const Ray& r) {
    const double wx = x - r.px, wy = y - r.py;
    const double t = std::max(0.0, wx * r.ux + wy * r.uy);
    const double dx = wx - t * r.ux, dy = wy - t * r.uy;
    return std::hypot(dx, dy);
}

inline double ray_ray_distance(const Ray& a, const Ray& b) {
    // Unconstrained closest points of the two lines; fall back to the ray
    // endpoints when the line solution leaves t >= 0, s >= 0.
    const double rx = b.px - a.px, ry = b.py - a.py;
    const double d = a.ux * (-b.uy) - a.uy * (-b.ux); // det [u, -w]
    if (std::abs(d) > 1e-12) {
        const double t = (rx * (-b.uy) - ry * (-b.ux)) / d;
        const double s = (a.ux * ry - a.uy * rx) / d;
        if (t >= 0.0 && s >= 0.0) {
            const double cx = a.px + t * a.ux - (b.px + s * b.ux);
            const double cy = a.py + t * a.uy - (b.py + s * b.uy);
            return std::hypot(cx, cy);
        }
    }
    return std::min(point_ray_distance(a.px, a.py, b), point_ray_distance(b.px, b.py, a));
}

// Edge rays of a PSK wedge; the wedge is convex so the distance between two
// wedges is attained on their boundary rays (or apexes, a ray endpoint).
inline void cone_edges(const ComplexRegion& c, Ray out[2]) {
    const double ax = c.radius * std::cos(c.center_phase);
    const double ay = c.radius * std::sin(c.center_phase);
    const double p1 = c.center_phase + c.half_angle;
    const double p2 = c.center_phase - c.half_angle;
    out[0] = {ax, ay, std::cos(p1), std::sin(p1)};
    out[1] = {ax, ay, std::cos(p2), std::sin(p2)};
}

} // namespace detail

inline double region_distance(const ComplexRegion& a, const ComplexRegion& b) {
    if (a.kind == ComplexRegion::Kind::Product && b.kind == ComplexRegion::Kind::Product) {
        const double dx = region_distance(a.re, b.re);
        const double dy = region_distance(a.im, b.im);
        return std::hypot(dx, dy);
    }
    if (a.kind == ComplexRegion::Kind::PskCone && b.kind == ComplexRegion::Kind::PskCone) {
        detail::Ray ea[2], eb[2];
        detail::cone_edges(a, ea);
        detail::cone_edges(b, eb);
        double d = std::numeric_limits<double>::infinity();
        for (const auto& ra : ea)
            for (const auto& rb : eb) d = std::min(d, detail::ray_ray_distance(ra, rb));
        return d;
    }
    throw ConfigError("region distance between mixed kinds is not defined");
}

// ---------------------------------------------------------------------------
// Constellations
// ---------------------------------------------------------------------------

struct RealMessagePair {
    int l_re = 0, l_im = 0;
};

// Real-domain split m -> (m mod L, floor(m / L)).
inline RealMessagePair split_message(int m, int L) {
    if (L < 1 || m < 0 || m >= L * L) throw ConfigError("message out of range");
    return {m % L, m / L};
}

struct RbcConstellation;
double min_energy(const RbcConstellation& c);
double min_distance(const RbcConstellation& c);

// Canonical RM-QAM labeling. For M = 16 it reproduces the reference layout
// (M4 = {0,3}, M3 = {1,2}, M2 = {4,5,6}, M1 = {7..15}); larger M keeps the
// same pattern: ends first (right, then left), fixed lines by descending
// |Re| alternating +/-, then the SF column, then singleton pairs row-major.
struct RmLayout {
    int L;

    int m4_right() const { return 0; }
    int m4_left() const { return L - 1; }
    bool is_m4(int m) const { return m == 0 || m == L - 1; }
    bool is_m3(int m) const { return m >= 1 && m <= L - 2; }
    bool is_m2(int m) const { return m >= L && m <= 2 * L - 2; }
    bool is_m1(int m) const { return m >= 2 * L - 1; }

    // Fixed vertical lines at +/-(L + 2p), p = 0..L/2-2.
    double m3_value(int m) const {
        const int d = (m - 1) / 2;               // descending-magnitude index
        const int p = L / 2 - 2 - d;             // magnitude L + 2p
        const double mag = static_cast<double>(L + 2 * p);
        return (m % 2 == 1) ? mag : -mag;
    }
    int m3_message(double value) const {
        const int p = (static_cast<int>(std::abs(value)) - L) / 2;
        const int d = L / 2 - 2 - p;
        return 1 + 2 * d + (value > 0 ? 0 : 1);
    }

    double m2_re_value(int m) const { return 2.0 * (m - L) - L + 2; }
    int m2_message(int i_re) const { return L + i_re; }

    int m1_message(int i_re, int i_im) const { return 2 * L - 1 + i_im * (L - 1) + i_re; }
    double m1_re_value(int m) const { return 2.0 * ((m - (2 * L - 1)) % (L - 1)) - L + 2; }
    double m1_im_value(int m) const { return 2.0 * ((m - (2 * L - 1)) / (L - 1)) - L + 2; }
};

struct RbcConstellation {
    Scheme scheme = Scheme::QamCi;
    int M = 0;
    int L = 0; // side length for the QAM family, 0 for PSK
    std::vector<ComplexRegion> regions;
    double d_min = 0.0;
    double E_s = 0.0;

    const ComplexRegion& region(int m) const { return regions.at(static_cast<size_t>(m)); }

    int detect(std::complex<double> y) const;
};

namespace detail {

inline int qam_side(int M) {
    const int L = static_cast<int>(std::lround(std::sqrt(static_cast<double>(M))));
    if (L * L != M || L < 4 || L % 2 != 0)
        throw ConfigError("M must be an even perfect square with side >= 4");
    return L;
}

// Nearest index among points v_i = 2*i + off, i = 0..count-1, exact-midpoint
// ties resolving to the lower index.
inline int quantize_even_grid(double x, double off, int count) {
    const double t = (x - off) / 2.0;
    int i = static_cast<int>(std::ceil(t - 0.5));
    return std::clamp(i, 0, count - 1);
}

} // namespace detail

// PAM CI regions per real dimension: interior singletons at 2l-L+1, the two
// end messages keep their half lines.
inline RealRegion qam_pam_region(int l, int L) {
    if (l == 0) return RealRegion::half_line_lower(-L + 1.0);
    if (l == L - 1) return RealRegion::half_line_upper(L - 1.0);
    return RealRegion::singleton(2.0 * l - L + 1.0);
}

// ME-PAM regions: singletons at 2l-L+2 for l = 0..L-2, the last message is
// the two-sided sign-flexible region |x| >= L.
inline RealRegion mepam_region(int l, int L) {
    if (l == L - 1) return RealRegion::outside_pair(static_cast<double>(L));
    return RealRegion::singleton(2.0 * l - L + 2.0);
}

inline RbcConstellation build_qam_ci(int M) {
    const int L = detail::qam_side(M);
    RbcConstellation c;
    c.scheme = Scheme::QamCi;
    c.M = M;
    c.L = L;
    c.regions.reserve(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m) {
        const auto [lre, lim] = split_message(m, L);
        c.regions.push_back(
            ComplexRegion::product(qam_pam_region(lre, L), qam_pam_region(lim, L)));
    }
    c.E_s = min_energy(c);
    c.d_min = min_distance(c);
    return c;
}

inline RbcConstellation build_meqam(int M) {
    const int L = detail::qam_side(M);
    RbcConstellation c;
    c.scheme = Scheme::MeQam;
    c.M = M;
    c.L = L;
    c.regions.reserve(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m) {
        const auto [lre, lim] = split_message(m, L);
        c.regions.push_back(ComplexRegion::product(mepam_region(lre, L), mepam_region(lim, L)));
    }
    c.E_s = min_energy(c);
    c.d_min = min_distance(c);
    return c;
}

inline RbcConstellation build_rmqam(int M) {
    const int L = detail::qam_side(M);
    const RmLayout lay{L};
    RbcConstellation c;
    c.scheme = Scheme::RmQam;
    c.M = M;
    c.L = L;
    c.regions.resize(static_cast<size_t>(M));
    // M4: semi-infinite real ends, imaginary unconstrained.
    c.regions[static_cast<size_t>(lay.m4_right())] =
        ComplexRegion::product(RealRegion::half_line_upper(2.0 * L - 2.0), RealRegion::full_line());
    c.regions[static_cast<size_t>(lay.m4_left())] =
        ComplexRegion::product(RealRegion::half_line_lower(-2.0 * L + 2.0), RealRegion::full_line());
    // M3: fixed-sign vertical lines.
    for (int m = 1; m <= L - 2; ++m)
        c.regions[static_cast<size_t>(m)] = ComplexRegion::product(
            RealRegion::singleton(lay.m3_value(m)), RealRegion::full_line());
    // M2: real singletons with a sign-flexible imaginary part.
    for (int i = 0; i <= L - 2; ++i)
        c.regions[static_cast<size_t>(lay.m2_message(i))] = ComplexRegion::product(
            RealRegion::singleton(2.0 * i - L + 2.0),
            RealRegion::outside_pair(static_cast<double>(L)));
    // M1: singleton pairs retained from ME-QAM.
    for (int ii = 0; ii <= L - 2; ++ii)
        for (int ir = 0; ir <= L - 2; ++ir)
            c.regions[static_cast<size_t>(lay.m1_message(ir, ii))] = ComplexRegion::product(
                RealRegion::singleton(2.0 * ir - L + 2.0),
                RealRegion::singleton(2.0 * ii - L + 2.0));
    c.E_s = min_energy(c);
    c.d_min = min_distance(c);
    return c;
}

// PSK cones with radius 1/sin(pi/M) so adjacent regions sit exactly d_min = 2
// apart, keeping alpha^2 comparisons consistent across schemes.
inline RbcConstellation build_psk_ci(int M) {
    if (M < 4 || (M & (M - 1)) != 0) throw ConfigError("PSK requires M >= 4, power of two");
    RbcConstellation c;
    c.scheme = Scheme::PskCi;
    c.M = M;
    c.L = 0;
    const double theta = std::numbers::pi / M;
    const double r = 1.0 / std::sin(theta);
    c.regions.reserve(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m)
        c.regions.push_back(
            ComplexRegion::psk_cone(2.0 * std::numbers::pi * m / M, theta, r));
    c.E_s = min_energy(c);
    c.d_min = min_distance(c);
    return c;
}

inline RbcConstellation build(Scheme s, int M) {
    switch (s) {
        case Scheme::QamCi: return build_qam_ci(M);
        case Scheme::PskCi: return build_psk_ci(M);
        case Scheme::MeQam: return build_meqam(M);
        case Scheme::RmQam: return build_rmqam(M);
    }
    throw ConfigError("unknown scheme");
}

inline double min_energy(const RbcConstellation& c) {
    double sum = 0.0;
    for (const auto& r : c.regions) sum += std::norm(r.min_energy_point());
    return sum / static_cast<double>(c.M);
}

inline double min_distance(const RbcConstellation& c) {
    double d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < c.regions.size(); ++i)
        for (size_t j = i + 1; j < c.regions.size(); ++j)
            d = std::min(d, region_distance(c.regions[i], c.regions[j]));
    return d;
}

namespace detail {

// L-PAM quantization against boundaries at even integers, saturating ends.
inline int detect_qam_pam(double x, int L) {
    return quantize_even_grid(x, -L + 1.0, L);
}

// ME-PAM: beyond |x| > L-1 the sign-flexible message L-1 wins, otherwise the
// nearest singleton at 2l-L+2.
inline int detect_mepam(double x, int L) {
    if (std::abs(x) > L - 1.0) return L - 1;
    return quantize_even_grid(x, -L + 2.0, L - 1);
}

} // namespace detail

inline int RbcConstellation::detect(std::complex<double> y) const {
    switch (scheme) {
        case Scheme::QamCi: {
            const int lre = detail::detect_qam_pam(y.real(), L);
            const int lim = detail::detect_qam_pam(y.imag(), L);
            return lre + L * lim;
        }
        case Scheme::MeQam: {
            const int lre = detail::detect_mepam(y.real(), L);
            const int lim = detail::detect_mepam(y.imag(), L);
            return lre + L * lim;
        }
        case Scheme::RmQam: {
            const RmLayout lay{L};
            const double x = y.real();
            if (std::abs(x) > 2.0 * L - 3.0) return x > 0 ? lay.m4_right() : lay.m4_left();
            if (std::abs(x) > L - 1.0) {
                // Band of a fixed line: boundaries at odd integers L-1..2L-3.
                const int p = std::clamp(
                    static_cast<int>(std::ceil((std::abs(x) - (L - 1.0)) / 2.0 - 0.5)), 0,
                    L / 2 - 2);
                const double mag = static_cast<double>(L + 2 * p);
                return lay.m3_message(x > 0 ? mag : -mag);
            }
            const int ire = detail::quantize_even_grid(x, -L + 2.0, L - 1);
            const int lim = detail::detect_mepam(y.imag(), L);
            if (lim == L - 1) return lay.m2_message(ire);
            return lay.m1_message(ire, lim);
        }
        case Scheme::PskCi: {
            // Nearest sector center in angle; exact ties pick the lower index.
            const double a = std::arg(y);
            const double two_pi = 2.0 * std::numbers::pi;
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int m = 0; m < M; ++m) {
                double diff = std::fmod(std::abs(a - two_pi * m / M), two_pi);
                diff = std::min(diff, two_pi - diff);
                if (diff < best_d - 1e-15) {
                    best_d = diff;
                    best = m;
                }
            }
            return best;
        }
    }
    return 0;
}

} // namespace ciforge::rbc
