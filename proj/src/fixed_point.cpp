#include "snlforge/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace snlforge::fx {

namespace {

using u128 = unsigned __int128;
using i128 = __int128;

// Two's complement 192-bit integer, value = hi * 2^128 + lo.
struct Wide {
    u128 lo = 0;
    std::int64_t hi = 0;

    static Wide from(i128 v) { return Wide{static_cast<u128>(v), v < 0 ? -1 : 0}; }

    Wide& operator+=(const Wide& o) {
        u128 sum = lo + o.lo;
        hi += o.hi + (sum < lo ? 1 : 0);
        lo = sum;
        return *this;
    }

    bool negative() const { return hi < 0; }

    // Arithmetic shift right (floor division by 2^d).
    Wide shr(int d) const {
        if (d <= 0) return *this;
        Wide r;
        if (d < 128) {
            r.lo = (lo >> d) | (static_cast<u128>(static_cast<i128>(hi)) << (128 - d));
            r.hi = d < 64 ? (hi >> d) : (hi >> 63);
        } else {
            int s = std::min(d - 128, 63);
            r.lo = static_cast<u128>(static_cast<i128>(hi >> s));
            r.hi = hi >> 63;
        }
        return r;
    }

    int compare(std::int64_t v) const {
        Wide o = from(v);
        if (hi != o.hi) return hi < o.hi ? -1 : 1;
        if (lo != o.lo) return lo < o.lo ? -1 : 1;
        return 0;
    }
};

std::int64_t sign_extend(std::uint64_t bits, int width) {
    if (width >= 64) return static_cast<std::int64_t>(bits);
    std::uint64_t mask = (std::uint64_t{1} << width) - 1;
    bits &= mask;
    std::uint64_t sign = std::uint64_t{1} << (width - 1);
    return static_cast<std::int64_t>((bits ^ sign) - sign);
}

std::int64_t resize_wide(Wide v, int src_frac, const FixedFormat& dst) {
    const int dst_frac = dst.frac_bits();
    const std::int64_t hi = dst.max_raw();
    const std::int64_t lo = dst.min_raw();

    if (dst_frac < src_frac) {
        const int d = src_frac - dst_frac;
        if (dst.rounding == Rounding::half_up) {
            if (d - 1 < 128)
                v += Wide{u128{1} << (d - 1), 0};
            else
                v += Wide{0, std::int64_t{1} << (d - 1 - 128)};
        }
        v = v.shr(d);
    } else if (dst_frac > src_frac) {
        const int d = dst_frac - src_frac;
        if (dst.overflow == Overflow::saturate) {
            // Compare against the bounds scaled down by 2^d so the shift stays exact.
            const std::int64_t hi_scaled = d >= 63 ? 0 : (hi >> d);
            // ceil(-2^(X-1) / 2^d)
            const std::int64_t lo_scaled =
                d > dst.total_bits - 1 ? 0 : -(std::int64_t{1} << (dst.total_bits - 1 - d));
            if (v.compare(hi_scaled) > 0) return hi;
            if (v.compare(lo_scaled) < 0) return lo;
            return static_cast<std::int64_t>(static_cast<std::uint64_t>(v.lo) << d);
        }
        std::uint64_t bits = d >= 64 ? 0 : static_cast<std::uint64_t>(v.lo) << d;
        return sign_extend(bits, dst.total_bits);
    }

    if (dst.overflow == Overflow::saturate) {
        if (v.compare(hi) > 0) return hi;
        if (v.compare(lo) < 0) return lo;
        return static_cast<std::int64_t>(static_cast<std::uint64_t>(v.lo));
    }
    return sign_extend(static_cast<std::uint64_t>(v.lo), dst.total_bits);
}

}  // namespace

FixedFormat::FixedFormat(int total, int integer, Rounding r, Overflow o)
    : total_bits(total), int_bits(integer), rounding(r), overflow(o) {
    if (total < 2 || total > 64)
        throw std::invalid_argument("fixed-point total bits must be in [2, 64], got " +
                                    std::to_string(total));
    if (integer < 1 || integer > total)
        throw std::invalid_argument("fixed-point integer bits must be in [1, " +
                                    std::to_string(total) + "], got " + std::to_string(integer));
}

std::int64_t FixedFormat::max_raw() const {
    return total_bits == 64 ? std::numeric_limits<std::int64_t>::max()
                            : (std::int64_t{1} << (total_bits - 1)) - 1;
}

std::int64_t FixedFormat::min_raw() const {
    return total_bits == 64 ? std::numeric_limits<std::int64_t>::min()
                            : -(std::int64_t{1} << (total_bits - 1));
}

double FixedFormat::step() const { return std::ldexp(1.0, -frac_bits()); }
double FixedFormat::max_value() const { return std::ldexp(static_cast<double>(max_raw()), -frac_bits()); }
double FixedFormat::min_value() const { return std::ldexp(static_cast<double>(min_raw()), -frac_bits()); }

std::string FixedFormat::to_string() const {
    return std::to_string(total_bits) + ":" + std::to_string(int_bits);
}

FixedFormat parse_precision(std::string_view text, Rounding rounding, Overflow overflow) {
    auto read_int = [&](std::size_t& pos, const char* what) {
        std::size_t start = pos;
        long long v = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            v = v * 10 + (text[pos] - '0');
            if (v > 1000)
                throw PrecisionError(std::string(what) + " out of range in \"" +
                                         std::string(text) + "\"",
                                     start);
            ++pos;
        }
        if (pos == start)
            throw PrecisionError("expected " + std::string(what) + " at position " +
                                     std::to_string(pos) + " in \"" + std::string(text) + "\"",
                                 pos);
        return static_cast<int>(v);
    };

    std::size_t pos = 0;
    int total = read_int(pos, "total bits");
    if (pos >= text.size() || text[pos] != ':')
        throw PrecisionError("expected ':' at position " + std::to_string(pos) + " in \"" +
                                 std::string(text) + "\"",
                             pos);
    ++pos;
    std::size_t int_pos = pos;
    int integer = read_int(pos, "integer bits");
    if (pos != text.size())
        throw PrecisionError("trailing characters at position " + std::to_string(pos) +
                                 " in \"" + std::string(text) + "\"",
                             pos);
    if (total < 2 || total > 64)
        throw PrecisionError("total bits must be in [2, 64] in \"" + std::string(text) + "\"", 0);
    if (integer < 1 || integer > total)
        throw PrecisionError("integer bits must be in [1, " + std::to_string(total) + "] in \"" +
                                 std::string(text) + "\"",
                             int_pos);
    return FixedFormat(total, integer, rounding, overflow);
}

double FixedValue::to_double() const {
    return std::ldexp(static_cast<double>(raw), -format.frac_bits());
}

std::int64_t requantize(__int128 value, int src_frac, const FixedFormat& dst) {
    return resize_wide(Wide::from(value), src_frac, dst);
}

FixedValue quantize(double x, const FixedFormat& fmt) {
    if (std::isnan(x)) throw std::invalid_argument("cannot quantize NaN");
    const double scaled = std::ldexp(x, fmt.frac_bits());
    constexpr double huge = 0x1p120;
    if (!(std::fabs(scaled) < huge)) {
        if (fmt.overflow == Overflow::saturate)
            return {scaled < 0 ? fmt.min_raw() : fmt.max_raw(), fmt};
        // Any double this large is a multiple of 2^67, so its low 64 bits are zero.
        return {0, fmt};
    }
    double whole = std::floor(scaled);
    if (fmt.rounding == Rounding::half_up && scaled - whole >= 0.5) whole += 1.0;
    return {resize_wide(Wide::from(static_cast<i128>(whole)), fmt.frac_bits(), fmt), fmt};
}

FixedValue resize(const FixedValue& v, const FixedFormat& fmt) {
    return {resize_wide(Wide::from(v.raw), v.format.frac_bits(), fmt), fmt};
}

namespace {
void require_same_format(const FixedValue& a, const FixedValue& b) {
    if (a.format.total_bits != b.format.total_bits || a.format.int_bits != b.format.int_bits)
        throw std::invalid_argument("operands have different formats " + a.format.to_string() +
                                    " and " + b.format.to_string() + "; resize first");
}
}  // namespace

FixedValue fx_add(const FixedValue& a, const FixedValue& b) { return fx_add(a, b, a.format); }

FixedValue fx_add(const FixedValue& a, const FixedValue& b, const FixedFormat& target) {
    require_same_format(a, b);
    // X+1 bits always hold the exact sum.
    i128 sum = static_cast<i128>(a.raw) + static_cast<i128>(b.raw);
    return {resize_wide(Wide::from(sum), a.format.frac_bits(), target), target};
}

FixedValue fx_mul(const FixedValue& a, const FixedValue& b) { return fx_mul(a, b, a.format); }

FixedValue fx_mul(const FixedValue& a, const FixedValue& b, const FixedFormat& target) {
    require_same_format(a, b);
    i128 prod = static_cast<i128>(a.raw) * static_cast<i128>(b.raw);
    return {resize_wide(Wide::from(prod), 2 * a.format.frac_bits(), target), target};
}

int ceil_log2(std::uint64_t n) {
    int bits = 0;
    while (bits < 64 && (std::uint64_t{1} << bits) < n) ++bits;
    return bits;
}

FixedFormat accumulator_format(const FixedFormat& data, std::size_t fan_in) {
    int growth = ceil_log2(std::max<std::size_t>(fan_in, 1)) + 1;
    int total = std::min(64, data.total_bits + growth);
    int grown = total - data.total_bits;
    return FixedFormat(total, data.int_bits + grown, data.rounding, data.overflow);
}

void Accumulator::add(__int128 term) {
    Wide w{lo_, hi_};
    w += Wide::from(term);
    lo_ = w.lo;
    hi_ = w.hi;
}

std::int64_t Accumulator::result(int src_frac, const FixedFormat& dst) const {
    return resize_wide(Wide{lo_, hi_}, src_frac, dst);
}

FixedValue mac_accumulate(std::span<const std::pair<FixedValue, FixedValue>> pairs,
                          const FixedFormat& acc_fmt) {
    if (pairs.empty()) return {0, acc_fmt};
    const FixedFormat& data = pairs.front().first.format;
    Accumulator acc;
    for (const auto& [a, b] : pairs) {
        require_same_format(a, b);
        require_same_format(a, FixedValue{0, data});
        acc.add_product(a.raw, b.raw);
    }
    return {acc.result(2 * data.frac_bits(), acc_fmt), acc_fmt};
}

}  // namespace snlforge::fx
