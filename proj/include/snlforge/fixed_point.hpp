#pragma once

// Signed fixed-point <X,Y> arithmetic: X total bits, Y bits above the binary
// point (sign bit included), F = X - Y fractional bits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace snlforge::fx {

enum class Rounding { truncate, half_up };
enum class Overflow { saturate, wrap };

class PrecisionError : public std::invalid_argument {
public:
    PrecisionError(const std::string& what, std::size_t position)
        : std::invalid_argument(what), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

struct FixedFormat {
    int total_bits = 16;
    int int_bits = 6;
    Rounding rounding = Rounding::truncate;
    Overflow overflow = Overflow::saturate;

    FixedFormat() = default;
    // Throws std::invalid_argument unless 2 <= X <= 64 and 1 <= Y <= X.
    FixedFormat(int total, int integer, Rounding r = Rounding::truncate,
                Overflow o = Overflow::saturate);

    int frac_bits() const { return total_bits - int_bits; }
    std::int64_t max_raw() const;
    std::int64_t min_raw() const;
    double step() const;
    double max_value() const;
    double min_value() const;

    // "X:Y"
    std::string to_string() const;

    friend bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

// Parses "X:Y". Errors carry the byte offset of the offending character.
FixedFormat parse_precision(std::string_view text,
                            Rounding rounding = Rounding::truncate,
                            Overflow overflow = Overflow::saturate);

struct FixedValue {
    std::int64_t raw = 0;
    FixedFormat format;

    double to_double() const;
    friend bool operator==(const FixedValue&, const FixedValue&) = default;
};

FixedValue quantize(double x, const FixedFormat& fmt);
inline double dequantize(const FixedValue& v) { return v.to_double(); }

FixedValue resize(const FixedValue& v, const FixedFormat& fmt);

// Operands must share a format. The two-argument forms return in that format.
FixedValue fx_add(const FixedValue& a, const FixedValue& b);
FixedValue fx_add(const FixedValue& a, const FixedValue& b, const FixedFormat& target);
FixedValue fx_mul(const FixedValue& a, const FixedValue& b);
FixedValue fx_mul(const FixedValue& a, const FixedValue& b, const FixedFormat& target);

// Accumulator width rule: X grows by ceil(log2(fan_in)) + 1 (capped at 64),
// Y grows by the same number of bits so F is unchanged.
FixedFormat accumulator_format(const FixedFormat& data, std::size_t fan_in);

FixedValue mac_accumulate(std::span<const std::pair<FixedValue, FixedValue>> pairs,
                          const FixedFormat& acc_fmt);

int ceil_log2(std::uint64_t n);

// Re-expresses an integer carrying `src_frac` fractional bits in `dst`.
std::int64_t requantize(__int128 value, int src_frac, const FixedFormat& dst);

// Exact running sum of raw products, index order. The 192-bit register never
// overflows for any sequence shorter than 2^64 terms of 64-bit operands.
class Accumulator {
public:
    void add(__int128 term);
    void add_product(std::int64_t a, std::int64_t b) {
        add(static_cast<__int128>(a) * static_cast<__int128>(b));
    }
    std::int64_t result(int src_frac, const FixedFormat& dst) const;
    void clear() { lo_ = 0; hi_ = 0; }

private:
    unsigned __int128 lo_ = 0;
    std::int64_t hi_ = 0;
};

}  // namespace snlforge::fx
