#pragma once

// Library-vs-GMP comparison sweeps shared by the unit tests and the
// acceptance binary.

#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "snlforge/random.hpp"

namespace sweep {

using snlforge::fx::FixedFormat;
using snlforge::fx::FixedValue;
using snlforge::fx::Overflow;
using snlforge::fx::Rounding;

struct Tally {
    std::size_t cases = 0;
    std::size_t mismatches = 0;
    std::string first_failure;

    void check(bool ok, const std::function<std::string()>& describe) {
        ++cases;
        if (!ok && mismatches++ == 0) first_failure = describe();
    }
    void merge(const Tally& o) {
        cases += o.cases;
        if (o.mismatches && !mismatches) first_failure = o.first_failure;
        mismatches += o.mismatches;
    }
};

inline std::vector<std::pair<Rounding, Overflow>> all_modes() {
    return {{Rounding::truncate, Overflow::saturate},
            {Rounding::truncate, Overflow::wrap},
            {Rounding::half_up, Overflow::saturate},
            {Rounding::half_up, Overflow::wrap}};
}

inline std::string describe(const char* op, const FixedFormat& f, std::int64_t a, std::int64_t b, std::int64_t got,
                            std::int64_t want) {
    return std::string(op) + " " + f.to_string() + " a=" + std::to_string(a) + " b=" + std::to_string(b) +
           " got=" + std::to_string(got) + " want=" + std::to_string(want);
}

// Every operand pair of every format with X <= max_bits, all four modes.
inline Tally exhaustive_add_mul(int max_bits) {
    Tally t;
    for (int X = 2; X <= max_bits; ++X)
        for (int Y = 1; Y <= X; ++Y)
            for (auto [r, o] : all_modes()) {
                const FixedFormat f(X, Y, r, o);
                for (std::int64_t a = f.min_raw(); a <= f.max_raw(); ++a)
                    for (std::int64_t b = f.min_raw(); b <= f.max_raw(); ++b) {
                        const FixedValue va{a, f}, vb{b, f};
                        const auto s = snlforge::fx::fx_add(va, vb).raw;
                        const auto ws = oracle::add(a, b, f, f);
                        t.check(s == ws, [&] { return describe("add", f, a, b, s, ws); });
                        const auto p = snlforge::fx::fx_mul(va, vb).raw;
                        const auto wp = oracle::mul(a, b, f, f);
                        t.check(p == wp, [&] { return describe("mul", f, a, b, p, wp); });
                    }
            }
    return t;
}

// Every value of every format with X <= max_bits into every such format.
inline Tally exhaustive_resize(int max_bits) {
    std::vector<std::pair<int, int>> formats;
    for (int X = 2; X <= max_bits; ++X)
        for (int Y = 1; Y <= X; ++Y) formats.emplace_back(X, Y);
    Tally t;
    for (auto [sx, sy] : formats) {
        const FixedFormat src(sx, sy);
        for (auto [dx, dy] : formats)
            for (auto [r, o] : all_modes()) {
                const FixedFormat dst(dx, dy, r, o);
                for (std::int64_t a = src.min_raw(); a <= src.max_raw(); ++a) {
                    const auto got = snlforge::fx::resize({a, src}, dst).raw;
                    const auto want = oracle::resize(a, src.frac_bits(), dst);
                    t.check(got == want, [&] { return describe("resize", dst, a, sx * 100 + sy, got, want); });
                }
            }
    }
    return t;
}

// Uniform raw operand over the full range of `f`.
inline std::int64_t random_raw(snlforge::SeededRng& rng, const FixedFormat& f) {
    const auto span = static_cast<std::uint64_t>(f.max_raw()) - static_cast<std::uint64_t>(f.min_raw()) + 1;
    const std::uint64_t off = span == 0 ? rng.next() : rng.below(span);
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(f.min_raw()) + off);
}

// n cases per op (add, mul, resize) and per mode at format X:Y. Targets of
// add/mul alternate between the operand format and a random one.
inline Tally random_ops(int X, int Y, std::size_t n, std::uint64_t seed) {
    Tally t;
    snlforge::SeededRng rng(seed);
    for (auto [r, o] : all_modes()) {
        const FixedFormat f(X, Y, r, o);
        for (std::size_t i = 0; i < n; ++i) {
            const int tx = 2 + static_cast<int>(rng.below(63));
            const int ty = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(tx)));
            const FixedFormat other(tx, ty, r, o);
            const FixedFormat& target = i % 2 ? other : f;
            const auto a = random_raw(rng, f), b = random_raw(rng, f);
            const FixedValue va{a, f}, vb{b, f};
            const auto s = snlforge::fx::fx_add(va, vb, target).raw;
            const auto ws = oracle::add(a, b, f, target);
            t.check(s == ws, [&] { return describe("add", target, a, b, s, ws); });
            const auto p = snlforge::fx::fx_mul(va, vb, target).raw;
            const auto wp = oracle::mul(a, b, f, target);
            t.check(p == wp, [&] { return describe("mul", target, a, b, p, wp); });
            const auto z = snlforge::fx::resize(va, other).raw;
            const auto wz = oracle::resize(a, f.frac_bits(), other);
            t.check(z == wz, [&] { return describe("resize", other, a, 0, z, wz); });
        }
    }
    return t;
}

}  // namespace sweep
