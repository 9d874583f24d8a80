#include <map>

#include "doctest.h"
#include "snlforge/perf_model.hpp"

using namespace snlforge;
using perf::Calibration;
using perf::DesignPoint;
using perf::Strategy;

namespace {

// Schedules every product of a fully unrolled layer over `rf` cycles the
// way a reuse-factor loop does and counts the busiest cycle.
std::int64_t scheduled_multipliers(std::int64_t products, int rf) {
    std::map<std::int64_t, std::int64_t> per_cycle;
    for (std::int64_t p = 0; p < products; ++p) ++per_cycle[p % rf];
    std::int64_t m = 0;
    for (auto& [c, n] : per_cycle) m = std::max(m, n);
    return m;
}

ir::ModelGraph single_dense(std::int64_t in, std::int64_t out) {
    std::vector<ir::LayerSpec> layers{{0, "dense_0", ir::LayerKind::Dense, ir::DenseParams{out}}};
    ir::WeightSet ws{{0, {std::vector<float>(static_cast<std::size_t>(in * out), 0.1f),
                          std::vector<float>(static_cast<std::size_t>(out), 0.f)}}};
    return ir::ModelGraph("d", ir::TensorShape::flat(in), layers, ws);
}

const fx::FixedFormat p8(8, 3), p16(16, 6), p32(32, 16);

}  // namespace

TEST_SUITE("perf_model") {

TEST_CASE("design point validation") {
    CHECK_NOTHROW(DesignPoint::snl(p16).validate());
    CHECK_NOTHROW(DesignPoint::baked(p16, Strategy::latency, 1).validate());
    CHECK_THROWS_AS(DesignPoint::baked(p16, Strategy::resource, 1).validate(), perf::DesignPointError);
    CHECK_THROWS_AS(DesignPoint::baked(p16, Strategy::latency, 0).validate(), perf::DesignPointError);
    auto bad = DesignPoint::snl(p16);
    bad.strategy = Strategy::latency;
    CHECK_THROWS_AS(bad.validate(), perf::DesignPointError);
    CHECK(perf::parse_framework("snl") == perf::Framework::snl);
    CHECK(perf::parse_strategy("resource") == Strategy::resource);
    CHECK_THROWS(perf::parse_strategy("fast"));
}

TEST_CASE("dsp per multiplier") {
    const Calibration c;
    CHECK(perf::dsp_per_mult(8, c) == 0);
    CHECK(perf::dsp_per_mult(16, c) == 1);
    CHECK(perf::dsp_per_mult(18, c) == 1);
    CHECK(perf::dsp_per_mult(19, c) == 2);
    CHECK(perf::dsp_per_mult(32, c) == 4);
}

TEST_CASE("jet first layer DSP under a reuse factor") {
    const auto jet = ir::builtin("jet");
    const auto est = perf::estimate_resources(jet, DesignPoint::baked(p16, Strategy::latency, 2));
    CHECK(est.layers[0].dsp == 512);
    CHECK(est.layers[0].dsp == scheduled_multipliers(16 * 64, 2) * perf::dsp_per_mult(16, {}));
    CHECK(perf::estimate_resources(jet, DesignPoint::baked(p8, Strategy::latency, 2)).layers[0].dsp == 0);

    const std::int64_t want[] = {1024, 512, 256, 128};
    int i = 0;
    for (int rf : {1, 2, 4, 8}) {
        const auto e = perf::estimate_resources(jet, DesignPoint::baked(p16, Strategy::latency, rf));
        CHECK(e.layers[0].dsp == want[i++]);
        CHECK(e.layers[0].multipliers == scheduled_multipliers(1024, rf));
    }
}

TEST_CASE("multiplier counts match the loop schedule on every layer") {
    for (const auto& g : ir::builtin_benchmarks())
        for (int rf : {1, 2, 3, 4, 8}) {
            const auto dp = DesignPoint::baked(p16, Strategy::latency, rf);
            const auto stages = perf::lower_for(g, dp);
            const auto est = perf::estimate_resources(g, dp);
            REQUIRE(stages.size() == est.layers.size());
            for (std::size_t k = 0; k < stages.size(); ++k)
                CHECK(est.layers[k].multipliers == scheduled_multipliers(stages[k].parallel_products(), rf));
        }
}

TEST_CASE("totals are layer sums plus infrastructure") {
    for (const auto& g : ir::builtin_benchmarks())
        for (const auto& dp : {DesignPoint::snl(p16), DesignPoint::baked(p32, Strategy::resource, 4)}) {
            const auto e = perf::estimate_resources(g, dp);
            std::int64_t lut = e.infrastructure.lut, ff = e.infrastructure.ff, dsp = e.infrastructure.dsp,
                         bram = e.infrastructure.bram;
            for (const auto& l : e.layers) {
                CHECK(l.lut >= 0);
                CHECK(l.ff >= 0);
                lut += l.lut;
                ff += l.ff;
                dsp += l.dsp;
                bram += l.bram;
            }
            CHECK(e.lut == lut);
            CHECK(e.ff == ff);
            CHECK(e.dsp == dsp);
            CHECK(e.bram == bram);
        }
}

TEST_CASE("resource trends") {
    for (const auto& g : ir::builtin_benchmarks()) {
        for (auto s : {Strategy::latency, Strategy::resource})
            for (const auto& p : {p8, p16, p32}) {
                std::int64_t prev_dsp = INT64_MAX, prev_lat = 0;
                for (int rf : {1, 2, 4, 8}) {
                    if (s == Strategy::resource && rf == 1) continue;
                    const auto dp = DesignPoint::baked(p, s, rf);
                    const auto dsp = perf::estimate_resources(g, dp).dsp;
                    CHECK(dsp <= prev_dsp);
                    prev_dsp = dsp;
                    if (s == Strategy::resource) {
                        const auto lat = perf::estimate_latency(g, dp).cycles;
                        CHECK(lat > prev_lat);
                        prev_lat = lat;
                    }
                }
            }
        for (int rf : {1, 2, 4, 8}) {
            const auto d8 = perf::estimate_resources(g, DesignPoint::baked(p8, Strategy::latency, rf)).dsp;
            const auto d16 = perf::estimate_resources(g, DesignPoint::baked(p16, Strategy::latency, rf)).dsp;
            const auto d32 = perf::estimate_resources(g, DesignPoint::baked(p32, Strategy::latency, rf)).dsp;
            CHECK(d8 <= d16);
            CHECK(d16 <= d32);
        }
        for (const auto& p : {p8, p16, p32})
            CHECK(perf::estimate_resources(g, DesignPoint::snl(p)).bram >=
                  perf::estimate_resources(g, DesignPoint::baked(p, Strategy::latency, 1)).bram);
    }
}

TEST_CASE("bram 36k toggle halves with ceiling") {
    Calibration c36;
    c36.bram_36k = true;
    const auto g = ir::builtin("anomaly");
    const auto a = perf::estimate_resources(g, DesignPoint::snl(p16));
    const auto b = perf::estimate_resources(g, DesignPoint::snl(p16), c36);
    CHECK(b.bram_block_kb == 36);
    for (std::size_t i = 0; i < a.layers.size(); ++i) CHECK(b.layers[i].bram == (a.layers[i].bram + 1) / 2);
}

TEST_CASE("single dense latency") {
    const auto g = single_dense(16, 64);
    const auto lat = perf::estimate_latency(g, DesignPoint::snl(p16));
    // 16 input beats, fill 5 + log2(16), one handoff cycle, 63 more outputs.
    CHECK(lat.cycles == 16 + (5 + 4) + 1 + 63);
    CHECK(lat.cycles == 89);
    CHECK(lat.microseconds_text() == "0.89");
    CHECK(lat.picoseconds() == 890000);
    CHECK(perf::estimate_latency(g, DesignPoint::baked(p16, Strategy::latency, 4)).cycles == 89);
    const auto r2 = perf::estimate_latency(g, DesignPoint::baked(p16, Strategy::resource, 2)).cycles;
    const auto r4 = perf::estimate_latency(g, DesignPoint::baked(p16, Strategy::resource, 4)).cycles;
    CHECK(r2 == 16 + 9 + 1 + 63 * 2);
    CHECK(r4 > r2);
}

TEST_CASE("empty graph has zero latency") {
    const ir::ModelGraph empty("e", ir::TensorShape::flat(4), {}, {});
    CHECK(perf::estimate_latency(empty, DesignPoint::snl(p16)).cycles == 0);
}

TEST_CASE("microseconds are exact") {
    const auto g = ir::builtin("kws");
    for (std::int64_t clk : {10000, 3333, 4000}) {
        const auto lat = perf::estimate_latency(g, DesignPoint::snl(p16, clk));
        CHECK(lat.picoseconds() == lat.cycles * clk);
        const std::string t = lat.microseconds_text();
        const auto dot = t.find('.');
        std::int64_t ps = std::stoll(t.substr(0, dot)) * 1000000;
        if (dot != std::string::npos) {
            std::string frac = t.substr(dot + 1);
            frac.resize(6, '0');
            ps += std::stoll(frac);
        }
        CHECK(ps == lat.cycles * clk);
    }
}

TEST_CASE("fit checks") {
    const auto zcu = perf::DeviceProfile::zcu102();
    perf::ResourceEstimate e;
    CHECK(perf::check_fit(e, zcu).fits());
    e.dsp = 3000;
    const auto v = perf::check_fit(e, zcu);
    REQUIRE(v.exceeded.size() == 1);
    CHECK(v.exceeded[0].resource == "DSP");
    CHECK(v.exceeded[0].required == 3000);
    CHECK(v.exceeded[0].available == 2520);
    CHECK(v.summary() == "DSP");

    const auto anomaly = ir::builtin("anomaly");
    for (int rf : {1, 2}) {
        const auto f = perf::check_fit(perf::estimate_resources(anomaly, DesignPoint::baked(p32, Strategy::latency, rf)), zcu);
        CHECK_FALSE(f.fits());
        bool dsp = false;
        for (const auto& x : f.exceeded) dsp |= x.resource == "DSP";
        CHECK(dsp);
    }
}

TEST_CASE("profiles and calibration files") {
    const auto p = perf::DeviceProfile::parse("t", "# c\nlut = 10\nff=20\ndsp = 3\nbram18 = 4\n");
    CHECK(p.lut == 10);
    CHECK(p.bram18 == 4);
    CHECK_THROWS(perf::DeviceProfile::parse("t", "lut = 10\n"));
    CHECK_THROWS(perf::DeviceProfile::parse("t", "lut = 0\nff=1\ndsp=1\nbram18=1\n"));
    const auto c = Calibration::parse("mult_latency = 7\nlut_per_bit = 1.5\nbram_36k = 1\n");
    CHECK(c.mult_latency == 7);
    CHECK(c.lut_per_bit == 1.5);
    CHECK(c.bram_36k);
    CHECK_THROWS(Calibration::parse("nonsense = 1\n"));
    CHECK(perf::DeviceProfile::resolve("zcu102").dsp == 2520);
}

TEST_CASE("shipped config files mirror compiled defaults") {
    const std::filesystem::path cfg = SNLFORGE_SOURCE_DIR "/config";
    const auto p = perf::DeviceProfile::load(cfg / "zcu102.profile");
    const auto z = perf::DeviceProfile::zcu102();
    CHECK(p.lut == z.lut);
    CHECK(p.ff == z.ff);
    CHECK(p.dsp == z.dsp);
    CHECK(p.bram18 == z.bram18);
    const auto c = Calibration::load(cfg / "default.calib");
    const auto g = ir::builtin("kws");
    for (const auto& dp : {DesignPoint::snl(p16), DesignPoint::baked(p8, Strategy::resource, 4)}) {
        const auto a = perf::estimate_resources(g, dp, c), b = perf::estimate_resources(g, dp);
        CHECK(a.lut == b.lut);
        CHECK(a.ff == b.ff);
        CHECK(a.bram == b.bram);
        CHECK(perf::estimate_latency(g, dp, c).cycles == perf::estimate_latency(g, dp).cycles);
    }
}

}
