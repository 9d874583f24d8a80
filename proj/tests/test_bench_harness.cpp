#include "json.hpp"

#include "doctest.h"
#include "snlforge/bench_harness.hpp"

using namespace snlforge;
using perf::DesignPoint;
using perf::Strategy;

namespace {

const std::vector<bench::SweepRecord>& full_sweep() {
    static const auto records = [] {
        bench::SweepSpec spec;
        spec.simulate = true;
        return bench::run_sweep(spec);
    }();
    return records;
}

}  // namespace

TEST_SUITE("bench_harness") {

TEST_CASE("default sweep has 12 groups of 8") {
    const auto& r = full_sweep();
    REQUIRE(r.size() == 96);
    for (std::size_t g = 0; g < 12; ++g) {
        const auto& head = r[g * 8];
        CHECK(head.dp.framework == perf::Framework::snl);
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(r[g * 8 + i].model == head.model);
            CHECK(r[g * 8 + i].dp.precision == head.dp.precision);
            labels.push_back(bench::bar_label(r[g * 8 + i].dp));
        }
        CHECK(labels == std::vector<std::string>{"SNL", "L-RF1", "L-RF2", "L-RF4", "L-RF8", "R-RF2", "R-RF4", "R-RF8"});
    }
    CHECK(r[0].model == "jet");
    CHECK(r[0].dp.precision == fx::FixedFormat(32, 16));
    CHECK(r.back().model == "vww");
    CHECK(r.back().dp.precision == fx::FixedFormat(8, 3));
}

TEST_CASE("spec points") {
    bench::SweepSpec s;
    s.models = {"jet"};
    s.precisions = {fx::FixedFormat(16, 6)};
    s.frameworks = {perf::Framework::snl};
    CHECK(s.points().size() == 1);
    CHECK(bench::run_sweep(s).size() == 1);
    s.frameworks = {perf::Framework::baked};
    s.strategies = {Strategy::resource};
    s.reuse_factors = {8, 1, 2, 2};
    const auto pts = s.points();
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].second.reuse_factor == 2);
    CHECK(pts[1].second.reuse_factor == 8);
    s.models = {"nope"};
    CHECK_THROWS(bench::run_sweep(s));
}

TEST_CASE("infeasible records carry a reason") {
    std::size_t infeasible = 0;
    for (const auto& r : full_sweep()) {
        if (r.feasible()) continue;
        ++infeasible;
        CHECK((!r.fit.exceeded.empty() || !r.annotation.empty()));
    }
    CHECK(infeasible > 0);
}

TEST_CASE("anomaly baked 32:16 at RF 1 and 2 is infeasible") {
    for (const auto& r : full_sweep())
        if (r.model == "anomaly" && r.dp.framework == perf::Framework::baked &&
            r.dp.precision == fx::FixedFormat(32, 16) && r.dp.strategy == Strategy::latency && r.dp.reuse_factor <= 2)
            CHECK_FALSE(r.feasible());
}

TEST_CASE("vww 8:3 snl carries the known divergence") {
    for (const auto& r : full_sweep()) {
        const bool target = r.model == "vww" && r.dp.precision == fx::FixedFormat(8, 3) &&
                            r.dp.framework == perf::Framework::snl;
        CHECK(target == !r.annotation.empty());
    }
}

TEST_CASE("simulated snl latency matches the estimate") {
    for (const auto& r : full_sweep()) {
        if (r.dp.framework != perf::Framework::snl) {
            CHECK_FALSE(r.sim_cycles.has_value());
            continue;
        }
        REQUIRE(r.sim_cycles.has_value());
        CHECK(*r.sim_cycles == r.latency.cycles);
    }
}

TEST_CASE("divergence files") {
    const auto d = bench::parse_divergences("model,precision,framework,strategy,rf,annotation\n"
                                            "# comment\n"
                                            "kws,*,baked,resource,4,\"odd, quoted\"\n");
    REQUIRE(d.size() == 1);
    CHECK(d[0].annotation == "odd, quoted");
    CHECK(d[0].matches("kws", DesignPoint::baked(fx::FixedFormat(8, 3), Strategy::resource, 4)));
    CHECK_FALSE(d[0].matches("kws", DesignPoint::baked(fx::FixedFormat(8, 3), Strategy::resource, 2)));
    CHECK_FALSE(d[0].matches("kws", DesignPoint::snl(fx::FixedFormat(8, 3))));
    CHECK_THROWS(bench::parse_divergences("h\nonly,three,fields\n"));

    const auto shipped = bench::load_divergences(SNLFORGE_SOURCE_DIR "/config/known_divergences.csv");
    const auto def = bench::default_divergences();
    REQUIRE(shipped.size() == def.size());
    CHECK(shipped[0].annotation == def[0].annotation);
}

TEST_CASE("csv round trip") {
    const auto csv = bench::render_csv(full_sweep());
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 97);
    CHECK(csv.rfind("model,framework,precision,strategy,rf,clock_ns,", 0) == 0);
    const auto back = bench::parse_csv(csv);
    CHECK(back.size() == 96);
    CHECK(bench::render_csv(back) == csv);
    CHECK(bench::render_markdown(back) == bench::render_markdown(full_sweep()));
    CHECK(bench::render_plotdata(back) == bench::render_plotdata(full_sweep()));
    CHECK_THROWS(bench::parse_csv("bad,header\n"));
}

TEST_CASE("plotdata gaps and units") {
    const auto doc = nlohmann::json::parse(bench::render_plotdata(full_sweep()));
    CHECK(doc["format"] == "snl-plotdata-1");
    const auto& groups = doc["groups"];
    REQUIRE(groups.size() == 12);
    std::size_t nulls = 0, infeasible = 0;
    for (const auto& r : full_sweep()) infeasible += !r.feasible();
    for (std::size_t g = 0; g < 12; ++g) {
        const auto& bars = groups[g]["bars"];
        REQUIRE(bars.size() == 8);
        for (std::size_t i = 0; i < 8; ++i) {
            const auto& rec = full_sweep()[g * 8 + i];
            const auto& b = bars[i];
            CHECK(b["label"] == bench::bar_label(rec.dp));
            if (rec.feasible()) {
                CHECK(b["latency_us"].get<double>() == doctest::Approx(rec.latency.cycles * 0.01));
                CHECK(b["dsp"].get<std::int64_t>() == rec.resources.dsp);
            } else {
                CHECK(b["latency_us"].is_null());
                CHECK(b["dsp"].is_null());
                ++nulls;
            }
        }
    }
    CHECK(nulls == infeasible);
}

TEST_CASE("markdown has one table per group") {
    const auto md = bench::render_markdown(full_sweep());
    std::size_t headings = 0, pos = 0;
    while ((pos = md.find("\n## ", pos)) != std::string::npos) {
        ++headings;
        ++pos;
    }
    if (md.rfind("## ", 0) == 0) ++headings;
    CHECK(headings == 12);
}

TEST_CASE("sweep is deterministic across thread counts") {
    bench::SweepSpec a, b;
    a.threads = 1;
    b.threads = 3;
    CHECK(bench::render_csv(bench::run_sweep(a)) == bench::render_csv(bench::run_sweep(b)));
}

}
