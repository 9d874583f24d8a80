// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "chains.hpp"
#include "fx_sweep.hpp"
#include "snlforge/bench_harness.hpp"
#include "snlforge/codegen.hpp"
#include "snlforge/dataflow_sim.hpp"
#include "snlforge/qsim.hpp"
#include "snlforge/stream_server.hpp"

using namespace snlforge;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (!pass) detail << "; ";
            pass = false;
            detail << what;
        }
    }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s  %-34s %6.2fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.str().c_str());
    std::fflush(stdout);
}

const fx::FixedFormat formats[] = {fx::FixedFormat(32, 16), fx::FixedFormat(16, 6), fx::FixedFormat(8, 3)};

std::vector<std::int64_t> image_for(const ir::ModelGraph& graph, const fx::FixedFormat& f) {
    const auto g = ir::normalize_for_hardware(graph);
    codegen::CodegenConfig cc;
    cc.precision = f;
    return codegen::weight_image(g, codegen::emit_register_map(g, cc), f);
}

sim::Pipeline loaded(const ir::ModelGraph& g, const perf::DesignPoint& dp, std::int64_t depth) {
    sim::SimConfig c;
    c.fifo_depth = depth;
    auto p = sim::Pipeline::build(g, dp, c);
    p.load_image(image_for(g, dp.precision));
    return p;
}

std::vector<std::int64_t> seeded_input(const ir::ModelGraph& g, const fx::FixedFormat& f, std::uint64_t seed) {
    return qsim::quantize_input(seeded_vector(static_cast<std::size_t>(g.input_shape().elements()), seed), f);
}

// Dense/ReLU chain with 1-8 layers and widths up to 64.
ir::ModelGraph dense_chain(std::uint64_t seed) {
    SeededRng rng(seed ^ 0xabcdefULL);
    const int n = 1 + static_cast<int>(rng.below(8));
    const auto n_in = 1 + static_cast<std::int64_t>(rng.below(64));
    std::vector<ir::LayerSpec> layers;
    for (int i = 0; i < n; ++i) {
        const bool relu = i > 0 && layers.back().kind != ir::LayerKind::ReLU && rng.below(2);
        if (relu)
            layers.push_back({i, "r" + std::to_string(i), ir::LayerKind::ReLU, {}});
        else
            layers.push_back({i, "d" + std::to_string(i), ir::LayerKind::Dense,
                              ir::DenseParams{1 + static_cast<std::int64_t>(rng.below(64))}});
    }
    const auto shapes = ir::infer_shapes(ir::TensorShape::flat(n_in), layers);
    ir::WeightSet ws;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_weights()) continue;
        auto [nk, nb] = ir::weight_counts(layers[i], shapes[i].input);
        ir::LayerWeights w;
        for (std::int64_t k = 0; k < nk; ++k) w.kernel.push_back(static_cast<float>(rng.uniform(-0.5, 0.5)));
        for (std::int64_t k = 0; k < nb; ++k) w.bias.push_back(static_cast<float>(rng.uniform(-0.5, 0.5)));
        ws.emplace(layers[i].id, std::move(w));
    }
    return ir::ModelGraph("dense" + std::to_string(seed), ir::TensorShape::flat(n_in), layers, ws);
}

void fixed_point_oracle(Outcome& o) {
    sweep::Tally t;
    t.merge(sweep::exhaustive_add_mul(8));
    t.merge(sweep::exhaustive_resize(8));
    const auto ex = t.cases;
    // 25,000 per mode x 4 modes = 100,000 cases per op per format.
    for (auto [X, Y] : {std::pair{16, 6}, std::pair{32, 16}}) t.merge(sweep::random_ops(X, Y, 25000, 2024 + X));
    o.detail << ex << " exhaustive + " << (t.cases - ex) << " random checks, " << t.mismatches << " mismatches";
    o.require(t.mismatches == 0, "first: " + t.first_failure);
}

void numeric_chain(Outcome& o) {
    std::size_t checked = 0, bad = 0;
    for (const auto& g : ir::builtin_benchmarks())
        for (const auto& f : formats) {
            auto p = loaded(g, perf::DesignPoint::snl(f), 2);
            for (std::uint64_t s = 0; s < 20; ++s) {
                const auto x = seeded_input(g, f, 5000 + s);
                ++checked;
                if (p.simulate(x).output != qsim::run_quantized_raw(g, x, f).raw) {
                    if (!bad++) o.require(false, g.name() + " " + f.to_string() + " seed " + std::to_string(s));
                }
            }
        }
    o.detail << checked << " inferences over 12 combos, " << bad << " mismatches";
}

void error_monotonicity(Outcome& o) {
    for (const auto& g : ir::builtin_benchmarks()) {
        const auto n = ir::normalize_for_hardware(g);
        double err[3] = {0, 0, 0};  // 32:16, 16:6, 8:3
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto x = seeded_vector(static_cast<std::size_t>(g.input_shape().elements()), 700 + s);
            const auto ref = qsim::run_float(n, x);
            for (int i = 0; i < 3; ++i) {
                const auto q = qsim::run_quantized(g, x, formats[i]).values;
                for (std::size_t k = 0; k < q.size(); ++k) err[i] = std::max(err[i], std::fabs(q[k] - ref[k]));
            }
        }
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %.3g/%.3g/%.3g ", g.name().c_str(), err[2], err[1], err[0]);
        o.detail << buf;
        o.require(err[0] <= err[1] && err[1] <= err[2], g.name() + " not monotone");
    }
}

void latency_consistency(Outcome& o) {
    int archs = 0;
    const fx::FixedFormat f(16, 6);
    for (std::uint64_t seed = 0; seed < 30; ++seed)
        for (int kind = 0; kind < 2; ++kind) {
            const auto g = kind == 0 ? dense_chain(seed) : chains::random_chain(seed + 500);
            const auto dp = chains::random_point(seed + 31 * kind, f);
            const auto x = seeded_input(g, f, seed);
            const auto closed = perf::estimate_latency(g, dp).cycles;
            const auto unbounded = loaded(g, dp, 0).simulate(x).latency_cycles;
            const auto depth1 = loaded(g, dp, 1).simulate(x).latency_cycles;
            const auto oracle = chains::latency_oracle(g, dp);
            ++archs;
            const std::string tag = g.name() + " " + dp.label();
            o.require(unbounded == closed, tag + ": sim " + std::to_string(unbounded) + " != closed " + std::to_string(closed));
            o.require(closed == oracle, tag + ": closed form disagrees with layer-list oracle");
            o.require(depth1 >= closed, tag + ": depth-1 faster than closed form");
        }
    auto single = [] {
        std::vector<ir::LayerSpec> l{{0, "d", ir::LayerKind::Dense, ir::DenseParams{64}}};
        ir::WeightSet w{{0, {std::vector<float>(1024, 0.1f), std::vector<float>(64, 0.f)}}};
        return ir::ModelGraph("d", ir::TensorShape::flat(16), l, w);
    }();
    const auto dp = perf::DesignPoint::snl(f);
    const auto s = loaded(single, dp, 64).simulate(std::vector<std::int64_t>(16, 1)).latency_cycles;
    o.require(s == 89 && perf::estimate_latency(single, dp).cycles == 89, "Dense(16->64) is not 89 cycles");
    o.detail << archs << " random chains (unbounded == closed form, depth 1 >= closed form); Dense(16->64) = " << s
             << " cycles";
}

void trend_reproduction(Outcome& o) {
    const auto t0 = Clock::now();
    const auto recs = bench::run_sweep(bench::SweepSpec{});
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    o.require(recs.size() == 96, "sweep size " + std::to_string(recs.size()));
    o.require(secs < 60, "sweep took too long");
    auto key = [](const bench::SweepRecord& r) {
        return r.model + "|" + r.dp.precision.to_string() + "|" + perf::to_string(r.dp.framework) + "|" +
               (r.dp.strategy ? perf::to_string(*r.dp.strategy) : "");
    };
    int pairs = 0, prec_pairs = 0, bram_pairs = 0;
    for (const auto& a : recs)
        for (const auto& b : recs) {
            if (a.dp.framework != perf::Framework::baked || b.dp.framework != perf::Framework::baked) continue;
            if (key(a) == key(b) && a.dp.reuse_factor < b.dp.reuse_factor) {
                ++pairs;
                o.require(b.resources.dsp <= a.resources.dsp, key(a) + " DSP rises with RF");
                o.require(b.latency.cycles >= a.latency.cycles, key(a) + " latency falls with RF");
            }
            if (a.model == b.model && a.dp.strategy == b.dp.strategy && a.dp.reuse_factor == b.dp.reuse_factor &&
                a.dp.precision == fx::FixedFormat(8, 3) && b.dp.precision == fx::FixedFormat(16, 6)) {
                ++prec_pairs;
                o.require(a.resources.dsp <= b.resources.dsp, a.model + " DSP(8:3) > DSP(16:6)");
            }
        }
    for (const auto& s : recs) {
        if (s.dp.framework != perf::Framework::snl) continue;
        for (const auto& b : recs)
            if (b.model == s.model && b.dp.precision == s.dp.precision && b.dp.strategy == perf::Strategy::latency) {
                ++bram_pairs;
                o.require(s.resources.bram >= b.resources.bram, s.model + " SNL BRAM below baked latency BRAM");
            }
    }
    o.detail << recs.size() << " points in " << secs << "s; " << pairs << " RF pairs, " << prec_pairs
             << " precision pairs, " << bram_pairs << " BRAM pairs";
}

void runtime_reload(Outcome& o) {
    const fx::FixedFormat f(16, 6);
    const auto g = ir::builtin("jet");
    auto p = loaded(g, perf::DesignPoint::snl(f), 2);
    const auto digest = p.structure_digest();
    const auto x = seeded_input(g, f, 77);
    const auto before = p.simulate(x).output;

    auto ws = g.weights();
    const std::size_t elem = 5 * 64 + 3;  // kernel[5][3] of the first Dense
    ws[0].kernel[elem] = -1.25f;
    const auto modified = g.with_weights(ws);
    std::vector<sim::RegisterWrite> w{{elem, fx::quantize(-1.25, f).raw}};
    o.require(!p.busy(), "pipeline busy before reload");
    o.require(p.load_weights(w) == 1, "write not acknowledged");
    const auto after = p.simulate(x).output;
    o.require(after == qsim::run_quantized_raw(modified, x, f).raw, "output differs from qsim with the new weight");
    o.require(after != before, "output did not change");
    o.require(p.structure_digest() == digest, "structure digest changed");
    o.detail << "1 register write, output matches modified-weight qsim, digest " << digest.substr(0, 12);
}

void codegen_coverage(Outcome& o) {
    // Hand sums of in*out + out over each Dense chain.
    auto hand = [](std::initializer_list<std::int64_t> widths) {
        std::vector<std::int64_t> d(widths);
        std::int64_t s = 0;
        for (std::size_t i = 0; i + 1 < d.size(); ++i) s += d[i] * d[i + 1] + d[i + 1];
        return s;
    };
    const auto jet_hand = hand({16, 64, 32, 32, 5});
    const auto anomaly_hand = hand({320, 16, 32, 32, 8, 32, 32, 16, 320});
    std::size_t files = 0, literals = 0;
    for (const auto& raw : ir::builtin_benchmarks())
        for (const auto& f : formats) {
            codegen::CodegenConfig c;
            c.precision = f;
            const auto g = ir::normalize_for_hardware(raw);
            const auto a = codegen::generate(g, c);
            const auto b = codegen::generate(ir::normalize_for_hardware(ir::builtin(raw.name())), c);
            o.require(a.manifest() == b.manifest(), raw.name() + " manifest differs on regeneration");
            for (const auto& path : a.compute_sources()) {
                ++files;
                literals += codegen::find_weight_literals(a.file(path)).size();
            }
            const auto words = static_cast<std::int64_t>(a.stage_table().register_words);
            o.require(words == g.parameter_count(), raw.name() + " register words != parameter count");
            if (raw.name() == "jet") o.require(words == jet_hand && words == 4389, "jet words " + std::to_string(words));
            if (raw.name() == "anomaly")
                o.require(words == anomaly_hand, "anomaly words " + std::to_string(words));
        }
    o.require(literals == 0, std::to_string(literals) + " weight literals found");
    o.detail << "12 projects regenerated identically; jet " << jet_hand << " words, anomaly " << anomaly_hand
             << " words (hand sum; the listed 33,480 does not equal its own terms); " << files
             << " compute sources, 0 literals";
}

void benchmark_structure(Outcome& o) {
    const auto recs = bench::run_sweep(bench::SweepSpec{});
    o.require(recs.size() == 96, "record count");
    std::size_t groups = 0, resource_rf1 = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].dp.strategy == perf::Strategy::resource && recs[i].dp.reuse_factor == 1) ++resource_rf1;
        if (i % 8 == 0) {
            ++groups;
            o.require(recs[i].dp.framework == perf::Framework::snl, "group does not start with SNL");
            for (std::size_t k = 1; k < 8; ++k)
                o.require(recs[i + k].model == recs[i].model && recs[i + k].dp.precision == recs[i].dp.precision,
                          "group mixes models or precisions");
        }
    }
    o.require(resource_rf1 == 0, "resource RF=1 present");
    const auto doc = nlohmann::json::parse(bench::render_plotdata(recs));
    std::size_t nulls = 0, infeasible = 0;
    for (const auto& r : recs) infeasible += !r.feasible();
    for (const auto& g : doc["groups"]) {
        o.require(g["bars"].size() == 8, "group without 8 bars");
        for (const auto& b : g["bars"]) nulls += b["latency_us"].is_null();
    }
    o.require(doc["groups"].size() == 12, "plotdata group count");
    o.require(nulls == infeasible && infeasible > 0, "infeasible points not encoded as gaps");
    o.detail << groups << " groups x 8, no resource RF=1, " << infeasible << " infeasible points as null bars";
}

void protocol_round_trip(Outcome& o) {
    const fx::FixedFormat f(16, 6);
    auto factory = [&] { return sim::Pipeline::build(ir::builtin("jet"), perf::DesignPoint::snl(f)); };
    net::ServerConfig cfg;
    cfg.port = 0;
    cfg.log = false;
    cfg.frame_timeout = std::chrono::milliseconds(200);
    net::Server server(cfg, factory);
    server.start();

    const auto img = image_for(ir::builtin("jet"), f);
    std::size_t bad = 0;
    {
        net::Client c("127.0.0.1", server.port());
        c.write_image(img);
        auto local = factory();
        local.load_image(img);
        for (std::uint64_t s = 0; s < 1000; ++s) {
            const auto x = qsim::quantize_input(seeded_vector(16, 9000 + s), f);
            const auto got = c.infer(x);
            const auto want = local.simulate(x);
            bad += got.output != want.output || got.cycles != static_cast<std::uint64_t>(want.latency_cycles);
        }
        o.require(bad == 0, std::to_string(bad) + " of 1000 inferences differ");

        // Malformed traffic: bad magic, bad payload size, truncated frame.
        int errors = 0;
        c.send_raw("JUNK");
        c.send_raw(net::encode(net::make_frame(net::FrameType::ping, "a")));
        errors += c.read_frame().kind() == net::FrameType::error;
        o.require(c.read_frame().payload == "a", "ping after garbage lost");
        errors += c.request(net::make_frame(net::FrameType::infer_req, "xyz")).kind() == net::FrameType::error;
        const auto full = net::encode(net::make_frame(net::FrameType::ping, "truncated"));
        c.send_raw(full.substr(0, 12));
        const auto e = c.read_frame();
        errors += e.kind() == net::FrameType::error && net::parse_error(e).first == net::ErrorCode::malformed;
        o.require(errors == 3, "malformed frames not all answered with ERROR");
        o.require(c.ping("alive") == "alive", "session torn down after malformed frames");
    }

    const auto img_b = image_for(ir::builtin("jet", 99), f);
    std::atomic<int> crosstalk{0};
    auto worker = [&](const std::vector<std::int64_t>& image, std::uint64_t base) {
        net::Client c("127.0.0.1", server.port());
        c.write_image(image);
        auto local = factory();
        local.load_image(image);
        for (std::uint64_t s = 0; s < 100; ++s) {
            const auto x = qsim::quantize_input(seeded_vector(16, base + s), f);
            if (c.infer(x).output != local.simulate(x).output) ++crosstalk;
        }
    };
    std::thread a(worker, std::cref(img), 1), b(worker, std::cref(img_b), 2);
    a.join();
    b.join();
    o.require(crosstalk == 0, "cross-talk between sessions");
    server.stop();
    o.detail << "1000/1000 loopback inferences bit-exact; 3 malformed frames answered, session kept; 2 sessions x 100 "
                "inferences, 0 cross-talk";
}

}  // namespace

int main() {
    std::cout << "snlforge acceptance\n";
    criterion("fixed-point oracle equivalence", fixed_point_oracle);
    criterion("numeric chain equivalence", numeric_chain);
    criterion("precision-error monotonicity", error_monotonicity);
    criterion("latency-model consistency", latency_consistency);
    criterion("trend reproduction", trend_reproduction);
    criterion("runtime reload", runtime_reload);
    criterion("codegen determinism and coverage", codegen_coverage);
    criterion("benchmark structure", benchmark_structure);
    criterion("protocol round-trip", protocol_round_trip);
    std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << (9 - failures) << "/9)\n";
    return failures;
}
