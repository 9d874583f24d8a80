#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "snlforge/codegen.hpp"
#include "snlforge/qsim.hpp"
#include "snlforge/random.hpp"

using namespace snlforge;
using codegen::ParamKind;

namespace {

codegen::CodegenConfig config(fx::FixedFormat f = fx::FixedFormat(16, 6)) {
    codegen::CodegenConfig c;
    c.precision = f;
    return c;
}

std::vector<std::vector<std::int64_t>> parse_rows(const std::string& text) {
    std::vector<std::vector<std::int64_t>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        rows.emplace_back();
        std::int64_t v;
        while (ls >> v) rows.back().push_back(v);
    }
    return rows;
}

const fx::FixedFormat formats[] = {fx::FixedFormat(8, 3), fx::FixedFormat(16, 6), fx::FixedFormat(32, 16)};

}  // namespace

TEST_SUITE("codegen") {

TEST_CASE("config validation") {
    CHECK_NOTHROW(config().validate());
    CHECK_THROWS_AS(config(fx::FixedFormat(48, 16)).validate(), codegen::CodegenError);
    auto c = config();
    c.clock_period_ps = 0;
    CHECK_THROWS_AS(c.validate(), codegen::CodegenError);
}

TEST_CASE("bus width rounds up to a power of two") {
    CHECK(codegen::bus_word_bits(fx::FixedFormat(8, 3)) == 8);
    CHECK(codegen::bus_word_bits(fx::FixedFormat(6, 3)) == 8);
    CHECK(codegen::bus_word_bits(fx::FixedFormat(16, 6)) == 16);
    CHECK(codegen::bus_word_bits(fx::FixedFormat(18, 6)) == 32);
    CHECK(codegen::bus_word_bits(fx::FixedFormat(32, 16)) == 32);
}

TEST_CASE("jet register map") {
    const auto g = ir::normalize_for_hardware(ir::builtin("jet"));
    const auto map = codegen::emit_register_map(g, config());
    CHECK(map.total_words() == 4389);
    CHECK(map.word_bits == 16);
    const auto* k = map.find(0, ParamKind::kernel);
    const auto* b = map.find(0, ParamKind::bias);
    REQUIRE(k);
    REQUIRE(b);
    CHECK(k->word_begin == 0);
    CHECK(k->words() == 16 * 64);
    CHECK(b->word_begin == k->word_end);
    CHECK(b->words() == 64);
    CHECK(map.find(1, ParamKind::kernel) == nullptr);  // ReLU
}

TEST_CASE("register map covers every parameter once, contiguously") {
    for (const auto& raw : ir::builtin_benchmarks()) {
        const auto g = ir::normalize_for_hardware(raw);
        const auto map = codegen::emit_register_map(g, config());
        CHECK(static_cast<std::int64_t>(map.total_words()) == g.parameter_count());
        std::uint64_t next = 0;
        int last_layer = -1;
        for (const auto& e : map.entries) {
            CHECK(e.word_begin == next);
            CHECK(e.words() == e.elem_end - e.elem_begin);
            CHECK(e.layer_id >= last_layer);
            const auto& w = g.weights_for(e.layer_id);
            CHECK(e.elem_end == (e.kind == ParamKind::kernel ? w.kernel.size() : w.bias.size()));
            next = e.word_end;
            last_layer = e.layer_id;
        }
    }
    // Hand sum over the anomaly chain.
    const std::int64_t d[] = {320, 16, 32, 32, 8, 32, 32, 16, 320};
    std::int64_t sum = 0;
    for (int i = 0; i < 8; ++i) sum += d[i] * d[i + 1] + d[i + 1];
    CHECK(codegen::emit_register_map(ir::builtin("anomaly"), config()).total_words() == static_cast<std::uint64_t>(sum));
}

TEST_CASE("jet project structure") {
    const auto g = ir::normalize_for_hardware(ir::builtin("jet"));
    const auto p = codegen::generate(g, config());
    const auto t = p.stage_table();
    REQUIRE(t.stages.size() == 4);
    for (const auto& s : t.stages) CHECK(s.kind == codegen::StageKind::dense);
    CHECK(t.stages[0].relu);
    CHECK(t.stages[1].relu);
    CHECK(t.stages[2].relu);
    CHECK_FALSE(t.stages[3].relu);
    CHECK(t.register_words == 4389);
    CHECK(p.compute_sources().size() == 5);  // 4 layers + top
    CHECK(p.has("scripts/build.tcl"));
    const auto& tcl = p.file("scripts/build.tcl");
    CHECK(tcl.find("xczu9eg-ffvb1156-2-e") != std::string::npos);
    CHECK(tcl.find("10") != std::string::npos);
    for (int i = 0; i < 4; ++i) {
        const std::string fn = "layer_0" + std::to_string(i) + "_dense";
        CHECK(p.file("firmware/top.cpp").find(fn) != std::string::npos);
    }
}

TEST_CASE("kws lowers conv, gap and dense with fused relu") {
    const auto g = ir::normalize_for_hardware(ir::builtin("kws"));
    const auto t = codegen::generate(g, config()).stage_table();
    REQUIRE(t.stages.size() == 4);
    CHECK(t.stages[0].kind == codegen::StageKind::conv2d);
    CHECK(t.stages[0].relu);
    CHECK(t.stages[0].fan_in == 25);
    CHECK(t.stages[1].fan_in == 9 * 16);
    CHECK(t.stages[2].kind == codegen::StageKind::global_avg_pool);
    CHECK(t.stages[3].kind == codegen::StageKind::dense);
}

TEST_CASE("unsupported layers are rejected") {
    std::vector<ir::LayerSpec> layers{{0, "d0", ir::LayerKind::Dense, ir::DenseParams{4}},
                                      {1, "s", ir::LayerKind::Softmax, {}},
                                      {2, "d1", ir::LayerKind::Dense, ir::DenseParams{2}}};
    ir::WeightSet ws{{0, {std::vector<float>(16, 0.1f), std::vector<float>(4, 0.f)}},
                     {2, {std::vector<float>(8, 0.1f), std::vector<float>(2, 0.f)}}};
    const ir::ModelGraph g("mid", ir::TensorShape::flat(4), layers, ws);
    CHECK_THROWS_AS(codegen::generate(g, config()), codegen::CodegenError);
    CHECK_THROWS_AS(codegen::generate(ir::builtin("jet"), config(fx::FixedFormat(40, 8))), codegen::CodegenError);
}

TEST_CASE("generation is deterministic") {
    for (const auto& raw : ir::builtin_benchmarks()) {
        const auto g = ir::normalize_for_hardware(raw);
        const auto a = codegen::generate(g, config());
        const auto b = codegen::generate(ir::normalize_for_hardware(ir::builtin(raw.name())), config());
        CHECK(a.manifest() == b.manifest());
        CHECK(a.files() == b.files());
    }
}

TEST_CASE("weights only change the image, never the sources") {
    const auto a = codegen::generate(ir::normalize_for_hardware(ir::builtin("vww", 1)), config());
    const auto b = codegen::generate(ir::normalize_for_hardware(ir::builtin("vww", 2)), config());
    CHECK(a.manifest() == b.manifest());
}

TEST_CASE("no weight literals in compute sources") {
    for (const auto& raw : ir::builtin_benchmarks())
        for (const auto& f : formats) {
            const auto p = codegen::generate(ir::normalize_for_hardware(raw), config(f));
            for (const auto& path : p.compute_sources()) {
                const auto hits = codegen::find_weight_literals(p.file(path));
                INFO(path, " ", hits.empty() ? "" : hits.front());
                CHECK(hits.empty());
            }
        }
}

TEST_CASE("literal scanner detects embedded tables") {
    CHECK_FALSE(codegen::find_weight_literals("const data_t w[4] = {1, 2, 3, 4};").empty());
    CHECK_FALSE(codegen::find_weight_literals("y = x * 0.125;").empty());
    CHECK_FALSE(codegen::find_weight_literals("y = x * 1e-3;").empty());
    CHECK(codegen::find_weight_literals("for (int i = 0; i < 16; ++i) y += regs[BASE + i]; // 0.5").empty());
}

TEST_CASE("interpreter reproduces the quantized engine") {
    for (const auto& raw : ir::builtin_benchmarks(3))
        for (const auto& f : formats) {
            const auto g = ir::normalize_for_hardware(raw);
            const auto p = codegen::generate(g, config(f));
            const auto image = codegen::weight_image(g, codegen::emit_register_map(g, config(f)), f);
            for (std::uint64_t s = 0; s < 2; ++s) {
                const auto x = seeded_vector(static_cast<std::size_t>(g.input_shape().elements()), 40 + s);
                const auto q = qsim::quantize_input(x, f);
                INFO(raw.name(), " ", f.to_string());
                CHECK(codegen::interpret(p, image, q) == qsim::run_quantized_raw(raw, q, f).raw);
            }
        }
}

TEST_CASE("weight image holds the quantized parameters") {
    const auto g = ir::builtin("jet");
    const fx::FixedFormat f(16, 6);
    const auto map = codegen::emit_register_map(g, config(f));
    const auto image = codegen::weight_image(g, map, f);
    REQUIRE(image.size() == 4389);
    const auto& w = g.weights_for(0);
    CHECK(image[5] == oracle::quantize(w.kernel[5], f));
    CHECK(image[1024 + 3] == oracle::quantize(w.bias[3], f));
    CHECK(image.back() == oracle::quantize(g.weights_for(6).bias.back(), f));
}

TEST_CASE("testbench golden data") {
    const auto g = ir::normalize_for_hardware(ir::builtin("jet"));
    std::vector<std::vector<double>> inputs;
    for (std::uint64_t s = 0; s < 3; ++s) inputs.push_back(seeded_vector(16, 70 + s));
    const auto tb = codegen::emit_testbench(g, config(), inputs);
    const auto golden = parse_rows(tb.golden);
    REQUIRE(golden.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(golden[i].size() == 5);
        CHECK(golden[i] == qsim::run_quantized(g, inputs[i], fx::FixedFormat(16, 6)).raw);
    }
    CHECK(parse_rows(tb.inputs).size() == 3);
    CHECK(parse_rows(tb.weights).size() == 4389);
    const auto again = codegen::emit_testbench(g, config(), inputs);
    CHECK(again.source == tb.source);
    CHECK(again.golden == tb.golden);

    // Zero input: the output is the quantized bias propagated through the chain.
    const std::vector<std::vector<double>> zero{std::vector<double>(16, 0.0)};
    const auto z = parse_rows(codegen::emit_testbench(g, config(), zero).golden);
    CHECK(z[0] == oracle::fixed_forward(g, std::vector<std::int64_t>(16, 0), fx::FixedFormat(16, 6)));

    auto p = codegen::generate(g, config());
    codegen::attach_testbench(p, tb);
    CHECK(p.has("tb/golden.dat"));
    CHECK(p.file("tb/golden.dat") == tb.golden);
}

TEST_CASE("project round trip through disk") {
    const auto g = ir::normalize_for_hardware(ir::builtin("vww"));
    const auto p = codegen::generate(g, config());
    const auto dir = std::filesystem::temp_directory_path() / "snlforge_cg";
    std::filesystem::remove_all(dir);
    p.write_to(dir);
    const auto back = codegen::GeneratedProject::read_from(dir);
    CHECK(back.files() == p.files());
    CHECK(back.stage_table().stages.size() == p.stage_table().stages.size());
    CHECK(codegen::stage_table_json(back.stage_table()) == p.file("model/stages.json"));

    std::ofstream(dir / "firmware" / "top.cpp", std::ios::app) << "// edited\n";
    CHECK_THROWS_AS(codegen::GeneratedProject::read_from(dir), codegen::CodegenError);
}

TEST_CASE("manifest digests") {
    CHECK(codegen::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto p = codegen::generate(ir::builtin("anomaly"), config());
    const auto m = p.manifest();
    for (const auto& [path, content] : p.files()) {
        CHECK(m.find(path) != std::string::npos);
        CHECK(m.find(codegen::sha256_hex(content)) != std::string::npos);
    }
}

}
