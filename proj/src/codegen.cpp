#include "snlforge/codegen.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "snlforge/qsim.hpp"

namespace snlforge::codegen {

namespace fs = std::filesystem;

void CodegenConfig::validate() const {
    if (clock_period_ps <= 0) throw CodegenError("clock period must be positive");
    if (precision.total_bits > max_backend_bits)
        throw CodegenError("precision " + precision.to_string() + " unsupported by the streaming templates (X <= " +
                           std::to_string(max_backend_bits) + ")");
    if (part.empty()) throw CodegenError("target part must not be empty");
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

namespace {

// 10000 ps -> "10", 2500 ps -> "2.5"
std::string ps_to_ns(std::int64_t ps) {
    std::string s = std::to_string(ps / 1000);
    std::int64_t frac = ps % 1000;
    if (frac == 0) return s;
    char buf[8];
    std::snprintf(buf, sizeof buf, "%03lld", static_cast<long long>(frac));
    std::string f = buf;
    while (f.back() == '0') f.pop_back();
    return s + "." + f;
}

std::string identifier(std::string s) {
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "m_" + s;
    return s;
}

std::string two(int i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d", i);
    return buf;
}

std::string function_name(const StageDesc& s) { return "layer_" + two(s.index) + "_" + to_string(s.kind); }

std::string reg_prefix(const StageDesc& s) { return "L" + two(s.index); }

std::string dims(const ir::TensorShape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.dims.size(); ++i) out += (i ? "x" : "") + std::to_string(s.dims[i]);
    return out;
}

std::string emit_defines(const std::string& ns, const StageTable& t) {
    std::ostringstream o;
    o << "// " << t.model << ": fixed-point and stream aliases\n"
      << "#pragma once\n\n#include \"snl_types.h\"\n\n"
      << "namespace " << ns << " {\n\n"
      << "constexpr int DATA_BITS = " << t.precision.total_bits << ";\n"
      << "constexpr int DATA_INT_BITS = " << t.precision.int_bits << ";\n"
      << "constexpr int WORD_BITS = " << t.word_bits << ";\n"
      << "constexpr int N_INPUT = " << t.input.elements() << ";\n"
      << "constexpr int N_OUTPUT = " << (t.stages.empty() ? t.input.elements() : t.stages.back().output.elements())
      << ";\n\n"
      << "using data_t = snl::fixed<DATA_BITS, DATA_INT_BITS, snl::"
      << (t.precision.rounding == fx::Rounding::truncate ? "truncate" : "round_half_up") << ", snl::"
      << (t.precision.overflow == fx::Overflow::saturate ? "saturate" : "wrap") << ">;\n"
      << "using weight_word_t = snl::word<WORD_BITS>;\n"
      << "template <int FanIn> using accum_t = snl::accum<data_t, FanIn>;\n"
      << "template <typename T> using stream_t = snl::stream<T>;\n\n"
      << "}  // namespace " << ns << "\n";
    return o.str();
}

std::string emit_types() {
    return "#pragma once\n\n"
           "// Binds the project's fixed-point, accumulator, stream and bus-word names\n"
           "// to a vendor library. Generated layers use only the names below:\n"
           "//   snl::fixed<X, Y, Rounding, Overflow>  with from_word() and implicit resize\n"
           "//   snl::accum<T, FanIn>                  exact accumulator for T products\n"
           "//   snl::stream<T>                        read() / write()\n"
           "//   snl::word<Bits>                       one register word\n"
           "#ifdef SNL_VENDOR_TYPES_HEADER\n"
           "#include SNL_VENDOR_TYPES_HEADER\n"
           "#else\n"
           "#error \"define SNL_VENDOR_TYPES_HEADER to a header providing the snl:: aliases\"\n"
           "#endif\n";
}

std::string emit_regmap_header(const std::string& ns, const StageTable& t) {
    std::ostringstream o;
    o << "// Register word addresses. One parameter per word, layer order, kernel before bias.\n"
      << "#pragma once\n\nnamespace " << ns << " {\n\n"
      << "constexpr unsigned REGISTER_WORDS = " << t.register_words << ";\n";
    for (const auto& s : t.stages) {
        if (!s.kernel) continue;
        const auto p = reg_prefix(s);
        o << "\n// " << s.name << "\n"
          << "constexpr unsigned " << p << "_KERNEL_BASE = " << s.kernel->base << ";\n"
          << "constexpr unsigned " << p << "_KERNEL_WORDS = " << s.kernel->words << ";\n"
          << "constexpr unsigned " << p << "_BIAS_BASE = " << s.bias->base << ";\n"
          << "constexpr unsigned " << p << "_BIAS_WORDS = " << s.bias->words << ";\n";
    }
    o << "\n}  // namespace " << ns << "\n";
    return o.str();
}

std::string emit_layers_header(const std::string& ns, const StageTable& t) {
    std::ostringstream o;
    o << "#pragma once\n\n#include \"defines.h\"\n#include \"regmap.h\"\n\nnamespace " << ns << " {\n\n";
    for (const auto& s : t.stages)
        o << "void " << function_name(s) << "(stream_t<data_t>& in, stream_t<data_t>& out, const weight_word_t* regs);\n";
    o << "\nvoid " << ns << "_top(stream_t<data_t>& input, stream_t<data_t>& output, const weight_word_t regs[REGISTER_WORDS]);\n"
      << "\n}  // namespace " << ns << "\n";
    return o.str();
}

std::string relu_line(const StageDesc& s, const std::string& var, const std::string& indent) {
    return s.relu ? indent + "if (" + var + " < 0) " + var + " = 0;\n" : "";
}

std::string emit_dense(const StageDesc& s) {
    const auto p = reg_prefix(s);
    std::ostringstream o;
    o << "    constexpr int N_IN = " << s.input.elements() << ";\n"
      << "    constexpr int N_OUT = " << s.output.elements() << ";\n"
      << "    data_t x[N_IN];\n"
      << "read_input:\n"
      << "    for (int i = 0; i < N_IN; ++i) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "        x[i] = in.read();\n"
      << "    }\n"
      << "compute:\n"
      << "    for (int j = 0; j < N_OUT; ++j) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "        accum_t<N_IN> acc = 0;\n"
      << "        for (int i = 0; i < N_IN; ++i)\n"
      << "            acc += x[i] * data_t::from_word(regs[" << p << "_KERNEL_BASE + i * N_OUT + j]);\n"
      << "        acc += data_t::from_word(regs[" << p << "_BIAS_BASE + j]);\n"
      << "        data_t y = acc;\n"
      << relu_line(s, "y", "        ")
      << "        out.write(y);\n"
      << "    }\n";
    return o.str();
}

std::string emit_conv(const StageDesc& s) {
    const auto p = reg_prefix(s);
    std::ostringstream o;
    o << "    constexpr int H = " << s.input.height() << ", W = " << s.input.width() << ", C = " << s.input.channels() << ";\n"
      << "    constexpr int OH = " << s.output.height() << ", OW = " << s.output.width() << ", F = " << s.output.channels() << ";\n"
      << "    constexpr int KH = " << s.window_h << ", KW = " << s.window_w << ";\n"
      << "    constexpr int SH = " << s.stride_h << ", SW = " << s.stride_w << ";\n"
      << "    constexpr int PT = " << s.pad_top << ", PL = " << s.pad_left << ";\n"
      << "    data_t x[H * W * C];\n"
      << "read_input:\n"
      << "    for (int i = 0; i < H * W * C; ++i) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "        x[i] = in.read();\n"
      << "    }\n"
      << "pixels:\n"
      << "    for (int oh = 0; oh < OH; ++oh)\n"
      << "        for (int ow = 0; ow < OW; ++ow)\n"
      << "            for (int f = 0; f < F; ++f) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "                accum_t<KH * KW * C> acc = 0;\n"
      << "                for (int i = 0; i < KH; ++i)\n"
      << "                    for (int j = 0; j < KW; ++j) {\n"
      << "                        const int h = oh * SH + i - PT, w = ow * SW + j - PL;\n"
      << "                        if (h < 0 || h >= H || w < 0 || w >= W) continue;\n"
      << "                        for (int c = 0; c < C; ++c)\n"
      << "                            acc += x[(h * W + w) * C + c] *\n"
      << "                                   data_t::from_word(regs[" << p << "_KERNEL_BASE + ((i * KW + j) * C + c) * F + f]);\n"
      << "                    }\n"
      << "                acc += data_t::from_word(regs[" << p << "_BIAS_BASE + f]);\n"
      << "                data_t y = acc;\n"
      << relu_line(s, "y", "                ")
      << "                out.write(y);\n"
      << "            }\n";
    return o.str();
}

std::string emit_pool(const StageDesc& s) {
    const bool global = s.kind == StageKind::global_avg_pool;
    std::ostringstream o;
    o << "    constexpr int H = " << s.input.height() << ", W = " << s.input.width() << ", C = " << s.input.channels() << ";\n"
      << "    constexpr int OH = " << (global ? 1 : s.output.height()) << ", OW = " << (global ? 1 : s.output.width()) << ";\n"
      << "    constexpr int PH = " << s.window_h << ", PW = " << s.window_w << ";\n"
      << "    constexpr int SH = " << s.stride_h << ", SW = " << s.stride_w << ";\n"
      << "    // 1 / (PH * PW) in the accumulator format\n"
      << "    const typename accum_t<PH * PW>::value_type scale = accum_t<PH * PW>::reciprocal(PH * PW);\n"
      << "    data_t x[H * W * C];\n"
      << "read_input:\n"
      << "    for (int i = 0; i < H * W * C; ++i) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "        x[i] = in.read();\n"
      << "    }\n"
      << "windows:\n"
      << "    for (int oh = 0; oh < OH; ++oh)\n"
      << "        for (int ow = 0; ow < OW; ++ow)\n"
      << "            for (int c = 0; c < C; ++c) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "                accum_t<PH * PW> acc = 0;\n"
      << "                for (int i = 0; i < PH; ++i)\n"
      << "                    for (int j = 0; j < PW; ++j)\n"
      << "                        acc += x[((oh * SH + i) * W + ow * SW + j) * C + c];\n"
      << "                data_t y = acc.value() * scale;\n"
      << relu_line(s, "y", "                ")
      << "                out.write(y);\n"
      << "            }\n";
    return o.str();
}

std::string emit_relu(const StageDesc& s) {
    std::ostringstream o;
    o << "    for (int i = 0; i < " << s.input.elements() << "; ++i) {\n"
      << "#pragma HLS PIPELINE II=1\n"
      << "        data_t y = in.read();\n"
      << "        if (y < 0) y = 0;\n"
      << "        out.write(y);\n"
      << "    }\n";
    return o.str();
}

std::string emit_layer(const std::string& ns, const StageDesc& s) {
    std::ostringstream o;
    o << "// " << s.name << ": " << to_string(s.kind) << " " << dims(s.input) << " -> " << dims(s.output)
      << (s.relu && s.kind != StageKind::relu ? ", relu fused" : "") << "\n"
      << "#include \"layers.h\"\n\nnamespace " << ns << " {\n\n"
      << "void " << function_name(s) << "(stream_t<data_t>& in, stream_t<data_t>& out, const weight_word_t* regs) {\n";
    if (!s.kernel) o << "    (void)regs;\n";
    switch (s.kind) {
    case StageKind::dense: o << emit_dense(s); break;
    case StageKind::conv2d: o << emit_conv(s); break;
    case StageKind::avg_pool:
    case StageKind::global_avg_pool: o << emit_pool(s); break;
    case StageKind::relu: o << emit_relu(s); break;
    }
    o << "}\n\n}  // namespace " << ns << "\n";
    return o.str();
}

std::string emit_top(const std::string& ns, const StageTable& t) {
    std::ostringstream o;
    o << "// " << t.model << " dataflow top: AXI-Stream in/out, parameters over AXI-Lite\n"
      << "#include \"layers.h\"\n\nnamespace " << ns << " {\n\n"
      << "void " << ns << "_top(stream_t<data_t>& input, stream_t<data_t>& output, const weight_word_t regs[REGISTER_WORDS]) {\n"
      << "#pragma HLS INTERFACE axis port=input\n"
      << "#pragma HLS INTERFACE axis port=output\n"
      << "#pragma HLS INTERFACE s_axilite port=regs bundle=weights\n"
      << "#pragma HLS INTERFACE s_axilite port=return bundle=weights\n"
      << "#pragma HLS DATAFLOW\n";
    const std::size_t n = t.stages.size();
    if (n == 0) {
        o << "    for (int i = 0; i < N_INPUT; ++i) output.write(input.read());\n";
    } else {
        for (std::size_t i = 0; i + 1 < n; ++i)
            o << "    static stream_t<data_t> s" << i << ";\n"
              << "#pragma HLS STREAM variable=s" << i << " depth=" << t.stages[i].output.elements() << "\n";
        for (std::size_t i = 0; i < n; ++i) {
            const std::string in = i == 0 ? "input" : "s" + std::to_string(i - 1);
            const std::string out = i + 1 == n ? "output" : "s" + std::to_string(i);
            o << "    " << function_name(t.stages[i]) << "(" << in << ", " << out << ", regs);\n";
        }
    }
    o << "}\n\n}  // namespace " << ns << "\n";
    return o.str();
}

std::string emit_register_csv(const RegisterMap& map) {
    std::ostringstream o;
    o << "layer_id,layer_name,param,elem_begin,elem_end,word_begin,word_end,word_bits\n";
    for (const auto& e : map.entries)
        o << e.layer_id << "," << e.layer_name << "," << (e.kind == ParamKind::kernel ? "kernel" : "bias") << ","
          << e.elem_begin << "," << e.elem_end << "," << e.word_begin << "," << e.word_end << "," << map.word_bits << "\n";
    return o.str();
}

std::string emit_build_script(const std::string& ns, const CodegenConfig& cfg, const StageTable& t) {
    std::ostringstream o;
    o << "# Build script stub. Run with the vendor HLS tool from the project root.\n"
      << "set project_name \"" << ns << "\"\n"
      << "set part \"" << cfg.part << "\"\n"
      << "set clock_period_ns " << ps_to_ns(cfg.clock_period_ps) << "\n\n"
      << "open_project -reset $project_name\n"
      << "set_top " << ns << "_top\n"
      << "add_files firmware/top.cpp -cflags \"-std=c++14\"\n";
    for (const auto& s : t.stages) o << "add_files firmware/" << function_name(s) << ".cpp -cflags \"-std=c++14\"\n";
    o << "add_files -tb tb/testbench.cpp\n"
      << "add_files -tb tb/inputs.dat\n"
      << "add_files -tb tb/golden.dat\n"
      << "add_files -tb tb/weights.dat\n"
      << "open_solution -reset solution1\n"
      << "set_part $part\n"
      << "create_clock -period $clock_period_ns -name default\n"
      << "csim_design\n"
      << "csynth_design\n"
      << "export_design -format ip_catalog\n";
    return o.str();
}

std::string emit_layout_readme() {
    return "firmware/   per-layer stream functions, dataflow top, type aliases, register addresses\n"
           "driver/     register map for host-side weight loading\n"
           "model/      stage table consumed by the simulator and the virtual board\n"
           "scripts/    HLS build script stub\n"
           "tb/         C simulation testbench with seeded inputs and golden outputs\n";
}

std::string project_namespace(const ir::ModelGraph& graph, const CodegenConfig& cfg) {
    return identifier(cfg.project_name.empty() ? graph.name() : cfg.project_name);
}

}  // namespace

const std::string& GeneratedProject::file(const std::string& path) const {
    auto it = files_.find(path);
    if (it == files_.end()) throw CodegenError("project has no file '" + path + "'");
    return it->second;
}

std::string GeneratedProject::manifest() const {
    nlohmann::ordered_json doc;
    doc["format"] = "snl-project-1";
    doc["project"] = name_;
    doc["layout"] = {{"firmware/", "HLS-style sources: one stream function per stage plus the dataflow top"},
                     {"driver/", "register map for weight loading"},
                     {"model/", "machine-readable stage table"},
                     {"scripts/", "build script stub"},
                     {"tb/", "testbench, inputs, golden outputs, weight image"}};
    auto files = nlohmann::ordered_json::array();
    for (const auto& [path, content] : files_)
        files.push_back({{"path", path}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
    doc["files"] = std::move(files);
    return doc.dump(2) + "\n";
}

void GeneratedProject::write_to(const fs::path& dir) const {
    for (const auto& [path, content] : files_) {
        const fs::path p = dir / path;
        fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        if (!f) throw CodegenError("cannot write " + p.string());
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    f << manifest();
    if (!f) throw CodegenError("cannot write manifest in " + dir.string());
}

GeneratedProject GeneratedProject::read_from(const fs::path& dir) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(ir::read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw CodegenError(std::string("malformed project manifest: ") + e.what());
    }
    GeneratedProject p(doc.at("project").get<std::string>());
    for (const auto& f : doc.at("files")) {
        const auto path = f.at("path").get<std::string>();
        std::string content = ir::read_file(dir / path);
        if (sha256_hex(content) != f.at("sha256").get<std::string>())
            throw CodegenError("digest mismatch for " + path);
        p.put(path, std::move(content));
    }
    return p;
}

StageTable GeneratedProject::stage_table() const { return parse_stage_table(file("model/stages.json")); }

std::vector<std::string> GeneratedProject::compute_sources() const {
    std::vector<std::string> out;
    for (const auto& [path, _] : files_)
        if (path.rfind("firmware/", 0) == 0 && path.size() > 4 && path.compare(path.size() - 4, 4, ".cpp") == 0)
            out.push_back(path);
    return out;
}

GeneratedProject generate(const ir::ModelGraph& graph, const CodegenConfig& cfg) {
    cfg.validate();
    const auto map = emit_register_map(graph, cfg);
    StageTable t;
    t.model = graph.name();
    t.precision = cfg.precision;
    t.clock_period_ps = cfg.clock_period_ps;
    t.word_bits = map.word_bits;
    t.register_words = map.total_words();
    t.input = graph.input_shape();
    t.stages = lower(graph, map);

    const std::string ns = project_namespace(graph, cfg);
    GeneratedProject p(ns);
    p.put("firmware/snl_types.h", emit_types());
    p.put("firmware/defines.h", emit_defines(ns, t));
    p.put("firmware/regmap.h", emit_regmap_header(ns, t));
    p.put("firmware/layers.h", emit_layers_header(ns, t));
    for (const auto& s : t.stages) p.put("firmware/" + function_name(s) + ".cpp", emit_layer(ns, s));
    p.put("firmware/top.cpp", emit_top(ns, t));
    p.put("driver/register_map.csv", emit_register_csv(map));
    p.put("model/stages.json", stage_table_json(t));
    p.put("scripts/build.tcl", emit_build_script(ns, cfg, t));
    p.put("LAYOUT.txt", emit_layout_readme());
    return p;
}

namespace {

std::string join_line(const std::vector<std::int64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s + "\n";
}

}  // namespace

Testbench emit_testbench(const ir::ModelGraph& graph, const CodegenConfig& cfg, std::span<const std::vector<double>> inputs) {
    cfg.validate();
    const std::string ns = project_namespace(graph, cfg);
    const auto map = emit_register_map(graph, cfg);
    Testbench tb;
    for (const auto& x : inputs) {
        const auto raw = qsim::quantize_input(x, cfg.precision);
        tb.inputs += join_line(raw);
        tb.golden += join_line(qsim::run_quantized_raw(graph, raw, cfg.precision).raw);
    }
    for (auto w : weight_image(graph, map, cfg.precision)) tb.weights += std::to_string(w) + "\n";

    std::ostringstream o;
    o << "// C simulation testbench: loads the weight image, streams each input line\n"
      << "// and compares the raw output words against golden.dat.\n"
      << "#include <cstdio>\n#include <fstream>\n#include <sstream>\n#include <string>\n#include <vector>\n\n"
      << "#include \"../firmware/layers.h\"\n\n"
      << "using namespace " << ns << ";\n\n"
      << "int main() {\n"
      << "    static weight_word_t regs[REGISTER_WORDS];\n"
      << "    std::ifstream wf(\"tb/weights.dat\");\n"
      << "    long long raw;\n"
      << "    for (unsigned a = 0; a < REGISTER_WORDS && wf >> raw; ++a) regs[a] = weight_word_t(raw);\n\n"
      << "    std::ifstream in(\"tb/inputs.dat\"), gold(\"tb/golden.dat\");\n"
      << "    std::string line, expect;\n"
      << "    int samples = 0, mismatches = 0;\n"
      << "    while (std::getline(in, line) && std::getline(gold, expect)) {\n"
      << "        stream_t<data_t> s_in, s_out;\n"
      << "        std::istringstream xs(line), ys(expect);\n"
      << "        for (int i = 0; i < N_INPUT && xs >> raw; ++i) s_in.write(data_t::from_raw(raw));\n"
      << "        " << ns << "_top(s_in, s_out, regs);\n"
      << "        for (int i = 0; i < N_OUTPUT; ++i) {\n"
      << "            ys >> raw;\n"
      << "            if (s_out.read().raw() != raw) ++mismatches;\n"
      << "        }\n"
      << "        ++samples;\n"
      << "    }\n"
      << "    std::printf(\"%d samples, %d mismatching words\\n\", samples, mismatches);\n"
      << "    return mismatches ? 1 : 0;\n"
      << "}\n";
    tb.source = o.str();
    return tb;
}

void attach_testbench(GeneratedProject& project, const Testbench& tb) {
    project.put("tb/testbench.cpp", tb.source);
    project.put("tb/inputs.dat", tb.inputs);
    project.put("tb/golden.dat", tb.golden);
    project.put("tb/weights.dat", tb.weights);
}

std::vector<std::int64_t> interpret(const GeneratedProject& project, std::span<const std::int64_t> registers,
                                    std::span<const std::int64_t> input) {
    const auto t = project.stage_table();
    if (registers.size() != t.register_words)
        throw CodegenError("weight image has " + std::to_string(registers.size()) + " words, project expects " +
                           std::to_string(t.register_words));
    std::vector<std::int64_t> x(input.begin(), input.end());
    for (const auto& s : t.stages) x = execute_stage(s, x, registers, t.precision);
    return x;
}

std::vector<std::string> find_weight_literals(std::string_view source) {
    // Comments are skipped; the only numbers that matter are in code.
    std::string code;
    code.reserve(source.size());
    for (std::size_t i = 0; i < source.size();) {
        if (source.compare(i, 2, "//") == 0) {
            while (i < source.size() && source[i] != '\n') ++i;
        } else if (source.compare(i, 2, "/*") == 0) {
            auto end = source.find("*/", i + 2);
            i = end == std::string_view::npos ? source.size() : end + 2;
        } else {
            code.push_back(source[i++]);
        }
    }
    static const std::regex floating(R"((?:^|[^\w.])((?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]?|\d+[eE][+-]?\d+[fFlL]?))");
    static const std::regex table(R"(\{\s*[-+]?\d+(?:\s*,\s*[-+]?\d+)+\s*,?\s*\})");
    std::vector<std::string> hits;
    for (const auto* re : {&floating, &table})
        for (std::sregex_iterator it(code.begin(), code.end(), *re), end; it != end; ++it)
            hits.push_back(it->size() > 1 && (*it)[1].matched ? (*it)[1].str() : it->str());
    return hits;
}

}  // namespace snlforge::codegen
