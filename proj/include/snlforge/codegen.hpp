#pragma once

// Emits an SNL-style streaming HLS project: one stream-in/stream-out function
// per (fused) layer, a dataflow top, and a weight register map. Weights are
// only ever read through the register interface, so a new weight image can
// be loaded without regenerating anything.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snlforge/fixed_point.hpp"
#include "snlforge/model_ir.hpp"

namespace snlforge::codegen {

class CodegenError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CodegenConfig {
    fx::FixedFormat precision;
    std::int64_t clock_period_ps = 10000;
    std::string part = "xczu9eg-ffvb1156-2-e";
    std::string project_name;  // empty: model name

    void validate() const;
};

// Largest data width the register/stream templates accept (one AXI-Lite word).
constexpr int max_backend_bits = 32;

enum class ParamKind { kernel, bias };

struct RegisterEntry {
    int layer_id = 0;
    std::string layer_name;
    ParamKind kind = ParamKind::kernel;
    // Half-open ranges.
    std::uint64_t elem_begin = 0, elem_end = 0;
    std::uint64_t word_begin = 0, word_end = 0;

    std::uint64_t words() const { return word_end - word_begin; }
};

struct RegisterMap {
    int word_bits = 16;
    std::vector<RegisterEntry> entries;

    std::uint64_t total_words() const { return entries.empty() ? 0 : entries.back().word_end; }
    const RegisterEntry* find(int layer_id, ParamKind kind) const;
};

// One bus word per element, bus width = X rounded up to a power of two (>= 8).
int bus_word_bits(const fx::FixedFormat& fmt);

RegisterMap emit_register_map(const ir::ModelGraph& graph, const CodegenConfig& cfg);

enum class StageKind { dense, conv2d, avg_pool, global_avg_pool, relu };

std::string to_string(StageKind kind);

struct WordRange {
    std::uint64_t base = 0;
    std::uint64_t words = 0;
};

// Hardware stage after activation fusion; the unit the streaming pipeline,
// the latency model and the emitted sources all share.
struct StageDesc {
    int index = 0;
    int layer_id = 0;
    std::string name;
    StageKind kind = StageKind::dense;
    ir::TensorShape input;
    ir::TensorShape output;
    bool relu = false;
    std::int64_t window_h = 1, window_w = 1;
    std::int64_t stride_h = 1, stride_w = 1;
    std::int64_t pad_top = 0, pad_left = 0;
    std::int64_t fan_in = 1;
    std::optional<WordRange> kernel;
    std::optional<WordRange> bias;

    // Multiplications performed per inference by a fully parallel engine.
    std::int64_t parallel_products() const;
};

// Requires a normalized graph (no Dropout, no Softmax).
std::vector<StageDesc> lower(const ir::ModelGraph& graph, const RegisterMap& map);

std::vector<std::int64_t> execute_stage(const StageDesc& stage, std::span<const std::int64_t> input,
                                        std::span<const std::int64_t> registers, const fx::FixedFormat& fmt);

// Raw quantized parameter words in register order.
std::vector<std::int64_t> weight_image(const ir::ModelGraph& graph, const RegisterMap& map,
                                       const fx::FixedFormat& fmt);

// Machine-readable stage table emitted as model/stages.json.
struct StageTable {
    std::string model;
    fx::FixedFormat precision;
    std::int64_t clock_period_ps = 10000;
    int word_bits = 16;
    std::uint64_t register_words = 0;
    ir::TensorShape input;
    std::vector<StageDesc> stages;
};

std::string stage_table_json(const StageTable& table);
StageTable parse_stage_table(const std::string& text);

class GeneratedProject {
public:
    GeneratedProject() = default;
    explicit GeneratedProject(std::string name) : name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    const std::map<std::string, std::string>& files() const { return files_; }
    const std::string& file(const std::string& path) const;
    bool has(const std::string& path) const { return files_.count(path) != 0; }
    void put(const std::string& path, std::string content) { files_[path] = std::move(content); }

    // JSON listing every file with its byte length and SHA-256 digest.
    std::string manifest() const;
    void write_to(const std::filesystem::path& dir) const;
    // Reads a project written by write_to and verifies every digest.
    static GeneratedProject read_from(const std::filesystem::path& dir);

    StageTable stage_table() const;
    std::vector<std::string> compute_sources() const;

private:
    std::string name_;
    std::map<std::string, std::string> files_;
};

std::string sha256_hex(std::string_view data);

GeneratedProject generate(const ir::ModelGraph& graph, const CodegenConfig& cfg);

struct Testbench {
    std::string source;
    std::string inputs;   // one sample per line, raw input words
    std::string golden;   // one sample per line, raw output words
    std::string weights;  // one raw word per line, register order
};

Testbench emit_testbench(const ir::ModelGraph& graph, const CodegenConfig& cfg,
                         std::span<const std::vector<double>> inputs);
void attach_testbench(GeneratedProject& project, const Testbench& tb);

// Runs the emitted stage table against a weight image.
std::vector<std::int64_t> interpret(const GeneratedProject& project, std::span<const std::int64_t> registers,
                                    std::span<const std::int64_t> input);

// Tokens in `source` that look like embedded parameter values: floating-point
// literals or brace-initialized numeric tables.
std::vector<std::string> find_weight_literals(std::string_view source);

}  // namespace snlforge::codegen
