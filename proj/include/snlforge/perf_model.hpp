#pragma once

// Closed-form resource and latency estimates for SNL (weights in registers
// backed by BRAM) and baked-weight design points. Every constant comes from a
// Calibration; the numbers are estimates whose trends, not absolute values,
// are meant to track post-implementation reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snlforge/codegen.hpp"
#include "snlforge/fixed_point.hpp"
#include "snlforge/model_ir.hpp"

namespace snlforge::perf {

enum class Framework { snl, baked };
enum class Strategy { latency, resource };

std::string to_string(Framework f);
std::string to_string(Strategy s);
Framework parse_framework(const std::string& s);
Strategy parse_strategy(const std::string& s);

class DesignPointError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DesignPoint {
    Framework framework = Framework::snl;
    fx::FixedFormat precision;
    std::optional<Strategy> strategy;  // baked only
    int reuse_factor = 1;              // baked only
    std::int64_t clock_period_ps = 10000;

    static DesignPoint snl(fx::FixedFormat p, std::int64_t clock_ps = 10000);
    static DesignPoint baked(fx::FixedFormat p, Strategy s, int rf, std::int64_t clock_ps = 10000);

    void validate() const;
    // "snl 16:6" / "baked 16:6 resource rf=4"
    std::string label() const;
};

struct Calibration {
    int lut_mult_threshold = 8;
    double lut_per_bit = 1.0;           // LUTs per X^2 for a LUT-mapped multiplier
    double lut_per_adder_bit = 1.0;     // accumulation adder per multiplier
    double lut_per_weight_bit = 0.5;    // baked latency: weights in fabric
    double ff_per_weight_bit = 0.25;
    std::int64_t lut_per_stage = 150;   // stream handshake and control
    std::int64_t ff_per_pipeline_stage = 64;
    std::int64_t fifo_lutram_threshold = 1024;  // bits
    std::int64_t lutram_bits_per_lut = 64;
    int mult_latency = 5;
    int snl_parallelism = 1;            // reuse factor applied to SNL stages
    std::int64_t regmap_ff_base = 200;
    std::int64_t regmap_ff_per_entry = 32;
    std::int64_t infra_lut = 2000, infra_ff = 3000, infra_dsp = 0, infra_bram = 0;
    std::int64_t snl_infra_lut = 1500, snl_infra_ff = 2000, snl_infra_bram = 2;
    bool bram_36k = false;

    // `key = number` lines, '#' comments. Unknown keys are an error.
    static Calibration parse(const std::string& text);
    static Calibration load(const std::filesystem::path& p);
};

struct DeviceProfile {
    std::string name;
    std::int64_t lut = 0, ff = 0, dsp = 0, bram18 = 0;

    void validate() const;
    static DeviceProfile parse(const std::string& name, const std::string& text);
    static DeviceProfile load(const std::filesystem::path& p);
    static DeviceProfile zcu102();
    // Shipped name ("zcu102") or a profile path.
    static DeviceProfile resolve(const std::string& name_or_path);
};

struct LayerResources {
    std::string name;
    std::int64_t multipliers = 0;
    std::int64_t lut = 0, ff = 0, dsp = 0, bram = 0;
};

struct ResourceEstimate {
    std::int64_t lut = 0, ff = 0, dsp = 0, bram = 0;
    int bram_block_kb = 18;
    std::vector<LayerResources> layers;
    LayerResources infrastructure;
};

int dsp_per_mult(int bits, const Calibration& calib);

ResourceEstimate estimate_resources(const ir::ModelGraph& graph, const DesignPoint& dp, const Calibration& calib = {});

struct StageTiming {
    std::int64_t fill = 1;
    std::int64_t ii = 1;
};

StageTiming stage_timing(const codegen::StageDesc& stage, const DesignPoint& dp, const Calibration& calib);

struct StageLatency {
    std::string name;
    std::int64_t fill = 0;
    std::int64_t ii = 1;
    std::int64_t n_out = 0;
    std::int64_t cycles = 0;  // fill + 1 + (n_out - 1) * ii
};

struct LatencyEstimate {
    std::int64_t cycles = 0;
    std::int64_t clock_period_ps = 10000;
    std::int64_t input_cycles = 0;
    std::vector<StageLatency> stages;

    std::int64_t picoseconds() const { return cycles * clock_period_ps; }
    double microseconds() const { return static_cast<double>(picoseconds()) / 1e6; }
    // Exact decimal rendering of picoseconds() in microseconds.
    std::string microseconds_text() const;
};

// From the first accepted input element to the last output element leaving
// the final stage: n_in + sum over stages of (fill + 1 + (n_out - 1) * II).
// Weight loading is not included.
LatencyEstimate estimate_latency(const ir::ModelGraph& graph, const DesignPoint& dp, const Calibration& calib = {});
LatencyEstimate estimate_latency(const std::vector<codegen::StageDesc>& stages, std::int64_t n_input,
                                 const DesignPoint& dp, const Calibration& calib = {});

// Stage table for a graph under a design point (normalized first).
std::vector<codegen::StageDesc> lower_for(const ir::ModelGraph& graph, const DesignPoint& dp);

struct Exceeded {
    std::string resource;  // "LUT", "FF", "DSP", "BRAM"
    std::int64_t required = 0;
    std::int64_t available = 0;
};

struct FitVerdict {
    std::vector<Exceeded> exceeded;
    bool fits() const { return exceeded.empty(); }
    // "" or "DSP;LUT"
    std::string summary() const;
};

FitVerdict check_fit(const ResourceEstimate& est, const DeviceProfile& profile);

}  // namespace snlforge::perf
