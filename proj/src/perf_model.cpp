#include "snlforge/perf_model.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace snlforge::perf {

namespace {

constexpr std::int64_t bram18_bits = 18432;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return a <= 0 ? 0 : (a + b - 1) / b; }

std::int64_t ceil_scaled(std::int64_t n, double k) {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(n) * k));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// key = number, '#' to end of line is a comment.
std::map<std::string, double> parse_kv(const std::string& text, const std::string& what) {
    std::map<std::string, double> out;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(what + ":" + std::to_string(n) + ": expected 'key = number'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(val, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (key.empty() || used == 0 || used != val.size())
            throw std::invalid_argument(what + ":" + std::to_string(n) + ": bad value '" + val + "' for '" + key + "'");
        out[key] = v;
    }
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

int effective_rf(const DesignPoint& dp, const Calibration& calib) {
    return dp.framework == Framework::snl ? calib.snl_parallelism : dp.reuse_factor;
}

std::int64_t multipliers(const codegen::StageDesc& s, int rf) {
    return ceil_div(s.parallel_products(), rf);
}

std::int64_t param_words(const codegen::StageDesc& s) {
    return (s.kernel ? static_cast<std::int64_t>(s.kernel->words) : 0) + (s.bias ? static_cast<std::int64_t>(s.bias->words) : 0);
}

}  // namespace

std::string to_string(Framework f) { return f == Framework::snl ? "snl" : "baked"; }
std::string to_string(Strategy s) { return s == Strategy::latency ? "latency" : "resource"; }

Framework parse_framework(const std::string& s) {
    if (s == "snl") return Framework::snl;
    if (s == "baked" || s == "hls4ml") return Framework::baked;
    throw DesignPointError("unknown framework '" + s + "' (snl|baked)");
}

Strategy parse_strategy(const std::string& s) {
    if (s == "latency") return Strategy::latency;
    if (s == "resource") return Strategy::resource;
    throw DesignPointError("unknown strategy '" + s + "' (latency|resource)");
}

DesignPoint DesignPoint::snl(fx::FixedFormat p, std::int64_t clock_ps) {
    DesignPoint dp;
    dp.precision = p;
    dp.clock_period_ps = clock_ps;
    return dp;
}

DesignPoint DesignPoint::baked(fx::FixedFormat p, Strategy s, int rf, std::int64_t clock_ps) {
    DesignPoint dp;
    dp.framework = Framework::baked;
    dp.precision = p;
    dp.strategy = s;
    dp.reuse_factor = rf;
    dp.clock_period_ps = clock_ps;
    dp.validate();
    return dp;
}

void DesignPoint::validate() const {
    if (clock_period_ps <= 0) throw DesignPointError("clock period must be positive");
    if (framework == Framework::snl) {
        if (strategy || reuse_factor != 1) throw DesignPointError("snl design points carry no strategy or reuse factor");
        return;
    }
    if (!strategy) throw DesignPointError("baked design points need a strategy");
    if (reuse_factor < 1) throw DesignPointError("reuse factor must be >= 1");
    if (*strategy == Strategy::resource && reuse_factor == 1)
        throw DesignPointError("resource strategy excludes RF=1");
}

std::string DesignPoint::label() const {
    std::string s = to_string(framework) + " " + precision.to_string();
    if (framework == Framework::baked) s += " " + to_string(*strategy) + " rf=" + std::to_string(reuse_factor);
    return s;
}

Calibration Calibration::parse(const std::string& text) {
    Calibration c;
    const std::map<std::string, std::function<void(double)>> setters = {
        {"lut_mult_threshold", [&](double v) { c.lut_mult_threshold = static_cast<int>(v); }},
        {"lut_per_bit", [&](double v) { c.lut_per_bit = v; }},
        {"lut_per_adder_bit", [&](double v) { c.lut_per_adder_bit = v; }},
        {"lut_per_weight_bit", [&](double v) { c.lut_per_weight_bit = v; }},
        {"ff_per_weight_bit", [&](double v) { c.ff_per_weight_bit = v; }},
        {"lut_per_stage", [&](double v) { c.lut_per_stage = static_cast<std::int64_t>(v); }},
        {"ff_per_pipeline_stage", [&](double v) { c.ff_per_pipeline_stage = static_cast<std::int64_t>(v); }},
        {"fifo_lutram_threshold", [&](double v) { c.fifo_lutram_threshold = static_cast<std::int64_t>(v); }},
        {"lutram_bits_per_lut", [&](double v) { c.lutram_bits_per_lut = static_cast<std::int64_t>(v); }},
        {"mult_latency", [&](double v) { c.mult_latency = static_cast<int>(v); }},
        {"snl_parallelism", [&](double v) { c.snl_parallelism = static_cast<int>(v); }},
        {"regmap_ff_base", [&](double v) { c.regmap_ff_base = static_cast<std::int64_t>(v); }},
        {"regmap_ff_per_entry", [&](double v) { c.regmap_ff_per_entry = static_cast<std::int64_t>(v); }},
        {"infra_lut", [&](double v) { c.infra_lut = static_cast<std::int64_t>(v); }},
        {"infra_ff", [&](double v) { c.infra_ff = static_cast<std::int64_t>(v); }},
        {"infra_dsp", [&](double v) { c.infra_dsp = static_cast<std::int64_t>(v); }},
        {"infra_bram", [&](double v) { c.infra_bram = static_cast<std::int64_t>(v); }},
        {"snl_infra_lut", [&](double v) { c.snl_infra_lut = static_cast<std::int64_t>(v); }},
        {"snl_infra_ff", [&](double v) { c.snl_infra_ff = static_cast<std::int64_t>(v); }},
        {"snl_infra_bram", [&](double v) { c.snl_infra_bram = static_cast<std::int64_t>(v); }},
        {"bram_36k", [&](double v) { c.bram_36k = v != 0; }},
    };
    for (const auto& [k, v] : parse_kv(text, "calibration")) {
        auto it = setters.find(k);
        if (it == setters.end()) throw std::invalid_argument("calibration: unknown key '" + k + "'");
        if (v < 0) throw std::invalid_argument("calibration: '" + k + "' must be >= 0");
        it->second(v);
    }
    if (c.snl_parallelism < 1 || c.lutram_bits_per_lut < 1)
        throw std::invalid_argument("calibration: snl_parallelism and lutram_bits_per_lut must be >= 1");
    return c;
}

Calibration Calibration::load(const std::filesystem::path& p) { return parse(slurp(p)); }

void DeviceProfile::validate() const {
    if (lut <= 0 || ff <= 0 || dsp <= 0 || bram18 <= 0)
        throw std::invalid_argument("device profile '" + name + "': every capacity must be > 0");
}

DeviceProfile DeviceProfile::parse(const std::string& name, const std::string& text) {
    DeviceProfile d;
    d.name = name;
    for (const auto& [k, v] : parse_kv(text, "profile " + name)) {
        const auto n = static_cast<std::int64_t>(v);
        if (k == "lut") d.lut = n;
        else if (k == "ff") d.ff = n;
        else if (k == "dsp") d.dsp = n;
        else if (k == "bram18") d.bram18 = n;
        else throw std::invalid_argument("profile " + name + ": unknown key '" + k + "'");
    }
    d.validate();
    return d;
}

DeviceProfile DeviceProfile::load(const std::filesystem::path& p) { return parse(p.stem().string(), slurp(p)); }

DeviceProfile DeviceProfile::zcu102() { return {"zcu102", 274080, 548160, 2520, 1824}; }

DeviceProfile DeviceProfile::resolve(const std::string& s) {
    if (s == "zcu102") return zcu102();
    return load(s);
}

int dsp_per_mult(int bits, const Calibration& calib) {
    if (bits <= calib.lut_mult_threshold) return 0;
    return static_cast<int>(ceil_div(bits, 18) * ceil_div(bits, 27));
}

std::vector<codegen::StageDesc> lower_for(const ir::ModelGraph& graph, const DesignPoint& dp) {
    const auto g = ir::normalize_for_hardware(graph);
    codegen::CodegenConfig cfg;
    cfg.precision = dp.precision;
    cfg.clock_period_ps = dp.clock_period_ps;
    return codegen::lower(g, codegen::emit_register_map(g, cfg));
}

ResourceEstimate estimate_resources(const ir::ModelGraph& graph, const DesignPoint& dp, const Calibration& calib) {
    dp.validate();
    const auto stages = lower_for(graph, dp);
    const int X = dp.precision.total_bits;
    const int rf = effective_rf(dp, calib);
    const int dspm = dsp_per_mult(X, calib);
    const bool weights_in_bram = dp.framework == Framework::snl || dp.strategy == Strategy::resource;
    auto bram_units = [&](std::int64_t b18) { return calib.bram_36k ? ceil_div(b18, 2) : b18; };

    ResourceEstimate est;
    est.bram_block_kb = calib.bram_36k ? 36 : 18;
    std::int64_t regmap_entries = 0;
    for (const auto& s : stages) {
        LayerResources r;
        r.name = s.name;
        r.multipliers = multipliers(s, rf);
        const auto t = stage_timing(s, dp, calib);
        r.dsp = r.multipliers * dspm;
        r.lut = calib.lut_per_stage + ceil_scaled(r.multipliers * X, calib.lut_per_adder_bit);
        if (dspm == 0) r.lut += r.multipliers * ceil_scaled(static_cast<std::int64_t>(X) * X, calib.lut_per_bit);
        r.ff = calib.ff_per_pipeline_stage * t.fill + r.multipliers * X;
        std::int64_t b18 = 0;

        const std::int64_t params = param_words(s);
        if (params > 0) {
            regmap_entries += 2;
            if (weights_in_bram) {
                b18 += ceil_div(params * X, bram18_bits);
            } else {
                r.lut += ceil_scaled(params * X, calib.lut_per_weight_bit);
                r.ff += ceil_scaled(params * X, calib.ff_per_weight_bit);
            }
        }
        if (s.kind == codegen::StageKind::conv2d && s.window_h > 1)
            b18 += ceil_div((s.window_h - 1) * s.input.width() * s.input.channels() * X, bram18_bits);

        const std::int64_t fifo_bits = s.output.elements() * X;
        if (fifo_bits > calib.fifo_lutram_threshold)
            b18 += ceil_div(fifo_bits, bram18_bits);
        else
            r.lut += ceil_div(fifo_bits, calib.lutram_bits_per_lut);
        r.bram = bram_units(b18);
        est.layers.push_back(r);
    }

    auto& inf = est.infrastructure;
    inf.name = "infrastructure";
    inf.lut = calib.infra_lut;
    inf.ff = calib.infra_ff;
    inf.dsp = calib.infra_dsp;
    std::int64_t inf_b18 = calib.infra_bram;
    if (dp.framework == Framework::snl) {
        inf.lut += calib.snl_infra_lut;
        inf.ff += calib.snl_infra_ff + calib.regmap_ff_base + calib.regmap_ff_per_entry * regmap_entries;
        inf_b18 += calib.snl_infra_bram;
    }
    inf.bram = bram_units(inf_b18);

    est.lut = inf.lut;
    est.ff = inf.ff;
    est.dsp = inf.dsp;
    est.bram = inf.bram;
    for (const auto& r : est.layers) {
        est.lut += r.lut;
        est.ff += r.ff;
        est.dsp += r.dsp;
        est.bram += r.bram;
    }
    return est;
}

StageTiming stage_timing(const codegen::StageDesc& s, const DesignPoint& dp, const Calibration& calib) {
    StageTiming t;
    if (s.kind == codegen::StageKind::relu)
        t.fill = 1;
    else
        t.fill = calib.mult_latency + fx::ceil_log2(static_cast<std::uint64_t>(s.fan_in));
    if (dp.framework == Framework::snl)
        t.ii = calib.snl_parallelism;
    else if (dp.strategy == Strategy::resource)
        t.ii = dp.reuse_factor;
    return t;
}

std::string LatencyEstimate::microseconds_text() const {
    const std::int64_t ps = picoseconds();
    std::string s = std::to_string(ps / 1000000);
    std::int64_t frac = ps % 1000000;
    if (frac == 0) return s;
    std::string f = std::to_string(frac);
    f = std::string(6 - f.size(), '0') + f;
    while (f.back() == '0') f.pop_back();
    return s + "." + f;
}

LatencyEstimate estimate_latency(const std::vector<codegen::StageDesc>& stages, std::int64_t n_input,
                                 const DesignPoint& dp, const Calibration& calib) {
    LatencyEstimate est;
    est.clock_period_ps = dp.clock_period_ps;
    if (stages.empty()) return est;
    est.input_cycles = n_input;
    est.cycles = n_input;
    for (const auto& s : stages) {
        const auto t = stage_timing(s, dp, calib);
        StageLatency l;
        l.name = s.name;
        l.fill = t.fill;
        l.ii = t.ii;
        l.n_out = s.output.elements();
        l.cycles = t.fill + 1 + (l.n_out - 1) * t.ii;
        est.cycles += l.cycles;
        est.stages.push_back(std::move(l));
    }
    return est;
}

LatencyEstimate estimate_latency(const ir::ModelGraph& graph, const DesignPoint& dp, const Calibration& calib) {
    dp.validate();
    return estimate_latency(lower_for(graph, dp), graph.input_shape().elements(), dp, calib);
}

std::string FitVerdict::summary() const {
    std::string s;
    for (const auto& e : exceeded) s += (s.empty() ? "" : ";") + e.resource;
    return s;
}

FitVerdict check_fit(const ResourceEstimate& est, const DeviceProfile& profile) {
    FitVerdict v;
    const std::int64_t bram_cap = est.bram_block_kb == 36 ? profile.bram18 / 2 : profile.bram18;
    const std::pair<const char*, std::pair<std::int64_t, std::int64_t>> rows[] = {
        {"LUT", {est.lut, profile.lut}},
        {"FF", {est.ff, profile.ff}},
        {"DSP", {est.dsp, profile.dsp}},
        {"BRAM", {est.bram, bram_cap}},
    };
    for (const auto& [name, amounts] : rows)
        if (amounts.first > amounts.second) v.exceeded.push_back({name, amounts.first, amounts.second});
    return v;
}

}  // namespace snlforge::perf
