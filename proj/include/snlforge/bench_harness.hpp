#pragma once

// Design-space sweep over models x precisions x design points, with
// feasibility checks against a device profile and CSV / Markdown /
// plot-data reports grouped by (model, precision).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snlforge/model_ir.hpp"
#include "snlforge/perf_model.hpp"

namespace snlforge::bench {

// A result the estimator cannot produce, e.g. a failure reported for the real
// toolchain. '*' matches anything; empty strategy/rf match SNL points.
struct KnownDivergence {
    std::string model, precision, framework, strategy, rf;
    std::string annotation;

    bool matches(const std::string& model_name, const perf::DesignPoint& dp) const;
};

std::vector<KnownDivergence> default_divergences();
// CSV: model,precision,framework,strategy,rf,annotation with a header row.
std::vector<KnownDivergence> parse_divergences(const std::string& text);
std::vector<KnownDivergence> load_divergences(const std::filesystem::path& p);

struct SweepSpec {
    std::vector<std::string> models = {"jet", "anomaly", "kws", "vww"};
    std::vector<fx::FixedFormat> precisions = {{32, 16}, {16, 6}, {8, 3}};
    std::vector<perf::Framework> frameworks = {perf::Framework::snl, perf::Framework::baked};
    std::vector<perf::Strategy> strategies = {perf::Strategy::latency, perf::Strategy::resource};
    std::vector<int> reuse_factors = {1, 2, 4, 8};
    std::int64_t clock_period_ps = 10000;
    perf::DeviceProfile profile = perf::DeviceProfile::zcu102();
    perf::Calibration calib;
    std::vector<KnownDivergence> divergences = default_divergences();
    bool simulate = false;
    unsigned threads = 0;  // 0: hardware concurrency
    std::uint64_t seed = ir::default_weight_seed;

    // Deduplicated, in sweep order; resource/RF=1 never appears.
    std::vector<std::pair<std::string, perf::DesignPoint>> points() const;
};

struct SweepRecord {
    std::string model;
    perf::DesignPoint dp;
    perf::ResourceEstimate resources;
    perf::LatencyEstimate latency;
    std::optional<std::int64_t> sim_cycles;
    perf::FitVerdict fit;
    std::string annotation;

    bool feasible() const { return fit.fits() && annotation.empty(); }
};

// Ordered by model, precision, framework, strategy, then RF.
std::vector<SweepRecord> run_sweep(const SweepSpec& spec);

enum class ReportFormat { csv, markdown, plotdata };
ReportFormat parse_report_format(const std::string& s);

std::string render_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_csv(const std::string& text);
std::string render_markdown(const std::vector<SweepRecord>& records);
// Grouped bars: SNL, then latency strategy by RF, then resource strategy by
// RF. Infeasible bars keep their slot with null metrics.
std::string render_plotdata(const std::vector<SweepRecord>& records);
std::string render(const std::vector<SweepRecord>& records, ReportFormat fmt);

// "SNL", "L-RF2", "R-RF4"
std::string bar_label(const perf::DesignPoint& dp);

}  // namespace snlforge::bench
