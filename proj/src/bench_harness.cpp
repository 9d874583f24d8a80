#include "snlforge/bench_harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "snlforge/dataflow_sim.hpp"

namespace snlforge::bench {

namespace {

std::string rf_text(const perf::DesignPoint& dp) {
    return dp.framework == perf::Framework::snl ? "" : std::to_string(dp.reuse_factor);
}

std::string strategy_text(const perf::DesignPoint& dp) {
    return dp.strategy ? perf::to_string(*dp.strategy) : "";
}

std::string ns_text(std::int64_t ps) {
    std::string s = std::to_string(ps / 1000);
    std::int64_t frac = ps % 1000;
    if (frac == 0) return s;
    std::string f = std::to_string(frac);
    f = std::string(3 - f.size(), '0') + f;
    while (f.back() == '0') f.pop_back();
    return s + "." + f;
}

std::int64_t parse_ns(const std::string& s) {
    const auto dot = s.find('.');
    std::int64_t ps = std::stoll(s.substr(0, dot)) * 1000;
    if (dot != std::string::npos) {
        std::string f = s.substr(dot + 1);
        if (f.size() > 3) throw std::invalid_argument("clock below 1 ps resolution: " + s);
        f.resize(3, '0');
        ps += std::stoll(f);
    }
    return ps;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

bool wild(const std::string& pattern, const std::string& value) { return pattern == "*" || pattern == value; }

const char* const csv_header =
    "model,framework,precision,strategy,rf,clock_ns,lut,ff,dsp,bram,latency_cycles,latency_us,sim_cycles,feasible,"
    "exceeded,annotation";

}  // namespace

bool KnownDivergence::matches(const std::string& m, const perf::DesignPoint& dp) const {
    return wild(model, m) && wild(precision, dp.precision.to_string()) && wild(framework, perf::to_string(dp.framework)) &&
           wild(strategy, strategy_text(dp)) && wild(rf, rf_text(dp));
}

std::vector<KnownDivergence> default_divergences() {
    return {{"vww", "8:3", "snl", "*", "*", "framework-related issue (externally reported)"}};
}

std::vector<KnownDivergence> parse_divergences(const std::string& text) {
    std::vector<KnownDivergence> out;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        auto f = split_csv_line(line);
        if (f.size() != 6) throw std::invalid_argument("known divergence row needs 6 fields: " + line);
        out.push_back({f[0], f[1], f[2], f[3], f[4], f[5]});
    }
    return out;
}

std::vector<KnownDivergence> load_divergences(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw std::invalid_argument("cannot open " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return parse_divergences(s.str());
}

std::vector<std::pair<std::string, perf::DesignPoint>> SweepSpec::points() const {
    auto dedupe = [](auto v) {
        decltype(v) out;
        for (auto& x : v)
            if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
        return out;
    };
    const auto ms = dedupe(models);
    const auto ps = dedupe(precisions);
    auto rfs = dedupe(reuse_factors);
    std::sort(rfs.begin(), rfs.end());
    const bool with_snl = std::find(frameworks.begin(), frameworks.end(), perf::Framework::snl) != frameworks.end();
    const bool with_baked = std::find(frameworks.begin(), frameworks.end(), perf::Framework::baked) != frameworks.end();
    std::vector<perf::Strategy> ss;
    for (auto s : {perf::Strategy::latency, perf::Strategy::resource})
        if (std::find(strategies.begin(), strategies.end(), s) != strategies.end()) ss.push_back(s);

    std::vector<std::pair<std::string, perf::DesignPoint>> out;
    for (const auto& m : ms)
        for (const auto& p : ps) {
            if (with_snl) out.emplace_back(m, perf::DesignPoint::snl(p, clock_period_ps));
            if (!with_baked) continue;
            for (auto s : ss)
                for (int rf : rfs) {
                    if (rf < 1) throw perf::DesignPointError("reuse factor must be >= 1");
                    if (s == perf::Strategy::resource && rf == 1) continue;
                    out.emplace_back(m, perf::DesignPoint::baked(p, s, rf, clock_period_ps));
                }
        }
    return out;
}

std::vector<SweepRecord> run_sweep(const SweepSpec& spec) {
    const auto points = spec.points();
    std::map<std::string, ir::ModelGraph> graphs;
    for (const auto& [m, _] : points)
        if (!graphs.count(m)) graphs.emplace(m, ir::normalize_for_hardware(ir::resolve_model(m, spec.seed)));

    std::vector<SweepRecord> records(points.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(points.size());
    auto worker = [&] {
        for (std::size_t i; (i = next++) < points.size();) {
            try {
                const auto& [m, dp] = points[i];
                const auto& g = graphs.at(m);
                SweepRecord r;
                r.model = m;
                r.dp = dp;
                r.resources = perf::estimate_resources(g, dp, spec.calib);
                r.latency = perf::estimate_latency(g, dp, spec.calib);
                r.fit = perf::check_fit(r.resources, spec.profile);
                for (const auto& d : spec.divergences)
                    if (d.matches(m, dp)) {
                        r.annotation = d.annotation;
                        break;
                    }
                if (spec.simulate && dp.framework == perf::Framework::snl) {
                    sim::SimConfig sc;
                    sc.fifo_depth = 0;
                    auto pipe = sim::Pipeline::build(g, dp, sc, spec.calib);
                    std::vector<std::int64_t> x(pipe.input_elements(), 0);
                    r.sim_cycles = pipe.simulate(x).latency_cycles;
                }
                records[i] = std::move(r);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    unsigned n = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    n = std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(1, points.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error(points[i].first + " " + points[i].second.label() + ": " + errors[i]);
    return records;
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "md" || s == "markdown") return ReportFormat::markdown;
    if (s == "plotdata" || s == "json") return ReportFormat::plotdata;
    throw std::invalid_argument("unknown report format '" + s + "' (csv|md|plotdata)");
}

std::string bar_label(const perf::DesignPoint& dp) {
    if (dp.framework == perf::Framework::snl) return "SNL";
    return std::string(*dp.strategy == perf::Strategy::latency ? "L" : "R") + "-RF" + std::to_string(dp.reuse_factor);
}

std::string render_csv(const std::vector<SweepRecord>& records) {
    std::ostringstream o;
    o << csv_header << "\n";
    for (const auto& r : records) {
        o << csv_field(r.model) << "," << perf::to_string(r.dp.framework) << "," << r.dp.precision.to_string() << ","
          << strategy_text(r.dp) << "," << rf_text(r.dp) << "," << ns_text(r.dp.clock_period_ps) << "," << r.resources.lut
          << "," << r.resources.ff << "," << r.resources.dsp << "," << r.resources.bram << "," << r.latency.cycles << ","
          << r.latency.microseconds_text() << "," << (r.sim_cycles ? std::to_string(*r.sim_cycles) : "") << ","
          << (r.feasible() ? 1 : 0) << "," << r.fit.summary() << "," << csv_field(r.annotation) << "\n";
    }
    return o.str();
}

std::vector<SweepRecord> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != csv_header) throw std::invalid_argument("sweep csv: unexpected header");
    std::vector<SweepRecord> out;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 16) throw std::invalid_argument("sweep csv row " + std::to_string(row) + ": expected 16 fields");
        try {
            SweepRecord r;
            r.model = f[0];
            const auto fw = perf::parse_framework(f[1]);
            const auto prec = fx::parse_precision(f[2]);
            const auto clock = parse_ns(f[5]);
            r.dp = fw == perf::Framework::snl ? perf::DesignPoint::snl(prec, clock)
                                              : perf::DesignPoint::baked(prec, perf::parse_strategy(f[3]), std::stoi(f[4]), clock);
            r.resources.lut = std::stoll(f[6]);
            r.resources.ff = std::stoll(f[7]);
            r.resources.dsp = std::stoll(f[8]);
            r.resources.bram = std::stoll(f[9]);
            r.latency.cycles = std::stoll(f[10]);
            r.latency.clock_period_ps = clock;
            if (r.latency.microseconds_text() != f[11])
                throw std::invalid_argument("latency_us " + f[11] + " disagrees with cycles x clock");
            if (!f[12].empty()) r.sim_cycles = std::stoll(f[12]);
            if (!f[14].empty()) {
                std::istringstream ex(f[14]);
                std::string name;
                while (std::getline(ex, name, ';')) r.fit.exceeded.push_back({name, 0, 0});
            }
            r.annotation = f[15];
            if (r.feasible() != (f[13] == "1")) throw std::invalid_argument("feasible flag disagrees with exceeded/annotation");
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::invalid_argument("sweep csv row " + std::to_string(row) + ": " + e.what());
        }
    }
    return out;
}

namespace {

// Groups in first-seen order, bars in SNL / L-RF / R-RF order.
std::vector<std::vector<const SweepRecord*>> grouped(const std::vector<SweepRecord>& records) {
    std::vector<std::pair<std::string, std::vector<const SweepRecord*>>> groups;
    for (const auto& r : records) {
        const std::string key = r.model + "|" + r.dp.precision.to_string();
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = std::prev(groups.end());
        }
        it->second.push_back(&r);
    }
    auto rank = [](const SweepRecord* r) {
        const int fw = r->dp.framework == perf::Framework::snl ? 0 : (*r->dp.strategy == perf::Strategy::latency ? 1 : 2);
        return std::pair{fw, r->dp.reuse_factor};
    };
    std::vector<std::vector<const SweepRecord*>> out;
    for (auto& [_, g] : groups) {
        std::stable_sort(g.begin(), g.end(), [&](auto a, auto b) { return rank(a) < rank(b); });
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

std::string render_markdown(const std::vector<SweepRecord>& records) {
    std::ostringstream o;
    o << "# Design-space sweep\n";
    for (const auto& g : grouped(records)) {
        o << "\n## " << g.front()->model << " <" << g.front()->dp.precision.to_string() << ">\n\n"
          << "| design point | LUT | FF | DSP | BRAM | latency (cycles) | latency (us) | status |\n"
          << "|---|---:|---:|---:|---:|---:|---:|---|\n";
        for (const auto* r : g) {
            std::string status = "ok";
            if (!r->fit.fits()) status = "exceeds " + r->fit.summary();
            if (!r->annotation.empty()) status = (r->fit.fits() ? "" : status + "; ") + r->annotation;
            o << "| " << bar_label(r->dp) << " | " << r->resources.lut << " | " << r->resources.ff << " | "
              << r->resources.dsp << " | " << r->resources.bram << " | " << r->latency.cycles << " | "
              << r->latency.microseconds_text() << " | " << status << " |\n";
        }
    }
    return o.str();
}

std::string render_plotdata(const std::vector<SweepRecord>& records) {
    using nlohmann::ordered_json;
    ordered_json doc;
    doc["format"] = "snl-plotdata-1";
    doc["metrics"] = {"lut", "ff", "dsp", "bram", "latency_us"};
    doc["bar_order"] = "SNL, then latency strategy by RF ascending, then resource strategy by RF ascending";
    auto groups = ordered_json::array();
    for (const auto& g : grouped(records)) {
        ordered_json jg;
        jg["model"] = g.front()->model;
        jg["precision"] = g.front()->dp.precision.to_string();
        auto bars = ordered_json::array();
        for (const auto* r : g) {
            ordered_json b;
            b["label"] = bar_label(r->dp);
            b["framework"] = perf::to_string(r->dp.framework);
            b["strategy"] = r->dp.strategy ? ordered_json(perf::to_string(*r->dp.strategy)) : ordered_json(nullptr);
            b["rf"] = r->dp.framework == perf::Framework::snl ? ordered_json(nullptr) : ordered_json(r->dp.reuse_factor);
            b["feasible"] = r->feasible();
            if (r->feasible()) {
                b["lut"] = r->resources.lut;
                b["ff"] = r->resources.ff;
                b["dsp"] = r->resources.dsp;
                b["bram"] = r->resources.bram;
                b["latency_cycles"] = r->latency.cycles;
                b["latency_us"] = r->latency.microseconds();
            } else {
                for (const char* k : {"lut", "ff", "dsp", "bram", "latency_cycles", "latency_us"}) b[k] = nullptr;
            }
            auto ex = ordered_json::array();
            for (const auto& e : r->fit.exceeded) ex.push_back(e.resource);
            b["exceeded"] = std::move(ex);
            b["annotation"] = r->annotation.empty() ? ordered_json(nullptr) : ordered_json(r->annotation);
            bars.push_back(std::move(b));
        }
        jg["bars"] = std::move(bars);
        groups.push_back(std::move(jg));
    }
    doc["groups"] = std::move(groups);
    return doc.dump(2) + "\n";
}

std::string render(const std::vector<SweepRecord>& records, ReportFormat fmt) {
    if (records.empty()) throw std::invalid_argument("no records to report");
    switch (fmt) {
    case ReportFormat::csv: return render_csv(records);
    case ReportFormat::markdown: return render_markdown(records);
    case ReportFormat::plotdata: return render_plotdata(records);
    }
    return {};
}

}  // namespace snlforge::bench
