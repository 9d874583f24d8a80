// snlforge command-line front end.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "snlforge/bench_harness.hpp"
#include "snlforge/codegen.hpp"
#include "snlforge/dataflow_sim.hpp"
#include "snlforge/perf_model.hpp"
#include "snlforge/qsim.hpp"
#include "snlforge/random.hpp"
#include "snlforge/stream_server.hpp"

namespace fs = std::filesystem;
using namespace snlforge;

namespace {

std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::int64_t ns_to_ps(double ns) {
    const auto ps = static_cast<std::int64_t>(std::llround(ns * 1000.0));
    if (ps <= 0) throw std::invalid_argument("clock period must be positive");
    return ps;
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::string join(const std::vector<std::int64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::vector<double>> seeded_inputs(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(seeded_vector(n, seed + i, -1.0, 1.0));
    return out;
}

perf::Calibration calibration(const std::string& path) {
    return path.empty() ? perf::Calibration{} : perf::Calibration::load(path);
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snlforge: streaming neural-network hardware generator and estimator"};
    app.require_subcommand(1);

    // model
    auto* model = app.add_subcommand("model", "inspect or export models");
    model->require_subcommand(1);
    std::string model_name, out_dir, stem;
    std::uint64_t seed = ir::default_weight_seed;
    auto* export_cmd = model->add_subcommand("export-builtin", "write a builtin model in the interchange format");
    export_cmd->add_option("name", model_name, "jet|anomaly|kws|vww")->required();
    export_cmd->add_option("--out", out_dir, "output directory")->required();
    export_cmd->add_option("--seed", seed, "weight seed");
    export_cmd->add_option("--stem", stem, "file stem (default: model name)");
    auto* info_cmd = model->add_subcommand("info", "print layers, shapes and parameter counts");
    info_cmd->add_option("model", model_name, "builtin name or manifest path")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "accuracy / AUC on a dataset, float or fixed point");
    std::string data_path, precision_text;
    unsigned threads = 0;
    eval->add_option("model", model_name)->required();
    eval->add_option("--data", data_path, "dataset manifest")->required();
    eval->add_option("--precision", precision_text, "X:Y (omit for the float reference)");
    eval->add_option("--threads", threads);

    // generate
    auto* gen = app.add_subcommand("generate", "emit the streaming HLS project");
    double clock_ns = 10.0;
    std::string part = "xczu9eg-ffvb1156-2-e", project_name;
    std::size_t tb_samples = 3;
    gen->add_option("model", model_name)->required();
    gen->add_option("--precision", precision_text, "X:Y")->default_val("16:6");
    gen->add_option("--clock-ns", clock_ns, "clock period in ns")->default_val(10.0);
    gen->add_option("--part", part, "target part")->default_val(part);
    gen->add_option("--name", project_name, "project name");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--testbench-samples", tb_samples, "seeded testbench inputs")->default_val(3);
    gen->add_option("--seed", seed, "weight and input seed");

    // simulate
    auto* simc = app.add_subcommand("simulate", "cycle-level pipeline simulation");
    std::string project_dir, trace_path;
    std::int64_t fifo_depth = 2;
    std::size_t samples = 1;
    simc->add_option("model", model_name, "builtin or manifest (or use --project)");
    simc->add_option("--project", project_dir, "generated project directory");
    simc->add_option("--precision", precision_text, "X:Y")->default_val("16:6");
    simc->add_option("--fifo-depth", fifo_depth, "FIFO capacity, 0 = unbounded")->default_val(2);
    simc->add_option("--samples", samples, "seeded inputs to run")->default_val(1);
    simc->add_option("--seed", seed);
    simc->add_option("--trace", trace_path, "write per-cycle FIFO occupancy CSV");

    // estimate
    auto* est = app.add_subcommand("estimate", "resource and latency estimate for one design point");
    std::string framework = "snl", strategy = "latency", profile_name = "zcu102", calib_path;
    int rf = 1;
    est->add_option("model", model_name)->required();
    est->add_option("--framework", framework, "snl|baked")->default_val("snl");
    est->add_option("--precision", precision_text, "X:Y")->default_val("16:6");
    est->add_option("--strategy", strategy, "latency|resource (baked)")->default_val("latency");
    est->add_option("--rf", rf, "reuse factor (baked)")->default_val(1);
    est->add_option("--clock-ns", clock_ns)->default_val(10.0);
    est->add_option("--profile", profile_name, "device profile name or path")->default_val("zcu102");
    est->add_option("--calib", calib_path, "calibration file");

    // serve
    auto* serve = app.add_subcommand("serve", "TCP virtual board");
    std::uint16_t port = net::default_port;
    std::string host = "127.0.0.1";
    serve->add_option("model", model_name)->required();
    serve->add_option("--precision", precision_text, "X:Y")->default_val("16:6");
    serve->add_option("--port", port, "listen port")->default_val(net::default_port);
    serve->add_option("--host", host, "bind address")->default_val("127.0.0.1");
    serve->add_option("--fifo-depth", fifo_depth)->default_val(2);

    // bench
    auto* bench = app.add_subcommand("bench", "design-space sweep");
    bench->require_subcommand(1);
    auto* run = bench->add_subcommand("run", "evaluate the sweep and write sweep.csv, sweep.md, plotdata.json");
    std::string models = "jet,anomaly,kws,vww", precisions = "32:16,16:6,8:3", frameworks = "snl,baked",
                strategies = "latency,resource", rfs = "1,2,4,8", divergences_path;
    bool simulate = false;
    run->add_option("--models", models)->default_val(models);
    run->add_option("--precisions", precisions)->default_val(precisions);
    run->add_option("--frameworks", frameworks)->default_val(frameworks);
    run->add_option("--strategies", strategies)->default_val(strategies);
    run->add_option("--rf", rfs)->default_val(rfs);
    run->add_option("--clock-ns", clock_ns)->default_val(10.0);
    run->add_option("--profile", profile_name)->default_val("zcu102");
    run->add_option("--calib", calib_path);
    run->add_option("--divergences", divergences_path, "known-divergences CSV");
    run->add_option("--threads", threads);
    run->add_option("--out", out_dir)->required();
    run->add_flag("--simulate", simulate, "cross-check SNL latency with the simulator");
    auto* report = bench->add_subcommand("report", "render a sweep CSV");
    std::string format = "md", in_path, out_path;
    report->add_option("--format", format, "csv|md|plotdata")->default_val("md");
    report->add_option("--in", in_path, "sweep.csv (or the --out directory of bench run)")->required();
    report->add_option("--out", out_path, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*export_cmd) {
            const auto g = ir::builtin(model_name, seed);
            std::cout << ir::save_model(g, out_dir, stem).string() << "\n";
        } else if (*info_cmd) {
            const auto g = ir::resolve_model(model_name, seed);
            std::cout << g.name() << " input " << g.input_shape().to_string() << "\n";
            for (std::size_t i = 0; i < g.layers().size(); ++i) {
                const auto& l = g.layers()[i];
                std::cout << "  " << l.id << " " << l.name << " " << ir::to_string(l.kind) << " "
                          << g.shapes()[i].input.to_string() << " -> " << g.shapes()[i].output.to_string() << "\n";
            }
            std::cout << "parameters " << g.parameter_count() << "\n";
        } else if (*eval) {
            const auto g = ir::resolve_model(model_name, seed);
            const auto data = qsim::load_dataset(data_path);
            std::optional<fx::FixedFormat> fmt;
            if (!precision_text.empty()) fmt = fx::parse_precision(precision_text);
            const auto m = qsim::evaluate(g, data, fmt, threads);
            std::cout << "samples " << m.samples << "\n";
            if (m.accuracy) std::cout << "accuracy " << *m.accuracy << "\n";
            if (m.auc) std::cout << "auc " << *m.auc << "\n";
            std::cout << "max_abs_error " << m.max_abs_error << "\n";
        } else if (*gen) {
            const auto g = ir::normalize_for_hardware(ir::resolve_model(model_name, seed));
            codegen::CodegenConfig cfg;
            cfg.precision = fx::parse_precision(precision_text);
            cfg.clock_period_ps = ns_to_ps(clock_ns);
            cfg.part = part;
            cfg.project_name = project_name;
            auto p = codegen::generate(g, cfg);
            const auto inputs = seeded_inputs(static_cast<std::size_t>(g.input_shape().elements()), tb_samples, seed);
            codegen::attach_testbench(p, codegen::emit_testbench(g, cfg, inputs));
            p.write_to(out_dir);
            std::cout << p.files().size() + 1 << " files written to " << out_dir << "\n";
        } else if (*simc) {
            sim::SimConfig sc;
            sc.fifo_depth = fifo_depth;
            sc.trace = !trace_path.empty();
            std::optional<sim::Pipeline> pipe;
            std::vector<std::int64_t> image;
            if (!project_dir.empty()) {
                const auto proj = codegen::GeneratedProject::read_from(project_dir);
                pipe.emplace(sim::Pipeline::build(proj, sc));
                std::istringstream w(proj.file("tb/weights.dat"));
                for (std::int64_t v; w >> v;) image.push_back(v);
            } else {
                if (model_name.empty()) throw std::invalid_argument("give a model or --project");
                const auto g = ir::normalize_for_hardware(ir::resolve_model(model_name, seed));
                const auto fmt = fx::parse_precision(precision_text);
                pipe.emplace(sim::Pipeline::build(g, perf::DesignPoint::snl(fmt), sc));
                codegen::CodegenConfig cfg;
                cfg.precision = fmt;
                image = codegen::weight_image(g, codegen::emit_register_map(g, cfg), fmt);
            }
            std::cout << pipe->load_image(image) << " register words loaded\n";
            std::cout << "structure " << pipe->structure_digest() << "\n";
            std::string trace;
            for (const auto& x : seeded_inputs(pipe->input_elements(), samples, seed)) {
                const auto r = pipe->simulate(qsim::quantize_input(x, pipe->precision()));
                std::cout << "latency " << r.latency_cycles << " cycles, output " << join(r.output) << "\n";
                trace += r.trace_csv;
            }
            if (!trace_path.empty()) write_text(trace_path, trace);
        } else if (*est) {
            const auto g = ir::resolve_model(model_name, seed);
            const auto fmt = fx::parse_precision(precision_text);
            const auto fw = perf::parse_framework(framework);
            const auto dp = fw == perf::Framework::snl ? perf::DesignPoint::snl(fmt, ns_to_ps(clock_ns))
                                                       : perf::DesignPoint::baked(fmt, perf::parse_strategy(strategy), rf, ns_to_ps(clock_ns));
            const auto calib = calibration(calib_path);
            const auto res = perf::estimate_resources(g, dp, calib);
            const auto lat = perf::estimate_latency(g, dp, calib);
            const auto fit = perf::check_fit(res, perf::DeviceProfile::resolve(profile_name));
            std::cout << g.name() << " " << dp.label() << "\n";
            for (const auto& l : res.layers)
                std::cout << "  " << l.name << ": mult " << l.multipliers << " lut " << l.lut << " ff " << l.ff << " dsp "
                          << l.dsp << " bram " << l.bram << "\n";
            std::cout << "  infrastructure: lut " << res.infrastructure.lut << " ff " << res.infrastructure.ff << " dsp "
                      << res.infrastructure.dsp << " bram " << res.infrastructure.bram << "\n"
                      << "total lut " << res.lut << " ff " << res.ff << " dsp " << res.dsp << " bram" << res.bram_block_kb
                      << "k " << res.bram << "\n"
                      << "latency " << lat.cycles << " cycles = " << lat.microseconds_text() << " us\n"
                      << (fit.fits() ? "fits" : "exceeds " + fit.summary()) << "\n";
        } else if (*serve) {
            const auto g = ir::normalize_for_hardware(ir::resolve_model(model_name, seed));
            const auto fmt = fx::parse_precision(precision_text);
            sim::SimConfig sc;
            sc.fifo_depth = fifo_depth;
            net::ServerConfig cfg;
            cfg.host = host;
            cfg.port = port;
            net::Server server(cfg, [g, fmt, sc] { return sim::Pipeline::build(g, perf::DesignPoint::snl(fmt), sc); });
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            server.start();
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
        } else if (*run) {
            bench::SweepSpec spec;
            spec.models = split(models);
            spec.precisions.clear();
            for (const auto& p : split(precisions)) spec.precisions.push_back(fx::parse_precision(p));
            spec.frameworks.clear();
            for (const auto& f : split(frameworks)) spec.frameworks.push_back(perf::parse_framework(f));
            spec.strategies.clear();
            for (const auto& s : split(strategies)) spec.strategies.push_back(perf::parse_strategy(s));
            spec.reuse_factors.clear();
            for (const auto& r : split(rfs)) spec.reuse_factors.push_back(std::stoi(r));
            spec.clock_period_ps = ns_to_ps(clock_ns);
            spec.profile = perf::DeviceProfile::resolve(profile_name);
            spec.calib = calibration(calib_path);
            if (!divergences_path.empty()) spec.divergences = bench::load_divergences(divergences_path);
            spec.simulate = simulate;
            spec.threads = threads;
            const auto records = bench::run_sweep(spec);
            write_text(fs::path(out_dir) / "sweep.csv", bench::render_csv(records));
            write_text(fs::path(out_dir) / "sweep.md", bench::render_markdown(records));
            write_text(fs::path(out_dir) / "plotdata.json", bench::render_plotdata(records));
            std::size_t infeasible = 0, mismatched = 0;
            for (const auto& r : records) {
                infeasible += !r.feasible();
                if (r.sim_cycles && *r.sim_cycles != r.latency.cycles) {
                    ++mismatched;
                    std::cerr << "warning: " << r.model << " " << r.dp.label() << ": simulated " << *r.sim_cycles
                              << " cycles, estimated " << r.latency.cycles << "\n";
                }
            }
            std::cout << records.size() << " design points, " << infeasible << " infeasible, written to " << out_dir << "\n";
            return mismatched ? 1 : 0;
        } else if (*report) {
            fs::path in = in_path;
            if (fs::is_directory(in)) in /= "sweep.csv";
            std::ifstream f(in, std::ios::binary);
            if (!f) throw std::runtime_error("cannot open " + in.string());
            std::ostringstream s;
            s << f.rdbuf();
            const auto text = bench::render(bench::parse_csv(s.str()), bench::parse_report_format(format));
            if (out_path.empty())
                std::cout << text;
            else
                write_text(out_path, text);
        }
    } catch (const ir::ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
