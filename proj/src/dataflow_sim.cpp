#include "snlforge/dataflow_sim.hpp"

#include <algorithm>
#include <sstream>

namespace snlforge::sim {

namespace {

std::int64_t wrap_to(std::int64_t v, int bits) {
    if (bits >= 64) return v;
    const auto shift = 64 - bits;
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(v) << shift) >> shift;
}

}  // namespace

Pipeline Pipeline::build(const ir::ModelGraph& graph, const perf::DesignPoint& dp, const SimConfig& cfg,
                         const perf::Calibration& calib) {
    dp.validate();
    Pipeline p;
    const auto g = ir::normalize_for_hardware(graph);
    codegen::CodegenConfig cc;
    cc.precision = dp.precision;
    const auto map = codegen::emit_register_map(g, cc);
    p.model_ = g.name();
    p.fmt_ = dp.precision;
    p.clock_ps_ = dp.clock_period_ps;
    p.n_input_ = g.input_shape().elements();
    for (auto& d : codegen::lower(g, map)) {
        const auto t = perf::stage_timing(d, dp, calib);
        p.stages_.push_back({std::move(d), t.ii, t.fill});
    }
    if (p.stages_.empty() && !cfg.allow_empty) throw std::invalid_argument("graph has no hardware stages");
    p.regs_.assign(map.total_words(), 0);
    p.init_fifos(cfg);
    return p;
}

Pipeline Pipeline::build(const codegen::GeneratedProject& project, const SimConfig& cfg, const perf::Calibration& calib) {
    const auto table = project.stage_table();
    const auto dp = perf::DesignPoint::snl(table.precision, table.clock_period_ps);
    Pipeline p;
    p.model_ = table.model;
    p.fmt_ = table.precision;
    p.clock_ps_ = table.clock_period_ps;
    p.n_input_ = table.input.elements();
    for (const auto& d : table.stages) {
        const auto t = perf::stage_timing(d, dp, calib);
        p.stages_.push_back({d, t.ii, t.fill});
    }
    if (p.stages_.empty() && !cfg.allow_empty) throw std::invalid_argument("project has no hardware stages");
    p.regs_.assign(table.register_words, 0);
    p.init_fifos(cfg);
    return p;
}

void Pipeline::init_fifos(const SimConfig& cfg) {
    if (cfg.fifo_depth < 0) throw std::invalid_argument("fifo depth must be >= 0");
    trace_ = cfg.trace;
    fifos_.clear();
    for (std::size_t k = 0; k < stages_.size(); ++k)
        fifos_.push_back({k == 0 ? "input" : stages_[k - 1].desc.name + "->" + stages_[k].desc.name, cfg.fifo_depth, 0, 0, 0});
}

std::size_t Pipeline::output_elements() const {
    return static_cast<std::size_t>(stages_.empty() ? n_input_ : stages_.back().desc.output.elements());
}

std::string Pipeline::structure_digest() const {
    codegen::StageTable t;
    t.model = model_;
    t.precision = fmt_;
    t.clock_period_ps = clock_ps_;
    t.register_words = regs_.size();
    t.input = stages_.empty() ? ir::TensorShape::flat(n_input_) : stages_.front().desc.input;
    std::ostringstream extra;
    for (const auto& s : stages_) {
        t.stages.push_back(s.desc);
        extra << s.ii << "/" << s.fill << ";";
    }
    for (const auto& f : fifos_) extra << f.name << ":" << f.capacity << ";";
    return codegen::sha256_hex(codegen::stage_table_json(t) + extra.str());
}

std::size_t Pipeline::load_weights(std::span<const RegisterWrite> writes) {
    if (active_) throw BusyError("weight load rejected: inference in progress");
    for (const auto& w : writes)
        if (w.address >= regs_.size())
            throw AddressError("register address " + std::to_string(w.address) + " out of range (register map has " +
                               std::to_string(regs_.size()) + " words)");
    for (const auto& w : writes) regs_[w.address] = wrap_to(w.value, fmt_.total_bits);
    return writes.size();
}

std::size_t Pipeline::load_image(std::span<const std::int64_t> words) {
    if (words.size() > regs_.size())
        throw AddressError("weight image has " + std::to_string(words.size()) + " words, register map has " +
                           std::to_string(regs_.size()));
    std::vector<RegisterWrite> w;
    w.reserve(words.size());
    for (std::size_t a = 0; a < words.size(); ++a) w.push_back({a, words[a]});
    return load_weights(w);
}

void Pipeline::start(std::span<const std::int64_t> input) {
    if (active_) throw BusyError("inference already in progress");
    if (static_cast<std::int64_t>(input.size()) != n_input_)
        throw std::invalid_argument("input has " + std::to_string(input.size()) + " elements, pipeline expects " +
                                    std::to_string(n_input_));
    input_.assign(input.begin(), input.end());
    for (auto& v : input_) v = wrap_to(v, fmt_.total_bits);
    state_.assign(stages_.size(), {});
    for (std::size_t k = 0; k < stages_.size(); ++k) state_[k].inputs.reserve(static_cast<std::size_t>(stages_[k].desc.input.elements()));
    for (auto& f : fifos_) f.occupancy = f.max_occupancy = f.pushes = 0;
    cycle_ = 0;
    sent_ = 0;
    first_accept_ = -1;
    last_output_ = -1;
    trace_csv_ = trace_ ? "cycle,fifo,occupancy\n" : "";
    active_ = !stages_.empty();
}

bool Pipeline::step() {
    if (!active_) return false;
    const std::size_t S = stages_.size();
    std::vector<int> push(S, 0), pop(S, 0);
    auto has_room = [&](std::size_t f) { return fifos_[f].capacity == 0 || fifos_[f].occupancy < fifos_[f].capacity; };

    if (trace_)
        for (const auto& f : fifos_) trace_csv_ += std::to_string(cycle_) + "," + f.name + "," + std::to_string(f.occupancy) + "\n";

    // Source: one element per cycle into the input FIFO.
    if (sent_ < n_input_ && has_room(0)) {
        push[0] = 1;
        if (first_accept_ < 0) first_accept_ = cycle_;
    }

    bool done = false;
    for (std::size_t k = 0; k < S; ++k) {
        auto& st = state_[k];
        const auto& sm = stages_[k];
        // Pop one element; the value was produced upstream in an earlier cycle.
        if (st.received < sm.desc.input.elements() && fifos_[k].occupancy > 0) {
            pop[k] = 1;
            const std::int64_t idx = st.received++;
            if (k == 0)
                st.inputs.push_back(input_[static_cast<std::size_t>(idx)]);
            else
                st.inputs.push_back(state_[k - 1].outputs[static_cast<std::size_t>(idx)]);
            if (st.received == sm.desc.input.elements()) {
                st.outputs = codegen::execute_stage(sm.desc, st.inputs, regs_, fmt_);
                st.computed = true;
                st.next_emit = cycle_ + sm.fill;
            }
        } else if (st.computed && st.emitted < static_cast<std::int64_t>(st.outputs.size()) && cycle_ >= st.next_emit) {
            const bool sink = k + 1 == S;
            if (sink || has_room(k + 1)) {
                if (!sink) push[k + 1] = 1;
                ++st.emitted;
                st.next_emit = cycle_ + sm.ii;
                if (sink && st.emitted == static_cast<std::int64_t>(st.outputs.size())) {
                    last_output_ = cycle_;
                    done = true;
                }
            }
        }
    }

    if (push[0]) ++sent_;
    for (std::size_t f = 0; f < S; ++f) {
        auto& q = fifos_[f];
        q.occupancy += push[f] - pop[f];
        q.pushes += push[f];
        q.max_occupancy = std::max(q.max_occupancy, q.occupancy);
    }
    ++cycle_;
    if (done) active_ = false;
    return active_;
}

InferenceResult Pipeline::finish() {
    InferenceResult r;
    if (stages_.empty()) {
        r.output = input_;
        return r;
    }
    if (!active_ && last_output_ < 0) throw std::logic_error("no inference started");
    while (step()) {
    }
    r.output = state_.back().outputs;
    r.latency_cycles = last_output_ - first_accept_ + 1;
    for (const auto& f : fifos_) r.fifos.push_back({f.name, f.capacity, f.max_occupancy, f.pushes});
    r.trace_csv = std::move(trace_csv_);
    trace_csv_.clear();
    return r;
}

}  // namespace snlforge::sim
