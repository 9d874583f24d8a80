#pragma once

// Cycle-level model of the generated streaming pipeline. Stages are
// store-and-forward: a stage buffers its whole input tensor, computes, then
// emits one element every II cycles after its fill depth. FIFOs between
// stages have finite capacity, so a full FIFO stalls the producer.
//
// Per cycle, every push/pop decision is taken against the occupancy seen at
// the start of the cycle, and a pushed element becomes visible next cycle.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snlforge/codegen.hpp"
#include "snlforge/model_ir.hpp"
#include "snlforge/perf_model.hpp"

namespace snlforge::sim {

class BusyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AddressError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct SimConfig {
    std::int64_t fifo_depth = 2;  // elements; 0 = unbounded
    bool trace = false;           // record per-cycle FIFO occupancy
    bool allow_empty = true;      // a graph with no stages becomes an identity pipeline
};

struct RegisterWrite {
    std::uint64_t address = 0;
    std::int64_t value = 0;  // raw word; only the low X bits are kept
};

struct StageModel {
    codegen::StageDesc desc;
    std::int64_t ii = 1;
    std::int64_t fill = 1;
};

struct FifoStats {
    std::string name;
    std::int64_t capacity = 0;  // 0 = unbounded
    std::int64_t max_occupancy = 0;
    std::int64_t pushes = 0;
};

struct InferenceResult {
    std::vector<std::int64_t> output;
    std::int64_t latency_cycles = 0;
    std::vector<FifoStats> fifos;
    std::string trace_csv;  // "cycle,fifo,occupancy" rows when tracing
};

class Pipeline {
public:
    static Pipeline build(const ir::ModelGraph& graph, const perf::DesignPoint& dp, const SimConfig& cfg = {},
                          const perf::Calibration& calib = {});
    // Uses the project's stage table; timing follows an SNL design point.
    static Pipeline build(const codegen::GeneratedProject& project, const SimConfig& cfg = {},
                          const perf::Calibration& calib = {});

    const std::string& model() const { return model_; }
    const fx::FixedFormat& precision() const { return fmt_; }
    const std::vector<StageModel>& stages() const { return stages_; }
    std::size_t input_elements() const { return static_cast<std::size_t>(n_input_); }
    std::size_t output_elements() const;
    std::uint64_t register_words() const { return regs_.size(); }
    std::span<const std::int64_t> registers() const { return regs_; }
    std::int64_t clock_period_ps() const { return clock_ps_; }

    // Digest of the stage table and FIFO configuration. Weights are excluded,
    // so it stays fixed across reloads.
    std::string structure_digest() const;

    // Applies all writes or none. Rejected while an inference is running.
    std::size_t load_weights(std::span<const RegisterWrite> writes);
    std::size_t load_image(std::span<const std::int64_t> words);

    void start(std::span<const std::int64_t> input);
    // Advances one cycle. Returns false once the inference has completed.
    bool step();
    bool busy() const { return active_; }
    InferenceResult finish();

    InferenceResult simulate(std::span<const std::int64_t> input) {
        start(input);
        return finish();
    }

private:
    struct Fifo {
        std::string name;
        std::int64_t capacity = 0;
        std::int64_t occupancy = 0;
        std::int64_t max_occupancy = 0;
        std::int64_t pushes = 0;
    };
    struct StageState {
        std::int64_t received = 0;
        std::vector<std::int64_t> inputs;
        std::vector<std::int64_t> outputs;
        bool computed = false;
        std::int64_t emitted = 0;
        std::int64_t next_emit = 0;
    };

    Pipeline() = default;
    void init_fifos(const SimConfig& cfg);

    std::string model_;
    fx::FixedFormat fmt_;
    std::int64_t clock_ps_ = 10000;
    std::int64_t n_input_ = 0;
    std::vector<StageModel> stages_;
    std::vector<Fifo> fifos_;  // fifos_[k] feeds stage k
    std::vector<std::int64_t> regs_;
    bool trace_ = false;

    bool active_ = false;
    std::int64_t cycle_ = 0;
    std::int64_t sent_ = 0;
    std::int64_t first_accept_ = -1;
    std::int64_t last_output_ = -1;
    std::vector<std::int64_t> input_;
    std::vector<StageState> state_;
    std::string trace_csv_;
};

}  // namespace snlforge::sim
