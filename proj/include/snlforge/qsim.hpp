#pragma once

// Floating-point reference inference and the bit-exact fixed-point engine
// that generated hardware has to reproduce.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "snlforge/fixed_point.hpp"
#include "snlforge/model_ir.hpp"

namespace snlforge::qsim {

std::vector<double> run_float(const ir::ModelGraph& graph, std::span<const double> input);

struct QuantizedResult {
    std::vector<double> values;
    std::vector<std::int64_t> raw;
    fx::FixedFormat format;
};

// Follows hardware semantics: Dropout is skipped and a final Softmax is
// truncated, so outputs are the pre-softmax scores.
QuantizedResult run_quantized(const ir::ModelGraph& graph, std::span<const double> input,
                              const fx::FixedFormat& fmt);

// Same, starting from inputs already in raw form.
QuantizedResult run_quantized_raw(const ir::ModelGraph& graph, std::span<const std::int64_t> input,
                                  const fx::FixedFormat& fmt);

std::vector<std::int64_t> quantize_input(std::span<const double> input, const fx::FixedFormat& fmt);

enum class LabelKind { class_index, binary };

struct Dataset {
    ir::TensorShape input_shape;
    LabelKind label_kind = LabelKind::class_index;
    std::vector<std::vector<double>> inputs;
    std::vector<double> labels;
};

Dataset load_dataset(const std::filesystem::path& manifest);
std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& dir, const std::string& stem);

struct EvalMetrics {
    std::optional<double> accuracy;
    std::optional<double> auc;
    double max_abs_error = 0.0;
    std::size_t samples = 0;
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

// Mann-Whitney rank statistic with midranks for ties. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

// Scalar anomaly/positive-class score used for AUC: the single output, the
// mean squared reconstruction error for autoencoders, else the last output.
double score(std::span<const double> input, std::span<const double> output);

// `fmt` empty selects the float reference. max_abs_error compares against
// the float reference of the normalized graph.
EvalMetrics evaluate(const ir::ModelGraph& graph, const Dataset& data,
                     const std::optional<fx::FixedFormat>& fmt, unsigned threads = 0);

}  // namespace snlforge::qsim
