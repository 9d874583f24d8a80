#pragma once

// Framework-neutral layer-chain IR, the "snlx-1" interchange container and
// the built-in benchmark architectures.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace snlforge::ir {

enum class Layout { flat, hwc };

struct TensorShape {
    std::vector<std::int64_t> dims;
    Layout layout = Layout::flat;

    static TensorShape flat(std::int64_t n);
    static TensorShape hwc(std::int64_t h, std::int64_t w, std::int64_t c);

    std::int64_t elements() const;
    std::int64_t height() const { return dims.at(0); }
    std::int64_t width() const { return dims.at(1); }
    std::int64_t channels() const { return dims.at(layout == Layout::flat ? 0 : 2); }
    // "(32, 32, 1)" / "(16,)"
    std::string to_string() const;

    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

enum class LayerKind { Dense, Conv2D, ReLU, Softmax, AveragePool2D, GlobalAveragePool2D, Dropout };
enum class Padding { valid, same };

std::string to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(const std::string& name);

struct DenseParams {
    std::int64_t units = 1;
};

struct Conv2DParams {
    std::int64_t filters = 1;
    std::int64_t kernel_h = 1, kernel_w = 1;
    std::int64_t stride_h = 1, stride_w = 1;
    Padding padding = Padding::valid;
};

struct PoolParams {
    std::int64_t pool_h = 2, pool_w = 2;
    std::int64_t stride_h = 2, stride_w = 2;
};

struct DropoutParams {
    double rate = 0.0;
};

using LayerParams = std::variant<std::monostate, DenseParams, Conv2DParams, PoolParams, DropoutParams>;

struct LayerSpec {
    int id = 0;
    std::string name;
    LayerKind kind = LayerKind::ReLU;
    LayerParams params;

    bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2D; }
    const DenseParams& dense() const { return std::get<DenseParams>(params); }
    const Conv2DParams& conv() const { return std::get<Conv2DParams>(params); }
    const PoolParams& pool() const { return std::get<PoolParams>(params); }
};

// Canonical element order: Dense kernel (in, out) row-major, Conv2D kernel
// (kh, kw, cin, cout) row-major, bias (out).
struct LayerWeights {
    std::vector<float> kernel;
    std::vector<float> bias;
};

using WeightSet = std::map<int, LayerWeights>;

struct LayerShapes {
    TensorShape input;
    TensorShape output;
};

class ModelError : public std::runtime_error {
public:
    enum class Kind { parse, unsupported_layer, weight_mismatch, shape, topology, unsupported_config };

    ModelError(Kind kind, const std::string& what, std::optional<int> layer_id = std::nullopt)
        : std::runtime_error(what), kind_(kind), layer_id_(layer_id) {}

    Kind kind() const { return kind_; }
    std::optional<int> layer_id() const { return layer_id_; }

private:
    Kind kind_;
    std::optional<int> layer_id_;
};

std::vector<LayerShapes> infer_shapes(const TensorShape& input, const std::vector<LayerSpec>& layers);

// Expected (kernel, bias) element counts for a parameterized layer.
std::pair<std::int64_t, std::int64_t> weight_counts(const LayerSpec& layer, const TensorShape& input);

// Conv2D "same" padding offsets (top, left), TensorFlow convention.
std::pair<std::int64_t, std::int64_t> same_padding(const Conv2DParams& p, const TensorShape& input);

// Immutable, validated linear chain. Construction runs shape inference and
// weight binding checks; a ModelGraph that exists is valid.
class ModelGraph {
public:
    ModelGraph(std::string name, TensorShape input, std::vector<LayerSpec> layers, WeightSet weights);

    const std::string& name() const { return name_; }
    const TensorShape& input_shape() const { return input_; }
    const TensorShape& output_shape() const;
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const WeightSet& weights() const { return weights_; }
    const LayerWeights& weights_for(int layer_id) const;
    const std::vector<LayerShapes>& shapes() const { return shapes_; }
    std::int64_t parameter_count() const;

    // Copy with the weight set replaced (validated).
    ModelGraph with_weights(WeightSet weights) const;

private:
    std::string name_;
    TensorShape input_;
    std::vector<LayerSpec> layers_;
    WeightSet weights_;
    std::vector<LayerShapes> shapes_;
};

inline std::vector<LayerShapes> infer_shapes(const ModelGraph& g) { return g.shapes(); }

// Drops Dropout layers and a final Softmax. Softmax anywhere else is rejected.
ModelGraph normalize_for_hardware(const ModelGraph& graph);

constexpr std::uint64_t default_weight_seed = 42;

std::vector<std::string> builtin_names();
// Jet, Anomaly, KWS, VWW with uniform [-0.5, 0.5] weights from `seed`.
std::vector<ModelGraph> builtin_benchmarks(std::uint64_t seed = default_weight_seed);
ModelGraph builtin(const std::string& name, std::uint64_t seed = default_weight_seed);

// Interchange format: `<stem>.snlx.json` manifest plus `<stem>.bin` blob of
// little-endian float32 values.
ModelGraph load_model(const std::filesystem::path& manifest);
std::filesystem::path save_model(const ModelGraph& graph, const std::filesystem::path& dir,
                                 const std::string& stem = "");

// Little-endian float32 blob helpers shared by the model and dataset containers.
void append_f32(std::string& blob, const std::vector<float>& values);
std::vector<float> read_f32(const std::string& blob, std::uint64_t offset, std::uint64_t length,
                            const std::string& what, std::optional<int> layer = std::nullopt);
std::string read_file(const std::filesystem::path& p);

// Either a builtin name or a manifest path.
ModelGraph resolve_model(const std::string& name_or_path, std::uint64_t seed = default_weight_seed);

}  // namespace snlforge::ir
