#include "snlforge/model_ir.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "snlforge/random.hpp"

namespace snlforge::ir {

using nlohmann::json;

TensorShape TensorShape::flat(std::int64_t n) { return {{n}, Layout::flat}; }

TensorShape TensorShape::hwc(std::int64_t h, std::int64_t w, std::int64_t c) {
    return {{h, w, c}, Layout::hwc};
}

std::int64_t TensorShape::elements() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string TensorShape::to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    if (dims.size() == 1) s += ",";
    return s + ")";
}

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Softmax: return "Softmax";
    case LayerKind::AveragePool2D: return "AveragePool2D";
    case LayerKind::GlobalAveragePool2D: return "GlobalAveragePool2D";
    case LayerKind::Dropout: return "Dropout";
    }
    return "?";
}

std::optional<LayerKind> parse_layer_kind(const std::string& name) {
    static const std::map<std::string, LayerKind> kinds = {
        {"Dense", LayerKind::Dense},
        {"Conv2D", LayerKind::Conv2D},
        {"ReLU", LayerKind::ReLU},
        {"Softmax", LayerKind::Softmax},
        {"AveragePool2D", LayerKind::AveragePool2D},
        {"AveragePooling2D", LayerKind::AveragePool2D},
        {"GlobalAveragePool2D", LayerKind::GlobalAveragePool2D},
        {"GlobalAveragePooling2D", LayerKind::GlobalAveragePool2D},
        {"Dropout", LayerKind::Dropout},
    };
    auto it = kinds.find(name);
    if (it == kinds.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string layer_label(const LayerSpec& l) {
    return "layer " + std::to_string(l.id) + " (" + l.name + ")";
}

std::int64_t valid_extent(std::int64_t in, std::int64_t window, std::int64_t stride,
                          const LayerSpec& l, const char* axis) {
    if (window > in)
        throw ModelError(ModelError::Kind::shape,
                         layer_label(l) + ": " + axis + " window " + std::to_string(window) +
                             " exceeds input extent " + std::to_string(in),
                         l.id);
    return (in - window) / stride + 1;
}

void check_params(const LayerSpec& l) {
    auto positive = [&](std::int64_t v, const char* what) {
        if (v < 1)
            throw ModelError(ModelError::Kind::parse,
                             layer_label(l) + ": " + what + " must be >= 1, got " + std::to_string(v),
                             l.id);
    };
    switch (l.kind) {
    case LayerKind::Dense:
        positive(l.dense().units, "units");
        break;
    case LayerKind::Conv2D: {
        const auto& c = l.conv();
        positive(c.filters, "filters");
        positive(c.kernel_h, "kernel height");
        positive(c.kernel_w, "kernel width");
        positive(c.stride_h, "stride height");
        positive(c.stride_w, "stride width");
        break;
    }
    case LayerKind::AveragePool2D: {
        const auto& p = l.pool();
        positive(p.pool_h, "pool height");
        positive(p.pool_w, "pool width");
        positive(p.stride_h, "stride height");
        positive(p.stride_w, "stride width");
        break;
    }
    case LayerKind::Dropout: {
        double r = std::get<DropoutParams>(l.params).rate;
        if (!(r >= 0.0 && r < 1.0))
            throw ModelError(ModelError::Kind::parse,
                             layer_label(l) + ": dropout rate must be in [0, 1)", l.id);
        break;
    }
    default:
        break;
    }
}

}  // namespace

std::pair<std::int64_t, std::int64_t> same_padding(const Conv2DParams& p, const TensorShape& input) {
    auto pad = [](std::int64_t in, std::int64_t k, std::int64_t s) {
        std::int64_t out = (in + s - 1) / s;
        std::int64_t total = std::max<std::int64_t>((out - 1) * s + k - in, 0);
        return total / 2;
    };
    return {pad(input.height(), p.kernel_h, p.stride_h), pad(input.width(), p.kernel_w, p.stride_w)};
}

std::vector<LayerShapes> infer_shapes(const TensorShape& input, const std::vector<LayerSpec>& layers) {
    std::vector<LayerShapes> out;
    out.reserve(layers.size());
    TensorShape cur = input;
    for (const auto& l : layers) {
        check_params(l);
        TensorShape next = cur;
        switch (l.kind) {
        case LayerKind::Dense:
            if (cur.layout != Layout::flat)
                throw ModelError(ModelError::Kind::shape,
                                 layer_label(l) + ": Dense expects a flat input, got " + cur.to_string(),
                                 l.id);
            next = TensorShape::flat(l.dense().units);
            break;
        case LayerKind::Conv2D: {
            if (cur.layout != Layout::hwc)
                throw ModelError(ModelError::Kind::shape,
                                 layer_label(l) + ": Conv2D expects an HWC input, got " + cur.to_string(),
                                 l.id);
            const auto& c = l.conv();
            std::int64_t oh, ow;
            if (c.padding == Padding::valid) {
                oh = valid_extent(cur.height(), c.kernel_h, c.stride_h, l, "height");
                ow = valid_extent(cur.width(), c.kernel_w, c.stride_w, l, "width");
            } else {
                oh = (cur.height() + c.stride_h - 1) / c.stride_h;
                ow = (cur.width() + c.stride_w - 1) / c.stride_w;
            }
            next = TensorShape::hwc(oh, ow, c.filters);
            break;
        }
        case LayerKind::AveragePool2D: {
            if (cur.layout != Layout::hwc)
                throw ModelError(ModelError::Kind::shape,
                                 layer_label(l) + ": AveragePool2D expects an HWC input", l.id);
            const auto& p = l.pool();
            next = TensorShape::hwc(valid_extent(cur.height(), p.pool_h, p.stride_h, l, "height"),
                                    valid_extent(cur.width(), p.pool_w, p.stride_w, l, "width"),
                                    cur.channels());
            break;
        }
        case LayerKind::GlobalAveragePool2D:
            if (cur.layout != Layout::hwc)
                throw ModelError(ModelError::Kind::shape,
                                 layer_label(l) + ": GlobalAveragePool2D expects an HWC input", l.id);
            next = TensorShape::flat(cur.channels());
            break;
        case LayerKind::ReLU:
        case LayerKind::Softmax:
        case LayerKind::Dropout:
            break;
        }
        out.push_back({cur, next});
        cur = next;
    }
    return out;
}

std::pair<std::int64_t, std::int64_t> weight_counts(const LayerSpec& layer, const TensorShape& input) {
    if (layer.kind == LayerKind::Dense)
        return {input.elements() * layer.dense().units, layer.dense().units};
    if (layer.kind == LayerKind::Conv2D) {
        const auto& c = layer.conv();
        return {c.kernel_h * c.kernel_w * input.channels() * c.filters, c.filters};
    }
    return {0, 0};
}

ModelGraph::ModelGraph(std::string name, TensorShape input, std::vector<LayerSpec> layers, WeightSet weights)
    : name_(std::move(name)), input_(std::move(input)), layers_(std::move(layers)), weights_(std::move(weights)) {
    const std::size_t want_dims = input_.layout == Layout::flat ? 1 : 3;
    if (input_.dims.size() != want_dims)
        throw ModelError(ModelError::Kind::shape, "input shape " + input_.to_string() +
                                                      " does not match its layout");
    for (auto d : input_.dims)
        if (d < 1) throw ModelError(ModelError::Kind::shape, "input shape has a non-positive extent");

    std::set<int> ids;
    for (const auto& l : layers_)
        if (!ids.insert(l.id).second)
            throw ModelError(ModelError::Kind::parse, "duplicate layer id " + std::to_string(l.id), l.id);

    shapes_ = ir::infer_shapes(input_, layers_);

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        auto it = weights_.find(l.id);
        if (!l.has_weights()) {
            if (it != weights_.end())
                throw ModelError(ModelError::Kind::weight_mismatch,
                                 layer_label(l) + ": " + to_string(l.kind) + " layers carry no weights", l.id);
            continue;
        }
        if (it == weights_.end())
            throw ModelError(ModelError::Kind::weight_mismatch, layer_label(l) + ": missing weights", l.id);
        auto [nk, nb] = weight_counts(l, shapes_[i].input);
        if (static_cast<std::int64_t>(it->second.kernel.size()) != nk)
            throw ModelError(ModelError::Kind::weight_mismatch,
                             layer_label(l) + ": kernel expects " + std::to_string(nk) + " elements, got " +
                                 std::to_string(it->second.kernel.size()),
                             l.id);
        if (static_cast<std::int64_t>(it->second.bias.size()) != nb)
            throw ModelError(ModelError::Kind::weight_mismatch,
                             layer_label(l) + ": bias expects " + std::to_string(nb) + " elements, got " +
                                 std::to_string(it->second.bias.size()),
                             l.id);
    }
    for (const auto& [id, w] : weights_)
        if (!ids.count(id))
            throw ModelError(ModelError::Kind::weight_mismatch,
                             "weights given for unknown layer id " + std::to_string(id), id);
}

const TensorShape& ModelGraph::output_shape() const {
    return shapes_.empty() ? input_ : shapes_.back().output;
}

const LayerWeights& ModelGraph::weights_for(int layer_id) const {
    auto it = weights_.find(layer_id);
    if (it == weights_.end())
        throw ModelError(ModelError::Kind::weight_mismatch,
                         "no weights for layer " + std::to_string(layer_id), layer_id);
    return it->second;
}

std::int64_t ModelGraph::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [id, w] : weights_) n += static_cast<std::int64_t>(w.kernel.size() + w.bias.size());
    return n;
}

ModelGraph ModelGraph::with_weights(WeightSet weights) const {
    return ModelGraph(name_, input_, layers_, std::move(weights));
}

ModelGraph normalize_for_hardware(const ModelGraph& graph) {
    std::vector<LayerSpec> kept;
    const auto& layers = graph.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.kind == LayerKind::Dropout) continue;
        if (l.kind == LayerKind::Softmax) {
            bool last = true;
            for (std::size_t j = i + 1; j < layers.size(); ++j)
                if (layers[j].kind != LayerKind::Dropout) last = false;
            if (!last)
                throw ModelError(ModelError::Kind::unsupported_config,
                                 layer_label(l) + ": Softmax is only supported as the final layer", l.id);
            continue;
        }
        kept.push_back(l);
    }
    return ModelGraph(graph.name(), graph.input_shape(), std::move(kept), graph.weights());
}

// ---------------------------------------------------------------- builtins

namespace {

class ChainBuilder {
public:
    ChainBuilder(std::string name, TensorShape input) : name_(std::move(name)), input_(std::move(input)) {}

    ChainBuilder& dense(std::int64_t units) { return add(LayerKind::Dense, DenseParams{units}); }
    ChainBuilder& conv(std::int64_t filters, std::int64_t kh, std::int64_t kw) {
        return add(LayerKind::Conv2D, Conv2DParams{filters, kh, kw, 1, 1, Padding::valid});
    }
    ChainBuilder& relu() { return add(LayerKind::ReLU, std::monostate{}); }
    ChainBuilder& softmax() { return add(LayerKind::Softmax, std::monostate{}); }
    ChainBuilder& avg_pool(std::int64_t ph, std::int64_t pw, std::int64_t sh, std::int64_t sw) {
        return add(LayerKind::AveragePool2D, PoolParams{ph, pw, sh, sw});
    }
    ChainBuilder& gap() { return add(LayerKind::GlobalAveragePool2D, std::monostate{}); }
    ChainBuilder& dropout(double rate) { return add(LayerKind::Dropout, DropoutParams{rate}); }

    ModelGraph build(std::uint64_t seed) const {
        auto shapes = infer_shapes(input_, layers_);
        SeededRng rng(seed);
        WeightSet ws;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (!layers_[i].has_weights()) continue;
            auto [nk, nb] = weight_counts(layers_[i], shapes[i].input);
            LayerWeights w;
            w.kernel.resize(static_cast<std::size_t>(nk));
            w.bias.resize(static_cast<std::size_t>(nb));
            for (auto& v : w.kernel) v = static_cast<float>(rng.uniform(-0.5, 0.5));
            for (auto& v : w.bias) v = static_cast<float>(rng.uniform(-0.5, 0.5));
            ws.emplace(layers_[i].id, std::move(w));
        }
        return ModelGraph(name_, input_, layers_, std::move(ws));
    }

private:
    ChainBuilder& add(LayerKind kind, LayerParams params) {
        int id = static_cast<int>(layers_.size());
        std::string base = to_string(kind);
        for (auto& ch : base) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        layers_.push_back({id, base + "_" + std::to_string(id), kind, std::move(params)});
        return *this;
    }

    std::string name_;
    TensorShape input_;
    std::vector<LayerSpec> layers_;
};

}  // namespace

std::vector<std::string> builtin_names() { return {"jet", "anomaly", "kws", "vww"}; }

ModelGraph builtin(const std::string& name, std::uint64_t seed) {
    if (name == "jet")
        return ChainBuilder("jet", TensorShape::flat(16))
            .dense(64).relu().dense(32).relu().dense(32).relu().dense(5).softmax()
            .build(seed);
    if (name == "anomaly")
        return ChainBuilder("anomaly", TensorShape::flat(320))
            .dense(16).relu().dense(32).relu().dense(32).relu().dense(8).relu()
            .dense(32).relu().dense(32).relu().dense(16).relu().dense(320)
            .build(seed);
    if (name == "kws")
        return ChainBuilder("kws", TensorShape::hwc(32, 32, 1))
            .conv(16, 5, 5).relu().conv(8, 3, 3).relu().dropout(0.2).gap().dense(12).softmax()
            .build(seed);
    if (name == "vww")
        return ChainBuilder("vww", TensorShape::hwc(49, 10, 1))
            .conv(4, 3, 3).relu().avg_pool(2, 2, 2, 2).conv(4, 3, 3).relu().gap().dense(2).softmax()
            .build(seed);
    throw ModelError(ModelError::Kind::parse, "unknown builtin model '" + name + "'");
}

std::vector<ModelGraph> builtin_benchmarks(std::uint64_t seed) {
    std::vector<ModelGraph> out;
    for (const auto& n : builtin_names()) out.push_back(builtin(n, seed));
    return out;
}

// ------------------------------------------------------------- interchange

namespace {
constexpr const char* format_tag = "snlx-1";
}  // namespace

void append_f32(std::string& blob, const std::vector<float>& values) {
    for (float f : values) {
        auto bits = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
}

std::vector<float> read_f32(const std::string& blob, std::uint64_t offset, std::uint64_t length,
                            const std::string& what, std::optional<int> layer) {
    if (length % 4 != 0)
        throw ModelError(ModelError::Kind::parse, what + ": byte length " + std::to_string(length) +
                                                      " is not a multiple of 4", layer);
    if (offset > blob.size() || length > blob.size() - offset)
        throw ModelError(layer ? ModelError::Kind::weight_mismatch : ModelError::Kind::parse, what + ": range [" + std::to_string(offset) + ", " +
                                                      std::to_string(offset + length) + ") exceeds blob of " +
                                                      std::to_string(blob.size()) + " bytes", layer);
    std::vector<float> out(length / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + b])) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ModelError(ModelError::Kind::parse, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::pair<std::int64_t, std::int64_t> read_pair(const json& j, const char* key, std::int64_t fallback) {
    if (!j.contains(key)) return {fallback, fallback};
    const auto& v = j.at(key);
    if (v.is_number_integer()) return {v.get<std::int64_t>(), v.get<std::int64_t>()};
    return {v.at(0).get<std::int64_t>(), v.at(1).get<std::int64_t>()};
}

}  // namespace

ModelGraph load_model(const std::filesystem::path& manifest) {
    json doc;
    try {
        doc = json::parse(read_file(manifest));
    } catch (const json::parse_error& e) {
        throw ModelError(ModelError::Kind::parse, manifest.string() + ": " + e.what());
    }

    try {
        if (doc.value("format", std::string()) != format_tag)
            throw ModelError(ModelError::Kind::parse,
                             manifest.string() + ": missing or unsupported format version (want \"" +
                                 format_tag + "\")");

        const auto& in = doc.at("input");
        std::vector<std::int64_t> dims = in.at("shape").get<std::vector<std::int64_t>>();
        std::string layout = in.value("layout", dims.size() == 3 ? "hwc" : "flat");
        TensorShape input{dims, layout == "hwc" ? Layout::hwc : Layout::flat};

        const std::string blob = read_file(manifest.parent_path() / doc.at("blob").get<std::string>());

        std::vector<LayerSpec> layers;
        WeightSet weights;
        std::optional<int> prev;
        for (const auto& jl : doc.at("layers")) {
            LayerSpec l;
            l.id = jl.at("id").get<int>();
            l.name = jl.value("name", "layer_" + std::to_string(l.id));
            std::string kind = jl.at("kind").get<std::string>();
            auto parsed = parse_layer_kind(kind);
            if (!parsed)
                throw ModelError(ModelError::Kind::unsupported_layer,
                                 "layer " + std::to_string(l.id) + " (" + l.name + "): unsupported layer kind '" +
                                     kind + "'",
                                 l.id);
            l.kind = *parsed;
            if (jl.contains("inputs")) {
                auto srcs = jl.at("inputs").get<std::vector<int>>();
                bool chain = prev ? (srcs.size() == 1 && srcs[0] == *prev) : srcs.empty();
                if (!chain)
                    throw ModelError(ModelError::Kind::topology,
                                     "layer " + std::to_string(l.id) +
                                         ": branching graphs are not supported (only linear chains)",
                                     l.id);
            }
            switch (l.kind) {
            case LayerKind::Dense:
                l.params = DenseParams{jl.at("units").get<std::int64_t>()};
                break;
            case LayerKind::Conv2D: {
                Conv2DParams c;
                c.filters = jl.at("filters").get<std::int64_t>();
                std::tie(c.kernel_h, c.kernel_w) = read_pair(jl, "kernel_size", 1);
                std::tie(c.stride_h, c.stride_w) = read_pair(jl, "strides", 1);
                std::string pad = jl.value("padding", "valid");
                if (pad == "same") {
                    c.padding = Padding::same;
                    std::cerr << "warning: layer " << l.id << " uses experimental 'same' padding\n";
                } else if (pad != "valid") {
                    throw ModelError(ModelError::Kind::unsupported_config,
                                     "layer " + std::to_string(l.id) + ": unknown padding '" + pad + "'", l.id);
                }
                l.params = c;
                break;
            }
            case LayerKind::AveragePool2D: {
                PoolParams p;
                std::tie(p.pool_h, p.pool_w) = read_pair(jl, "pool_size", 2);
                if (jl.contains("strides"))
                    std::tie(p.stride_h, p.stride_w) = read_pair(jl, "strides", 2);
                else
                    std::tie(p.stride_h, p.stride_w) = std::pair{p.pool_h, p.pool_w};
                l.params = p;
                break;
            }
            case LayerKind::Dropout:
                l.params = DropoutParams{jl.value("rate", 0.0)};
                break;
            default:
                break;
            }
            if (jl.contains("kernel") || jl.contains("bias")) {
                if (!l.has_weights())
                    throw ModelError(ModelError::Kind::weight_mismatch,
                                     "layer " + std::to_string(l.id) + " (" + l.name + "): " + kind +
                                         " layers carry no weights",
                                     l.id);
                LayerWeights w;
                std::string label = "layer " + std::to_string(l.id) + " (" + l.name + ")";
                const auto& k = jl.at("kernel");
                const auto& b = jl.at("bias");
                w.kernel = read_f32(blob, k.at("offset").get<std::uint64_t>(), k.at("length").get<std::uint64_t>(),
                                       label + " kernel", l.id);
                w.bias = read_f32(blob, b.at("offset").get<std::uint64_t>(), b.at("length").get<std::uint64_t>(),
                                     label + " bias", l.id);
                weights.emplace(l.id, std::move(w));
            }
            prev = l.id;
            layers.push_back(std::move(l));
        }
        return ModelGraph(doc.at("name").get<std::string>(), std::move(input), std::move(layers), std::move(weights));
    } catch (const json::exception& e) {
        throw ModelError(ModelError::Kind::parse, manifest.string() + ": " + e.what());
    }
}

std::filesystem::path save_model(const ModelGraph& graph, const std::filesystem::path& dir, const std::string& stem_in) {
    const std::string stem = stem_in.empty() ? graph.name() : stem_in;
    std::filesystem::create_directories(dir);

    json doc;
    doc["format"] = format_tag;
    doc["name"] = graph.name();
    doc["input"] = {{"shape", graph.input_shape().dims},
                    {"layout", graph.input_shape().layout == Layout::hwc ? "hwc" : "flat"}};
    doc["blob"] = stem + ".bin";

    std::string blob;
    json layers = json::array();
    for (const auto& l : graph.layers()) {
        json jl = {{"id", l.id}, {"name", l.name}, {"kind", to_string(l.kind)}};
        switch (l.kind) {
        case LayerKind::Dense:
            jl["units"] = l.dense().units;
            break;
        case LayerKind::Conv2D: {
            const auto& c = l.conv();
            jl["filters"] = c.filters;
            jl["kernel_size"] = {c.kernel_h, c.kernel_w};
            jl["strides"] = {c.stride_h, c.stride_w};
            jl["padding"] = c.padding == Padding::same ? "same" : "valid";
            break;
        }
        case LayerKind::AveragePool2D: {
            const auto& p = l.pool();
            jl["pool_size"] = {p.pool_h, p.pool_w};
            jl["strides"] = {p.stride_h, p.stride_w};
            break;
        }
        case LayerKind::Dropout:
            jl["rate"] = std::get<DropoutParams>(l.params).rate;
            break;
        default:
            break;
        }
        if (l.has_weights()) {
            const auto& w = graph.weights_for(l.id);
            jl["kernel"] = {{"offset", blob.size()}, {"length", 4 * w.kernel.size()}};
            append_f32(blob, w.kernel);
            jl["bias"] = {{"offset", blob.size()}, {"length", 4 * w.bias.size()}};
            append_f32(blob, w.bias);
        }
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);

    auto manifest = dir / (stem + ".snlx.json");
    std::ofstream(manifest) << doc.dump(2) << "\n";
    std::ofstream(dir / (stem + ".bin"), std::ios::binary) << blob;
    return manifest;
}

ModelGraph resolve_model(const std::string& name_or_path, std::uint64_t seed) {
    for (const auto& n : builtin_names())
        if (n == name_or_path) return builtin(n, seed);
    std::filesystem::path p(name_or_path);
    if (std::filesystem::exists(p)) return load_model(p);
    throw ModelError(ModelError::Kind::parse, "unknown model '" + name_or_path +
                                                  "' (expected a builtin name or a manifest path)");
}

}  // namespace snlforge::ir
