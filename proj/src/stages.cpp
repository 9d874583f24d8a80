#include <algorithm>

#include "json.hpp"
#include "snlforge/codegen.hpp"

namespace snlforge::codegen {

using ir::LayerKind;

std::string to_string(StageKind kind) {
    switch (kind) {
    case StageKind::dense: return "dense";
    case StageKind::conv2d: return "conv2d";
    case StageKind::avg_pool: return "avg_pool";
    case StageKind::global_avg_pool: return "global_avg_pool";
    case StageKind::relu: return "relu";
    }
    return "?";
}

namespace {
StageKind parse_stage_kind(const std::string& s) {
    for (auto k : {StageKind::dense, StageKind::conv2d, StageKind::avg_pool, StageKind::global_avg_pool, StageKind::relu})
        if (to_string(k) == s) return k;
    throw CodegenError("unknown stage kind '" + s + "'");
}
}  // namespace

std::int64_t StageDesc::parallel_products() const {
    switch (kind) {
    case StageKind::dense: return input.elements() * output.elements();
    case StageKind::conv2d: return window_h * window_w * input.channels() * output.channels();
    case StageKind::avg_pool:
    case StageKind::global_avg_pool: return output.channels();
    case StageKind::relu: return 0;
    }
    return 0;
}

int bus_word_bits(const fx::FixedFormat& fmt) {
    int bits = 8;
    while (bits < fmt.total_bits) bits *= 2;
    return bits;
}

const RegisterEntry* RegisterMap::find(int layer_id, ParamKind kind) const {
    for (const auto& e : entries)
        if (e.layer_id == layer_id && e.kind == kind) return &e;
    return nullptr;
}

RegisterMap emit_register_map(const ir::ModelGraph& graph, const CodegenConfig& cfg) {
    RegisterMap map;
    map.word_bits = bus_word_bits(cfg.precision);
    std::uint64_t next = 0;
    for (const auto& l : graph.layers()) {
        if (!l.has_weights()) continue;
        const auto& w = graph.weights_for(l.id);
        for (auto [kind, count] : {std::pair{ParamKind::kernel, w.kernel.size()}, std::pair{ParamKind::bias, w.bias.size()}}) {
            RegisterEntry e;
            e.layer_id = l.id;
            e.layer_name = l.name;
            e.kind = kind;
            e.elem_begin = 0;
            e.elem_end = count;
            e.word_begin = next;
            e.word_end = next + count;
            next = e.word_end;
            map.entries.push_back(std::move(e));
        }
    }
    return map;
}

std::vector<StageDesc> lower(const ir::ModelGraph& graph, const RegisterMap& map) {
    std::vector<StageDesc> stages;
    const auto& layers = graph.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const auto& shp = graph.shapes()[i];
        StageDesc s;
        s.index = static_cast<int>(stages.size());
        s.layer_id = l.id;
        s.name = l.name;
        s.input = shp.input;
        s.output = shp.output;
        switch (l.kind) {
        case LayerKind::Dense:
            s.kind = StageKind::dense;
            s.fan_in = shp.input.elements();
            break;
        case LayerKind::Conv2D: {
            const auto& c = l.conv();
            s.kind = StageKind::conv2d;
            s.window_h = c.kernel_h;
            s.window_w = c.kernel_w;
            s.stride_h = c.stride_h;
            s.stride_w = c.stride_w;
            if (c.padding == ir::Padding::same) std::tie(s.pad_top, s.pad_left) = ir::same_padding(c, shp.input);
            s.fan_in = c.kernel_h * c.kernel_w * shp.input.channels();
            break;
        }
        case LayerKind::AveragePool2D: {
            const auto& p = l.pool();
            s.kind = StageKind::avg_pool;
            s.window_h = p.pool_h;
            s.window_w = p.pool_w;
            s.stride_h = p.stride_h;
            s.stride_w = p.stride_w;
            s.fan_in = p.pool_h * p.pool_w;
            break;
        }
        case LayerKind::GlobalAveragePool2D:
            s.kind = StageKind::global_avg_pool;
            s.window_h = shp.input.height();
            s.window_w = shp.input.width();
            s.fan_in = shp.input.height() * shp.input.width();
            break;
        case LayerKind::ReLU:
            s.kind = StageKind::relu;
            s.relu = true;
            break;
        case LayerKind::Softmax:
        case LayerKind::Dropout:
            throw CodegenError("layer " + std::to_string(l.id) + " (" + l.name + "): unsupported layer " +
                               ir::to_string(l.kind) + " in the streaming backend; normalize the graph first");
        }
        if (l.has_weights()) {
            const auto* k = map.find(l.id, ParamKind::kernel);
            const auto* b = map.find(l.id, ParamKind::bias);
            if (!k || !b) throw CodegenError("register map lacks entries for layer " + std::to_string(l.id));
            s.kernel = WordRange{k->word_begin, k->words()};
            s.bias = WordRange{b->word_begin, b->words()};
            // ReLU folds into the producing compute stage.
            if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::ReLU) {
                s.relu = true;
                ++i;
            }
        }
        stages.push_back(std::move(s));
    }
    return stages;
}

namespace {

std::int64_t finish_mac(const fx::Accumulator& acc, std::int64_t bias, const fx::FixedFormat& fmt,
                        const fx::FixedFormat& acc_fmt) {
    const int F = fmt.frac_bits();
    std::int64_t sum = acc.result(2 * F, acc_fmt);
    std::int64_t widened = static_cast<std::int64_t>(fx::requantize(bias, F, acc_fmt));
    std::int64_t total = fx::requantize(static_cast<__int128>(sum) + widened, F, acc_fmt);
    return fx::requantize(total, F, fmt);
}

}  // namespace

std::vector<std::int64_t> execute_stage(const StageDesc& s, std::span<const std::int64_t> in,
                                        std::span<const std::int64_t> regs, const fx::FixedFormat& fmt) {
    if (static_cast<std::int64_t>(in.size()) != s.input.elements())
        throw std::invalid_argument("stage " + s.name + ": got " + std::to_string(in.size()) + " inputs, expects " +
                                    std::to_string(s.input.elements()));
    auto reg = [&](const WordRange& r, std::int64_t k) { return regs[static_cast<std::size_t>(r.base + static_cast<std::uint64_t>(k))]; };
    std::vector<std::int64_t> out(static_cast<std::size_t>(s.output.elements()), 0);

    switch (s.kind) {
    case StageKind::dense: {
        const std::int64_t n_in = s.input.elements(), n_out = s.output.elements();
        const auto acc_fmt = fx::accumulator_format(fmt, static_cast<std::size_t>(s.fan_in));
        for (std::int64_t j = 0; j < n_out; ++j) {
            fx::Accumulator acc;
            for (std::int64_t i = 0; i < n_in; ++i) acc.add_product(in[static_cast<std::size_t>(i)], reg(*s.kernel, i * n_out + j));
            out[static_cast<std::size_t>(j)] = finish_mac(acc, reg(*s.bias, j), fmt, acc_fmt);
        }
        break;
    }
    case StageKind::conv2d: {
        const std::int64_t H = s.input.height(), W = s.input.width(), C = s.input.channels();
        const std::int64_t OW = s.output.width(), F = s.output.channels();
        const auto acc_fmt = fx::accumulator_format(fmt, static_cast<std::size_t>(s.fan_in));
        // Output pixels in raster order, all filters of a pixel together.
        for (std::int64_t p = 0; p < s.output.height() * OW; ++p) {
            const std::int64_t oh = p / OW, ow = p % OW;
            for (std::int64_t f = 0; f < F; ++f) {
                fx::Accumulator acc;
                for (std::int64_t i = 0; i < s.window_h; ++i) {
                    const std::int64_t h = oh * s.stride_h + i - s.pad_top;
                    if (h < 0 || h >= H) continue;
                    for (std::int64_t j = 0; j < s.window_w; ++j) {
                        const std::int64_t w = ow * s.stride_w + j - s.pad_left;
                        if (w < 0 || w >= W) continue;
                        const std::int64_t x_base = (h * W + w) * C;
                        const std::int64_t k_base = (i * s.window_w + j) * C;
                        for (std::int64_t c = 0; c < C; ++c)
                            acc.add_product(in[static_cast<std::size_t>(x_base + c)], reg(*s.kernel, (k_base + c) * F + f));
                    }
                }
                out[static_cast<std::size_t>(p * F + f)] = finish_mac(acc, reg(*s.bias, f), fmt, acc_fmt);
            }
        }
        break;
    }
    case StageKind::avg_pool:
    case StageKind::global_avg_pool: {
        const std::int64_t W = s.input.width(), C = s.input.channels();
        const std::int64_t OH = s.output.layout == ir::Layout::flat ? 1 : s.output.height();
        const std::int64_t OW = s.output.layout == ir::Layout::flat ? 1 : s.output.width();
        const std::int64_t window = s.window_h * s.window_w;
        const auto acc_fmt = fx::accumulator_format(fmt, static_cast<std::size_t>(window));
        const std::int64_t recip = fx::quantize(1.0 / static_cast<double>(window), acc_fmt).raw;
        for (std::int64_t oh = 0; oh < OH; ++oh)
            for (std::int64_t ow = 0; ow < OW; ++ow)
                for (std::int64_t c = 0; c < C; ++c) {
                    fx::Accumulator acc;
                    for (std::int64_t i = 0; i < s.window_h; ++i)
                        for (std::int64_t j = 0; j < s.window_w; ++j)
                            acc.add(in[static_cast<std::size_t>(((oh * s.stride_h + i) * W + ow * s.stride_w + j) * C + c)]);
                    const std::int64_t sum = acc.result(fmt.frac_bits(), acc_fmt);
                    out[static_cast<std::size_t>((oh * OW + ow) * C + c)] =
                        fx::requantize(static_cast<__int128>(sum) * recip, 2 * acc_fmt.frac_bits(), fmt);
                }
        break;
    }
    case StageKind::relu:
        std::copy(in.begin(), in.end(), out.begin());
        break;
    }
    if (s.relu)
        for (auto& v : out) v = std::max<std::int64_t>(v, 0);
    return out;
}

std::vector<std::int64_t> weight_image(const ir::ModelGraph& graph, const RegisterMap& map, const fx::FixedFormat& fmt) {
    std::vector<std::int64_t> words(map.total_words(), 0);
    for (const auto& e : map.entries) {
        const auto& w = graph.weights_for(e.layer_id);
        const auto& src = e.kind == ParamKind::kernel ? w.kernel : w.bias;
        for (std::uint64_t k = e.elem_begin; k < e.elem_end; ++k)
            words[e.word_begin + (k - e.elem_begin)] = fx::quantize(static_cast<double>(src[k]), fmt).raw;
    }
    return words;
}

// ------------------------------------------------------------- stage table

namespace {

using nlohmann::json;

json shape_json(const ir::TensorShape& s) {
    return {{"shape", s.dims}, {"layout", s.layout == ir::Layout::hwc ? "hwc" : "flat"}};
}

ir::TensorShape parse_shape(const json& j) {
    return {j.at("shape").get<std::vector<std::int64_t>>(), j.at("layout").get<std::string>() == "hwc" ? ir::Layout::hwc : ir::Layout::flat};
}

}  // namespace

std::string stage_table_json(const StageTable& t) {
    json doc;
    doc["format"] = "snl-stages-1";
    doc["model"] = t.model;
    doc["precision"] = t.precision.to_string();
    doc["rounding"] = t.precision.rounding == fx::Rounding::truncate ? "truncate" : "half_up";
    doc["overflow"] = t.precision.overflow == fx::Overflow::saturate ? "saturate" : "wrap";
    doc["clock_period_ps"] = t.clock_period_ps;
    doc["word_bits"] = t.word_bits;
    doc["register_words"] = t.register_words;
    doc["input"] = shape_json(t.input);
    json stages = json::array();
    for (const auto& s : t.stages) {
        json js = {{"index", s.index},
                   {"layer_id", s.layer_id},
                   {"name", s.name},
                   {"kind", to_string(s.kind)},
                   {"relu", s.relu},
                   {"input", shape_json(s.input)},
                   {"output", shape_json(s.output)},
                   {"window", {s.window_h, s.window_w}},
                   {"stride", {s.stride_h, s.stride_w}},
                   {"pad", {s.pad_top, s.pad_left}},
                   {"fan_in", s.fan_in}};
        if (s.kernel) js["kernel"] = {{"base", s.kernel->base}, {"words", s.kernel->words}};
        if (s.bias) js["bias"] = {{"base", s.bias->base}, {"words", s.bias->words}};
        stages.push_back(std::move(js));
    }
    doc["stages"] = std::move(stages);
    return doc.dump(2) + "\n";
}

StageTable parse_stage_table(const std::string& text) {
    try {
        json doc = json::parse(text);
        if (doc.value("format", std::string()) != "snl-stages-1") throw CodegenError("not an snl-stages-1 table");
        StageTable t;
        t.model = doc.at("model").get<std::string>();
        t.precision = fx::parse_precision(doc.at("precision").get<std::string>(),
                                          doc.value("rounding", "truncate") == "half_up" ? fx::Rounding::half_up : fx::Rounding::truncate,
                                          doc.value("overflow", "saturate") == "wrap" ? fx::Overflow::wrap : fx::Overflow::saturate);
        t.clock_period_ps = doc.at("clock_period_ps").get<std::int64_t>();
        t.word_bits = doc.at("word_bits").get<int>();
        t.register_words = doc.at("register_words").get<std::uint64_t>();
        t.input = parse_shape(doc.at("input"));
        for (const auto& js : doc.at("stages")) {
            StageDesc s;
            s.index = js.at("index").get<int>();
            s.layer_id = js.at("layer_id").get<int>();
            s.name = js.at("name").get<std::string>();
            s.kind = parse_stage_kind(js.at("kind").get<std::string>());
            s.relu = js.at("relu").get<bool>();
            s.input = parse_shape(js.at("input"));
            s.output = parse_shape(js.at("output"));
            s.window_h = js.at("window").at(0).get<std::int64_t>();
            s.window_w = js.at("window").at(1).get<std::int64_t>();
            s.stride_h = js.at("stride").at(0).get<std::int64_t>();
            s.stride_w = js.at("stride").at(1).get<std::int64_t>();
            s.pad_top = js.at("pad").at(0).get<std::int64_t>();
            s.pad_left = js.at("pad").at(1).get<std::int64_t>();
            s.fan_in = js.at("fan_in").get<std::int64_t>();
            if (js.contains("kernel"))
                s.kernel = WordRange{js["kernel"].at("base").get<std::uint64_t>(), js["kernel"].at("words").get<std::uint64_t>()};
            if (js.contains("bias"))
                s.bias = WordRange{js["bias"].at("base").get<std::uint64_t>(), js["bias"].at("words").get<std::uint64_t>()};
            t.stages.push_back(std::move(s));
        }
        return t;
    } catch (const json::exception& e) {
        throw CodegenError(std::string("malformed stage table: ") + e.what());
    }
}

}  // namespace snlforge::codegen
