#include "snlforge/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace snlforge::qsim {

using ir::LayerKind;
using ir::ModelGraph;
using ir::Padding;

namespace {

struct ConvGeometry {
    std::int64_t in_h, in_w, in_c;
    std::int64_t out_h, out_w, out_c;
    std::int64_t kh, kw, sh, sw;
    std::int64_t pad_top, pad_left;
};

ConvGeometry conv_geometry(const ir::LayerSpec& l, const ir::LayerShapes& s) {
    const auto& c = l.conv();
    auto [pt, pl] = c.padding == Padding::same ? ir::same_padding(c, s.input) : std::pair<std::int64_t, std::int64_t>{0, 0};
    return {s.input.height(), s.input.width(), s.input.channels(), s.output.height(), s.output.width(),
            s.output.channels(), c.kernel_h, c.kernel_w, c.stride_h, c.stride_w, pt, pl};
}

void check_input(const ModelGraph& graph, std::size_t n) {
    if (static_cast<std::int64_t>(n) != graph.input_shape().elements())
        throw std::invalid_argument("input has " + std::to_string(n) + " elements, model '" + graph.name() +
                                    "' expects " + std::to_string(graph.input_shape().elements()) + " " +
                                    graph.input_shape().to_string());
}

}  // namespace

std::vector<double> run_float(const ModelGraph& graph, std::span<const double> input) {
    check_input(graph, input.size());
    std::vector<double> x(input.begin(), input.end());
    const auto& layers = graph.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        const auto& shp = graph.shapes()[li];
        std::vector<double> y;
        switch (l.kind) {
        case LayerKind::Dense: {
            const auto& w = graph.weights_for(l.id);
            const auto n_in = static_cast<std::size_t>(shp.input.elements());
            const auto n_out = static_cast<std::size_t>(l.dense().units);
            y.assign(n_out, 0.0);
            for (std::size_t j = 0; j < n_out; ++j) {
                double acc = w.bias[j];
                for (std::size_t i = 0; i < n_in; ++i) acc += x[i] * static_cast<double>(w.kernel[i * n_out + j]);
                y[j] = acc;
            }
            break;
        }
        case LayerKind::Conv2D: {
            const auto& w = graph.weights_for(l.id);
            auto g = conv_geometry(l, shp);
            y.assign(static_cast<std::size_t>(g.out_h * g.out_w * g.out_c), 0.0);
            for (std::int64_t oh = 0; oh < g.out_h; ++oh)
                for (std::int64_t ow = 0; ow < g.out_w; ++ow)
                    for (std::int64_t f = 0; f < g.out_c; ++f) {
                        double acc = w.bias[static_cast<std::size_t>(f)];
                        for (std::int64_t i = 0; i < g.kh; ++i) {
                            std::int64_t h = oh * g.sh + i - g.pad_top;
                            if (h < 0 || h >= g.in_h) continue;
                            for (std::int64_t j = 0; j < g.kw; ++j) {
                                std::int64_t v = ow * g.sw + j - g.pad_left;
                                if (v < 0 || v >= g.in_w) continue;
                                for (std::int64_t c = 0; c < g.in_c; ++c)
                                    acc += x[static_cast<std::size_t>((h * g.in_w + v) * g.in_c + c)] *
                                           static_cast<double>(
                                               w.kernel[static_cast<std::size_t>(((i * g.kw + j) * g.in_c + c) * g.out_c + f)]);
                            }
                        }
                        y[static_cast<std::size_t>((oh * g.out_w + ow) * g.out_c + f)] = acc;
                    }
            break;
        }
        case LayerKind::AveragePool2D: {
            const auto& p = l.pool();
            const auto& in = shp.input;
            const auto& out = shp.output;
            const std::int64_t C = in.channels();
            y.assign(static_cast<std::size_t>(out.elements()), 0.0);
            for (std::int64_t oh = 0; oh < out.height(); ++oh)
                for (std::int64_t ow = 0; ow < out.width(); ++ow)
                    for (std::int64_t c = 0; c < C; ++c) {
                        double s = 0.0;
                        for (std::int64_t i = 0; i < p.pool_h; ++i)
                            for (std::int64_t j = 0; j < p.pool_w; ++j)
                                s += x[static_cast<std::size_t>(((oh * p.stride_h + i) * in.width() + ow * p.stride_w + j) * C + c)];
                        y[static_cast<std::size_t>((oh * out.width() + ow) * C + c)] = s / static_cast<double>(p.pool_h * p.pool_w);
                    }
            break;
        }
        case LayerKind::GlobalAveragePool2D: {
            const auto& in = shp.input;
            const std::int64_t C = in.channels();
            const std::int64_t hw = in.height() * in.width();
            y.assign(static_cast<std::size_t>(C), 0.0);
            for (std::int64_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::int64_t k = 0; k < hw; ++k) s += x[static_cast<std::size_t>(k * C + c)];
                y[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
            }
            break;
        }
        case LayerKind::ReLU:
            y = x;
            for (auto& v : y) v = std::max(v, 0.0);
            break;
        case LayerKind::Softmax: {
            y = x;
            double m = *std::max_element(y.begin(), y.end());
            double z = 0.0;
            for (auto& v : y) z += (v = std::exp(v - m));
            for (auto& v : y) v /= z;
            break;
        }
        case LayerKind::Dropout:
            y = x;
            break;
        }
        x = std::move(y);
    }
    return x;
}

std::vector<std::int64_t> quantize_input(std::span<const double> input, const fx::FixedFormat& fmt) {
    std::vector<std::int64_t> raw(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) raw[i] = fx::quantize(input[i], fmt).raw;
    return raw;
}

namespace {

std::vector<std::int64_t> quantize_weights(const std::vector<float>& w, const fx::FixedFormat& fmt) {
    std::vector<std::int64_t> raw(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) raw[i] = fx::quantize(static_cast<double>(w[i]), fmt).raw;
    return raw;
}

// Accumulated dot product (already at 2F) plus bias, resized to the layer format.
std::int64_t finish_mac(const fx::Accumulator& acc, std::int64_t bias, const fx::FixedFormat& fmt,
                        const fx::FixedFormat& acc_fmt) {
    const int F = fmt.frac_bits();
    std::int64_t sum = acc.result(2 * F, acc_fmt);
    std::int64_t b = fx::requantize(bias, F, acc_fmt);
    std::int64_t with_bias = fx::requantize(static_cast<__int128>(sum) + b, F, acc_fmt);
    return fx::requantize(with_bias, F, fmt);
}

std::int64_t average(const fx::Accumulator& acc, std::int64_t window, const fx::FixedFormat& fmt) {
    const auto acc_fmt = fx::accumulator_format(fmt, static_cast<std::size_t>(window));
    const int F = fmt.frac_bits();
    std::int64_t sum = acc.result(F, acc_fmt);
    std::int64_t recip = fx::quantize(1.0 / static_cast<double>(window), acc_fmt).raw;
    return fx::requantize(static_cast<__int128>(sum) * recip, 2 * acc_fmt.frac_bits(), fmt);
}

}  // namespace

QuantizedResult run_quantized(const ModelGraph& graph, std::span<const double> input, const fx::FixedFormat& fmt) {
    check_input(graph, input.size());
    auto raw = quantize_input(input, fmt);
    return run_quantized_raw(graph, raw, fmt);
}

QuantizedResult run_quantized_raw(const ModelGraph& graph_in, std::span<const std::int64_t> input,
                                  const fx::FixedFormat& fmt) {
    check_input(graph_in, input.size());
    const ModelGraph graph = ir::normalize_for_hardware(graph_in);
    std::vector<std::int64_t> x(input.begin(), input.end());
    const auto& layers = graph.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        const auto& shp = graph.shapes()[li];
        std::vector<std::int64_t> y;
        switch (l.kind) {
        case LayerKind::Dense: {
            const auto& w = graph.weights_for(l.id);
            auto kernel = quantize_weights(w.kernel, fmt);
            auto bias = quantize_weights(w.bias, fmt);
            const auto n_in = static_cast<std::size_t>(shp.input.elements());
            const auto n_out = static_cast<std::size_t>(l.dense().units);
            const auto acc_fmt = fx::accumulator_format(fmt, n_in);
            y.assign(n_out, 0);
            for (std::size_t j = 0; j < n_out; ++j) {
                fx::Accumulator acc;
                for (std::size_t i = 0; i < n_in; ++i) acc.add_product(x[i], kernel[i * n_out + j]);
                y[j] = finish_mac(acc, bias[j], fmt, acc_fmt);
            }
            break;
        }
        case LayerKind::Conv2D: {
            const auto& w = graph.weights_for(l.id);
            auto kernel = quantize_weights(w.kernel, fmt);
            auto bias = quantize_weights(w.bias, fmt);
            auto g = conv_geometry(l, shp);
            const auto acc_fmt = fx::accumulator_format(fmt, static_cast<std::size_t>(g.kh * g.kw * g.in_c));
            y.assign(static_cast<std::size_t>(g.out_h * g.out_w * g.out_c), 0);
            for (std::int64_t oh = 0; oh < g.out_h; ++oh)
                for (std::int64_t ow = 0; ow < g.out_w; ++ow)
                    for (std::int64_t f = 0; f < g.out_c; ++f) {
                        fx::Accumulator acc;
                        for (std::int64_t i = 0; i < g.kh; ++i) {
                            std::int64_t h = oh * g.sh + i - g.pad_top;
                            if (h < 0 || h >= g.in_h) continue;
                            for (std::int64_t j = 0; j < g.kw; ++j) {
                                std::int64_t v = ow * g.sw + j - g.pad_left;
                                if (v < 0 || v >= g.in_w) continue;
                                for (std::int64_t c = 0; c < g.in_c; ++c)
                                    acc.add_product(
                                        x[static_cast<std::size_t>((h * g.in_w + v) * g.in_c + c)],
                                        kernel[static_cast<std::size_t>(((i * g.kw + j) * g.in_c + c) * g.out_c + f)]);
                            }
                        }
                        y[static_cast<std::size_t>((oh * g.out_w + ow) * g.out_c + f)] =
                            finish_mac(acc, bias[static_cast<std::size_t>(f)], fmt, acc_fmt);
                    }
            break;
        }
        case LayerKind::AveragePool2D: {
            const auto& p = l.pool();
            const auto& in = shp.input;
            const auto& out = shp.output;
            const std::int64_t C = in.channels();
            y.assign(static_cast<std::size_t>(out.elements()), 0);
            for (std::int64_t oh = 0; oh < out.height(); ++oh)
                for (std::int64_t ow = 0; ow < out.width(); ++ow)
                    for (std::int64_t c = 0; c < C; ++c) {
                        fx::Accumulator acc;
                        for (std::int64_t i = 0; i < p.pool_h; ++i)
                            for (std::int64_t j = 0; j < p.pool_w; ++j)
                                acc.add(x[static_cast<std::size_t>(((oh * p.stride_h + i) * in.width() + ow * p.stride_w + j) * C + c)]);
                        y[static_cast<std::size_t>((oh * out.width() + ow) * C + c)] = average(acc, p.pool_h * p.pool_w, fmt);
                    }
            break;
        }
        case LayerKind::GlobalAveragePool2D: {
            const auto& in = shp.input;
            const std::int64_t C = in.channels();
            const std::int64_t hw = in.height() * in.width();
            y.assign(static_cast<std::size_t>(C), 0);
            for (std::int64_t c = 0; c < C; ++c) {
                fx::Accumulator acc;
                for (std::int64_t k = 0; k < hw; ++k) acc.add(x[static_cast<std::size_t>(k * C + c)]);
                y[static_cast<std::size_t>(c)] = average(acc, hw, fmt);
            }
            break;
        }
        case LayerKind::ReLU:
            y = x;
            for (auto& v : y) v = std::max<std::int64_t>(v, 0);
            break;
        case LayerKind::Softmax:
        case LayerKind::Dropout:
            // Removed by normalization.
            y = x;
            break;
        }
        x = std::move(y);
    }

    QuantizedResult r;
    r.format = fmt;
    r.values.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.values[i] = fx::FixedValue{x[i], fmt}.to_double();
    r.raw = std::move(x);
    return r;
}

// ------------------------------------------------------------------ metrics

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(scores.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double pos = 0, neg = 0, rank_sum = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            pos += 1;
            rank_sum += rank[i];
        } else {
            neg += 1;
        }
    }
    if (pos == 0 || neg == 0) throw std::invalid_argument("auc: needs both positive and negative labels");
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double score(std::span<const double> input, std::span<const double> output) {
    if (output.size() == 1) return output[0];
    if (output.size() == input.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < output.size(); ++i) s += (output[i] - input[i]) * (output[i] - input[i]);
        return s / static_cast<double>(output.size());
    }
    double rest = *std::max_element(output.begin(), output.end() - 1);
    return output.back() - rest;
}

EvalMetrics evaluate(const ModelGraph& graph_in, const Dataset& data, const std::optional<fx::FixedFormat>& fmt,
                     unsigned threads) {
    if (data.inputs.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (data.inputs.size() != data.labels.size())
        throw std::invalid_argument("evaluate: inputs and labels differ in length");
    const ModelGraph graph = ir::normalize_for_hardware(graph_in);
    const std::size_t n = data.inputs.size();

    struct PerSample {
        std::size_t predicted = 0;
        double score = 0.0;
        double err = 0.0;
    };
    std::vector<PerSample> results(n);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto ref = run_float(graph, data.inputs[i]);
            std::vector<double> out = ref;
            if (fmt) {
                out = run_quantized(graph, data.inputs[i], *fmt).values;
                for (std::size_t k = 0; k < out.size(); ++k)
                    results[i].err = std::max(results[i].err, std::fabs(out[k] - ref[k]));
            }
            results[i].predicted = argmax(out);
            results[i].score = score(data.inputs[i], out);
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t b = t * chunk, e = std::min(n, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    EvalMetrics m;
    m.samples = n;
    for (const auto& r : results) m.max_abs_error = std::max(m.max_abs_error, r.err);
    if (data.label_kind == LabelKind::class_index) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (static_cast<double>(results[i].predicted) == data.labels[i]) ++hits;
        m.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    } else {
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = results[i].score;
            labels[i] = data.labels[i] > 0.5 ? 1 : 0;
        }
        m.auc = auc(scores, labels);
    }
    return m;
}

// ------------------------------------------------------------------ dataset

Dataset load_dataset(const std::filesystem::path& manifest) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(ir::read_file(manifest));
        if (doc.value("format", std::string()) != "snlx-1" || doc.value("kind", std::string()) != "dataset")
            throw std::runtime_error(manifest.string() + ": not an snlx-1 dataset manifest");
        Dataset d;
        auto dims = doc.at("input").at("shape").get<std::vector<std::int64_t>>();
        d.input_shape = {dims, dims.size() == 3 ? ir::Layout::hwc : ir::Layout::flat};
        d.label_kind = doc.value("label_kind", "class") == "binary" ? LabelKind::binary : LabelKind::class_index;
        const auto count = doc.at("count").get<std::size_t>();
        const std::string blob = ir::read_file(manifest.parent_path() / doc.at("blob").get<std::string>());
        auto xs = ir::read_f32(blob, doc.at("inputs").at("offset").get<std::uint64_t>(),
                               doc.at("inputs").at("length").get<std::uint64_t>(), "inputs");
        auto ys = ir::read_f32(blob, doc.at("labels").at("offset").get<std::uint64_t>(),
                               doc.at("labels").at("length").get<std::uint64_t>(), "labels");
        const auto per = static_cast<std::size_t>(d.input_shape.elements());
        if (xs.size() != count * per || ys.size() != count)
            throw std::runtime_error(manifest.string() + ": blob sizes do not match count " + std::to_string(count));
        for (std::size_t i = 0; i < count; ++i) {
            d.inputs.emplace_back(xs.begin() + static_cast<std::ptrdiff_t>(i * per),
                                  xs.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
            d.labels.push_back(ys[i]);
        }
        return d;
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest.string() + ": " + e.what());
    }
}

std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& dir, const std::string& stem) {
    using nlohmann::json;
    std::filesystem::create_directories(dir);
    std::vector<float> xs, ys;
    for (const auto& in : data.inputs)
        for (double v : in) xs.push_back(static_cast<float>(v));
    for (double v : data.labels) ys.push_back(static_cast<float>(v));
    std::string blob;
    ir::append_f32(blob, xs);
    json doc = {{"format", "snlx-1"},
                {"kind", "dataset"},
                {"input", {{"shape", data.input_shape.dims}}},
                {"label_kind", data.label_kind == LabelKind::binary ? "binary" : "class"},
                {"count", data.inputs.size()},
                {"blob", stem + ".bin"},
                {"inputs", {{"offset", 0}, {"length", blob.size()}}}};
    doc["labels"] = {{"offset", blob.size()}, {"length", 4 * ys.size()}};
    ir::append_f32(blob, ys);
    auto manifest = dir / (stem + ".snlx.json");
    std::ofstream(manifest) << doc.dump(2) << "\n";
    std::ofstream(dir / (stem + ".bin"), std::ios::binary) << blob;
    return manifest;
}

}  // namespace snlforge::qsim
