#include "ua/model.hpp"

#include <algorithm>
#include <cmath>

#include "ua/error.hpp"
#include "ua/rng.hpp"

namespace ua {

namespace {

void check_config(const ModelConfig& c) {
    if (c.input_dim < 1 || c.num_classes < 2 || c.weight_decay < 0.0) {
        throw Error(ErrorCode::invalid_argument, "model config: bad dimensions or weight decay");
    }
    if (c.arch == Arch::mlp && c.hidden_size < 1) {
        throw Error(ErrorCode::invalid_argument, "model config: mlp requires hidden_size >= 1");
    }
}

struct Views {
    // linear: w1 = K x d weights, b1 = K biases
    // mlp:    w1 = H x d, b1 = H, w2 = K x H, b2 = K
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

template <class Vec>
Views views_of(const ModelConfig& c, const Vec& v) {
    Views s{};
    const double* p = v.values.data();
    if (c.arch == Arch::linear) {
        s.w1 = p;
        s.b1 = p + std::int64_t(c.num_classes) * c.input_dim;
    } else {
        s.w1 = p;
        s.b1 = p + std::int64_t(c.hidden_size) * c.input_dim;
        s.w2 = s.b1 + c.hidden_size;
        s.b2 = s.w2 + std::int64_t(c.num_classes) * c.hidden_size;
    }
    return s;
}

struct MutViews {
    double* w1;
    double* b1;
    double* w2;
    double* b2;
};

MutViews mut_views_of(const ModelConfig& c, GradientVector& v) {
    MutViews s{};
    double* p = v.values.data();
    if (c.arch == Arch::linear) {
        s.w1 = p;
        s.b1 = p + std::int64_t(c.num_classes) * c.input_dim;
    } else {
        s.w1 = p;
        s.b1 = p + std::int64_t(c.hidden_size) * c.input_dim;
        s.w2 = s.b1 + c.hidden_size;
        s.b2 = s.w2 + std::int64_t(c.num_classes) * c.hidden_size;
    }
    return s;
}

// Scratch buffers for one sample's forward/backward pass.
struct Scratch {
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<double> dhidden;
};

void forward(const ModelConfig& c, const Views& w, std::span<const double> x, Scratch& s) {
    const std::int64_t d = c.input_dim;
    const int K = c.num_classes;
    s.logits.assign(K, 0.0);
    if (c.arch == Arch::linear) {
        for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            const double* row = w.w1 + std::int64_t(k) * d;
            for (std::int64_t j = 0; j < d; ++j) acc += row[j] * x[j];
            s.logits[k] = acc + w.b1[k];
        }
    } else {
        const int H = c.hidden_size;
        s.hidden.assign(H, 0.0);
        for (int h = 0; h < H; ++h) {
            double acc = 0.0;
            const double* row = w.w1 + std::int64_t(h) * d;
            for (std::int64_t j = 0; j < d; ++j) acc += row[j] * x[j];
            acc += w.b1[h];
            s.hidden[h] = acc > 0.0 ? acc : 0.0; // ReLU
        }
        for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            const double* row = w.w2 + std::int64_t(k) * H;
            for (int h = 0; h < H; ++h) acc += row[h] * s.hidden[h];
            s.logits[k] = acc + w.b2[k];
        }
    }
}

// Stable softmax; returns the sample cross-entropy.
double softmax_ce(Scratch& s, int label) {
    const int K = static_cast<int>(s.logits.size());
    double mx = s.logits[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, s.logits[k]);
    s.probs.assign(K, 0.0);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) {
        s.probs[k] = std::exp(s.logits[k] - mx);
        denom += s.probs[k];
    }
    for (int k = 0; k < K; ++k) s.probs[k] /= denom;
    return -(s.logits[label] - mx - std::log(denom));
}

void backward(const ModelConfig& c, const Views& w, std::span<const double> x, int label,
              Scratch& s, MutViews& g) {
    const std::int64_t d = c.input_dim;
    const int K = c.num_classes;
    // dlogits = probs - onehot
    s.probs[label] -= 1.0;
    if (c.arch == Arch::linear) {
        for (int k = 0; k < K; ++k) {
            const double dk = s.probs[k];
            double* row = g.w1 + std::int64_t(k) * d;
            for (std::int64_t j = 0; j < d; ++j) row[j] += dk * x[j];
            g.b1[k] += dk;
        }
    } else {
        const int H = c.hidden_size;
        s.dhidden.assign(H, 0.0);
        for (int k = 0; k < K; ++k) {
            const double dk = s.probs[k];
            double* row = g.w2 + std::int64_t(k) * H;
            for (int h = 0; h < H; ++h) {
                row[h] += dk * s.hidden[h];
                s.dhidden[h] += dk * w.w2[std::int64_t(k) * H + h];
            }
            g.b2[k] += dk;
        }
        for (int h = 0; h < H; ++h) {
            if (s.hidden[h] <= 0.0) continue; // ReLU gate
            const double dh = s.dhidden[h];
            double* row = g.w1 + std::int64_t(h) * d;
            for (std::int64_t j = 0; j < d; ++j) row[j] += dh * x[j];
            g.b1[h] += dh;
        }
    }
}

std::vector<std::int64_t> batch_rows_ascending(const Dataset& ds,
                                               std::span<const std::uint64_t> batch_ids) {
    if (batch_ids.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
    std::vector<std::uint64_t> sorted(batch_ids.begin(), batch_ids.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::int64_t> rows;
    rows.reserve(sorted.size());
    for (std::uint64_t id : sorted) {
        const auto row = ds.index_of(id);
        if (!row) {
            throw Error(ErrorCode::unknown_sample, "batch id " + std::to_string(id) + " not in dataset");
        }
        rows.push_back(*row);
    }
    return rows;
}

void check_dims(const ModelConfig& c, const ParameterVector& params, std::int64_t d) {
    if (c.input_dim != d) {
        throw Error(ErrorCode::layout_mismatch, "model input_dim does not match data dimension");
    }
    if (!params.layout || params.layout->total != static_cast<std::int64_t>(params.values.size())) {
        throw Error(ErrorCode::layout_mismatch, "parameter vector inconsistent with its layout");
    }
}

} // namespace

std::shared_ptr<const Layout> make_layout(const ModelConfig& c) {
    check_config(c);
    auto layout = std::make_shared<Layout>();
    std::int64_t off = 0;
    auto add = [&](std::string name, std::vector<std::int64_t> shape) {
        std::int64_t size = 1;
        for (auto s : shape) size *= s;
        layout->tensors.push_back({std::move(name), std::move(shape), off, size});
        off += size;
    };
    if (c.arch == Arch::linear) {
        add("weight", {c.num_classes, c.input_dim});
        add("bias", {c.num_classes});
    } else {
        add("hidden_weight", {c.hidden_size, c.input_dim});
        add("hidden_bias", {c.hidden_size});
        add("output_weight", {c.num_classes, c.hidden_size});
        add("output_bias", {c.num_classes});
    }
    layout->total = off;
    return layout;
}

ParameterVector init_params(const ModelConfig& c, std::uint64_t seed) {
    auto layout = make_layout(c);
    ParameterVector params{std::vector<double>(layout->total, 0.0), layout};
    for (std::size_t t = 0; t < layout->tensors.size(); ++t) {
        const auto& spec = layout->tensors[t];
        if (spec.shape.size() != 2) continue; // biases stay zero
        const double fan_out = static_cast<double>(spec.shape[0]);
        const double fan_in = static_cast<double>(spec.shape[1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_key(seed, {0x696e6974ULL, static_cast<std::uint64_t>(t)}));
        for (std::int64_t i = 0; i < spec.size; ++i) {
            params.values[spec.offset + i] = (2.0 * rng.next_unit() - 1.0) * bound;
        }
    }
    return params;
}

double loss(const ModelConfig& c, const ParameterVector& params, const Dataset& ds,
            std::span<const std::uint64_t> batch_ids, double lambda) {
    check_dims(c, params, ds.d);
    const auto rows = batch_rows_ascending(ds, batch_ids);
    const Views w = views_of(c, params);
    Scratch s;
    double acc = 0.0;
    for (std::int64_t row : rows) {
        forward(c, w, ds.row(row), s);
        acc += softmax_ce(s, ds.labels[row]);
    }
    double out = acc / static_cast<double>(rows.size());
    if (lambda != 0.0) {
        double sq = 0.0;
        for (double v : params.values) sq += v * v;
        out += 0.5 * lambda * sq;
    }
    if (!std::isfinite(out)) throw Error(ErrorCode::non_finite, "loss: non-finite value");
    return out;
}

GradientVector gradient(const ModelConfig& c, const ParameterVector& params, const Dataset& ds,
                        std::span<const std::uint64_t> batch_ids, double lambda) {
    check_dims(c, params, ds.d);
    const auto rows = batch_rows_ascending(ds, batch_ids);
    const Views w = views_of(c, params);
    GradientVector grad{std::vector<double>(params.values.size(), 0.0), params.layout};
    MutViews g = mut_views_of(c, grad);
    Scratch s;
    for (std::int64_t row : rows) {
        forward(c, w, ds.row(row), s);
        softmax_ce(s, ds.labels[row]);
        backward(c, w, ds.row(row), ds.labels[row], s, g);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& v : grad.values) v *= inv;
    if (lambda != 0.0) {
        for (std::size_t i = 0; i < grad.values.size(); ++i) {
            grad.values[i] += lambda * params.values[i];
        }
    }
    return grad;
}

GradientVector sample_gradient(const ModelConfig& c, const ParameterVector& params,
                               std::span<const double> features, int label, double lambda) {
    if (static_cast<std::int64_t>(features.size()) != c.input_dim) {
        throw Error(ErrorCode::layout_mismatch, "sample_gradient: feature dimension mismatch");
    }
    const Views w = views_of(c, params);
    GradientVector grad{std::vector<double>(params.values.size(), 0.0), params.layout};
    MutViews g = mut_views_of(c, grad);
    Scratch s;
    forward(c, w, features, s);
    softmax_ce(s, label);
    backward(c, w, features, label, s, g);
    if (lambda != 0.0) {
        for (std::size_t i = 0; i < grad.values.size(); ++i) {
            grad.values[i] += lambda * params.values[i];
        }
    }
    return grad;
}

ParameterVector sgd_step(const ParameterVector& params, const GradientVector& grad, double gamma) {
    if (gamma < 0.0) throw Error(ErrorCode::invalid_argument, "sgd_step: gamma must be >= 0");
    if (params.values.size() != grad.values.size()) {
        throw Error(ErrorCode::layout_mismatch, "sgd_step: parameter/gradient size mismatch");
    }
    ParameterVector out{params.values, params.layout};
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = params.values[i] - gamma * grad.values[i];
    }
    return out;
}

std::vector<int> predict(const ModelConfig& c, const ParameterVector& params,
                         std::span<const double> features, std::int64_t rows) {
    check_dims(c, params, rows > 0 ? static_cast<std::int64_t>(features.size()) / rows : c.input_dim);
    const Views w = views_of(c, params);
    Scratch s;
    std::vector<int> out(rows);
    for (std::int64_t i = 0; i < rows; ++i) {
        forward(c, w, {features.data() + i * c.input_dim, static_cast<std::size_t>(c.input_dim)}, s);
        int best = 0;
        for (int k = 1; k < c.num_classes; ++k) {
            if (s.logits[k] > s.logits[best]) best = k;
        }
        out[i] = best;
    }
    return out;
}

std::vector<int> predict(const ModelConfig& c, const ParameterVector& params, const Dataset& ds) {
    return predict(c, params, ds.features, ds.n);
}

double macro_f1(std::span<const int> predictions, std::span<const int> truth, int num_classes) {
    if (predictions.size() != truth.size()) {
        throw Error(ErrorCode::invalid_argument, "macro_f1: length mismatch");
    }
    std::vector<std::int64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predictions[i] == truth[i]) {
            tp[truth[i]]++;
        } else {
            fp[predictions[i]]++;
            fn[truth[i]]++;
        }
    }
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        const double denom = static_cast<double>(2 * tp[k] + fp[k] + fn[k]);
        sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[k]) / denom : 0.0;
    }
    return sum / static_cast<double>(num_classes);
}

double accuracy(std::span<const int> predictions, std::span<const int> truth) {
    if (predictions.size() != truth.size() || truth.empty()) {
        throw Error(ErrorCode::invalid_argument, "accuracy: length mismatch");
    }
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double l2_norm(std::span<const double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

} // namespace ua
