#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ua/dataset.hpp"

namespace ua {

enum class Arch { linear, mlp };

struct ModelConfig {
    Arch arch = Arch::linear;
    int hidden_size = 0; // mlp only
    int input_dim = 0;
    int num_classes = 0;
    double weight_decay = 0.0;
};

struct TensorSpec {
    std::string name;
    std::vector<std::int64_t> shape;
    std::int64_t offset = 0;
    std::int64_t size = 0;
};

struct Layout {
    std::vector<TensorSpec> tensors;
    std::int64_t total = 0;
};

std::shared_ptr<const Layout> make_layout(const ModelConfig& config);

/// Flat parameter vector plus its tensor layout. A plain value type: copies
/// are cheap enough at this scale and every operation below is pure.
struct ParameterVector {
    std::vector<double> values;
    std::shared_ptr<const Layout> layout;
};

struct GradientVector {
    std::vector<double> values;
    std::shared_ptr<const Layout> layout;
};

/// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
ParameterVector init_params(const ModelConfig& config, std::uint64_t seed);

// Replay contract for loss/gradient: per-sample terms are accumulated
// sequentially in ascending sample-id order (ids resolved against the
// dataset; duplicate ids contribute once per occurrence), then scaled by
// 1/batch and combined with the weight-decay term in a fixed elementwise
// order. Identical inputs therefore produce bit-identical outputs, which is
// what makes exact proof replay possible.

/// Mean cross-entropy over the batch plus (lambda/2)*||w||^2. Softmax uses
/// max-subtraction.
double loss(const ModelConfig& config, const ParameterVector& params, const Dataset& ds,
            std::span<const std::uint64_t> batch_ids, double lambda);

GradientVector gradient(const ModelConfig& config, const ParameterVector& params, const Dataset& ds,
                        std::span<const std::uint64_t> batch_ids, double lambda);

/// Gradient of the per-sample loss l(w; x, y) + (lambda/2)*||w||^2 for one
/// raw (features, label) pair.
GradientVector sample_gradient(const ModelConfig& config, const ParameterVector& params,
                               std::span<const double> features, int label, double lambda);

/// w - gamma * g, elementwise in index order.
ParameterVector sgd_step(const ParameterVector& params, const GradientVector& grad, double gamma);

/// Argmax over logits; ties break toward the lowest class index.
std::vector<int> predict(const ModelConfig& config, const ParameterVector& params,
                         std::span<const double> features, std::int64_t rows);
std::vector<int> predict(const ModelConfig& config, const ParameterVector& params, const Dataset& ds);

/// Unweighted mean of per-class F1; a class absent from both truth and
/// predictions contributes 0.
double macro_f1(std::span<const int> predictions, std::span<const int> truth, int num_classes);

double accuracy(std::span<const int> predictions, std::span<const int> truth);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

} // namespace ua
