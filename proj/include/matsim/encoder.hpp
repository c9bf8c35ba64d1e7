#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "matsim/types.hpp"

namespace matsim {

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Feed-forward encoder: rectified hidden layers, identity output layer, plus an
/// optional linear + softmax classification head on top of the features (used
/// only by the cross-entropy term).
class EncoderModel {
public:
    EncoderModel() = default;
    explicit EncoderModel(std::vector<DenseLayer> layers, std::optional<DenseLayer> head = std::nullopt);

    /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    static EncoderModel initialize(const std::vector<std::size_t>& layer_dims, std::uint64_t seed,
                                   std::size_t n_classes = 0);
    /// Single square layer with identity weights.
    static EncoderModel identity(std::size_t dim);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    const std::optional<DenseLayer>& head() const { return head_; }
    std::vector<std::size_t> layer_dims() const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t n_classes() const { return head_ ? static_cast<std::size_t>(head_->weight.rows()) : 0; }

    /// Changes with every parameter mutation; used to detect stale forward caches.
    std::uint64_t revision() const { return revision_; }

    std::size_t parameter_count() const;
    /// All parameters flattened in layer order, weights (column-major) before biases, head last.
    Vector parameters() const;
    void set_parameters(const Vector& flat);

    bool operator==(const EncoderModel& other) const;

private:
    std::vector<DenseLayer> layers_;
    std::optional<DenseLayer> head_;
    std::uint64_t revision_ = 0;
};

struct ForwardCache {
    std::vector<Matrix> inputs;          // input to each layer (layer 0: the descriptors)
    std::vector<Matrix> pre_activations; // W x + b for each layer
    Matrix features;                     // D x n
    Matrix probabilities;                // K x n, empty without a head
    std::uint64_t revision = 0;
    bool valid = false;
};

/// f(psi) for one descriptor.
Vector encoder_forward(const EncoderModel& model, const Vector& descriptor);

/// Batched forward pass over descriptor columns (in x n). Fills `cache` when given.
Matrix encode(const EncoderModel& model, const Matrix& inputs, ForwardCache* cache = nullptr);

/// Softmax class probabilities from features via the classification head.
Matrix classify(const EncoderModel& model, const Matrix& features);

struct EncoderGradients {
    Vector parameters;  // same layout as EncoderModel::parameters()
    Matrix inputs;      // in x n
};

/// Reverse-mode gradients given dL/dfeatures (D x n) and optionally dL/dprobabilities (K x n).
/// Throws ValidationError when the cache does not belong to the model's current parameters.
EncoderGradients encoder_backward(const EncoderModel& model, const ForwardCache& cache, const Matrix& feature_grad,
                                  const Matrix* probability_grad = nullptr);

}  // namespace matsim
