#include "matsim/encoder.hpp"

#include <atomic>
#include <cmath>
#include <random>

#include "matsim/errors.hpp"

namespace matsim {
namespace {

std::uint64_t next_revision() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

void check_finite(const EncoderModel& model) {
    for (const auto& l : model.layers()) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) throw ComputeError("encoder: non-finite parameter detected");
    }
    if (model.head() && (!model.head()->weight.allFinite() || !model.head()->bias.allFinite())) {
        throw ComputeError("encoder: non-finite parameter detected in head");
    }
}

std::size_t layer_size(const DenseLayer& l) { return static_cast<std::size_t>(l.weight.size() + l.bias.size()); }

}  // namespace

EncoderModel::EncoderModel(std::vector<DenseLayer> layers, std::optional<DenseLayer> head)
    : layers_(std::move(layers)), head_(std::move(head)), revision_(next_revision()) {
    if (layers_.empty()) throw ValidationError("encoder: at least one layer required");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].bias.size() != layers_[i].weight.rows()) {
            throw ValidationError("encoder: layer " + std::to_string(i) + " bias does not match weight rows");
        }
        if (i > 0 && layers_[i].weight.cols() != layers_[i - 1].weight.rows()) {
            throw ValidationError("encoder: layer " + std::to_string(i) + " input does not match previous output");
        }
    }
    if (head_ && (head_->weight.cols() != layers_.back().weight.rows() || head_->bias.size() != head_->weight.rows())) {
        throw ValidationError("encoder: classification head shape mismatch");
    }
}

EncoderModel EncoderModel::initialize(const std::vector<std::size_t>& dims, std::uint64_t seed, std::size_t n_classes) {
    if (dims.size() < 2) throw ValidationError("encoder: layer_dims needs an input and an output size");
    for (auto d : dims) {
        if (d == 0) throw ValidationError("encoder: layer dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    auto make = [&](std::size_t in, std::size_t out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer l{Matrix(static_cast<Index>(out), static_cast<Index>(in)), Vector::Zero(static_cast<Index>(out))};
        for (Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
        return l;
    };
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers.push_back(make(dims[i], dims[i + 1]));
    std::optional<DenseLayer> head;
    if (n_classes > 0) head = make(dims.back(), n_classes);
    return EncoderModel(std::move(layers), std::move(head));
}

EncoderModel EncoderModel::identity(std::size_t dim) {
    const auto d = static_cast<Index>(dim);
    return EncoderModel({DenseLayer{Matrix::Identity(d, d), Vector::Zero(d)}});
}

std::vector<std::size_t> EncoderModel::layer_dims() const {
    std::vector<std::size_t> dims;
    if (layers_.empty()) return dims;
    dims.push_back(static_cast<std::size_t>(layers_.front().weight.cols()));
    for (const auto& l : layers_) dims.push_back(static_cast<std::size_t>(l.weight.rows()));
    return dims;
}

std::size_t EncoderModel::input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t EncoderModel::output_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += layer_size(l);
    if (head_) n += layer_size(*head_);
    return n;
}

Vector EncoderModel::parameters() const {
    Vector flat(static_cast<Index>(parameter_count()));
    Index o = 0;
    auto put = [&](const DenseLayer& l) {
        flat.segment(o, l.weight.size()) = l.weight.reshaped();
        o += l.weight.size();
        flat.segment(o, l.bias.size()) = l.bias;
        o += l.bias.size();
    };
    for (const auto& l : layers_) put(l);
    if (head_) put(*head_);
    return flat;
}

void EncoderModel::set_parameters(const Vector& flat) {
    if (flat.size() != static_cast<Index>(parameter_count())) throw ValidationError("encoder: parameter size mismatch");
    Index o = 0;
    auto take = [&](DenseLayer& l) {
        l.weight.reshaped() = flat.segment(o, l.weight.size());
        o += l.weight.size();
        l.bias = flat.segment(o, l.bias.size());
        o += l.bias.size();
    };
    for (auto& l : layers_) take(l);
    if (head_) take(*head_);
    revision_ = next_revision();
}

bool EncoderModel::operator==(const EncoderModel& other) const {
    if (layers_.size() != other.layers_.size() || head_.has_value() != other.head_.has_value()) return false;
    auto same = [](const DenseLayer& x, const DenseLayer& y) {
        return x.weight.rows() == y.weight.rows() && x.weight.cols() == y.weight.cols() && x.weight == y.weight &&
               x.bias == y.bias;
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (!same(layers_[i], other.layers_[i])) return false;
    }
    return !head_ || same(*head_, *other.head_);
}

Matrix encode(const EncoderModel& model, const Matrix& inputs, ForwardCache* cache) {
    if (static_cast<std::size_t>(inputs.rows()) != model.input_dim()) {
        throw ValidationError("encoder: descriptor dimension " + std::to_string(inputs.rows()) +
                              " does not match input layer " + std::to_string(model.input_dim()));
    }
    check_finite(model);
    if (cache) {
        cache->inputs.clear();
        cache->pre_activations.clear();
        cache->valid = false;
    }
    Matrix x = inputs;
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Matrix z = layers[i].weight * x;
        z.colwise() += layers[i].bias;
        if (cache) {
            cache->inputs.push_back(x);
            cache->pre_activations.push_back(z);
        }
        x = i + 1 < layers.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    if (cache) {
        cache->features = x;
        cache->probabilities = model.head() ? classify(model, x) : Matrix();
        cache->revision = model.revision();
        cache->valid = true;
    }
    return x;
}

Vector encoder_forward(const EncoderModel& model, const Vector& descriptor) {
    return encode(model, Matrix(descriptor)).col(0);
}

Matrix classify(const EncoderModel& model, const Matrix& features) {
    if (!model.head()) throw ValidationError("encoder: model has no classification head");
    Matrix logits = model.head()->weight * features;
    logits.colwise() += model.head()->bias;
    for (Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        logits.col(c) = (logits.col(c).array() - m).exp().matrix();
        logits.col(c) /= logits.col(c).sum();
    }
    return logits;
}

EncoderGradients encoder_backward(const EncoderModel& model, const ForwardCache& cache, const Matrix& feature_grad,
                                  const Matrix* probability_grad) {
    if (!cache.valid || cache.revision != model.revision()) {
        throw ValidationError("encoder_backward: stale forward cache");
    }
    const auto& layers = model.layers();
    if (feature_grad.rows() != cache.features.rows() || feature_grad.cols() != cache.features.cols()) {
        throw ValidationError("encoder_backward: feature gradient shape mismatch");
    }
    EncoderGradients out;
    out.parameters = Vector::Zero(static_cast<Index>(model.parameter_count()));

    // Offsets of each layer's block inside the flat parameter vector.
    std::vector<Index> offsets;
    Index o = 0;
    for (const auto& l : layers) {
        offsets.push_back(o);
        o += l.weight.size() + l.bias.size();
    }

    Matrix upstream = feature_grad;
    if (probability_grad && probability_grad->size() > 0) {
        if (!model.head()) throw ValidationError("encoder_backward: probability gradient without a head");
        const Matrix& p = cache.probabilities;
        // softmax Jacobian-vector product: dz = p * (g - <p, g>)
        Matrix dz(p.rows(), p.cols());
        for (Index c = 0; c < p.cols(); ++c) {
            const double dot = p.col(c).dot(probability_grad->col(c));
            dz.col(c) = p.col(c).cwiseProduct((probability_grad->col(c).array() - dot).matrix());
        }
        const auto& head = *model.head();
        const Matrix gw = dz * cache.features.transpose();
        const Vector gb = dz.rowwise().sum();
        out.parameters.segment(o, gw.size()) = gw.reshaped();
        out.parameters.segment(o + gw.size(), gb.size()) = gb;
        upstream += head.weight.transpose() * dz;
    }

    for (std::size_t k = layers.size(); k-- > 0;) {
        Matrix delta = upstream;
        if (k + 1 < layers.size()) {
            delta = delta.cwiseProduct((cache.pre_activations[k].array() > 0.0).cast<double>().matrix());
        }
        const Matrix gw = delta * cache.inputs[k].transpose();
        const Vector gb = delta.rowwise().sum();
        out.parameters.segment(offsets[k], gw.size()) = gw.reshaped();
        out.parameters.segment(offsets[k] + gw.size(), gb.size()) = gb;
        upstream = layers[k].weight.transpose() * delta;
    }
    out.inputs = std::move(upstream);
    return out;
}

}  // namespace matsim
