#include "matsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "matsim/errors.hpp"
#include "matsim/optimizer.hpp"

namespace matsim {

void TrainConfig::validate() const {
    if (!(learning_rate_initial > 0.0)) throw ValidationError("train: learning rate must be positive");
    if (lr_step_epochs == 0) throw ValidationError("train: lr step must be positive");
    if (!(lr_decay_factor > 0.0)) throw ValidationError("train: lr decay factor must be positive");
    if (materials_per_batch < 3) throw ValidationError("train: a batch needs at least 3 materials");
    if (views_per_material == 0) throw ValidationError("train: views per material must be positive");
    if (steps_per_epoch == 0) throw ValidationError("train: steps per epoch must be positive");
    if (output_dim == 0) throw ValidationError("train: output dimension must be positive");
    loss.validate();
}

std::vector<std::size_t> TrainConfig::layer_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(output_dim);
    return dims;
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
    const auto drops = static_cast<double>(epoch / config.lr_step_epochs);
    return config.learning_rate_initial / std::pow(config.lr_decay_factor, drops);
}

MajorityTriplets::MajorityTriplets(const DatasetBundle& bundle, const AnswerStore& answers) {
    for (const auto& [key, tally] : answers.tallies()) {
        if (tally.tied()) continue;
        const auto r = bundle.material_index(key.reference);
        const auto x = bundle.material_index(key.first);
        const auto y = bundle.material_index(key.second);
        if (!r || !x || !y) continue;
        const auto winner = tally.first > tally.second ? *x : *y;
        chosen_[{*r, std::min(*x, *y), std::max(*x, *y)}] = winner;
    }
}

std::optional<std::size_t> MajorityTriplets::chosen(std::size_t r, std::size_t x, std::size_t y) const {
    const auto it = chosen_.find({r, std::min(x, y), std::max(x, y)});
    if (it == chosen_.end()) return std::nullopt;
    return it->second;
}

std::vector<IndexTriplet> instantiate_triplets(const std::vector<std::size_t>& column_materials,
                                               const MajorityTriplets& answered) {
    // Group columns by material, preserving first-appearance order.
    std::vector<std::size_t> materials;
    std::vector<std::vector<Index>> columns;
    for (std::size_t c = 0; c < column_materials.size(); ++c) {
        const auto it = std::find(materials.begin(), materials.end(), column_materials[c]);
        if (it == materials.end()) {
            materials.push_back(column_materials[c]);
            columns.push_back({static_cast<Index>(c)});
        } else {
            columns[static_cast<std::size_t>(it - materials.begin())].push_back(static_cast<Index>(c));
        }
    }
    std::vector<IndexTriplet> out;
    const std::size_t m = materials.size();
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t x = 0; x < m; ++x) {
            for (std::size_t y = x + 1; y < m; ++y) {
                if (x == r || y == r) continue;
                const auto winner = answered.chosen(materials[r], materials[x], materials[y]);
                if (!winner) continue;
                const std::size_t a = *winner == materials[x] ? x : y;
                const std::size_t b = a == x ? y : x;
                for (Index cr : columns[r]) {
                    for (Index ca : columns[a]) {
                        for (Index cb : columns[b]) out.push_back({cr, ca, cb});
                    }
                }
            }
        }
    }
    return out;
}

TrainingBatch build_batch(const DatasetBundle& bundle, const MajorityTriplets& answered, const TrainConfig& config,
                          std::mt19937_64& rng) {
    const std::size_t n_materials = bundle.materials().size();
    if (n_materials < config.materials_per_batch) {
        throw ValidationError("build_batch: dataset has " + std::to_string(n_materials) + " materials, batch needs " +
                              std::to_string(config.materials_per_batch));
    }
    if (answered.size() == 0) throw ValidationError("build_batch: no answered comparisons with a majority");
    std::vector<std::size_t> order(n_materials);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t attempt = 0; attempt <= config.max_batch_retries; ++attempt) {
        // Partial Fisher-Yates: the first P entries become the batch materials.
        for (std::size_t i = 0; i < config.materials_per_batch; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n_materials - 1);
            std::swap(order[i], order[pick(rng)]);
        }
        TrainingBatch batch;
        std::vector<std::size_t> column_materials;
        for (std::size_t i = 0; i < config.materials_per_batch; ++i) {
            const auto material = order[i];
            auto views = bundle.views_of(material);
            if (views.size() >= config.views_per_material) {
                for (std::size_t j = 0; j < config.views_per_material; ++j) {
                    std::uniform_int_distribution<std::size_t> pick(j, views.size() - 1);
                    std::swap(views[j], views[pick(rng)]);
                }
            }
            for (std::size_t j = 0; j < config.views_per_material; ++j) {
                std::size_t view;
                if (views.size() >= config.views_per_material) {
                    view = views[j];
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
                    view = views[pick(rng)];
                }
                batch.views.push_back(view);
                batch.labels.push_back(static_cast<int>(material));
                column_materials.push_back(material);
            }
        }
        batch.triplets = instantiate_triplets(column_materials, answered);
        if (!batch.triplets.empty()) return batch;
    }
    throw ComputeError("build_batch: no answered triple could be instantiated after " +
                       std::to_string(config.max_batch_retries) + " retries");
}

TrainResult train(const DatasetBundle& bundle, const AnswerStore& answers, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (bundle.empty()) throw ValidationError("train: empty dataset");
    LossConfig loss = config.loss;
    if (loss.weight_ce > 0.0 && loss.n_classes == 0) loss.n_classes = bundle.materials().size();
    if (loss.weight_ce > 0.0 && loss.n_classes < bundle.materials().size()) {
        throw ValidationError("train: n_classes smaller than the number of materials");
    }

    TrainResult result;
    result.model = EncoderModel::initialize(config.layer_dims(bundle.descriptor_dim()), config.seed,
                                            loss.weight_ce > 0.0 ? loss.n_classes : 0);
    if (config.epochs == 0) return result;

    const MajorityTriplets answered(bundle, answers);
    auto state = OptimizerState::for_size(result.model.parameter_count());
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    Matrix inputs(static_cast<Index>(bundle.descriptor_dim()),
                  static_cast<Index>(config.materials_per_batch * config.views_per_material));
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, config);
        double total = 0.0;
        for (std::size_t step = 0; step < config.steps_per_epoch; ++step) {
            const auto batch = build_batch(bundle, answered, config, rng);
            for (std::size_t c = 0; c < batch.views.size(); ++c) {
                inputs.col(static_cast<Index>(c)) = bundle.descriptor(batch.views[c]);
            }
            encode(result.model, inputs, &cache);
            LossBatch lb;
            lb.features = &cache.features;
            lb.triplets = batch.triplets;
            lb.labels = batch.labels;
            if (result.model.head()) lb.class_probabilities = &cache.probabilities;
            const auto l = combined_loss(lb, loss, config.threads);
            if (!std::isfinite(l.value)) {
                throw ComputeError("train: loss diverged at epoch " + std::to_string(epoch));
            }
            total += l.value;
            const auto grads = encoder_backward(result.model, cache, l.feature_grad,
                                                l.probability_grad.size() > 0 ? &l.probability_grad : nullptr);
            Vector params = result.model.parameters();
            optimizer_step(state, params, grads.parameters, lr);
            if (!params.allFinite()) {
                throw ComputeError("train: non-finite parameters at epoch " + std::to_string(epoch));
            }
            result.model.set_parameters(params);
        }
        const double mean = total / static_cast<double>(config.steps_per_epoch);
        result.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean, result.model);
    }
    return result;
}

}  // namespace matsim
