#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "matsim/answers.hpp"
#include "matsim/dataset.hpp"
#include "matsim/encoder.hpp"
#include "matsim/losses.hpp"

namespace matsim {

struct TrainConfig {
    double learning_rate_initial = 1e-3;
    std::size_t epochs = 80;
    std::size_t lr_step_epochs = 20;
    double lr_decay_factor = 10.0;
    std::size_t materials_per_batch = 8;  // P
    std::size_t views_per_material = 4;   // K
    std::size_t steps_per_epoch = 50;
    std::vector<std::size_t> hidden_dims = {128};
    std::size_t output_dim = 128;
    std::uint64_t seed = 0;
    LossConfig loss;
    unsigned threads = 1;
    std::size_t max_batch_retries = 100;

    void validate() const;
    std::vector<std::size_t> layer_dims(std::size_t input_dim) const;
};

/// initial / decay^floor(epoch / step)
double lr_schedule(std::size_t epoch, const TrainConfig& config);

/// Answered material triples with a strict majority, keyed by bundle material indices.
class MajorityTriplets {
public:
    MajorityTriplets(const DatasetBundle& bundle, const AnswerStore& answers);

    /// Material index chosen by the majority for reference r and candidates {x, y}.
    std::optional<std::size_t> chosen(std::size_t r, std::size_t x, std::size_t y) const;
    std::size_t size() const { return chosen_.size(); }

private:
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> chosen_;
};

/// P materials x K views, plus every view-level triplet whose material triple was answered.
/// Column i*K + j of the batch holds view `views[i*K + j]` of the i-th sampled material.
struct TrainingBatch {
    std::vector<std::size_t> views;
    std::vector<int> labels;
    std::vector<IndexTriplet> triplets;
};

/// Samples one batch; resamples up to `max_batch_retries` times when no answered
/// triple can be instantiated, then throws ComputeError.
TrainingBatch build_batch(const DatasetBundle& bundle, const MajorityTriplets& answered, const TrainConfig& config,
                          std::mt19937_64& rng);

/// Instantiates all answered triplets for a fixed set of batch columns.
std::vector<IndexTriplet> instantiate_triplets(const std::vector<std::size_t>& column_materials,
                                               const MajorityTriplets& answered);

struct TrainResult {
    EncoderModel model;
    std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss, const EncoderModel& model)>;

/// Deterministic for a given config. Throws ComputeError naming the epoch if the loss diverges.
TrainResult train(const DatasetBundle& bundle, const AnswerStore& answers, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace matsim
