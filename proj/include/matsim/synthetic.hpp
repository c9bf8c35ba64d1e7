#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "matsim/answers.hpp"
#include "matsim/dataset.hpp"
#include "matsim/types.hpp"

namespace matsim {

struct SyntheticConfig {
    std::size_t n_materials = 20;
    std::size_t views_per_material = 4;
    std::size_t latent_dim = 2;
    std::size_t descriptor_dim = 16;
    double noise_sigma = 0.01;
    // Standard deviation of the per-(shape, illumination) descriptor offset.
    double nuisance_scale = 0.3;
    std::size_t n_categories = 4;
    std::uint64_t seed = 0;
};

/// Planted perceptual geometry: one latent point per material and the
/// Euclidean distances between them.
struct LatentGroundTruth {
    std::vector<std::string> material_ids;
    RowMatrix latent;
    Matrix distances;

    static LatentGroundTruth from_latent(std::vector<std::string> ids, RowMatrix latent);
    std::size_t index_of(const std::string& id) const;
};

struct SyntheticDataset {
    DatasetBundle bundle;
    LatentGroundTruth truth;
};

/// Each view descriptor is lift * latent + offset(shape, illumination) + N(0, noise_sigma).
/// The lift matrix and offsets are drawn once per call; output is a pure function of `config`.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// `count` distinct unordered comparisons (reference, {a, b}) with random side order.
std::vector<MaterialTriplet> sample_triplets(const std::vector<std::string>& material_ids, std::size_t count,
                                             std::mt19937_64& rng);

/// Synthetic annotator. Each vote picks A with probability s_a / (s_a + s_b) where
/// s = 1 / (1 + d / decision_noise) on the planted distances; decision_noise = 0
/// always picks the nearer candidate (ties broken by a fair coin).
AnswerStore simulate_answers(const LatentGroundTruth& truth, const std::vector<MaterialTriplet>& triplets,
                             std::size_t votes_per_triplet, double decision_noise, std::uint64_t seed);

void write_truth_csv(const std::filesystem::path& path, const LatentGroundTruth& truth);
LatentGroundTruth read_truth_csv(const std::filesystem::path& path);

}  // namespace matsim
