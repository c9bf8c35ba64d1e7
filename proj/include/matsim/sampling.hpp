#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "matsim/answers.hpp"
#include "matsim/tste.hpp"
#include "matsim/types.hpp"

namespace matsim {

/// Binary entropy in bits; 0 at p = 0 and p = 1.
double binary_entropy(double p);

/// Mutual information (bits) between a binary answer and a discrete location:
/// H(sum_x tau(x) p(x)) - sum_x tau(x) H(p(x)), where p(x) = P(answer = a | location x).
/// Throws ValidationError unless tau is non-negative and sums to 1 within 1e-9.
double information_gain(std::span<const double> tau, std::span<const double> p_a);

/// Belief over where a reference material sits, supported on embedding rows.
struct Posterior {
    std::vector<Index> locations;
    std::vector<double> weights;
};

/// Uniform prior over every embedding point, reweighted by the tSTE likelihood of
/// each vote whose reference is `reference`.
Posterior reference_posterior(const RowMatrix& points, Index reference, std::span<const VoteConstraint> votes,
                              double alpha);

double pair_information_gain(const Posterior& posterior, const RowMatrix& points, Index a, Index b, double alpha);

/// The `count` candidate pairs with the highest information gain, in descending
/// order (ties keep candidate order).
std::vector<std::pair<std::pair<Index, Index>, double>> top_pairs(const Posterior& posterior, const RowMatrix& points,
                                                                  std::span<const std::pair<Index, Index>> candidates,
                                                                  std::size_t count, double alpha);

struct PairQuery {
    std::string reference;
    std::string a;
    std::string b;
    double information_gain = 0.0;
};

struct SamplingPlan {
    std::size_t iteration = 0;
    std::vector<PairQuery> pairs;
    std::optional<double> mean_information_gain;  // empty for a random bootstrap iteration or an empty plan
    std::vector<std::string> exhausted_references;  // dropped: no unasked pair left

    std::vector<MaterialTriplet> triplets() const;
};

struct SamplingConfig {
    std::size_t pairs_per_reference = 10;
    std::size_t candidate_pool = 200;
    bool exhaustive = false;  // score every unasked pair instead of a random pool
    bool bootstrap = false;   // uniformly random pairs, no posterior
    TsteConfig tste;
};

/// Refits the embedding on `answers`, then for every reference scores a random pool
/// of pairs never asked for it (in `answers` or `also_exclude`) and keeps the most
/// informative. With no answers (or `bootstrap`), pairs are drawn uniformly at random.
SamplingPlan select_next_pairs(const std::vector<std::string>& material_ids, const AnswerStore& answers,
                               const SamplingConfig& config, std::size_t iteration, std::mt19937_64& rng,
                               const std::set<ComparisonKey>& also_exclude = {},
                               TsteEmbedding* embedding_out = nullptr);

nlohmann::ordered_json plan_to_json(const SamplingPlan& plan);
SamplingPlan plan_from_json(const nlohmann::json& j);
void write_plan(const std::filesystem::path& path, const SamplingPlan& plan);
SamplingPlan read_plan(const std::filesystem::path& path);

/// Appends `iteration,mean_ig` (header written when the file is new).
void append_convergence_log(const std::filesystem::path& path, std::size_t iteration, double mean_ig);

struct HitTrial {
    MaterialTriplet triplet;
    TrialKind kind = TrialKind::Trial;
    std::optional<std::size_t> original;  // for control trials: index of the repeated trial
};

struct HitConfig {
    std::size_t hit_size = 110;
    std::size_t n_training = 5;
    std::size_t n_control = 10;

    void validate() const;
    std::size_t unique_trials() const { return hit_size - n_training - n_control; }
};

struct HitPlan {
    std::vector<HitTrial> trials;
};

/// Triplets with the largest d_rb / d_ra in the embedding: nearest vs farthest candidate.
std::vector<MaterialTriplet> obvious_triplets(const std::vector<std::string>& ids, const RowMatrix& points,
                                              std::size_t count);

/// Training trials first, then the unique trials in order with each control (a
/// side-swapped repeat) inserted at a random position after its original.
/// Uses the first `config.unique_trials()` entries of `unique`.
HitPlan build_hit(std::span<const MaterialTriplet> unique, const HitConfig& config,
                  const std::vector<std::string>& ids, const RowMatrix& points, std::mt19937_64& rng);

struct WorkerVerdict {
    bool valid = true;
    std::size_t inconsistencies = 0;
};

/// Counts control answers that chose a different material than the earlier trial
/// answer for the same comparison. Valid iff at most one inconsistency.
WorkerVerdict judge_worker(std::span<const TripletAnswer> hit_answers);

inline constexpr std::size_t kMaxControlInconsistencies = 1;

}  // namespace matsim
