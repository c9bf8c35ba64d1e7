#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "matsim/answers.hpp"
#include "matsim/metrics.hpp"
#include "matsim/types.hpp"

namespace matsim {

struct TsteConfig {
    double alpha = 5.0;  // Student-t degrees of freedom
    std::size_t dim = 2;
    double learning_rate = 0.1;
    std::size_t max_iters = 1000;
    std::uint64_t seed = 0;
    std::size_t max_halvings = 30;
    double step_growth = 1.1;  // applied after each accepted step

    void validate() const;
};

/// (1 + d^2 / alpha)^(-(alpha + 1) / 2), taking the squared distance d^2.
double tste_kernel(double squared_distance, double alpha);

/// k(d_ra) / (k(d_ra) + k(d_rb)) with Euclidean d.
double tste_probability(const Eigen::Ref<const Vector>& x_r, const Eigen::Ref<const Vector>& x_a,
                        const Eigen::Ref<const Vector>& x_b, double alpha);

/// One vote as row indices into a point matrix: `chosen` was judged closer to `reference`.
struct VoteConstraint {
    Index reference = 0;
    Index chosen = 0;
    Index other = 0;
};

/// One constraint per individual vote. Answers naming materials outside `ids` throw ValidationError.
std::vector<VoteConstraint> vote_constraints(const AnswerStore& answers, const std::vector<std::string>& ids);

/// Sum over votes of ln p(chosen).
double tste_log_likelihood(const RowMatrix& points, std::span<const VoteConstraint> votes, double alpha);
/// Gradient of tste_log_likelihood with respect to the points.
RowMatrix tste_gradient(const RowMatrix& points, std::span<const VoteConstraint> votes, double alpha);
/// Fraction of votes whose chosen candidate is strictly nearer to the reference.
double satisfied_fraction(const RowMatrix& points, std::span<const VoteConstraint> votes);

struct TsteEmbedding {
    std::vector<std::string> ids;
    RowMatrix points;
    double alpha = 5.0;
    std::uint64_t seed = 0;
    double log_likelihood = 0.0;
    double satisfied_fraction = 0.0;
    std::size_t iterations = 0;
    bool stalled = false;              // stopped because no step size improved the likelihood
    std::vector<double> likelihood_trace;  // after each accepted step, starting with the initial value
};

/// Gradient ascent on the vote log-likelihood; a step is kept only when the likelihood
/// does not decrease, otherwise the step size is halved. `ids` defaults to every
/// material named in the answers.
TsteEmbedding tste_fit(const AnswerStore& answers, const TsteConfig& config, std::vector<std::string> ids = {});

/// Pairwise Euclidean distances between embedded materials.
DistanceMatrix tste_distance_matrix(const TsteEmbedding& embedding);

/// CSV `material_id,x0,...` plus a JSON sidecar (same stem, .json) with
/// {alpha, dim, loglik, satisfied_fraction, seed}.
void write_embedding(const std::filesystem::path& csv_path, const TsteEmbedding& embedding);
TsteEmbedding read_embedding(const std::filesystem::path& csv_path);

}  // namespace matsim
