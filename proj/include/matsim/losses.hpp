#pragma once

#include <cstddef>
#include <span>

#include "matsim/types.hpp"

namespace matsim {

/// Distances, similarities and choice probabilities for one (r, a, b) triplet.
/// d is the squared Euclidean distance, s = 1 / (1 + d), p_ra = s_ra / (s_ra + s_rb).
struct TripletGeometry {
    double d_ra = 0.0;
    double d_rb = 0.0;
    double s_ra = 1.0;
    double s_rb = 1.0;
    double p_ra = 0.5;
    double p_rb = 0.5;
};

TripletGeometry triplet_geometry(const Vector& f_r, const Vector& f_a, const Vector& f_b);
TripletGeometry geometry_from_distances(double d_ra, double d_rb);

/// Column indices into a feature matrix; `a` is the side humans chose.
struct IndexTriplet {
    Index r = 0;
    Index a = 0;
    Index b = 0;

    bool operator==(const IndexTriplet&) const = default;
};

/// A loss value and its gradient with respect to the matrix it was evaluated on
/// (features: D x n, or class probabilities: K x n).
struct LossResult {
    double value = 0.0;
    Matrix grad;
};

// Per-triplet terms may be evaluated on `threads` workers. Gradients are always
// reduced in triplet index order so any thread count gives identical bits.

/// Mean over triplets of [d_ra - d_rb + mu]_+.
LossResult triplet_loss(const Matrix& features, std::span<const IndexTriplet> triplets, double mu,
                        unsigned threads = 1);

/// Mean over triplets of -ln p_ra (p_ra clamped to >= 1e-12).
LossResult similarity_loss(const Matrix& features, std::span<const IndexTriplet> triplets, unsigned threads = 1);

/// Label-smoothed cross entropy: mean over columns of
/// -sum_k [(1 - eps) l_k + eps / K] ln p_k. Gradient is with respect to the probabilities.
LossResult cross_entropy_loss(const Matrix& probabilities, std::span<const int> labels, double epsilon);

/// Batch-hard triplet loss: for each anchor, [max same-label d - min other-label d + mu]_+, averaged.
LossResult batch_hard_triplet_loss(const Matrix& features, std::span<const int> labels, double mu);

struct LossConfig {
    double margin_mu = 0.3;
    double weight_tl = 1.0;
    double weight_p = 1.0;
    double weight_ce = 0.0;
    double weight_btl = 0.0;
    double label_smoothing_epsilon = 0.1;
    std::size_t n_classes = 0;

    void validate() const;
};

struct LossBatch {
    const Matrix* features = nullptr;
    std::span<const IndexTriplet> triplets;
    std::span<const int> labels;
    const Matrix* class_probabilities = nullptr;
};

struct CombinedLoss {
    double value = 0.0;
    double triplet = 0.0;
    double similarity = 0.0;
    double cross_entropy = 0.0;
    double batch_hard = 0.0;
    Matrix feature_grad;
    Matrix probability_grad;
};

/// Weighted sum of the enabled terms. Throws ValidationError when an enabled term
/// lacks its inputs.
CombinedLoss combined_loss(const LossBatch& batch, const LossConfig& config, unsigned threads = 1);

}  // namespace matsim
