#include "matsim/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "matsim/errors.hpp"

namespace matsim {
namespace {

constexpr double kMinProbability = 1e-12;

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw ValidationError(std::string("triplet_geometry: non-finite ") + what);
}

void check_triplets(const Matrix& features, std::span<const IndexTriplet> triplets, const char* who) {
    if (triplets.empty()) throw ValidationError(std::string(who) + ": empty batch");
    const Index n = features.cols();
    for (const auto& t : triplets) {
        if (t.r < 0 || t.a < 0 || t.b < 0 || t.r >= n || t.a >= n || t.b >= n) {
            throw ValidationError(std::string(who) + ": triplet index out of range");
        }
    }
}

// Contribution of one triplet: loss value and its derivatives with respect to d_ra and d_rb.
struct TripletTerm {
    double value = 0.0;
    double w_a = 0.0;
    double w_b = 0.0;
};

template <typename TermFn>
LossResult reduce_triplets(const Matrix& features, std::span<const IndexTriplet> triplets, unsigned threads,
                           TermFn&& term) {
    const std::size_t count = triplets.size();
    std::vector<TripletTerm> terms(count);
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) terms[i] = term(triplets[i]);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < count; i += workers) terms[i] = term(triplets[i]);
            });
        }
        for (auto& t : pool) t.join();
    }
    LossResult out;
    out.grad = Matrix::Zero(features.rows(), features.cols());
    const double scale = 1.0 / static_cast<double>(count);
    Vector ga(features.rows()), gb(features.rows());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& t = triplets[i];
        out.value += terms[i].value;
        if (terms[i].w_a == 0.0 && terms[i].w_b == 0.0) continue;
        // d d_ra / d f_r = 2 (f_r - f_a), d d_ra / d f_a = -2 (f_r - f_a); likewise for b.
        ga.noalias() = (2.0 * scale * terms[i].w_a) * (features.col(t.r) - features.col(t.a));
        gb.noalias() = (2.0 * scale * terms[i].w_b) * (features.col(t.r) - features.col(t.b));
        out.grad.col(t.r) += ga + gb;
        out.grad.col(t.a) -= ga;
        out.grad.col(t.b) -= gb;
    }
    out.value *= scale;
    return out;
}

}  // namespace

TripletGeometry geometry_from_distances(double d_ra, double d_rb) {
    TripletGeometry g;
    g.d_ra = d_ra;
    g.d_rb = d_rb;
    g.s_ra = 1.0 / (1.0 + d_ra);
    g.s_rb = 1.0 / (1.0 + d_rb);
    g.p_ra = g.s_ra / (g.s_rb + g.s_ra);
    g.p_rb = 1.0 - g.p_ra;
    return g;
}

TripletGeometry triplet_geometry(const Vector& f_r, const Vector& f_a, const Vector& f_b) {
    if (f_r.size() != f_a.size() || f_r.size() != f_b.size()) {
        throw ValidationError("triplet_geometry: dimension mismatch");
    }
    require_finite(f_r, "reference");
    require_finite(f_a, "candidate a");
    require_finite(f_b, "candidate b");
    return geometry_from_distances((f_r - f_a).squaredNorm(), (f_r - f_b).squaredNorm());
}

LossResult triplet_loss(const Matrix& features, std::span<const IndexTriplet> triplets, double mu,
                        unsigned threads) {
    check_triplets(features, triplets, "triplet_loss");
    return reduce_triplets(features, triplets, threads, [&](const IndexTriplet& t) {
        TripletTerm term;
        const double hinge = (features.col(t.r) - features.col(t.a)).squaredNorm() -
                             (features.col(t.r) - features.col(t.b)).squaredNorm() + mu;
        if (hinge <= 0.0) return term;
        term.value = hinge;
        term.w_a = 1.0;
        term.w_b = -1.0;
        return term;
    });
}

LossResult similarity_loss(const Matrix& features, std::span<const IndexTriplet> triplets, unsigned threads) {
    check_triplets(features, triplets, "similarity_loss");
    return reduce_triplets(features, triplets, threads, [&](const IndexTriplet& t) {
        TripletTerm term;
        const auto g = geometry_from_distances((features.col(t.r) - features.col(t.a)).squaredNorm(),
                                               (features.col(t.r) - features.col(t.b)).squaredNorm());
        if (g.p_ra < kMinProbability) {
            term.value = -std::log(kMinProbability);
            return term;
        }
        term.value = -std::log(g.p_ra);
        // d(-ln p_ra)/d d_ra = s_ra p_rb, d(-ln p_ra)/d d_rb = -s_rb p_rb
        term.w_a = g.s_ra * g.p_rb;
        term.w_b = -g.s_rb * g.p_rb;
        return term;
    });
}

LossResult cross_entropy_loss(const Matrix& probabilities, std::span<const int> labels, double epsilon) {
    const Index k = probabilities.rows();
    const Index n = probabilities.cols();
    if (n == 0) throw ValidationError("cross_entropy_loss: empty batch");
    if (static_cast<std::size_t>(n) != labels.size()) throw ValidationError("cross_entropy_loss: label count mismatch");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("cross_entropy_loss: epsilon must be in [0, 1)");
    LossResult out;
    out.grad = Matrix::Zero(k, n);
    const double uniform = 1.0 / static_cast<double>(k);
    for (Index i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= k) throw ValidationError("cross_entropy_loss: label out of range");
        const auto col = probabilities.col(i);
        if ((col.array() < 0.0).any() || !col.allFinite() || std::abs(col.sum() - 1.0) > 1e-9) {
            throw ValidationError("cross_entropy_loss: column " + std::to_string(i) + " is not a probability distribution");
        }
        for (Index c = 0; c < k; ++c) {
            const double target = (c == label ? 1.0 - epsilon : 0.0) + epsilon * uniform;
            if (target == 0.0) continue;
            const double p = std::max(col(c), kMinProbability);
            out.value -= target * std::log(p);
            if (col(c) >= kMinProbability) out.grad(c, i) = -target / (p * static_cast<double>(n));
        }
    }
    out.value /= static_cast<double>(n);
    return out;
}

LossResult batch_hard_triplet_loss(const Matrix& features, std::span<const int> labels, double mu) {
    const Index n = features.cols();
    if (n == 0) throw ValidationError("batch_hard_triplet_loss: empty batch");
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw ValidationError("batch_hard_triplet_loss: label count mismatch");
    }
    LossResult out;
    out.grad = Matrix::Zero(features.rows(), n);
    const double scale = 1.0 / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
        Index pos = -1, neg = -1;
        double d_pos = -1.0, d_neg = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = (features.col(i) - features.col(j)).squaredNorm();
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
                if (d > d_pos) { d_pos = d; pos = j; }
            } else if (d < d_neg) {
                d_neg = d;
                neg = j;
            }
        }
        if (pos < 0 || neg < 0) {
            throw ValidationError("batch_hard_triplet_loss: anchor " + std::to_string(i) +
                                  " lacks a positive or a negative in the batch");
        }
        const double hinge = d_pos - d_neg + mu;
        if (hinge <= 0.0) continue;
        out.value += hinge;
        const Vector ip = features.col(i) - features.col(pos);
        const Vector in = features.col(i) - features.col(neg);
        out.grad.col(i) += scale * 2.0 * (ip - in);
        out.grad.col(pos) -= scale * 2.0 * ip;
        out.grad.col(neg) += scale * 2.0 * in;
    }
    out.value *= scale;
    return out;
}

void LossConfig::validate() const {
    if (!(margin_mu >= 0.0)) throw ValidationError("loss config: margin must be >= 0");
    if (!(weight_tl >= 0.0 && weight_p >= 0.0 && weight_ce >= 0.0 && weight_btl >= 0.0)) {
        throw ValidationError("loss config: weights must be >= 0");
    }
    if (!(label_smoothing_epsilon >= 0.0 && label_smoothing_epsilon < 1.0)) {
        throw ValidationError("loss config: epsilon must be in [0, 1)");
    }
    if (weight_tl + weight_p + weight_ce + weight_btl <= 0.0) throw ValidationError("loss config: all weights are zero");
}

CombinedLoss combined_loss(const LossBatch& batch, const LossConfig& config, unsigned threads) {
    config.validate();
    if (!batch.features) throw ValidationError("combined_loss: features missing");
    const Matrix& f = *batch.features;
    CombinedLoss out;
    out.feature_grad = Matrix::Zero(f.rows(), f.cols());
    if (config.weight_tl > 0.0) {
        auto r = triplet_loss(f, batch.triplets, config.margin_mu, threads);
        out.triplet = r.value;
        out.value += config.weight_tl * r.value;
        out.feature_grad += config.weight_tl * r.grad;
    }
    if (config.weight_p > 0.0) {
        auto r = similarity_loss(f, batch.triplets, threads);
        out.similarity = r.value;
        out.value += config.weight_p * r.value;
        out.feature_grad += config.weight_p * r.grad;
    }
    if (config.weight_ce > 0.0) {
        if (!batch.class_probabilities || batch.labels.empty()) {
            throw ValidationError("combined_loss: cross-entropy enabled but class probabilities or labels missing");
        }
        auto r = cross_entropy_loss(*batch.class_probabilities, batch.labels, config.label_smoothing_epsilon);
        out.cross_entropy = r.value;
        out.value += config.weight_ce * r.value;
        out.probability_grad = config.weight_ce * r.grad;
    }
    if (config.weight_btl > 0.0) {
        if (batch.labels.empty()) throw ValidationError("combined_loss: batch-hard term enabled but labels missing");
        auto r = batch_hard_triplet_loss(f, batch.labels, config.margin_mu);
        out.batch_hard = r.value;
        out.value += config.weight_btl * r.value;
        out.feature_grad += config.weight_btl * r.grad;
    }
    return out;
}

}  // namespace matsim
