#include "matsim/tste.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "matsim/dataset.hpp"
#include "matsim/errors.hpp"

namespace matsim {
namespace {

double log_kernel(double q, double alpha) { return -0.5 * (alpha + 1.0) * std::log1p(q / alpha); }

}  // namespace

void TsteConfig::validate() const {
    if (!(alpha > 0.0)) throw ValidationError("tste: alpha must be positive");
    if (dim == 0) throw ValidationError("tste: dim must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("tste: learning rate must be positive");
    if (!(step_growth >= 1.0)) throw ValidationError("tste: step growth must be >= 1");
}

double tste_kernel(double squared_distance, double alpha) {
    return std::pow(1.0 + squared_distance / alpha, -0.5 * (alpha + 1.0));
}

double tste_probability(const Eigen::Ref<const Vector>& x_r, const Eigen::Ref<const Vector>& x_a,
                        const Eigen::Ref<const Vector>& x_b, double alpha) {
    const double k_a = tste_kernel((x_r - x_a).squaredNorm(), alpha);
    const double k_b = tste_kernel((x_r - x_b).squaredNorm(), alpha);
    return k_a / (k_a + k_b);
}

std::vector<VoteConstraint> vote_constraints(const AnswerStore& answers, const std::vector<std::string>& ids) {
    std::unordered_map<std::string, Index> lookup;
    for (std::size_t i = 0; i < ids.size(); ++i) lookup.emplace(ids[i], static_cast<Index>(i));
    auto idx = [&](const std::string& id) {
        const auto it = lookup.find(id);
        if (it == lookup.end()) throw ValidationError("tste: material '" + id + "' is not indexed");
        return it->second;
    };
    std::vector<VoteConstraint> out;
    out.reserve(answers.size());
    for (const auto& a : answers.answers()) {
        out.push_back({idx(a.reference), idx(a.chosen_material()), idx(a.other_material())});
    }
    return out;
}

double tste_log_likelihood(const RowMatrix& points, std::span<const VoteConstraint> votes, double alpha) {
    double sum = 0.0;
    for (const auto& v : votes) {
        const double lk_c = log_kernel((points.row(v.reference) - points.row(v.chosen)).squaredNorm(), alpha);
        const double lk_o = log_kernel((points.row(v.reference) - points.row(v.other)).squaredNorm(), alpha);
        // ln p = -ln(1 + exp(lk_o - lk_c))
        const double t = lk_o - lk_c;
        sum -= t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    return sum;
}

RowMatrix tste_gradient(const RowMatrix& points, std::span<const VoteConstraint> votes, double alpha) {
    RowMatrix grad = RowMatrix::Zero(points.rows(), points.cols());
    for (const auto& v : votes) {
        const Eigen::RowVectorXd rc = points.row(v.reference) - points.row(v.chosen);
        const Eigen::RowVectorXd ro = points.row(v.reference) - points.row(v.other);
        const double q_c = rc.squaredNorm();
        const double q_o = ro.squaredNorm();
        const double p = 1.0 / (1.0 + std::exp(log_kernel(q_o, alpha) - log_kernel(q_c, alpha)));
        // d ln p / d q_c and d ln p / d q_o
        const double g_c = -(1.0 - p) * (alpha + 1.0) / (2.0 * (alpha + q_c));
        const double g_o = (1.0 - p) * (alpha + 1.0) / (2.0 * (alpha + q_o));
        grad.row(v.reference) += 2.0 * (g_c * rc + g_o * ro);
        grad.row(v.chosen) -= 2.0 * g_c * rc;
        grad.row(v.other) -= 2.0 * g_o * ro;
    }
    return grad;
}

double satisfied_fraction(const RowMatrix& points, std::span<const VoteConstraint> votes) {
    if (votes.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& v : votes) {
        if ((points.row(v.reference) - points.row(v.chosen)).squaredNorm() <
            (points.row(v.reference) - points.row(v.other)).squaredNorm()) {
            ++ok;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(votes.size());
}

TsteEmbedding tste_fit(const AnswerStore& answers, const TsteConfig& config, std::vector<std::string> ids) {
    config.validate();
    if (answers.empty()) throw ValidationError("tste: no answers");
    if (ids.empty()) ids = answers.material_ids();
    const auto votes = vote_constraints(answers, ids);

    TsteEmbedding emb;
    emb.ids = std::move(ids);
    emb.alpha = config.alpha;
    emb.seed = config.seed;
    emb.points.resize(static_cast<Index>(emb.ids.size()), static_cast<Index>(config.dim));
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index i = 0; i < emb.points.size(); ++i) emb.points.data()[i] = 0.1 * gauss(rng);

    const double scale = 1.0 / static_cast<double>(votes.size());
    double lr = config.learning_rate;
    double current = tste_log_likelihood(emb.points, votes, config.alpha);
    emb.likelihood_trace.push_back(current);
    for (std::size_t it = 0; it < config.max_iters; ++it) {
        const RowMatrix grad = tste_gradient(emb.points, votes, config.alpha);
        bool accepted = false;
        for (std::size_t h = 0; h <= config.max_halvings; ++h) {
            const RowMatrix candidate = emb.points + (lr * scale) * grad;
            const double value = tste_log_likelihood(candidate, votes, config.alpha);
            if (value >= current) {
                emb.points = candidate;
                current = value;
                accepted = true;
                lr *= config.step_growth;
                break;
            }
            lr *= 0.5;
        }
        if (!accepted) {
            emb.stalled = true;
            break;
        }
        emb.likelihood_trace.push_back(current);
        ++emb.iterations;
    }
    emb.log_likelihood = current;
    emb.satisfied_fraction = satisfied_fraction(emb.points, votes);
    return emb;
}

DistanceMatrix tste_distance_matrix(const TsteEmbedding& embedding) {
    const Index n = embedding.points.rows();
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (embedding.points.row(i) - embedding.points.row(j)).norm();
    }
    return DistanceMatrix(embedding.ids, std::move(d));
}

void write_embedding(const std::filesystem::path& csv_path, const TsteEmbedding& embedding) {
    write_labelled_csv(csv_path, "material_id", "x", embedding.points, embedding.ids);
    nlohmann::ordered_json j;
    j["alpha"] = embedding.alpha;
    j["dim"] = embedding.points.cols();
    j["loglik"] = embedding.log_likelihood;
    j["satisfied_fraction"] = embedding.satisfied_fraction;
    j["seed"] = embedding.seed;
    auto sidecar = csv_path;
    sidecar.replace_extension(".json");
    std::ofstream out(sidecar);
    if (!out) throw ComputeError("cannot write " + sidecar.string());
    out << j.dump(2) << '\n';
}

TsteEmbedding read_embedding(const std::filesystem::path& csv_path) {
    TsteEmbedding emb;
    emb.points = read_labelled_csv(csv_path, "material_id", &emb.ids);
    auto sidecar = csv_path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (in) {
        try {
            const auto j = nlohmann::json::parse(in);
            emb.alpha = j.value("alpha", 5.0);
            emb.log_likelihood = j.value("loglik", 0.0);
            emb.satisfied_fraction = j.value("satisfied_fraction", 0.0);
            emb.seed = j.value("seed", std::uint64_t{0});
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(sidecar.string() + ": " + e.what());
        }
    }
    return emb;
}

}  // namespace matsim
