#include "matsim/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "matsim/errors.hpp"

namespace matsim {

double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

double information_gain(std::span<const double> tau, std::span<const double> p_a) {
    if (tau.size() != p_a.size() || tau.empty()) throw ValidationError("information_gain: size mismatch");
    double total = 0.0, mixed = 0.0, conditional = 0.0;
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (!(tau[i] >= 0.0)) throw ValidationError("information_gain: negative posterior weight");
        total += tau[i];
        mixed += tau[i] * p_a[i];
        conditional += tau[i] * binary_entropy(p_a[i]);
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("information_gain: posterior is not normalized");
    return std::max(0.0, binary_entropy(mixed) - conditional);
}

Posterior reference_posterior(const RowMatrix& points, Index reference, std::span<const VoteConstraint> votes,
                              double alpha) {
    Posterior post;
    const Index n = points.rows();
    post.locations.resize(static_cast<std::size_t>(n));
    std::iota(post.locations.begin(), post.locations.end(), Index{0});
    std::vector<double> log_w(static_cast<std::size_t>(n), 0.0);
    for (const auto& v : votes) {
        if (v.reference != reference) continue;
        for (Index x = 0; x < n; ++x) {
            const double p = tste_probability(points.row(x).transpose(), points.row(v.chosen).transpose(),
                                              points.row(v.other).transpose(), alpha);
            log_w[static_cast<std::size_t>(x)] += std::log(std::max(p, 1e-300));
        }
    }
    const double top = *std::max_element(log_w.begin(), log_w.end());
    post.weights.resize(log_w.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < log_w.size(); ++i) sum += post.weights[i] = std::exp(log_w[i] - top);
    for (auto& w : post.weights) w /= sum;
    return post;
}

double pair_information_gain(const Posterior& posterior, const RowMatrix& points, Index a, Index b, double alpha) {
    std::vector<double> p(posterior.locations.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = tste_probability(points.row(posterior.locations[i]).transpose(), points.row(a).transpose(),
                                points.row(b).transpose(), alpha);
    }
    return information_gain(posterior.weights, p);
}

std::vector<std::pair<std::pair<Index, Index>, double>> top_pairs(const Posterior& posterior, const RowMatrix& points,
                                                                  std::span<const std::pair<Index, Index>> candidates,
                                                                  std::size_t count, double alpha) {
    std::vector<std::pair<std::pair<Index, Index>, double>> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) scored.push_back({c, pair_information_gain(posterior, points, c.first, c.second, alpha)});
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    if (scored.size() > count) scored.resize(count);
    return scored;
}

std::vector<MaterialTriplet> SamplingPlan::triplets() const {
    std::vector<MaterialTriplet> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.reference, p.a, p.b});
    return out;
}

SamplingPlan select_next_pairs(const std::vector<std::string>& ids, const AnswerStore& answers,
                               const SamplingConfig& config, std::size_t iteration, std::mt19937_64& rng,
                               const std::set<ComparisonKey>& also_exclude, TsteEmbedding* embedding_out) {
    const auto n = static_cast<Index>(ids.size());
    if (n < 3) throw ValidationError("select_next_pairs: need at least 3 materials");
    if (config.pairs_per_reference == 0) throw ValidationError("select_next_pairs: pairs_per_reference must be >= 1");

    // Pairs already asked, per reference, as (lo, hi) row indices.
    std::unordered_map<std::string, Index> lookup;
    for (Index i = 0; i < n; ++i) lookup.emplace(ids[static_cast<std::size_t>(i)], i);
    std::vector<std::set<std::pair<Index, Index>>> asked(static_cast<std::size_t>(n));
    auto mark = [&](const ComparisonKey& key) {
        const auto r = lookup.find(key.reference);
        const auto x = lookup.find(key.first);
        const auto y = lookup.find(key.second);
        if (r == lookup.end() || x == lookup.end() || y == lookup.end()) {
            throw ValidationError("select_next_pairs: answer names an unknown material");
        }
        asked[static_cast<std::size_t>(r->second)].insert({std::min(x->second, y->second), std::max(x->second, y->second)});
    };
    for (const auto& [key, tally] : answers.tallies()) mark(key);
    for (const auto& key : also_exclude) mark(key);

    SamplingPlan plan;
    plan.iteration = iteration;
    const bool random_mode = config.bootstrap || answers.empty();

    TsteEmbedding embedding;
    std::vector<VoteConstraint> votes;
    if (!random_mode) {
        embedding = tste_fit(answers, config.tste, ids);
        votes = vote_constraints(answers, ids);
    }

    double ig_sum = 0.0;
    for (Index r = 0; r < n; ++r) {
        std::vector<std::pair<Index, Index>> unasked;
        for (Index a = 0; a < n; ++a) {
            for (Index b = a + 1; b < n; ++b) {
                if (a == r || b == r || asked[static_cast<std::size_t>(r)].count({a, b})) continue;
                unasked.push_back({a, b});
            }
        }
        if (unasked.empty()) {
            plan.exhausted_references.push_back(ids[static_cast<std::size_t>(r)]);
            continue;
        }
        std::shuffle(unasked.begin(), unasked.end(), rng);
        std::vector<std::pair<std::pair<Index, Index>, double>> chosen;
        if (random_mode) {
            for (std::size_t i = 0; i < std::min(config.pairs_per_reference, unasked.size()); ++i) {
                chosen.push_back({unasked[i], 0.0});
            }
        } else {
            if (!config.exhaustive && unasked.size() > config.candidate_pool) unasked.resize(config.candidate_pool);
            const auto post = reference_posterior(embedding.points, r, votes, config.tste.alpha);
            chosen = top_pairs(post, embedding.points, unasked, config.pairs_per_reference, config.tste.alpha);
        }
        for (const auto& [pair, ig] : chosen) {
            // Randomize presentation side.
            const bool swap = std::bernoulli_distribution(0.5)(rng);
            const auto& first = ids[static_cast<std::size_t>(swap ? pair.second : pair.first)];
            const auto& second = ids[static_cast<std::size_t>(swap ? pair.first : pair.second)];
            plan.pairs.push_back({ids[static_cast<std::size_t>(r)], first, second, ig});
            ig_sum += ig;
        }
    }
    if (!random_mode && !plan.pairs.empty()) {
        plan.mean_information_gain = ig_sum / static_cast<double>(plan.pairs.size());
    }
    if (embedding_out) *embedding_out = std::move(embedding);
    return plan;
}

nlohmann::ordered_json plan_to_json(const SamplingPlan& plan) {
    nlohmann::ordered_json j;
    j["iteration"] = plan.iteration;
    j["mean_information_gain"] =
        plan.mean_information_gain ? nlohmann::ordered_json(*plan.mean_information_gain) : nlohmann::ordered_json(nullptr);
    j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : plan.pairs) {
        j["pairs"].push_back({{"reference", p.reference}, {"a", p.a}, {"b", p.b}, {"information_gain", p.information_gain}});
    }
    if (!plan.exhausted_references.empty()) j["exhausted_references"] = plan.exhausted_references;
    return j;
}

SamplingPlan plan_from_json(const nlohmann::json& j) {
    try {
        SamplingPlan plan;
        plan.iteration = j.at("iteration").get<std::size_t>();
        if (!j.at("mean_information_gain").is_null()) plan.mean_information_gain = j.at("mean_information_gain").get<double>();
        for (const auto& p : j.at("pairs")) {
            plan.pairs.push_back({p.at("reference").get<std::string>(), p.at("a").get<std::string>(),
                                  p.at("b").get<std::string>(), p.value("information_gain", 0.0)});
        }
        if (j.contains("exhausted_references")) {
            plan.exhausted_references = j.at("exhausted_references").get<std::vector<std::string>>();
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed plan: ") + e.what());
    }
}

void write_plan(const std::filesystem::path& path, const SamplingPlan& plan) {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << plan_to_json(plan).dump(2) << '\n';
}

SamplingPlan read_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    try {
        return plan_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void append_convergence_log(const std::filesystem::path& path, std::size_t iteration, double mean_ig) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw ComputeError("cannot write " + path.string());
    if (fresh) out << "iteration,mean_ig\n";
    out << iteration << ',' << nlohmann::json(mean_ig).dump() << '\n';
}

void HitConfig::validate() const {
    if (hit_size == 0) throw ValidationError("hit: hit_size must be positive");
    if (n_training + n_control >= hit_size) {
        throw ValidationError("hit: training and control trials leave no room for unique trials");
    }
    if (n_control > unique_trials()) throw ValidationError("hit: more control trials than unique trials");
}

std::vector<MaterialTriplet> obvious_triplets(const std::vector<std::string>& ids, const RowMatrix& points,
                                              std::size_t count) {
    const Index n = points.rows();
    if (n < 3 || static_cast<Index>(ids.size()) != n) throw ValidationError("obvious_triplets: need at least 3 points");
    struct Scored {
        double ratio;
        Index r, near, far;
    };
    std::vector<Scored> scored;
    for (Index r = 0; r < n; ++r) {
        Index near = -1, far = -1;
        double d_near = 0.0, d_far = 0.0;
        for (Index x = 0; x < n; ++x) {
            if (x == r) continue;
            const double d = (points.row(r) - points.row(x)).squaredNorm();
            if (near < 0 || d < d_near) { near = x; d_near = d; }
            if (far < 0 || d > d_far) { far = x; d_far = d; }
        }
        if (near == far) continue;
        scored.push_back({d_far / std::max(d_near, 1e-12), r, near, far});
    }
    if (scored.empty()) throw ValidationError("obvious_triplets: degenerate embedding");
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) { return x.ratio > y.ratio; });
    std::vector<MaterialTriplet> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& s = scored[i % scored.size()];
        out.push_back({ids[static_cast<std::size_t>(s.r)], ids[static_cast<std::size_t>(s.near)],
                       ids[static_cast<std::size_t>(s.far)]});
    }
    return out;
}

HitPlan build_hit(std::span<const MaterialTriplet> unique, const HitConfig& config,
                  const std::vector<std::string>& ids, const RowMatrix& points, std::mt19937_64& rng) {
    config.validate();
    const std::size_t n_unique = config.unique_trials();
    if (unique.size() < n_unique) {
        throw ValidationError("hit: insufficient unique trials (" + std::to_string(unique.size()) + " available, " +
                              std::to_string(n_unique) + " needed)");
    }
    HitPlan plan;
    if (config.n_training > 0) {
        for (auto& t : obvious_triplets(ids, points, config.n_training)) {
            // Present the obvious answer on a random side.
            if (std::bernoulli_distribution(0.5)(rng)) std::swap(t.a, t.b);
            plan.trials.push_back({std::move(t), TrialKind::Training, std::nullopt});
        }
    }

    // Main section as indices: values < n_unique are unique trials, others are controls.
    std::vector<std::size_t> order(n_unique);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> picks(n_unique);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(config.n_control);
    for (std::size_t c = 0; c < picks.size(); ++c) {
        const auto pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), picks[c]) - order.begin());
        std::uniform_int_distribution<std::size_t> where(pos + 1, order.size());
        order.insert(order.begin() + static_cast<std::ptrdiff_t>(where(rng)), n_unique + c);
    }
    const std::size_t offset = plan.trials.size();
    std::vector<std::size_t> position_of_unique(n_unique);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] < n_unique) position_of_unique[order[i]] = offset + i;
    }
    for (auto idx : order) {
        if (idx < n_unique) {
            plan.trials.push_back({unique[idx], TrialKind::Trial, std::nullopt});
        } else {
            const auto orig = picks[idx - n_unique];
            const auto& t = unique[orig];
            plan.trials.push_back({{t.reference, t.b, t.a}, TrialKind::Control, position_of_unique[orig]});
        }
    }
    return plan;
}

WorkerVerdict judge_worker(std::span<const TripletAnswer> hit_answers) {
    WorkerVerdict verdict;
    std::map<ComparisonKey, const TripletAnswer*> originals;
    for (const auto& a : hit_answers) {
        if (a.kind == TrialKind::Trial) originals.emplace(ComparisonKey::of(a.reference, a.option_a, a.option_b), &a);
    }
    for (const auto& a : hit_answers) {
        if (a.kind != TrialKind::Control) continue;
        const auto it = originals.find(ComparisonKey::of(a.reference, a.option_a, a.option_b));
        if (it == originals.end()) {
            throw ValidationError("judge_worker: control (" + a.reference + ", " + a.option_a + ", " + a.option_b +
                                  ") has no answered original");
        }
        if (it->second->chosen_material() != a.chosen_material()) ++verdict.inconsistencies;
    }
    verdict.valid = verdict.inconsistencies <= kMaxControlInconsistencies;
    return verdict;
}

}  // namespace matsim
