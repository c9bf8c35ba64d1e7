#include "matsim/metrics.hpp"

#include <cmath>
#include <fstream>

#include "matsim/errors.hpp"

namespace matsim {
namespace {

constexpr double kMinProbability = 1e-12;

Side checked(Side s) {
    if (s != Side::A && s != Side::B) throw ValidationError("predictor returned an invalid side");
    return s;
}

}  // namespace

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, Matrix values)
    : ids_(std::move(ids)), values_(std::move(values)) {
    const auto n = static_cast<Index>(ids_.size());
    if (values_.rows() != n || values_.cols() != n) throw ValidationError("distance matrix: shape does not match ids");
    if (!values_.allFinite()) throw ValidationError("distance matrix: non-finite entry");
    for (Index i = 0; i < n; ++i) {
        if (values_(i, i) != 0.0) throw ValidationError("distance matrix: non-zero diagonal");
        for (Index j = 0; j < n; ++j) {
            if (values_(i, j) < 0.0) throw ValidationError("distance matrix: negative entry");
            if (std::abs(values_(i, j) - values_(j, i)) > 1e-9) throw ValidationError("distance matrix: not symmetric");
        }
    }
    for (Index i = 0; i < n; ++i) {
        if (!lookup_.emplace(ids_[static_cast<std::size_t>(i)], i).second) {
            throw ValidationError("distance matrix: duplicate id '" + ids_[static_cast<std::size_t>(i)] + "'");
        }
    }
}

std::optional<Index> DistanceMatrix::index_of(const std::string& id) const {
    const auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

double DistanceMatrix::at(const std::string& x, const std::string& y) const {
    const auto i = index_of(x);
    const auto j = index_of(y);
    if (!i || !j) throw ValidationError("distance matrix: unknown material '" + (i ? y : x) + "'");
    return values_(*i, *j);
}

ChoicePredictor oracle_predictor(const AnswerStore& answers) {
    return [&answers](const std::string& r, const std::string& a, const std::string& b) {
        const auto key = ComparisonKey::of(r, a, b);
        const auto winner = answers.majority(key);
        return (!winner || *winner == a) ? Side::A : Side::B;
    };
}

ChoicePredictor nearest_predictor(const DistanceMatrix& distances) {
    return [&distances](const std::string& r, const std::string& a, const std::string& b) {
        return distances.at(r, a) <= distances.at(r, b) ? Side::A : Side::B;
    };
}

ProbabilityModel similarity_probability(const DistanceMatrix& distances) {
    return [&distances](const std::string& r, const std::string& a, const std::string& b) {
        const double s_a = 1.0 / (1.0 + distances.at(r, a));
        const double s_b = 1.0 / (1.0 + distances.at(r, b));
        return s_a / (s_a + s_b);
    };
}

AccuracyResult accuracy(const AnswerStore& answers, const ChoicePredictor& predict) {
    if (answers.empty()) throw ValidationError("accuracy: no answers");
    AccuracyResult out;
    std::size_t raw_hits = 0, majority_hits = 0;
    for (const auto& [key, tally] : answers.tallies()) {
        const Side s = checked(predict(key.reference, key.first, key.second));
        const std::size_t agree = s == Side::A ? tally.first : tally.second;
        raw_hits += agree;
        out.votes += tally.total();
        if (tally.tied()) continue;
        ++out.comparisons;
        const bool modal_first = tally.first > tally.second;
        if ((s == Side::A) == modal_first) ++majority_hits;
    }
    out.raw = static_cast<double>(raw_hits) / static_cast<double>(out.votes);
    out.majority = out.comparisons ? static_cast<double>(majority_hits) / static_cast<double>(out.comparisons) : 0.0;
    return out;
}

PerplexityResult perplexity(const AnswerStore& answers, const ProbabilityModel& prob, PerplexityMode mode) {
    if (answers.empty()) throw ValidationError("perplexity: no answers");
    PerplexityResult out;
    double sum_log2 = 0.0;
    auto add = [&](double p, double weight) {
        if (!(p <= 1.0) || std::isnan(p)) throw ValidationError("perplexity: probability outside (0, 1]");
        if (p < kMinProbability) {
            p = kMinProbability;
            out.clamped += static_cast<std::size_t>(weight);
        }
        sum_log2 += weight * std::log2(p);
    };
    for (const auto& [key, tally] : answers.tallies()) {
        const double p_first = prob(key.reference, key.first, key.second);
        if (!(p_first >= 0.0 && p_first <= 1.0)) throw ValidationError("perplexity: probability outside (0, 1]");
        if (mode == PerplexityMode::Raw) {
            if (tally.first) add(p_first, static_cast<double>(tally.first));
            if (tally.second) add(1.0 - p_first, static_cast<double>(tally.second));
            out.terms += tally.total();
        } else {
            if (tally.tied()) continue;
            add(tally.first > tally.second ? p_first : 1.0 - p_first, 1.0);
            ++out.terms;
        }
    }
    if (out.terms == 0) throw ValidationError("perplexity: no non-tied comparisons");
    out.value = std::exp2(-sum_log2 / static_cast<double>(out.terms));
    return out;
}

DistanceMatrix distance_matrix_from_model(const EncoderModel& model, const DatasetBundle& bundle) {
    const auto n = static_cast<Index>(bundle.materials().size());
    Matrix inputs(static_cast<Index>(bundle.descriptor_dim()), static_cast<Index>(bundle.views().size()));
    for (std::size_t v = 0; v < bundle.views().size(); ++v) inputs.col(static_cast<Index>(v)) = bundle.descriptor(v);
    const Matrix features = encode(model, inputs);
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const auto& vi = bundle.views_of(static_cast<std::size_t>(i));
        if (vi.empty()) throw ValidationError("distance matrix: material without views");
        for (Index j = i + 1; j < n; ++j) {
            const auto& vj = bundle.views_of(static_cast<std::size_t>(j));
            double sum = 0.0;
            for (auto x : vi) {
                for (auto y : vj) sum += (features.col(static_cast<Index>(x)) - features.col(static_cast<Index>(y))).squaredNorm();
            }
            d(i, j) = d(j, i) = sum / static_cast<double>(vi.size() * vj.size());
        }
    }
    return DistanceMatrix(bundle.material_ids(), std::move(d));
}

MatrixError mean_matrix_error(const DistanceMatrix& candidate, const DistanceMatrix& reference) {
    const auto n = static_cast<Index>(reference.ids().size());
    if (static_cast<Index>(candidate.ids().size()) != n) throw ValidationError("matrix error: material sets differ");
    std::vector<Index> map(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto j = candidate.index_of(reference.ids()[static_cast<std::size_t>(i)]);
        if (!j) throw ValidationError("matrix error: material sets differ");
        map[static_cast<std::size_t>(i)] = *j;
    }
    const double ref_max = reference.values().maxCoeff();
    const double cand_max = candidate.values().maxCoeff();
    if (!(ref_max > 0.0) || !(cand_max > 0.0)) throw ValidationError("matrix error: all-zero matrix");
    std::vector<double> errors;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const double c = candidate.values()(map[static_cast<std::size_t>(i)], map[static_cast<std::size_t>(j)]) / cand_max;
            errors.push_back(std::abs(c - reference.values()(i, j) / ref_max));
        }
    }
    MatrixError out;
    out.pairs = errors.size();
    if (errors.empty()) return out;
    double sum = 0.0;
    for (double e : errors) sum += e;
    out.mean_abs_error = sum / static_cast<double>(errors.size());
    if (errors.size() > 1) {
        double ss = 0.0;
        for (double e : errors) ss += (e - out.mean_abs_error) * (e - out.mean_abs_error);
        const double sd = std::sqrt(ss / static_cast<double>(errors.size() - 1));
        out.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(errors.size()));
    }
    return out;
}

std::map<std::string, std::string> category_map(const DatasetBundle& bundle) {
    std::map<std::string, std::string> out;
    for (const auto& m : bundle.materials()) out[m.id] = m.category;
    return out;
}

EvaluationReport evaluate(const AnswerStore& answers, const ChoicePredictor& predict, const ProbabilityModel* prob,
                          const std::map<std::string, std::string>& material_category) {
    EvaluationReport report;
    const auto overall = accuracy(answers, predict);
    report.raw_accuracy = overall.raw;
    report.majority_accuracy = overall.majority;
    report.n_answers = overall.votes;
    report.n_comparisons = overall.comparisons;
    if (prob) {
        const auto raw = perplexity(answers, *prob, PerplexityMode::Raw);
        report.perplexity_raw = raw.value;
        report.clamped_probabilities = raw.clamped;
        if (overall.comparisons > 0) report.perplexity_majority = perplexity(answers, *prob, PerplexityMode::Majority).value;
    }

    auto category_of = [&](const std::string& id) {
        const auto it = material_category.find(id);
        return it == material_category.end() ? std::string("unknown") : it->second;
    };
    for (const auto& [id, cat] : material_category) ++report.per_category[cat].materials;
    std::map<std::string, AnswerStore> split;
    for (const auto& a : answers.answers()) split[category_of(a.reference)].add(a);
    for (const auto& [cat, store] : split) {
        const auto acc = accuracy(store, predict);
        auto& stats = report.per_category[cat];
        stats.answers = acc.votes;
        stats.comparisons = acc.comparisons;
        stats.raw = acc.raw;
        stats.majority = acc.majority;
    }
    return report;
}

bool EvaluationReport::operator==(const EvaluationReport& o) const {
    auto same_error = [](const std::optional<MatrixError>& x, const std::optional<MatrixError>& y) {
        if (x.has_value() != y.has_value()) return false;
        return !x || (x->mean_abs_error == y->mean_abs_error && x->ci95 == y->ci95 && x->pairs == y->pairs);
    };
    return raw_accuracy == o.raw_accuracy && majority_accuracy == o.majority_accuracy &&
           perplexity_raw == o.perplexity_raw && perplexity_majority == o.perplexity_majority &&
           n_answers == o.n_answers && n_comparisons == o.n_comparisons &&
           clamped_probabilities == o.clamped_probabilities && per_category == o.per_category &&
           same_error(matrix_error, o.matrix_error);
}

nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
    nlohmann::ordered_json j;
    j["raw_accuracy"] = r.raw_accuracy;
    j["majority_accuracy"] = r.majority_accuracy;
    j["perplexity_raw"] = r.perplexity_raw ? nlohmann::ordered_json(*r.perplexity_raw) : nullptr;
    j["perplexity_majority"] = r.perplexity_majority ? nlohmann::ordered_json(*r.perplexity_majority) : nullptr;
    j["n_answers"] = r.n_answers;
    j["n_comparisons"] = r.n_comparisons;
    j["clamped_probabilities"] = r.clamped_probabilities;
    j["per_category"] = nlohmann::ordered_json::object();
    for (const auto& [cat, s] : r.per_category) {
        j["per_category"][cat] = {{"materials", s.materials},
                                  {"answers", s.answers},
                                  {"comparisons", s.comparisons},
                                  {"raw", s.raw},
                                  {"majority", s.majority}};
    }
    if (r.matrix_error) {
        j["matrix_error"] = {{"mean_abs_error", r.matrix_error->mean_abs_error},
                             {"ci95", r.matrix_error->ci95},
                             {"pairs", r.matrix_error->pairs}};
    }
    return j;
}

EvaluationReport report_from_json(const nlohmann::json& j) {
    try {
        EvaluationReport r;
        r.raw_accuracy = j.at("raw_accuracy").get<double>();
        r.majority_accuracy = j.at("majority_accuracy").get<double>();
        if (j.contains("perplexity_raw") && !j.at("perplexity_raw").is_null()) r.perplexity_raw = j.at("perplexity_raw").get<double>();
        if (j.contains("perplexity_majority") && !j.at("perplexity_majority").is_null()) {
            r.perplexity_majority = j.at("perplexity_majority").get<double>();
        }
        r.n_answers = j.value("n_answers", std::size_t{0});
        r.n_comparisons = j.value("n_comparisons", std::size_t{0});
        r.clamped_probabilities = j.value("clamped_probabilities", std::size_t{0});
        if (j.contains("per_category")) {
            for (const auto& [cat, s] : j.at("per_category").items()) {
                r.per_category[cat] = {s.at("materials").get<std::size_t>(), s.at("answers").get<std::size_t>(),
                                       s.value("comparisons", std::size_t{0}), s.at("raw").get<double>(),
                                       s.at("majority").get<double>()};
            }
        }
        if (j.contains("matrix_error")) {
            const auto& m = j.at("matrix_error");
            r.matrix_error = MatrixError{m.at("mean_abs_error").get<double>(), m.at("ci95").get<double>(),
                                         m.value("pairs", std::size_t{0})};
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

void write_report(const std::filesystem::path& path, const EvaluationReport& report) {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

EvaluationReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace matsim
