#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "matsim/answers.hpp"
#include "matsim/dataset.hpp"
#include "matsim/encoder.hpp"
#include "matsim/types.hpp"

namespace matsim {

/// Symmetric, non-negative material distance matrix with a zero diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::vector<std::string> ids, Matrix values);

    const std::vector<std::string>& ids() const { return ids_; }
    const Matrix& values() const { return values_; }
    std::optional<Index> index_of(const std::string& id) const;
    /// Throws ValidationError for unknown ids.
    double at(const std::string& x, const std::string& y) const;

private:
    std::vector<std::string> ids_;
    Matrix values_;
    std::unordered_map<std::string, Index> lookup_;
};

using ChoicePredictor = std::function<Side(const std::string& r, const std::string& a, const std::string& b)>;
/// Probability that `a` is judged closer to `r` than `b`.
using ProbabilityModel = std::function<double(const std::string& r, const std::string& a, const std::string& b)>;

/// Always returns the modal vote (A on ties).
ChoicePredictor oracle_predictor(const AnswerStore& answers);
/// Picks the candidate at smaller distance (A on ties).
ChoicePredictor nearest_predictor(const DistanceMatrix& distances);
/// p = s_ra / (s_ra + s_rb) with s = 1 / (1 + d).
ProbabilityModel similarity_probability(const DistanceMatrix& distances);

struct AccuracyResult {
    double raw = 0.0;
    double majority = 0.0;
    std::size_t votes = 0;
    std::size_t comparisons = 0;  // non-tied comparisons in the majority denominator
};

/// Raw: fraction of individual votes matched. Majority: fraction of non-tied
/// comparisons whose modal vote is matched.
AccuracyResult accuracy(const AnswerStore& answers, const ChoicePredictor& predict);

enum class PerplexityMode { Raw, Majority };

struct PerplexityResult {
    double value = 0.0;
    std::size_t terms = 0;
    std::size_t clamped = 0;  // probabilities raised to 1e-12
};

/// 2^(-mean log2 p_chosen), over votes (raw) or over non-tied comparisons using the modal side (majority).
PerplexityResult perplexity(const AnswerStore& answers, const ProbabilityModel& prob, PerplexityMode mode);

/// Mean over view pairs of squared feature distance, per material pair.
DistanceMatrix distance_matrix_from_model(const EncoderModel& model, const DatasetBundle& bundle);

struct MatrixError {
    double mean_abs_error = 0.0;
    double ci95 = 0.0;
    std::size_t pairs = 0;
};

/// Both matrices are divided by their own maximum; the mean absolute difference is
/// taken over i < j with a normal-approximation 95% half-width.
MatrixError mean_matrix_error(const DistanceMatrix& candidate, const DistanceMatrix& reference);

struct CategoryStats {
    std::size_t materials = 0;
    std::size_t answers = 0;
    std::size_t comparisons = 0;
    double raw = 0.0;
    double majority = 0.0;

    bool operator==(const CategoryStats&) const = default;
};

struct EvaluationReport {
    double raw_accuracy = 0.0;
    double majority_accuracy = 0.0;
    std::optional<double> perplexity_raw;
    std::optional<double> perplexity_majority;
    std::size_t n_answers = 0;
    std::size_t n_comparisons = 0;
    std::size_t clamped_probabilities = 0;
    std::map<std::string, CategoryStats> per_category;
    std::optional<MatrixError> matrix_error;

    bool operator==(const EvaluationReport& other) const;
};

/// Categories are assigned by the reference material; ids missing from
/// `material_category` fall into "unknown".
EvaluationReport evaluate(const AnswerStore& answers, const ChoicePredictor& predict, const ProbabilityModel* prob,
                          const std::map<std::string, std::string>& material_category);

std::map<std::string, std::string> category_map(const DatasetBundle& bundle);

nlohmann::ordered_json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);
void write_report(const std::filesystem::path& path, const EvaluationReport& report);
EvaluationReport read_report(const std::filesystem::path& path);

}  // namespace matsim
