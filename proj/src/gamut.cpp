#include "matsim/gamut.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "matsim/errors.hpp"

namespace matsim {

void GamutProblem::validate(std::size_t input_dim) const {
    if (basis.cols() < 2) throw ValidationError("gamut: need at least 2 basis vectors");
    if (static_cast<std::size_t>(target.size()) != input_dim || static_cast<std::size_t>(basis.rows()) != input_dim) {
        throw ValidationError("gamut: dimension mismatch (encoder input " + std::to_string(input_dim) + ", target " +
                              std::to_string(target.size()) + ", basis " + std::to_string(basis.rows()) + ")");
    }
    if (!target.allFinite() || !basis.allFinite()) throw ValidationError("gamut: non-finite descriptor");
}

Vector simplex_project(const Vector& v) {
    if (v.size() == 0 || !v.allFinite()) throw ValidationError("simplex_project: need a finite non-empty vector");
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cumulative += u[i];
        const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

Vector box_project(const Vector& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

double gamut_objective(const GamutProblem& problem, const EncoderModel& model, const Vector& weights,
                       Vector* gradient) {
    const Vector mixed = problem.basis * weights;
    ForwardCache cache;
    Matrix inputs(mixed.size(), 2);
    inputs.col(0) = mixed;
    inputs.col(1) = problem.target;
    const Matrix features = encode(model, inputs, &cache);
    const Vector diff = features.col(0) - features.col(1);
    const double value = diff.squaredNorm();
    if (gradient) {
        Matrix feature_grad = Matrix::Zero(features.rows(), 2);
        feature_grad.col(0) = 2.0 * diff;
        const auto grads = encoder_backward(model, cache, feature_grad);
        *gradient = problem.basis.transpose() * grads.inputs.col(0);
        if (!gradient->allFinite()) throw ComputeError("gamut: non-finite gradient");
    }
    return value;
}

GamutSolution gamut_solve(const GamutProblem& problem, const EncoderModel& model, const GamutConfig& config) {
    problem.validate(model.input_dim());
    if (!(config.step > 0.0) || !(config.tol >= 0.0)) throw ValidationError("gamut: step must be positive, tol non-negative");
    const auto n = problem.basis.cols();
    auto project = [&](const Vector& v) { return config.simplex ? simplex_project(v) : box_project(v); };

    GamutSolution sol;
    sol.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
    Vector grad;
    double value = gamut_objective(problem, model, sol.weights, &grad);
    sol.initial_objective = value;
    sol.trace.push_back(value);
    double step = config.step;
    for (std::size_t it = 0; it < config.max_iters; ++it) {
        sol.iterations = it + 1;
        if (value == 0.0) break;
        const Vector candidate = project(sol.weights - step * grad);
        Vector candidate_grad;
        const double candidate_value = gamut_objective(problem, model, candidate, &candidate_grad);
        if (candidate_value > value) {
            step *= 0.5;
            if (step < 1e-30) break;
            continue;
        }
        const double moved = (candidate - sol.weights).cwiseAbs().maxCoeff();
        sol.weights = candidate;
        grad = std::move(candidate_grad);
        value = candidate_value;
        sol.trace.push_back(value);
        step *= 1.5;
        if (moved < config.tol) break;
    }
    sol.objective = value;
    return sol;
}

namespace {
Vector descriptor_of(const nlohmann::json& j, const DatasetBundle* bundle, std::string* label) {
    if (j.is_string()) {
        const auto id = j.get<std::string>();
        if (!bundle) throw ValidationError("gamut: view id " + id + " needs a dataset");
        const auto v = bundle->view_index(id);
        if (!v) throw ValidationError("gamut: unknown view " + id);
        *label = id;
        return bundle->descriptor(*v);
    }
    if (j.is_array()) {
        const auto values = j.get<std::vector<double>>();
        *label = "inline";
        return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
    }
    throw ValidationError("gamut: descriptor must be a view id or a number array");
}
}  // namespace

GamutProblem gamut_problem_from_json(const nlohmann::json& j, const DatasetBundle* bundle) {
    try {
        GamutProblem p;
        std::string label;
        p.target = descriptor_of(j.at("target"), bundle, &label);
        const auto& basis = j.at("basis");
        if (!basis.is_array() || basis.size() < 2) throw ValidationError("gamut: need at least 2 basis vectors");
        std::vector<Vector> cols;
        for (const auto& b : basis) {
            cols.push_back(descriptor_of(b, bundle, &label));
            p.basis_labels.push_back(label);
            if (cols.back().size() != p.target.size()) throw ValidationError("gamut: basis dimension mismatch");
        }
        p.basis.resize(p.target.size(), static_cast<Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) p.basis.col(static_cast<Index>(i)) = cols[i];
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed gamut problem: ") + e.what());
    }
}

GamutProblem read_gamut_problem(const std::filesystem::path& path, const DatasetBundle* bundle) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    try {
        return gamut_problem_from_json(nlohmann::json::parse(in), bundle);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

nlohmann::ordered_json gamut_solution_to_json(const GamutSolution& solution, const GamutProblem& problem) {
    nlohmann::ordered_json j;
    j["weights"] = std::vector<double>(solution.weights.data(), solution.weights.data() + solution.weights.size());
    j["basis"] = problem.basis_labels;
    j["objective"] = solution.objective;
    j["initial_objective"] = solution.initial_objective;
    j["iterations"] = solution.iterations;
    return j;
}

}  // namespace matsim
