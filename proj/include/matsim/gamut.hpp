#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "matsim/dataset.hpp"
#include "matsim/encoder.hpp"
#include "matsim/types.hpp"

namespace matsim {

struct GamutProblem {
    Vector target;  // descriptor o
    Matrix basis;   // descriptor dim x number of inks (columns g_i)
    std::vector<std::string> basis_labels;

    void validate(std::size_t input_dim) const;
};

struct GamutConfig {
    std::size_t max_iters = 500;
    double step = 0.05;
    double tol = 1e-8;
    bool simplex = true;  // false: box [0,1] without the sum constraint
};

struct GamutSolution {
    Vector weights;
    double objective = 0.0;
    double initial_objective = 0.0;
    std::size_t iterations = 0;
    std::vector<double> trace;  // objective after each accepted step, starting at the initialization
};

/// Euclidean projection onto {w >= 0, sum w = 1}.
Vector simplex_project(const Vector& v);
Vector box_project(const Vector& v);

/// ||f(o) - f(G w)||^2 and its gradient with respect to w.
double gamut_objective(const GamutProblem& problem, const EncoderModel& model, const Vector& weights,
                       Vector* gradient = nullptr);

/// Projected gradient descent from uniform weights; a step that raises the objective
/// is retried at half length, an accepted one grows the step by half.
GamutSolution gamut_solve(const GamutProblem& problem, const EncoderModel& model, const GamutConfig& config = {});

/// {"target": view_id | [..], "basis": [view_id | [..], ...]}; view ids need a bundle.
GamutProblem gamut_problem_from_json(const nlohmann::json& j, const DatasetBundle* bundle);
GamutProblem read_gamut_problem(const std::filesystem::path& path, const DatasetBundle* bundle);
nlohmann::ordered_json gamut_solution_to_json(const GamutSolution& solution, const GamutProblem& problem);

}  // namespace matsim
