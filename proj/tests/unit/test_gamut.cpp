#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "matsim/errors.hpp"
#include "matsim/gamut.hpp"
#include "matsim/synthetic.hpp"

using namespace matsim;
using doctest::Approx;

namespace {

Vector vec(std::initializer_list<double> values) {
    Vector v(static_cast<Index>(values.size()));
    Index i = 0;
    for (double x : values) v(i++) = x;
    return v;
}

}  // namespace

TEST_CASE("simplex projection examples") {
    CHECK(simplex_project(vec({2, 0})).isApprox(vec({1, 0})));
    CHECK(simplex_project(vec({0.5, 0.5, 0.5})).isApprox(Vector::Constant(3, 1.0 / 3.0)));
    const Vector on = vec({0.2, 0.3, 0.5});
    CHECK((simplex_project(on) - on).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(box_project(vec({-1, 0.5, 3})) == vec({0, 0.5, 1}));
    CHECK_THROWS_AS(simplex_project(Vector()), ValidationError);
}

TEST_CASE("simplex projection is idempotent and 1-Lipschitz") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 8);
        const Vector u = testing::random_matrix(n, 1, rng, 2.0).col(0);
        const Vector v = testing::random_matrix(n, 1, rng, 2.0).col(0);
        const Vector pu = simplex_project(u), pv = simplex_project(v);
        CHECK((pu.array() >= 0.0).all());
        CHECK(std::abs(pu.sum() - 1.0) < 1e-9);
        CHECK((simplex_project(pu) - pu).norm() < 1e-12);
        CHECK((pu - pv).norm() <= (u - v).norm() + 1e-12);
    }
}

TEST_CASE("identity encoder problems") {
    const auto model = EncoderModel::identity(3);
    SUBCASE("midpoint of two inks") {
        GamutProblem p{0.5 * vec({1, 0, 2}) + 0.5 * vec({0, 3, 1}), Matrix(3, 2), {}};
        p.basis.col(0) = vec({1, 0, 2});
        p.basis.col(1) = vec({0, 3, 1});
        const auto s = gamut_solve(p, model);
        CHECK(s.weights(0) == Approx(0.5).epsilon(1e-6));
        CHECK(s.weights(1) == Approx(0.5).epsilon(1e-6));
        CHECK(s.objective < 1e-10);
    }
    SUBCASE("random two-ink problems match a line search") {
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 20; ++trial) {
            GamutProblem p{testing::random_matrix(3, 1, rng).col(0), testing::random_matrix(3, 2, rng), {}};
            const auto s = gamut_solve(p, model);
            double best = 1e300;
            for (int i = 0; i <= 10000; ++i) {
                const double w = i * 1e-4;
                best = std::min(best, (p.target - (w * p.basis.col(0) + (1 - w) * p.basis.col(1))).squaredNorm());
            }
            CHECK(s.objective <= best + 1e-3);
        }
    }
}

TEST_CASE("nonlinear encoder") {
    const auto model = EncoderModel::initialize({6, 12, 4}, 7);
    std::mt19937_64 rng(3);
    GamutProblem p{Vector(), testing::random_matrix(6, 3, rng), {"c", "m", "y"}};

    SUBCASE("a target equal to one ink is recovered") {
        p.target = p.basis.col(1);
        const auto s = gamut_solve(p, model);
        CHECK(s.objective < 1e-10);
        CHECK(s.weights(1) == Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("descent is monotone and stays feasible") {
        p.target = testing::random_matrix(6, 1, rng).col(0);
        const auto s = gamut_solve(p, model);
        CHECK(s.trace.front() == s.initial_objective);
        for (std::size_t i = 1; i < s.trace.size(); ++i) CHECK(s.trace[i] <= s.trace[i - 1]);
        CHECK(s.objective <= s.initial_objective);
        CHECK((s.weights.array() >= 0.0).all());
        CHECK(std::abs(s.weights.sum() - 1.0) < 1e-9);
    }
    SUBCASE("box constraint without the sum") {
        p.target = 2.0 * p.basis.col(0);
        GamutConfig config;
        config.simplex = false;
        const auto s = gamut_solve(p, model, config);
        CHECK((s.weights.array() >= 0.0).all());
        CHECK((s.weights.array() <= 1.0).all());
    }
    SUBCASE("objective gradient matches finite differences") {
        p.target = testing::random_matrix(6, 1, rng).col(0);
        const Vector w = vec({0.2, 0.5, 0.3});
        Vector grad;
        gamut_objective(p, model, w, &grad);
        for (Index i = 0; i < 3; ++i) {
            Vector up = w, down = w;
            up(i) += 1e-6;
            down(i) -= 1e-6;
            const double numeric = (gamut_objective(p, model, up) - gamut_objective(p, model, down)) / 2e-6;
            CHECK(testing::relative_error(grad(i), numeric) < 1e-5);
        }
    }
    SUBCASE("validation") {
        p.target = Vector::Zero(5);
        CHECK_THROWS_AS(gamut_solve(p, model), ValidationError);
        p.target = Vector::Zero(6);
        p.basis = Matrix::Zero(6, 1);
        CHECK_THROWS_AS(gamut_solve(p, model), ValidationError);
    }
}

TEST_CASE("problem files") {
    SyntheticConfig config;
    config.n_materials = 3;
    config.views_per_material = 1;
    const auto bundle = generate_synthetic(config).bundle;
    const auto& views = bundle.views();
    std::vector<double> inline_ink(16, 0.0);
    inline_ink[0] = 1.0;
    const nlohmann::json j = {{"target", views[0].view_id}, {"basis", {views[1].view_id, inline_ink}}};
    const auto p = gamut_problem_from_json(j, &bundle);
    CHECK(p.target == bundle.descriptor(0));
    CHECK(p.basis.col(0) == bundle.descriptor(1));
    CHECK(p.basis(0, 1) == 1.0);
    CHECK(p.basis_labels == std::vector<std::string>{views[1].view_id, "inline"});
    CHECK_THROWS_AS(gamut_problem_from_json(j, nullptr), ValidationError);
    CHECK_THROWS_AS(gamut_problem_from_json(nlohmann::json::parse(R"({"target": "zz", "basis": []})"), &bundle),
                    ValidationError);

    const auto s = gamut_solve(p, EncoderModel::identity(16));
    const auto out = gamut_solution_to_json(s, p);
    CHECK(out["weights"].size() == 2);
    CHECK(out.contains("objective"));
    CHECK(out.contains("iterations"));
}
