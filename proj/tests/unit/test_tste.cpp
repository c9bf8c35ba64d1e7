#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "matsim/errors.hpp"
#include "matsim/synthetic.hpp"
#include "matsim/tste.hpp"

using namespace matsim;
using doctest::Approx;

namespace {

Vector point(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

std::vector<VoteConstraint> random_votes(Index n, std::size_t count, std::mt19937_64& rng) {
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<VoteConstraint> out;
    while (out.size() < count) {
        VoteConstraint v{pick(rng), pick(rng), pick(rng)};
        if (v.reference != v.chosen && v.reference != v.other && v.chosen != v.other) out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("kernel probability examples") {
    CHECK(tste_probability(point(0, 0), point(1, 0), point(0, -1), 5.0) == 0.5);
    CHECK(tste_probability(point(1, 1), point(1, 1), point(2, 1), 5.0) > 0.5);
    // Oracle value at d_ra = 1, d_rb = 2; the figure quoted alongside the example has a transposed digit.
    CHECK(tste_probability(point(0, 0), point(1, 0), point(0, 2), 5.0) == Approx(0.7714285714).epsilon(1e-10));
    CHECK(tste_kernel(1.0, 5.0) == Approx(std::pow(1.2, -3.0)));
}

TEST_CASE("probabilities of both orders sum to one") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
        const Matrix m = testing::random_matrix(3, 3, rng, 2.0);
        const double p = tste_probability(m.col(0), m.col(1), m.col(2), 5.0);
        const double q = tste_probability(m.col(0), m.col(2), m.col(1), 5.0);
        CHECK(p + q == Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("likelihood is invariant under rigid motion") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> angle(0.0, 6.283185307179586);
    for (int i = 0; i < 20; ++i) {
        const RowMatrix points = testing::random_matrix(10, 2, rng);
        const auto votes = random_votes(10, 60, rng);
        const double t = angle(rng);
        Eigen::Matrix2d rot;
        rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
        if (i % 2) rot.col(0) *= -1.0;
        RowMatrix moved = points * rot.transpose();
        moved.rowwise() += Eigen::RowVector2d(3.5, -1.25);
        CHECK(std::abs(tste_log_likelihood(points, votes, 5.0) - tste_log_likelihood(moved, votes, 5.0)) < 1e-9);
    }
}

TEST_CASE("analytic gradient matches finite differences") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const RowMatrix points = testing::random_matrix(8, 3, rng);
        const auto votes = random_votes(8, 40, rng);
        const RowMatrix grad = tste_gradient(points, votes, 5.0);
        double worst = 0.0;
        for (Index i = 0; i < points.size(); ++i) {
            RowMatrix up = points, down = points;
            up.data()[i] += 1e-5;
            down.data()[i] -= 1e-5;
            const double numeric = (tste_log_likelihood(up, votes, 5.0) - tste_log_likelihood(down, votes, 5.0)) / 2e-5;
            worst = std::max(worst, testing::relative_error(grad.data()[i], numeric));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("fitting") {
    SUBCASE("a single answer is satisfied") {
        AnswerStore s;
        s.add({"r", "a", "b", Side::A, "w", TrialKind::Trial, "t"});
        const auto e = tste_fit(s, {});
        CHECK(e.satisfied_fraction == 1.0);
        CHECK(e.ids == std::vector<std::string>{"a", "b", "r"});
    }
    SUBCASE("accepted steps never lower the likelihood") {
        SyntheticConfig config;
        config.n_materials = 15;
        const auto data = generate_synthetic(config);
        std::mt19937_64 rng(6);
        const auto answers = simulate_answers(data.truth, sample_triplets(data.truth.material_ids, 400, rng), 1, 0.0, 2);
        TsteConfig tc;
        tc.max_iters = 200;
        tc.seed = 3;
        const auto e = tste_fit(answers, tc);
        REQUIRE(e.likelihood_trace.size() >= 2);
        for (std::size_t i = 1; i < e.likelihood_trace.size(); ++i) {
            CHECK(e.likelihood_trace[i] >= e.likelihood_trace[i - 1]);
        }
        CHECK(e.log_likelihood == e.likelihood_trace.back());
        CHECK(e.points.allFinite());
        CHECK(e.satisfied_fraction > 0.9);
        const auto again = tste_fit(answers, tc);
        CHECK(again.points == e.points);
    }
    SUBCASE("invalid input") {
        CHECK_THROWS_AS(tste_fit(AnswerStore{}, {}), ValidationError);
        AnswerStore s;
        s.add({"r", "a", "b", Side::A, "w", TrialKind::Trial, "t"});
        TsteConfig bad;
        bad.alpha = 0.0;
        CHECK_THROWS_AS(tste_fit(s, bad), ValidationError);
        CHECK_THROWS_AS(tste_fit(s, {}, {"r", "a"}), ValidationError);
    }
}

TEST_CASE("distance matrix of an embedding") {
    TsteEmbedding e;
    e.ids = {"p", "q", "s"};
    e.points = RowMatrix{{0.0}, {1.0}, {3.0}};
    const auto d = tste_distance_matrix(e);
    CHECK(d.at("p", "q") == 1.0);
    CHECK(d.at("q", "s") == 2.0);
    CHECK(d.at("p", "s") == 3.0);
    e.points(2, 0) = 1.0;
    CHECK(tste_distance_matrix(e).at("q", "s") == 0.0);

    std::mt19937_64 rng(8);
    e.ids = {"a", "b", "c", "d", "e"};
    e.points = testing::random_matrix(5, 3, rng);
    const auto rd = tste_distance_matrix(e);
    for (Index i = 0; i < 5; ++i) {
        for (Index j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (Index k = 0; k < 3; ++k) acc += (e.points(i, k) - e.points(j, k)) * (e.points(i, k) - e.points(j, k));
            CHECK(rd.values()(i, j) == Approx(std::sqrt(acc)).epsilon(1e-12));
        }
    }
}

TEST_CASE("embedding files round trip") {
    testing::TempDir dir;
    AnswerStore s;
    s.add({"r", "a", "b", Side::A, "w", TrialKind::Trial, "t"});
    s.add({"a", "r", "b", Side::B, "w", TrialKind::Trial, "t"});
    TsteConfig tc;
    tc.dim = 3;
    const auto e = tste_fit(s, tc);
    write_embedding(dir / "emb.csv", e);
    CHECK(std::filesystem::exists(dir / "emb.json"));
    const auto back = read_embedding(dir / "emb.csv");
    CHECK(back.ids == e.ids);
    CHECK(back.points == e.points);
    CHECK(back.alpha == e.alpha);
    CHECK(back.satisfied_fraction == e.satisfied_fraction);
}
