#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "helpers.hpp"
#include "matsim/analysis.hpp"
#include "matsim/errors.hpp"
#include "matsim/synthetic.hpp"

using namespace matsim;
using doctest::Approx;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("m" + std::to_string(100 + i));
    return ids;
}

// Three well-separated Gaussian blobs; returns points and planted labels.
std::pair<RowMatrix, std::vector<int>> blobs(std::size_t per_blob, std::size_t dim, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    RowMatrix centers = RowMatrix::Zero(3, static_cast<Index>(dim));
    centers(0, 0) = 10.0;
    centers(1, 1) = 10.0;
    centers(2, 0) = -10.0;
    RowMatrix points(static_cast<Index>(3 * per_blob), static_cast<Index>(dim));
    std::vector<int> labels;
    for (Index i = 0; i < points.rows(); ++i) {
        const int b = static_cast<int>(i) % 3;
        labels.push_back(b);
        for (Index c = 0; c < points.cols(); ++c) points(i, c) = centers(b, c) + g(rng);
    }
    return {points, labels};
}

// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; columns of `vectors` are eigenvectors.
void jacobi_eigen(Matrix a, Vector& values, Matrix& vectors) {
    const Index n = a.rows();
    vectors = Matrix::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (Index p = 0; p < n; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Index k = 0; k < n; ++k) {
                    const double vkp = vectors(k, p), vkq = vectors(k, q);
                    vectors(k, p) = c * vkp - s * vkq;
                    vectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    values = a.diagonal();
}

}  // namespace

TEST_CASE("feature index from a model averages views") {
    SyntheticConfig config;
    config.n_materials = 4;
    config.views_per_material = 3;
    const auto bundle = generate_synthetic(config).bundle;
    const auto model = EncoderModel::initialize({16, 8, 5}, 2);
    const auto index = FeatureIndex::from_model(model, bundle);
    CHECK(index.size() == 4);
    CHECK(index.view_features.rows() == 12);
    for (std::size_t m = 0; m < 4; ++m) {
        Vector mean = Vector::Zero(5);
        for (auto v : bundle.views_of(m)) mean += encoder_forward(model, bundle.descriptor(v));
        mean /= 3.0;
        CHECK((index.representatives.row(static_cast<Index>(m)).transpose() - mean).norm() < 1e-12);
    }
    CHECK_THROWS_AS(index.index_of("nope"), ValidationError);
}

TEST_CASE("suggest examples") {
    SUBCASE("two materials") {
        const auto index = FeatureIndex::from_points({"a", "b"}, RowMatrix{{0.0}, {1.0}});
        CHECK(suggest(index, "a", {Band::Near}, 1, 0) == std::vector<std::string>{"b"});
    }
    SUBCASE("a duplicate is always ranked first") {
        const auto index = FeatureIndex::from_points({"a", "b", "c", "d"}, RowMatrix{{0.0}, {0.5}, {0.0}, {2.0}});
        CHECK(rank_neighbors(index, "a").front().first == "c");
        CHECK(rank_neighbors(index, "a").front().second == 0.0);
        CHECK(suggest(index, "a", {Band::Near}, 1, 9).front() == "c");
    }
    SUBCASE("explicit quantile range") {
        const auto index = FeatureIndex::from_points(make_ids(11), RowMatrix(Eigen::VectorXd::LinSpaced(11, 0, 10)));
        const auto picked = suggest(index, "m100", {std::nullopt, 0.5, 1.0}, 10, 0);
        CHECK(picked == std::vector<std::string>{"m106", "m107", "m108", "m109", "m110"});
        CHECK_THROWS_AS(suggest(index, "m100", {std::nullopt, 0.6, 0.2}, 1, 0), ValidationError);
    }
    SUBCASE("empty band") {
        const auto index = FeatureIndex::from_points({"a", "b"}, RowMatrix{{0.0}, {1.0}});
        CHECK_THROWS_AS(suggest(index, "a", {Band::Far}, 1, 0), ValidationError);
    }
    SUBCASE("unknown names") {
        const auto index = FeatureIndex::from_points({"a", "b"}, RowMatrix{{0.0}, {1.0}});
        CHECK_THROWS_AS(suggest(index, "z", {Band::Near}, 1, 0), ValidationError);
        CHECK_THROWS_AS(band_from_string("close"), ValidationError);
        CHECK(band_from_string("mid") == Band::Mid);
    }
}

TEST_CASE("suggest bands partition the ranked list") {
    std::mt19937_64 rng(3);
    for (std::size_t n : {2u, 3u, 4u, 7u, 10u, 31u}) {
        const auto ids = make_ids(n);
        const auto index = FeatureIndex::from_points(ids, testing::random_matrix(static_cast<Index>(n), 3, rng));
        const auto ranked = rank_neighbors(index, ids[0]);
        std::vector<std::string> joined;
        for (const auto band : {Band::Near, Band::Mid, Band::Far}) {
            try {
                const auto part = suggest(index, ids[0], {band}, n, 0);
                joined.insert(joined.end(), part.begin(), part.end());
            } catch (const ValidationError&) {
                // Tiny lists leave some bands empty.
            }
        }
        std::vector<std::string> expected;
        for (const auto& [id, d] : ranked) expected.push_back(id);
        CHECK(joined == expected);
    }
}

TEST_CASE("near band recovers planted neighbours") {
    SyntheticConfig config;
    config.n_materials = 10;
    config.seed = 5;
    const auto truth = generate_synthetic(config).truth;
    const auto index = FeatureIndex::from_points(truth.material_ids, truth.latent);
    for (const auto& ref : truth.material_ids) {
        const auto r = truth.index_of(ref);
        std::vector<std::pair<double, std::string>> by_truth;
        for (const auto& other : truth.material_ids) {
            if (other != ref) by_truth.push_back({truth.distances(r, truth.index_of(other)), other});
        }
        std::sort(by_truth.begin(), by_truth.end());
        std::set<std::string> expected;
        for (std::size_t i = 0; 3 * i < by_truth.size(); ++i) expected.insert(by_truth[i].second);
        const auto near = suggest(index, ref, {Band::Near}, 9, 1);
        CHECK(std::set<std::string>(near.begin(), near.end()) == expected);
    }
}

TEST_CASE("projection examples") {
    std::mt19937_64 rng(4);
    SUBCASE("2D points keep their pairwise distances") {
        const RowMatrix pts = testing::random_matrix(12, 2, rng);
        const auto p = project_2d(FeatureIndex::from_points(make_ids(12), pts));
        for (Index i = 0; i < 12; ++i) {
            for (Index j = 0; j < 12; ++j) {
                CHECK(std::abs((pts.row(i) - pts.row(j)).norm() - (p.coordinates.row(i) - p.coordinates.row(j)).norm()) < 1e-9);
            }
        }
    }
    SUBCASE("collinear points have a zero second axis") {
        RowMatrix pts(5, 3);
        for (Index i = 0; i < 5; ++i) pts.row(i) << i * 1.0, i * 2.0, -i * 0.5;
        const auto p = project_2d(FeatureIndex::from_points(make_ids(5), pts));
        CHECK(p.coordinates.col(1).isZero(0.0));
        CHECK(p.coordinates.col(0).cwiseAbs().maxCoeff() > 1.0);
    }
    SUBCASE("matches an independent eigen-decomposition") {
        const RowMatrix pts = testing::random_matrix(5, 8, rng);
        const auto p = project_2d(FeatureIndex::from_points(make_ids(5), pts));
        const RowMatrix centered = pts.rowwise() - pts.colwise().mean();
        Vector values;
        Matrix vectors;
        jacobi_eigen(centered.transpose() * centered / 5.0, values, vectors);
        std::vector<Index> order(8);
        std::iota(order.begin(), order.end(), Index{0});
        std::sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) > values(b); });
        for (Index c = 0; c < 2; ++c) {
            CHECK(p.eigenvalues(c) == Approx(values(order[c])).epsilon(1e-10));
            Vector coord = centered * vectors.col(order[c]);
            Index arg = 0;
            coord.cwiseAbs().maxCoeff(&arg);
            if (coord(arg) < 0) coord = -coord;
            CHECK((coord - p.coordinates.col(c)).cwiseAbs().maxCoeff() < 1e-9);
        }
        // Residual energy equals the discarded spectrum.
        const double residual = (centered.squaredNorm() - p.coordinates.squaredNorm()) / 5.0;
        CHECK(std::abs(residual - p.eigenvalues.tail(6).sum()) < 1e-9);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(project_2d(FeatureIndex::from_points(make_ids(2), RowMatrix::Zero(2, 3))), ValidationError);
        CHECK_THROWS_AS(project_2d(FeatureIndex::from_points(make_ids(4), RowMatrix::Ones(4, 3))), ValidationError);
    }
}

TEST_CASE("k-means examples") {
    const auto [pts, labels] = blobs(10, 4, 0.3, 6);
    KMeansConfig config;
    config.seed = 2;

    const auto all = kmeans(pts, 30, config);
    CHECK(all.ssw == Approx(0.0).epsilon(1e-12));
    CHECK(all.explained_variance == Approx(1.0));

    const auto one = kmeans(pts, 1, config);
    CHECK((one.centroids.row(0) - pts.colwise().mean()).norm() < 1e-12);
    CHECK(one.explained_variance == Approx(0.0).epsilon(1e-12));

    const auto three = kmeans(pts, 3, config);
    std::map<int, std::size_t> mapping;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto [it, inserted] = mapping.emplace(labels[i], three.assignments[i]);
        CHECK(it->second == three.assignments[i]);
    }
    CHECK(std::set<std::size_t>(three.assignments.begin(), three.assignments.end()).size() == 3);
    CHECK(three.assignments[0] == 0);
    CHECK(three.explained_variance > 0.99);
    CHECK(three.explained_variance <= 1.0);
    CHECK(kmeans(pts, 3, config).assignments == three.assignments);

    CHECK_THROWS_AS(kmeans(pts, 31, config), ValidationError);
    CHECK_THROWS_AS(kmeans(pts, 0, config), ValidationError);
}

TEST_CASE("elbow search") {
    const auto [pts, labels] = blobs(8, 3, 0.2, 7);
    const auto index = FeatureIndex::from_points(make_ids(24), pts);
    KMeansConfig config;
    const auto e = elbow_k(index, 0.95, 10, config);
    CHECK(e.k == 3);
    CHECK(e.reached);
    for (std::size_t i = 1; i < e.explained_variance.size(); ++i) {
        CHECK(e.explained_variance[i] >= e.explained_variance[i - 1] - 1e-12);
    }
    CHECK(elbow_k(index, 0.0, 10, config).k == 1);
    const auto capped = elbow_k(index, 1.0, 2, config);
    CHECK(capped.k == 2);
    CHECK_FALSE(capped.reached);
    CHECK_THROWS_AS(elbow_k(index, 0.95, 25, config), ValidationError);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto random = FeatureIndex::from_points(make_ids(30), testing::random_matrix(30, 5, rng));
        config.seed = static_cast<std::uint64_t>(trial);
        const auto r = elbow_k(random, 1.0, 30, config);
        for (std::size_t i = 1; i < r.explained_variance.size(); ++i) {
            CHECK(r.explained_variance[i] >= r.explained_variance[i - 1] - 1e-12);
        }
    }
}

TEST_CASE("summaries") {
    const auto [pts, labels] = blobs(6, 2, 0.2, 9);
    const auto ids = make_ids(18);
    const auto index = FeatureIndex::from_points(ids, pts);
    const auto picked = summarize(index, 3, {});
    REQUIRE(picked.size() == 3);
    std::set<int> blobs_hit;
    for (const auto& id : picked) blobs_hit.insert(labels[static_cast<std::size_t>(index.index_of(id))]);
    CHECK(blobs_hit.size() == 3);

    auto all = summarize(index, 18, {});
    std::sort(all.begin(), all.end());
    CHECK(all == ids);

    const Eigen::RowVectorXd mean = pts.colwise().mean();
    Index closest = 0;
    (pts.rowwise() - mean).rowwise().squaredNorm().minCoeff(&closest);
    CHECK(summarize(index, 1, {}) == std::vector<std::string>{ids[static_cast<std::size_t>(closest)]});
}

TEST_CASE("Hopkins statistic") {
    std::mt19937_64 rng(10);
    HopkinsConfig config;
    config.seed = 3;

    SUBCASE("uniform data is near one half") {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        RowMatrix pts(500, 3);
        for (Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
        const double h = hopkins(pts, config);
        CHECK(h > 0.45);
        CHECK(h < 0.55);
    }
    SUBCASE("two tight clusters score high") {
        std::normal_distribution<double> g(0.0, 0.01);
        RowMatrix pts(100, 2);
        for (Index i = 0; i < 100; ++i) {
            pts(i, 0) = (i % 2 ? 10.0 : 0.0) + g(rng);
            pts(i, 1) = g(rng);
        }
        CHECK(hopkins(pts, config) > 0.8);
    }
    SUBCASE("swapping the two samples mirrors the statistic") {
        const RowMatrix pts = testing::random_matrix(40, 3, rng);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto d = hopkins_draw(pts, 5, s);
            const double h = d.u_sum / (d.u_sum + d.w_sum);
            const double swapped = d.w_sum / (d.u_sum + d.w_sum);
            CHECK(h > 0.0);
            CHECK(h < 1.0);
            CHECK(h + swapped == Approx(1.0).epsilon(1e-15));
        }
    }
    SUBCASE("sample size rule") {
        CHECK(hopkins_sample_size(10, config) == 5);
        CHECK(hopkins_sample_size(100, config) == 10);
        CHECK(hopkins_sample_size(5000, config) == 50);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(hopkins(testing::random_matrix(9, 2, rng), config), ValidationError);
        CHECK_THROWS_AS(hopkins(RowMatrix::Ones(20, 2), config), ValidationError);
    }
}

TEST_CASE("CSV outputs") {
    testing::TempDir dir;
    const auto index = FeatureIndex::from_points({"a", "b", "c"}, RowMatrix{{0.0, 0.0}, {2.0, 0.0}, {0.0, 1.0}});
    write_projection_csv(dir / "p.csv", project_2d(index));
    CHECK(testing::read_text(dir / "p.csv").rfind("material_id,x,y\n", 0) == 0);
    write_clusters_csv(dir / "c.csv", index.ids, kmeans(index, 3, {}));
    CHECK(testing::read_text(dir / "c.csv") == "material_id,cluster\na,0\nb,1\nc,2\n");
    write_id_list(dir / "s.txt", {"b", "a"});
    CHECK(testing::read_text(dir / "s.txt") == "b\na\n");
}
