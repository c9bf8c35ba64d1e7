#include "matsim/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include "matsim/errors.hpp"

namespace matsim {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t task) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(task >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double total_sum_of_squares(const RowMatrix& points) {
    const Eigen::RowVectorXd mean = points.colwise().mean();
    return (points.rowwise() - mean).rowwise().squaredNorm().sum();
}

struct Lloyd {
    std::vector<std::size_t> labels;
    RowMatrix centroids;
    double ssw = 0.0;
};

void assign(const RowMatrix& points, Lloyd& s) {
    s.ssw = 0.0;
    s.labels.resize(static_cast<std::size_t>(points.rows()));
    for (Index i = 0; i < points.rows(); ++i) {
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < s.centroids.rows(); ++c) {
            const double d = (points.row(i) - s.centroids.row(c)).squaredNorm();
            if (d < best_d) { best_d = d; best = c; }
        }
        s.labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
        s.ssw += best_d;
    }
}

// Lloyd iterations from the current centroids; an emptied cluster takes the point
// farthest from its centroid.
void lloyd(const RowMatrix& points, Lloyd& s, std::size_t max_iters, double tol) {
    const Index k = s.centroids.rows();
    assign(points, s);
    for (std::size_t it = 0; it < max_iters; ++it) {
        RowMatrix next = RowMatrix::Zero(k, points.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Index i = 0; i < points.rows(); ++i) {
            next.row(static_cast<Index>(s.labels[static_cast<std::size_t>(i)])) += points.row(i);
            ++counts[s.labels[static_cast<std::size_t>(i)]];
        }
        for (Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            Index far = 0;
            double far_d = -1.0;
            for (Index i = 0; i < points.rows(); ++i) {
                const double d = (points.row(i) - s.centroids.row(static_cast<Index>(s.labels[static_cast<std::size_t>(i)]))).squaredNorm();
                if (d > far_d && counts[s.labels[static_cast<std::size_t>(i)]] > 1) { far_d = d; far = i; }
            }
            --counts[s.labels[static_cast<std::size_t>(far)]];
            s.labels[static_cast<std::size_t>(far)] = static_cast<std::size_t>(c);
            counts[static_cast<std::size_t>(c)] = 1;
            next.row(c) = points.row(far);
        }
        const double shift = (next - s.centroids).rowwise().norm().maxCoeff();
        s.centroids = std::move(next);
        assign(points, s);
        if (shift < tol) break;
    }
}

ClusteringResult finish(const RowMatrix& points, Lloyd s, double sst) {
    // Relabel clusters by first appearance for a canonical output.
    const auto k = static_cast<std::size_t>(s.centroids.rows());
    std::vector<std::size_t> remap(k, k);
    std::size_t next = 0;
    for (auto l : s.labels) {
        if (remap[l] == k) remap[l] = next++;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (remap[c] == k) remap[c] = next++;
    }
    ClusteringResult r;
    r.k = k;
    r.centroids.resize(s.centroids.rows(), s.centroids.cols());
    for (std::size_t c = 0; c < k; ++c) r.centroids.row(static_cast<Index>(remap[c])) = s.centroids.row(static_cast<Index>(c));
    r.assignments.reserve(s.labels.size());
    for (auto l : s.labels) r.assignments.push_back(remap[l]);
    r.ssw = s.ssw;
    r.sst = sst;
    r.explained_variance = sst > 0.0 ? std::clamp(1.0 - s.ssw / sst, 0.0, 1.0) : 1.0;
    (void)points;
    return r;
}

void check_points(const RowMatrix& points) {
    if (points.rows() == 0) throw ValidationError("analysis: no points");
    if (!points.allFinite()) throw ValidationError("analysis: non-finite features");
}

}  // namespace

Index FeatureIndex::index_of(const std::string& id) const {
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ValidationError("unknown material: " + id);
    return static_cast<Index>(it - ids.begin());
}

FeatureIndex FeatureIndex::from_points(std::vector<std::string> ids, RowMatrix points) {
    if (static_cast<Index>(ids.size()) != points.rows()) throw ValidationError("feature index: id count mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) throw ValidationError("feature index: duplicate id " + id);
    }
    check_points(points);
    FeatureIndex index;
    index.ids = std::move(ids);
    index.representatives = std::move(points);
    return index;
}

FeatureIndex FeatureIndex::from_model(const EncoderModel& model, const DatasetBundle& bundle) {
    if (bundle.empty()) throw ValidationError("feature index: empty dataset");
    const Matrix features = encode(model, bundle.descriptors().transpose());
    FeatureIndex index;
    index.ids = bundle.material_ids();
    index.view_features = features.transpose();
    index.representatives = RowMatrix::Zero(static_cast<Index>(index.ids.size()), features.rows());
    for (std::size_t m = 0; m < index.ids.size(); ++m) {
        const auto& views = bundle.views_of(m);
        for (auto v : views) index.representatives.row(static_cast<Index>(m)) += features.col(static_cast<Index>(bundle.views()[v].descriptor_row)).transpose();
        index.representatives.row(static_cast<Index>(m)) /= static_cast<double>(views.size());
    }
    index.view_material.resize(bundle.views().size());
    for (std::size_t v = 0; v < bundle.views().size(); ++v) {
        index.view_material[bundle.views()[v].descriptor_row] = bundle.material_of(v);
    }
    return index;
}

std::vector<std::pair<std::string, double>> rank_neighbors(const FeatureIndex& index, const std::string& reference) {
    const Index r = index.index_of(reference);
    std::vector<std::pair<std::string, double>> ranked;
    for (Index i = 0; i < index.representatives.rows(); ++i) {
        if (i == r) continue;
        ranked.push_back({index.ids[static_cast<std::size_t>(i)],
                          (index.representatives.row(i) - index.representatives.row(r)).squaredNorm()});
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return ranked;
}

Band band_from_string(const std::string& s) {
    if (s == "near") return Band::Near;
    if (s == "mid") return Band::Mid;
    if (s == "far") return Band::Far;
    throw ValidationError("unknown band: " + s + " (expected near, mid or far)");
}

std::vector<std::string> suggest(const FeatureIndex& index, const std::string& reference, const BandSpec& band,
                                 std::size_t count, std::uint64_t seed) {
    if (count == 0) throw ValidationError("suggest: count must be >= 1");
    if (!band.band && !(band.lo >= 0.0 && band.lo < band.hi && band.hi <= 1.0)) {
        throw ValidationError("suggest: quantile range must satisfy 0 <= lo < hi <= 1");
    }
    const auto ranked = rank_neighbors(index, reference);
    const std::size_t m = ranked.size();
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < m; ++i) {
        bool in = false;
        if (band.band) {
            switch (*band.band) {
                case Band::Near: in = 3 * i < m; break;
                case Band::Mid: in = 3 * i >= m && 3 * i < 2 * m; break;
                case Band::Far: in = 3 * i >= 2 * m; break;
            }
        } else {
            const double q = static_cast<double>(i) / static_cast<double>(m);
            in = q >= band.lo && (q < band.hi || band.hi >= 1.0);
        }
        if (in) members.push_back(i);
    }
    if (members.empty()) throw ValidationError("suggest: band is empty for " + std::to_string(m) + " candidates");
    if (members.size() > count) {
        std::mt19937_64 rng(seed);
        std::shuffle(members.begin(), members.end(), rng);
        members.resize(count);
        std::sort(members.begin(), members.end());
    }
    std::vector<std::string> out;
    for (auto i : members) out.push_back(ranked[i].first);
    return out;
}

Projection project_2d(const FeatureIndex& index) {
    const RowMatrix& x = index.representatives;
    if (x.rows() < 3) throw ValidationError("project_2d: need at least 3 materials");
    const RowMatrix centered = x.rowwise() - x.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw ComputeError("project_2d: eigen-decomposition failed");
    const Vector ev = solver.eigenvalues().reverse();
    const Matrix vecs = solver.eigenvectors().rowwise().reverse();
    const double scale = std::max(1.0, centered.cwiseAbs().maxCoeff());
    if (!(ev(0) > 1e-24 * scale * scale)) throw ValidationError("project_2d: degenerate covariance (all points identical)");

    Projection p;
    p.ids = index.ids;
    p.eigenvalues = ev.cwiseMax(0.0);
    p.coordinates = RowMatrix::Zero(x.rows(), 2);
    for (Index c = 0; c < std::min<Index>(2, ev.size()); ++c) {
        if (c == 1 && ev(1) <= 1e-12 * ev(0)) break;
        Vector coord = centered * vecs.col(c);
        Index arg = 0;
        coord.cwiseAbs().maxCoeff(&arg);
        if (coord(arg) < 0.0) coord = -coord;
        p.coordinates.col(c) = coord;
    }
    return p;
}

ClusteringResult kmeans(const RowMatrix& points, std::size_t k, const KMeansConfig& config) {
    check_points(points);
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || k > n) {
        throw ValidationError("kmeans: k must be between 1 and " + std::to_string(n) + ", got " + std::to_string(k));
    }
    const double sst = total_sum_of_squares(points);
    std::optional<Lloyd> best;
    for (std::size_t restart = 0; restart < std::max<std::size_t>(1, config.restarts); ++restart) {
        std::mt19937_64 rng(derive_seed(config.seed, restart));
        Lloyd s;
        s.centroids.resize(static_cast<Index>(k), points.cols());
        std::vector<double> d2(n, std::numeric_limits<double>::infinity());
        Index pick = static_cast<Index>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
        for (std::size_t c = 0; c < k; ++c) {
            s.centroids.row(static_cast<Index>(c)) = points.row(pick);
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                d2[i] = std::min(d2[i], (points.row(static_cast<Index>(i)) - points.row(pick)).squaredNorm());
                total += d2[i];
            }
            if (c + 1 == k) break;
            if (total > 0.0) {
                pick = static_cast<Index>(std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng));
            } else {
                pick = static_cast<Index>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
            }
        }
        lloyd(points, s, config.max_iters, config.tol);
        if (!best || s.ssw < best->ssw) best = std::move(s);
    }
    return finish(points, std::move(*best), sst);
}

ElbowResult elbow_k(const FeatureIndex& index, double threshold, std::size_t k_max, const KMeansConfig& config) {
    const RowMatrix& points = index.representatives;
    check_points(points);
    const auto n = static_cast<std::size_t>(points.rows());
    if (k_max == 0 || k_max > n) throw ValidationError("elbow: k_max must be between 1 and " + std::to_string(n));
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("elbow: threshold must be in [0,1]");
    const double sst = total_sum_of_squares(points);

    ElbowResult out;
    Lloyd s;
    s.centroids = points.colwise().mean();
    for (std::size_t k = 1; k <= k_max; ++k) {
        if (k > 1) {
            Index far = 0;
            double far_d = -1.0;
            for (Index i = 0; i < points.rows(); ++i) {
                const double d = (points.row(i) - s.centroids.row(static_cast<Index>(s.labels[static_cast<std::size_t>(i)]))).squaredNorm();
                if (d > far_d) { far_d = d; far = i; }
            }
            s.centroids.conservativeResize(static_cast<Index>(k), Eigen::NoChange);
            s.centroids.row(static_cast<Index>(k) - 1) = points.row(far);
        }
        lloyd(points, s, config.max_iters, config.tol);
        const double ev = sst > 0.0 ? std::clamp(1.0 - s.ssw / sst, 0.0, 1.0) : 1.0;
        if (!out.explained_variance.empty() && ev < out.explained_variance.back() - 1e-12) {
            throw ComputeError("elbow: explained variance decreased at k=" + std::to_string(k));
        }
        out.explained_variance.push_back(std::max(ev, out.explained_variance.empty() ? 0.0 : out.explained_variance.back()));
        if (ev >= threshold) {
            out.k = k;
            out.reached = true;
            return out;
        }
    }
    out.k = k_max;
    return out;
}

std::size_t hopkins_sample_size(std::size_t n, const HopkinsConfig& config) {
    const auto m = static_cast<std::size_t>(std::llround(config.sample_fraction * static_cast<double>(n)));
    return std::min(std::clamp(m, config.min_sample, config.max_sample), n - 1);
}

HopkinsDraw hopkins_draw(const RowMatrix& points, std::size_t m, std::uint64_t seed) {
    const Index n = points.rows();
    const Eigen::RowVectorXd lo = points.colwise().minCoeff();
    const Eigen::RowVectorXd hi = points.colwise().maxCoeff();
    std::mt19937_64 rng(seed);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    auto nearest = [&](const Eigen::RowVectorXd& q, Index skip) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j) {
            if (j != skip) best = std::min(best, (points.row(j) - q).squaredNorm());
        }
        return std::sqrt(best);
    };
    HopkinsDraw draw;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        Eigen::RowVectorXd u(points.cols());
        for (Index c = 0; c < points.cols(); ++c) u(c) = lo(c) + (hi(c) - lo(c)) * unit(rng);
        draw.u_sum += nearest(u, -1);
        draw.w_sum += nearest(points.row(order[i]), order[i]);
    }
    return draw;
}

double hopkins(const RowMatrix& points, const HopkinsConfig& config) {
    check_points(points);
    const auto n = static_cast<std::size_t>(points.rows());
    if (n < 10) throw ValidationError("hopkins: need at least 10 points, got " + std::to_string(n));
    if (config.repetitions == 0) throw ValidationError("hopkins: repetitions must be >= 1");
    if ((points.colwise().maxCoeff() - points.colwise().minCoeff()).maxCoeff() <= 0.0) {
        throw ValidationError("hopkins: degenerate bounding box");
    }
    const std::size_t m = hopkins_sample_size(n, config);
    double sum = 0.0;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
        const auto d = hopkins_draw(points, m, derive_seed(config.seed, rep));
        const double denom = d.u_sum + d.w_sum;
        sum += denom > 0.0 ? d.u_sum / denom : 0.5;
    }
    return sum / static_cast<double>(config.repetitions);
}

std::vector<std::string> summarize(const FeatureIndex& index, std::size_t k, const KMeansConfig& config) {
    const auto result = kmeans(index, k, config);
    std::vector<std::string> out(k);
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < index.ids.size(); ++i) {
        const auto c = result.assignments[i];
        const double d = (index.representatives.row(static_cast<Index>(i)) - result.centroids.row(static_cast<Index>(c))).squaredNorm();
        if (d < best[c] || (d == best[c] && index.ids[i] < out[c])) {
            best[c] = d;
            out[c] = index.ids[i];
        }
    }
    return out;
}

namespace {
std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write " + path.string());
    return out;
}
std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
}  // namespace

void write_projection_csv(const std::filesystem::path& path, const Projection& projection) {
    auto out = open_out(path);
    out << "material_id,x,y\n";
    for (std::size_t i = 0; i < projection.ids.size(); ++i) {
        out << projection.ids[i] << ',' << num(projection.coordinates(static_cast<Index>(i), 0)) << ','
            << num(projection.coordinates(static_cast<Index>(i), 1)) << '\n';
    }
}

void write_clusters_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                        const ClusteringResult& result) {
    auto out = open_out(path);
    out << "material_id,cluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << result.assignments[i] << '\n';
}

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
    auto out = open_out(path);
    for (const auto& id : ids) out << id << '\n';
}

}  // namespace matsim
