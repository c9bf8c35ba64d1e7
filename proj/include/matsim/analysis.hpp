#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "matsim/dataset.hpp"
#include "matsim/encoder.hpp"
#include "matsim/types.hpp"

namespace matsim {

/// Per-material representative features (rows, in id order) plus optional per-view features.
struct FeatureIndex {
    std::vector<std::string> ids;
    RowMatrix representatives;
    RowMatrix view_features;               // empty when built from points
    std::vector<std::size_t> view_material;  // row of `representatives` for each view row

    std::size_t size() const { return ids.size(); }
    Index index_of(const std::string& id) const;

    static FeatureIndex from_points(std::vector<std::string> ids, RowMatrix points);
    /// Encodes every view; a material's representative is the mean of its view features.
    static FeatureIndex from_model(const EncoderModel& model, const DatasetBundle& bundle);
};

/// Other materials ordered by squared distance to the reference (ties by id).
std::vector<std::pair<std::string, double>> rank_neighbors(const FeatureIndex& index, const std::string& reference);

enum class Band { Near, Mid, Far };
Band band_from_string(const std::string& s);

struct BandSpec {
    std::optional<Band> band;
    double lo = 0.0;  // explicit [lo, hi) quantile range when band is empty
    double hi = 1.0;
};

/// Materials in the band: rank i of m others has quantile i/m; near [0,1/3), mid
/// [1/3,2/3), far [2/3,1]. Draws min(count, band size) without replacement and
/// returns them in rank order.
std::vector<std::string> suggest(const FeatureIndex& index, const std::string& reference, const BandSpec& band,
                                 std::size_t count, std::uint64_t seed);

struct Projection {
    std::vector<std::string> ids;
    RowMatrix coordinates;  // n x 2
    Vector eigenvalues;     // covariance spectrum (divided by n), descending
};

Projection project_2d(const FeatureIndex& index);

struct KMeansConfig {
    std::size_t restarts = 10;
    std::size_t max_iters = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

struct ClusteringResult {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;  // per material row, labels by first appearance
    RowMatrix centroids;
    double ssw = 0.0;
    double sst = 0.0;
    double explained_variance = 0.0;
};

ClusteringResult kmeans(const RowMatrix& points, std::size_t k, const KMeansConfig& config);
inline ClusteringResult kmeans(const FeatureIndex& index, std::size_t k, const KMeansConfig& config) {
    return kmeans(index.representatives, k, config);
}

struct ElbowResult {
    std::size_t k = 0;
    bool reached = false;
    std::vector<double> explained_variance;  // entry i is for k = i + 1
};

/// Smallest k whose nested k-means solution explains at least `threshold` of the variance.
ElbowResult elbow_k(const FeatureIndex& index, double threshold, std::size_t k_max, const KMeansConfig& config);

struct HopkinsConfig {
    double sample_fraction = 0.1;
    std::size_t min_sample = 5;
    std::size_t max_sample = 50;
    std::size_t repetitions = 100;
    std::uint64_t seed = 0;
};

struct HopkinsDraw {
    double u_sum = 0.0;  // uniform point -> nearest data point
    double w_sum = 0.0;  // sampled data point -> nearest other data point
};

std::size_t hopkins_sample_size(std::size_t n, const HopkinsConfig& config);
HopkinsDraw hopkins_draw(const RowMatrix& points, std::size_t m, std::uint64_t seed);
double hopkins(const RowMatrix& points, const HopkinsConfig& config);
inline double hopkins(const FeatureIndex& index, const HopkinsConfig& config) {
    return hopkins(index.representatives, config);
}

/// One material per k-means cluster: the one closest to the centroid, in cluster label order.
std::vector<std::string> summarize(const FeatureIndex& index, std::size_t k, const KMeansConfig& config);

void write_projection_csv(const std::filesystem::path& path, const Projection& projection);
void write_clusters_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                        const ClusteringResult& result);
void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);

}  // namespace matsim
