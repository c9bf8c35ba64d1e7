#include "matsim/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "matsim/errors.hpp"

namespace matsim {

LatentGroundTruth LatentGroundTruth::from_latent(std::vector<std::string> ids, RowMatrix latent) {
    if (ids.size() != static_cast<std::size_t>(latent.rows())) {
        throw ValidationError("latent ground truth: id count does not match latent rows");
    }
    const Index n = latent.rows();
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            d(i, j) = d(j, i) = (latent.row(i) - latent.row(j)).norm();
        }
    }
    return {std::move(ids), std::move(latent), std::move(d)};
}

std::size_t LatentGroundTruth::index_of(const std::string& id) const {
    const auto it = std::find(material_ids.begin(), material_ids.end(), id);
    if (it == material_ids.end()) throw ValidationError("unknown material '" + id + "'");
    return static_cast<std::size_t>(it - material_ids.begin());
}

namespace {

std::string padded(const char* prefix, std::size_t i, std::size_t n) {
    const auto width = std::to_string(n > 0 ? n - 1 : 0).size();
    std::ostringstream os;
    os << prefix << std::setw(static_cast<int>(std::max<std::size_t>(width, 3))) << std::setfill('0') << i;
    return os.str();
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    if (config.n_materials == 0 || config.views_per_material == 0 || config.latent_dim == 0) {
        throw ValidationError("generate_synthetic: counts must be positive");
    }
    if (config.descriptor_dim < config.latent_dim) {
        throw ValidationError("generate_synthetic: descriptor_dim must be >= latent_dim");
    }
    if (!(config.noise_sigma >= 0.0) || !(config.nuisance_scale >= 0.0)) {
        throw ValidationError("generate_synthetic: noise levels must be non-negative");
    }
    if (config.n_categories == 0) throw ValidationError("generate_synthetic: n_categories must be positive");

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto n = static_cast<Index>(config.n_materials);
    const auto latent_dim = static_cast<Index>(config.latent_dim);
    const auto dim = static_cast<Index>(config.descriptor_dim);

    RowMatrix latent(n, latent_dim);
    for (Index i = 0; i < latent.size(); ++i) latent.data()[i] = unit(rng);

    RowMatrix lift(dim, latent_dim);
    for (Index i = 0; i < lift.size(); ++i) lift.data()[i] = gauss(rng);

    // Conditions: view j of every material uses shape j and illumination j % 2.
    const std::size_t n_illum = config.views_per_material > 1 ? 2 : 1;
    std::map<std::pair<std::string, std::string>, Vector> offsets;
    std::vector<std::pair<std::string, std::string>> conditions;
    for (std::size_t j = 0; j < config.views_per_material; ++j) {
        auto cond = std::make_pair("shape" + std::to_string(j), "illum" + std::to_string(j % n_illum));
        Vector offset(dim);
        for (Index k = 0; k < dim; ++k) offset(k) = config.nuisance_scale * gauss(rng);
        offsets.emplace(cond, std::move(offset));
        conditions.push_back(std::move(cond));
    }

    std::vector<std::string> categories;
    for (std::size_t c = 0; c < config.n_categories; ++c) categories.push_back("cat" + std::to_string(c));

    std::vector<std::string> ids;
    std::vector<Material> materials;
    for (Index i = 0; i < n; ++i) {
        ids.push_back(padded("m", static_cast<std::size_t>(i), config.n_materials));
        const auto bin = std::min<std::size_t>(config.n_categories - 1,
                                               static_cast<std::size_t>(latent(i, 0) * static_cast<double>(config.n_categories)));
        materials.push_back({ids.back(), categories[bin]});
    }

    std::vector<ViewRecord> views;
    RowMatrix descriptors(n * static_cast<Index>(config.views_per_material), dim);
    for (Index i = 0; i < n; ++i) {
        const Vector base = lift * latent.row(i).transpose();
        for (std::size_t j = 0; j < config.views_per_material; ++j) {
            const auto row = views.size();
            Vector d = base + offsets.at(conditions[j]);
            for (Index k = 0; k < dim; ++k) d(k) += config.noise_sigma * gauss(rng);
            descriptors.row(static_cast<Index>(row)) = d.transpose();
            views.push_back({ids[static_cast<std::size_t>(i)] + "_v" + std::to_string(j), ids[static_cast<std::size_t>(i)],
                             conditions[j].first, conditions[j].second, row});
        }
    }

    DatasetBundle bundle("synthetic", categories, std::move(materials), std::move(views), std::move(descriptors));
    return {std::move(bundle), LatentGroundTruth::from_latent(std::move(ids), std::move(latent))};
}

std::vector<MaterialTriplet> sample_triplets(const std::vector<std::string>& ids, std::size_t count,
                                             std::mt19937_64& rng) {
    const std::size_t n = ids.size();
    if (n < 3) throw ValidationError("sample_triplets: need at least 3 materials");
    const std::size_t total = n * (n - 1) * (n - 2) / 2;
    if (count > total) {
        throw ValidationError("sample_triplets: requested " + std::to_string(count) + " comparisons but only " +
                              std::to_string(total) + " exist");
    }
    std::vector<std::array<std::size_t, 3>> all;
    all.reserve(total);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                if (a != r && b != r) all.push_back({r, a, b});
            }
        }
    }
    std::shuffle(all.begin(), all.end(), rng);
    std::bernoulli_distribution coin(0.5);
    std::vector<MaterialTriplet> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto [r, a, b] = all[i];
        if (coin(rng)) std::swap(a, b);
        out.push_back({ids[r], ids[a], ids[b]});
    }
    return out;
}

AnswerStore simulate_answers(const LatentGroundTruth& truth, const std::vector<MaterialTriplet>& triplets,
                             std::size_t votes_per_triplet, double decision_noise, std::uint64_t seed) {
    if (votes_per_triplet == 0) throw ValidationError("simulate_answers: votes_per_triplet must be >= 1");
    if (!(decision_noise >= 0.0)) throw ValidationError("simulate_answers: decision_noise must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AnswerStore store;
    for (const auto& t : triplets) {
        const auto r = truth.index_of(t.reference);
        const auto a = truth.index_of(t.a);
        const auto b = truth.index_of(t.b);
        const double d_ra = truth.distances(static_cast<Index>(r), static_cast<Index>(a));
        const double d_rb = truth.distances(static_cast<Index>(r), static_cast<Index>(b));
        double p_a;
        if (decision_noise == 0.0) {
            p_a = d_ra < d_rb ? 1.0 : (d_ra > d_rb ? 0.0 : 0.5);
        } else {
            const double s_a = 1.0 / (1.0 + d_ra / decision_noise);
            const double s_b = 1.0 / (1.0 + d_rb / decision_noise);
            p_a = s_a / (s_a + s_b);
        }
        for (std::size_t v = 0; v < votes_per_triplet; ++v) {
            const bool pick_a = p_a == 1.0 ? true : (p_a == 0.0 ? false : unit(rng) < p_a);
            store.add({t.reference, t.a, t.b, pick_a ? Side::A : Side::B, "synthetic", TrialKind::Trial,
                       "2000-01-01T00:00:00Z"});
        }
    }
    return store;
}

void write_truth_csv(const std::filesystem::path& path, const LatentGroundTruth& truth) {
    write_labelled_csv(path, "material_id", "z", truth.latent, truth.material_ids);
}

LatentGroundTruth read_truth_csv(const std::filesystem::path& path) {
    std::vector<std::string> ids;
    RowMatrix latent = read_labelled_csv(path, "material_id", &ids);
    return LatentGroundTruth::from_latent(std::move(ids), std::move(latent));
}

}  // namespace matsim
