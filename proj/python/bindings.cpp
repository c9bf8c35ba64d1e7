#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "matsim/analysis.hpp"
#include "matsim/answers.hpp"
#include "matsim/checkpoint.hpp"
#include "matsim/dataset.hpp"
#include "matsim/encoder.hpp"
#include "matsim/errors.hpp"
#include "matsim/gamut.hpp"
#include "matsim/losses.hpp"
#include "matsim/metrics.hpp"
#include "matsim/sampling.hpp"
#include "matsim/synthetic.hpp"
#include "matsim/trainer.hpp"
#include "matsim/tste.hpp"

namespace py = pybind11;
using namespace matsim;
using namespace pybind11::literals;

namespace {

using IndexRows = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<IndexTriplet> to_triplets(const IndexRows& rows) {
    if (rows.rows() > 0 && rows.cols() != 3) throw ValidationError("triplets must have shape (n, 3)");
    std::vector<IndexTriplet> out;
    out.reserve(static_cast<std::size_t>(rows.rows()));
    for (Index i = 0; i < rows.rows(); ++i) out.push_back({rows(i, 0), rows(i, 1), rows(i, 2)});
    return out;
}

py::tuple loss_tuple(const LossResult& r) { return py::make_tuple(r.value, r.grad); }

DistanceMatrix distances_from(const std::vector<std::string>& ids, const Matrix& values) {
    return DistanceMatrix(ids, values);
}

py::dict report_dict(const EvaluationReport& report) {
    return py::module_::import("json").attr("loads")(report_to_json(report).dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Perceptual material similarity core";

    static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
    static py::exception<ComputeError> compute_error(m, "ComputeError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            py::set_error(validation_error, e.what());
        } catch (const ComputeError& e) {
            py::set_error(compute_error, e.what());
        }
    });

    py::class_<DatasetBundle>(m, "DatasetBundle")
        .def_property_readonly("name", &DatasetBundle::name)
        .def_property_readonly("material_ids", &DatasetBundle::material_ids)
        .def_property_readonly("view_ids",
                               [](const DatasetBundle& b) {
                                   std::vector<std::string> ids;
                                   for (const auto& v : b.views()) ids.push_back(v.view_id);
                                   return ids;
                               })
        .def_property_readonly("view_materials",
                               [](const DatasetBundle& b) {
                                   std::vector<std::string> ids;
                                   for (const auto& v : b.views()) ids.push_back(v.material_id);
                                   return ids;
                               })
        .def_property_readonly("shapes", &DatasetBundle::shapes)
        .def_property_readonly("descriptors", &DatasetBundle::descriptors)
        .def("save", [](const DatasetBundle& b, const std::filesystem::path& dir,
                        bool binary) { return save_dataset(b, dir, binary ? DescriptorFormat::Binary : DescriptorFormat::Csv); },
             "dir"_a, "binary"_a = true)
        .def("split", [](const DatasetBundle& b, const std::vector<std::string>& shapes) { return split_views(b, shapes); },
             "holdout_shapes"_a)
        .def("__len__", [](const DatasetBundle& b) { return b.views().size(); });

    m.def("load_dataset", &load_dataset, "manifest_path"_a);

    m.def(
        "generate_synthetic",
        [](std::size_t n_materials, std::size_t views_per_material, std::size_t latent_dim, std::size_t descriptor_dim,
           double noise_sigma, std::uint64_t seed) {
            SyntheticConfig c;
            c.n_materials = n_materials;
            c.views_per_material = views_per_material;
            c.latent_dim = latent_dim;
            c.descriptor_dim = descriptor_dim;
            c.noise_sigma = noise_sigma;
            c.seed = seed;
            auto data = generate_synthetic(c);
            return py::make_tuple(std::move(data.bundle), data.truth.material_ids, data.truth.latent);
        },
        "n_materials"_a = 20, "views_per_material"_a = 4, "latent_dim"_a = 2, "descriptor_dim"_a = 16,
        "noise_sigma"_a = 0.01, "seed"_a = 0,
        "Returns (bundle, material_ids, latent) with one planted latent row per material.");

    py::class_<AnswerStore>(m, "AnswerStore")
        .def(py::init<>())
        .def("__len__", &AnswerStore::size)
        .def("add",
             [](AnswerStore& s, const std::string& r, const std::string& a, const std::string& b, const std::string& chosen,
                const std::string& worker) {
                 s.add({r, a, b, side_from_string(chosen), worker, TrialKind::Trial, ""});
             },
             "reference"_a, "option_a"_a, "option_b"_a, "chosen"_a, "worker"_a = "")
        .def("records",
             [](const AnswerStore& s) {
                 py::list out;
                 for (const auto& a : s.answers()) {
                     out.append(py::make_tuple(a.reference, a.option_a, a.option_b, to_string(a.chosen)));
                 }
                 return out;
             })
        .def("material_ids", &AnswerStore::material_ids)
        .def("consistent", &AnswerStore::consistent);

    m.def("read_answers", &read_answers, "path"_a);
    m.def("write_answers", &write_answers, "path"_a, "answers"_a);
    m.def(
        "simulate_answers",
        [](const std::vector<std::string>& ids, const RowMatrix& latent, std::size_t count, std::size_t votes,
           double decision_noise, std::uint64_t seed) {
            const auto truth = LatentGroundTruth::from_latent(ids, latent);
            std::mt19937_64 rng(seed);
            return simulate_answers(truth, sample_triplets(ids, count, rng), votes, decision_noise, seed + 1);
        },
        "material_ids"_a, "latent"_a, "count"_a, "votes"_a = 1, "decision_noise"_a = 0.0, "seed"_a = 0);

    m.def(
        "triplet_geometry",
        [](const Vector& r, const Vector& a, const Vector& b) {
            const auto g = triplet_geometry(r, a, b);
            return py::dict("d_ra"_a = g.d_ra, "d_rb"_a = g.d_rb, "s_ra"_a = g.s_ra, "s_rb"_a = g.s_rb,
                            "p_ra"_a = g.p_ra, "p_rb"_a = g.p_rb);
        },
        "f_r"_a, "f_a"_a, "f_b"_a);
    m.def(
        "triplet_loss",
        [](const Matrix& f, const IndexRows& t, double mu, unsigned threads) {
            return loss_tuple(triplet_loss(f, to_triplets(t), mu, threads));
        },
        "features"_a, "triplets"_a, "mu"_a = 0.3, "threads"_a = 1, "Features are (dim, n); returns (value, grad).");
    m.def(
        "similarity_loss",
        [](const Matrix& f, const IndexRows& t, unsigned threads) {
            return loss_tuple(similarity_loss(f, to_triplets(t), threads));
        },
        "features"_a, "triplets"_a, "threads"_a = 1);
    m.def(
        "cross_entropy_loss",
        [](const Matrix& p, const std::vector<int>& labels, double eps) {
            return loss_tuple(cross_entropy_loss(p, labels, eps));
        },
        "probabilities"_a, "labels"_a, "epsilon"_a = 0.1);
    m.def(
        "batch_hard_triplet_loss",
        [](const Matrix& f, const std::vector<int>& labels, double mu) {
            return loss_tuple(batch_hard_triplet_loss(f, labels, mu));
        },
        "features"_a, "labels"_a, "mu"_a = 0.3);

    py::class_<EncoderModel>(m, "EncoderModel")
        .def_static("initialize", &EncoderModel::initialize, "layer_dims"_a, "seed"_a = 0, "n_classes"_a = 0)
        .def_static("identity", &EncoderModel::identity, "dim"_a)
        .def_property_readonly("layer_dims", &EncoderModel::layer_dims)
        .def_property_readonly("parameters", &EncoderModel::parameters)
        .def("encode", [](const EncoderModel& model, const Matrix& x) { return encode(model, x); }, "inputs"_a,
             "Inputs are (input_dim, n); returns (output_dim, n).")
        .def("__eq__", &EncoderModel::operator==);

    m.def(
        "train",
        [](const DatasetBundle& bundle, const AnswerStore& answers, std::size_t epochs, std::size_t steps_per_epoch,
           std::vector<std::size_t> hidden, std::size_t dim, double lr, std::uint64_t seed, unsigned threads) {
            TrainConfig c;
            c.epochs = epochs;
            c.steps_per_epoch = steps_per_epoch;
            c.hidden_dims = std::move(hidden);
            c.output_dim = dim;
            c.learning_rate_initial = lr;
            c.seed = seed;
            c.threads = threads;
            py::gil_scoped_release release;
            auto result = train(bundle, answers, c);
            return std::make_pair(std::move(result.model), result.epoch_loss);
        },
        "bundle"_a, "answers"_a, "epochs"_a = 80, "steps_per_epoch"_a = 50,
        "hidden"_a = std::vector<std::size_t>{128}, "dim"_a = 128, "lr"_a = 1e-3, "seed"_a = 0, "threads"_a = 1,
        "Returns (model, per-epoch mean loss).");
    m.def(
        "write_checkpoint",
        [](const std::filesystem::path& path, const EncoderModel& model, std::uint64_t seed, std::size_t epoch) {
            write_checkpoint(path, model, {seed, epoch, LossConfig{}});
        },
        "path"_a, "model"_a, "seed"_a = 0, "epoch"_a = 0);
    m.def("read_checkpoint", [](const std::filesystem::path& path) { return read_checkpoint(path).model; }, "path"_a);

    m.def(
        "evaluate",
        [](const AnswerStore& answers, const std::vector<std::string>& ids, const Matrix& distances) {
            const auto d = distances_from(ids, distances);
            const auto prob = similarity_probability(d);
            return report_dict(evaluate(answers, nearest_predictor(d), &prob, {}));
        },
        "answers"_a, "material_ids"_a, "distances"_a,
        "Accuracy and perplexity of a material distance matrix against the answers.");
    m.def(
        "perplexity",
        [](const AnswerStore& answers, const std::vector<std::string>& ids, const Matrix& distances,
           const std::string& mode) {
            const auto d = distances_from(ids, distances);
            return perplexity(answers, similarity_probability(d),
                              mode == "raw" ? PerplexityMode::Raw : PerplexityMode::Majority)
                .value;
        },
        "answers"_a, "material_ids"_a, "distances"_a, "mode"_a = "majority");

    m.def(
        "tste_fit",
        [](const AnswerStore& answers, std::size_t dim, double alpha, std::size_t max_iters, std::uint64_t seed) {
            TsteConfig c;
            c.dim = dim;
            c.alpha = alpha;
            c.max_iters = max_iters;
            c.seed = seed;
            const auto e = tste_fit(answers, c);
            return py::dict("ids"_a = e.ids, "points"_a = e.points, "log_likelihood"_a = e.log_likelihood,
                            "satisfied_fraction"_a = e.satisfied_fraction, "iterations"_a = e.iterations);
        },
        "answers"_a, "dim"_a = 2, "alpha"_a = 5.0, "max_iters"_a = 1000, "seed"_a = 0);
    m.def(
        "information_gain",
        [](const std::vector<double>& tau, const std::vector<double>& p) { return information_gain(tau, p); },
        "tau"_a, "p_a"_a);

    m.def(
        "project_2d",
        [](const RowMatrix& points) {
            std::vector<std::string> ids;
            for (Index i = 0; i < points.rows(); ++i) ids.push_back(std::to_string(i));
            const auto p = project_2d(FeatureIndex::from_points(ids, points));
            return py::make_tuple(p.coordinates, p.eigenvalues);
        },
        "points"_a, "Returns (coordinates (n, 2), covariance eigenvalues).");
    m.def(
        "kmeans",
        [](const RowMatrix& points, std::size_t k, std::uint64_t seed) {
            KMeansConfig c;
            c.seed = seed;
            const auto r = kmeans(points, k, c);
            return py::dict("assignments"_a = r.assignments, "centroids"_a = r.centroids,
                            "explained_variance"_a = r.explained_variance);
        },
        "points"_a, "k"_a, "seed"_a = 0);
    m.def(
        "elbow_k",
        [](const RowMatrix& points, double threshold, std::size_t k_max, std::uint64_t seed) {
            std::vector<std::string> ids;
            for (Index i = 0; i < points.rows(); ++i) ids.push_back(std::to_string(i));
            KMeansConfig c;
            c.seed = seed;
            const auto r = elbow_k(FeatureIndex::from_points(ids, points), threshold, k_max, c);
            return py::make_tuple(r.k, r.explained_variance);
        },
        "points"_a, "threshold"_a = 0.95, "k_max"_a = 20, "seed"_a = 0);
    m.def(
        "hopkins",
        [](const RowMatrix& points, std::size_t repetitions, std::uint64_t seed) {
            HopkinsConfig c;
            c.repetitions = repetitions;
            c.seed = seed;
            return hopkins(points, c);
        },
        "points"_a, "repetitions"_a = 100, "seed"_a = 0);

    m.def("simplex_project", &simplex_project, "v"_a);
    m.def(
        "gamut_solve",
        [](const Vector& target, const Matrix& basis, const EncoderModel& model, std::size_t max_iters, bool simplex) {
            GamutConfig c;
            c.max_iters = max_iters;
            c.simplex = simplex;
            const auto s = gamut_solve({target, basis, {}}, model, c);
            return py::make_tuple(s.weights, s.objective);
        },
        "target"_a, "basis"_a, "model"_a, "max_iters"_a = 500, "simplex"_a = true,
        "Basis columns are inks; returns (weights, objective).");
}
