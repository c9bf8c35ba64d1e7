#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "matsim/analysis.hpp"
#include "matsim/answers.hpp"
#include "matsim/checkpoint.hpp"
#include "matsim/dataset.hpp"
#include "matsim/errors.hpp"
#include "matsim/gamut.hpp"
#include "matsim/metrics.hpp"
#include "matsim/sampling.hpp"
#include "matsim/service.hpp"
#include "matsim/synthetic.hpp"
#include "matsim/trainer.hpp"
#include "matsim/tste.hpp"

// After Eigen: resolv.h defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace matsim;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string data_dir = ".";
    std::string out;
};

std::string require_out(const Globals& g, const char* what) {
    if (g.out.empty()) throw ValidationError(std::string("--out is required for ") + what);
    return g.out;
}

DatasetBundle load_bundle(const Globals& g) { return load_dataset(fs::path(g.data_dir) / "manifest.json"); }

// Output goes to --out when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(g.out);
    if (!out) throw ComputeError("cannot write " + g.out);
    out << text;
}

struct FeatureSource {
    std::string checkpoint;
    std::string embedding;

    void add(CLI::App* cmd) {
        cmd->add_option("--checkpoint", checkpoint, "Encoder checkpoint (features of the dataset views)");
        cmd->add_option("--embedding", embedding, "Embedding CSV (material_id,x0,...) used instead of a checkpoint");
    }

    FeatureIndex load(const Globals& g) const {
        if (!embedding.empty()) {
            auto e = read_embedding(embedding);
            return FeatureIndex::from_points(std::move(e.ids), std::move(e.points));
        }
        if (checkpoint.empty()) throw ValidationError("either --checkpoint or --embedding is required");
        return FeatureIndex::from_model(read_checkpoint(checkpoint).model, load_bundle(g));
    }
};

KMeansConfig add_kmeans_options(CLI::App* cmd, KMeansConfig& config) {
    cmd->add_option("--restarts", config.restarts, "k-means++ restarts");
    cmd->add_option("--max-iters", config.max_iters, "Lloyd iterations per restart");
    cmd->add_option("--tol", config.tol, "Centroid shift tolerance");
    return config;
}

void add_gen_synth(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("gen-synth", "Generate a synthetic dataset with planted latent positions");
    auto config = std::make_shared<SyntheticConfig>();
    auto binary = std::make_shared<bool>(false);
    cmd->add_option("--materials", config->n_materials, "Number of materials");
    cmd->add_option("--views", config->views_per_material, "Views per material");
    cmd->add_option("--latent-dim", config->latent_dim, "Dimension of the planted latent space");
    cmd->add_option("--descriptor-dim", config->descriptor_dim, "Descriptor dimension");
    cmd->add_option("--noise", config->noise_sigma, "Per-view descriptor noise sigma");
    cmd->add_option("--nuisance", config->nuisance_scale, "Scale of per-condition descriptor offsets");
    cmd->add_option("--categories", config->n_categories, "Number of material categories");
    cmd->add_flag("--binary", *binary, "Write descriptors as PDSC binary instead of CSV");
    cmd->callback([&g, config, binary] {
        const auto out = require_out(g, "gen-synth");
        config->seed = g.seed;
        const auto data = generate_synthetic(*config);
        save_dataset(data.bundle, out, *binary ? DescriptorFormat::Binary : DescriptorFormat::Csv);
        write_truth_csv(fs::path(out) / "truth.csv", data.truth);
    });
}

void add_simulate(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("simulate", "Simulate annotator answers from planted latent positions");
    struct Opts {
        std::string truth;
        std::size_t triplets = 2000;
        std::size_t votes = 1;
        double decision_noise = 0.0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--truth", o->truth, "Planted positions CSV (default: <data-dir>/truth.csv)");
    cmd->add_option("--triplets", o->triplets, "Distinct comparisons to sample");
    cmd->add_option("--votes", o->votes, "Votes per comparison");
    cmd->add_option("--decision-noise", o->decision_noise, "Annotator noise; 0 always picks the nearer candidate");
    cmd->callback([&g, o] {
        const auto out = require_out(g, "simulate");
        const auto truth = read_truth_csv(o->truth.empty() ? fs::path(g.data_dir) / "truth.csv" : fs::path(o->truth));
        std::mt19937_64 rng(g.seed);
        const auto triplets = sample_triplets(truth.material_ids, o->triplets, rng);
        write_answers(out, simulate_answers(truth, triplets, o->votes, o->decision_noise, g.seed + 1));
    });
}

void add_split(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("split", "Split a dataset by holding out view shapes");
    auto shapes = std::make_shared<std::vector<std::string>>();
    cmd->add_option("--holdout-shapes", *shapes, "Shape tags moved to the test partition")->required();
    cmd->callback([&g, shapes] {
        const auto out = fs::path(require_out(g, "split"));
        const auto bundle = load_bundle(g);
        const auto [train, test] = split_views(bundle, *shapes);
        const auto format = fs::exists(fs::path(g.data_dir) / "descriptors.bin") ? DescriptorFormat::Binary : DescriptorFormat::Csv;
        save_dataset(train, out / "train", format);
        save_dataset(test, out / "test", format);
    });
}

void add_train(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("train", "Train the encoder on triplet answers");
    struct Opts {
        TrainConfig config;
        std::string answers;
        std::string loss_log;
    };
    auto o = std::make_shared<Opts>();
    auto& c = o->config;
    cmd->add_option("--answers", o->answers, "Answers JSONL")->required();
    cmd->add_option("--epochs", c.epochs, "Training epochs");
    cmd->add_option("--lr", c.learning_rate_initial, "Initial learning rate");
    cmd->add_option("--lr-step", c.lr_step_epochs, "Epochs between learning-rate decays");
    cmd->add_option("--lr-decay", c.lr_decay_factor, "Learning-rate divisor at each decay");
    cmd->add_option("--steps-per-epoch", c.steps_per_epoch, "Batches per epoch");
    cmd->add_option("--materials-per-batch", c.materials_per_batch, "Materials per batch (P)");
    cmd->add_option("--views-per-material", c.views_per_material, "Views per batch material (K)");
    cmd->add_option("--hidden", c.hidden_dims, "Hidden layer widths");
    cmd->add_option("--dim", c.output_dim, "Feature dimension");
    cmd->add_option("--margin", c.loss.margin_mu, "Triplet loss margin");
    cmd->add_option("--w-tl", c.loss.weight_tl, "Weight of the triplet loss");
    cmd->add_option("--w-p", c.loss.weight_p, "Weight of the similarity loss");
    cmd->add_option("--w-ce", c.loss.weight_ce, "Weight of the cross-entropy loss");
    cmd->add_option("--w-btl", c.loss.weight_btl, "Weight of the batch-hard triplet loss");
    cmd->add_option("--epsilon", c.loss.label_smoothing_epsilon, "Label smoothing for the cross-entropy loss");
    cmd->add_option("--classes", c.loss.n_classes, "Classes of the cross-entropy head (0: one per material)");
    cmd->add_option("--threads", c.threads, "Worker threads for loss evaluation");
    cmd->add_option("--loss-log", o->loss_log, "Write per-epoch mean loss as CSV");
    cmd->callback([&g, o] {
        const auto out = require_out(g, "train");
        const auto bundle = load_bundle(g);
        const auto answers = read_answers(o->answers);
        o->config.seed = g.seed;
        const auto result = train(bundle, answers, o->config);
        auto loss = o->config.loss;
        if (loss.weight_ce > 0.0 && loss.n_classes == 0) loss.n_classes = result.model.n_classes();
        write_checkpoint(out, result.model, {g.seed, o->config.epochs, loss});
        if (!o->loss_log.empty()) {
            std::ofstream log(o->loss_log);
            log << "epoch,loss\n";
            for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
                log << e << ',' << nlohmann::json(result.epoch_loss[e]).dump() << '\n';
            }
        }
    });
}

void add_eval(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("eval", "Evaluate a predictor against answers");
    struct Opts {
        std::string answers;
        std::string predictor = "model";
        std::string checkpoint;
        std::string embedding;
        std::string truth;
        std::string train_answers;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--answers", o->answers, "Answers JSONL to evaluate against")->required();
    cmd->add_option("--predictor", o->predictor, "model, tste or oracle")
        ->check(CLI::IsMember({"model", "tste", "oracle"}));
    cmd->add_option("--checkpoint", o->checkpoint, "Encoder checkpoint (predictor model)");
    cmd->add_option("--embedding", o->embedding, "tSTE embedding CSV (predictor tste)");
    cmd->add_option("--truth", o->truth, "Planted positions CSV for the distance-matrix error");
    cmd->callback([&g, o] {
        const auto answers = read_answers(o->answers);
        std::optional<DatasetBundle> bundle;
        if (fs::exists(fs::path(g.data_dir) / "manifest.json")) bundle = load_bundle(g);
        std::map<std::string, std::string> categories;
        if (bundle) categories = category_map(*bundle);

        std::optional<DistanceMatrix> distances;
        ChoicePredictor predict;
        ProbabilityModel prob;
        if (o->predictor == "oracle") {
            predict = oracle_predictor(answers);
        } else if (o->predictor == "model") {
            if (o->checkpoint.empty() || !bundle) throw ValidationError("predictor model needs --checkpoint and a dataset");
            distances = distance_matrix_from_model(read_checkpoint(o->checkpoint).model, *bundle);
        } else {
            if (o->embedding.empty()) throw ValidationError("predictor tste needs --embedding");
            const auto e = read_embedding(o->embedding);
            distances = tste_distance_matrix(e);
            const auto emb = std::make_shared<TsteEmbedding>(e);
            prob = [emb](const std::string& r, const std::string& a, const std::string& b) {
                auto row = [&](const std::string& id) -> Vector {
                    const auto it = std::find(emb->ids.begin(), emb->ids.end(), id);
                    if (it == emb->ids.end()) throw ValidationError("embedding has no material " + id);
                    return emb->points.row(it - emb->ids.begin()).transpose();
                };
                return tste_probability(row(r), row(a), row(b), emb->alpha);
            };
        }
        if (distances) {
            predict = nearest_predictor(*distances);
            if (!prob) prob = similarity_probability(*distances);
        }
        auto report = evaluate(answers, predict, prob ? &prob : nullptr, categories);
        if (!o->truth.empty()) {
            if (!distances) throw ValidationError("--truth needs a model or tste predictor");
            const auto truth = read_truth_csv(o->truth);
            const Matrix squared = truth.distances.array().square().matrix();
            report.matrix_error = mean_matrix_error(*distances, DistanceMatrix(truth.material_ids, squared));
        }
        emit(g, report_to_json(report).dump(2) + "\n");
    });
}

void add_embed(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("embed", "Dump encoder features of every view (or per material)");
    struct Opts {
        std::string checkpoint;
        bool per_material = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--checkpoint", o->checkpoint, "Encoder checkpoint")->required();
    cmd->add_flag("--per-material", o->per_material, "Write mean features per material instead of per view");
    cmd->callback([&g, o] {
        const auto out = require_out(g, "embed");
        const auto bundle = load_bundle(g);
        const auto index = FeatureIndex::from_model(read_checkpoint(o->checkpoint).model, bundle);
        if (o->per_material) {
            write_labelled_csv(out, "material_id", "f", index.representatives, index.ids);
        } else {
            std::vector<std::string> view_ids(bundle.views().size());
            for (const auto& v : bundle.views()) view_ids[v.descriptor_row] = v.view_id;
            write_labelled_csv(out, "view_id", "f", index.view_features, view_ids);
        }
    });
}

void add_tste(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("tste", "Fit a t-distributed stochastic triplet embedding to answers");
    struct Opts {
        std::string answers;
        TsteConfig config;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--answers", o->answers, "Answers JSONL")->required();
    cmd->add_option("--alpha", o->config.alpha, "Student-t degrees of freedom");
    cmd->add_option("--dim", o->config.dim, "Embedding dimension");
    cmd->add_option("--lr", o->config.learning_rate, "Initial step size");
    cmd->add_option("--max-iters", o->config.max_iters, "Gradient ascent iterations");
    cmd->callback([&g, o] {
        const auto out = require_out(g, "tste");
        o->config.seed = g.seed;
        std::vector<std::string> ids;
        if (fs::exists(fs::path(g.data_dir) / "manifest.json")) ids = load_bundle(g).material_ids();
        const auto e = tste_fit(read_answers(o->answers), o->config, ids);
        write_embedding(out, e);
        std::cerr << "satisfied fraction " << e.satisfied_fraction << ", log-likelihood " << e.log_likelihood << '\n';
    });
}

void add_sample_next(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("sample-next", "Select the next most informative comparisons");
    struct Opts {
        std::string answers;
        std::size_t iteration = 0;
        SamplingConfig config;
        std::string convergence_log;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--answers", o->answers, "Answers JSONL collected so far");
    cmd->add_option("--iteration", o->iteration, "Iteration index recorded in the plan");
    cmd->add_option("--pairs", o->config.pairs_per_reference, "Pairs selected per reference");
    cmd->add_option("--pool", o->config.candidate_pool, "Random candidate pairs scored per reference");
    cmd->add_flag("--exhaustive", o->config.exhaustive, "Score every unasked pair");
    cmd->add_flag("--bootstrap", o->config.bootstrap, "Uniformly random pairs (first iteration)");
    cmd->add_option("--alpha", o->config.tste.alpha, "Student-t degrees of freedom of the embedding");
    cmd->add_option("--tste-dim", o->config.tste.dim, "Embedding dimension");
    cmd->add_option("--tste-iters", o->config.tste.max_iters, "Embedding fit iterations");
    cmd->add_option("--convergence-log", o->convergence_log, "Append iteration,mean_ig to this CSV");
    cmd->callback([&g, o] {
        const auto out = require_out(g, "sample-next");
        const auto ids = load_bundle(g).material_ids();
        AnswerStore answers;
        if (!o->answers.empty()) answers = read_answers(o->answers);
        o->config.tste.seed = g.seed;
        std::mt19937_64 rng(g.seed);
        const auto plan = select_next_pairs(ids, answers, o->config, o->iteration, rng);
        write_plan(out, plan);
        if (!o->convergence_log.empty() && plan.mean_information_gain) {
            append_convergence_log(o->convergence_log, plan.iteration, *plan.mean_information_gain);
        }
        for (const auto& r : plan.exhausted_references) std::cerr << "exhausted reference " << r << '\n';
    });
}

void add_suggest(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("suggest", "Suggest materials within a distance band of a reference");
    struct Opts {
        FeatureSource source;
        std::string reference;
        std::string band = "near";
        std::vector<double> range;
        std::size_t count = 5;
    };
    auto o = std::make_shared<Opts>();
    o->source.add(cmd);
    cmd->add_option("--reference", o->reference, "Reference material id")->required();
    cmd->add_option("--band", o->band, "near, mid or far")->check(CLI::IsMember({"near", "mid", "far"}));
    cmd->add_option("--range", o->range, "Explicit distance-rank quantile range lo hi (overrides --band)")->expected(2);
    cmd->add_option("--count", o->count, "Number of suggestions");
    cmd->callback([&g, o] {
        BandSpec band;
        if (o->range.empty()) {
            band.band = band_from_string(o->band);
        } else {
            band.lo = o->range[0];
            band.hi = o->range[1];
        }
        std::string text;
        for (const auto& id : suggest(o->source.load(g), o->reference, band, o->count, g.seed)) text += id + "\n";
        emit(g, text);
    });
}

void add_project(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("project", "2D principal-component layout of the materials");
    auto source = std::make_shared<FeatureSource>();
    source->add(cmd);
    cmd->callback([&g, source] { write_projection_csv(require_out(g, "project"), project_2d(source->load(g))); });
}

void add_cluster(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("cluster", "k-means clustering of the materials");
    struct Opts {
        FeatureSource source;
        std::size_t k = 0;
        KMeansConfig kmeans;
    };
    auto o = std::make_shared<Opts>();
    o->source.add(cmd);
    cmd->add_option("--k", o->k, "Number of clusters")->required();
    add_kmeans_options(cmd, o->kmeans);
    cmd->callback([&g, o] {
        const auto index = o->source.load(g);
        o->kmeans.seed = g.seed;
        const auto result = kmeans(index, o->k, o->kmeans);
        write_clusters_csv(require_out(g, "cluster"), index.ids, result);
        std::cerr << "explained variance " << result.explained_variance << '\n';
    });
}

void add_elbow(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("elbow", "Smallest cluster count explaining the variance threshold");
    struct Opts {
        FeatureSource source;
        double threshold = 0.95;
        std::size_t k_max = 20;
        KMeansConfig kmeans;
    };
    auto o = std::make_shared<Opts>();
    o->source.add(cmd);
    cmd->add_option("--threshold", o->threshold, "Explained-variance threshold");
    cmd->add_option("--k-max", o->k_max, "Largest cluster count tried (capped at the material count)");
    add_kmeans_options(cmd, o->kmeans);
    cmd->callback([&g, o] {
        const auto index = o->source.load(g);
        o->kmeans.seed = g.seed;
        const auto r = elbow_k(index, o->threshold, std::min(o->k_max, index.size()), o->kmeans);
        nlohmann::ordered_json j{{"k", r.k}, {"reached", r.reached}, {"threshold", o->threshold},
                                 {"explained_variance", r.explained_variance}};
        emit(g, j.dump(2) + "\n");
    });
}

void add_hopkins(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("hopkins", "Hopkins clustering-tendency statistic");
    struct Opts {
        FeatureSource source;
        HopkinsConfig config;
    };
    auto o = std::make_shared<Opts>();
    o->source.add(cmd);
    cmd->add_option("--sample-fraction", o->config.sample_fraction, "Fraction of points sampled per repetition");
    cmd->add_option("--repetitions", o->config.repetitions, "Repetitions averaged");
    cmd->callback([&g, o] {
        const auto index = o->source.load(g);
        o->config.seed = g.seed;
        const double h = hopkins(index, o->config);
        nlohmann::ordered_json j{{"hopkins", h},
                                 {"sample_fraction", o->config.sample_fraction},
                                 {"sample_size", hopkins_sample_size(index.size(), o->config)},
                                 {"repetitions", o->config.repetitions},
                                 {"seed", g.seed}};
        emit(g, j.dump(2) + "\n");
    });
}

void add_summarize(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("summarize", "One representative material per cluster");
    struct Opts {
        FeatureSource source;
        std::size_t k = 0;
        double threshold = 0.95;
        KMeansConfig kmeans;
    };
    auto o = std::make_shared<Opts>();
    o->source.add(cmd);
    cmd->add_option("--k", o->k, "Number of clusters (0: elbow selection)");
    cmd->add_option("--threshold", o->threshold, "Explained-variance threshold for elbow selection");
    add_kmeans_options(cmd, o->kmeans);
    cmd->callback([&g, o] {
        const auto index = o->source.load(g);
        o->kmeans.seed = g.seed;
        std::size_t k = o->k;
        if (k == 0) k = elbow_k(index, o->threshold, index.size(), o->kmeans).k;
        std::string text;
        for (const auto& id : summarize(index, k, o->kmeans)) text += id + "\n";
        emit(g, text);
    });
}

void add_gamut(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("gamut", "Closest mixture of basis descriptors in feature space");
    struct Opts {
        std::string problem;
        std::string checkpoint;
        GamutConfig config;
        bool no_simplex = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--problem", o->problem, "Problem JSON {target, basis}")->required();
    cmd->add_option("--checkpoint", o->checkpoint, "Encoder checkpoint")->required();
    cmd->add_option("--max-iters", o->config.max_iters, "Iteration limit");
    cmd->add_option("--step", o->config.step, "Initial step size");
    cmd->add_option("--tol", o->config.tol, "Stop when an accepted step moves the weights less than this");
    cmd->add_flag("--no-simplex", o->no_simplex, "Box [0,1] weights without the sum-to-one constraint");
    cmd->callback([&g, o] {
        std::optional<DatasetBundle> bundle;
        if (fs::exists(fs::path(g.data_dir) / "manifest.json")) bundle = load_bundle(g);
        const auto problem = read_gamut_problem(o->problem, bundle ? &*bundle : nullptr);
        o->config.simplex = !o->no_simplex;
        const auto solution = gamut_solve(problem, read_checkpoint(o->checkpoint).model, o->config);
        emit(g, gamut_solution_to_json(solution, problem).dump(2) + "\n");
    });
}

httplib::Server* g_server = nullptr;

void add_serve(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
    struct Opts {
        std::string host = "127.0.0.1";
        int port = 8080;
        std::string state_dir = "state";
        std::string static_dir;
        ServiceConfig config;
    };
    auto o = std::make_shared<Opts>();
    auto& c = o->config;
    cmd->add_option("--host", o->host, "Listen address");
    cmd->add_option("--port", o->port, "Listen port");
    cmd->add_option("--state-dir", o->state_dir, "Journal and answer directory");
    cmd->add_option("--static", o->static_dir, "Directory served at /");
    cmd->add_option("--hit-size", c.hit.hit_size, "Trials per HIT");
    cmd->add_option("--training", c.hit.n_training, "Training trials per HIT");
    cmd->add_option("--controls", c.hit.n_control, "Control repeats per HIT");
    cmd->add_option("--pairs", c.sampling.pairs_per_reference, "Pairs selected per reference each iteration");
    cmd->add_option("--pool", c.sampling.candidate_pool, "Random candidate pairs scored per reference");
    cmd->add_option("--coverage", c.coverage_threshold, "Answered fraction of a plan required to advance");
    cmd->add_flag("--asymmetric", c.asymmetric, "Random view condition per triplet item");
    cmd->callback([&g, o] {
        o->config.state_dir = o->state_dir;
        o->config.seed = g.seed;
        o->config.sampling.tste.seed = g.seed;
        if (const char* token = std::getenv("PERCEPT_ADMIN_TOKEN")) o->config.admin_token = token;
        AnnotationService service(load_bundle(g), o->config);
        httplib::Server server;
        std::optional<fs::path> static_dir;
        if (!o->static_dir.empty()) static_dir = o->static_dir;
        mount_routes(server, service, static_dir);
        g_server = &server;
        std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
        std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
        std::cerr << "listening on " << o->host << ':' << o->port << '\n';
        if (!server.listen(o->host, o->port)) throw ComputeError("cannot listen on " + o->host + ":" + std::to_string(o->port));
        g_server = nullptr;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perceptual material similarity toolkit", "matsim"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--data-dir", g.data_dir, "Dataset directory containing manifest.json");
    app.add_option("--out", g.out, "Output path");

    add_gen_synth(app, g);
    add_simulate(app, g);
    add_split(app, g);
    add_train(app, g);
    add_eval(app, g);
    add_embed(app, g);
    add_tste(app, g);
    add_sample_next(app, g);
    add_suggest(app, g);
    add_project(app, g);
    add_cluster(app, g);
    add_elbow(app, g);
    add_hopkins(app, g);
    add_summarize(app, g);
    add_gamut(app, g);
    add_serve(app, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
