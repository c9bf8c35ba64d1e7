#include "matsim/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "matsim/errors.hpp"
#include "matsim/pdsc.hpp"

namespace matsim {

void write_checkpoint(const std::filesystem::path& path, const EncoderModel& model, const CheckpointInfo& info) {
    nlohmann::ordered_json header;
    header["layer_dims"] = model.layer_dims();
    header["activation"] = "relu";
    header["seed"] = info.seed;
    header["epoch"] = info.epoch;
    header["loss_config"] = {{"margin_mu", info.loss.margin_mu},
                             {"weight_tl", info.loss.weight_tl},
                             {"weight_p", info.loss.weight_p},
                             {"weight_ce", info.loss.weight_ce},
                             {"weight_btl", info.loss.weight_btl},
                             {"label_smoothing_epsilon", info.loss.label_smoothing_epsilon},
                             {"n_classes", info.loss.n_classes}};
    header["n_classes"] = model.n_classes();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << header.dump() << '\n';
    auto put = [&](const DenseLayer& l) {
        write_pdsc(out, RowMatrix(l.weight));
        write_pdsc(out, RowMatrix(l.bias));
    };
    for (const auto& l : model.layers()) put(l);
    if (model.head()) put(*model.head());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty checkpoint");
    Checkpoint cp;
    std::vector<std::size_t> dims;
    std::size_t n_classes = 0;
    try {
        const auto header = nlohmann::json::parse(line);
        dims = header.at("layer_dims").get<std::vector<std::size_t>>();
        if (header.at("activation").get<std::string>() != "relu") {
            throw ValidationError(path.string() + ": unsupported activation");
        }
        cp.info.seed = header.at("seed").get<std::uint64_t>();
        cp.info.epoch = header.at("epoch").get<std::size_t>();
        const auto& lc = header.at("loss_config");
        cp.info.loss.margin_mu = lc.at("margin_mu").get<double>();
        cp.info.loss.weight_tl = lc.at("weight_tl").get<double>();
        cp.info.loss.weight_p = lc.at("weight_p").get<double>();
        cp.info.loss.weight_ce = lc.at("weight_ce").get<double>();
        cp.info.loss.weight_btl = lc.at("weight_btl").get<double>();
        cp.info.loss.label_smoothing_epsilon = lc.at("label_smoothing_epsilon").get<double>();
        cp.info.loss.n_classes = lc.at("n_classes").get<std::size_t>();
        n_classes = header.value("n_classes", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": bad checkpoint header: " + e.what());
    }
    if (dims.size() < 2) throw ValidationError(path.string() + ": layer_dims too short");
    auto take = [&](std::size_t in_dim, std::size_t out_dim) {
        const RowMatrix w = read_pdsc(in);
        const RowMatrix b = read_pdsc(in);
        if (static_cast<std::size_t>(w.rows()) != out_dim || static_cast<std::size_t>(w.cols()) != in_dim ||
            static_cast<std::size_t>(b.rows()) != out_dim || b.cols() != 1) {
            throw ValidationError(path.string() + ": tensor shape does not match layer_dims");
        }
        return DenseLayer{Matrix(w), Vector(b.col(0))};
    };
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers.push_back(take(dims[i], dims[i + 1]));
    std::optional<DenseLayer> head;
    if (n_classes > 0) head = take(dims.back(), n_classes);
    cp.model = EncoderModel(std::move(layers), std::move(head));
    return cp;
}

}  // namespace matsim
