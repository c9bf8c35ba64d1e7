#include "matsim/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "matsim/errors.hpp"
#include "matsim/pdsc.hpp"

namespace matsim {

using ordered_json = nlohmann::ordered_json;

DatasetBundle::DatasetBundle(std::string name, std::vector<std::string> categories,
                             std::vector<Material> materials, std::vector<ViewRecord> views,
                             RowMatrix descriptors, std::optional<std::filesystem::path> assets_dir)
    : name_(std::move(name)),
      categories_(std::move(categories)),
      materials_(std::move(materials)),
      views_(std::move(views)),
      descriptors_(std::move(descriptors)),
      assets_dir_(std::move(assets_dir)) {
    const std::set<std::string> category_set(categories_.begin(), categories_.end());
    for (std::size_t i = 0; i < materials_.size(); ++i) {
        const auto& m = materials_[i];
        if (m.id.empty()) throw ValidationError("material " + std::to_string(i) + ": empty id");
        if (m.category.empty()) throw ValidationError("material '" + m.id + "': empty category");
        if (!category_set.empty() && !category_set.count(m.category)) {
            throw ValidationError("material '" + m.id + "': category '" + m.category + "' not declared");
        }
        if (!material_lookup_.emplace(m.id, i).second) throw ValidationError("duplicate material id '" + m.id + "'");
    }
    if (static_cast<std::size_t>(descriptors_.rows()) != views_.size()) {
        throw ValidationError("dimension mismatch: descriptor rows " + std::to_string(descriptors_.rows()) +
                              " != view count " + std::to_string(views_.size()));
    }
    views_by_material_.assign(materials_.size(), {});
    view_material_.resize(views_.size());
    std::set<std::tuple<std::string, std::string, std::string>> conditions;
    std::set<std::size_t> rows_used;
    for (std::size_t i = 0; i < views_.size(); ++i) {
        const auto& v = views_[i];
        if (!view_lookup_.emplace(v.view_id, i).second) throw ValidationError("duplicate view id '" + v.view_id + "'");
        const auto m = material_lookup_.find(v.material_id);
        if (m == material_lookup_.end()) {
            throw ValidationError("view '" + v.view_id + "': unknown material '" + v.material_id + "'");
        }
        if (!conditions.emplace(v.material_id, v.shape, v.illumination).second) {
            throw ValidationError("view '" + v.view_id + "': duplicate (material, shape, illumination)");
        }
        if (v.descriptor_row >= views_.size()) {
            throw ValidationError("view '" + v.view_id + "': descriptor_row " + std::to_string(v.descriptor_row) +
                                  " out of range");
        }
        if (!rows_used.insert(v.descriptor_row).second) {
            throw ValidationError("view '" + v.view_id + "': descriptor_row shared with another view");
        }
        views_by_material_[m->second].push_back(i);
        view_material_[i] = m->second;
    }
    for (std::size_t i = 0; i < materials_.size(); ++i) {
        if (views_by_material_[i].empty()) throw ValidationError("material '" + materials_[i].id + "' has no views");
    }
    for (Index r = 0; r < descriptors_.rows(); ++r) {
        for (Index c = 0; c < descriptors_.cols(); ++c) {
            if (!std::isfinite(descriptors_(r, c))) {
                throw ValidationError("non-finite descriptor value at row " + std::to_string(r) + ", column " +
                                      std::to_string(c));
            }
        }
    }
}

std::optional<std::size_t> DatasetBundle::material_index(const std::string& id) const {
    const auto it = material_lookup_.find(id);
    if (it == material_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> DatasetBundle::view_index(const std::string& view_id) const {
    const auto it = view_lookup_.find(view_id);
    if (it == view_lookup_.end()) return std::nullopt;
    return it->second;
}

Vector DatasetBundle::descriptor(std::size_t view) const {
    return descriptors_.row(static_cast<Index>(views_[view].descriptor_row)).transpose();
}

std::vector<std::string> DatasetBundle::material_ids() const {
    std::vector<std::string> ids;
    ids.reserve(materials_.size());
    for (const auto& m : materials_) ids.push_back(m.id);
    return ids;
}

std::vector<std::string> DatasetBundle::shapes() const {
    std::vector<std::string> out;
    for (const auto& v : views_) {
        if (std::find(out.begin(), out.end(), v.shape) == out.end()) out.push_back(v.shape);
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line, std::size_t col) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": column " + std::to_string(col) +
                              ": cannot parse '" + std::string(text) + "'");
    }
    if (!std::isfinite(v)) {
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": column " + std::to_string(col) +
                              ": non-finite value");
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
T require(const ordered_json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": field '" + key + "': " + e.what());
    }
}

}  // namespace

RowMatrix read_labelled_csv(const std::filesystem::path& path, std::string_view id_column,
                            std::vector<std::string>* view_ids) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty descriptor file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.empty() || header[0] != id_column) {
        throw ValidationError(path.string() + ":1: header must start with " + std::string(id_column));
    }
    const std::size_t cols = header.size() - 1;
    std::vector<double> values;
    std::vector<std::string> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != cols + 1) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": dimension mismatch: expected " +
                                  std::to_string(cols) + " values, found " + std::to_string(fields.size() - 1));
        }
        ids.emplace_back(fields[0]);
        for (std::size_t c = 0; c < cols; ++c) values.push_back(parse_double(fields[c + 1], path, line_no, c + 1));
    }
    RowMatrix out(static_cast<Index>(ids.size()), static_cast<Index>(cols));
    std::copy(values.begin(), values.end(), out.data());
    if (view_ids) *view_ids = std::move(ids);
    return out;
}

void write_labelled_csv(const std::filesystem::path& path, std::string_view id_column, std::string_view value_prefix,
                        const RowMatrix& values, const std::vector<std::string>& view_ids) {
    if (view_ids.size() != static_cast<std::size_t>(values.rows())) {
        throw ValidationError("write_labelled_csv: id count does not match rows");
    }
    std::ofstream out(path);
    if (!out) throw ComputeError("cannot write " + path.string());
    out << id_column;
    for (Index c = 0; c < values.cols(); ++c) out << ',' << value_prefix << c;
    out << '\n';
    for (Index r = 0; r < values.rows(); ++r) {
        out << view_ids[static_cast<std::size_t>(r)];
        for (Index c = 0; c < values.cols(); ++c) out << ',' << format_double(values(r, c));
        out << '\n';
    }
}

RowMatrix read_descriptor_csv(const std::filesystem::path& path, std::vector<std::string>* view_ids) {
    return read_labelled_csv(path, "view_id", view_ids);
}

void write_descriptor_csv(const std::filesystem::path& path, const RowMatrix& values,
                          const std::vector<std::string>& view_ids) {
    write_labelled_csv(path, "view_id", "c", values, view_ids);
}

RowMatrix read_descriptor_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing file: " + path.string());
    try {
        return read_pdsc(in);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_descriptor_binary(const std::filesystem::path& path, const RowMatrix& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputeError("cannot write " + path.string());
    write_pdsc(out, values);
}

DatasetBundle load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("missing file: " + manifest_path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(manifest_path.string() + ": " + e.what());
    }
    const std::string where = manifest_path.string();
    const auto name = require<std::string>(j, "name", where);
    const auto descriptor_dim = require<std::size_t>(j, "descriptor_dim", where);
    const auto categories = require<std::vector<std::string>>(j, "categories", where);

    std::vector<Material> materials;
    for (std::size_t i = 0; const auto& m : require<ordered_json>(j, "materials", where)) {
        const auto w = where + ": materials[" + std::to_string(i++) + "]";
        materials.push_back({require<std::string>(m, "id", w), require<std::string>(m, "category", w)});
    }
    std::vector<ViewRecord> views;
    for (std::size_t i = 0; const auto& v : require<ordered_json>(j, "views", where)) {
        const auto w = where + ": views[" + std::to_string(i++) + "]";
        views.push_back({require<std::string>(v, "view_id", w), require<std::string>(v, "material_id", w),
                         require<std::string>(v, "shape", w), require<std::string>(v, "illumination", w),
                         require<std::size_t>(v, "descriptor_row", w)});
    }

    const auto base = manifest_path.parent_path();
    std::filesystem::path descriptor_path;
    if (j.contains("descriptors")) {
        descriptor_path = base / j.at("descriptors").get<std::string>();
    } else if (std::filesystem::exists(base / "descriptors.bin")) {
        descriptor_path = base / "descriptors.bin";
    } else {
        descriptor_path = base / "descriptors.csv";
    }
    RowMatrix descriptors;
    if (descriptor_path.extension() == ".csv") {
        std::vector<std::string> ids;
        descriptors = read_descriptor_csv(descriptor_path, &ids);
        for (const auto& v : views) {
            if (v.descriptor_row < ids.size() && ids[v.descriptor_row] != v.view_id) {
                throw ValidationError(descriptor_path.string() + ": row " + std::to_string(v.descriptor_row) +
                                      " is labelled '" + ids[v.descriptor_row] + "' but view '" + v.view_id +
                                      "' points to it");
            }
        }
    } else {
        descriptors = read_descriptor_binary(descriptor_path);
    }
    if (static_cast<std::size_t>(descriptors.cols()) != descriptor_dim && descriptors.rows() > 0) {
        throw ValidationError(descriptor_path.string() + ": dimension mismatch: " + std::to_string(descriptors.cols()) +
                              " columns, manifest declares descriptor_dim " + std::to_string(descriptor_dim));
    }
    if (descriptors.rows() == 0) descriptors.resize(0, static_cast<Index>(descriptor_dim));

    std::optional<std::filesystem::path> assets;
    if (j.contains("assets_dir")) assets = base / j.at("assets_dir").get<std::string>();
    return DatasetBundle(name, categories, std::move(materials), std::move(views), std::move(descriptors),
                         std::move(assets));
}

std::filesystem::path save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir,
                                   DescriptorFormat format) {
    std::filesystem::create_directories(dir);
    const std::string descriptor_file = format == DescriptorFormat::Csv ? "descriptors.csv" : "descriptors.bin";
    ordered_json j;
    j["name"] = bundle.name();
    j["descriptor_dim"] = bundle.descriptor_dim();
    j["categories"] = bundle.categories();
    j["descriptors"] = descriptor_file;
    if (bundle.assets_dir()) j["assets_dir"] = std::filesystem::absolute(*bundle.assets_dir()).string();
    j["materials"] = ordered_json::array();
    for (const auto& m : bundle.materials()) j["materials"].push_back({{"id", m.id}, {"category", m.category}});
    j["views"] = ordered_json::array();
    for (const auto& v : bundle.views()) {
        j["views"].push_back({{"view_id", v.view_id},
                              {"material_id", v.material_id},
                              {"shape", v.shape},
                              {"illumination", v.illumination},
                              {"descriptor_row", v.descriptor_row}});
    }
    const auto manifest = dir / "manifest.json";
    {
        std::ofstream out(manifest);
        if (!out) throw ComputeError("cannot write " + manifest.string());
        out << j.dump(2) << '\n';
    }
    if (format == DescriptorFormat::Csv) {
        std::vector<std::string> ids(bundle.views().size());
        for (const auto& v : bundle.views()) ids[v.descriptor_row] = v.view_id;
        write_descriptor_csv(dir / descriptor_file, bundle.descriptors(), ids);
    } else {
        write_descriptor_binary(dir / descriptor_file, bundle.descriptors());
    }
    return manifest;
}

std::pair<DatasetBundle, DatasetBundle> split_views(const DatasetBundle& bundle,
                                                    const std::vector<std::string>& holdout_shapes) {
    const auto shapes = bundle.shapes();
    for (const auto& s : holdout_shapes) {
        if (std::find(shapes.begin(), shapes.end(), s) == shapes.end()) {
            throw ValidationError("split: unknown shape tag '" + s + "'");
        }
    }
    const std::set<std::string> held_set(holdout_shapes.begin(), holdout_shapes.end());

    auto build = [&](bool held) {
        std::vector<ViewRecord> views;
        std::vector<Index> rows;
        std::set<std::string> used;
        for (const auto& v : bundle.views()) {
            if (held_set.count(v.shape) != static_cast<std::size_t>(held)) continue;
            rows.push_back(static_cast<Index>(v.descriptor_row));
            auto copy = v;
            copy.descriptor_row = views.size();
            used.insert(v.material_id);
            views.push_back(std::move(copy));
        }
        std::vector<Material> materials;
        for (const auto& m : bundle.materials()) {
            if (used.count(m.id)) materials.push_back(m);
        }
        RowMatrix descriptors(static_cast<Index>(rows.size()), bundle.descriptors().cols());
        for (std::size_t i = 0; i < rows.size(); ++i) descriptors.row(static_cast<Index>(i)) = bundle.descriptors().row(rows[i]);
        return DatasetBundle(bundle.name(), bundle.categories(), std::move(materials),
                             std::move(views), std::move(descriptors), bundle.assets_dir());
    };
    auto train = build(false);
    if (train.empty()) throw ValidationError("split: holdout would empty the training set");
    return {std::move(train), build(true)};
}

}  // namespace matsim
