#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "matsim/types.hpp"

namespace matsim {

struct Material {
    std::string id;
    std::string category;

    bool operator==(const Material&) const = default;
};

struct ViewRecord {
    std::string view_id;
    std::string material_id;
    std::string shape;
    std::string illumination;
    std::size_t descriptor_row = 0;

    bool operator==(const ViewRecord&) const = default;
};

/// A validated collection of materials, their rendered views and one descriptor
/// row per view. Immutable once constructed.
class DatasetBundle {
public:
    DatasetBundle() = default;

    /// Throws ValidationError on duplicate ids, unknown materials, materials
    /// without views, invalid descriptor rows or non-finite descriptor values.
    DatasetBundle(std::string name, std::vector<std::string> categories,
                  std::vector<Material> materials, std::vector<ViewRecord> views,
                  RowMatrix descriptors,
                  std::optional<std::filesystem::path> assets_dir = std::nullopt);

    const std::string& name() const { return name_; }
    const std::vector<std::string>& categories() const { return categories_; }
    const std::vector<Material>& materials() const { return materials_; }
    const std::vector<ViewRecord>& views() const { return views_; }
    const RowMatrix& descriptors() const { return descriptors_; }
    const std::optional<std::filesystem::path>& assets_dir() const { return assets_dir_; }

    std::size_t descriptor_dim() const { return static_cast<std::size_t>(descriptors_.cols()); }
    bool empty() const { return views_.empty(); }

    std::optional<std::size_t> material_index(const std::string& id) const;
    std::optional<std::size_t> view_index(const std::string& view_id) const;

    /// Indices into views() for the material at `material`.
    const std::vector<std::size_t>& views_of(std::size_t material) const { return views_by_material_[material]; }
    /// Material index of a view.
    std::size_t material_of(std::size_t view) const { return view_material_[view]; }

    Vector descriptor(std::size_t view) const;

    std::vector<std::string> material_ids() const;
    std::vector<std::string> shapes() const;

private:
    std::string name_;
    std::vector<std::string> categories_;
    std::vector<Material> materials_;
    std::vector<ViewRecord> views_;
    RowMatrix descriptors_;
    std::optional<std::filesystem::path> assets_dir_;

    std::unordered_map<std::string, std::size_t> material_lookup_;
    std::unordered_map<std::string, std::size_t> view_lookup_;
    std::vector<std::vector<std::size_t>> views_by_material_;
    std::vector<std::size_t> view_material_;
};

enum class DescriptorFormat { Csv, Binary };

/// Reads manifest.json plus the descriptor file it names (or descriptors.bin /
/// descriptors.csv beside it).
DatasetBundle load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json and the descriptor file into `dir`. Returns the manifest path.
std::filesystem::path save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir,
                                   DescriptorFormat format = DescriptorFormat::Binary);

/// CSV with header `<id_column>,<prefix>0,...` and one labelled row per line.
RowMatrix read_labelled_csv(const std::filesystem::path& path, std::string_view id_column,
                            std::vector<std::string>* ids = nullptr);
void write_labelled_csv(const std::filesystem::path& path, std::string_view id_column, std::string_view value_prefix,
                        const RowMatrix& values, const std::vector<std::string>& ids);

RowMatrix read_descriptor_csv(const std::filesystem::path& path, std::vector<std::string>* view_ids = nullptr);
void write_descriptor_csv(const std::filesystem::path& path, const RowMatrix& values,
                          const std::vector<std::string>& view_ids);
RowMatrix read_descriptor_binary(const std::filesystem::path& path);
void write_descriptor_binary(const std::filesystem::path& path, const RowMatrix& values);

/// Partitions views by shape tag. Materials without views in a partition are
/// dropped from that partition only.
std::pair<DatasetBundle, DatasetBundle> split_views(const DatasetBundle& bundle,
                                                    const std::vector<std::string>& holdout_shapes);

}  // namespace matsim
