#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mifair {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class FeatureKind { continuous, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  // Categorical only. Empty means "discover from the data" (sorted).
  std::vector<std::string> categories;
};

/// A coded column: sensitive attributes and the label.
struct AttributeSpec {
  std::string name;
  std::vector<std::string> categories;
};

/// Maps a raw column onto two buckets before coding. Values listed in
/// `first_values` go to buckets[0], everything else to buckets[1].
struct BinarizeRule {
  std::string column;
  std::array<std::string, 2> buckets;
  std::vector<std::string> first_values;
};

struct SchemaConfig {
  std::vector<FeatureSpec> features;
  std::vector<AttributeSpec> sensitive;
  AttributeSpec label;
  std::vector<BinarizeRule> binarize;
  // Append one-hot sensitive attributes to the model inputs.
  bool include_sensitive = false;

  /// Throws Error(schema) on overlapping names, short category lists or
  /// dangling binarization rules.
  void validate() const;
};

/// Per-column z-scoring. Columns not listed pass through untouched.
struct Standardization {
  std::vector<std::size_t> columns;
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const Matrix& features, std::span<const std::size_t> columns);
  void apply(Matrix& features) const;
};

/// How raw columns become model inputs. Saved with checkpoints so held-out
/// files encode identically.
struct Encoder {
  struct Column {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    std::vector<std::string> categories;
  };
  std::vector<Column> columns;
  bool include_sensitive = false;
  Standardization standardization;

  std::size_t width(std::span<const AttributeSpec> sensitive) const;
};

struct SensitiveAttribute {
  std::string name;
  std::vector<std::string> categories;
};

/// Aligned features X, sensitive codes A and labels Y.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<std::string> feature_names,
          std::vector<std::size_t> continuous_columns, std::vector<int> sensitive_codes,
          std::vector<SensitiveAttribute> attributes, std::vector<int> labels,
          std::vector<std::string> class_names);

  std::size_t rows() const noexcept { return labels_.size(); }
  std::size_t num_features() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_attributes() const noexcept { return attributes_.size(); }
  std::size_t num_classes() const noexcept { return class_names_.size(); }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::size_t>& continuous_columns() const noexcept { return continuous_; }
  int sensitive(std::size_t row, std::size_t attribute) const {
    return sensitive_[row * attributes_.size() + attribute];
  }
  const std::vector<int>& sensitive_codes() const noexcept { return sensitive_; }
  const std::vector<SensitiveAttribute>& attributes() const noexcept { return attributes_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_features(Matrix features) const;

 private:
  void validate() const;

  Matrix features_;
  std::vector<std::string> feature_names_;
  std::vector<std::size_t> continuous_;
  std::vector<int> sensitive_;
  std::vector<SensitiveAttribute> attributes_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
};

/// Joint sensitive values observed in a dataset, ordered lexicographically
/// by attribute codes in declaration order.
struct SubgroupIndex {
  std::vector<std::vector<int>> groups;
  std::vector<std::size_t> counts;
  std::vector<int> row_group;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return groups.size(); }
  /// Position of a joint value, or -1 when not observed.
  int find(std::span<const int> codes) const;
};

SubgroupIndex enumerate_subgroups(const Dataset& ds);

/// "race=White|sex=Male" style label for a joint sensitive value.
std::string group_label(const std::vector<SensitiveAttribute>& attributes, std::span<const int> codes);

struct LoadOptions {
  bool standardize = true;
  // When set, categories and standardization come from here instead of
  // being fitted on the loaded file.
  const Encoder* encoder = nullptr;
};

struct LoadedTable {
  Dataset data;
  Encoder encoder;
  std::size_t dropped_rows = 0;
};

LoadedTable load_csv(const std::filesystem::path& path, const SchemaConfig& schema,
                     const LoadOptions& options = {});

/// Shuffled disjoint partition; the first side has floor(fraction * rows) rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

struct SynthGroup {
  double weight = 1.0;
  std::vector<double> class_probs;  // P(Y = c | A = a)
  double label_noise = 0.0;         // chance the observed label is resampled to another class

  static SynthGroup binary(double weight, double prevalence, double label_noise = 0.0) {
    return {weight, {1.0 - prevalence, prevalence}, label_noise};
  }
};

struct SynthConfig {
  // Cardinalities of the sensitive attributes; groups enumerate the mixed
  // radix product (last attribute fastest). Empty means one attribute with
  // groups.size() levels.
  std::vector<std::size_t> attribute_levels;
  std::vector<SynthGroup> groups;
  std::size_t rows = 1000;
  double noise = 1.0;             // std-dev of every feature
  double class_separation = 1.5;  // mean shift of the class block
  double group_shift = 1.0;       // mean shift of the group block
  std::size_t extra_dims = 0;     // pure-noise columns

  void validate() const;
};

/// Features are [class block (C dims) | group block (one per attribute) |
/// noise dims]; labels follow the per-group class distribution.
Dataset synth_biased(const SynthConfig& config, std::uint64_t seed);

}  // namespace mifair
