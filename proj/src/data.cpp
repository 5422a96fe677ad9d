#include "mifair/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mifair/error.hpp"

namespace mifair {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// Comma-separated cells with optional double-quote wrapping.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

int code_of(const std::vector<std::string>& categories, const std::string& value) {
  auto it = std::find(categories.begin(), categories.end(), value);
  return it == categories.end() ? -1 : static_cast<int>(it - categories.begin());
}

}  // namespace

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::schema: return "schema error";
    case ErrorKind::value: return "value error";
    case ErrorKind::empty_data: return "empty-data error";
    case ErrorKind::config: return "config error";
    case ErrorKind::empty_condition: return "empty-condition error";
    case ErrorKind::coverage: return "coverage error";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::shape: return "shape error";
  }
  return "error";
}

void SchemaConfig::validate() const {
  std::set<std::string> names;
  auto claim = [&](const std::string& name, const char* role) {
    if (name.empty()) throw Error(ErrorKind::schema, std::string("empty ") + role + " column name");
    if (!names.insert(name).second)
      throw Error(ErrorKind::schema, "column '" + name + "' declared more than once");
  };
  for (const auto& f : features) {
    claim(f.name, "feature");
    if (f.kind == FeatureKind::categorical && !f.categories.empty() && f.categories.size() < 2)
      throw Error(ErrorKind::schema, "categorical feature '" + f.name + "' needs at least 2 categories");
  }
  if (sensitive.empty()) throw Error(ErrorKind::schema, "no sensitive columns declared");
  for (const auto& s : sensitive) {
    claim(s.name, "sensitive");
    if (s.categories.size() < 2)
      throw Error(ErrorKind::schema, "sensitive column '" + s.name + "' needs at least 2 categories");
  }
  claim(label.name, "label");
  if (label.categories.size() < 2)
    throw Error(ErrorKind::schema, "label column '" + label.name + "' needs at least 2 classes");
  for (const auto& rule : binarize) {
    if (!names.count(rule.column))
      throw Error(ErrorKind::schema, "binarize rule references undeclared column '" + rule.column + "'");
    if (rule.buckets[0].empty() || rule.buckets[1].empty() || rule.buckets[0] == rule.buckets[1])
      throw Error(ErrorKind::schema, "binarize rule for '" + rule.column + "' needs two distinct buckets");
    if (rule.first_values.empty())
      throw Error(ErrorKind::schema, "binarize rule for '" + rule.column + "' maps nothing to its first bucket");
  }
}

Standardization Standardization::fit(const Matrix& features, std::span<const std::size_t> columns) {
  Standardization s;
  s.columns.assign(columns.begin(), columns.end());
  const double n = static_cast<double>(features.rows());
  for (std::size_t c : columns) {
    auto col = features.col(static_cast<Eigen::Index>(c));
    double mean = col.sum() / n;
    double var = (col.array() - mean).square().sum() / n;
    s.mean.push_back(mean);
    s.scale.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return s;
}

void Standardization::apply(Matrix& features) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    auto col = features.col(static_cast<Eigen::Index>(columns[i]));
    col = (col.array() - mean[i]) / scale[i];
  }
}

std::size_t Encoder::width(std::span<const AttributeSpec> sensitive) const {
  std::size_t w = 0;
  for (const auto& c : columns) w += c.kind == FeatureKind::continuous ? 1 : c.categories.size();
  if (include_sensitive)
    for (const auto& s : sensitive) w += s.categories.size();
  return w;
}

Dataset::Dataset(Matrix features, std::vector<std::string> feature_names,
                 std::vector<std::size_t> continuous_columns, std::vector<int> sensitive_codes,
                 std::vector<SensitiveAttribute> attributes, std::vector<int> labels,
                 std::vector<std::string> class_names)
    : features_(std::move(features)),
      feature_names_(std::move(feature_names)),
      continuous_(std::move(continuous_columns)),
      sensitive_(std::move(sensitive_codes)),
      attributes_(std::move(attributes)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
  validate();
}

void Dataset::validate() const {
  const std::size_t n = labels_.size();
  if (n == 0) throw Error(ErrorKind::empty_data, "dataset has no rows");
  if (static_cast<std::size_t>(features_.rows()) != n)
    throw Error(ErrorKind::shape, "feature rows do not match label count");
  if (feature_names_.size() != static_cast<std::size_t>(features_.cols()))
    throw Error(ErrorKind::shape, "feature name count does not match feature width");
  if (attributes_.empty()) throw Error(ErrorKind::schema, "dataset has no sensitive attributes");
  if (sensitive_.size() != n * attributes_.size())
    throw Error(ErrorKind::shape, "sensitive code matrix does not match row count");
  if (class_names_.size() < 2) throw Error(ErrorKind::schema, "label needs at least 2 classes");
  for (std::size_t r = 0; r < n; ++r) {
    if (labels_[r] < 0 || static_cast<std::size_t>(labels_[r]) >= class_names_.size())
      throw Error(ErrorKind::value, "label code out of range at row " + std::to_string(r));
    for (std::size_t a = 0; a < attributes_.size(); ++a) {
      int code = sensitive_[r * attributes_.size() + a];
      if (code < 0 || static_cast<std::size_t>(code) >= attributes_[a].categories.size())
        throw Error(ErrorKind::value, "sensitive code out of range at row " + std::to_string(r));
    }
  }
  if (!features_.allFinite()) throw Error(ErrorKind::value, "encoded features contain non-finite values");
  for (std::size_t c : continuous_)
    if (c >= feature_names_.size()) throw Error(ErrorKind::shape, "continuous column index out of range");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t k = attributes_.size();
  Matrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> s;
  std::vector<int> y;
  s.reserve(rows.size() * k);
  y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t r = rows[i];
    if (r >= labels_.size()) throw Error(ErrorKind::shape, "subset row index out of range");
    f.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(r));
    for (std::size_t a = 0; a < k; ++a) s.push_back(sensitive_[r * k + a]);
    y.push_back(labels_[r]);
  }
  return Dataset(std::move(f), feature_names_, continuous_, std::move(s), attributes_, std::move(y),
                 class_names_);
}

Dataset Dataset::with_features(Matrix features) const {
  if (features.rows() != features_.rows() || features.cols() != features_.cols())
    throw Error(ErrorKind::shape, "replacement features have a different shape");
  return Dataset(std::move(features), feature_names_, continuous_, sensitive_, attributes_, labels_,
                 class_names_);
}

int SubgroupIndex::find(std::span<const int> codes) const {
  auto it = std::lower_bound(groups.begin(), groups.end(), codes,
                             [](const std::vector<int>& g, std::span<const int> c) {
                               return std::lexicographical_compare(g.begin(), g.end(), c.begin(), c.end());
                             });
  if (it != groups.end() && std::equal(it->begin(), it->end(), codes.begin(), codes.end()))
    return static_cast<int>(it - groups.begin());
  return -1;
}

std::string group_label(const std::vector<SensitiveAttribute>& attributes, std::span<const int> codes) {
  std::string out;
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    if (a) out += '|';
    out += attributes[a].name;
    out += '=';
    out += attributes[a].categories.at(static_cast<std::size_t>(codes[a]));
  }
  return out;
}

SubgroupIndex enumerate_subgroups(const Dataset& ds) {
  const std::size_t k = ds.num_attributes();
  std::map<std::vector<int>, std::size_t> tally;
  const auto& codes = ds.sensitive_codes();
  for (std::size_t r = 0; r < ds.rows(); ++r)
    ++tally[std::vector<int>(codes.begin() + r * k, codes.begin() + (r + 1) * k)];

  SubgroupIndex index;
  for (const auto& [g, n] : tally) {
    index.groups.push_back(g);
    index.counts.push_back(n);
    index.labels.push_back(group_label(ds.attributes(), g));
  }
  index.row_group.resize(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r)
    index.row_group[r] = index.find(std::span<const int>(codes.data() + r * k, k));
  return index;
}

LoadedTable load_csv(const std::filesystem::path& path, const SchemaConfig& schema,
                     const LoadOptions& options) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open data file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::empty_data, "data file '" + path.string() + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column_at;
  for (std::size_t i = 0; i < header.size(); ++i) column_at.emplace(header[i], i);
  auto locate = [&](const std::string& name) {
    auto it = column_at.find(name);
    if (it == column_at.end()) throw Error(ErrorKind::schema, "missing column '" + name + "' in " + path.string());
    return it->second;
  };

  std::vector<std::size_t> feature_at, sensitive_at;
  for (const auto& f : schema.features) feature_at.push_back(locate(f.name));
  for (const auto& s : schema.sensitive) sensitive_at.push_back(locate(s.name));
  const std::size_t label_at = locate(schema.label.name);

  std::unordered_map<std::size_t, const BinarizeRule*> rule_at;
  for (const auto& rule : schema.binarize) rule_at[locate(rule.column)] = &rule;
  auto raw_value = [&](const std::vector<std::string>& cells, std::size_t col) -> std::string {
    auto it = rule_at.find(col);
    if (it == rule_at.end()) return cells[col];
    const auto& rule = *it->second;
    bool first = std::find(rule.first_values.begin(), rule.first_values.end(), cells[col]) != rule.first_values.end();
    return rule.buckets[first ? 0 : 1];
  };

  // Raw kept rows: feature strings, sensitive codes, label.
  std::vector<std::vector<std::string>> feature_cells;
  std::vector<int> sensitive_codes, labels;
  std::size_t dropped = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() < header.size()) cells.resize(header.size());

    bool missing = is_missing(cells[label_at]);
    for (auto c : feature_at) missing = missing || is_missing(cells[c]);
    for (auto c : sensitive_at) missing = missing || is_missing(cells[c]);
    if (missing) {
      ++dropped;
      continue;
    }

    for (std::size_t a = 0; a < sensitive_at.size(); ++a) {
      auto v = raw_value(cells, sensitive_at[a]);
      int code = code_of(schema.sensitive[a].categories, v);
      if (code < 0)
        throw Error(ErrorKind::value, "unknown category '" + v + "' for column '" + schema.sensitive[a].name +
                                          "' at row " + std::to_string(line_no));
      sensitive_codes.push_back(code);
    }
    auto lv = raw_value(cells, label_at);
    int label = code_of(schema.label.categories, lv);
    if (label < 0)
      throw Error(ErrorKind::value, "unknown class '" + lv + "' for label '" + schema.label.name + "' at row " +
                                        std::to_string(line_no));
    labels.push_back(label);

    std::vector<std::string> fc;
    fc.reserve(feature_at.size());
    for (std::size_t f = 0; f < feature_at.size(); ++f) {
      fc.push_back(raw_value(cells, feature_at[f]));
      if (schema.features[f].kind == FeatureKind::continuous) {
        double v = 0.0;
        const auto& s = fc.back();
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
          throw Error(ErrorKind::value, "non-numeric value '" + s + "' for column '" + schema.features[f].name +
                                            "' at row " + std::to_string(line_no));
      }
    }
    feature_cells.push_back(std::move(fc));
  }
  if (labels.empty())
    throw Error(ErrorKind::empty_data, "no rows left in '" + path.string() + "' after dropping missing values");

  // Encoder: categorical vocabularies.
  Encoder encoder;
  if (options.encoder) {
    encoder = *options.encoder;
    if (encoder.columns.size() != schema.features.size())
      throw Error(ErrorKind::schema, "encoder does not match the schema's feature list");
  } else {
    encoder.include_sensitive = schema.include_sensitive;
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      Encoder::Column col{schema.features[f].name, schema.features[f].kind, schema.features[f].categories};
      if (col.kind == FeatureKind::categorical && col.categories.empty()) {
        std::set<std::string> seen;
        for (const auto& row : feature_cells) seen.insert(row[f]);
        col.categories.assign(seen.begin(), seen.end());
      }
      encoder.columns.push_back(std::move(col));
    }
  }

  const std::size_t n = labels.size();
  const std::size_t width = encoder.width(schema.sensitive);
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  std::vector<std::string> names;
  std::vector<std::size_t> continuous;
  std::size_t offset = 0;
  for (std::size_t f = 0; f < encoder.columns.size(); ++f) {
    const auto& col = encoder.columns[f];
    if (col.kind == FeatureKind::continuous) {
      for (std::size_t r = 0; r < n; ++r) {
        const auto& s = feature_cells[r][f];
        double v = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), v);
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset)) = v;
      }
      names.push_back(col.name);
      continuous.push_back(offset);
      ++offset;
    } else {
      for (std::size_t r = 0; r < n; ++r) {
        int code = code_of(col.categories, feature_cells[r][f]);
        if (code < 0)
          throw Error(ErrorKind::value, "unknown category '" + feature_cells[r][f] + "' for column '" + col.name +
                                            "' at data row " + std::to_string(r + 1));
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + static_cast<std::size_t>(code))) = 1.0;
      }
      for (const auto& c : col.categories) names.push_back(col.name + "=" + c);
      offset += col.categories.size();
    }
  }
  if (encoder.include_sensitive) {
    const std::size_t k = schema.sensitive.size();
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t r = 0; r < n; ++r)
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + static_cast<std::size_t>(sensitive_codes[r * k + a]))) = 1.0;
      for (const auto& c : schema.sensitive[a].categories) names.push_back(schema.sensitive[a].name + "=" + c);
      offset += schema.sensitive[a].categories.size();
    }
  }

  if (options.encoder) {
    encoder.standardization.apply(x);
  } else if (options.standardize) {
    encoder.standardization = Standardization::fit(x, continuous);
    encoder.standardization.apply(x);
  }

  std::vector<SensitiveAttribute> attrs;
  for (const auto& s : schema.sensitive) attrs.push_back({s.name, s.categories});
  Dataset ds(std::move(x), std::move(names), std::move(continuous), std::move(sensitive_codes), std::move(attrs),
             std::move(labels), schema.label.categories);
  return {std::move(ds), std::move(encoder), dropped};
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::config, "train fraction must lie strictly between 0 and 1");
  const std::size_t n = ds.rows();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_train == n)
    throw Error(ErrorKind::config, "train fraction " + std::to_string(train_fraction) + " leaves one side of a " +
                                       std::to_string(n) + "-row split empty");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

void SynthConfig::validate() const {
  if (groups.empty()) throw Error(ErrorKind::config, "synthetic config declares no groups");
  if (rows == 0) throw Error(ErrorKind::config, "synthetic config asks for zero rows");
  double total = 0.0;
  const std::size_t classes = groups.front().class_probs.size();
  if (classes < 2) throw Error(ErrorKind::config, "synthetic groups need at least 2 classes");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (!(grp.weight >= 0.0)) throw Error(ErrorKind::config, "negative mixture weight for group " + std::to_string(g));
    total += grp.weight;
    if (grp.class_probs.size() != classes)
      throw Error(ErrorKind::config, "group " + std::to_string(g) + " has a different class count");
    double s = 0.0;
    for (double p : grp.class_probs) {
      if (!(p >= 0.0 && p <= 1.0))
        throw Error(ErrorKind::config, "prevalence outside [0,1] for group " + std::to_string(g));
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw Error(ErrorKind::config, "class distribution of group " + std::to_string(g) + " does not sum to 1");
    if (!(grp.label_noise >= 0.0 && grp.label_noise <= 1.0))
      throw Error(ErrorKind::config, "label noise outside [0,1] for group " + std::to_string(g));
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::config, "mixture weights do not sum to 1");
  if (!attribute_levels.empty()) {
    std::size_t product = 1;
    for (auto l : attribute_levels) {
      if (l < 1) throw Error(ErrorKind::config, "attribute with zero levels");
      product *= l;
    }
    if (product != groups.size())
      throw Error(ErrorKind::config, "attribute levels do not multiply to the group count");
  }
  if (!(noise > 0.0)) throw Error(ErrorKind::config, "feature noise scale must be positive");
}

Dataset synth_biased(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const std::vector<std::size_t> levels =
      config.attribute_levels.empty() ? std::vector<std::size_t>{config.groups.size()} : config.attribute_levels;
  const std::size_t k = levels.size();
  const std::size_t classes = config.groups.front().class_probs.size();
  const std::size_t width = classes + k + config.extra_dims;

  // Mixed-radix decoding of group positions, last attribute fastest.
  std::vector<std::vector<int>> group_codes(config.groups.size(), std::vector<int>(k));
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    std::size_t rest = g;
    for (std::size_t a = k; a-- > 0;) {
      group_codes[g][a] = static_cast<int>(rest % levels[a]);
      rest /= levels[a];
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (const auto& grp : config.groups) weights.push_back(grp.weight);
  std::discrete_distribution<std::size_t> pick_group(weights.begin(), weights.end());
  std::vector<std::discrete_distribution<int>> pick_class;
  for (const auto& grp : config.groups) pick_class.emplace_back(grp.class_probs.begin(), grp.class_probs.end());
  std::normal_distribution<double> gauss(0.0, config.noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(1, static_cast<int>(classes) - 1);

  Matrix x(static_cast<Eigen::Index>(config.rows), static_cast<Eigen::Index>(width));
  std::vector<int> codes, labels;
  codes.reserve(config.rows * k);
  labels.reserve(config.rows);
  for (std::size_t r = 0; r < config.rows; ++r) {
    const std::size_t g = pick_group(rng);
    const int y = pick_class[g](rng);
    int observed = y;
    if (config.groups[g].label_noise > 0.0 && unit(rng) < config.groups[g].label_noise)
      observed = (y + other(rng)) % static_cast<int>(classes);
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < classes; ++c)
      x(row, static_cast<Eigen::Index>(c)) = (static_cast<int>(c) == y ? config.class_separation : 0.0) + gauss(rng);
    for (std::size_t a = 0; a < k; ++a) {
      double centred = static_cast<double>(group_codes[g][a]) - 0.5 * static_cast<double>(levels[a] - 1);
      x(row, static_cast<Eigen::Index>(classes + a)) = config.group_shift * centred + gauss(rng);
    }
    for (std::size_t e = 0; e < config.extra_dims; ++e)
      x(row, static_cast<Eigen::Index>(classes + k + e)) = gauss(rng);
    codes.insert(codes.end(), group_codes[g].begin(), group_codes[g].end());
    labels.push_back(observed);
  }

  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("class_signal_" + std::to_string(c));
  for (std::size_t a = 0; a < k; ++a) names.push_back("group_signal_" + std::to_string(a));
  for (std::size_t e = 0; e < config.extra_dims; ++e) names.push_back("noise_" + std::to_string(e));
  std::vector<std::size_t> continuous(width);
  std::iota(continuous.begin(), continuous.end(), std::size_t{0});
  std::vector<SensitiveAttribute> attrs;
  for (std::size_t a = 0; a < k; ++a) {
    SensitiveAttribute attr{"a" + std::to_string(a), {}};
    for (std::size_t l = 0; l < levels[a]; ++l) attr.categories.push_back(std::to_string(l));
    attrs.push_back(std::move(attr));
  }
  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < classes; ++c) class_names.push_back(std::to_string(c));
  return Dataset(std::move(x), std::move(names), std::move(continuous), std::move(codes), std::move(attrs),
                 std::move(labels), std::move(class_names));
}

}  // namespace mifair
