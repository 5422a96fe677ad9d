#include "mifair/config.hpp"

#include <algorithm>
#include <initializer_list>

#include "io_util.hpp"
#include "mifair/error.hpp"

namespace mifair {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::config, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw Error(ErrorKind::config, "unknown key '" + it.key() + "' in " + where);
}

template <class T>
T value_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::config, "'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
T required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::config, where + " is missing '" + key + "'");
  return value_or<T>(j, key, T{}, where);
}

std::vector<LrStep> schedule_from_json(const Json& j, const std::string& where) {
  std::vector<LrStep> out;
  if (j.is_number()) return {{0, j.get<double>()}};
  if (!j.is_array()) throw Error(ErrorKind::config, where + " must be a number or a list of {epoch, rate}");
  for (const auto& step : j) {
    check_keys(step, {"epoch", "rate"}, where);
    out.push_back({value_or<std::size_t>(step, "epoch", 0, where), required<double>(step, "rate", where)});
  }
  return out;
}

Json schedule_to_json(const std::vector<LrStep>& schedule) {
  Json out = Json::array();
  for (const auto& s : schedule) out.push_back({{"epoch", s.epoch}, {"rate", s.rate}});
  return out;
}

Notion notion_or_throw(const std::string& name) {
  auto n = parse_notion(name);
  if (!n) throw Error(ErrorKind::config, "unknown fairness notion '" + name + "'");
  return *n;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  std::filesystem::path out = p.is_absolute() ? p : base / p;
  return out.lexically_normal();
}

template <class F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed config: ") + e.what());
  }
}

}  // namespace

Json parse_json_file(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::config, "cannot parse '" + path.string() + "': " + e.what());
  }
}

SchemaConfig schema_from_json(const Json& j) {
  return guarded([&] {
    check_keys(j, {"features", "sensitive", "label", "binarize", "include_sensitive"}, "schema");
    SchemaConfig s;
    for (const auto& f : required<Json>(j, "features", "schema")) {
      check_keys(f, {"name", "kind", "categories"}, "schema feature");
      FeatureSpec spec;
      spec.name = required<std::string>(f, "name", "schema feature");
      const auto kind = value_or<std::string>(f, "kind", "continuous", "schema feature");
      if (kind == "continuous")
        spec.kind = FeatureKind::continuous;
      else if (kind == "categorical")
        spec.kind = FeatureKind::categorical;
      else
        throw Error(ErrorKind::config, "feature '" + spec.name + "' has unknown kind '" + kind + "'");
      spec.categories = value_or<std::vector<std::string>>(f, "categories", {}, "schema feature");
      s.features.push_back(std::move(spec));
    }
    for (const auto& a : required<Json>(j, "sensitive", "schema")) {
      check_keys(a, {"name", "categories"}, "schema sensitive column");
      s.sensitive.push_back({required<std::string>(a, "name", "schema sensitive column"),
                             required<std::vector<std::string>>(a, "categories", "schema sensitive column")});
    }
    const auto& label = required<Json>(j, "label", "schema");
    check_keys(label, {"name", "categories"}, "schema label");
    s.label = {required<std::string>(label, "name", "schema label"),
               required<std::vector<std::string>>(label, "categories", "schema label")};
    for (const auto& b : value_or<Json>(j, "binarize", Json::array(), "schema")) {
      check_keys(b, {"column", "buckets", "first_values"}, "binarize rule");
      BinarizeRule rule;
      rule.column = required<std::string>(b, "column", "binarize rule");
      const auto buckets = required<std::vector<std::string>>(b, "buckets", "binarize rule");
      if (buckets.size() != 2)
        throw Error(ErrorKind::schema, "binarize rule for '" + rule.column + "' must name exactly 2 buckets");
      rule.buckets = {buckets[0], buckets[1]};
      rule.first_values = required<std::vector<std::string>>(b, "first_values", "binarize rule");
      s.binarize.push_back(std::move(rule));
    }
    s.include_sensitive = value_or<bool>(j, "include_sensitive", false, "schema");
    s.validate();
    return s;
  });
}

Json schema_to_json(const SchemaConfig& s) {
  Json features = Json::array();
  for (const auto& f : s.features) {
    Json item{{"name", f.name}, {"kind", f.kind == FeatureKind::continuous ? "continuous" : "categorical"}};
    if (!f.categories.empty()) item["categories"] = f.categories;
    features.push_back(item);
  }
  Json sensitive = Json::array();
  for (const auto& a : s.sensitive) sensitive.push_back({{"name", a.name}, {"categories", a.categories}});
  Json binarize = Json::array();
  for (const auto& b : s.binarize)
    binarize.push_back({{"column", b.column}, {"buckets", {b.buckets[0], b.buckets[1]}}, {"first_values", b.first_values}});
  return {{"features", features},
          {"sensitive", sensitive},
          {"label", {{"name", s.label.name}, {"categories", s.label.categories}}},
          {"binarize", binarize},
          {"include_sensitive", s.include_sensitive}};
}

SchemaConfig load_schema(const std::filesystem::path& path) { return schema_from_json(parse_json_file(path)); }

FairnessNotion notion_from_json(const Json& j) {
  return guarded([&] {
    FairnessNotion n;
    n.tag = notion_or_throw(value_or<std::string>(j, "notion", "SP", "train"));
    n.lambda0 = value_or<double>(j, "lambda0", 1.0, "train");
    n.lambda1 = value_or<double>(j, "lambda1", 1.0, "train");
    n.normalize = value_or<bool>(j, "normalize", false, "train");
    if (j.contains("class_index") && !j["class_index"].is_null()) n.class_index = j["class_index"].get<int>();
    return n;
  });
}

TrainConfig train_from_json(const Json& j) {
  return guarded([&] {
    const std::string w = "train";
    check_keys(j, {"notion", "eta", "lambda0", "lambda1", "normalize", "class_index", "epochs", "batch_size",
                   "lr_schedule", "momentum", "weight_decay", "seed", "coverage", "hidden", "evaluate_each_epoch"},
               w);
    TrainConfig c;
    c.notion = notion_from_json(j);
    c.eta = value_or<double>(j, "eta", c.eta, w);
    c.epochs = value_or<std::size_t>(j, "epochs", c.epochs, w);
    c.batch_size = value_or<std::size_t>(j, "batch_size", c.batch_size, w);
    if (j.contains("lr_schedule") && !j["lr_schedule"].is_null())
      c.lr_schedule = schedule_from_json(j["lr_schedule"], "train.lr_schedule");
    c.momentum = value_or<double>(j, "momentum", c.momentum, w);
    c.weight_decay = value_or<double>(j, "weight_decay", c.weight_decay, w);
    c.seed = value_or<std::uint64_t>(j, "seed", c.seed, w);
    const auto coverage = value_or<std::string>(j, "coverage", "skip", w);
    if (coverage == "skip")
      c.coverage = CoveragePolicy::skip;
    else if (coverage == "error")
      c.coverage = CoveragePolicy::error;
    else
      throw Error(ErrorKind::config, "coverage must be 'skip' or 'error'");
    c.hidden = value_or<std::vector<std::size_t>>(j, "hidden", c.hidden, w);
    c.evaluate_each_epoch = value_or<bool>(j, "evaluate_each_epoch", c.evaluate_each_epoch, w);
    c.validate();
    return c;
  });
}

Json train_to_json(const TrainConfig& c) {
  Json j{{"notion", std::string(notion_name(c.notion.tag))},
         {"eta", c.eta},
         {"lambda0", c.notion.lambda0},
         {"lambda1", c.notion.lambda1},
         {"normalize", c.notion.normalize},
         {"class_index", c.notion.class_index ? Json(*c.notion.class_index) : Json(nullptr)},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr_schedule", c.lr_schedule.empty() ? Json(nullptr) : schedule_to_json(c.lr_schedule)},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"seed", c.seed},
         {"coverage", c.coverage == CoveragePolicy::skip ? "skip" : "error"},
         {"hidden", c.hidden},
         {"evaluate_each_epoch", c.evaluate_each_epoch}};
  return j;
}

SynthConfig synth_from_json(const Json& j) {
  return guarded([&] {
    const std::string w = "synthetic";
    check_keys(j, {"attribute_levels", "groups", "rows", "noise", "class_separation", "group_shift", "extra_dims",
                   "seed"},
               w);
    SynthConfig c;
    c.attribute_levels = value_or<std::vector<std::size_t>>(j, "attribute_levels", {}, w);
    for (const auto& g : required<Json>(j, "groups", w)) {
      check_keys(g, {"weight", "prevalence", "class_probs", "label_noise"}, "synthetic group");
      SynthGroup group;
      group.weight = required<double>(g, "weight", "synthetic group");
      group.label_noise = value_or<double>(g, "label_noise", 0.0, "synthetic group");
      if (g.contains("class_probs"))
        group.class_probs = g["class_probs"].get<std::vector<double>>();
      else {
        const double p = required<double>(g, "prevalence", "synthetic group");
        group.class_probs = {1.0 - p, p};
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::config, "prevalence must lie in [0, 1]");
      }
      c.groups.push_back(std::move(group));
    }
    c.rows = value_or<std::size_t>(j, "rows", c.rows, w);
    c.noise = value_or<double>(j, "noise", c.noise, w);
    c.class_separation = value_or<double>(j, "class_separation", c.class_separation, w);
    c.group_shift = value_or<double>(j, "group_shift", c.group_shift, w);
    c.extra_dims = value_or<std::size_t>(j, "extra_dims", c.extra_dims, w);
    c.validate();
    return c;
  });
}

Json synth_to_json(const SynthConfig& c) {
  Json groups = Json::array();
  for (const auto& g : c.groups)
    groups.push_back({{"weight", g.weight}, {"class_probs", g.class_probs}, {"label_noise", g.label_noise}});
  return {{"attribute_levels", c.attribute_levels}, {"groups", groups},
          {"rows", c.rows},  {"noise", c.noise},
          {"class_separation", c.class_separation}, {"group_shift", c.group_shift},
          {"extra_dims", c.extra_dims}};
}

SweepConfig sweep_from_json(const Json& j, const TrainConfig& base) {
  return guarded([&] {
    const std::string w = "sweep";
    check_keys(j, {"etas", "seeds", "threshold", "notions", "normalize", "hard", "jobs", "overrides"}, w);
    SweepConfig c;
    c.base = base;
    const auto& etas = required<Json>(j, "etas", w);
    if (etas.is_array()) {
      c.etas = etas.get<std::vector<double>>();
    } else {
      check_keys(etas, {"log10_min", "log10_max", "points"}, "sweep.etas");
      c.etas = log_grid(required<double>(etas, "log10_min", "sweep.etas"), required<double>(etas, "log10_max", "sweep.etas"),
                        required<std::size_t>(etas, "points", "sweep.etas"));
    }
    if (j.contains("seeds")) {
      if (j["seeds"].is_number_unsigned()) {
        c.seeds.clear();
        for (std::uint64_t s = 0; s < j["seeds"].get<std::uint64_t>(); ++s) c.seeds.push_back(s);
      } else {
        c.seeds = value_or<std::vector<std::uint64_t>>(j, "seeds", c.seeds, w);
      }
    }
    c.threshold = value_or<double>(j, "threshold", c.threshold, w);
    if (j.contains("notions")) {
      c.assess.notions.clear();
      for (const auto& n : j["notions"].get<std::vector<std::string>>()) c.assess.notions.push_back(notion_or_throw(n));
    }
    c.assess.normalize = value_or<bool>(j, "normalize", base.notion.normalize, w);
    c.assess.hard = value_or<bool>(j, "hard", false, w);
    c.assess.lambda0 = base.notion.lambda0;
    c.assess.lambda1 = base.notion.lambda1;
    c.assess.class_index = base.notion.class_index;
    c.jobs = value_or<std::size_t>(j, "jobs", 0, w);
    for (const auto& o : value_or<Json>(j, "overrides", Json::array(), w)) {
      check_keys(o, {"eta", "lr_schedule"}, "sweep override");
      c.overrides.push_back({required<double>(o, "eta", "sweep override"),
                             schedule_from_json(required<Json>(o, "lr_schedule", "sweep override"), "sweep override")});
    }
    c.validate();
    return c;
  });
}

Json sweep_to_json(const SweepConfig& c) {
  Json notions = Json::array();
  for (Notion n : c.assess.notions) notions.push_back(std::string(notion_name(n)));
  Json overrides = Json::array();
  for (const auto& o : c.overrides) overrides.push_back({{"eta", o.eta}, {"lr_schedule", schedule_to_json(o.lr_schedule)}});
  return {{"etas", c.etas},         {"seeds", c.seeds},         {"threshold", c.threshold},
          {"notions", notions},     {"normalize", c.assess.normalize}, {"hard", c.assess.hard},
          {"jobs", c.jobs},         {"overrides", overrides}};
}

Json encoder_to_json(const Encoder& e) {
  Json columns = Json::array();
  for (const auto& c : e.columns)
    columns.push_back({{"name", c.name},
                       {"kind", c.kind == FeatureKind::continuous ? "continuous" : "categorical"},
                       {"categories", c.categories}});
  return {{"columns", columns},
          {"include_sensitive", e.include_sensitive},
          {"standardization",
           {{"columns", e.standardization.columns}, {"mean", e.standardization.mean}, {"scale", e.standardization.scale}}}};
}

Encoder encoder_from_json(const Json& j) {
  return guarded([&] {
    Encoder e;
    for (const auto& c : j.at("columns")) {
      Encoder::Column col;
      col.name = c.at("name").get<std::string>();
      col.kind = c.at("kind").get<std::string>() == "continuous" ? FeatureKind::continuous : FeatureKind::categorical;
      col.categories = c.at("categories").get<std::vector<std::string>>();
      e.columns.push_back(std::move(col));
    }
    e.include_sensitive = j.at("include_sensitive").get<bool>();
    const auto& s = j.at("standardization");
    e.standardization.columns = s.at("columns").get<std::vector<std::size_t>>();
    e.standardization.mean = s.at("mean").get<std::vector<double>>();
    e.standardization.scale = s.at("scale").get<std::vector<double>>();
    if (e.standardization.mean.size() != e.standardization.columns.size() ||
        e.standardization.scale.size() != e.standardization.columns.size())
      throw Error(ErrorKind::config, "encoder standardization lists differ in length");
    return e;
  });
}

RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  return guarded([&] {
    // A manifest carries the resolved config it was produced from.
    const Json& j = doc.contains("manifest_version") ? doc.at("config") : doc;
    check_keys(j, {"data", "schema", "train", "sweep"}, "config");
    RunConfig rc;
    const auto& data = required<Json>(j, "data", "config");
    check_keys(data, {"path", "synthetic", "train_fraction", "split_seed", "standardize"}, "data");
    if (data.contains("path") == data.contains("synthetic"))
      throw Error(ErrorKind::config, "the data section needs exactly one of 'path' or 'synthetic'");
    if (data.contains("path")) rc.data.csv = resolve(data["path"].get<std::string>(), base_dir);
    if (data.contains("synthetic")) {
      rc.data.synthetic = synth_from_json(data["synthetic"]);
      rc.data.synthetic_seed = value_or<std::uint64_t>(data["synthetic"], "seed", 0, "synthetic");
    }
    rc.data.train_fraction = value_or<double>(data, "train_fraction", rc.data.train_fraction, "data");
    rc.data.split_seed = value_or<std::uint64_t>(data, "split_seed", rc.data.split_seed, "data");
    rc.data.standardize = value_or<bool>(data, "standardize", rc.data.standardize, "data");
    if (!(rc.data.train_fraction > 0.0 && rc.data.train_fraction < 1.0))
      throw Error(ErrorKind::config, "train_fraction must lie in (0, 1)");

    if (j.contains("schema")) {
      if (j["schema"].is_string())
        rc.schema = load_schema(resolve(j["schema"].get<std::string>(), base_dir));
      else
        rc.schema = schema_from_json(j["schema"]);
    }
    rc.train = train_from_json(value_or<Json>(j, "train", Json::object(), "config"));
    if (j.contains("sweep")) rc.sweep = sweep_from_json(j["sweep"], rc.train);
    return rc;
  });
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(parse_json_file(path), std::filesystem::absolute(path).parent_path());
}

Json run_config_to_json(const RunConfig& rc) {
  Json data = Json::object();
  if (rc.data.csv) data["path"] = std::filesystem::absolute(*rc.data.csv).lexically_normal().string();
  if (rc.data.synthetic) {
    data["synthetic"] = synth_to_json(*rc.data.synthetic);
    data["synthetic"]["seed"] = rc.data.synthetic_seed;
  }
  data["train_fraction"] = rc.data.train_fraction;
  data["split_seed"] = rc.data.split_seed;
  data["standardize"] = rc.data.standardize;
  Json j{{"data", data}};
  if (rc.schema) j["schema"] = schema_to_json(*rc.schema);
  j["train"] = train_to_json(rc.train);
  if (rc.sweep) j["sweep"] = sweep_to_json(*rc.sweep);
  return j;
}

}  // namespace mifair
