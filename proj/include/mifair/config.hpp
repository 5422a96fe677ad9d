#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifair/data.hpp"
#include "mifair/experiment.hpp"
#include "mifair/training.hpp"

namespace mifair {

using Json = nlohmann::ordered_json;

/// Where the rows come from: a CSV file (split by `train_fraction`) or the
/// synthetic generator.
struct DataSection {
  std::optional<std::filesystem::path> csv;
  std::optional<SynthConfig> synthetic;
  std::uint64_t synthetic_seed = 0;
  double train_fraction = 0.75;
  std::uint64_t split_seed = 0;
  bool standardize = true;
};

/// One config document: data, schema, train and sweep sections.
struct RunConfig {
  DataSection data;
  std::optional<SchemaConfig> schema;
  TrainConfig train;
  std::optional<SweepConfig> sweep;
};

SchemaConfig schema_from_json(const Json& j);
Json schema_to_json(const SchemaConfig& schema);
SchemaConfig load_schema(const std::filesystem::path& path);

FairnessNotion notion_from_json(const Json& j);
TrainConfig train_from_json(const Json& j);
Json train_to_json(const TrainConfig& config);

SynthConfig synth_from_json(const Json& j);
Json synth_to_json(const SynthConfig& config);

/// `base` supplies the train section the sweep varies.
SweepConfig sweep_from_json(const Json& j, const TrainConfig& base);
Json sweep_to_json(const SweepConfig& config);

Json encoder_to_json(const Encoder& encoder);
Encoder encoder_from_json(const Json& j);

/// Relative paths resolve against `base_dir`. A run manifest is accepted in
/// place of a config and replays its recorded configuration.
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved form: absolute paths, inline schema, explicit defaults.
Json run_config_to_json(const RunConfig& config);

Json parse_json_file(const std::filesystem::path& path);

}  // namespace mifair
