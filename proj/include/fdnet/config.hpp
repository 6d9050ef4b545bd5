#pragma once

// JSON (de)serialization of every configuration struct, plus the merged
// run configuration read by the CLI.

#include <cstdint>
#include <filesystem>
#include <string>

#include "fdnet/data.hpp"
#include "fdnet/loss.hpp"
#include "fdnet/model.hpp"
#include "fdnet/trainer.hpp"
#include "json.hpp"

namespace fdnet {

using Json = nlohmann::json;

Json to_json(const ModelConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const WeightScheme& s);
Json to_json(const SamplingSchedule& s);
Json to_json(const SynthConfig& c);
Json to_json(const TrainConfig& c);

/// Each reader starts from the struct's defaults, rejects unknown keys and
/// type mismatches with ConfigError("<section>.<key>: ..."), then validates.
ModelConfig model_config_from_json(const Json& j);
LossConfig loss_config_from_json(const Json& j);
WeightScheme weight_scheme_from_json(const Json& j);
SamplingSchedule sampling_from_json(const Json& j);
SynthConfig synth_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

/// 16 hex digits of FNV-1a over the canonical (sorted-key, compact) dump.
std::string digest(const Json& j);

struct DataPaths {
    std::string root;              // dataset root with manifest.json
    std::string train_split = "train";
    std::string val_split = "val";
    std::string test_split = "test";
    int val_sequences = 8;         // generated alongside `synth.num_sequences` training sequences
    int test_sequences = 8;
    bool filter_noisy = true;
    std::string format = "pgm";    // or "grd"
};

Json to_json(const DataPaths& d);

/// Everything a CLI command needs.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SynthConfig synth;
    DataPaths data;

    /// Desk-scale defaults: 32x32 frames, hidden width 32.
    static RunConfig defaults();
    Json to_json() const;
    /// Merges `j` over the defaults; unknown keys are rejected.
    static RunConfig from_json(const Json& j);
    void validate() const;
};

/// Reads a JSON file; errors are IoError (missing) or ConfigError (malformed).
Json read_json_file(const std::filesystem::path& path);

/// Sets dotted `key` (e.g. "train.lr") in `j` from the text `value`. The key
/// must already exist in `schema`; the value is parsed as JSON when possible
/// (so 0.001, true, [1,2]) and otherwise taken as a string.
void apply_override(Json& j, const Json& schema, const std::string& key, const std::string& value);

}  // namespace fdnet
