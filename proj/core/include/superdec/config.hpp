#pragma once

#include <filesystem>
#include <string>

#include "superdec/blocks.hpp"
#include "superdec/data.hpp"
#include "superdec/train.hpp"

namespace superdec {

// Experiment description: { "model": {...}, "dataset": {...}, "train": {...} }.
// Unknown keys and type mismatches raise ConfigError with the field path.
struct ExperimentConfig {
    ModelSpec model;
    DatasetSpec dataset;
    TrainConfig train;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);

// Reads a config file and applies the SUPER_SEED environment override to
// train.seed when set.
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Standalone model spec document for the macs subcommand; accepts either a
// bare model object or a full experiment config (its "model" field is used).
ModelSpec parse_model_spec(const std::string& json_text);

std::string model_spec_to_json(const ModelSpec& spec);

const char* decoder_name(DecoderKind k);
const char* task_name(TaskKind t);

} // namespace superdec
