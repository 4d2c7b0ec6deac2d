#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "clld/data.hpp"
#include "clld/encoder.hpp"
#include "clld/eval.hpp"
#include "clld/trainer.hpp"

namespace clld {

// JSON views of the typed configs. Readers start from the defaults, take
// every key present, and throw ConfigError on unknown keys or bad types.
nlohmann::json to_json_value(const EncoderConfig& c);
nlohmann::json to_json_value(const GeneratorConfig& c);
nlohmann::json to_json_value(const DatasetSpec& c);
nlohmann::json to_json_value(const LossSwitches& c);
nlohmann::json to_json_value(const TrainConfig& c);
nlohmann::json to_json_value(const HeadConfig& c);
nlohmann::json to_json_value(const FinetuneConfig& c);
nlohmann::json to_json_value(const EvalConfig& c);

EncoderConfig encoder_config_from_json(const nlohmann::json& j, const EncoderConfig& base = {});
GeneratorConfig generator_config_from_json(const nlohmann::json& j, const GeneratorConfig& base = {});
DatasetSpec dataset_spec_from_json(const nlohmann::json& j, const DatasetSpec& base = {});
LossSwitches loss_switches_from_json(const nlohmann::json& j, const LossSwitches& base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});
HeadConfig head_config_from_json(const nlohmann::json& j, const HeadConfig& base = {});
FinetuneConfig finetune_config_from_json(const nlohmann::json& j, const FinetuneConfig& base = {});
EvalConfig eval_config_from_json(const nlohmann::json& j, const EvalConfig& base = {});

// Throws ConfigError when the file is missing or not valid JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

// FNV-1a (64-bit) over the bytes.
std::uint64_t config_digest(std::string_view bytes);
// 16 lowercase hex digits.
std::string digest_hex(std::uint64_t digest);

}  // namespace clld
