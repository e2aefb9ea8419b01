#pragma once

// A trained model on disk is three files:
//   <path>          tensor checkpoint
//   <path>.vocab    one token per line
//   <path>.json     model config and the vocab file name

#include <string>

#include "json.hpp"
#include "affdec/model.hpp"
#include "affdec/tokenizer.hpp"

namespace affdec {

struct Model {
  ModelConfig config;
  TransformerParams params;
  Vocab vocab;
};

nlohmann::json config_to_json(const ModelConfig& c);
// Missing keys keep the values already in `c`; unknown keys are an error.
void apply_config_json(const nlohmann::json& j, ModelConfig& c);

void save_model(const std::string& path, const Model& model);
// Checks that the checkpoint holds exactly the tensors the config demands.
Model load_model(const std::string& path);

}  // namespace affdec
