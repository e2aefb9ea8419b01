#include "affdec/model_io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "affdec/checkpoint.hpp"

namespace affdec {

using json = nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},       {"n_heads", c.n_heads},
          {"d_model", c.d_model},         {"d_ff", c.d_ff},
          {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
          {"n_emotions", c.n_emotions},   {"d_emotion", c.d_emotion},
          {"mode", to_string(c.mode)},    {"mtl_weight", c.mtl_weight},
          {"dropout_p", c.dropout_p},     {"tie_embeddings", c.tie_embeddings}};
}

void apply_config_json(const json& j, ModelConfig& c) {
  if (!j.is_object()) throw std::runtime_error("model config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n_layers") c.n_layers = v.get<int>();
    else if (key == "n_heads") c.n_heads = v.get<int>();
    else if (key == "d_model") c.d_model = v.get<int>();
    else if (key == "d_ff") c.d_ff = v.get<int>();
    else if (key == "max_seq_len") c.max_seq_len = v.get<int>();
    else if (key == "vocab_size") c.vocab_size = v.get<int>();
    else if (key == "n_emotions") c.n_emotions = v.get<int>();
    else if (key == "d_emotion") c.d_emotion = v.get<int>();
    else if (key == "mode") c.mode = parse_mode(v.get<std::string>());
    else if (key == "mtl_weight") c.mtl_weight = v.get<double>();
    else if (key == "dropout_p") c.dropout_p = v.get<double>();
    else if (key == "tie_embeddings") c.tie_embeddings = v.get<bool>();
    else throw std::runtime_error("unknown model config key \"" + key + "\"");
  }
}

void save_model(const std::string& path, const Model& model) {
  save_tensors(path, model.params.entries());
  const std::string vocab_path = path + ".vocab";
  model.vocab.save(vocab_path);
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write " + path + ".json");
  json meta{{"config", config_to_json(model.config)},
            {"vocab", std::filesystem::path(vocab_path).filename().string()}};
  out << meta.dump(2) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("cannot open " + path + ".json");
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ".json: " + e.what());
  }
  ModelConfig config;
  apply_config_json(meta.at("config"), config);
  config.validate();
  const auto vocab_file = std::filesystem::path(path).parent_path() /
                          meta.at("vocab").get<std::string>();
  Vocab vocab = Vocab::load(vocab_file.string());
  if (static_cast<std::size_t>(config.vocab_size) != vocab.size())
    throw std::runtime_error(path + ": vocab has " + std::to_string(vocab.size()) +
                             " tokens, config says " +
                             std::to_string(config.vocab_size));

  // The freshly initialized layout is the reference for names and shapes.
  TransformerParams expected = init_params(config, 0);
  auto loaded = load_tensors(path);
  if (loaded.size() != expected.entries().size())
    throw std::runtime_error(path + ": expected " +
                             std::to_string(expected.entries().size()) +
                             " tensors, found " + std::to_string(loaded.size()));
  TransformerParams params;
  for (auto& nt : loaded) {
    if (!expected.contains(nt.name))
      throw std::runtime_error(path + ": unexpected tensor " + nt.name);
    if (expected.get(nt.name).shape() != nt.tensor.shape())
      throw std::runtime_error(path + ": tensor " + nt.name + " has wrong shape");
    params.add(nt.name, nt.tensor);
  }
  return Model{config, std::move(params), std::move(vocab)};
}

}  // namespace affdec
