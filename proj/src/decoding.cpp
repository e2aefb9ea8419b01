#include "affdec/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace affdec {

Strategy parse_strategy(std::string_view s) {
  if (s == "greedy") return Strategy::greedy;
  if (s == "top_k" || s == "top-k") return Strategy::top_k;
  if (s == "temperature") return Strategy::temperature;
  throw std::invalid_argument("unknown decoding strategy \"" + std::string(s) +
                              "\" (expected greedy, top_k or temperature)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::top_k: return "top_k";
    case Strategy::temperature: return "temperature";
  }
  return "?";
}

void DecodeConfig::validate() const {
  if (strategy == Strategy::top_k && k < 1)
    throw std::invalid_argument("DecodeConfig: k must be >= 1");
  if (!(temperature > 0.0))
    throw std::invalid_argument("DecodeConfig: temperature must be positive");
  if (max_new_tokens < 1)
    throw std::invalid_argument("DecodeConfig: max_new_tokens must be >= 1");
}

namespace {

bool banned(int id, int n_special, bool allow_eou) {
  if (id == Vocab::kEou) return !allow_eou;
  return id < n_special;  // PAD, UNK, BOS, EMO
}

}  // namespace

int sample_next(const std::vector<double>& logits, int n_special,
                const DecodeConfig& dcfg, bool allow_eou, Rng& rng) {
  std::vector<int> cand;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i)
    if (!banned(i, n_special, allow_eou) && !std::isnan(logits[i]))
      cand.push_back(i);
  if (cand.empty()) throw std::runtime_error("decode: no admissible token");

  // Stable sort keeps lower ids first among equal logits.
  std::stable_sort(cand.begin(), cand.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });
  if (dcfg.strategy == Strategy::greedy) return cand.front();
  if (dcfg.strategy == Strategy::top_k &&
      cand.size() > static_cast<std::size_t>(dcfg.k))
    cand.resize(static_cast<std::size_t>(dcfg.k));

  const double top = logits[cand.front()] / dcfg.temperature;
  std::vector<double> w(cand.size());
  double z = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i)
    z += w[i] = std::exp(logits[cand[i]] / dcfg.temperature - top);
  const double u = uniform01(rng) * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    acc += w[i];
    if (u < acc) return cand[i];
  }
  return cand.back();
}

GeneratedTurn continue_turn(std::vector<TurnTokens> turns, int emotion,
                            const Model& model, const DecodeConfig& dcfg,
                            Rng& rng) {
  dcfg.validate();
  if (turns.empty()) throw std::invalid_argument("continue_turn: no turns");
  const int n_special = Vocab::kFirstEmotion + model.vocab.n_emotions();
  const auto max_len = static_cast<std::size_t>(model.config.max_seq_len);
  GeneratedTurn out;
  const std::size_t start = turns.back().ids.size();
  for (int step = 0; step < dcfg.max_new_tokens; ++step) {
    const LinearizedSession lin =
        linearize_turns(turns, emotion, model.vocab, model.config.mode, max_len,
                        LossOn::all, /*close_last=*/false);
    if (lin.size() == 0) throw std::invalid_argument("continue_turn: empty context");
    std::vector<double> row;
    {
      NoGradGuard no_grad;
      const Tensor logits = forward(lin, emotion, model.params, model.config);
      const auto& v = logits.values();
      const std::size_t V = logits.cols();
      row.assign(v.end() - static_cast<std::ptrdiff_t>(V), v.end());
    }
    const bool allow_eou = turns.back().ids.size() > 0;
    const int next = sample_next(row, n_special, dcfg, allow_eou, rng);
    if (next == Vocab::kEou) {
      out.closed = true;
      break;
    }
    turns.back().ids.push_back(next);
  }
  out.ids.assign(turns.back().ids.begin() + static_cast<std::ptrdiff_t>(start),
                 turns.back().ids.end());
  return out;
}

Utterance generate_response(const DialogueSession& context, const Model& model,
                            const DecodeConfig& dcfg, Rng& rng) {
  if (context.turns.empty() || context.turns.back().role != Role::speaker)
    throw std::invalid_argument(
        "generate_response: context must end with a speaker turn");
  auto turns = encode_turns(context, model.vocab);
  turns.push_back({Role::listener, {}});
  const auto gen = continue_turn(std::move(turns), context.emotion.id, model, dcfg, rng);
  return {Role::listener, model.vocab.decode(gen.ids)};
}

Utterance generate_response(const DialogueSession& context, const Model& model,
                            const DecodeConfig& dcfg) {
  Rng rng(dcfg.seed);
  return generate_response(context, model, dcfg, rng);
}

DialogueSession generate_dialogue(int emotion, std::string_view prompt,
                                  int n_turns, const Model& model,
                                  const DecodeConfig& dcfg) {
  if (n_turns < 1) throw std::invalid_argument("generate_dialogue: n_turns must be >= 1");
  std::vector<int> prompt_ids = model.vocab.encode(prompt);
  if (prompt_ids.empty())
    throw std::invalid_argument("generate_dialogue: empty prompt");
  Rng rng(dcfg.seed);
  DialogueSession session;
  session.emotion = {emotion, emotion < static_cast<int>(EmotionRegistry::empdial().size())
                                  ? EmotionRegistry::empdial().name(emotion)
                                  : std::to_string(emotion)};
  std::vector<TurnTokens> turns{{Role::speaker, prompt_ids}};
  for (int i = 0; i < n_turns; ++i) {
    const auto gen = continue_turn(turns, emotion, model, dcfg, rng);
    auto& cur = turns.back();
    cur.ids.insert(cur.ids.end(), gen.ids.begin(), gen.ids.end());
    session.turns.push_back({cur.role, model.vocab.decode(cur.ids)});
    if (i + 1 < n_turns) turns.push_back({other(cur.role), {}});
  }
  return session;
}

namespace {

void chat_help(std::ostream& out) {
  out << "commands:\n"
         "  :emotion <name>  switch the emotion label\n"
         "  :reset           forget the conversation so far\n"
         "  :quit            leave\n"
         "  :help            this text\n"
         "anything else is sent as your next utterance\n";
}

}  // namespace

int chat_repl(const Model& model, int emotion, const DecodeConfig& dcfg,
              std::istream& in, std::ostream& out) {
  dcfg.validate();
  const auto& registry = EmotionRegistry::empdial();
  Rng rng(dcfg.seed);
  std::vector<TurnTokens> context;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    line.erase(0, first);
    if (line.front() == ':') {
      std::istringstream ss(line);
      std::string cmd, arg;
      ss >> cmd >> arg;
      if (cmd == ":quit") return 0;
      if (cmd == ":reset") {
        context.clear();
        rng.seed(dcfg.seed);
        out << "(context cleared)\n";
      } else if (cmd == ":emotion") {
        const auto id = registry.find(normalize_emotion_name(arg));
        if (!id || *id >= model.vocab.n_emotions()) {
          out << "unknown emotion \"" << arg << "\"\n";
        } else {
          emotion = *id;
          out << "(emotion: " << registry.name(emotion) << ")\n";
        }
      } else {
        chat_help(out);
      }
      out.flush();
      continue;
    }
    auto ids = model.vocab.encode(line);
    if (ids.empty()) continue;
    context.push_back({Role::speaker, std::move(ids)});
    context.push_back({Role::listener, {}});
    GeneratedTurn gen;
    try {
      gen = continue_turn(context, emotion, model, dcfg, rng);
    } catch (const SequenceTooLong&) {
      context.resize(context.size() - 2);
      out << "(utterance too long, ignored)\n";
      continue;
    }
    context.back().ids = gen.ids;
    out << model.vocab.decode(gen.ids) << '\n';
    out.flush();
  }
  return 0;
}

}  // namespace affdec
