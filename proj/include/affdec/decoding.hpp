#pragma once

// Autoregressive generation: single responses, whole dialogues from a
// prompt, and the interactive chat loop.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "affdec/corpus.hpp"
#include "affdec/model_io.hpp"
#include "affdec/random.hpp"

namespace affdec {

enum class Strategy { greedy, top_k, temperature };

Strategy parse_strategy(std::string_view s);
std::string to_string(Strategy s);

struct DecodeConfig {
  Strategy strategy = Strategy::top_k;
  int k = 40;
  double temperature = 0.9;
  int max_new_tokens = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedTurn {
  std::vector<int> ids;  // without the closing EOU
  bool closed = false;   // stopped on EOU rather than on max_new_tokens
};

// Picks the next token from one row of logits. PAD, UNK, BOS and the EMO
// tokens (ids below n_special, except EOU) are never chosen; neither is EOU
// when `allow_eou` is false. Greedy ties go to the lowest id.
int sample_next(const std::vector<double>& logits, int n_special,
                const DecodeConfig& dcfg, bool allow_eou, Rng& rng);

// Extends the last turn of `turns` (which must have `role`) until EOU or
// max_new_tokens. Context longer than max_seq_len loses its oldest turns.
GeneratedTurn continue_turn(std::vector<TurnTokens> turns, int emotion,
                            const Model& model, const DecodeConfig& dcfg,
                            Rng& rng);

// Listener reply to a context whose last turn is the speaker's.
Utterance generate_response(const DialogueSession& context, const Model& model,
                            const DecodeConfig& dcfg, Rng& rng);
Utterance generate_response(const DialogueSession& context, const Model& model,
                            const DecodeConfig& dcfg);

// n_turns alternating turns; the first is the prompt continued as speaker.
DialogueSession generate_dialogue(int emotion, std::string_view prompt,
                                  int n_turns, const Model& model,
                                  const DecodeConfig& dcfg);

// Reads speaker lines from `in`, writes listener replies to `out`.
// Commands: :emotion <name>, :reset, :quit, :help. Returns the exit status.
int chat_repl(const Model& model, int emotion, const DecodeConfig& dcfg,
              std::istream& in, std::ostream& out);

}  // namespace affdec
