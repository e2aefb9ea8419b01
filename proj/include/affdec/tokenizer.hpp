#pragma once

// Word-level vocabulary and the three-stream linearization of a session
// (token, dialogue-state and position ids).

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "affdec/corpus.hpp"
#include "affdec/types.hpp"

namespace affdec {

// Lowercases and splits on whitespace and punctuation. Runs of letters and
// digits form words, an apostrophe followed by letters starts a clitic
// ("i'm" -> "i", "'m"), and every other punctuation character is its own
// token. Non-ASCII bytes are treated as letters.
std::vector<std::string> tokenize_text(std::string_view text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEou = 3;
  static constexpr int kFirstEmotion = 4;

  // Specials only, with one EMO token per registry label.
  explicit Vocab(const EmotionRegistry& registry);

  // Frequency-descending, then lexicographic. max_size bounds the total
  // size including specials (0 = unbounded); words rarer than min_freq are
  // left out.
  static Vocab build(const CorpusSplit& split, std::size_t max_size,
                     std::size_t min_freq,
                     const EmotionRegistry& registry =
                         EmotionRegistry::empdial());

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  int n_emotions() const { return n_emotions_; }
  int emotion_token(int emotion) const;
  bool is_special(int id) const {
    return id >= 0 && id < kFirstEmotion + n_emotions_;
  }

  // UNK when absent.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_ && a.n_emotions_ == b.n_emotions_;
  }

 private:
  Vocab() = default;
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int n_emotions_ = 0;
};

struct LinearizedSession {
  std::vector<int> token_ids;
  std::vector<int> state_ids;
  std::vector<int> position_ids;
  std::vector<std::uint8_t> loss_mask;
  int emotion = 0;

  std::size_t size() const { return token_ids.size(); }
};

class SequenceTooLong : public std::length_error {
 public:
  using std::length_error::length_error;
};

// One utterance already mapped to ids (without its EOU).
struct TurnTokens {
  Role role = Role::speaker;
  std::vector<int> ids;
};

// Renders turns as [ids..., EOU] each, tagged with the turn's state. In
// prepend mode an EMO token (state S) leads. Oldest turns are dropped
// whole until the sequence fits; when `close_last` is false the final turn
// gets no EOU (an utterance still being generated). Throws SequenceTooLong
// when the final turn alone does not fit.
LinearizedSession linearize_turns(const std::vector<TurnTokens>& turns,
                                  int emotion, const Vocab& vocab, Mode mode,
                                  std::size_t max_seq_len,
                                  LossOn loss_on = LossOn::all,
                                  bool close_last = true);

LinearizedSession linearize_session(const DialogueSession& session,
                                    const Vocab& vocab, Mode mode,
                                    std::size_t max_seq_len,
                                    LossOn loss_on = LossOn::all);

std::vector<TurnTokens> encode_turns(const DialogueSession& session,
                                     const Vocab& vocab);

}  // namespace affdec
