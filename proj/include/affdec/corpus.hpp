#pragma once

// Emotion-labelled dialogue corpora: JSONL loading/saving, validation,
// summary statistics, EmpDial CSV conversion and synthetic fixtures.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "affdec/types.hpp"

namespace affdec {

struct EmotionLabel {
  int id = 0;
  std::string name;

  friend bool operator==(const EmotionLabel&, const EmotionLabel&) = default;
};

// Dense id <-> name mapping. Names are lowercase ASCII.
class EmotionRegistry {
 public:
  explicit EmotionRegistry(std::vector<std::string> names);

  // The 32 EmpatheticDialogues labels in alphabetical order.
  static const EmotionRegistry& empdial();

  std::size_t size() const { return names_.size(); }
  const std::string& name(int id) const;
  std::optional<int> find(std::string_view name) const;
  EmotionLabel label(int id) const { return {id, name(id)}; }
  EmotionLabel label(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

std::string normalize_emotion_name(std::string_view raw);

struct Utterance {
  Role role = Role::speaker;
  std::string text;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct DialogueSession {
  EmotionLabel emotion;
  std::vector<Utterance> turns;

  friend bool operator==(const DialogueSession&, const DialogueSession&) =
      default;
};

enum class SplitName { train, validation, test };

std::string to_string(SplitName s);
SplitName parse_split_name(std::string_view s);

struct CorpusSplit {
  SplitName name = SplitName::train;
  std::vector<DialogueSession> sessions;
};

class CorpusError : public std::runtime_error {
 public:
  enum class Kind { io, parse, invariant, unknown_emotion };

  CorpusError(Kind kind, std::size_t line, const std::string& what);

  Kind kind() const { return kind_; }
  // 1-based line (equivalently, session index + 1) the error refers to; 0
  // when not tied to a line.
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

// Throws CorpusError(invariant) if the session breaks a DialogueSession
// invariant: at least one turn, nonblank texts, strict S/L alternation
// starting with S.
void validate_session(const DialogueSession& session, std::size_t index = 0);

struct LoadOptions {
  const EmotionRegistry* registry = nullptr;  // defaults to empdial()
  bool drop_trailing_speaker = false;
};

CorpusSplit load_corpus(const std::string& path, SplitName split,
                        const LoadOptions& options = {});
CorpusSplit read_corpus(std::istream& in, SplitName split,
                        const LoadOptions& options = {});

void write_corpus(std::ostream& out, const CorpusSplit& split);
void save_corpus(const std::string& path, const CorpusSplit& split);

struct CorpusStats {
  std::size_t n_sessions = 0;
  std::size_t n_turns = 0;
  std::size_t n_tokens = 0;
  // Indexed by emotion id; one slot per registry label.
  std::vector<std::size_t> emotion_histogram;
};

CorpusStats corpus_stats(const CorpusSplit& split,
                         const EmotionRegistry& registry =
                             EmotionRegistry::empdial());

// Marker words of the synthetic corpus. Emotion k's speaker marker occurs
// only in speaker turns of sessions labelled k, and likewise for listeners.
std::string speaker_marker(const EmotionRegistry& registry, int emotion);
std::string listener_marker(const EmotionRegistry& registry, int emotion);

// Deterministic fixture: n_emotions * sessions_per_emotion sessions ordered
// by emotion. Labels come from empdial() (n_emotions <= 32).
CorpusSplit make_synthetic_corpus(int n_emotions, int sessions_per_emotion,
                                  std::uint64_t seed,
                                  SplitName split = SplitName::train);

// Converts the original EmpatheticDialogues CSV (conv_id, utterance_idx,
// context, prompt, speaker_idx, utterance, ...) into sessions. Utterances
// are ordered by utterance_idx and alternate S, L, ...; "_comma_" is
// unescaped. The situation prompt is dropped.
std::vector<DialogueSession> read_empdial_csv(std::istream& in,
                                              const EmotionRegistry& registry =
                                                  EmotionRegistry::empdial());

}  // namespace affdec
