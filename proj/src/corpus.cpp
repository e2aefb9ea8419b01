#include "affdec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "affdec/random.hpp"
#include "affdec/tokenizer.hpp"
#include "json.hpp"

namespace affdec {

using json = nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

Role parse_role(const std::string& s, std::size_t line) {
  if (s == "S") return Role::speaker;
  if (s == "L") return Role::listener;
  throw CorpusError(CorpusError::Kind::parse, line,
                    "role must be \"S\" or \"L\", got \"" + s + "\"");
}

std::string replace_all(std::string s, std::string_view from,
                        std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

// ---- emotions ----------------------------------------------------------------

EmotionRegistry::EmotionRegistry(std::vector<std::string> names)
    : names_(std::move(names)) {
  for (auto& n : names_) n = normalize_emotion_name(n);
  std::vector<std::string> sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("EmotionRegistry: duplicate emotion name");
  if (names_.empty())
    throw std::invalid_argument("EmotionRegistry: no emotions");
}

const EmotionRegistry& EmotionRegistry::empdial() {
  static const EmotionRegistry registry({
      "afraid",      "angry",        "annoyed",      "anticipating",
      "anxious",     "apprehensive", "ashamed",      "caring",
      "confident",   "content",      "devastated",   "disappointed",
      "disgusted",   "embarrassed",  "excited",      "faithful",
      "furious",     "grateful",     "guilty",       "hopeful",
      "impressed",   "jealous",      "joyful",       "lonely",
      "nostalgic",   "prepared",     "proud",        "sad",
      "sentimental", "surprised",    "terrified",    "trusting",
  });
  return registry;
}

const std::string& EmotionRegistry::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
    throw std::out_of_range("emotion id " + std::to_string(id) +
                            " out of range");
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> EmotionRegistry::find(std::string_view name) const {
  const std::string key = normalize_emotion_name(name);
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == key) return static_cast<int>(i);
  return std::nullopt;
}

EmotionLabel EmotionRegistry::label(std::string_view name) const {
  if (auto id = find(name)) return {*id, names_[static_cast<std::size_t>(*id)]};
  throw CorpusError(CorpusError::Kind::unknown_emotion, 0,
                    "unknown emotion \"" + std::string(name) + "\"");
}

std::string normalize_emotion_name(std::string_view raw) {
  std::string out;
  for (unsigned char c : raw)
    if (!std::isspace(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
  }
  return "train";
}

SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::train;
  if (s == "validation" || s == "valid") return SplitName::validation;
  if (s == "test") return SplitName::test;
  throw std::invalid_argument("unknown split \"" + std::string(s) +
                              "\" (expected train, validation or test)");
}

CorpusError::CorpusError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what
                              : what),
      kind_(kind),
      line_(line) {}

// ---- validation & IO ---------------------------------------------------------

void validate_session(const DialogueSession& session, std::size_t index) {
  auto fail = [&](const std::string& what) {
    throw CorpusError(CorpusError::Kind::invariant, 0,
                      "session " + std::to_string(index) + ": " + what);
  };
  if (session.turns.empty()) fail("no turns");
  Role expected = Role::speaker;
  for (std::size_t i = 0; i < session.turns.size(); ++i) {
    const auto& t = session.turns[i];
    if (t.role != expected) {
      fail("turn " + std::to_string(i) + " has role " + role_code(t.role) +
           ", expected " + role_code(expected));
    }
    if (is_blank(t.text)) fail("turn " + std::to_string(i) + " is empty");
    expected = other(expected);
  }
}

CorpusSplit read_corpus(std::istream& in, SplitName split,
                        const LoadOptions& options) {
  const EmotionRegistry& registry =
      options.registry ? *options.registry : EmotionRegistry::empdial();
  CorpusSplit out{split, {}};
  std::string line;
  std::size_t lineno = 0;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError(CorpusError::Kind::parse, lineno, e.what());
    }
    DialogueSession s;
    try {
      const std::string emotion = j.at("emotion").get<std::string>();
      auto id = registry.find(emotion);
      if (!id) {
        throw CorpusError(CorpusError::Kind::unknown_emotion, lineno,
                          "unknown emotion \"" + emotion + "\"");
      }
      s.emotion = registry.label(*id);
      for (const auto& t : j.at("turns")) {
        s.turns.push_back(
            {parse_role(t.at("role").get<std::string>(), lineno),
             t.at("text").get<std::string>()});
      }
    } catch (const json::exception& e) {
      throw CorpusError(CorpusError::Kind::parse, lineno, e.what());
    }
    try {
      validate_session(s, index);
    } catch (const CorpusError& e) {
      throw CorpusError(CorpusError::Kind::invariant, lineno, e.what());
    }
    ++index;
    if (options.drop_trailing_speaker && s.turns.back().role == Role::speaker)
      continue;
    out.sessions.push_back(std::move(s));
  }
  return out;
}

CorpusSplit load_corpus(const std::string& path, SplitName split,
                        const LoadOptions& options) {
  std::ifstream in(path);
  if (!in)
    throw CorpusError(CorpusError::Kind::io, 0, "cannot open " + path);
  return read_corpus(in, split, options);
}

void write_corpus(std::ostream& out, const CorpusSplit& split) {
  for (const auto& s : split.sessions) {
    json turns = json::array();
    for (const auto& t : s.turns)
      turns.push_back({{"role", role_code(t.role)}, {"text", t.text}});
    out << json{{"emotion", s.emotion.name}, {"turns", std::move(turns)}}.dump()
        << '\n';
  }
}

void save_corpus(const std::string& path, const CorpusSplit& split) {
  std::ofstream out(path);
  if (!out) throw CorpusError(CorpusError::Kind::io, 0, "cannot write " + path);
  write_corpus(out, split);
}

CorpusStats corpus_stats(const CorpusSplit& split,
                         const EmotionRegistry& registry) {
  CorpusStats st;
  st.emotion_histogram.assign(registry.size(), 0);
  for (const auto& s : split.sessions) {
    ++st.n_sessions;
    st.n_turns += s.turns.size();
    for (const auto& t : s.turns) st.n_tokens += tokenize_text(t.text).size();
    ++st.emotion_histogram.at(static_cast<std::size_t>(s.emotion.id));
  }
  return st;
}

// ---- synthetic fixture -------------------------------------------------------

std::string speaker_marker(const EmotionRegistry& registry, int emotion) {
  return "s" + registry.name(emotion);
}

std::string listener_marker(const EmotionRegistry& registry, int emotion) {
  return "l" + registry.name(emotion);
}

CorpusSplit make_synthetic_corpus(int n_emotions, int sessions_per_emotion,
                                  std::uint64_t seed, SplitName split) {
  const EmotionRegistry& registry = EmotionRegistry::empdial();
  if (n_emotions < 1 || static_cast<std::size_t>(n_emotions) > registry.size())
    throw std::invalid_argument("make_synthetic_corpus: n_emotions must be in "
                                "[1, 32]");
  if (sessions_per_emotion < 0)
    throw std::invalid_argument("make_synthetic_corpus: negative count");

  static const char* const kSpeakerWords[] = {
      "about", "my",    "the",   "work",   "today", "dog",  "friend", "house",
      "car",   "school", "family", "trip", "job",   "news", "party",  "game",
      "week",  "test",  "phone", "money",  "garden", "movie", "dinner", "city"};
  static const char* const kListenerWords[] = {
      "that", "sounds", "really", "so",   "wow",    "you",  "must", "hope",
      "glad", "sorry",  "well",   "nice", "great",  "there", "what", "how",
      "why",  "indeed", "sure",   "maybe", "okay",  "right"};

  auto pick = [](Rng& rng, const auto& pool) {
    return std::string(pool[below(rng, std::size(pool))]);
  };

  CorpusSplit out{split, {}};
  std::uint64_t index = 0;
  for (int k = 0; k < n_emotions; ++k) {
    for (int r = 0; r < sessions_per_emotion; ++r, ++index) {
      Rng rng(derive_seed(seed, index));
      DialogueSession s;
      s.emotion = registry.label(k);
      const std::size_t n_turns = 2 + below(rng, 3);
      for (std::size_t t = 0; t < n_turns; ++t) {
        const Role role = t % 2 == 0 ? Role::speaker : Role::listener;
        std::string text;
        if (role == Role::speaker) {
          text = (t == 0 ? "i feel " : "and ") + speaker_marker(registry, k);
          const std::size_t n = 2 + below(rng, 3);
          for (std::size_t i = 0; i < n; ++i) text += " " + pick(rng, kSpeakerWords);
          text += " .";
        } else {
          text = "oh " + listener_marker(registry, k);
          const std::size_t n = 2 + below(rng, 3);
          for (std::size_t i = 0; i < n; ++i) text += " " + pick(rng, kListenerWords);
          text += " !";
        }
        s.turns.push_back({role, std::move(text)});
      }
      out.sessions.push_back(std::move(s));
    }
  }
  return out;
}

// ---- EmpDial CSV ------------------------------------------------------------

std::vector<DialogueSession> read_empdial_csv(std::istream& in,
                                              const EmotionRegistry& registry) {
  struct Row {
    int idx;
    std::string text;
  };
  std::vector<DialogueSession> out;
  std::string current_id;
  EmotionLabel current_emotion;
  std::vector<Row> rows;

  auto flush = [&]() {
    if (rows.empty()) return;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.idx < b.idx; });
    DialogueSession s;
    s.emotion = current_emotion;
    Role role = Role::speaker;
    for (auto& r : rows) {
      s.turns.push_back({role, std::move(r.text)});
      role = other(role);
    }
    validate_session(s, out.size());
    out.push_back(std::move(s));
    rows.clear();
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    if (lineno == 1 && line.rfind("conv_id", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 6)
      throw CorpusError(CorpusError::Kind::parse, lineno,
                        "expected at least 6 comma-separated fields");
    int idx = 0;
    try {
      idx = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw CorpusError(CorpusError::Kind::parse, lineno,
                        "bad utterance_idx \"" + fields[1] + "\"");
    }
    const auto emotion = registry.find(fields[2]);
    if (!emotion)
      throw CorpusError(CorpusError::Kind::unknown_emotion, lineno,
                        "unknown emotion \"" + fields[2] + "\"");
    if (fields[0] != current_id) {
      flush();
      current_id = fields[0];
      current_emotion = registry.label(*emotion);
    }
    rows.push_back({idx, replace_all(fields[5], "_comma_", ",")});
  }
  flush();
  return out;
}

}  // namespace affdec
