#include "affdec/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace affdec {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

const char* const kSpecials[] = {"<pad>", "<unk>", "<bos>", "<eou>"};

std::string emotion_token_name(const std::string& emotion) {
  return "<emo:" + emotion + ">";
}

}  // namespace

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_char(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && i + 1 < text.size() &&
               std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
      flush();
      word.push_back('\'');
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

// ---- Vocab -------------------------------------------------------------------

Vocab::Vocab(const EmotionRegistry& registry) {
  for (const char* s : kSpecials) push(s);
  for (const auto& name : registry.names()) push(emotion_token_name(name));
  n_emotions_ = static_cast<int>(registry.size());
}

void Vocab::push(std::string token) {
  if (index_.count(token))
    throw std::invalid_argument("Vocab: duplicate token \"" + token + "\"");
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(const CorpusSplit& split, std::size_t max_size,
                   std::size_t min_freq, const EmotionRegistry& registry) {
  if (split.sessions.empty())
    throw std::invalid_argument("build_vocab: empty split");
  Vocab v(registry);
  std::map<std::string, std::size_t> freq;
  for (const auto& s : split.sessions)
    for (const auto& t : s.turns)
      for (auto& w : tokenize_text(t.text)) ++freq[std::move(w)];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [word, count] : ranked) {
    if (count < min_freq) break;
    if (max_size != 0 && v.size() >= max_size) break;
    if (v.contains(word)) continue;
    v.push(std::move(word));
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab file " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.push(line);
  }
  const std::size_t n_fixed = std::size(kSpecials);
  if (v.size() < n_fixed)
    throw std::runtime_error("vocab file " + path + " lacks special tokens");
  for (std::size_t i = 0; i < n_fixed; ++i)
    if (v.tokens_[i] != kSpecials[i])
      throw std::runtime_error("vocab file " + path +
                               ": special tokens out of place");
  int n = 0;
  while (n_fixed + static_cast<std::size_t>(n) < v.size() &&
         v.tokens_[n_fixed + static_cast<std::size_t>(n)].rfind("<emo:", 0) == 0)
    ++n;
  v.n_emotions_ = n;
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab file " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocab::emotion_token(int emotion) const {
  if (emotion < 0 || emotion >= n_emotions_)
    throw std::out_of_range("emotion id " + std::to_string(emotion) +
                            " out of range");
  return kFirstEmotion + emotion;
}

int Vocab::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : tokenize_text(text)) ids.push_back(id_of(w));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

// ---- linearization -------------------------------------------------------------

std::vector<TurnTokens> encode_turns(const DialogueSession& session,
                                     const Vocab& vocab) {
  std::vector<TurnTokens> turns;
  turns.reserve(session.turns.size());
  for (const auto& u : session.turns) turns.push_back({u.role, vocab.encode(u.text)});
  return turns;
}

LinearizedSession linearize_turns(const std::vector<TurnTokens>& turns,
                                  int emotion, const Vocab& vocab, Mode mode,
                                  std::size_t max_seq_len, LossOn loss_on,
                                  bool close_last) {
  if (turns.empty()) throw std::invalid_argument("linearize: no turns");
  const bool prepend = uses_prepend(mode);
  const int emo_token = prepend ? vocab.emotion_token(emotion) : 0;
  if (!prepend && (emotion < 0 || emotion >= vocab.n_emotions()))
    throw std::out_of_range("emotion id " + std::to_string(emotion) +
                            " out of range");

  auto turn_len = [&](std::size_t i) {
    const bool closed = close_last || i + 1 < turns.size();
    return turns[i].ids.size() + (closed ? 1 : 0);
  };
  std::size_t total = prepend ? 1 : 0;
  for (std::size_t i = 0; i < turns.size(); ++i) total += turn_len(i);
  std::size_t first = 0;
  while (total > max_seq_len && first + 1 < turns.size()) total -= turn_len(first++);
  if (total > max_seq_len) {
    throw SequenceTooLong("final utterance needs " + std::to_string(total) +
                          " positions but max_seq_len is " +
                          std::to_string(max_seq_len));
  }

  LinearizedSession lin;
  lin.emotion = emotion;
  lin.token_ids.reserve(total);
  auto emit = [&](int token, Role role, bool in_loss) {
    lin.token_ids.push_back(token);
    lin.state_ids.push_back(state_id(role));
    lin.position_ids.push_back(static_cast<int>(lin.position_ids.size()));
    lin.loss_mask.push_back(in_loss ? 1 : 0);
  };
  if (prepend) emit(emo_token, Role::speaker, false);
  for (std::size_t i = first; i < turns.size(); ++i) {
    const auto& t = turns[i];
    const bool counted = loss_on == LossOn::all || t.role == Role::listener;
    for (int id : t.ids) emit(id, t.role, counted);
    if (close_last || i + 1 < turns.size()) emit(Vocab::kEou, t.role, counted);
  }
  return lin;
}

LinearizedSession linearize_session(const DialogueSession& session,
                                    const Vocab& vocab, Mode mode,
                                    std::size_t max_seq_len, LossOn loss_on) {
  return linearize_turns(encode_turns(session, vocab), session.emotion.id, vocab,
                         mode, max_seq_len, loss_on, true);
}

}  // namespace affdec
