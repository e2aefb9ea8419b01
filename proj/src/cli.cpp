#include "affdec/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "affdec/analysis.hpp"
#include "affdec/corpus.hpp"
#include "affdec/decoding.hpp"
#include "affdec/eval_stats.hpp"
#include "affdec/gradcheck.hpp"
#include "affdec/metrics.hpp"
#include "affdec/model_io.hpp"
#include "affdec/random.hpp"
#include "affdec/training.hpp"

namespace affdec {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Usage errors found after parsing (exit 2, like CLI11's own).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- config file + flag overrides ----------------------------------------------
//
// Values are resolved as: built-in default, then the --config file, then any
// flag given on the command line.

struct VocabOptions {
  std::size_t max_size = 0;
  std::size_t min_freq = 1;
};

struct Settings {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  VocabOptions vocab;
};

void apply_train_json(const json& j, TrainConfig& t) {
  for (const auto& [key, v] : j.items()) {
    if (key == "lr") t.lr = v.get<double>();
    else if (key == "batch_size") t.batch_size = v.get<int>();
    else if (key == "max_steps") t.max_steps = v.get<int>();
    else if (key == "eval_every") t.eval_every = v.get<int>();
    else if (key == "patience") t.patience = v.get<int>();
    else if (key == "grad_clip_norm") t.grad_clip_norm = v.get<double>();
    else if (key == "loss_on") t.loss_on = parse_loss_on(v.get<std::string>());
    else throw std::runtime_error("unknown train config key \"" + key + "\"");
  }
}

void apply_decode_json(const json& j, DecodeConfig& d) {
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") d.strategy = parse_strategy(v.get<std::string>());
    else if (key == "k") d.k = v.get<int>();
    else if (key == "temperature") d.temperature = v.get<double>();
    else if (key == "max_new_tokens") d.max_new_tokens = v.get<int>();
    else throw std::runtime_error("unknown decode config key \"" + key + "\"");
  }
}

void apply_vocab_json(const json& j, VocabOptions& o) {
  for (const auto& [key, v] : j.items()) {
    if (key == "max_size") o.max_size = v.get<std::size_t>();
    else if (key == "min_freq") o.min_freq = v.get<std::size_t>();
    else throw std::runtime_error("unknown vocab config key \"" + key + "\"");
  }
}

void load_config_file(const std::string& path, Settings& s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config " + path + " is not a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "model") apply_config_json(v, s.model);
      else if (key == "train") apply_train_json(v, s.train);
      else if (key == "decode") apply_decode_json(v, s.decode);
      else if (key == "vocab") apply_vocab_json(v, s.vocab);
      else throw std::runtime_error("unknown section \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& field,
                   const std::string& desc) {
    auto holder = std::make_shared<T>(field);
    auto* opt = app->add_option(name, *holder, desc)->capture_default_str();
    fixes_.push_back([opt, holder, &field] {
      if (opt->count()) field = *holder;
    });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, bool& field,
                        const std::string& desc) {
    auto holder = std::make_shared<bool>(false);
    auto* opt = app->add_flag(name, *holder, desc);
    fixes_.push_back([opt, holder, &field] {
      if (opt->count()) field = *holder;
    });
    return opt;
  }

  // Flags whose text is parsed into an enum or similar.
  CLI::Option* add_parsed(CLI::App* app, const std::string& name,
                          std::function<void(const std::string&)> set,
                          const std::string& default_text, const std::string& desc) {
    auto holder = std::make_shared<std::string>(default_text);
    auto* opt = app->add_option(name, *holder, desc)->default_str(default_text);
    fixes_.push_back([opt, holder, set] {
      if (opt->count()) set(*holder);
    });
    return opt;
  }

  void apply() const {
    for (const auto& f : fixes_) f();
  }

 private:
  std::vector<std::function<void()>> fixes_;
};

// ---- helpers ---------------------------------------------------------------------

int emotion_id(const std::string& name) {
  const auto id = EmotionRegistry::empdial().find(normalize_emotion_name(name));
  if (!id) throw std::runtime_error("unknown emotion \"" + name + "\"");
  return *id;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

json rounded_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  return round3(*v);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- ingest ------------------------------------------------------------------------

struct IngestArgs {
  std::string empdial_csv;
  bool synthetic = false;
  std::string input;
  std::string output;
  int n_emotions = 32;
  int per_emotion = 10;
  int valid_per_emotion = 2;
  int test_per_emotion = 2;
  std::string vectors_out;
  int vector_dim = 16;
  bool drop_trailing_speaker = false;
};

void print_counts(const std::string& label, const CorpusSplit& split) {
  const auto st = corpus_stats(split);
  const auto labels = std::count_if(st.emotion_histogram.begin(),
                                    st.emotion_histogram.end(),
                                    [](std::size_t c) { return c > 0; });
  std::cout << label << ": " << st.n_sessions << " sessions, " << st.n_turns
            << " turns, " << st.n_tokens << " tokens, " << labels << " labels\n";
}

CorpusSplit maybe_drop(CorpusSplit split, bool drop) {
  if (!drop) return split;
  auto& s = split.sessions;
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](const DialogueSession& d) {
                           return d.turns.back().role == Role::speaker;
                         }),
          s.end());
  return split;
}

void write_synthetic_vectors(const std::string& path,
                             const std::vector<CorpusSplit>& splits, int dim,
                             std::uint64_t seed) {
  std::set<std::string> words;
  for (const auto& sp : splits)
    for (const auto& s : sp.sessions)
      for (const auto& t : s.turns)
        for (auto& w : tokenize_text(t.text)) words.insert(w);
  Rng rng(derive_seed(seed, 0x7ec5));
  auto out = open_out(path);
  out.precision(17);
  for (const auto& w : words) {
    out << w;
    for (int d = 0; d < dim; ++d) out << ' ' << normal(rng);
    out << '\n';
  }
}

int run_ingest(const IngestArgs& a, const Settings& s) {
  const int sources = (!a.empdial_csv.empty()) + a.synthetic + (!a.input.empty());
  if (sources != 1)
    throw UsageError("ingest needs exactly one of --from-empdial-csv, --synthetic, --input");

  if (!a.input.empty()) {
    LoadOptions lo;
    lo.drop_trailing_speaker = a.drop_trailing_speaker;
    const auto split = load_corpus(a.input, SplitName::train, lo);
    print_counts(a.input, split);
    if (!a.output.empty()) save_corpus(a.output, split);
    return 0;
  }
  if (a.output.empty()) throw UsageError("ingest: --output is required");
  fs::create_directories(a.output);

  if (a.synthetic) {
    std::vector<CorpusSplit> splits{
        make_synthetic_corpus(a.n_emotions, a.per_emotion, s.seed, SplitName::train),
        make_synthetic_corpus(a.n_emotions, a.valid_per_emotion,
                              derive_seed(s.seed, 1), SplitName::validation),
        make_synthetic_corpus(a.n_emotions, a.test_per_emotion,
                              derive_seed(s.seed, 2), SplitName::test)};
    for (auto& sp : splits) {
      sp = maybe_drop(std::move(sp), a.drop_trailing_speaker);
      const auto path = (fs::path(a.output) / (to_string(sp.name) + ".jsonl")).string();
      save_corpus(path, sp);
      print_counts(path, sp);
    }
    if (!a.vectors_out.empty())
      write_synthetic_vectors(a.vectors_out, splits, a.vector_dim, s.seed);
    return 0;
  }

  // EmpatheticDialogues CSV: a single file, or a directory with the three
  // original split files.
  std::vector<std::pair<fs::path, SplitName>> files;
  if (fs::is_directory(a.empdial_csv)) {
    files = {{fs::path(a.empdial_csv) / "train.csv", SplitName::train},
             {fs::path(a.empdial_csv) / "valid.csv", SplitName::validation},
             {fs::path(a.empdial_csv) / "test.csv", SplitName::test}};
  } else {
    const auto stem = fs::path(a.empdial_csv).stem().string();
    files = {{a.empdial_csv, parse_split_name(stem == "valid" ? "validation" : stem)}};
  }
  for (const auto& [path, name] : files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CorpusSplit split{name, read_empdial_csv(in)};
    split = maybe_drop(std::move(split), a.drop_trailing_speaker);
    const auto out = (fs::path(a.output) / (to_string(name) + ".jsonl")).string();
    save_corpus(out, split);
    print_counts(out, split);
  }
  return 0;
}

// ---- stats -------------------------------------------------------------------------

int run_stats(const std::vector<std::string>& files, bool as_json) {
  json report = json::array();
  const auto& reg = EmotionRegistry::empdial();
  for (const auto& f : files) {
    const auto split = load_corpus(f, SplitName::train);
    const auto st = corpus_stats(split);
    if (as_json) {
      json hist = json::object();
      for (std::size_t i = 0; i < st.emotion_histogram.size(); ++i)
        if (st.emotion_histogram[i]) hist[reg.name(static_cast<int>(i))] = st.emotion_histogram[i];
      report.push_back({{"file", f},
                        {"n_sessions", st.n_sessions},
                        {"n_turns", st.n_turns},
                        {"n_tokens", st.n_tokens},
                        {"n_labels", hist.size()},
                        {"emotions", hist}});
    } else {
      print_counts(f, split);
    }
  }
  if (as_json) std::cout << report.dump(2) << '\n';
  return 0;
}

// ---- train -------------------------------------------------------------------------

struct TrainArgs {
  std::string train_file;
  std::string valid_file;
  std::string output;
  std::string history;
  bool drop_trailing_speaker = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a, Settings s) {
  LoadOptions lo;
  lo.drop_trailing_speaker = a.drop_trailing_speaker;
  const auto train_split = load_corpus(a.train_file, SplitName::train, lo);
  const auto valid_split = load_corpus(a.valid_file, SplitName::validation, lo);
  const Vocab vocab = Vocab::build(train_split, s.vocab.max_size, s.vocab.min_freq);
  s.model.vocab_size = static_cast<int>(vocab.size());
  s.model.n_emotions = vocab.n_emotions();
  s.train.seed = s.seed;

  const auto history_path = a.history.empty() ? a.output + ".history.csv" : a.history;
  auto hist = open_out(history_path);
  hist << "step,train_loss,valid_ppl\n";
  hist.precision(10);
  const auto result = train(train_split, valid_split, vocab, s.model, s.train,
                            [&](const HistoryEntry& e) {
                              hist << e.step << ',' << e.train_loss << ','
                                   << e.valid_ppl << '\n';
                              hist.flush();
                              if (!a.quiet)
                                std::cerr << "step " << e.step << "  train_loss "
                                          << fmt("%.4f", e.train_loss) << "  valid_ppl "
                                          << fmt("%.4f", e.valid_ppl) << '\n';
                            });
  if (fs::path(a.output).has_parent_path())
    fs::create_directories(fs::path(a.output).parent_path());
  save_model(a.output, Model{s.model, result.params, vocab});
  if (!a.quiet)
    std::cerr << "saved " << a.output << " (best step " << result.best_step << ", "
              << result.params.parameter_count() << " parameters)\n";
  return 0;
}

// ---- respond / generate / chat -----------------------------------------------------

struct RespondArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string refs_out;
};

int run_respond(const RespondArgs& a, const Settings& s) {
  const Model model = load_model(a.checkpoint);
  const auto contexts = load_corpus(a.input, SplitName::test);
  auto out = open_out(a.output);
  std::ofstream refs;
  if (!a.refs_out.empty()) refs = open_out(a.refs_out);
  DecodeConfig dc = s.decode;
  for (std::size_t i = 0; i < contexts.sessions.size(); ++i) {
    DialogueSession ctx = contexts.sessions[i];
    std::string ref;
    // A trailing listener turn is the reference, not context.
    if (ctx.turns.back().role == Role::listener) {
      ref = ctx.turns.back().text;
      ctx.turns.pop_back();
    }
    if (ctx.turns.empty())
      throw std::runtime_error(a.input + " session " + std::to_string(i + 1) +
                               ": no speaker turn to respond to");
    dc.seed = derive_seed(s.seed, i);
    out << generate_response(ctx, model, dc).text << '\n';
    if (refs.is_open()) refs << ref << '\n';
  }
  return 0;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string emotion;
  std::string prompt;
  int turns = 4;
  bool as_json = false;
};

int run_generate(const GenerateArgs& a, const Settings& s) {
  const Model model = load_model(a.checkpoint);
  DecodeConfig dc = s.decode;
  dc.seed = s.seed;
  const auto session = generate_dialogue(emotion_id(a.emotion), a.prompt, a.turns, model, dc);
  if (a.as_json) {
    write_corpus(std::cout, CorpusSplit{SplitName::test, {session}});
  } else {
    for (const auto& t : session.turns) std::cout << role_code(t.role) << ": " << t.text << '\n';
  }
  return 0;
}

int run_chat(const std::string& checkpoint, const std::string& emotion,
             const Settings& s) {
  const Model model = load_model(checkpoint);
  DecodeConfig dc = s.decode;
  dc.seed = s.seed;
  const int e = emotion_id(emotion);
  std::cerr << "emotion: " << EmotionRegistry::empdial().name(e)
            << "  (:help for commands)\n";
  return chat_repl(model, e, dc, std::cin, std::cout);
}

// ---- evaluate ---------------------------------------------------------------------

struct EvaluateArgs {
  std::string hyps;
  std::string refs;
  std::string vectors;
  std::string checkpoint;
  std::string data;
  std::string output;
  std::string smoothing = "add1";
  std::string greedy = "both";
};

int run_evaluate(const EvaluateArgs& a) {
  MetricOptions mo;
  mo.smoothing = parse_bleu_smoothing(a.smoothing);
  mo.greedy_direction = parse_greedy_direction(a.greedy);
  const auto hyp_lines = read_lines(a.hyps);
  const auto ref_lines = read_lines(a.refs);
  if (hyp_lines.size() != ref_lines.size())
    throw std::runtime_error(a.hyps + " has " + std::to_string(hyp_lines.size()) +
                             " lines but " + a.refs + " has " +
                             std::to_string(ref_lines.size()));
  std::vector<Tokens> hyps, refs;
  for (const auto& l : hyp_lines) hyps.push_back(tokenize_text(l));
  for (const auto& l : ref_lines) refs.push_back(tokenize_text(l));
  const auto vectors = WordVectors::load(a.vectors);
  const auto rep = evaluate_corpus(hyps, refs, vectors, mo);

  json j{{"bleu", round3(rep.bleu)},
         {"bow_g", rounded_or_null(rep.bow_g)},
         {"bow_a", rounded_or_null(rep.bow_a)},
         {"bow_e", rounded_or_null(rep.bow_e)},
         {"dist1", rounded_or_null(rep.dist1)},
         {"dist2", rounded_or_null(rep.dist2)},
         {"ppl", nullptr},
         {"n_pairs", rep.n_pairs},
         {"n_undefined_bow", rep.n_undefined_bow}};
  if (!a.checkpoint.empty()) {
    if (a.data.empty()) throw UsageError("evaluate: --checkpoint needs --data");
    const Model model = load_model(a.checkpoint);
    const auto split = load_corpus(a.data, SplitName::test);
    const auto lin = linearize_split(split, model.vocab, model.config.mode,
                                     static_cast<std::size_t>(model.config.max_seq_len));
    j["ppl"] = round3(perplexity(model.params, model.config, lin));
  }
  if (a.output.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    open_out(a.output) << j.dump(2) << '\n';
  }
  return 0;
}

// ---- eval-stats -------------------------------------------------------------------

struct EvalStatsArgs {
  std::string judgments;
  std::string ratings;
  std::string json_out;
  double alpha = 0.05;
};

int run_eval_stats(const EvalStatsArgs& a) {
  if (a.judgments.empty() && a.ratings.empty())
    throw UsageError("eval-stats needs --judgments and/or --ratings");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  json report = json::object();
  if (!a.judgments.empty()) {
    std::ifstream in(a.judgments);
    if (!in) throw std::runtime_error("cannot open " + a.judgments);
    const auto m = preference_matrix(read_judgments_csv(in), a.alpha);
    std::cout << format_preference_table(m);
    report["preference"] = to_json(m);
  }
  if (!a.ratings.empty()) {
    std::ifstream in(a.ratings);
    if (!in) throw std::runtime_error("cannot open " + a.ratings);
    const auto s = likert_summary(read_ratings_csv(in), a.alpha);
    if (!a.judgments.empty()) std::cout << '\n';
    std::cout << format_likert_table(s);
    report["likert"] = to_json(s);
  }
  if (!a.json_out.empty()) open_out(a.json_out) << report.dump(2) << '\n';
  return 0;
}

// ---- neighbors --------------------------------------------------------------------

struct NeighborsArgs {
  std::string checkpoint;
  std::string emotion;
  std::string role;
  std::string metric = "offset";
  int k = 10;
  bool divergence = false;
};

int run_neighbors(const NeighborsArgs& a) {
  const Model model = load_model(a.checkpoint);
  const auto& reg = EmotionRegistry::empdial();
  OffsetRole role;
  if (!a.role.empty()) role = parse_offset_role(a.role);
  else role = uses_dual_offset(model.config.mode) ? OffsetRole::speaker : OffsetRole::unified;
  const auto metric = parse_neighbor_metric(a.metric);
  std::vector<int> emotions;
  if (a.emotion == "all") {
    for (int e = 0; e < model.config.n_emotions; ++e) emotions.push_back(e);
  } else {
    emotions.push_back(emotion_id(a.emotion));
  }
  for (int e : emotions) {
    const auto nn = nearest_neighbors(e, role, a.k, model.params, model.config,
                                      model.vocab, metric);
    std::cout << reg.name(e) << " (" << (role == OffsetRole::unified ? "unified" :
                                          role == OffsetRole::speaker ? "S" : "L")
              << ")";
    if (a.divergence)
      std::cout << "  divergence " << fmt("%.4f", offset_divergence(e, model.params, model.config));
    std::cout << '\n';
    std::size_t w = 4;
    for (const auto& n : nn) w = std::max(w, n.word.size());
    for (std::size_t i = 0; i < nn.size(); ++i)
      std::cout << "  " << fmt("%2.0f", static_cast<double>(i + 1)) << "  " << nn[i].word
                << std::string(w - nn[i].word.size(), ' ') << "  "
                << fmt("%.4f", nn[i].score) << '\n';
  }
  return 0;
}

// ---- selftest ---------------------------------------------------------------------

int run_selftest(std::uint64_t seed) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "ok    " : "FAIL  ") << name;
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << '\n';
    if (!ok) ++failures;
  };

  // Gradient checks on a tiny model in every mode.
  const auto corpus = make_synthetic_corpus(2, 1, seed);
  const Vocab vocab = Vocab::build(corpus, 0, 1);
  for (Mode mode : kAllModes) {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.d_emotion = 4;
    c.max_seq_len = 64;
    c.vocab_size = static_cast<int>(vocab.size());
    c.n_emotions = vocab.n_emotions();
    c.mode = mode;
    c.dropout_p = 0.0;
    c.mtl_weight = 0.5;
    TransformerParams p = init_params(c, seed);
    const auto lin = linearize_split(corpus, vocab, mode, 64);
    const Batch batch = pad_batch(lin);
    const auto r = grad_check([&] { return loss(batch, p, c); }, p.entries());
    report("grad-check " + to_string(mode), r.passed(),
           "max rel err " + fmt("%.2e", r.max_rel_err));
  }

  // Metric oracles.
  const std::vector<Tokens> h{{"the", "cat", "sat"}, {"a", "dog", "ran", "off"}};
  report("bleu identity", bleu(h, h) == 1.0, "");
  const double b = bleu({{"the", "cat", "sat"}}, {{"the", "cat", "sat", "down"}});
  report("bleu brevity", std::abs(b - std::exp(-1.0 / 3.0)) < 1e-12, fmt("%.6f", b));
  const auto d1 = dist_n({{"a", "a", "a"}}, 1);
  report("dist-1", d1 && std::abs(*d1 - 1.0 / 3.0) < 1e-12, "");
  {
    const Tensor logits = Tensor::zeros({1, 4});
    const std::vector<int> target{2};
    const std::vector<std::uint8_t> mask{1};
    const double ce = cross_entropy(logits, target, mask, Reduction::mean).item();
    report("uniform cross-entropy", std::abs(ce - std::log(4.0)) < 1e-12, fmt("%.6f", ce));
  }

  // Statistics oracles.
  const auto z = two_proportion_z_test(40, 100, 20, 100);
  const auto zr = two_proportion_z_test(20, 100, 40, 100);
  report("z-test antisymmetry", z.z == -zr.z && z.p == zr.p, fmt("z %.4f", z.z));
  const auto t0 = paired_t_test({1, 2, 3}, {1, 2, 3});
  report("t-test zero differences", t0 && t0->t == 0.0 && t0->p == 1.0, "");
  const auto t1 = paired_t_test({1, 0, 1, 0, 1}, {0, 0, 0, 0, 0});
  report("t-test hand value",
         t1 && std::abs(t1->t - std::sqrt(6.0)) < 1e-12,
         t1 ? fmt("t %.6f", t1->t) : "");

  std::cout << (failures ? "selftest failed\n" : "selftest passed\n");
  return failures ? 1 : 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Emotion-conditioned dialogue modelling: data, training, generation, "
               "evaluation and analysis."};
  app.name("affdec");
  app.require_subcommand(1);
  app.fallthrough(false);

  Settings settings;
  Overrides ov;
  std::string config_path;
  std::vector<CLI::Option*> seed_opts;
  auto seed_holder = std::make_shared<std::uint64_t>(0);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON config file (sections: seed, model, train, decode, vocab); "
                    "flags override it");
    seed_opts.push_back(sub->add_option("--seed", *seed_holder, "random seed")
                            ->default_str("0"));
  };
  auto model_flags = [&](CLI::App* sub) {
    auto& m = settings.model;
    ov.add_parsed(sub, "--mode", [&m](const std::string& v) { m.mode = parse_mode(v); },
                  to_string(m.mode), "baseline|prepend|ad|ad_de|mtl|adm");
    ov.add(sub, "--n-layers", m.n_layers, "transformer blocks");
    ov.add(sub, "--n-heads", m.n_heads, "attention heads");
    ov.add(sub, "--d-model", m.d_model, "model width");
    ov.add(sub, "--d-ff", m.d_ff, "feed-forward width");
    ov.add(sub, "--max-seq-len", m.max_seq_len, "context length in tokens");
    ov.add(sub, "--d-emotion", m.d_emotion, "emotion embedding width");
    ov.add(sub, "--mtl-weight", m.mtl_weight, "weight of the emotion classification loss");
    ov.add(sub, "--dropout", m.dropout_p, "dropout probability");
    ov.add_flag(sub, "--tie-embeddings", m.tie_embeddings,
                "share the output projection with the token embeddings");
  };
  auto train_flags = [&](CLI::App* sub) {
    auto& t = settings.train;
    ov.add(sub, "--lr", t.lr, "Adam learning rate");
    ov.add(sub, "--batch-size", t.batch_size, "sessions per batch");
    ov.add(sub, "--max-steps", t.max_steps, "optimizer steps");
    ov.add(sub, "--eval-every", t.eval_every, "steps between validation runs");
    ov.add(sub, "--patience", t.patience, "evaluations without improvement before stopping");
    ov.add(sub, "--grad-clip", t.grad_clip_norm, "global gradient norm bound");
    ov.add_parsed(sub, "--loss-on", [&t](const std::string& v) { t.loss_on = parse_loss_on(v); },
                  to_string(t.loss_on), "all|listener: which turns the LM loss covers");
    ov.add(sub, "--max-vocab", settings.vocab.max_size, "vocabulary size incl. specials (0 = all)");
    ov.add(sub, "--min-freq", settings.vocab.min_freq, "minimum word count for the vocabulary");
  };
  auto decode_flags = [&](CLI::App* sub) {
    auto& d = settings.decode;
    ov.add_parsed(sub, "--strategy", [&d](const std::string& v) { d.strategy = parse_strategy(v); },
                  to_string(d.strategy), "greedy|top_k|temperature");
    ov.add(sub, "--k", d.k, "candidates kept by top_k");
    ov.add(sub, "--temperature", d.temperature, "softmax temperature");
    ov.add(sub, "--max-new-tokens", d.max_new_tokens, "length limit per utterance");
  };

  std::function<int()> run;

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "convert, generate or validate corpora");
  c_ingest->add_option("--from-empdial-csv", ingest.empdial_csv,
                       "EmpatheticDialogues CSV file, or a directory with train/valid/test.csv");
  c_ingest->add_flag("--synthetic", ingest.synthetic, "write the synthetic marker corpus");
  c_ingest->add_option("--input", ingest.input, "JSONL corpus to validate (and rewrite to --output)");
  c_ingest->add_option("--output", ingest.output, "output directory (or file with --input)");
  c_ingest->add_option("--n-emotions", ingest.n_emotions, "synthetic: labels used")
      ->capture_default_str();
  c_ingest->add_option("--per-emotion", ingest.per_emotion, "synthetic: training sessions per label")
      ->capture_default_str();
  c_ingest->add_option("--valid-per-emotion", ingest.valid_per_emotion,
                       "synthetic: validation sessions per label")->capture_default_str();
  c_ingest->add_option("--test-per-emotion", ingest.test_per_emotion,
                       "synthetic: test sessions per label")->capture_default_str();
  c_ingest->add_option("--vectors-out", ingest.vectors_out,
                       "synthetic: also write random word vectors for the metric tools");
  c_ingest->add_option("--vector-dim", ingest.vector_dim, "synthetic: word vector size")
      ->capture_default_str();
  c_ingest->add_flag("--drop-trailing-speaker", ingest.drop_trailing_speaker,
                     "drop sessions that end on a speaker turn");
  common(c_ingest);
  c_ingest->callback([&] { run = [&] { return run_ingest(ingest, settings); }; });

  std::vector<std::string> stats_files;
  bool stats_json = false;
  auto* c_stats = app.add_subcommand("stats", "session, turn, token and label counts");
  c_stats->add_option("files", stats_files, "JSONL corpus files")->required();
  c_stats->add_flag("--json", stats_json, "print JSON instead of text");
  common(c_stats);
  c_stats->callback([&] { run = [&] { return run_stats(stats_files, stats_json); }; });

  TrainArgs targs;
  auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
  c_train->add_option("--train", targs.train_file, "training JSONL")->required();
  c_train->add_option("--valid", targs.valid_file, "validation JSONL")->required();
  c_train->add_option("--output", targs.output, "checkpoint path")->required();
  c_train->add_option("--history", targs.history,
                      "history CSV (default <output>.history.csv)");
  c_train->add_flag("--drop-trailing-speaker", targs.drop_trailing_speaker,
                    "drop sessions that end on a speaker turn");
  c_train->add_flag("--quiet", targs.quiet, "no progress output");
  model_flags(c_train);
  train_flags(c_train);
  common(c_train);
  c_train->callback([&] { run = [&] { return run_train(targs, settings); }; });

  RespondArgs rargs;
  auto* c_respond = app.add_subcommand("respond", "one listener response per context");
  c_respond->add_option("--checkpoint", rargs.checkpoint, "model checkpoint")->required();
  c_respond->add_option("--input", rargs.input, "contexts JSONL")->required();
  c_respond->add_option("--output", rargs.output, "responses, one per line")->required();
  c_respond->add_option("--refs-out", rargs.refs_out,
                        "write each context's final listener turn (the reference)");
  decode_flags(c_respond);
  common(c_respond);
  c_respond->callback([&] { run = [&] { return run_respond(rargs, settings); }; });

  GenerateArgs gargs;
  auto* c_generate = app.add_subcommand("generate", "generate a dialogue from a prompt");
  c_generate->add_option("--checkpoint", gargs.checkpoint, "model checkpoint")->required();
  c_generate->add_option("--emotion", gargs.emotion, "emotion label")->required();
  c_generate->add_option("--prompt", gargs.prompt, "opening words of the speaker")->required();
  c_generate->add_option("--turns", gargs.turns, "number of turns")->capture_default_str();
  c_generate->add_flag("--json", gargs.as_json, "print the session as a JSONL line");
  decode_flags(c_generate);
  common(c_generate);
  c_generate->callback([&] { run = [&] { return run_generate(gargs, settings); }; });

  std::string chat_ckpt, chat_emotion;
  auto* c_chat = app.add_subcommand("chat", "interactive chat on standard input");
  c_chat->add_option("--checkpoint", chat_ckpt, "model checkpoint")->required();
  c_chat->add_option("--emotion", chat_emotion, "initial emotion label")->required();
  decode_flags(c_chat);
  common(c_chat);
  c_chat->callback([&] { run = [&] { return run_chat(chat_ckpt, chat_emotion, settings); }; });

  EvaluateArgs eargs;
  auto* c_eval = app.add_subcommand("evaluate", "BLEU, BOW similarities, DIST-n and PPL as JSON");
  c_eval->add_option("--hyps", eargs.hyps, "responses, one per line")->required();
  c_eval->add_option("--refs", eargs.refs, "references, one per line")->required();
  c_eval->add_option("--vectors", eargs.vectors, "word vector text file")->required();
  c_eval->add_option("--checkpoint", eargs.checkpoint, "also report listener perplexity");
  c_eval->add_option("--data", eargs.data, "JSONL sessions for perplexity");
  c_eval->add_option("--output", eargs.output, "write the JSON here instead of stdout");
  c_eval->add_option("--bleu-smoothing", eargs.smoothing, "none|add1")->capture_default_str();
  c_eval->add_option("--bow-greedy-direction", eargs.greedy, "both|hyp2ref")
      ->capture_default_str();
  common(c_eval);
  c_eval->callback([&] { run = [&] { return run_evaluate(eargs); }; });

  EvalStatsArgs sargs;
  auto* c_es = app.add_subcommand("eval-stats", "preference matrix and Likert summary");
  c_es->add_option("--judgments", sargs.judgments, "CSV item,system_a,system_b,verdict");
  c_es->add_option("--ratings", sargs.ratings, "CSV item,system,empathy,relevance,fluency");
  c_es->add_option("--json-out", sargs.json_out, "write the JSON report here");
  c_es->add_option("--alpha", sargs.alpha, "significance level")->capture_default_str();
  common(c_es);
  c_es->callback([&] { run = [&] { return run_eval_stats(sargs); }; });

  NeighborsArgs nargs;
  auto* c_nn = app.add_subcommand("neighbors", "words an emotion embedding boosts most");
  c_nn->add_option("--checkpoint", nargs.checkpoint, "model checkpoint")->required();
  c_nn->add_option("--emotion", nargs.emotion, "emotion label, or all")->required();
  c_nn->add_option("--role", nargs.role, "S|L|unified (default from the model mode)");
  c_nn->add_option("--k", nargs.k, "list length")->capture_default_str();
  c_nn->add_option("--metric", nargs.metric, "offset|cosine")->capture_default_str();
  c_nn->add_flag("--divergence", nargs.divergence,
                 "also print 1 - cos between speaker and listener offsets");
  common(c_nn);
  c_nn->callback([&] { run = [&] { return run_neighbors(nargs); }; });

  auto* c_self = app.add_subcommand("selftest", "gradient checks and metric oracles");
  common(c_self);
  c_self->callback([&] { run = [&] { return run_selftest(settings.seed); }; });

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "affdec: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!config_path.empty()) load_config_file(config_path, settings);
    for (auto* o : seed_opts)
      if (o->count()) settings.seed = *seed_holder;
    ov.apply();
    return run ? run() : 2;
  } catch (const UsageError& e) {
    std::cerr << "affdec: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "affdec: error: " << one_line(e.what()) << '\n';
    return 1;
  }
}

}  // namespace affdec
