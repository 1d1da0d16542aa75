// Copyright 2026 The Storygen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "storygen/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storygen/error.hpp"

namespace storygen {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got \"" + v +
                      "\"");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t idx = 0;
    double out = std::stod(v, &idx);
    if (idx != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got \"" + v + "\"");
}

std::string format_double(double v) { return nlohmann::json(v).dump(); }

struct KeyEntry {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"paths.kg",
       [](PipelineConfig& c, const std::string& v) { c.kg_path = v; },
       [](const PipelineConfig& c) { return c.kg_path; }},
      {"paths.lexicon",
       [](PipelineConfig& c, const std::string& v) { c.lexicon_path = v; },
       [](const PipelineConfig& c) { return c.lexicon_path; }},
      {"paths.lm",
       [](PipelineConfig& c, const std::string& v) { c.lm_path = v; },
       [](const PipelineConfig& c) { return c.lm_path; }},
      {"paths.term_model",
       [](PipelineConfig& c, const std::string& v) { c.term_model_path = v; },
       [](const PipelineConfig& c) { return c.term_model_path; }},
      {"paths.story_model",
       [](PipelineConfig& c, const std::string& v) { c.story_model_path = v; },
       [](const PipelineConfig& c) { return c.story_model_path; }},
      {"paths.features",
       [](PipelineConfig& c, const std::string& v) { c.features_path = v; },
       [](const PipelineConfig& c) { return c.features_path; }},
      {"model.d_model",
       [](PipelineConfig& c, const std::string& v) {
         c.model.d_model = parse_int("model.d_model", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.d_model); }},
      {"model.heads",
       [](PipelineConfig& c, const std::string& v) {
         c.model.heads = parse_int("model.heads", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.heads); }},
      {"model.layers",
       [](PipelineConfig& c, const std::string& v) {
         c.model.layers = parse_int("model.layers", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.layers); }},
      {"model.d_in",
       [](PipelineConfig& c, const std::string& v) {
         c.model.d_in = parse_int("model.d_in", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.d_in); }},
      {"model.top_k",
       [](PipelineConfig& c, const std::string& v) {
         c.model.top_k = parse_int("model.top_k", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.top_k); }},
      {"model.learning_rate",
       [](PipelineConfig& c, const std::string& v) {
         c.model.learning_rate = parse_double("model.learning_rate", v);
       },
       [](const PipelineConfig& c) {
         return format_double(c.model.learning_rate);
       }},
      {"model.max_len",
       [](PipelineConfig& c, const std::string& v) {
         c.model.max_len = parse_int("model.max_len", v);
       },
       [](const PipelineConfig& c) { return std::to_string(c.model.max_len); }},
      {"decode.beam_width",
       [](PipelineConfig& c, const std::string& v) {
         c.decode.beam_width = parse_int("decode.beam_width", v);
       },
       [](const PipelineConfig& c) {
         return std::to_string(c.decode.beam_width);
       }},
      {"decode.alpha",
       [](PipelineConfig& c, const std::string& v) {
         c.decode.alpha = parse_double("decode.alpha", v);
       },
       [](const PipelineConfig& c) { return format_double(c.decode.alpha); }},
      {"decode.gamma",
       [](PipelineConfig& c, const std::string& v) {
         c.decode.gamma = parse_double("decode.gamma", v);
       },
       [](const PipelineConfig& c) { return format_double(c.decode.gamma); }},
      {"decode.term_penalty",
       [](PipelineConfig& c, const std::string& v) {
         c.decode.term_penalty = parse_double("decode.term_penalty", v);
       },
       [](const PipelineConfig& c) {
         return format_double(c.decode.term_penalty);
       }},
      {"decode.max_len",
       [](PipelineConfig& c, const std::string& v) {
         c.decode.max_len = parse_int("decode.max_len", v);
       },
       [](const PipelineConfig& c) {
         return std::to_string(c.decode.max_len);
       }},
      {"enrich.allow_two_hop",
       [](PipelineConfig& c, const std::string& v) {
         c.enrich.allow_two_hop = parse_bool("enrich.allow_two_hop", v);
       },
       [](const PipelineConfig& c) {
         return c.enrich.allow_two_hop ? std::string("true")
                                       : std::string("false");
       }},
      {"enrich.max_insertions",
       [](PipelineConfig& c, const std::string& v) {
         c.enrich.max_insertions = parse_int("enrich.max_insertions", v);
       },
       [](const PipelineConfig& c) {
         return std::to_string(c.enrich.max_insertions);
       }},
      {"seed",
       [](PipelineConfig& c, const std::string& v) {
         c.seed = parse_u64("seed", v);
         c.model.seed = c.seed;
       },
       [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      {"pipeline.story_id",
       [](PipelineConfig& c, const std::string& v) { c.story_id = v; },
       [](const PipelineConfig& c) { return c.story_id; }},
  };
  return table;
}

std::string env_name(const std::string& key) {
  std::string out = "STORYGEN_";
  for (char ch : key) {
    if (ch == '.' || ch == '-') {
      out += '_';
    } else {
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
  }
  return out;
}

void require_present(const std::string& path, const std::string& key) {
  if (path.empty()) {
    throw ConfigError(key + " is required for this command");
  }
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + key + ": " + path);
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  }
}

nlohmann::json parse_line(const std::string& line, const char* what,
                          int line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string(what) + " line " + std::to_string(line_no) +
                    ": " + e.what());
  }
}

std::vector<ObjectFeature> parse_objects(const nlohmann::json& arr,
                                         const char* what, int line_no) {
  std::vector<ObjectFeature> out;
  for (const auto& jo : arr) {
    ObjectFeature f;
    if (!jo.contains("confidence") || !jo.contains("feature")) {
      throw DataError(std::string(what) + " line " + std::to_string(line_no) +
                      ": object needs confidence and feature");
    }
    f.confidence = jo["confidence"].get<double>();
    const auto& vec = jo["feature"];
    f.vector.resize(static_cast<Eigen::Index>(vec.size()));
    Eigen::Index k = 0;
    for (const auto& v : vec) f.vector(k++) = v.get<double>();
    out.push_back(std::move(f));
  }
  return out;
}

// Splits a JSONL blob into parsed objects.
nlohmann::json parse_trace(const std::string& blob) {
  nlohmann::json arr = nlohmann::json::array();
  std::istringstream in(blob);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    arr.push_back(nlohmann::json::parse(line));
  }
  return arr;
}

}  // namespace

void PipelineConfig::validate() const {
  model.validate();
  decode.validate();
  enrich.validate();
  if (story_id.empty()) throw ConfigError("pipeline.story_id must be nonempty");
}

PipelineConfig load_pipeline_config(std::istream& in) {
  PipelineConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    bool known = false;
    for (const auto& entry : key_table()) {
      if (key == entry.key) {
        entry.set(config, value);
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key \"" + key + "\"");
    }
  }
  apply_env_overrides(config);
  config.validate();
  return config;
}

PipelineConfig load_pipeline_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  return load_pipeline_config(in);
}

void apply_env_overrides(PipelineConfig& config) {
  for (const auto& entry : key_table()) {
    const char* value = std::getenv(env_name(entry.key).c_str());
    if (value) entry.set(config, value);
  }
}

std::string dump_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& entry : key_table()) {
    out += entry.key;
    out += " = ";
    out += entry.get(config);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus and artifact files.

std::vector<TermExample> load_term_corpus(std::istream& in) {
  std::vector<TermExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, "term corpus", line_no);
    if (!j.contains("images") || !j.contains("terms")) {
      throw DataError("term corpus line " + std::to_string(line_no) +
                      ": expected {\"images\", \"terms\"}");
    }
    TermExample ex;
    for (const auto& img : j["images"]) {
      ex.images.push_back(parse_objects(img, "term corpus", line_no));
    }
    for (const auto& terms : j["terms"]) {
      std::vector<std::string> toks;
      for (const auto& t : terms) {
        std::string tok = t.get<std::string>();
        try {
          parse_term(tok);
        } catch (const DataError& e) {
          throw DataError("term corpus line " + std::to_string(line_no) +
                          ": " + e.what());
        }
        toks.push_back(std::move(tok));
      }
      ex.image_terms.push_back(std::move(toks));
    }
    if (ex.images.empty() || ex.images.size() > 5 ||
        ex.images.size() != ex.image_terms.size()) {
      throw DataError("term corpus line " + std::to_string(line_no) +
                      ": needs 1..5 images, one term list each");
    }
    for (std::size_t i = 0; i < ex.images.size(); ++i) {
      if (ex.images[i].empty()) {
        throw DataError("term corpus line " + std::to_string(line_no) +
                        ": image " + std::to_string(i) + " has no objects");
      }
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("term corpus is empty");
  return out;
}

std::vector<TermExample> load_term_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open term corpus: " + path);
  return load_term_corpus(in);
}

std::vector<StoryExample> load_story_corpus(std::istream& in) {
  std::vector<StoryExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, "story corpus", line_no);
    if (!j.contains("path") || !j.contains("story")) {
      throw DataError("story corpus line " + std::to_string(line_no) +
                      ": expected {\"path\", \"story\"}");
    }
    StoryExample ex;
    for (const auto& t : j["path"]) ex.path_tokens.push_back(t.get<std::string>());
    for (const auto& t : j["story"]) ex.story_tokens.push_back(t.get<std::string>());
    if (ex.path_tokens.empty() || ex.story_tokens.empty()) {
      throw DataError("story corpus line " + std::to_string(line_no) +
                      ": path and story must be nonempty");
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("story corpus is empty");
  return out;
}

std::vector<StoryExample> load_story_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open story corpus: " + path);
  return load_story_corpus(in);
}

std::vector<std::vector<std::string>> load_token_lines(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  if (out.empty()) throw DataError("token corpus is empty");
  return out;
}

std::vector<std::vector<std::string>> load_token_lines_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token corpus: " + path);
  return load_token_lines(in);
}

std::vector<TermSet> load_term_sets(std::istream& in) {
  std::vector<TermSet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, "term sets", line_no);
    if (!j.contains("image_index") || !j.contains("terms")) {
      throw DataError("term sets line " + std::to_string(line_no) +
                      ": expected {\"image_index\", \"terms\"}");
    }
    TermSet ts;
    ts.image_index = j["image_index"].get<int>();
    for (const auto& t : j["terms"]) {
      try {
        ts.add(parse_term(t.get<std::string>()));
      } catch (const DataError& e) {
        throw DataError("term sets line " + std::to_string(line_no) + ": " +
                        e.what());
      }
    }
    out.push_back(std::move(ts));
  }
  return out;
}

std::vector<TermSet> load_term_sets_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open term sets: " + path);
  return load_term_sets(in);
}

void save_term_sets(const std::vector<TermSet>& sets, std::ostream& out) {
  for (const auto& ts : sets) {
    nlohmann::json j;
    j["image_index"] = ts.image_index;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : ts.terms) terms.push_back(t.render());
    j["terms"] = std::move(terms);
    out << j.dump() << "\n";
  }
}

void save_path(const EnrichedPath& path, std::ostream& out) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["insertion_count"] = path.insertion_count;
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : path.segments) {
    nlohmann::json js;
    js["origin"] = seg.origin == OriginKind::IMAGE ? "image" : "inserted";
    js["index"] = seg.index;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : seg.terms) terms.push_back(t.render());
    js["terms"] = std::move(terms);
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  out << j.dump() << "\n";
}

EnrichedPath load_path(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("path parse failure: ") + e.what());
  }
  if (j.value("format_version", -1) != 1) {
    throw DataError("path: unsupported format_version");
  }
  EnrichedPath path;
  path.insertion_count = j.at("insertion_count").get<int>();
  for (const auto& js : j.at("segments")) {
    PathSegment seg;
    std::string origin = js.at("origin").get<std::string>();
    if (origin == "image") {
      seg.origin = OriginKind::IMAGE;
    } else if (origin == "inserted") {
      seg.origin = OriginKind::INSERTED;
    } else {
      throw DataError("path: unknown segment origin \"" + origin + "\"");
    }
    seg.index = js.at("index").get<int>();
    for (const auto& t : js.at("terms")) {
      seg.terms.push_back(parse_term(t.get<std::string>()));
    }
    path.segments.push_back(std::move(seg));
  }
  return path;
}

EnrichedPath load_path_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open path file: " + path);
  return load_path(in);
}

// ---------------------------------------------------------------------------
// Stages.

DecodeConfig resolve_token_ids(DecodeConfig base, const Vocab& vocab) {
  auto find = [&vocab](const char* tok) {
    auto it = vocab.token_to_id.find(tok);
    return it == vocab.token_to_id.end() ? -1 : it->second;
  };
  base.sentence_end_id = find(".");
  base.sep_id = find("<sep>");
  base.eos_id = Vocab::kEos;
  return base;
}

std::vector<TermSet> distill(TermModel& model,
                             const std::vector<ImageFeatures>& groups,
                             const DecodeConfig& config,
                             std::vector<std::string>* traces) {
  if (groups.size() != 5) {
    throw DataError("distill requires exactly 5 feature groups, got " +
                    std::to_string(groups.size()));
  }
  std::vector<const ImageFeatures*> by_order(5, nullptr);
  for (const auto& g : groups) {
    if (g.order < 1 || g.order > 5) {
      throw DataError("image order " + std::to_string(g.order) +
                      " outside [1,5]");
    }
    if (by_order[static_cast<std::size_t>(g.order - 1)]) {
      throw DataError("duplicate image order " + std::to_string(g.order));
    }
    by_order[static_cast<std::size_t>(g.order - 1)] = &g;
  }
  std::vector<std::vector<ObjectFeature>> images(5);
  for (int i = 0; i < 5; ++i) {
    if (!by_order[static_cast<std::size_t>(i)]) {
      throw DataError("missing image order " + std::to_string(i + 1));
    }
    if (by_order[static_cast<std::size_t>(i)]->objects.empty()) {
      throw DataError("image order " + std::to_string(i + 1) +
                      " has no objects");
    }
    images[static_cast<std::size_t>(i)] =
        by_order[static_cast<std::size_t>(i)]->objects;
  }

  DecodeConfig cfg = resolve_token_ids(config, model.vocab());
  int steps = std::min(cfg.max_len, model.config().max_len - 1);
  std::vector<TermSet> out;
  for (int img = 0; img < 5; ++img) {
    TermScorer scorer = [&model, &images, img](const std::vector<int>& prefix) {
      return model.next_token_logprobs(images, img, prefix);
    };
    std::ostringstream trace;
    DecodeResult res =
        beam_search_terms(scorer, cfg, steps, traces ? &trace : nullptr);
    TermSet ts;
    ts.image_index = img;
    for (int id : res.tokens) {
      if (id == Vocab::kUnk || id == Vocab::kBos || id == Vocab::kEos) continue;
      ts.add(parse_term(model.vocab().token(id)));
    }
    out.push_back(std::move(ts));
    if (traces) traces->push_back(trace.str());
  }
  return out;
}

Story generate(StoryModel& model, const EnrichedPath& path,
               const DecodeConfig& config, const std::string& story_id,
               std::string* trace, DecodeResult* result) {
  if (!model.trained()) {
    throw DataError("story model has not been trained");
  }
  std::vector<std::string> flat = flatten(path);
  if (flat.empty()) throw DataError("term path is empty");
  std::vector<int> src_ids;
  src_ids.reserve(flat.size());
  for (const auto& tok : flat) src_ids.push_back(model.vocab().id(tok));

  DecodeConfig cfg = resolve_token_ids(config, model.vocab());
  cfg.max_len = std::min(cfg.max_len, model.config().max_len - 1);
  int target_len = static_cast<int>(std::llround(
      static_cast<double>(path.segments.size()) * model.mean_sentence_len()));
  target_len = std::max(1, target_len);

  StoryScorer scorer = [&model, &src_ids](const std::vector<int>& prefix,
                                          int tlen) {
    return model.next_token_logprobs(src_ids, prefix, tlen);
  };
  std::ostringstream trace_stream;
  DecodeResult res = beam_search_story(scorer, cfg, target_len,
                                       trace ? &trace_stream : nullptr);
  if (trace) *trace = trace_stream.str();
  if (result) *result = res;

  Story story;
  story.id = story_id;
  std::vector<std::string> sentence;
  for (int id : res.tokens) {
    if (id == cfg.eos_id) break;
    sentence.push_back(model.vocab().token(id));
    if (id == cfg.sentence_end_id) {
      story.sentences.push_back(std::move(sentence));
      sentence.clear();
    }
  }
  if (!sentence.empty()) story.sentences.push_back(std::move(sentence));
  if (story.sentences.empty()) {
    throw DataError("decoder produced an empty story");
  }
  return story;
}

RunResult run(const PipelineConfig& config) {
  config.validate();
  require_present(config.term_model_path, "paths.term_model");
  require_present(config.story_model_path, "paths.story_model");
  require_present(config.lm_path, "paths.lm");
  require_present(config.features_path, "paths.features");
  if (!config.kg_path.empty()) require_present(config.kg_path, "paths.kg");
  if (!config.lexicon_path.empty()) {
    require_present(config.lexicon_path, "paths.lexicon");
  }

  Lexicon lexicon;
  bool have_lexicon = !config.lexicon_path.empty();
  KnowledgeGraph kg;
  std::vector<ImageFeatures> features;
  TermModel term_model = run_stage("load", [&] {
    if (have_lexicon) lexicon = load_lexicon_file(config.lexicon_path);
    if (!config.kg_path.empty()) kg = KnowledgeGraph::load_file(config.kg_path);
    features = load_features_file(config.features_path);
    return TermModel::load_file(config.term_model_path);
  });
  NGramModel lm = run_stage("load", [&] {
    return NGramModel::load_file(config.lm_path);
  });
  StoryModel story_model = run_stage("load", [&] {
    return StoryModel::load_file(config.story_model_path);
  });

  std::vector<std::string> distill_traces;
  std::vector<TermSet> term_sets = run_stage("distill", [&] {
    return distill(term_model, features, config.decode, &distill_traces);
  });

  std::vector<EnrichedPath> candidates;
  std::vector<double> perplexities;
  std::size_t selected = 0;
  run_stage("enrich", [&] {
    candidates = build_candidates(term_sets, kg, config.enrich,
                                  have_lexicon ? &lexicon : nullptr);
    perplexities = score_candidates(candidates, lm);
    selected = select_path_index(candidates, lm);
    return 0;
  });

  std::string story_trace;
  Story story = run_stage("generate", [&] {
    return generate(story_model, candidates[selected], config.decode,
                    config.story_id, &story_trace, nullptr);
  });

  nlohmann::json bundle;
  bundle["format_version"] = 1;
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& ts : term_sets) {
    nlohmann::json js;
    js["image_index"] = ts.image_index;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : ts.terms) terms.push_back(t.render());
    js["terms"] = std::move(terms);
    sets.push_back(std::move(js));
  }
  bundle["term_sets"] = std::move(sets);
  bundle["enrichment"] = nlohmann::json::parse(
      selection_report(candidates, perplexities, selected));
  nlohmann::json trace;
  nlohmann::json distill_arr = nlohmann::json::array();
  for (const auto& blob : distill_traces) distill_arr.push_back(parse_trace(blob));
  trace["distill"] = std::move(distill_arr);
  trace["story"] = parse_trace(story_trace);
  bundle["trace"] = std::move(trace);
  nlohmann::json jstory;
  jstory["id"] = story.id;
  jstory["sentences"] = story.sentences;
  bundle["story"] = std::move(jstory);

  RunResult result;
  result.story = std::move(story);
  result.bundle_json = bundle.dump();
  return result;
}

std::string report_json(const MetricReport& report) {
  nlohmann::json j;
  j["format_version"] = 1;
  nlohmann::json corpus;
  corpus["bleu_1"] = report.bleu_1;
  corpus["bleu_2"] = report.bleu_2;
  corpus["bleu_3"] = report.bleu_3;
  corpus["bleu_4"] = report.bleu_4;
  corpus["rouge_l"] = report.rouge_l;
  corpus["distinct_1"] = report.distinct_1;
  corpus["distinct_2"] = report.distinct_2;
  j["corpus"] = std::move(corpus);
  nlohmann::json stories = nlohmann::json::array();
  for (const auto& s : report.per_story) {
    nlohmann::json js;
    js["id"] = s.id;
    js["bleu_1"] = s.bleu_1;
    js["bleu_2"] = s.bleu_2;
    js["bleu_3"] = s.bleu_3;
    js["bleu_4"] = s.bleu_4;
    js["rouge_l"] = s.rouge_l;
    js["distinct_1"] = s.distinct_1;
    js["distinct_2"] = s.distinct_2;
    stories.push_back(std::move(js));
  }
  j["stories"] = std::move(stories);
  return j.dump();
}

}  // namespace storygen
