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
//
// Command line front end. Exit codes: 0 success, 2 configuration error,
// 3 data error, 4 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "storygen/decode.hpp"
#include "storygen/enrich.hpp"
#include "storygen/error.hpp"
#include "storygen/kg.hpp"
#include "storygen/lm.hpp"
#include "storygen/metrics.hpp"
#include "storygen/neural.hpp"
#include "storygen/pipeline.hpp"
#include "storygen/terms.hpp"

namespace {

storygen::PipelineConfig load_config_or_default(const std::string& path) {
  if (path.empty()) {
    storygen::PipelineConfig config;
    storygen::apply_env_overrides(config);
    config.validate();
    return config;
  }
  return storygen::load_pipeline_config_file(path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw storygen::DataError("cannot write " + path);
  return out;
}

void print_story(const storygen::Story& story) {
  for (const auto& sentence : story.sentences) {
    std::string line;
    for (const auto& tok : sentence) {
      if (!line.empty()) line += ' ';
      line += tok;
    }
    std::cout << line << "\n";
  }
}

// Deterministic micro-fixtures for the gradient checker.
std::vector<storygen::TermExample> term_fixture(const storygen::ModelConfig& cfg) {
  storygen::ad::Rng rng(11);
  auto object = [&](int order) {
    storygen::ObjectFeature f;
    f.vector.resize(cfg.d_in);
    for (Eigen::Index i = 0; i < f.vector.size(); ++i) {
      f.vector(i) = rng.uniform(-1.0, 1.0);
    }
    f.confidence = rng.uniform();
    f.image_order = order;
    return f;
  };
  std::vector<storygen::TermExample> corpus(2);
  corpus[0].images = {{object(1), object(1)}, {object(2)}};
  corpus[0].image_terms = {{"dog_NOUN"}, {"park_NOUN", "Motion_FRAME"}};
  corpus[1].images = {{object(1), object(1), object(1)}};
  corpus[1].image_terms = {{"cat_NOUN"}};
  return corpus;
}

std::vector<storygen::StoryExample> story_fixture() {
  std::vector<storygen::StoryExample> corpus(2);
  corpus[0].path_tokens = {"dog_NOUN", "<sep>", "park_NOUN"};
  corpus[0].story_tokens = {"the", "dog", "ran", ".", "it", "was", "fun", "."};
  corpus[1].path_tokens = {"cat_NOUN"};
  corpus[1].story_tokens = {"a", "cat", "slept", "."};
  return corpus;
}

void register_commands(CLI::App& app) {
  // ---- ingest-kg -----------------------------------------------------
  {
    struct Opts {
      std::vector<std::string> inputs;
      std::string source = "other";
      std::string out;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "ingest-kg", "Build a knowledge graph from tuple TSV files");
    cmd->add_option("--in", opts->inputs, "TSV file: head<TAB>rela<TAB>tail")
        ->required();
    cmd->add_option("--source", opts->source,
                    "Tuple source label: visual_genome|openie|other");
    cmd->add_option("--out", opts->out, "Graph JSON output")->required();
    cmd->callback([opts] {
      storygen::KnowledgeGraph kg;
      storygen::TupleSource source = storygen::parse_source(opts->source);
      std::size_t added = 0;
      for (const auto& path : opts->inputs) {
        added += kg.ingest_file(path, source);
      }
      kg.save_file(opts->out);
      std::cout << "ingested " << added << " unique tuples ("
                << kg.tuple_count() << " total) -> " << opts->out << "\n";
    });
  }

  // ---- train-lm ------------------------------------------------------
  {
    struct Opts {
      std::vector<std::string> corpora;
      std::string out;
      int order = 3;
      double discount = 0.75;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "train-lm", "Train the n-gram language model on token lines");
    cmd->add_option("--corpus", opts->corpora, "Token-line corpus file")
        ->required();
    cmd->add_option("--out", opts->out, "Model JSON output")->required();
    cmd->add_option("--order", opts->order, "n-gram order (default 3)");
    cmd->add_option("--discount", opts->discount,
                    "Absolute discount in (0,1) (default 0.75)");
    cmd->callback([opts] {
      std::vector<std::vector<std::string>> sequences;
      for (const auto& path : opts->corpora) {
        auto part = storygen::load_token_lines_file(path);
        sequences.insert(sequences.end(), part.begin(), part.end());
      }
      storygen::NGramModel lm =
          storygen::NGramModel::train(sequences, opts->order, opts->discount);
      lm.save_file(opts->out);
      std::cout << "trained " << opts->order << "-gram model on "
                << sequences.size() << " sequences, vocab "
                << lm.vocab_size() << " -> " << opts->out << "\n";
    });
  }

  // ---- train-term-model ------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::vector<std::string> corpora;
      std::string out;
      int epochs = 50;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "train-term-model", "Train the image-to-term model");
    cmd->add_option("--config", opts->config, "Pipeline config file");
    cmd->add_option("--corpus", opts->corpora, "Term corpus JSONL")->required();
    cmd->add_option("--out", opts->out, "Checkpoint output")->required();
    cmd->add_option("--epochs", opts->epochs, "Training epochs (default 50)");
    cmd->callback([opts] {
      auto config = load_config_or_default(opts->config);
      std::vector<storygen::TermExample> corpus;
      for (const auto& path : opts->corpora) {
        auto part = storygen::load_term_corpus_file(path);
        corpus.insert(corpus.end(), part.begin(), part.end());
      }
      storygen::TermModel model =
          storygen::TermModel::create(config.model, corpus);
      std::vector<double> losses = model.fit(corpus, opts->epochs);
      model.save_file(opts->out);
      for (std::size_t i = 0; i < losses.size(); ++i) {
        std::cout << "epoch " << (i + 1) << " loss " << losses[i] << "\n";
      }
      std::cout << "saved term model -> " << opts->out << "\n";
    });
  }

  // ---- train-generator -------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::vector<std::string> corpora;
      std::string out;
      int epochs = 50;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "train-generator", "Train the path-to-story model");
    cmd->add_option("--config", opts->config, "Pipeline config file");
    cmd->add_option("--corpus", opts->corpora,
                    "Story corpus JSONL (repeatable; corpora concatenate)")
        ->required();
    cmd->add_option("--out", opts->out, "Checkpoint output")->required();
    cmd->add_option("--epochs", opts->epochs, "Training epochs (default 50)");
    cmd->callback([opts] {
      auto config = load_config_or_default(opts->config);
      std::vector<storygen::StoryExample> corpus;
      for (const auto& path : opts->corpora) {
        auto part = storygen::load_story_corpus_file(path);
        corpus.insert(corpus.end(), part.begin(), part.end());
      }
      storygen::StoryModel model =
          storygen::StoryModel::create(config.model, corpus);
      std::vector<double> losses = model.fit(corpus, opts->epochs);
      model.save_file(opts->out);
      for (std::size_t i = 0; i < losses.size(); ++i) {
        std::cout << "epoch " << (i + 1) << " loss " << losses[i] << "\n";
      }
      std::cout << "saved story model -> " << opts->out << "\n";
    });
  }

  // ---- distill ---------------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::string features;
      std::string model;
      std::string out;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "distill", "Decode per-image term sets from object features");
    cmd->add_option("--config", opts->config, "Pipeline config file");
    cmd->add_option("--features", opts->features,
                    "Features JSONL (default: paths.features)");
    cmd->add_option("--model", opts->model,
                    "Term model checkpoint (default: paths.term_model)");
    cmd->add_option("--out", opts->out, "Term set JSONL output")->required();
    cmd->callback([opts] {
      auto config = load_config_or_default(opts->config);
      if (!opts->features.empty()) config.features_path = opts->features;
      if (!opts->model.empty()) config.term_model_path = opts->model;
      if (config.features_path.empty() || config.term_model_path.empty()) {
        throw storygen::ConfigError(
            "distill needs paths.features and paths.term_model");
      }
      storygen::TermModel model =
          storygen::TermModel::load_file(config.term_model_path);
      auto groups = storygen::load_features_file(config.features_path);
      auto term_sets = storygen::distill(model, groups, config.decode);
      auto out = open_out(opts->out);
      storygen::save_term_sets(term_sets, out);
      std::cout << "wrote " << term_sets.size() << " term sets -> "
                << opts->out << "\n";
    });
  }

  // ---- enrich ----------------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::string term_sets;
      std::string kg;
      std::string lm;
      std::string lexicon;
      std::string out;
      std::string report;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "enrich", "Insert knowledge-graph segments and pick the best path");
    cmd->add_option("--config", opts->config, "Pipeline config file");
    cmd->add_option("--term-sets", opts->term_sets, "Term set JSONL input")
        ->required();
    cmd->add_option("--kg", opts->kg, "Graph JSON (default: paths.kg)");
    cmd->add_option("--lm", opts->lm, "LM JSON (default: paths.lm)");
    cmd->add_option("--lexicon", opts->lexicon,
                    "Lexicon TSV (default: paths.lexicon)");
    cmd->add_option("--out", opts->out, "Selected path JSON output")
        ->required();
    cmd->add_option("--report", opts->report,
                    "Candidate report JSON output (optional)");
    cmd->callback([opts] {
      auto config = load_config_or_default(opts->config);
      if (!opts->kg.empty()) config.kg_path = opts->kg;
      if (!opts->lm.empty()) config.lm_path = opts->lm;
      if (!opts->lexicon.empty()) config.lexicon_path = opts->lexicon;
      if (config.lm_path.empty()) {
        throw storygen::ConfigError("enrich needs paths.lm");
      }
      auto term_sets = storygen::load_term_sets_file(opts->term_sets);
      storygen::KnowledgeGraph kg;
      if (!config.kg_path.empty()) {
        kg = storygen::KnowledgeGraph::load_file(config.kg_path);
      }
      storygen::NGramModel lm = storygen::NGramModel::load_file(config.lm_path);
      storygen::Lexicon lexicon;
      bool have_lexicon = !config.lexicon_path.empty();
      if (have_lexicon) {
        lexicon = storygen::load_lexicon_file(config.lexicon_path);
      }
      auto candidates = storygen::build_candidates(
          term_sets, kg, config.enrich, have_lexicon ? &lexicon : nullptr);
      auto perplexities = storygen::score_candidates(candidates, lm);
      std::size_t selected = storygen::select_path_index(candidates, lm);
      auto out = open_out(opts->out);
      storygen::save_path(candidates[selected], out);
      if (!opts->report.empty()) {
        auto report = open_out(opts->report);
        report << storygen::selection_report(candidates, perplexities,
                                             selected)
               << "\n";
      }
      std::cout << "selected candidate " << selected << " of "
                << candidates.size() << " (perplexity "
                << perplexities[selected] << ", insertions "
                << candidates[selected].insertion_count << ") -> "
                << opts->out << "\n";
    });
  }

  // ---- generate ----------------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::string path;
      std::string model;
      std::string out;
      std::string trace;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "generate", "Decode a story from an enriched term path");
    cmd->add_option("--config", opts->config, "Pipeline config file");
    cmd->add_option("--path", opts->path, "Enriched path JSON input")
        ->required();
    cmd->add_option("--model", opts->model,
                    "Story model checkpoint (default: paths.story_model)");
    cmd->add_option("--out", opts->out, "Story JSONL output (optional)");
    cmd->add_option("--trace", opts->trace, "Decode trace JSONL (optional)");
    cmd->callback([opts] {
      auto config = load_config_or_default(opts->config);
      if (!opts->model.empty()) config.story_model_path = opts->model;
      if (config.story_model_path.empty()) {
        throw storygen::ConfigError("generate needs paths.story_model");
      }
      storygen::StoryModel model =
          storygen::StoryModel::load_file(config.story_model_path);
      storygen::EnrichedPath path = storygen::load_path_file(opts->path);
      std::string trace;
      storygen::Story story =
          storygen::generate(model, path, config.decode, config.story_id,
                             opts->trace.empty() ? nullptr : &trace);
      if (!opts->trace.empty()) {
        auto out = open_out(opts->trace);
        out << trace;
      }
      if (!opts->out.empty()) {
        auto out = open_out(opts->out);
        storygen::save_stories({story}, out);
      }
      print_story(story);
    });
  }

  // ---- run ---------------------------------------------------------------
  {
    struct Opts {
      std::string config;
      std::string audit;
      std::string out;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "run", "Full pipeline: distill, enrich, generate, audit");
    cmd->add_option("--config", opts->config, "Pipeline config file")
        ->required();
    cmd->add_option("--audit", opts->audit, "Audit bundle JSON output")
        ->required();
    cmd->add_option("--out", opts->out, "Story JSONL output (optional)");
    cmd->callback([opts] {
      auto config = storygen::load_pipeline_config_file(opts->config);
      storygen::RunResult result = storygen::run(config);
      auto audit = open_out(opts->audit);
      audit << result.bundle_json << "\n";
      if (!opts->out.empty()) {
        auto out = open_out(opts->out);
        storygen::save_stories({result.story}, out);
      }
      print_story(result.story);
    });
  }

  // ---- eval ----------------------------------------------------------------
  {
    struct Opts {
      std::string candidates;
      std::string references;
      std::string out;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "eval", "BLEU / ROUGE-L / distinct-n against reference stories");
    cmd->add_option("--candidates", opts->candidates, "Candidate story JSONL")
        ->required();
    cmd->add_option("--references", opts->references, "Reference story JSONL")
        ->required();
    cmd->add_option("--out", opts->out, "Report JSON output (optional)");
    cmd->callback([opts] {
      auto candidates = storygen::load_stories_file(opts->candidates);
      auto references = storygen::load_stories_file(opts->references);
      storygen::MetricReport report =
          storygen::evaluate(candidates, references);
      std::string json = storygen::report_json(report);
      if (!opts->out.empty()) {
        auto out = open_out(opts->out);
        out << json << "\n";
      }
      std::cout << json << "\n";
    });
  }

  // ---- grad-check ------------------------------------------------------------
  {
    struct Opts {
      std::string which = "all";
      double epsilon = 1e-5;
    };
    auto opts = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand(
        "grad-check", "Verify analytic gradients against finite differences");
    cmd->add_option("--which", opts->which, "all|linear|term|story");
    cmd->add_option("--epsilon", opts->epsilon,
                    "Central-difference step (default 1e-5)");
    cmd->callback([opts] {
      const double linear_threshold = 1e-7;
      const double model_threshold = 1e-4;
      bool failed = false;
      auto judge = [&](const char* name, double err, double threshold) {
        bool ok = err < threshold;
        std::cout << name << " max relative error " << err << " (threshold "
                  << threshold << "): " << (ok ? "ok" : "FAIL") << "\n";
        if (!ok) failed = true;
      };
      if (opts->which == "all" || opts->which == "linear") {
        judge("linear-softmax control",
              storygen::grad_check_linear_control(opts->epsilon),
              linear_threshold);
      }
      storygen::ModelConfig tiny;
      tiny.d_model = 8;
      tiny.heads = 2;
      tiny.layers = 1;
      tiny.d_in = 4;
      tiny.top_k = 2;
      tiny.max_len = 16;
      if (opts->which == "all" || opts->which == "term") {
        auto corpus = term_fixture(tiny);
        auto model = storygen::TermModel::create(tiny, corpus);
        judge("term model", model.grad_check(corpus, opts->epsilon),
              model_threshold);
      }
      if (opts->which == "all" || opts->which == "story") {
        auto corpus = story_fixture();
        auto model = storygen::StoryModel::create(tiny, corpus);
        judge("story model", model.grad_check(corpus, opts->epsilon),
              model_threshold);
      }
      if (opts->which != "all" && opts->which != "linear" &&
          opts->which != "term" && opts->which != "story") {
        throw storygen::ConfigError("unknown --which value: " + opts->which);
      }
      if (failed) {
        throw storygen::NumericError("gradient check over threshold");
      }
    });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"storygen: keyword distillation, knowledge-graph enrichment "
               "and length-aware story generation"};
  app.require_subcommand(1);
  register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const storygen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const storygen::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const storygen::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
