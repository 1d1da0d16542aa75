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
// Python bindings for the main operations. Scorer callbacks cross the
// boundary as plain callables returning a sequence of log-probabilities,
// so numpy is optional.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "storygen/decode.hpp"
#include "storygen/enrich.hpp"
#include "storygen/error.hpp"
#include "storygen/kg.hpp"
#include "storygen/lm.hpp"
#include "storygen/metrics.hpp"
#include "storygen/neural.hpp"
#include "storygen/pipeline.hpp"
#include "storygen/terms.hpp"

namespace py = pybind11;

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_object(const py::object& obj) {
  auto values = obj.cast<std::vector<double>>();
  Eigen::VectorXd out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = values[i];
  }
  return out;
}

storygen::TermScorer wrap_term_scorer(py::function fn) {
  return [fn](const std::vector<int>& prefix) {
    return from_object(fn(prefix));
  };
}

storygen::StoryScorer wrap_story_scorer(py::function fn) {
  return [fn](const std::vector<int>& prefix, int target_len) {
    return from_object(fn(prefix, target_len));
  };
}

}  // namespace

PYBIND11_MODULE(_storygen, m) {
  m.doc() = "Keyword distillation, knowledge-graph enrichment and "
            "length-aware story generation";
#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif

  py::register_exception<storygen::ConfigError>(m, "ConfigError");
  py::register_exception<storygen::DataError>(m, "DataError");
  py::register_exception<storygen::NumericError>(m, "NumericError");

  // ---- terms ----------------------------------------------------------
  py::enum_<storygen::TermKind>(m, "TermKind")
      .value("NOUN", storygen::TermKind::NOUN)
      .value("FRAME", storygen::TermKind::FRAME);

  py::class_<storygen::Term>(m, "Term")
      .def(py::init<>())
      .def_readwrite("lemma", &storygen::Term::lemma)
      .def_readwrite("kind", &storygen::Term::kind)
      .def("render", &storygen::Term::render)
      .def("__eq__", [](const storygen::Term& a,
                        const storygen::Term& b) { return a == b; })
      .def("__lt__", [](const storygen::Term& a,
                        const storygen::Term& b) { return a < b; })
      .def("__hash__", [](const storygen::Term& t) {
        return storygen::TermHash()(t);
      })
      .def("__repr__", [](const storygen::Term& t) {
        return "Term(" + t.render() + ")";
      });

  m.def("parse_term", &storygen::parse_term, py::arg("text"),
        "Parse a canonical lemma_NOUN / Name_FRAME token.");

  py::class_<storygen::Lexicon>(m, "Lexicon")
      .def(py::init<>())
      .def("add_noun", &storygen::Lexicon::add_noun)
      .def("add_frame", &storygen::Lexicon::add_frame)
      .def("add_pronoun", &storygen::Lexicon::add_pronoun)
      .def("is_noun", &storygen::Lexicon::is_noun)
      .def("is_pronoun", &storygen::Lexicon::is_pronoun)
      .def_static("load_file", &storygen::load_lexicon_file, py::arg("path"));

  m.def("extract_terms", &storygen::extract_terms, py::arg("sentence"),
        py::arg("lexicon"),
        "First-occurrence noun and frame terms of a tokenized sentence.");

  // ---- knowledge graph --------------------------------------------------
  py::class_<storygen::RelationTuple>(m, "RelationTuple")
      .def_readonly("head", &storygen::RelationTuple::head)
      .def_readonly("rela", &storygen::RelationTuple::rela)
      .def_readonly("tail", &storygen::RelationTuple::tail)
      .def_property_readonly("source",
                             [](const storygen::RelationTuple& t) {
                               return storygen::source_name(t.source);
                             })
      .def("__repr__", [](const storygen::RelationTuple& t) {
        return "(" + t.head.render() + ", " + t.rela + ", " +
               t.tail.render() + ")";
      });

  py::class_<storygen::TwoHopPath>(m, "TwoHopPath")
      .def_readonly("first", &storygen::TwoHopPath::first)
      .def_readonly("second", &storygen::TwoHopPath::second)
      .def_property_readonly("middle", [](const storygen::TwoHopPath& p) {
        return p.middle();
      });

  py::class_<storygen::KnowledgeGraph>(m, "KnowledgeGraph")
      .def(py::init<>())
      .def("ingest_file",
           [](storygen::KnowledgeGraph& kg, const std::string& path,
              const std::string& source) {
             return kg.ingest_file(path, storygen::parse_source(source));
           },
           py::arg("path"), py::arg("source") = "other")
      .def("tuple_count", &storygen::KnowledgeGraph::tuple_count)
      .def("one_hop", &storygen::KnowledgeGraph::one_hop, py::arg("head"),
           py::arg("tail"))
      .def("two_hop", &storygen::KnowledgeGraph::two_hop, py::arg("head"),
           py::arg("tail"))
      .def("save_file", &storygen::KnowledgeGraph::save_file, py::arg("path"))
      .def_static("load_file", &storygen::KnowledgeGraph::load_file,
                  py::arg("path"));

  // ---- language model -----------------------------------------------------
  py::class_<storygen::NGramModel>(m, "NGramModel")
      .def_static("train", &storygen::NGramModel::train, py::arg("sequences"),
                  py::arg("order") = 3, py::arg("discount") = 0.75)
      .def_static("uniform", &storygen::NGramModel::uniform, py::arg("tokens"))
      .def("log_prob", &storygen::NGramModel::log_prob, py::arg("tokens"))
      .def("perplexity", &storygen::NGramModel::perplexity, py::arg("tokens"))
      .def("vocab_size", &storygen::NGramModel::vocab_size)
      .def("save_file", &storygen::NGramModel::save_file, py::arg("path"))
      .def_static("load_file", &storygen::NGramModel::load_file,
                  py::arg("path"));

  // ---- positional encodings ------------------------------------------------
  m.def("sinusoid_encoding",
        [](double x, int d) { return to_vector(storygen::sinusoid_encoding(x, d)); },
        py::arg("x"), py::arg("d"));
  m.def("ldpe",
        [](int pos, int len, int d) {
          return to_vector(storygen::ldpe(pos, len, d));
        },
        py::arg("pos"), py::arg("len"), py::arg("d"),
        "Length-difference positional encoding row.");

  // ---- decoding -------------------------------------------------------------
  py::class_<storygen::DecodeConfig>(m, "DecodeConfig")
      .def(py::init<>())
      .def_readwrite("beam_width", &storygen::DecodeConfig::beam_width)
      .def_readwrite("alpha", &storygen::DecodeConfig::alpha)
      .def_readwrite("gamma", &storygen::DecodeConfig::gamma)
      .def_readwrite("term_penalty", &storygen::DecodeConfig::term_penalty)
      .def_readwrite("max_len", &storygen::DecodeConfig::max_len)
      .def_readwrite("sentence_end_id", &storygen::DecodeConfig::sentence_end_id)
      .def_readwrite("sep_id", &storygen::DecodeConfig::sep_id)
      .def_readwrite("eos_id", &storygen::DecodeConfig::eos_id);

  py::class_<storygen::DecodeResult>(m, "DecodeResult")
      .def_readonly("tokens", &storygen::DecodeResult::tokens)
      .def_readonly("raw_logprob", &storygen::DecodeResult::raw_logprob)
      .def_readonly("penalized_score", &storygen::DecodeResult::penalized_score)
      .def_readonly("truncated", &storygen::DecodeResult::truncated);

  m.def("beam_search_terms",
        [](py::function scorer, const storygen::DecodeConfig& config,
           int steps) {
          return storygen::beam_search_terms(wrap_term_scorer(scorer), config,
                                             steps);
        },
        py::arg("scorer"), py::arg("config"), py::arg("steps"));
  m.def("beam_search_story",
        [](py::function scorer, const storygen::DecodeConfig& config,
           int target_len) {
          return storygen::beam_search_story(wrap_story_scorer(scorer), config,
                                             target_len);
        },
        py::arg("scorer"), py::arg("config"), py::arg("target_len"));
  m.def("replay_score",
        [](const std::vector<int>& tokens, py::function scorer,
           const storygen::DecodeConfig& config, int target_len) {
          return storygen::replay_score(tokens, wrap_story_scorer(scorer),
                                        config, target_len);
        },
        py::arg("tokens"), py::arg("scorer"), py::arg("config"),
        py::arg("target_len"));
  m.def("replay_score_terms",
        [](const std::vector<int>& tokens, py::function scorer,
           const storygen::DecodeConfig& config) {
          return storygen::replay_score_terms(tokens, wrap_term_scorer(scorer),
                                              config);
        },
        py::arg("tokens"), py::arg("scorer"), py::arg("config"));

  // ---- metrics ---------------------------------------------------------------
  m.def("bleu_n", &storygen::bleu_n, py::arg("candidate"),
        py::arg("references"), py::arg("n"));
  m.def("distinct_n", &storygen::distinct_n, py::arg("stories"), py::arg("n"));
  m.def("rouge_l", &storygen::rouge_l, py::arg("candidate"),
        py::arg("references"));
  m.def("evaluate_files",
        [](const std::string& candidates, const std::string& references) {
          return storygen::report_json(
              storygen::evaluate(storygen::load_stories_file(candidates),
                                 storygen::load_stories_file(references)));
        },
        py::arg("candidates"), py::arg("references"),
        "Metric report JSON for candidate vs reference story files.");

  // ---- gradients and pipeline --------------------------------------------------
  m.def("grad_check_linear_control", &storygen::grad_check_linear_control,
        py::arg("epsilon") = 1e-5);
  m.def("run",
        [](const std::string& config_path) {
          storygen::RunResult result = storygen::run(
              storygen::load_pipeline_config_file(config_path));
          return py::make_tuple(result.story.sentences, result.bundle_json);
        },
        py::arg("config_path"),
        "Full pipeline from a config file; returns (sentences, audit_json).");
}
