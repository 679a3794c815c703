#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "seq2tree/ast.hpp"
#include "seq2tree/grammar.hpp"
#include "seq2tree/model.hpp"
#include "seq2tree/transition.hpp"

namespace seq2tree {

/// One gold pair with its transition artifacts precomputed. The caches are
/// derived purely from `ast`; recomputation must reproduce them.
struct Example {
  std::vector<std::string> utterance;
  AstPtr ast;
  ActionTree tree;
  ActionSequence seq_pre;
  ActionSequence seq_bfs;
  AlignmentMap align;
  int line = -1;  // 1-based source line, -1 when synthesized
};

struct Dataset {
  std::vector<Example> examples;
  std::string split;  // train | valid | test

  int size() const { return static_cast<int>(examples.size()); }
};

Example make_example(std::vector<std::string> utterance, AstPtr ast, const AsdlGrammar& g,
                     int line = -1);

/// JSON Lines, one {"utterance": [...], "ast": "<s-expr>"} object per line.
Dataset load_dataset(const std::string& path, const AsdlGrammar& g,
                     const std::string& split = "train");
void write_dataset(const std::string& path, const Dataset& data, const AsdlGrammar& g);

/// Source vocabulary from utterance tokens at min_freq, plus the GenToken
/// target vocabulary from gold primitive tokens (kept regardless of
/// frequency; desk-scale corpora are tiny and copy handles the rest).
std::pair<Vocabulary, Vocabulary> build_vocab(const Dataset& train, int min_freq = 1);

/// Constructor name -> phrase template. Entries are literal words or "$k"
/// referring to field k. A missing constructor gets the default template
/// [lowercased name, $0, ..., $n]; Multiple and absent-Optional fields
/// append the closing word "end" so the utterance determines the AST.
using TemplateRules = std::map<std::string, std::vector<std::string>>;

std::vector<std::string> render_utterance(const AstNode& ast, const AsdlGrammar& g,
                                          const TemplateRules& rules = {});

struct ToyCorpus {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// `size` training examples plus ~size/5 validation and test examples,
/// deterministic given seed. Token values are drawn from a fixed pool and
/// always appear in the rendered utterance, so copying is exercised.
ToyCorpus generate_toy_corpus(const AsdlGrammar& g, int size, std::uint64_t seed,
                              const TemplateRules& rules = {}, int max_depth = 6);

}  // namespace seq2tree
