#include "seq2tree/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seq2tree/error.hpp"
#include "seq2tree/rng.hpp"

namespace seq2tree {

Example make_example(std::vector<std::string> utterance, AstPtr ast, const AsdlGrammar& g,
                     int line) {
  Example ex;
  ex.utterance = std::move(utterance);
  ex.ast = std::move(ast);
  ex.tree = build_action_tree(*ex.ast, g);
  ex.seq_pre = linearize(ex.tree, TraversalOrder::PreOrder);
  ex.seq_bfs = linearize(ex.tree, TraversalOrder::BreadthFirst);
  ex.align = alignment(ex.tree);
  ex.line = line;
  return ex;
}

Dataset load_dataset(const std::string& path, const AsdlGrammar& g, const std::string& split) {
  std::ifstream in(path);
  if (!in.good()) throw Error(ErrorKind::IoError, "cannot read '" + path + "'");
  Dataset data;
  data.split = split;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno += 1;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("utterance") ||
        !obj.contains("ast") || !obj["utterance"].is_array() || !obj["ast"].is_string())
      throw Error(ErrorKind::MalformedLine,
                  "line " + std::to_string(lineno) + ": expected {\"utterance\": [...], "
                  "\"ast\": \"...\"}");
    std::vector<std::string> utterance;
    for (const nlohmann::json& tok : obj["utterance"]) {
      if (!tok.is_string())
        throw Error(ErrorKind::MalformedLine,
                    "line " + std::to_string(lineno) + ": utterance tokens must be strings");
      utterance.push_back(tok.get<std::string>());
    }
    AstPtr ast;
    try {
      ast = parse_sexpr(obj["ast"].get<std::string>(), g, g.root_type());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SexprSyntaxError)
        throw Error(ErrorKind::MalformedLine,
                    "line " + std::to_string(lineno) + ": " + e.what());
      throw Error(ErrorKind::ValidationFailed,
                  "line " + std::to_string(lineno) + ": " + e.what());
    }
    data.examples.push_back(make_example(std::move(utterance), std::move(ast), g, lineno));
  }
  return data;
}

void write_dataset(const std::string& path, const Dataset& data, const AsdlGrammar& g) {
  std::ofstream out(path);
  if (!out.good()) throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
  for (const Example& ex : data.examples) {
    nlohmann::json obj;
    obj["utterance"] = ex.utterance;
    obj["ast"] = to_sexpr(*ex.ast, g);
    out << obj.dump() << "\n";
  }
  if (!out.good()) throw Error(ErrorKind::IoError, "short write to '" + path + "'");
}

namespace {

void collect_gold_tokens(const AstNode& node, std::vector<std::string>& out) {
  for (const FieldValue& fv : node.field_values) {
    if (fv.kind == FieldValue::Kind::Tokens)
      out.insert(out.end(), fv.tokens.begin(), fv.tokens.end());
    else if (fv.kind == FieldValue::Kind::Children)
      for (const AstPtr& child : fv.children) collect_gold_tokens(*child, out);
  }
}

}  // namespace

std::pair<Vocabulary, Vocabulary> build_vocab(const Dataset& train, int min_freq) {
  // First-occurrence order keeps ids deterministic across runs.
  std::vector<std::string> src_order, tgt_order;
  std::map<std::string, int> src_freq;
  for (const Example& ex : train.examples) {
    for (const std::string& tok : ex.utterance) {
      if (src_freq.emplace(tok, 0).second) src_order.push_back(tok);
      src_freq[tok] += 1;
    }
    std::vector<std::string> gold;
    collect_gold_tokens(*ex.ast, gold);
    for (const std::string& tok : gold) {
      if (std::find(tgt_order.begin(), tgt_order.end(), tok) == tgt_order.end())
        tgt_order.push_back(tok);
    }
  }
  Vocabulary src, tgt;
  for (const std::string& tok : src_order)
    if (src_freq[tok] >= min_freq) src.add(tok);
  for (const std::string& tok : tgt_order) tgt.add(tok);
  return {src, tgt};
}

// ---------------------------------------------------------------------------
// Toy corpus

namespace {

const char* kClosingWord = "end";

void render_node(const AstNode& node, const AsdlGrammar& g, const TemplateRules& rules,
                 std::vector<std::string>& out);

void render_field(const FieldValue& fv, const Field& field, const AsdlGrammar& g,
                  const TemplateRules& rules, std::vector<std::string>& out) {
  switch (fv.kind) {
    case FieldValue::Kind::Children:
      for (const AstPtr& child : fv.children) render_node(*child, g, rules, out);
      break;
    case FieldValue::Kind::Tokens:
      for (const std::string& tok : fv.tokens) out.push_back(tok);
      break;
    case FieldValue::Kind::Absent:
      break;
  }
  if (field.cardinality == Cardinality::Multiple ||
      (field.cardinality == Cardinality::Optional && fv.kind == FieldValue::Kind::Absent))
    out.push_back(kClosingWord);
}

void render_node(const AstNode& node, const AsdlGrammar& g, const TemplateRules& rules,
                 std::vector<std::string>& out) {
  const Constructor& ctor = g.constructor(node.constructor);
  auto it = rules.find(ctor.name);
  if (it == rules.end()) {
    std::string word = ctor.name;
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(word);
    for (std::size_t f = 0; f < ctor.fields.size(); ++f)
      render_field(node.field_values[f], ctor.fields[f], g, rules, out);
    return;
  }
  for (const std::string& piece : it->second) {
    if (piece.size() >= 2 && piece[0] == '$') {
      int f = std::stoi(piece.substr(1));
      if (f < 0 || f >= static_cast<int>(ctor.fields.size()))
        throw Error(ErrorKind::ConfigError,
                    "template for " + ctor.name + " references field " + piece);
      render_field(node.field_values[f], ctor.fields[f], g, rules, out);
    } else {
      out.push_back(piece);
    }
  }
}

const std::vector<std::string>& toy_token_pool() {
  static const std::vector<std::string> pool = {"alpha", "beta",  "gamma", "delta",
                                                "omega", "sigma", "kappa", "tau"};
  return pool;
}

Dataset generate_split(const AsdlGrammar& g, int size, Rng& rng, const TemplateRules& rules,
                       int max_depth, const std::string& split) {
  Dataset data;
  data.split = split;
  for (int i = 0; i < size; ++i) {
    // Varying the depth budget spreads tree sizes across buckets.
    int depth = 2 + rng.uniform_int(std::max(1, max_depth - 1));
    AstPtr ast = random_ast(g, rng, depth, toy_token_pool());
    std::vector<std::string> utterance = render_utterance(*ast, g, rules);
    data.examples.push_back(make_example(std::move(utterance), std::move(ast), g));
  }
  return data;
}

}  // namespace

std::vector<std::string> render_utterance(const AstNode& ast, const AsdlGrammar& g,
                                          const TemplateRules& rules) {
  std::vector<std::string> out;
  render_node(ast, g, rules, out);
  return out;
}

ToyCorpus generate_toy_corpus(const AsdlGrammar& g, int size, std::uint64_t seed,
                              const TemplateRules& rules, int max_depth) {
  Rng rng(seed);
  Rng train_rng = rng.fork("toy_train");
  Rng valid_rng = rng.fork("toy_valid");
  Rng test_rng = rng.fork("toy_test");
  ToyCorpus corpus;
  int held_out = size > 0 ? std::max(1, size / 5) : 0;
  corpus.train = generate_split(g, size, train_rng, rules, max_depth, "train");
  corpus.valid = generate_split(g, held_out, valid_rng, rules, max_depth, "valid");
  corpus.test = generate_split(g, held_out, test_rng, rules, max_depth, "test");
  return corpus;
}

}  // namespace seq2tree
