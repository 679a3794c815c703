#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seq2tree/error.hpp"

namespace seq2tree {

enum class Cardinality { Single, Optional, Multiple };

struct Field {
  std::string name;
  std::string type;
  Cardinality cardinality = Cardinality::Single;

  bool operator==(const Field&) const = default;
};

struct Constructor {
  std::string name;
  std::string result_type;
  std::vector<Field> fields;

  bool operator==(const Constructor&) const = default;
};

namespace detail {
class GrammarParser;
}

/// The static schema for all ASTs: declared primitive types plus composite
/// types, each defined by an ordered list of constructors.
///
/// Grammar source format (one definition may span lines via leading `|`):
///
///   # comment
///   primitive identifier, number
///   root stmt
///   stmt = If(expr test, stmt* body, stmt* orelse) | Pass
///   expr = Attribute(expr value, identifier attr) | Name(identifier id)
///
/// The first declared composite type is the root unless a `root` directive
/// overrides it. Constructor names are globally unique. Immutable after
/// construction.
class AsdlGrammar {
 public:
  const std::vector<std::string>& primitive_types() const { return primitives_; }
  const std::vector<std::string>& composite_types() const { return type_order_; }
  const std::string& root_type() const { return root_type_; }

  bool is_primitive(const std::string& type) const;
  bool is_composite(const std::string& type) const;

  /// Constructors producing type `t`, in declaration order.
  const std::vector<Constructor>& constructors_of(const std::string& t) const;

  /// Constructor by (globally unique) name; UnknownType if absent.
  const Constructor& constructor(const std::string& name) const;
  bool has_constructor(const std::string& name) const;

  /// All constructors, in declaration order across types.
  const std::vector<Constructor>& constructors() const { return all_constructors_; }

  /// Dense id of a declared type (composite types first, then primitives).
  int type_id(const std::string& type) const;
  int num_types() const { return static_cast<int>(type_order_.size() + primitives_.size()); }

  /// Canonical source text; parse_grammar(render()) reproduces this grammar.
  std::string render() const;

  bool operator==(const AsdlGrammar& other) const;

  friend AsdlGrammar parse_grammar(const std::string& text);
  friend class detail::GrammarParser;

 private:
  void index();

  std::vector<std::string> primitives_;
  std::vector<std::string> type_order_;                // composite declaration order
  std::unordered_map<std::string, std::vector<Constructor>> type_defs_;
  std::string root_type_;

  std::vector<Constructor> all_constructors_;          // declaration order
  std::unordered_map<std::string, int> constructor_index_;
  std::unordered_map<std::string, int> type_ids_;
};

AsdlGrammar parse_grammar(const std::string& text);

/// Closed-class action ids: one ApplyConstr id per constructor (declaration
/// order) plus a distinct Reduce id. Stable across save/load because they
/// are derived from the grammar's declaration order alone.
struct ActionVocab {
  std::unordered_map<std::string, int> apply_constr_ids;
  std::vector<std::string> constructor_names;  // id -> name
  int reduce_id = 0;

  int size() const { return reduce_id + 1; }
  int id_of(const std::string& ctor_name) const;
};

ActionVocab action_vocabulary(const AsdlGrammar& g);

/// FNV-1a hash of the canonical rendering; used to pin checkpoints to the
/// grammar they were trained with.
uint64_t grammar_hash(const AsdlGrammar& g);

const char* cardinality_marker(Cardinality c);  // "", "?", "*"

}  // namespace seq2tree
