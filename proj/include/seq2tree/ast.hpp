#pragma once

#include <memory>
#include <string>
#include <vector>

#include "seq2tree/grammar.hpp"
#include "seq2tree/rng.hpp"

namespace seq2tree {

struct AstNode;
using AstPtr = std::shared_ptr<const AstNode>;

/// Value of one constructor field. Children for composite field types,
/// Tokens for primitive ones, Absent only under Optional cardinality.
/// Primitive fields hold a token list so the multi-token transition mode
/// needs no separate representation; with the mode off, Single fields hold
/// exactly one token.
struct FieldValue {
  enum class Kind { Children, Tokens, Absent };

  Kind kind = Kind::Absent;
  std::vector<AstPtr> children;
  std::vector<std::string> tokens;

  static FieldValue of_children(std::vector<AstPtr> cs) {
    return FieldValue{Kind::Children, std::move(cs), {}};
  }
  static FieldValue of_tokens(std::vector<std::string> toks) {
    return FieldValue{Kind::Tokens, {}, std::move(toks)};
  }
  static FieldValue absent() { return FieldValue{}; }
};

/// Immutable AST value; field_values align with the constructor's declared
/// fields.
struct AstNode {
  std::string constructor;
  std::vector<FieldValue> field_values;
};

AstPtr make_node(std::string constructor, std::vector<FieldValue> field_values = {});

struct ValidateOptions {
  /// Allow Single/Optional primitive fields to hold more than one token.
  bool multi_token = false;
};

/// Checks `node` (and all descendants) against the grammar, expecting the
/// root constructor to produce `expected_type`. Throws TypeMismatch,
/// ArityViolation, or CardinalityViolation with the offending field path.
void validate(const AstNode& node, const AsdlGrammar& g, const std::string& expected_type,
              const ValidateOptions& opts = {});

/// Canonical s-expression codec. Composite child -> `(Ctor ...)`,
/// Optional/Multiple field -> `(list e1 ... ek)` with `(list)` for empty or
/// Absent, primitive tokens -> double-quoted strings. Output is byte-unique
/// per AST; exact-match comparisons rely on that. The grammar supplies the
/// field cardinalities that drive the `(list ...)` wrapping.
std::string to_sexpr(const AstNode& node, const AsdlGrammar& g);

AstPtr parse_sexpr(const std::string& text, const AsdlGrammar& g, const std::string& expected_type,
                   const ValidateOptions& opts = {});

bool ast_equal(const AstNode& a, const AstNode& b);

/// Count of action-tree nodes (ApplyConstr + GenToken + terminating Reduce
/// occurrences) this AST linearizes to; equals the sequence length T.
int ast_size(const AstNode& node, const AsdlGrammar& g);

/// Structural depth: constructor nesting level, 1 for a leaf constructor.
int ast_depth(const AstNode& node);

/// Deterministic random AST of depth <= max_depth whose primitive tokens
/// come from token_pool. Throws DepthUnsatisfiable when no constructor of
/// the root type terminates within max_depth.
AstPtr random_ast(const AsdlGrammar& g, Rng& rng, int max_depth,
                  const std::vector<std::string>& token_pool);

}  // namespace seq2tree
