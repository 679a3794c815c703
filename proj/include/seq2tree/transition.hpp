#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "seq2tree/ast.hpp"
#include "seq2tree/grammar.hpp"

namespace seq2tree {

enum class ActionKind { ApplyConstr, Reduce, GenToken };

struct Action {
  ActionKind kind = ActionKind::Reduce;
  int ctor_id = -1;        // ApplyConstr only
  std::string token;       // GenToken only

  static Action apply(int ctor_id) { return {ActionKind::ApplyConstr, ctor_id, {}}; }
  static Action reduce() { return {ActionKind::Reduce, -1, {}}; }
  static Action gen_token(std::string token) {
    return {ActionKind::GenToken, -1, std::move(token)};
  }

  bool operator==(const Action&) const = default;
};

std::string render_action(const Action& a, const ActionVocab& vocab);

enum class TraversalOrder { PreOrder, BreadthFirst };

const char* order_name(TraversalOrder order);  // "pre" | "bfs"
TraversalOrder parse_order(const std::string& name);

struct TransitionOptions {
  /// When set, Single/Optional primitive fields hold one or more GenToken
  /// actions terminated by Reduce instead of exactly one GenToken.
  bool multi_token = false;
};

/// The AST augmented with Reduce and GenToken occurrences as explicit
/// nodes; the common object both traversals linearize. Node indices are
/// creation order (pre-order); `children[n][f]` lists the nodes filling
/// field f of node n, including the terminating Reduce where one exists.
struct ActionTree {
  struct Node {
    Action action;
    int parent = -1;       // node index, -1 for the root
    int field_index = -1;  // which parent field this node fills
  };

  std::vector<Node> nodes;
  std::vector<std::vector<std::vector<int>>> children;

  int size() const { return static_cast<int>(nodes.size()); }
};

ActionTree build_action_tree(const AstNode& ast, const AsdlGrammar& g,
                             const TransitionOptions& opts = {});

/// Inverse of build_action_tree: drops Reduce nodes and re-nests.
AstPtr tree_to_ast(const ActionTree& tree, const AsdlGrammar& g, const ActionVocab& vocab);

struct ActionStep {
  Action action;
  int node_index = -1;
  int parent_timestep = -1;  // timestep of the parent node in this sequence, -1 for root
  int parent_node = -1;
  int field_index = -1;
};

struct ActionSequence {
  TraversalOrder order = TraversalOrder::PreOrder;
  std::vector<ActionStep> steps;

  int length() const { return static_cast<int>(steps.size()); }
};

ActionSequence linearize(const ActionTree& tree, TraversalOrder order);

/// Bijection between the two traversals' timesteps for the same node
/// (0-based; CLI output renders 1-based).
struct AlignmentMap {
  std::vector<int> pre_to_bfs;
  std::vector<int> bfs_to_pre;
};

AlignmentMap alignment(const ActionTree& tree);

/// What the decoder sees at an open frontier field: the field itself, the
/// emitting parent, and the valid-action mask over the closed action class
/// (plus whether GenToken is permitted).
struct Frontier {
  Field field;                       // pseudo-field of the root type before the first action
  bool is_primitive = false;
  int parent_node = -1;              // -1 for the root frontier
  int parent_timestep = -1;
  std::vector<uint8_t> closed_mask;  // over ActionVocab ids (ApplyConstr ids + Reduce)
  bool allow_token = false;

  bool permits(const Action& a) const;
};

/// Incremental decode state for one traversal order. Applying only
/// mask-valid actions keeps the partial tree grammar-consistent; replaying
/// a linearization reproduces its tree. Single-owner mutable.
class ParserState {
 public:
  ParserState(const AsdlGrammar& g, const ActionVocab& vocab, TraversalOrder order,
              const TransitionOptions& opts = {});

  TraversalOrder order() const { return order_; }
  bool is_complete() const { return agenda_.empty(); }
  int steps_taken() const { return tree_.size(); }

  Frontier frontier() const;
  void apply_action(const Action& a);

  AstPtr extract_ast() const;          // IncompleteTree until is_complete()
  const ActionTree& tree() const { return tree_; }

 private:
  struct OpenField {
    int parent_node = -1;   // -1: the root pseudo-field
    int field_index = -1;
    int count = 0;          // children produced so far (excluding Reduce)
  };

  const Field& field_of(const OpenField& open) const;
  bool reduce_valid(const OpenField& open, const Field& field) const;
  void close_or_keep_after_child(const Field& field);
  int append_node(const Action& a, const OpenField& open, int child_fields);

  // Non-owning; pointers rather than references so states are copyable
  // (beam search duplicates hypotheses).
  const AsdlGrammar* grammar_;
  const ActionVocab* vocab_;
  TraversalOrder order_;
  TransitionOptions opts_;
  Field root_field_;
  ActionTree tree_;
  std::deque<OpenField> agenda_;  // back = top for PreOrder, front = active for BreadthFirst
};

/// Replays a full action sequence from scratch and extracts the AST.
AstPtr replay(const std::vector<Action>& actions, const AsdlGrammar& g, const ActionVocab& vocab,
              TraversalOrder order, const TransitionOptions& opts = {});

}  // namespace seq2tree
