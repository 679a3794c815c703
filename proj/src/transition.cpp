#include "seq2tree/transition.hpp"

#include <algorithm>
#include <utility>

#include "seq2tree/error.hpp"

namespace seq2tree {

namespace {

std::string quote_token(const std::string& token) {
  std::string out = "\"";
  for (char c : token) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

}  // namespace

std::string render_action(const Action& a, const ActionVocab& vocab) {
  switch (a.kind) {
    case ActionKind::ApplyConstr:
      if (a.ctor_id < 0 || a.ctor_id >= static_cast<int>(vocab.constructor_names.size()))
        throw Error(ErrorKind::InvalidAction,
                    "ApplyConstr id " + std::to_string(a.ctor_id) + " out of range");
      return "ApplyConstr[" + vocab.constructor_names[a.ctor_id] + "]";
    case ActionKind::Reduce:
      return "Reduce";
    case ActionKind::GenToken:
      return "GenToken[" + quote_token(a.token) + "]";
  }
  throw Error(ErrorKind::InvalidAction, "unrenderable action");
}

const char* order_name(TraversalOrder order) {
  return order == TraversalOrder::PreOrder ? "pre" : "bfs";
}

TraversalOrder parse_order(const std::string& name) {
  if (name == "pre") return TraversalOrder::PreOrder;
  if (name == "bfs") return TraversalOrder::BreadthFirst;
  throw Error(ErrorKind::ConfigError, "unknown traversal order '" + name + "' (want pre|bfs)");
}

// ---------------------------------------------------------------------------
// AST -> ActionTree

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const AsdlGrammar& g, const ActionVocab& vocab, const TransitionOptions& opts)
      : g_(g), vocab_(vocab), opts_(opts) {}

  ActionTree take() && { return std::move(tree_); }

  int add(const Action& a, int parent, int field_index, int n_fields) {
    int idx = tree_.size();
    tree_.nodes.push_back({a, parent, field_index});
    tree_.children.emplace_back(n_fields);
    if (parent >= 0) tree_.children[parent][field_index].push_back(idx);
    return idx;
  }

  void build(const AstNode& node, int parent, int field_index) {
    const Constructor& ctor = g_.constructor(node.constructor);
    int idx = add(Action::apply(vocab_.id_of(ctor.name)), parent, field_index,
                  static_cast<int>(ctor.fields.size()));
    for (std::size_t f = 0; f < ctor.fields.size(); ++f) {
      const Field& field = ctor.fields[f];
      const FieldValue& fv = node.field_values[f];
      int fi = static_cast<int>(f);
      switch (fv.kind) {
        case FieldValue::Kind::Children:
          for (const AstPtr& child : fv.children) build(*child, idx, fi);
          if (field.cardinality == Cardinality::Multiple) add(Action::reduce(), idx, fi, 0);
          break;
        case FieldValue::Kind::Tokens:
          for (const std::string& tok : fv.tokens) add(Action::gen_token(tok), idx, fi, 0);
          if (field.cardinality == Cardinality::Multiple ||
              (opts_.multi_token && field.cardinality != Cardinality::Multiple))
            add(Action::reduce(), idx, fi, 0);
          break;
        case FieldValue::Kind::Absent:
          add(Action::reduce(), idx, fi, 0);
          break;
      }
    }
  }

 private:
  const AsdlGrammar& g_;
  const ActionVocab& vocab_;
  const TransitionOptions& opts_;
  ActionTree tree_;
};

}  // namespace

ActionTree build_action_tree(const AstNode& ast, const AsdlGrammar& g,
                             const TransitionOptions& opts) {
  validate(ast, g, g.root_type(), ValidateOptions{opts.multi_token});
  ActionVocab vocab = action_vocabulary(g);
  TreeBuilder builder(g, vocab, opts);
  builder.build(ast, -1, -1);
  return std::move(builder).take();
}

// ---------------------------------------------------------------------------
// ActionTree -> AST

namespace {

AstPtr node_from_tree(const ActionTree& tree, int idx, const AsdlGrammar& g,
                      const ActionVocab& vocab) {
  const ActionTree::Node& node = tree.nodes[idx];
  if (node.action.kind != ActionKind::ApplyConstr)
    throw Error(ErrorKind::IncompleteTree, "non-constructor node where a subtree was expected");
  const Constructor& ctor = g.constructor(vocab.constructor_names[node.action.ctor_id]);
  std::vector<FieldValue> values;
  values.reserve(ctor.fields.size());
  for (std::size_t f = 0; f < ctor.fields.size(); ++f) {
    const Field& field = ctor.fields[f];
    std::vector<int> kept;
    for (int child : tree.children[idx][f])
      if (tree.nodes[child].action.kind != ActionKind::Reduce) kept.push_back(child);
    if (kept.empty() && field.cardinality == Cardinality::Optional) {
      values.push_back(FieldValue::absent());
      continue;
    }
    if (kept.empty() && field.cardinality == Cardinality::Single)
      throw Error(ErrorKind::IncompleteTree,
                  "field '" + field.name + "' of " + ctor.name + " has no child");
    if (g.is_primitive(field.type)) {
      std::vector<std::string> tokens;
      for (int child : kept) {
        if (tree.nodes[child].action.kind != ActionKind::GenToken)
          throw Error(ErrorKind::IncompleteTree,
                      "primitive field '" + field.name + "' holds a non-token node");
        tokens.push_back(tree.nodes[child].action.token);
      }
      values.push_back(FieldValue::of_tokens(std::move(tokens)));
    } else {
      std::vector<AstPtr> children;
      for (int child : kept) children.push_back(node_from_tree(tree, child, g, vocab));
      values.push_back(FieldValue::of_children(std::move(children)));
    }
  }
  return make_node(ctor.name, std::move(values));
}

}  // namespace

AstPtr tree_to_ast(const ActionTree& tree, const AsdlGrammar& g, const ActionVocab& vocab) {
  if (tree.nodes.empty()) throw Error(ErrorKind::IncompleteTree, "empty action tree");
  return node_from_tree(tree, 0, g, vocab);
}

// ---------------------------------------------------------------------------
// Linearization and alignment

namespace {

void emit_pre_order(const ActionTree& tree, int idx, std::vector<int>& order) {
  order.push_back(idx);
  for (const auto& field_children : tree.children[idx])
    for (int child : field_children) emit_pre_order(tree, child, order);
}

std::vector<int> node_order(const ActionTree& tree, TraversalOrder order) {
  std::vector<int> out;
  out.reserve(tree.nodes.size());
  if (tree.nodes.empty()) return out;
  if (order == TraversalOrder::PreOrder) {
    emit_pre_order(tree, 0, out);
    return out;
  }
  // Breadth-first: a FIFO agenda of open fields; a dequeued field emits all
  // its direct children consecutively, each emitted constructor enqueuing
  // its own fields at the back.
  std::deque<std::pair<int, int>> agenda;
  out.push_back(0);
  for (std::size_t f = 0; f < tree.children[0].size(); ++f)
    agenda.emplace_back(0, static_cast<int>(f));
  while (!agenda.empty()) {
    auto [node, field] = agenda.front();
    agenda.pop_front();
    for (int child : tree.children[node][field]) {
      out.push_back(child);
      for (std::size_t f = 0; f < tree.children[child].size(); ++f)
        agenda.emplace_back(child, static_cast<int>(f));
    }
  }
  return out;
}

}  // namespace

ActionSequence linearize(const ActionTree& tree, TraversalOrder order) {
  std::vector<int> nodes = node_order(tree, order);
  std::vector<int> time_of(tree.nodes.size(), -1);
  for (std::size_t t = 0; t < nodes.size(); ++t) time_of[nodes[t]] = static_cast<int>(t);
  ActionSequence seq;
  seq.order = order;
  seq.steps.reserve(nodes.size());
  for (int idx : nodes) {
    const ActionTree::Node& node = tree.nodes[idx];
    seq.steps.push_back({node.action, idx, node.parent >= 0 ? time_of[node.parent] : -1,
                         node.parent, node.field_index});
  }
  return seq;
}

AlignmentMap alignment(const ActionTree& tree) {
  std::vector<int> pre = node_order(tree, TraversalOrder::PreOrder);
  std::vector<int> bfs = node_order(tree, TraversalOrder::BreadthFirst);
  std::vector<int> t_bfs(tree.nodes.size(), -1);
  for (std::size_t t = 0; t < bfs.size(); ++t) t_bfs[bfs[t]] = static_cast<int>(t);
  AlignmentMap map;
  map.pre_to_bfs.resize(tree.nodes.size());
  map.bfs_to_pre.resize(tree.nodes.size());
  for (std::size_t t = 0; t < pre.size(); ++t) {
    map.pre_to_bfs[t] = t_bfs[pre[t]];
    map.bfs_to_pre[t_bfs[pre[t]]] = static_cast<int>(t);
  }
  return map;
}

// ---------------------------------------------------------------------------
// ParserState

bool Frontier::permits(const Action& a) const {
  switch (a.kind) {
    case ActionKind::ApplyConstr:
      // The last mask slot belongs to Reduce, never to a constructor.
      return a.ctor_id >= 0 && a.ctor_id + 1 < static_cast<int>(closed_mask.size()) &&
             closed_mask[a.ctor_id] != 0;
    case ActionKind::Reduce:
      return !closed_mask.empty() && closed_mask.back() != 0;
    case ActionKind::GenToken:
      return allow_token;
  }
  return false;
}

ParserState::ParserState(const AsdlGrammar& g, const ActionVocab& vocab, TraversalOrder order,
                         const TransitionOptions& opts)
    : grammar_(&g), vocab_(&vocab), order_(order), opts_(opts),
      root_field_{"root", g.root_type(), Cardinality::Single} {
  agenda_.push_back(OpenField{});
}

const Field& ParserState::field_of(const OpenField& open) const {
  if (open.parent_node < 0) return root_field_;
  const ActionTree::Node& parent = tree_.nodes[open.parent_node];
  const Constructor& ctor = grammar_->constructor(vocab_->constructor_names[parent.action.ctor_id]);
  return ctor.fields[open.field_index];
}

bool ParserState::reduce_valid(const OpenField& open, const Field& field) const {
  switch (field.cardinality) {
    case Cardinality::Multiple:
      return true;
    case Cardinality::Optional:
      return open.count == 0 || (opts_.multi_token && grammar_->is_primitive(field.type));
    case Cardinality::Single:
      return opts_.multi_token && grammar_->is_primitive(field.type) && open.count >= 1;
  }
  return false;
}

Frontier ParserState::frontier() const {
  if (is_complete()) throw Error(ErrorKind::InvalidAction, "decode is already complete");
  const OpenField& open =
      order_ == TraversalOrder::PreOrder ? agenda_.back() : agenda_.front();
  const Field& field = field_of(open);
  Frontier f;
  f.field = field;
  f.is_primitive = grammar_->is_primitive(field.type);
  f.parent_node = open.parent_node;
  f.parent_timestep = open.parent_node;  // node indices are creation timesteps
  f.closed_mask.assign(vocab_->size(), 0);
  if (!f.is_primitive)
    for (const Constructor& ctor : grammar_->constructors_of(field.type))
      f.closed_mask[vocab_->id_of(ctor.name)] = 1;
  if (reduce_valid(open, field)) f.closed_mask[vocab_->reduce_id] = 1;
  f.allow_token = f.is_primitive;
  return f;
}

int ParserState::append_node(const Action& a, const OpenField& open, int child_fields) {
  int idx = tree_.size();
  tree_.nodes.push_back({a, open.parent_node, open.field_index});
  tree_.children.emplace_back(child_fields);
  if (open.parent_node >= 0) tree_.children[open.parent_node][open.field_index].push_back(idx);
  return idx;
}

void ParserState::close_or_keep_after_child(const Field& field) {
  bool close;
  if (field.cardinality == Cardinality::Multiple) {
    close = false;
  } else if (opts_.multi_token && grammar_->is_primitive(field.type)) {
    close = false;  // Reduce terminates the token run
  } else {
    close = true;  // Single/Optional filled by exactly one child
  }
  if (!close) return;
  if (order_ == TraversalOrder::PreOrder)
    agenda_.pop_back();
  else
    agenda_.pop_front();
}

void ParserState::apply_action(const Action& a) {
  if (is_complete()) throw Error(ErrorKind::InvalidAction, "decode is already complete");
  Frontier f = frontier();
  if (!f.permits(a))
    throw Error(ErrorKind::InvalidAction,
                render_action(a, *vocab_) + " is masked out at field '" + f.field.name +
                    "' of type " + f.field.type);
  OpenField& open = order_ == TraversalOrder::PreOrder ? agenda_.back() : agenda_.front();

  if (a.kind == ActionKind::Reduce) {
    append_node(a, open, 0);
    if (order_ == TraversalOrder::PreOrder)
      agenda_.pop_back();
    else
      agenda_.pop_front();
    return;
  }

  if (a.kind == ActionKind::GenToken) {
    append_node(a, open, 0);
    open.count += 1;
    close_or_keep_after_child(f.field);
    return;
  }

  // ApplyConstr: close or keep the emitting field first, then open the new
  // constructor's fields (top of stack in declaration order for pre-order,
  // back of queue for breadth-first).
  const Constructor& ctor = grammar_->constructor(vocab_->constructor_names[a.ctor_id]);
  int idx = append_node(a, open, static_cast<int>(ctor.fields.size()));
  open.count += 1;
  close_or_keep_after_child(f.field);
  if (order_ == TraversalOrder::PreOrder) {
    for (int fi = static_cast<int>(ctor.fields.size()) - 1; fi >= 0; --fi)
      agenda_.push_back(OpenField{idx, fi, 0});
  } else {
    for (int fi = 0; fi < static_cast<int>(ctor.fields.size()); ++fi)
      agenda_.push_back(OpenField{idx, fi, 0});
  }
}

AstPtr ParserState::extract_ast() const {
  if (!is_complete())
    throw Error(ErrorKind::IncompleteTree,
                std::to_string(agenda_.size()) + " fields still open");
  AstPtr ast = tree_to_ast(tree_, *grammar_, *vocab_);
  validate(*ast, *grammar_, grammar_->root_type(), ValidateOptions{opts_.multi_token});
  return ast;
}

AstPtr replay(const std::vector<Action>& actions, const AsdlGrammar& g, const ActionVocab& vocab,
              TraversalOrder order, const TransitionOptions& opts) {
  ParserState state(g, vocab, order, opts);
  for (const Action& a : actions) state.apply_action(a);
  return state.extract_ast();
}

}  // namespace seq2tree
