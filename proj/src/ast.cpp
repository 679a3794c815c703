#include "seq2tree/ast.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace seq2tree {

AstPtr make_node(std::string constructor, std::vector<FieldValue> field_values) {
  auto node = std::make_shared<AstNode>();
  node->constructor = std::move(constructor);
  node->field_values = std::move(field_values);
  return node;
}

namespace {

std::string join_path(const std::string& base, const std::string& part) {
  return base.empty() ? part : base + "." + part;
}

void validate_impl(const AstNode& node, const AsdlGrammar& g, const std::string& expected_type,
                   const ValidateOptions& opts, const std::string& path) {
  const std::string at = path.empty() ? node.constructor : path;
  if (!g.has_constructor(node.constructor)) {
    throw Error(ErrorKind::TypeMismatch, "unknown constructor '" + node.constructor + "'", at);
  }
  const Constructor& ctor = g.constructor(node.constructor);
  if (ctor.result_type != expected_type) {
    throw Error(ErrorKind::TypeMismatch,
                node.constructor + " produces " + ctor.result_type + ", expected " + expected_type,
                at);
  }
  if (node.field_values.size() != ctor.fields.size()) {
    throw Error(ErrorKind::ArityViolation,
                node.constructor + " has " + std::to_string(node.field_values.size()) +
                    " field values, expected " + std::to_string(ctor.fields.size()),
                at);
  }
  for (size_t i = 0; i < ctor.fields.size(); ++i) {
    const Field& field = ctor.fields[i];
    const FieldValue& value = node.field_values[i];
    const std::string fpath = join_path(at, field.name);
    const bool primitive = g.is_primitive(field.type);

    if (value.kind == FieldValue::Kind::Absent) {
      if (field.cardinality != Cardinality::Optional) {
        throw Error(ErrorKind::CardinalityViolation, "Absent value on non-optional field", fpath);
      }
      continue;
    }
    if (primitive && value.kind != FieldValue::Kind::Tokens) {
      throw Error(ErrorKind::TypeMismatch, "primitive field holds child nodes", fpath);
    }
    if (!primitive && value.kind != FieldValue::Kind::Children) {
      throw Error(ErrorKind::TypeMismatch, "composite field holds tokens", fpath);
    }

    const size_t count = primitive ? value.tokens.size() : value.children.size();
    switch (field.cardinality) {
      case Cardinality::Single:
        if (primitive) {
          if (count == 0 || (!opts.multi_token && count != 1)) {
            throw Error(ErrorKind::CardinalityViolation,
                        "single primitive field holds " + std::to_string(count) + " tokens", fpath);
          }
        } else if (count != 1) {
          throw Error(ErrorKind::CardinalityViolation,
                      "single field holds " + std::to_string(count) + " children", fpath);
        }
        break;
      case Cardinality::Optional:
        if (primitive) {
          if (count == 0 || (!opts.multi_token && count != 1)) {
            throw Error(ErrorKind::CardinalityViolation,
                        "optional primitive field holds " + std::to_string(count) +
                            " tokens (use Absent for none)",
                        fpath);
          }
        } else if (count != 1) {
          throw Error(ErrorKind::CardinalityViolation,
                      "optional field holds " + std::to_string(count) + " children", fpath);
        }
        break;
      case Cardinality::Multiple:
        break;  // any count
    }
    if (!primitive) {
      for (size_t j = 0; j < value.children.size(); ++j) {
        const std::string cpath =
            field.cardinality == Cardinality::Single && value.children.size() == 1
                ? fpath
                : fpath + "[" + std::to_string(j) + "]";
        validate_impl(*value.children[j], g, field.type, opts, cpath);
      }
    }
  }
}

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
  out += "\"";
  return out;
}

void render_sexpr(const AstNode& node, const AsdlGrammar& g, std::string& out) {
  const Constructor& ctor = g.constructor(node.constructor);
  out += "(";
  out += node.constructor;
  for (size_t i = 0; i < ctor.fields.size(); ++i) {
    const Field& field = ctor.fields[i];
    const FieldValue& value = node.field_values[i];
    const bool primitive = g.is_primitive(field.type);
    out += " ";
    if (field.cardinality == Cardinality::Single && value.kind != FieldValue::Kind::Absent &&
        (!primitive || value.tokens.size() == 1)) {
      if (primitive) {
        out += quote_token(value.tokens[0]);
      } else {
        render_sexpr(*value.children[0], g, out);
      }
      continue;
    }
    out += "(list";
    if (value.kind == FieldValue::Kind::Tokens) {
      for (const auto& token : value.tokens) {
        out += " ";
        out += quote_token(token);
      }
    } else if (value.kind == FieldValue::Kind::Children) {
      for (const auto& child : value.children) {
        out += " ";
        render_sexpr(*child, g, out);
      }
    }
    out += ")";
  }
  out += ")";
}

// ---- generic s-expression reader ----

struct SExpr {
  enum class Kind { List, Symbol, String } kind = Kind::List;
  std::vector<SExpr> items;
  std::string text;
};

class SexprReader {
 public:
  explicit SexprReader(const std::string& text) : text_(text) {}

  SExpr read_all() {
    SExpr e = read();
    skip_space();
    if (pos_ != text_.size()) {
      throw Error(ErrorKind::SexprSyntaxError, "trailing input after expression");
    }
    return e;
  }

 private:
  SExpr read() {
    skip_space();
    if (pos_ >= text_.size()) throw Error(ErrorKind::SexprSyntaxError, "unexpected end of input");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      SExpr list;
      list.kind = SExpr::Kind::List;
      while (true) {
        skip_space();
        if (pos_ >= text_.size()) throw Error(ErrorKind::SexprSyntaxError, "unclosed '('");
        if (text_[pos_] == ')') {
          ++pos_;
          return list;
        }
        list.items.push_back(read());
      }
    }
    if (c == ')') throw Error(ErrorKind::SexprSyntaxError, "unbalanced ')'");
    if (c == '"') return read_string();
    return read_symbol();
  }

  SExpr read_string() {
    SExpr e;
    e.kind = SExpr::Kind::String;
    ++pos_;  // opening quote
    while (true) {
      if (pos_ >= text_.size()) throw Error(ErrorKind::SexprSyntaxError, "unterminated string");
      char c = text_[pos_++];
      if (c == '"') return e;
      if (c == '\\') {
        if (pos_ >= text_.size()) throw Error(ErrorKind::SexprSyntaxError, "dangling escape");
        char esc = text_[pos_++];
        switch (esc) {
          case '"': e.text += '"'; break;
          case '\\': e.text += '\\'; break;
          case 'n': e.text += '\n'; break;
          case 't': e.text += '\t'; break;
          default:
            throw Error(ErrorKind::SexprSyntaxError, std::string("unknown escape '\\") + esc + "'");
        }
      } else {
        e.text += c;
      }
    }
  }

  SExpr read_symbol() {
    SExpr e;
    e.kind = SExpr::Kind::Symbol;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '(' || c == ')' || c == '"' || std::isspace(static_cast<unsigned char>(c))) break;
      e.text += c;
      ++pos_;
    }
    if (e.text.empty()) throw Error(ErrorKind::SexprSyntaxError, "empty symbol");
    return e;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  const std::string& text_;
  size_t pos_ = 0;
};

AstPtr interp_node(const SExpr& e, const AsdlGrammar& g);

FieldValue interp_list_field(const SExpr& e, const AsdlGrammar& g, const Field& field) {
  if (e.kind != SExpr::Kind::List || e.items.empty() ||
      e.items[0].kind != SExpr::Kind::Symbol || e.items[0].text != "list") {
    throw Error(ErrorKind::SexprSyntaxError,
                "expected (list ...) for field '" + field.name + "'");
  }
  const bool primitive = g.is_primitive(field.type);
  const size_t count = e.items.size() - 1;
  if (field.cardinality == Cardinality::Optional && count == 0) return FieldValue::absent();
  if (primitive) {
    std::vector<std::string> tokens;
    for (size_t i = 1; i < e.items.size(); ++i) {
      if (e.items[i].kind != SExpr::Kind::String) {
        throw Error(ErrorKind::SexprSyntaxError,
                    "expected quoted token in primitive field '" + field.name + "'");
      }
      tokens.push_back(e.items[i].text);
    }
    return FieldValue::of_tokens(std::move(tokens));
  }
  std::vector<AstPtr> children;
  for (size_t i = 1; i < e.items.size(); ++i) children.push_back(interp_node(e.items[i], g));
  return FieldValue::of_children(std::move(children));
}

AstPtr interp_node(const SExpr& e, const AsdlGrammar& g) {
  if (e.kind != SExpr::Kind::List || e.items.empty() || e.items[0].kind != SExpr::Kind::Symbol) {
    throw Error(ErrorKind::SexprSyntaxError, "expected (Constructor ...)");
  }
  const std::string& name = e.items[0].text;
  if (name == "list" || !g.has_constructor(name)) {
    throw Error(ErrorKind::UnknownType, "constructor '" + name + "'");
  }
  const Constructor& ctor = g.constructor(name);
  if (e.items.size() - 1 != ctor.fields.size()) {
    throw Error(ErrorKind::ArityViolation,
                name + " given " + std::to_string(e.items.size() - 1) + " values, expected " +
                    std::to_string(ctor.fields.size()),
                name);
  }
  std::vector<FieldValue> values;
  for (size_t i = 0; i < ctor.fields.size(); ++i) {
    const Field& field = ctor.fields[i];
    const SExpr& item = e.items[i + 1];
    if (field.cardinality == Cardinality::Single) {
      if (g.is_primitive(field.type)) {
        if (item.kind == SExpr::Kind::String) {
          values.push_back(FieldValue::of_tokens({item.text}));
        } else {
          values.push_back(interp_list_field(item, g, field));  // multi-token form
        }
      } else {
        values.push_back(FieldValue::of_children({interp_node(item, g)}));
      }
    } else {
      values.push_back(interp_list_field(item, g, field));
    }
  }
  return make_node(name, std::move(values));
}

}  // namespace

void validate(const AstNode& node, const AsdlGrammar& g, const std::string& expected_type,
              const ValidateOptions& opts) {
  validate_impl(node, g, expected_type, opts, "");
}

std::string to_sexpr(const AstNode& node, const AsdlGrammar& g) {
  std::string out;
  render_sexpr(node, g, out);
  return out;
}

AstPtr parse_sexpr(const std::string& text, const AsdlGrammar& g, const std::string& expected_type,
                   const ValidateOptions& opts) {
  SExpr e = SexprReader(text).read_all();
  AstPtr node = interp_node(e, g);
  validate(*node, g, expected_type, opts);
  return node;
}

bool ast_equal(const AstNode& a, const AstNode& b) {
  if (a.constructor != b.constructor) return false;
  if (a.field_values.size() != b.field_values.size()) return false;
  for (size_t i = 0; i < a.field_values.size(); ++i) {
    const FieldValue& va = a.field_values[i];
    const FieldValue& vb = b.field_values[i];
    if (va.kind != vb.kind) return false;
    if (va.tokens != vb.tokens) return false;
    if (va.children.size() != vb.children.size()) return false;
    for (size_t j = 0; j < va.children.size(); ++j) {
      if (!ast_equal(*va.children[j], *vb.children[j])) return false;
    }
  }
  return true;
}

int ast_size(const AstNode& node, const AsdlGrammar& g) {
  const Constructor& ctor = g.constructor(node.constructor);
  int size = 1;
  for (size_t i = 0; i < ctor.fields.size(); ++i) {
    const Field& field = ctor.fields[i];
    const FieldValue& value = node.field_values[i];
    if (value.kind == FieldValue::Kind::Absent) {
      size += 1;  // Reduce marking the absent optional
      continue;
    }
    if (value.kind == FieldValue::Kind::Tokens) {
      size += static_cast<int>(value.tokens.size());
    } else {
      for (const auto& child : value.children) size += ast_size(*child, g);
    }
    if (field.cardinality == Cardinality::Multiple) size += 1;  // terminating Reduce
  }
  return size;
}

int ast_depth(const AstNode& node) {
  int best = 0;
  for (const auto& value : node.field_values) {
    for (const auto& child : value.children) best = std::max(best, ast_depth(*child));
  }
  return best + 1;
}

namespace {

constexpr int kUnreachable = std::numeric_limits<int>::max() / 2;

std::unordered_map<std::string, int> min_depths(const AsdlGrammar& g) {
  std::unordered_map<std::string, int> depth;
  for (const auto& type : g.composite_types()) depth[type] = kUnreachable;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& type : g.composite_types()) {
      for (const auto& ctor : g.constructors_of(type)) {
        int need = 0;
        for (const auto& field : ctor.fields) {
          if (field.cardinality == Cardinality::Single && g.is_composite(field.type)) {
            need = std::max(need, depth[field.type]);
          }
        }
        int candidate = need >= kUnreachable ? kUnreachable : 1 + need;
        if (candidate < depth[type]) {
          depth[type] = candidate;
          changed = true;
        }
      }
    }
  }
  return depth;
}

AstPtr random_ast_impl(const AsdlGrammar& g, Rng& rng, const std::string& type, int depth_budget,
                       const std::vector<std::string>& token_pool,
                       const std::unordered_map<std::string, int>& min_depth) {
  std::vector<const Constructor*> feasible;
  for (const auto& ctor : g.constructors_of(type)) {
    bool ok = true;
    for (const auto& field : ctor.fields) {
      if (field.cardinality == Cardinality::Single && g.is_composite(field.type) &&
          min_depth.at(field.type) > depth_budget - 1) {
        ok = false;
        break;
      }
    }
    if (ok) feasible.push_back(&ctor);
  }
  if (feasible.empty()) {
    throw Error(ErrorKind::DepthUnsatisfiable,
                "no constructor of '" + type + "' fits in depth " + std::to_string(depth_budget));
  }
  const Constructor& ctor = *feasible[static_cast<size_t>(rng.uniform_int(
      static_cast<int>(feasible.size())))];

  auto pick_token = [&] { return token_pool[static_cast<size_t>(
      rng.uniform_int(static_cast<int>(token_pool.size())))]; };

  std::vector<FieldValue> values;
  for (const auto& field : ctor.fields) {
    const bool primitive = g.is_primitive(field.type);
    const bool child_fits = primitive || min_depth.at(field.type) <= depth_budget - 1;
    switch (field.cardinality) {
      case Cardinality::Single:
        if (primitive) {
          values.push_back(FieldValue::of_tokens({pick_token()}));
        } else {
          values.push_back(FieldValue::of_children(
              {random_ast_impl(g, rng, field.type, depth_budget - 1, token_pool, min_depth)}));
        }
        break;
      case Cardinality::Optional:
        if (child_fits && rng.bernoulli(0.5)) {
          if (primitive) {
            values.push_back(FieldValue::of_tokens({pick_token()}));
          } else {
            values.push_back(FieldValue::of_children(
                {random_ast_impl(g, rng, field.type, depth_budget - 1, token_pool, min_depth)}));
          }
        } else {
          values.push_back(FieldValue::absent());
        }
        break;
      case Cardinality::Multiple: {
        int count = child_fits ? rng.uniform_int(3) : 0;
        if (primitive) {
          std::vector<std::string> tokens;
          for (int k = 0; k < count; ++k) tokens.push_back(pick_token());
          values.push_back(FieldValue::of_tokens(std::move(tokens)));
        } else {
          std::vector<AstPtr> children;
          for (int k = 0; k < count; ++k) {
            children.push_back(
                random_ast_impl(g, rng, field.type, depth_budget - 1, token_pool, min_depth));
          }
          values.push_back(FieldValue::of_children(std::move(children)));
        }
        break;
      }
    }
  }
  return make_node(ctor.name, std::move(values));
}

}  // namespace

AstPtr random_ast(const AsdlGrammar& g, Rng& rng, int max_depth,
                  const std::vector<std::string>& token_pool) {
  if (max_depth < 1) throw Error(ErrorKind::DepthUnsatisfiable, "max_depth must be >= 1");
  if (token_pool.empty()) throw Error(ErrorKind::DepthUnsatisfiable, "token pool is empty");
  auto depth = min_depths(g);
  if (depth.at(g.root_type()) > max_depth) {
    throw Error(ErrorKind::DepthUnsatisfiable,
                "root type '" + g.root_type() + "' needs depth " +
                    std::to_string(depth.at(g.root_type())));
  }
  return random_ast_impl(g, rng, g.root_type(), max_depth, token_pool, depth);
}

}  // namespace seq2tree
