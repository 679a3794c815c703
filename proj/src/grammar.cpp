#include "seq2tree/grammar.hpp"

#include <cctype>
#include <sstream>

#include "seq2tree/rng.hpp"

namespace seq2tree {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::EmptyGrammar: return "EmptyGrammar";
    case ErrorKind::UnknownType: return "UnknownType";
    case ErrorKind::DuplicateConstructor: return "DuplicateConstructor";
    case ErrorKind::PrimitiveTypeQueried: return "PrimitiveTypeQueried";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::ArityViolation: return "ArityViolation";
    case ErrorKind::CardinalityViolation: return "CardinalityViolation";
    case ErrorKind::SexprSyntaxError: return "SexprSyntaxError";
    case ErrorKind::DepthUnsatisfiable: return "DepthUnsatisfiable";
    case ErrorKind::InvalidAction: return "InvalidAction";
    case ErrorKind::IncompleteTree: return "IncompleteTree";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::UnrecordedTensor: return "UnrecordedTensor";
    case ErrorKind::EmptyUtterance: return "EmptyUtterance";
    case ErrorKind::MaxStepsExceeded: return "MaxStepsExceeded";
    case ErrorKind::SupportMismatch: return "SupportMismatch";
    case ErrorKind::DataGrammarMismatch: return "DataGrammarMismatch";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::ValidationFailed: return "ValidationFailed";
    case ErrorKind::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorKind::GrammarHashMismatch: return "GrammarHashMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Error";
}

const char* cardinality_marker(Cardinality c) {
  switch (c) {
    case Cardinality::Single: return "";
    case Cardinality::Optional: return "?";
    case Cardinality::Multiple: return "*";
  }
  return "";
}

namespace {

struct Token {
  enum Kind { Ident, Punct, End } kind = End;
  std::string text;
  int line = 0;
  int col = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    skip_space_and_comments();
    Token tok;
    tok.line = line_;
    tok.col = col_;
    if (pos_ >= text_.size()) {
      tok.kind = Token::End;
      return tok;
    }
    char c = text_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        advance();
      }
      tok.kind = Token::Ident;
      tok.text = text_.substr(start, pos_ - start);
      return tok;
    }
    if (c == '=' || c == '|' || c == '(' || c == ')' || c == ',' || c == '?' || c == '*') {
      tok.kind = Token::Punct;
      tok.text = std::string(1, c);
      advance();
      return tok;
    }
    throw Error(ErrorKind::SyntaxError, "unexpected character '" + std::string(1, c) + "'",
                "line " + std::to_string(line_) + ", col " + std::to_string(col_));
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        return;
      }
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

[[noreturn]] void fail_at(const Token& tok, const std::string& message) {
  throw Error(ErrorKind::SyntaxError, message,
              "line " + std::to_string(tok.line) + ", col " + std::to_string(tok.col));
}

}  // namespace

namespace detail {

class GrammarParser {
 public:
  explicit GrammarParser(const std::string& text) : lexer_(text) { shift(); }

  AsdlGrammar parse() {
    bool saw_type_def = false;
    while (cur_.kind != Token::End) {
      if (cur_.kind != Token::Ident) fail_at(cur_, "expected identifier");
      if (cur_.text == "primitive" && !next_is("=")) {
        if (saw_type_def) fail_at(cur_, "primitive directives must precede type definitions");
        shift();
        parse_primitive_list();
      } else if (cur_.text == "root" && !next_is("=")) {
        shift();
        if (cur_.kind != Token::Ident) fail_at(cur_, "expected type name after 'root'");
        root_override_ = cur_.text;
        shift();
      } else {
        parse_type_def();
        saw_type_def = true;
      }
    }
    return finish();
  }

 private:
  bool next_is(const std::string& punct) const {
    return peek_.kind == Token::Punct && peek_.text == punct;
  }

  void shift() {
    cur_ = has_peek_ ? peek_ : lexer_.next();
    peek_ = lexer_.next();
    has_peek_ = true;
  }

  void expect_punct(const std::string& p) {
    if (cur_.kind != Token::Punct || cur_.text != p) fail_at(cur_, "expected '" + p + "'");
    shift();
  }

  std::string expect_ident(const char* what) {
    if (cur_.kind != Token::Ident) fail_at(cur_, std::string("expected ") + what);
    std::string text = cur_.text;
    shift();
    return text;
  }

  void parse_primitive_list() {
    while (true) {
      g_.primitives_.push_back(expect_ident("primitive type name"));
      if (cur_.kind == Token::Punct && cur_.text == ",") {
        shift();
        continue;
      }
      break;
    }
  }

  void parse_type_def() {
    std::string type = expect_ident("type name");
    expect_punct("=");
    if (g_.type_defs_.count(type)) fail_at(cur_, "type '" + type + "' redefined");
    g_.type_order_.push_back(type);
    auto& ctors = g_.type_defs_[type];
    ctors.push_back(parse_constructor(type));
    while (cur_.kind == Token::Punct && cur_.text == "|") {
      shift();
      ctors.push_back(parse_constructor(type));
    }
  }

  Constructor parse_constructor(const std::string& result_type) {
    Constructor ctor;
    ctor.name = expect_ident("constructor name");
    ctor.result_type = result_type;
    if (cur_.kind == Token::Punct && cur_.text == "(") {
      shift();
      if (!(cur_.kind == Token::Punct && cur_.text == ")")) {
        ctor.fields.push_back(parse_field());
        while (cur_.kind == Token::Punct && cur_.text == ",") {
          shift();
          ctor.fields.push_back(parse_field());
        }
      }
      expect_punct(")");
    }
    for (size_t i = 0; i < ctor.fields.size(); ++i) {
      for (size_t j = i + 1; j < ctor.fields.size(); ++j) {
        if (ctor.fields[i].name == ctor.fields[j].name) {
          fail_at(cur_, "duplicate field name '" + ctor.fields[i].name + "' in constructor '" +
                            ctor.name + "'");
        }
      }
    }
    return ctor;
  }

  Field parse_field() {
    Field field;
    field.type = expect_ident("field type");
    if (cur_.kind == Token::Punct && (cur_.text == "?" || cur_.text == "*")) {
      field.cardinality = cur_.text == "?" ? Cardinality::Optional : Cardinality::Multiple;
      shift();
    }
    field.name = expect_ident("field name");
    return field;
  }

  AsdlGrammar finish() {
    if (g_.type_order_.empty()) throw Error(ErrorKind::EmptyGrammar, "no type definitions");
    g_.root_type_ = root_override_.value_or(g_.type_order_.front());
    if (!g_.type_defs_.count(g_.root_type_)) {
      throw Error(ErrorKind::UnknownType, "root type '" + g_.root_type_ + "' is not defined");
    }
    for (const auto& type : g_.type_order_) {
      for (const auto& ctor : g_.type_defs_.at(type)) {
        for (const auto& field : ctor.fields) {
          bool declared = g_.type_defs_.count(field.type) > 0;
          for (const auto& p : g_.primitives_) declared = declared || p == field.type;
          if (!declared) throw Error(ErrorKind::UnknownType, field.type);
        }
      }
    }
    g_.index();
    return std::move(g_);
  }

  Lexer lexer_;
  Token cur_;
  Token peek_;
  bool has_peek_ = false;
  AsdlGrammar g_;
  std::optional<std::string> root_override_;
};

}  // namespace detail

void AsdlGrammar::index() {
  all_constructors_.clear();
  constructor_index_.clear();
  for (const auto& type : type_order_) {
    for (const auto& ctor : type_defs_.at(type)) {
      if (constructor_index_.count(ctor.name)) {
        throw Error(ErrorKind::DuplicateConstructor, ctor.name);
      }
      constructor_index_[ctor.name] = static_cast<int>(all_constructors_.size());
      all_constructors_.push_back(ctor);
    }
  }
  type_ids_.clear();
  int next_id = 0;
  for (const auto& type : type_order_) type_ids_[type] = next_id++;
  for (const auto& p : primitives_) {
    if (type_defs_.count(p)) {
      throw Error(ErrorKind::SyntaxError, "type '" + p + "' is both primitive and composite");
    }
    if (type_ids_.count(p)) continue;  // duplicate primitive declaration is harmless
    type_ids_[p] = next_id++;
  }
}

bool AsdlGrammar::is_primitive(const std::string& type) const {
  for (const auto& p : primitives_) {
    if (p == type) return true;
  }
  return false;
}

bool AsdlGrammar::is_composite(const std::string& type) const {
  return type_defs_.count(type) > 0;
}

const std::vector<Constructor>& AsdlGrammar::constructors_of(const std::string& t) const {
  auto it = type_defs_.find(t);
  if (it == type_defs_.end()) {
    if (is_primitive(t)) throw Error(ErrorKind::PrimitiveTypeQueried, t);
    throw Error(ErrorKind::UnknownType, t);
  }
  return it->second;
}

const Constructor& AsdlGrammar::constructor(const std::string& name) const {
  auto it = constructor_index_.find(name);
  if (it == constructor_index_.end()) throw Error(ErrorKind::UnknownType, "constructor '" + name + "'");
  return all_constructors_[static_cast<size_t>(it->second)];
}

bool AsdlGrammar::has_constructor(const std::string& name) const {
  return constructor_index_.count(name) > 0;
}

int AsdlGrammar::type_id(const std::string& type) const {
  auto it = type_ids_.find(type);
  if (it == type_ids_.end()) throw Error(ErrorKind::UnknownType, type);
  return it->second;
}

std::string AsdlGrammar::render() const {
  std::ostringstream out;
  if (!primitives_.empty()) {
    out << "primitive ";
    for (size_t i = 0; i < primitives_.size(); ++i) {
      if (i) out << ", ";
      out << primitives_[i];
    }
    out << "\n";
  }
  out << "root " << root_type_ << "\n";
  for (const auto& type : type_order_) {
    out << type << " =";
    const auto& ctors = type_defs_.at(type);
    for (size_t i = 0; i < ctors.size(); ++i) {
      out << (i ? " | " : " ") << ctors[i].name;
      if (!ctors[i].fields.empty()) {
        out << "(";
        for (size_t j = 0; j < ctors[i].fields.size(); ++j) {
          if (j) out << ", ";
          const Field& f = ctors[i].fields[j];
          out << f.type << cardinality_marker(f.cardinality) << " " << f.name;
        }
        out << ")";
      }
    }
    out << "\n";
  }
  return out.str();
}

bool AsdlGrammar::operator==(const AsdlGrammar& other) const {
  return primitives_ == other.primitives_ && type_order_ == other.type_order_ &&
         type_defs_ == other.type_defs_ && root_type_ == other.root_type_;
}

AsdlGrammar parse_grammar(const std::string& text) {
  bool blank = true;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      blank = false;
      break;
    }
  }
  if (blank) throw Error(ErrorKind::EmptyGrammar, "grammar source is empty");
  return detail::GrammarParser(text).parse();
}

ActionVocab action_vocabulary(const AsdlGrammar& g) {
  ActionVocab vocab;
  for (const auto& ctor : g.constructors()) {
    vocab.apply_constr_ids[ctor.name] = static_cast<int>(vocab.constructor_names.size());
    vocab.constructor_names.push_back(ctor.name);
  }
  vocab.reduce_id = static_cast<int>(vocab.constructor_names.size());
  return vocab;
}

int ActionVocab::id_of(const std::string& ctor_name) const {
  auto it = apply_constr_ids.find(ctor_name);
  if (it == apply_constr_ids.end()) {
    throw Error(ErrorKind::UnknownType, "constructor '" + ctor_name + "'");
  }
  return it->second;
}

uint64_t grammar_hash(const AsdlGrammar& g) { return fnv1a64(g.render()); }

}  // namespace seq2tree
