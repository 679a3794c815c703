#pragma once

#include <stdexcept>
#include <string>

namespace seq2tree {

enum class ErrorKind {
  // grammar
  SyntaxError,
  EmptyGrammar,
  UnknownType,
  DuplicateConstructor,
  PrimitiveTypeQueried,
  // ast
  TypeMismatch,
  ArityViolation,
  CardinalityViolation,
  SexprSyntaxError,
  DepthUnsatisfiable,
  // transition
  InvalidAction,
  IncompleteTree,
  // numerics
  ShapeMismatch,
  AllMasked,
  NotNormalized,
  UnrecordedTensor,
  // model
  EmptyUtterance,
  MaxStepsExceeded,
  SupportMismatch,
  // train / corpus
  DataGrammarMismatch,
  DivergenceDetected,
  MalformedLine,
  ValidationFailed,
  FormatVersionMismatch,
  GrammarHashMismatch,
  // plumbing
  IoError,
  ConfigError,
};

const char* error_kind_name(ErrorKind kind);

/// Single exception type for the whole library; `kind` identifies the
/// contract violation, `where` carries a line number or an AST path when
/// one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  Error(ErrorKind kind, std::string message, std::string where)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message +
                           " (at " + where + ")"),
        kind_(kind),
        where_(std::move(where)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& where() const { return where_; }

 private:
  ErrorKind kind_;
  std::string where_;
};

}  // namespace seq2tree
