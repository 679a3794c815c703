#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seq2tree/grammar.hpp"
#include "seq2tree/tensor.hpp"
#include "seq2tree/transition.hpp"

namespace seq2tree {

/// Token table with dense ids and reserved {pad, unk, sos} at 0, 1, 2.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;

  Vocabulary();

  int add(const std::string& token);  // returns existing id if present
  bool has(const std::string& token) const { return ids_.count(token) != 0; }
  int id_or_unk(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct ModelConfig {
  int hidden = 256;        // per-direction encoder width and decoder width
  int embed = 128;         // source word embedding
  int action_embed = 128;  // previous-action and output-action embeddings
  int type_embed = 128;    // frontier field type embedding
  std::string attention = "bilinear";  // or "additive"
  double dropout = 0.0;                // applied to the decoder LSTM input while training
};

/// One gold example lowered to what the decoders consume: source ids, the
/// shared copy support, and per-order step records. The support lays out
/// target-vocabulary ids first, then utterance surface tokens absent from
/// the vocabulary in first-occurrence order; both orders share it, so
/// aligned distributions are directly comparable.
struct CompiledStep {
  Action gold;
  bool is_primitive = false;
  std::vector<uint8_t> mask;  // composite steps: over ActionVocab ids
  int gold_action_id = -1;    // composite steps
  int gold_slot = -1;         // primitive steps: support slot
  int parent_timestep = -1;
  int field_type_id = -1;
};

struct CompiledExample {
  std::vector<std::string> src_tokens;
  std::vector<int> src_ids;
  std::vector<int> slot_of;  // utterance position -> support slot
  std::vector<std::string> extra_tokens;
  int support_size = 0;
  std::vector<CompiledStep> steps_pre;
  std::vector<CompiledStep> steps_bfs;
  AlignmentMap align;
  std::string gold_sexpr;
  int tree_size = 0;

  const std::vector<CompiledStep>& steps(TraversalOrder order) const {
    return order == TraversalOrder::PreOrder ? steps_pre : steps_bfs;
  }
};

struct EncodedUtterance {
  std::vector<int> token_ids;
  Tensor h;  // (2·hidden, source length), one column per position
};

struct DecoderStepState {
  Tensor s;
  Tensor cell;
  Tensor s_tilde;
  Tensor context;
};

struct StepResult {
  Tensor dist;      // full distribution column (masked composite or support mixture)
  Tensor log_gold;  // 1x1
  bool is_primitive = false;
};

struct SequenceResult {
  std::vector<StepResult> steps;
  Tensor total_log_prob;  // 1x1, Σ_t log p(gold_t)
};

/// The traversal-agnostic encoder-decoder. The instance owns no parameter
/// values, only the naming scheme: all state lives in a ParameterStore so
/// two models may share an encoder prefix. Construction is cheap; the same
/// instance serves training tapes and per-step inference tapes.
class Model {
 public:
  Model(const AsdlGrammar& g, ModelConfig config, Vocabulary src_vocab, Vocabulary tgt_vocab,
        std::string enc_prefix, std::string dec_prefix);

  /// Creates any missing parameters, each initialized U[lo, hi] from the
  /// matching stream; a shared encoder already present is left untouched.
  void create_params(ParameterStore& store, Rng& enc_rng, Rng& dec_rng, double lo = -0.1,
                     double hi = 0.1) const;
  std::vector<std::string> param_names() const;

  EncodedUtterance encode(Tape& tape, ParameterStore& store,
                          const std::vector<int>& token_ids) const;

  DecoderStepState decode_step(Tape& tape, ParameterStore& store, const Tensor& prev_action_emb,
                               const Tensor& s_tilde_prev, const Tensor& parent_hidden,
                               const Tensor& type_emb, const Tensor& s_prev,
                               const Tensor& cell_prev, const EncodedUtterance& enc, bool train,
                               Rng* dropout_rng) const;

  Tensor composite_distribution(Tape& tape, ParameterStore& store, const Tensor& s_tilde,
                                const std::vector<uint8_t>& mask) const;
  Tensor primitive_distribution(Tape& tape, ParameterStore& store, const Tensor& s_tilde,
                                const EncodedUtterance& enc, const std::vector<int>& slot_of,
                                int support_size) const;

  /// Teacher-forced pass over one compiled example in the given order.
  SequenceResult sequence_log_prob(Tape& tape, ParameterStore& store, const CompiledExample& ex,
                                   TraversalOrder order, bool train, Rng* dropout_rng) const;

  /// Mask-constrained beam search; beam_width 1 is greedy decoding.
  /// Hypotheses are ranked by length-normalized log-probability.
  AstPtr beam_decode(ParameterStore& store, const std::vector<std::string>& utterance,
                     TraversalOrder order, int beam_width, int max_steps) const;

  const AsdlGrammar& grammar() const { return *grammar_; }
  const ActionVocab& action_vocab() const { return avocab_; }
  const Vocabulary& src_vocab() const { return src_vocab_; }
  const Vocabulary& tgt_vocab() const { return tgt_vocab_; }
  const ModelConfig& config() const { return config_; }
  const std::string& enc_prefix() const { return enc_prefix_; }
  const std::string& dec_prefix() const { return dec_prefix_; }

  int sos_action_column() const { return avocab_.size(); }

 private:
  Tensor prev_action_embedding(Tape& tape, ParameterStore& store,
                               const std::optional<Action>& prev) const;
  Tensor attention_context(Tape& tape, ParameterStore& store, const Tensor& s,
                           const Tensor& enc_h) const;

  const AsdlGrammar* grammar_;
  ActionVocab avocab_;
  ModelConfig config_;
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  std::string enc_prefix_;
  std::string dec_prefix_;
};

/// Lowers a gold (utterance, AST) pair to both traversals' step records.
/// Grammars whose primitive frontiers can admit Reduce are rejected here:
/// the primitive head's support holds tokens only.
CompiledExample compile_example(const std::vector<std::string>& utterance, const AstNode& ast,
                                const AsdlGrammar& g, const ActionVocab& avocab,
                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

}  // namespace seq2tree
