#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seq2tree/corpus.hpp"
#include "seq2tree/model.hpp"
#include "seq2tree/tensor.hpp"

namespace seq2tree {

enum class TrainMode { Mutual, MleSingle, KdFrozen, MutualSameOrder };

const char* mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);  // accepts CLI aliases mle, kd, ml2

struct TrainConfig {
  double lambda = 0.5;
  int batch_size = 10;
  int epochs = 200;
  int patience = 20;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::Mutual;
  TraversalOrder order_a = TraversalOrder::PreOrder;
  TraversalOrder order_b = TraversalOrder::BreadthFirst;
  std::string kl_nodes = "all";  // all | composite_only
  OptimizerConfig optimizer;
  bool share_encoder = true;
  bool single_combined_step = false;  // sum both objectives, one step
  std::string single_role = "a";      // mle_single: which role to train
  ModelConfig model;
  double init_lo = -0.1;
  double init_hi = 0.1;
  int min_freq = 1;
  int eval_beam = 1;
  int max_decode_steps = 512;
  std::string teacher_checkpoint;  // kd_frozen: load the teacher; fresh-init if empty
};

struct EpochStats {
  int epoch = 0;
  double loss_a = 0, loss_b = 0;
  double kl_a = 0, kl_b = 0;  // mean KL penalty per example (already λ/T-free)
  double val_acc_a = 0, val_acc_b = 0;
};

/// Per-example objectives per the two-objective scheme: each J adds the
/// λ/T-scaled sum of node-aligned KL terms against the *detached* partner
/// distributions to its own MLE term.
struct ExampleLosses {
  Tensor j_a, j_b;
  Tensor mle_a, mle_b;
  double kl_sum_a = 0, kl_sum_b = 0;  // raw KL sums (unscaled)
  int kl_terms = 0;
};

Tensor mle_loss(Tape& tape, const SequenceResult& seq);

ExampleLosses mutual_losses(Tape& tape, const Model& model_a, const Model& model_b,
                            ParameterStore& store, const CompiledExample& ex,
                            TraversalOrder order_a, TraversalOrder order_b, double lambda,
                            const std::string& kl_nodes, bool train_a, bool train_b,
                            Rng* dropout_a, Rng* dropout_b);

struct CheckpointMeta {
  int format_version = 1;
  std::string grammar_text;
  std::uint64_t grammar_hash = 0;
  ModelConfig model;
  TraversalOrder order = TraversalOrder::PreOrder;
  std::string enc_prefix, dec_prefix;
  std::vector<std::string> src_tokens, tgt_tokens;
  int epoch = -1;
  double val_acc = 0;
};

void save_checkpoint(const std::string& dir, const Model& model, const ParameterStore& store,
                     const CheckpointMeta& meta);

struct LoadedModel {
  std::unique_ptr<AsdlGrammar> grammar;
  std::unique_ptr<Model> model;
  ParameterStore store;
  CheckpointMeta meta;
};

LoadedModel load_checkpoint(const std::string& dir);

/// Throws GrammarHashMismatch unless the checkpoint was trained on g.
void ensure_same_grammar(const LoadedModel& loaded, const AsdlGrammar& g);

struct TrainResult {
  std::vector<EpochStats> history;
  double best_acc_a = 0, best_acc_b = 0;
  int best_epoch_a = -1, best_epoch_b = -1;
  std::string ckpt_a, ckpt_b;  // checkpoint directories; empty when the role is absent
  ParameterStore final_params;
  std::vector<std::string> params_a, params_b;
};

/// Algorithm: per batch, both objectives are computed from the same forward
/// passes, then the two optimizers step sequentially (θ first, then θ′).
/// Best checkpoints by validation exact match; stops after `patience`
/// epochs without improvement on either model. out_dir receives a/ and b/
/// checkpoints plus history.jsonl; pass "" to skip all file output.
TrainResult train(const AsdlGrammar& g, const Dataset& train_data, const Dataset& valid_data,
                  const TrainConfig& config, const std::string& out_dir);

}  // namespace seq2tree
