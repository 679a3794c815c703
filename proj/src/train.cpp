#include "seq2tree/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "seq2tree/error.hpp"
#include "seq2tree/eval.hpp"

namespace seq2tree {

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Mutual: return "mutual";
    case TrainMode::MleSingle: return "mle_single";
    case TrainMode::KdFrozen: return "kd_frozen";
    case TrainMode::MutualSameOrder: return "mutual_same_order";
  }
  return "?";
}

TrainMode parse_mode(const std::string& name) {
  if (name == "mutual") return TrainMode::Mutual;
  if (name == "mle_single" || name == "mle") return TrainMode::MleSingle;
  if (name == "kd_frozen" || name == "kd") return TrainMode::KdFrozen;
  if (name == "mutual_same_order" || name == "ml2") return TrainMode::MutualSameOrder;
  throw Error(ErrorKind::ConfigError, "unknown training mode '" + name + "'");
}

Tensor mle_loss(Tape& tape, const SequenceResult& seq) {
  (void)tape;
  if (seq.steps.empty()) throw Error(ErrorKind::ShapeMismatch, "empty sequence has no loss");
  return scale(seq.total_log_prob, -1.0 / static_cast<double>(seq.steps.size()));
}

ExampleLosses mutual_losses(Tape& tape, const Model& model_a, const Model& model_b,
                            ParameterStore& store, const CompiledExample& ex,
                            TraversalOrder order_a, TraversalOrder order_b, double lambda,
                            const std::string& kl_nodes, bool train_a, bool train_b,
                            Rng* dropout_a, Rng* dropout_b) {
  if (kl_nodes != "all" && kl_nodes != "composite_only")
    throw Error(ErrorKind::ConfigError, "kl_nodes must be all|composite_only");
  SequenceResult ra = model_a.sequence_log_prob(tape, store, ex, order_a, train_a, dropout_a);
  SequenceResult rb = model_b.sequence_log_prob(tape, store, ex, order_b, train_b, dropout_b);
  ExampleLosses out;
  out.mle_a = mle_loss(tape, ra);
  out.mle_b = mle_loss(tape, rb);
  if (lambda == 0) {
    out.j_a = out.mle_a;
    out.j_b = out.mle_b;
    return out;
  }
  std::size_t T = ra.steps.size();
  if (rb.steps.size() != T)
    throw Error(ErrorKind::SupportMismatch, "the two traversals disagree on sequence length");
  Tensor kl_acc_a = tape.input(0.0);
  Tensor kl_acc_b = tape.input(0.0);
  for (std::size_t t_a = 0; t_a < T; ++t_a) {
    std::size_t t_b;
    if (order_a == order_b)
      t_b = t_a;
    else if (order_a == TraversalOrder::PreOrder)
      t_b = static_cast<std::size_t>(ex.align.pre_to_bfs[t_a]);
    else
      t_b = static_cast<std::size_t>(ex.align.bfs_to_pre[t_a]);
    const StepResult& sa = ra.steps[t_a];
    const StepResult& sb = rb.steps[t_b];
    if (sa.is_primitive != sb.is_primitive ||
        sa.dist.value().rows() != sb.dist.value().rows())
      throw Error(ErrorKind::SupportMismatch,
                  "aligned steps carry different supports (transition/masking bug)");
    if (kl_nodes == "composite_only" && sa.is_primitive) continue;
    Tensor term_a = kl_divergence(detach(sb.dist), sa.dist);
    Tensor term_b = kl_divergence(detach(sa.dist), sb.dist);
    out.kl_sum_a += term_a.scalar();
    out.kl_sum_b += term_b.scalar();
    out.kl_terms += 1;
    kl_acc_a = add(kl_acc_a, term_a);
    kl_acc_b = add(kl_acc_b, term_b);
  }
  double w = lambda / static_cast<double>(T);
  out.j_a = add(out.mle_a, scale(kl_acc_a, w));
  out.j_b = add(out.mle_b, scale(kl_acc_b, w));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::json model_config_json(const ModelConfig& m) {
  return {{"hidden", m.hidden},
          {"embed", m.embed},
          {"action_embed", m.action_embed},
          {"type_embed", m.type_embed},
          {"attention", m.attention},
          {"dropout", m.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.hidden = j.at("hidden").get<int>();
  m.embed = j.at("embed").get<int>();
  m.action_embed = j.at("action_embed").get<int>();
  m.type_embed = j.at("type_embed").get<int>();
  m.attention = j.at("attention").get<std::string>();
  m.dropout = j.at("dropout").get<double>();
  return m;
}

std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<unk>" || tokens[2] != "<sos>")
    throw Error(ErrorKind::IoError, "checkpoint vocabulary lacks the reserved prefix");
  for (std::size_t i = 3; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model, const ParameterStore& store,
                     const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format_version"] = meta.format_version;
  j["grammar"] = meta.grammar_text;
  j["grammar_hash"] = hash_hex(meta.grammar_hash);
  j["model"] = model_config_json(meta.model);
  j["order"] = order_name(meta.order);
  j["enc_prefix"] = meta.enc_prefix;
  j["dec_prefix"] = meta.dec_prefix;
  j["src_vocab"] = meta.src_tokens;
  j["tgt_vocab"] = meta.tgt_tokens;
  j["epoch"] = meta.epoch;
  j["val_acc"] = meta.val_acc;
  std::ofstream out(dir + "/meta.json");
  if (!out.good()) throw Error(ErrorKind::IoError, "cannot write '" + dir + "/meta.json'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw Error(ErrorKind::IoError, "short write to '" + dir + "/meta.json'");

  ParameterStore subset;
  for (const std::string& name : model.param_names()) {
    const Mat& v = store.value(name);
    subset.create(name, static_cast<int>(v.rows()), static_cast<int>(v.cols())) = v;
  }
  save_params(subset, dir + "/params.bin");
}

LoadedModel load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in.good()) throw Error(ErrorKind::IoError, "cannot read '" + dir + "/meta.json'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorKind::IoError, "'" + dir + "/meta.json' is not a JSON object");
  CheckpointMeta meta;
  meta.format_version = j.at("format_version").get<int>();
  if (meta.format_version != 1)
    throw Error(ErrorKind::FormatVersionMismatch,
                "checkpoint format " + std::to_string(meta.format_version) +
                    " is not supported (want 1)");
  meta.grammar_text = j.at("grammar").get<std::string>();
  meta.grammar_hash = hash_from_hex(j.at("grammar_hash").get<std::string>());
  meta.model = model_config_from_json(j.at("model"));
  meta.order = parse_order(j.at("order").get<std::string>());
  meta.enc_prefix = j.at("enc_prefix").get<std::string>();
  meta.dec_prefix = j.at("dec_prefix").get<std::string>();
  meta.src_tokens = j.at("src_vocab").get<std::vector<std::string>>();
  meta.tgt_tokens = j.at("tgt_vocab").get<std::vector<std::string>>();
  meta.epoch = j.at("epoch").get<int>();
  meta.val_acc = j.at("val_acc").get<double>();

  LoadedModel loaded;
  loaded.grammar = std::make_unique<AsdlGrammar>(parse_grammar(meta.grammar_text));
  if (grammar_hash(*loaded.grammar) != meta.grammar_hash)
    throw Error(ErrorKind::GrammarHashMismatch,
                "checkpoint grammar text does not match its recorded hash");
  loaded.model = std::make_unique<Model>(*loaded.grammar, meta.model,
                                         vocab_from_tokens(meta.src_tokens),
                                         vocab_from_tokens(meta.tgt_tokens), meta.enc_prefix,
                                         meta.dec_prefix);
  load_params(loaded.store, dir + "/params.bin");
  for (const std::string& name : loaded.model->param_names())
    if (!loaded.store.has(name))
      throw Error(ErrorKind::IoError, "checkpoint blob lacks parameter '" + name + "'");
  loaded.meta = std::move(meta);
  return loaded;
}

void ensure_same_grammar(const LoadedModel& loaded, const AsdlGrammar& g) {
  if (grammar_hash(g) != loaded.meta.grammar_hash)
    throw Error(ErrorKind::GrammarHashMismatch,
                "checkpoint was trained on a different grammar");
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Role {
  std::unique_ptr<Model> model;
  TraversalOrder order = TraversalOrder::PreOrder;
  std::unique_ptr<Optimizer> opt;  // absent for a frozen teacher
  Rng dropout{0};
  std::string ckpt_dir;
  double best_acc = -1;
  int best_epoch = -1;
};

void append_history_line(const std::string& out_dir, const EpochStats& s) {
  if (out_dir.empty()) return;
  nlohmann::json j = {{"epoch", s.epoch},       {"loss_a", s.loss_a},
                      {"loss_b", s.loss_b},     {"kl_a", s.kl_a},
                      {"kl_b", s.kl_b},         {"val_acc_a", s.val_acc_a},
                      {"val_acc_b", s.val_acc_b}};
  std::ofstream out(out_dir + "/history.jsonl", std::ios::app);
  if (!out.good())
    throw Error(ErrorKind::IoError, "cannot append to '" + out_dir + "/history.jsonl'");
  out << j.dump() << "\n";
}

/// Copies teacher parameters from a checkpoint into the live store under
/// this run's teacher prefixes.
void adopt_teacher_params(const LoadedModel& teacher, const Model& as_model,
                          ParameterStore& store) {
  const std::string& from_enc = teacher.meta.enc_prefix;
  const std::string& from_dec = teacher.meta.dec_prefix;
  for (const std::string& name : teacher.model->param_names()) {
    std::string suffix, to_prefix;
    if (name.rfind(from_enc + ".", 0) == 0) {
      suffix = name.substr(from_enc.size());
      to_prefix = as_model.enc_prefix();
    } else if (name.rfind(from_dec + ".", 0) == 0) {
      suffix = name.substr(from_dec.size());
      to_prefix = as_model.dec_prefix();
    } else {
      throw Error(ErrorKind::IoError, "teacher parameter '" + name + "' has no known prefix");
    }
    Mat& dst = store.value(to_prefix + suffix);
    const Mat& src = teacher.store.value(name);
    if (dst.rows() != src.rows() || dst.cols() != src.cols())
      throw Error(ErrorKind::ShapeMismatch,
                  "teacher parameter '" + name + "' does not fit this configuration");
    dst = src;
  }
}

}  // namespace

TrainResult train(const AsdlGrammar& g, const Dataset& train_data, const Dataset& valid_data,
                  const TrainConfig& config, const std::string& out_dir) {
  if (config.lambda < 0) throw Error(ErrorKind::ConfigError, "lambda must be >= 0");
  if (config.batch_size < 1) throw Error(ErrorKind::ConfigError, "batch_size must be >= 1");
  if (train_data.examples.empty())
    throw Error(ErrorKind::DataGrammarMismatch, "training set is empty");

  TrainConfig cfg = config;
  // A frozen teacher cannot share an encoder the student updates.
  if (cfg.mode == TrainMode::KdFrozen) cfg.share_encoder = false;
  if (cfg.mode == TrainMode::MutualSameOrder) cfg.order_b = cfg.order_a;
  bool single = cfg.mode == TrainMode::MleSingle;
  bool role_is_b = single && cfg.single_role == "b";
  if (single && cfg.single_role != "a" && cfg.single_role != "b")
    throw Error(ErrorKind::ConfigError, "single_role must be a|b");

  // Stream layout is mode-independent so matched seeds give matched draws.
  Rng root(cfg.seed);
  Rng rng_enc_a = root.fork("enc");
  Rng rng_enc_b = root.fork("enc_b");
  Rng rng_dec_a = root.fork("dec_a");
  Rng rng_dec_b = root.fork("dec_b");
  Rng rng_shuffle = root.fork("shuffle");

  auto [src_vocab, tgt_vocab] = build_vocab(train_data, cfg.min_freq);
  ActionVocab avocab = action_vocabulary(g);

  std::string enc_a = cfg.share_encoder ? "enc" : "enc_a";
  std::string enc_b = cfg.share_encoder ? "enc" : "enc_b";

  ParameterStore store;
  Role a, b;
  bool has_b = !single;
  if (!role_is_b) {
    a.model = std::make_unique<Model>(g, cfg.model, src_vocab, tgt_vocab, enc_a, "dec_a");
    a.order = cfg.order_a;
    a.dropout = root.fork("dropout_a");
    a.model->create_params(store, rng_enc_a, rng_dec_a, cfg.init_lo, cfg.init_hi);
    a.opt = std::make_unique<Optimizer>(cfg.optimizer, a.model->param_names());
  }
  if (has_b || role_is_b) {
    b.model = std::make_unique<Model>(g, cfg.model, src_vocab, tgt_vocab, enc_b, "dec_b");
    b.order = cfg.order_b;
    b.dropout = root.fork("dropout_b");
    b.model->create_params(store, rng_enc_b, rng_dec_b, cfg.init_lo, cfg.init_hi);
    if (cfg.mode != TrainMode::KdFrozen)
      b.opt = std::make_unique<Optimizer>(cfg.optimizer, b.model->param_names());
  }
  if (cfg.mode == TrainMode::KdFrozen && !cfg.teacher_checkpoint.empty()) {
    LoadedModel teacher = load_checkpoint(cfg.teacher_checkpoint);
    ensure_same_grammar(teacher, g);
    if (!(teacher.model->src_vocab() == b.model->src_vocab()) ||
        !(teacher.model->tgt_vocab() == b.model->tgt_vocab()))
      throw Error(ErrorKind::SupportMismatch,
                  "teacher checkpoint vocabulary differs from this corpus");
    adopt_teacher_params(teacher, *b.model, store);
  }

  std::unique_ptr<Optimizer> combined;
  if (cfg.single_combined_step && a.model && b.model) {
    std::vector<std::string> names = a.model->param_names();
    for (const std::string& n : b.model->param_names())
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    combined = std::make_unique<Optimizer>(cfg.optimizer, std::move(names));
  }

  std::vector<CompiledExample> compiled;
  compiled.reserve(train_data.examples.size());
  for (const Example& ex : train_data.examples)
    compiled.push_back(
        compile_example(ex.utterance, *ex.ast, g, avocab, src_vocab, tgt_vocab));

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::filesystem::remove(out_dir + "/history.jsonl");
  }

  CheckpointMeta base_meta;
  base_meta.grammar_text = g.render();
  base_meta.grammar_hash = grammar_hash(g);
  base_meta.model = cfg.model;
  for (const std::string& t : src_vocab.tokens()) base_meta.src_tokens.push_back(t);
  for (const std::string& t : tgt_vocab.tokens()) base_meta.tgt_tokens.push_back(t);

  TrainResult result;
  int n = train_data.size();
  int epochs_without_improvement = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> perm = rng_shuffle.permutation(n);
    double sum_loss_a = 0, sum_loss_b = 0, sum_kl_a = 0, sum_kl_b = 0;
    long kl_terms = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int stop = std::min(n, start + cfg.batch_size);
      Tape tape;
      Tensor batch_a = tape.input(0.0);
      Tensor batch_b = tape.input(0.0);
      for (int i = start; i < stop; ++i) {
        const CompiledExample& ex = compiled[perm[i]];
        if (a.model && b.model) {
          ExampleLosses losses = mutual_losses(
              tape, *a.model, *b.model, store, ex, a.order, b.order, cfg.lambda, cfg.kl_nodes,
              true, cfg.mode != TrainMode::KdFrozen, &a.dropout,
              cfg.mode != TrainMode::KdFrozen ? &b.dropout : nullptr);
          batch_a = add(batch_a, losses.j_a);
          batch_b = add(batch_b, losses.j_b);
          sum_kl_a += losses.kl_sum_a;
          sum_kl_b += losses.kl_sum_b;
          kl_terms += losses.kl_terms;
        } else {
          Role& only = a.model ? a : b;
          SequenceResult r = only.model->sequence_log_prob(tape, store, ex, only.order, true,
                                                           &only.dropout);
          Tensor j = mle_loss(tape, r);
          if (a.model)
            batch_a = add(batch_a, j);
          else
            batch_b = add(batch_b, j);
        }
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      Tensor j_batch_a = scale(batch_a, inv);
      Tensor j_batch_b = scale(batch_b, inv);
      double la = j_batch_a.scalar(), lb = j_batch_b.scalar();
      if (!std::isfinite(la) || !std::isfinite(lb))
        throw Error(ErrorKind::DivergenceDetected,
                    "non-finite loss at epoch " + std::to_string(epoch));
      sum_loss_a += la * (stop - start);
      sum_loss_b += lb * (stop - start);

      if (combined) {
        Tensor j_total = add(j_batch_a, j_batch_b);
        tape.backward(j_total);
        combined->step(store);
        store.zero_grads();
      } else {
        if (a.model && a.opt) {
          tape.backward(j_batch_a);
          a.opt->step(store);
          store.zero_grads();
        }
        if (b.model && b.opt) {
          tape.backward(j_batch_b);
          b.opt->step(store);
          store.zero_grads();
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_a = sum_loss_a / n;
    stats.loss_b = sum_loss_b / n;
    stats.kl_a = kl_terms > 0 ? sum_kl_a / static_cast<double>(kl_terms) : 0;
    stats.kl_b = kl_terms > 0 ? sum_kl_b / static_cast<double>(kl_terms) : 0;

    bool improved = false;
    for (Role* role : {&a, &b}) {
      if (!role->model) continue;
      EvalReport report = evaluate(*role->model, store, valid_data, role->order, cfg.eval_beam,
                                   cfg.max_decode_steps);
      double acc = report.accuracy;
      (role == &a ? stats.val_acc_a : stats.val_acc_b) = acc;
      bool frozen = role == &b && cfg.mode == TrainMode::KdFrozen;
      if (acc > role->best_acc && !frozen) {
        role->best_acc = acc;
        role->best_epoch = epoch;
        improved = true;
        if (!out_dir.empty()) {
          role->ckpt_dir = out_dir + (role == &a ? "/a" : "/b");
          CheckpointMeta meta = base_meta;
          meta.order = role->order;
          meta.enc_prefix = role->model->enc_prefix();
          meta.dec_prefix = role->model->dec_prefix();
          meta.epoch = epoch;
          meta.val_acc = acc;
          save_checkpoint(role->ckpt_dir, *role->model, store, meta);
        }
      }
    }
    result.history.push_back(stats);
    append_history_line(out_dir, stats);

    epochs_without_improvement = improved ? 0 : epochs_without_improvement + 1;
    if (epochs_without_improvement >= cfg.patience) break;
  }

  result.best_acc_a = std::max(a.best_acc, 0.0);
  result.best_acc_b = std::max(b.best_acc, 0.0);
  result.best_epoch_a = a.best_epoch;
  result.best_epoch_b = b.best_epoch;
  result.ckpt_a = a.ckpt_dir;
  result.ckpt_b = b.ckpt_dir;
  result.final_params = store;
  if (a.model) result.params_a = a.model->param_names();
  if (b.model) result.params_b = b.model->param_names();
  return result;
}

}  // namespace seq2tree
