#include "seq2tree/model.hpp"

#include <algorithm>
#include <cmath>

#include "seq2tree/error.hpp"

namespace seq2tree {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<sos>");
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  ids_[token] = id;
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id_or_unk(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

// ---------------------------------------------------------------------------
// Support construction shared by training compilation and inference

namespace {

struct CopySupport {
  std::vector<int> slot_of;
  std::vector<std::string> extras;
  int size = 0;
};

CopySupport build_support(const std::vector<std::string>& utterance, const Vocabulary& tgt) {
  CopySupport s;
  std::unordered_map<std::string, int> extra_ids;
  for (const std::string& tok : utterance) {
    if (tgt.has(tok)) {
      s.slot_of.push_back(tgt.id_or_unk(tok));
      continue;
    }
    auto it = extra_ids.find(tok);
    int extra;
    if (it != extra_ids.end()) {
      extra = it->second;
    } else {
      extra = static_cast<int>(s.extras.size());
      extra_ids[tok] = extra;
      s.extras.push_back(tok);
    }
    s.slot_of.push_back(tgt.size() + extra);
  }
  s.size = tgt.size() + static_cast<int>(s.extras.size());
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(const AsdlGrammar& g, ModelConfig config, Vocabulary src_vocab,
             Vocabulary tgt_vocab, std::string enc_prefix, std::string dec_prefix)
    : grammar_(&g),
      avocab_(action_vocabulary(g)),
      config_(std::move(config)),
      src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)),
      enc_prefix_(std::move(enc_prefix)),
      dec_prefix_(std::move(dec_prefix)) {
  if (config_.attention != "bilinear" && config_.attention != "additive")
    throw Error(ErrorKind::ConfigError, "unknown attention '" + config_.attention + "'");
}

void Model::create_params(ParameterStore& store, Rng& enc_rng, Rng& dec_rng, double lo,
                          double hi) const {
  int h = config_.hidden;
  if (!store.has(enc_prefix_ + ".embed")) {
    store.create_uniform(enc_prefix_ + ".embed", config_.embed, src_vocab_.size(), enc_rng, lo,
                         hi);
    for (const char* dir : {".fwd", ".bwd"}) {
      store.create_uniform(enc_prefix_ + dir + std::string(".w"), 4 * h, config_.embed, enc_rng,
                           lo, hi);
      store.create_uniform(enc_prefix_ + dir + std::string(".u"), 4 * h, h, enc_rng, lo, hi);
      store.create_uniform(enc_prefix_ + dir + std::string(".b"), 4 * h, 1, enc_rng, lo, hi);
    }
  }
  int actions = avocab_.size();
  int in_dim = config_.action_embed + h + h + config_.type_embed;
  store.create_uniform(dec_prefix_ + ".action_embed", config_.action_embed, actions + 1, dec_rng,
                       lo, hi);  // +1: sos column
  store.create_uniform(dec_prefix_ + ".token_embed", config_.action_embed, tgt_vocab_.size(),
                       dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".type_embed", config_.type_embed, grammar_->num_types(),
                       dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".root_parent", h, 1, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".lstm.w", 4 * h, in_dim, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".lstm.u", 4 * h, h, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".lstm.b", 4 * h, 1, dec_rng, lo, hi);
  if (config_.attention == "bilinear") {
    store.create_uniform(dec_prefix_ + ".att.w", 2 * h, h, dec_rng, lo, hi);
  } else {
    store.create_uniform(dec_prefix_ + ".att.w1", h, 2 * h, dec_rng, lo, hi);
    store.create_uniform(dec_prefix_ + ".att.w2", h, h, dec_rng, lo, hi);
    store.create_uniform(dec_prefix_ + ".att.v", h, 1, dec_rng, lo, hi);
  }
  store.create_uniform(dec_prefix_ + ".ws", h, 3 * h, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".out_action_embed", config_.action_embed, actions, dec_rng,
                       lo, hi);
  store.create_uniform(dec_prefix_ + ".wa", config_.action_embed, h, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".wgen", 2, h, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".bgen", 2, 1, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".wvocab", tgt_vocab_.size(), h, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".bvocab", tgt_vocab_.size(), 1, dec_rng, lo, hi);
  store.create_uniform(dec_prefix_ + ".wcopy", 2 * h, h, dec_rng, lo, hi);
}

std::vector<std::string> Model::param_names() const {
  std::vector<std::string> names;
  for (const char* dir : {".fwd", ".bwd"})
    for (const char* leaf : {".w", ".u", ".b"})
      names.push_back(enc_prefix_ + dir + std::string(leaf));
  names.insert(names.begin(), enc_prefix_ + ".embed");
  for (const char* p :
       {".action_embed", ".token_embed", ".type_embed", ".root_parent", ".lstm.w", ".lstm.u",
        ".lstm.b", ".ws", ".out_action_embed", ".wa", ".wgen", ".bgen", ".wvocab", ".bvocab",
        ".wcopy"})
    names.push_back(dec_prefix_ + p);
  if (config_.attention == "bilinear") {
    names.push_back(dec_prefix_ + ".att.w");
  } else {
    names.push_back(dec_prefix_ + ".att.w1");
    names.push_back(dec_prefix_ + ".att.w2");
    names.push_back(dec_prefix_ + ".att.v");
  }
  return names;
}

EncodedUtterance Model::encode(Tape& tape, ParameterStore& store,
                               const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw Error(ErrorKind::EmptyUtterance, "cannot encode zero tokens");
  int h = config_.hidden;
  Tensor embed = tape.param(store, enc_prefix_ + ".embed");
  LstmParams fwd{tape.param(store, enc_prefix_ + ".fwd.w"),
                 tape.param(store, enc_prefix_ + ".fwd.u"),
                 tape.param(store, enc_prefix_ + ".fwd.b")};
  LstmParams bwd{tape.param(store, enc_prefix_ + ".bwd.w"),
                 tape.param(store, enc_prefix_ + ".bwd.u"),
                 tape.param(store, enc_prefix_ + ".bwd.b")};
  std::vector<Tensor> inputs;
  inputs.reserve(token_ids.size());
  for (int id : token_ids) inputs.push_back(embedding(embed, id));

  std::size_t n = token_ids.size();
  std::vector<Tensor> fwd_h(n), bwd_h(n);
  Tensor s = tape.input(Mat::Zero(h, 1));
  Tensor c = tape.input(Mat::Zero(h, 1));
  for (std::size_t i = 0; i < n; ++i) {
    auto [hs, cs] = lstm_cell(inputs[i], s, c, fwd);
    fwd_h[i] = hs;
    s = hs;
    c = cs;
  }
  s = tape.input(Mat::Zero(h, 1));
  c = tape.input(Mat::Zero(h, 1));
  for (std::size_t i = n; i-- > 0;) {
    auto [hs, cs] = lstm_cell(inputs[i], s, c, bwd);
    bwd_h[i] = hs;
    s = hs;
    c = cs;
  }
  std::vector<Tensor> cols;
  cols.reserve(n);
  for (std::size_t i = 0; i < n; ++i) cols.push_back(concat_rows({fwd_h[i], bwd_h[i]}));
  return EncodedUtterance{token_ids, concat_cols(cols)};
}

Tensor Model::attention_context(Tape& tape, ParameterStore& store, const Tensor& s,
                                const Tensor& enc_h) const {
  Tensor scores;
  if (config_.attention == "bilinear") {
    Tensor w = tape.param(store, dec_prefix_ + ".att.w");
    scores = matmul(transpose(enc_h), matmul(w, s));
  } else {
    Tensor w1 = tape.param(store, dec_prefix_ + ".att.w1");
    Tensor w2 = tape.param(store, dec_prefix_ + ".att.w2");
    Tensor v = tape.param(store, dec_prefix_ + ".att.v");
    Tensor m = tanh(add_col_broadcast(matmul(w1, enc_h), matmul(w2, s)));
    scores = transpose(matmul(transpose(v), m));
  }
  Tensor alpha = softmax(scores);
  return matmul(enc_h, alpha);
}

DecoderStepState Model::decode_step(Tape& tape, ParameterStore& store,
                                    const Tensor& prev_action_emb, const Tensor& s_tilde_prev,
                                    const Tensor& parent_hidden, const Tensor& type_emb,
                                    const Tensor& s_prev, const Tensor& cell_prev,
                                    const EncodedUtterance& enc, bool train,
                                    Rng* dropout_rng) const {
  Tensor x = concat_rows({prev_action_emb, s_tilde_prev, parent_hidden, type_emb});
  if (train && config_.dropout > 0) {
    if (!dropout_rng)
      throw Error(ErrorKind::ConfigError, "training decode_step without a dropout stream");
    x = dropout(x, config_.dropout, *dropout_rng, true);
  }
  LstmParams cell_params{tape.param(store, dec_prefix_ + ".lstm.w"),
                         tape.param(store, dec_prefix_ + ".lstm.u"),
                         tape.param(store, dec_prefix_ + ".lstm.b")};
  auto [s, c] = lstm_cell(x, s_prev, cell_prev, cell_params);
  Tensor ctx = attention_context(tape, store, s, enc.h);
  Tensor ws = tape.param(store, dec_prefix_ + ".ws");
  Tensor s_tilde = tanh(matmul(ws, concat_rows({ctx, s})));
  return DecoderStepState{s, c, s_tilde, ctx};
}

Tensor Model::composite_distribution(Tape& tape, ParameterStore& store, const Tensor& s_tilde,
                                     const std::vector<uint8_t>& mask) const {
  Tensor e_out = tape.param(store, dec_prefix_ + ".out_action_embed");
  Tensor wa = tape.param(store, dec_prefix_ + ".wa");
  Tensor logits = matmul(transpose(e_out), matmul(wa, s_tilde));
  return softmax_masked(logits, mask);
}

Tensor Model::primitive_distribution(Tape& tape, ParameterStore& store, const Tensor& s_tilde,
                                     const EncodedUtterance& enc, const std::vector<int>& slot_of,
                                     int support_size) const {
  Tensor wgen = tape.param(store, dec_prefix_ + ".wgen");
  Tensor bgen = tape.param(store, dec_prefix_ + ".bgen");
  Tensor gen2 = softmax(add(matmul(wgen, s_tilde), bgen));
  Tensor p_gen = pick(gen2, 0, 0);

  Tensor wvocab = tape.param(store, dec_prefix_ + ".wvocab");
  Tensor bvocab = tape.param(store, dec_prefix_ + ".bvocab");
  std::vector<uint8_t> vocab_mask(static_cast<std::size_t>(tgt_vocab_.size()), 1);
  vocab_mask[Vocabulary::kPad] = 0;
  vocab_mask[Vocabulary::kSos] = 0;
  Tensor p_vocab = softmax_masked(add(matmul(wvocab, s_tilde), bvocab), vocab_mask);

  Tensor wcopy = tape.param(store, dec_prefix_ + ".wcopy");
  Tensor p_copy = softmax(matmul(transpose(enc.h), matmul(wcopy, s_tilde)));
  return gen_copy_mixture(p_gen, p_vocab, p_copy, slot_of, support_size);
}

Tensor Model::prev_action_embedding(Tape& tape, ParameterStore& store,
                                    const std::optional<Action>& prev) const {
  if (!prev) return embedding(tape.param(store, dec_prefix_ + ".action_embed"), avocab_.size());
  switch (prev->kind) {
    case ActionKind::ApplyConstr:
      return embedding(tape.param(store, dec_prefix_ + ".action_embed"), prev->ctor_id);
    case ActionKind::Reduce:
      return embedding(tape.param(store, dec_prefix_ + ".action_embed"), avocab_.reduce_id);
    case ActionKind::GenToken:
      return embedding(tape.param(store, dec_prefix_ + ".token_embed"),
                       tgt_vocab_.id_or_unk(prev->token));
  }
  throw Error(ErrorKind::InvalidAction, "unembeddable action");
}

SequenceResult Model::sequence_log_prob(Tape& tape, ParameterStore& store,
                                        const CompiledExample& ex, TraversalOrder order,
                                        bool train, Rng* dropout_rng) const {
  EncodedUtterance enc = encode(tape, store, ex.src_ids);
  int h = config_.hidden;
  Tensor s = tape.input(Mat::Zero(h, 1));
  Tensor cell = tape.input(Mat::Zero(h, 1));
  Tensor s_tilde = tape.input(Mat::Zero(h, 1));
  Tensor type_table = tape.param(store, dec_prefix_ + ".type_embed");
  Tensor root_parent = tape.param(store, dec_prefix_ + ".root_parent");

  SequenceResult result;
  std::vector<Tensor> hidden_history;
  std::optional<Action> prev;
  Tensor total = tape.input(0.0);
  for (const CompiledStep& step : ex.steps(order)) {
    Tensor prev_emb = prev_action_embedding(tape, store, prev);
    Tensor parent_h =
        step.parent_timestep < 0 ? root_parent : hidden_history[step.parent_timestep];
    Tensor type_emb = embedding(type_table, step.field_type_id);
    DecoderStepState st =
        decode_step(tape, store, prev_emb, s_tilde, parent_h, type_emb, s, cell, enc, train,
                    dropout_rng);
    StepResult sr;
    sr.is_primitive = step.is_primitive;
    if (step.is_primitive) {
      sr.dist = primitive_distribution(tape, store, st.s_tilde, enc, ex.slot_of,
                                       ex.support_size);
      sr.log_gold = log(pick(sr.dist, step.gold_slot, 0));
    } else {
      sr.dist = composite_distribution(tape, store, st.s_tilde, step.mask);
      sr.log_gold = log(pick(sr.dist, step.gold_action_id, 0));
    }
    total = add(total, sr.log_gold);
    result.steps.push_back(sr);
    hidden_history.push_back(st.s);
    s = st.s;
    cell = st.cell;
    s_tilde = st.s_tilde;
    prev = step.gold;
  }
  result.total_log_prob = total;
  return result;
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Hypothesis {
  ParserState state;
  Mat s, cell, s_tilde;
  std::vector<Mat> hidden_history;
  std::optional<Action> prev;
  double log_prob = 0;
  int length = 0;
};

struct Candidate {
  std::size_t hyp;
  Action action;
  double log_prob;  // cumulative
};

}  // namespace

AstPtr Model::beam_decode(ParameterStore& store, const std::vector<std::string>& utterance,
                          TraversalOrder order, int beam_width, int max_steps) const {
  if (beam_width < 1) throw Error(ErrorKind::ConfigError, "beam width must be >= 1");
  std::vector<int> src_ids;
  src_ids.reserve(utterance.size());
  for (const std::string& tok : utterance) src_ids.push_back(src_vocab_.id_or_unk(tok));
  CopySupport support = build_support(utterance, tgt_vocab_);

  Mat enc_h;
  {
    Tape tape;
    enc_h = encode(tape, store, src_ids).h.value();
  }
  int h = config_.hidden;
  std::vector<Hypothesis> live;
  live.push_back(Hypothesis{ParserState(*grammar_, avocab_, order), Mat::Zero(h, 1),
                            Mat::Zero(h, 1), Mat::Zero(h, 1), {}, std::nullopt, 0.0, 0});
  std::vector<Hypothesis> done;

  for (int round = 0; round < max_steps && !live.empty(); ++round) {
    std::vector<Candidate> candidates;
    std::vector<DecoderStepState> fresh(live.size());
    std::vector<Tape> tapes(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      Hypothesis& hyp = live[i];
      Tape& tape = tapes[i];
      EncodedUtterance enc{src_ids, tape.input(enc_h)};
      Frontier frontier = hyp.state.frontier();
      Tensor parent_h = frontier.parent_timestep < 0
                            ? tape.param(store, dec_prefix_ + ".root_parent")
                            : tape.input(hyp.hidden_history[frontier.parent_timestep]);
      Tensor type_emb = embedding(tape.param(store, dec_prefix_ + ".type_embed"),
                                  grammar_->type_id(frontier.field.type));
      DecoderStepState st = decode_step(
          tape, store, prev_action_embedding(tape, store, hyp.prev), tape.input(hyp.s_tilde),
          parent_h, type_emb, tape.input(hyp.s), tape.input(hyp.cell), enc, false, nullptr);
      fresh[i] = st;
      if (frontier.is_primitive) {
        Mat dist =
            primitive_distribution(tape, store, st.s_tilde, enc, support.slot_of, support.size)
                .value();
        for (int slot = 0; slot < support.size; ++slot) {
          double p = dist(slot, 0);
          if (p <= 0) continue;
          const std::string& tok = slot < tgt_vocab_.size()
                                       ? tgt_vocab_.token(slot)
                                       : support.extras[slot - tgt_vocab_.size()];
          candidates.push_back({i, Action::gen_token(tok), hyp.log_prob + std::log(p)});
        }
      } else {
        Mat dist = composite_distribution(tape, store, st.s_tilde, frontier.closed_mask).value();
        for (int id = 0; id < avocab_.size(); ++id) {
          if (!frontier.closed_mask[id]) continue;
          Action a = id == avocab_.reduce_id ? Action::reduce() : Action::apply(id);
          candidates.push_back({i, a, hyp.log_prob + std::log(std::max(dist(id, 0), 1e-300))});
        }
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (candidates.size() > static_cast<std::size_t>(beam_width))
      candidates.resize(static_cast<std::size_t>(beam_width));

    std::vector<Hypothesis> next;
    for (const Candidate& cand : candidates) {
      const Hypothesis& src = live[cand.hyp];
      const DecoderStepState& st = fresh[cand.hyp];
      Hypothesis hyp = src;
      hyp.s = st.s.value();
      hyp.cell = st.cell.value();
      hyp.s_tilde = st.s_tilde.value();
      hyp.hidden_history.push_back(hyp.s);
      hyp.prev = cand.action;
      hyp.log_prob = cand.log_prob;
      hyp.length += 1;
      hyp.state.apply_action(cand.action);
      if (hyp.state.is_complete())
        done.push_back(std::move(hyp));
      else
        next.push_back(std::move(hyp));
    }
    live = std::move(next);
    if (done.size() >= static_cast<std::size_t>(beam_width)) break;
  }
  if (done.empty())
    throw Error(ErrorKind::MaxStepsExceeded, "no hypothesis completed within the step budget");
  const Hypothesis* best = &done[0];
  for (const Hypothesis& hyp : done)
    if (hyp.log_prob / hyp.length > best->log_prob / best->length) best = &hyp;
  return best->state.extract_ast();
}

// ---------------------------------------------------------------------------
// Example compilation

namespace {

std::vector<CompiledStep> compile_steps(const ActionSequence& seq, const AsdlGrammar& g,
                                        const ActionVocab& avocab, const Vocabulary& tgt,
                                        const CopySupport& support,
                                        const std::unordered_map<std::string, int>& extra_ids,
                                        TraversalOrder order) {
  ParserState state(g, avocab, order);
  std::vector<CompiledStep> steps;
  steps.reserve(seq.steps.size());
  for (const ActionStep& as : seq.steps) {
    Frontier f = state.frontier();
    CompiledStep cs;
    cs.gold = as.action;
    cs.is_primitive = f.is_primitive;
    cs.parent_timestep = f.parent_timestep;
    cs.field_type_id = g.type_id(f.field.type);
    if (f.is_primitive) {
      if (f.closed_mask[avocab.reduce_id] || as.action.kind != ActionKind::GenToken)
        throw Error(ErrorKind::ConfigError,
                    "primitive frontier admits Reduce; the token head cannot score it "
                    "(field '" + f.field.name + "')");
      if (tgt.has(as.action.token)) {
        cs.gold_slot = tgt.id_or_unk(as.action.token);
      } else {
        auto it = extra_ids.find(as.action.token);
        cs.gold_slot = it != extra_ids.end() ? tgt.size() + it->second : Vocabulary::kUnk;
      }
    } else {
      cs.mask = f.closed_mask;
      cs.gold_action_id = as.action.kind == ActionKind::Reduce ? avocab.reduce_id
                                                               : as.action.ctor_id;
    }
    steps.push_back(std::move(cs));
    state.apply_action(as.action);
  }
  return steps;
}

}  // namespace

CompiledExample compile_example(const std::vector<std::string>& utterance, const AstNode& ast,
                                const AsdlGrammar& g, const ActionVocab& avocab,
                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  if (utterance.empty()) throw Error(ErrorKind::EmptyUtterance, "example has no tokens");
  CompiledExample ex;
  ex.src_tokens = utterance;
  for (const std::string& tok : utterance) ex.src_ids.push_back(src_vocab.id_or_unk(tok));
  CopySupport support = build_support(utterance, tgt_vocab);
  ex.slot_of = support.slot_of;
  ex.extra_tokens = support.extras;
  ex.support_size = support.size;
  std::unordered_map<std::string, int> extra_ids;
  for (std::size_t i = 0; i < support.extras.size(); ++i)
    extra_ids[support.extras[i]] = static_cast<int>(i);

  ActionTree tree = build_action_tree(ast, g);
  ex.tree_size = tree.size();
  ex.align = alignment(tree);
  ex.gold_sexpr = to_sexpr(ast, g);
  ex.steps_pre = compile_steps(linearize(tree, TraversalOrder::PreOrder), g, avocab, tgt_vocab,
                               support, extra_ids, TraversalOrder::PreOrder);
  ex.steps_bfs = compile_steps(linearize(tree, TraversalOrder::BreadthFirst), g, avocab,
                               tgt_vocab, support, extra_ids, TraversalOrder::BreadthFirst);
  return ex;
}

}  // namespace seq2tree
