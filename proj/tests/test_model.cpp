#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "seq2tree/ast.hpp"
#include "seq2tree/corpus.hpp"
#include "seq2tree/model.hpp"
#include "test_util.hpp"

using namespace seq2tree;

namespace {

AsdlGrammar pyif_grammar() {
  return parse_grammar(
      "primitive identifier\n"
      "stmt = If(expr test, stmt* body, stmt* orelse) | Pass\n"
      "expr = Attribute(expr value, identifier attr) | Name(identifier id)\n");
}

struct Fixture {
  AsdlGrammar g = pyif_grammar();
  ActionVocab avocab = action_vocabulary(g);
  Vocabulary src;
  Vocabulary tgt;

  Fixture() {
    for (const char* w : {"if", "six", "dot", "py3", "then", "pass"}) src.add(w);
    for (const char* w : {"six", "PY3"}) tgt.add(w);
  }

  CompiledExample compile(const std::vector<std::string>& utt, const std::string& sexpr) {
    AstPtr ast = parse_sexpr(sexpr, g, "stmt");
    return compile_example(utt, *ast, g, avocab, src, tgt);
  }
};

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.hidden = 4;
  cfg.embed = 4;
  cfg.action_embed = 4;
  cfg.type_embed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("model: vocabulary reserves pad, unk, and sos") {
  Vocabulary v;
  CHECK(v.size() == 3);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token(Vocabulary::kSos) == "<sos>");
  CHECK(v.add("word") == 3);
  CHECK(v.add("word") == 3);  // idempotent
  CHECK(v.id_or_unk("word") == 3);
  CHECK(v.id_or_unk("missing") == Vocabulary::kUnk);
  Vocabulary w;
  w.add("word");
  CHECK(v == w);
}

TEST_CASE("model: compiled examples carry both traversals over one support") {
  Fixture fx;
  CompiledExample ex = fx.compile({"if", "six", "dot", "py3", "then", "pass"},
                                  "(If (Attribute (Name \"six\") \"PY3\") (list (Pass)) (list))");

  CHECK(ex.tree_size == 8);
  REQUIRE(ex.steps_pre.size() == 8);
  REQUIRE(ex.steps_bfs.size() == 8);
  CHECK(ex.gold_sexpr == "(If (Attribute (Name \"six\") \"PY3\") (list (Pass)) (list))");

  // gold actions mirror the fixture linearizations
  CHECK(ex.steps_pre[5].gold == Action::apply(fx.avocab.id_of("Pass")));
  CHECK(ex.steps_bfs[2].gold == Action::apply(fx.avocab.id_of("Pass")));
  CHECK(ex.steps_pre[3].gold == Action::gen_token("six"));
  CHECK(ex.align.pre_to_bfs[5] == 2);

  // composite steps carry the frontier mask, primitive steps a support slot
  CHECK_FALSE(ex.steps_pre[0].is_primitive);
  CHECK(ex.steps_pre[0].mask[fx.avocab.id_of("If")]);
  CHECK_FALSE(ex.steps_pre[0].mask[fx.avocab.id_of("Name")]);
  CHECK(ex.steps_pre[0].gold_action_id == fx.avocab.id_of("If"));
  CHECK(ex.steps_pre[3].is_primitive);
  CHECK(ex.steps_pre[3].gold_slot == fx.tgt.id_or_unk("six"));

  // utterance words outside the target vocabulary join the support as
  // extras in first-occurrence order; "six" maps onto its vocabulary slot
  CHECK(ex.extra_tokens == std::vector<std::string>{"if", "dot", "py3", "then", "pass"});
  CHECK(ex.support_size == fx.tgt.size() + 5);
  REQUIRE(ex.slot_of.size() == 6);
  CHECK(ex.slot_of[0] == fx.tgt.size());
  CHECK(ex.slot_of[1] == fx.tgt.id_or_unk("six"));
  CHECK(ex.slot_of[5] == fx.tgt.size() + 4);

  // parent timesteps match the traversal: Pass under If in both orders
  CHECK(ex.steps_pre[5].parent_timestep == 0);
  CHECK(ex.steps_bfs[2].parent_timestep == 0);
}

TEST_CASE("model: out-of-vocabulary source tokens become shared extra slots") {
  Fixture fx;
  // "zork" appears twice; both positions collapse onto one extra slot
  CompiledExample ex =
      fx.compile({"zork", "zork", "six"}, "(If (Name \"six\") (list (Pass)) (list))");
  REQUIRE(ex.extra_tokens.size() == 1);
  CHECK(ex.extra_tokens[0] == "zork");
  CHECK(ex.support_size == fx.tgt.size() + 1);
  CHECK(ex.slot_of[0] == fx.tgt.size());
  CHECK(ex.slot_of[1] == fx.tgt.size());
  CHECK(ex.slot_of[2] == fx.tgt.id_or_unk("six"));
}

TEST_CASE("model: compile rejects empty utterances and primitive Reduce frontiers") {
  Fixture fx;
  CHECK_KIND(fx.compile({}, "(Pass)"), ErrorKind::EmptyUtterance);

  // an Optional primitive field admits Reduce at a token frontier, which
  // the gen/copy head cannot express
  AsdlGrammar g = parse_grammar("primitive ident\ncmd = Tag(ident? label)\n");
  AstPtr ast = parse_sexpr("(Tag (list \"x\"))", g, "cmd", ValidateOptions{});
  CHECK_KIND(compile_example({"tag", "x"}, *ast, g, action_vocabulary(g), fx.src, fx.tgt),
             ErrorKind::ConfigError);
}

TEST_CASE("model: parameter creation respects a shared encoder prefix") {
  Fixture fx;
  ModelConfig cfg = tiny_config();
  Model a(fx.g, cfg, fx.src, fx.tgt, "enc", "dec_a");
  Model b(fx.g, cfg, fx.src, fx.tgt, "enc", "dec_b");

  ParameterStore store;
  Rng enc_rng(1), dec_rng(2);
  a.create_params(store, enc_rng, dec_rng, -0.1, 0.1);
  Mat enc_w = store.value("enc.fwd.w");

  Rng enc2(3), dec2(4);
  b.create_params(store, enc2, dec2, -0.1, 0.1);
  // the encoder the first model created is left untouched
  CHECK(store.value("enc.fwd.w") == enc_w);
  CHECK(store.has("dec_a.lstm.w"));
  CHECK(store.has("dec_b.lstm.w"));

  // sos column sits one past the action ids
  CHECK(a.sos_action_column() == fx.avocab.size());
  CHECK(store.value("dec_a.action_embed").cols() == fx.avocab.size() + 1);

  // param_names covers exactly what this model binds
  for (const std::string& name : a.param_names()) CHECK(store.has(name));
}

TEST_CASE("model: encoder emits one 2H column per token") {
  Fixture fx;
  Model m(fx.g, tiny_config(), fx.src, fx.tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(1), dec_rng(2);
  m.create_params(store, enc_rng, dec_rng);

  Tape tape;
  EncodedUtterance enc = m.encode(tape, store, {3, 4, 5});
  CHECK(enc.h.rows() == 8);  // 2 * hidden
  CHECK(enc.h.cols() == 3);

  // deterministic: a second pass produces identical values
  Tape tape2;
  CHECK(m.encode(tape2, store, {3, 4, 5}).h.value() == enc.h.value());
}

TEST_CASE("model: teacher forcing yields normalized distributions summing the gold") {
  Fixture fx;
  Model m(fx.g, tiny_config(), fx.src, fx.tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(1), dec_rng(2);
  m.create_params(store, enc_rng, dec_rng);

  CompiledExample ex = fx.compile({"if", "six", "dot", "py3", "then", "pass"},
                                  "(If (Attribute (Name \"six\") \"PY3\") (list (Pass)) (list))");

  for (TraversalOrder order : {TraversalOrder::PreOrder, TraversalOrder::BreadthFirst}) {
    Tape tape;
    SequenceResult res = m.sequence_log_prob(tape, store, ex, order, false, nullptr);
    REQUIRE(res.steps.size() == 8);

    double total = 0;
    const auto& steps = ex.steps(order);
    for (std::size_t t = 0; t < res.steps.size(); ++t) {
      const Mat& dist = res.steps[t].dist.value();
      CHECK(dist.sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(res.steps[t].is_primitive == steps[t].is_primitive);

      // masked composite entries carry no probability
      if (!steps[t].is_primitive) {
        for (int id = 0; id < static_cast<int>(steps[t].mask.size()); ++id)
          if (!steps[t].mask[id]) CHECK(dist(id, 0) == 0.0);
        CHECK(res.steps[t].log_gold.scalar() ==
              doctest::Approx(std::log(dist(steps[t].gold_action_id, 0))).epsilon(1e-12));
      } else {
        // pad and sos can never be generated
        CHECK(dist(Vocabulary::kPad, 0) == 0.0);
        CHECK(dist(Vocabulary::kSos, 0) == 0.0);
        CHECK(res.steps[t].log_gold.scalar() ==
              doctest::Approx(std::log(std::max(dist(steps[t].gold_slot, 0), 1e-12)))
                  .epsilon(1e-9));
      }
      total += res.steps[t].log_gold.scalar();
    }
    CHECK(res.total_log_prob.scalar() == doctest::Approx(total).epsilon(1e-9));
  }
}

TEST_CASE("model: dropout during training requires a stream") {
  Fixture fx;
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.5;
  Model m(fx.g, cfg, fx.src, fx.tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(1), dec_rng(2);
  m.create_params(store, enc_rng, dec_rng);
  CompiledExample ex = fx.compile({"pass"}, "(Pass)");

  Tape tape;
  CHECK_KIND(m.sequence_log_prob(tape, store, ex, TraversalOrder::PreOrder, true, nullptr),
             ErrorKind::ConfigError);
  Rng drop(9);
  m.sequence_log_prob(tape, store, ex, TraversalOrder::PreOrder, true, &drop);
  // eval mode ignores the dropout rate entirely
  m.sequence_log_prob(tape, store, ex, TraversalOrder::PreOrder, false, nullptr);
}

TEST_CASE("model: full MLE loss passes finite differences on a tiny model") {
  Fixture fx;
  Model m(fx.g, tiny_config(), fx.src, fx.tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(11), dec_rng(12);
  m.create_params(store, enc_rng, dec_rng);

  CompiledExample ex =
      fx.compile({"if", "six", "then", "pass"}, "(If (Name \"six\") (list (Pass)) (list))");

  for (TraversalOrder order : {TraversalOrder::PreOrder, TraversalOrder::BreadthFirst}) {
    auto build = [&](Tape& tape) -> Tensor {
      SequenceResult res = m.sequence_log_prob(tape, store, ex, order, false, nullptr);
      return scale(res.total_log_prob, -1.0 / static_cast<double>(res.steps.size()));
    };
    double err = fd_max_rel_err(store, m.param_names(), build);
    CHECK_MESSAGE(err < 1e-4, order_name(order) << ": worst rel err " << err);
  }
}

TEST_CASE("model: additive attention also passes finite differences") {
  Fixture fx;
  ModelConfig cfg = tiny_config();
  cfg.attention = "additive";
  Model m(fx.g, cfg, fx.src, fx.tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(21), dec_rng(22);
  m.create_params(store, enc_rng, dec_rng);
  CHECK(store.has("dec.att.v"));

  CompiledExample ex = fx.compile({"pass", "it"}, "(Pass)");
  auto build = [&](Tape& tape) -> Tensor {
    SequenceResult res = m.sequence_log_prob(tape, store, ex, TraversalOrder::PreOrder, false,
                                             nullptr);
    return scale(res.total_log_prob, -1.0);
  };
  CHECK(fd_max_rel_err(store, m.param_names(), build) < 1e-4);

  ModelConfig bad = tiny_config();
  bad.attention = "fancy";
  CHECK_KIND(Model(fx.g, bad, fx.src, fx.tgt, "enc2", "dec2"), ErrorKind::ConfigError);
}

TEST_CASE("model: beam decode obeys the grammar whatever the parameters") {
  // a non-recursive grammar so untrained weights still terminate
  AsdlGrammar g = parse_grammar("primitive ident\nstmt = Go(ident dist) | Stop\n");
  Vocabulary src, tgt;
  src.add("go");
  src.add("far");
  tgt.add("far");
  Model m(g, tiny_config(), src, tgt, "enc", "dec");
  ParameterStore store;
  Rng enc_rng(31), dec_rng(32);
  m.create_params(store, enc_rng, dec_rng);

  for (TraversalOrder order : {TraversalOrder::PreOrder, TraversalOrder::BreadthFirst}) {
    for (int width : {1, 3}) {
      AstPtr ast = m.beam_decode(store, {"go", "far"}, order, width, 16);
      validate(*ast, g, "stmt");
      // deterministic across calls
      AstPtr again = m.beam_decode(store, {"go", "far"}, order, width, 16);
      CHECK(ast_equal(*ast, *again));
    }
  }

  // unknown surface words still decode through the copy extras
  AstPtr oov = m.beam_decode(store, {"zork"}, TraversalOrder::PreOrder, 2, 16);
  validate(*oov, g, "stmt");

  CHECK_KIND(m.beam_decode(store, {}, TraversalOrder::PreOrder, 1, 16),
             ErrorKind::EmptyUtterance);
  CHECK_KIND(m.beam_decode(store, {"go"}, TraversalOrder::PreOrder, 1, 0),
             ErrorKind::MaxStepsExceeded);
}
