// dts: operator entry point wiring grammar tools, corpus generation,
// training, evaluation, and inference. Machine consumers read JSON from
// stdout; every failure is a single JSON object on stderr and a nonzero
// exit code.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seq2tree/corpus.hpp"
#include "seq2tree/error.hpp"
#include "seq2tree/eval.hpp"
#include "seq2tree/grammar.hpp"
#include "seq2tree/model.hpp"
#include "seq2tree/train.hpp"
#include "seq2tree/transition.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seq2tree;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Paths live beside the hyperparameters in the same JSON document.
struct RunPaths {
  std::string grammar;
  std::string train;
  std::string valid;
  std::string test;
  std::string out_dir;
};

const std::set<std::string> kConfigKeys = {
    "grammar",     "train",        "valid",       "test",        "out_dir",
    "mode",        "lambda",       "batch_size",  "epochs",      "patience",
    "seed",        "order_a",      "order_b",     "kl_nodes",    "share_encoder",
    "single_combined_step",        "single_role", "teacher_checkpoint",
    "hidden",      "embed",        "action_embed", "type_embed", "attention",
    "dropout",     "optimizer",    "lr",          "beta1",       "beta2",
    "eps",         "clip_norm",    "init_lo",     "init_hi",     "min_freq",
    "eval_beam",   "max_decode_steps",            "preset",      "runs",
    "parallel",    "beam",         "values",
};

struct Preset {
  double lambda;
  double dropout;
};

/// Conventional settings for the common benchmark corpora; the corpora
/// themselves are not bundled.
const std::map<std::string, Preset> kPresets = {
    {"django", {0.75, 0.5}},
    {"atis", {0.5, 0.3}},
    {"geo", {0.25, 0.4}},
    {"ifttt", {0.25, 0.3}},
};

void apply_preset(const std::string& name, TrainConfig& cfg) {
  auto it = kPresets.find(name);
  if (it == kPresets.end()) throw Error(ErrorKind::ConfigError, "unknown preset '" + name + "'");
  cfg.lambda = it->second.lambda;
  cfg.model.dropout = it->second.dropout;
}

json load_config_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what(),
                path);
  }
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config root must be an object", path);
  for (const auto& [key, _] : j.items()) {
    if (!kConfigKeys.count(key))
      throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'", path);
  }
  return j;
}

void apply_config(const json& j, TrainConfig& cfg, RunPaths& paths, std::string& preset) {
  auto str = [&](const char* k, std::string& out) {
    if (j.contains(k)) out = j.at(k).get<std::string>();
  };
  auto num = [&](const char* k, auto& out) {
    if (j.contains(k)) out = j.at(k).get<std::decay_t<decltype(out)>>();
  };
  str("grammar", paths.grammar);
  str("train", paths.train);
  str("valid", paths.valid);
  str("test", paths.test);
  str("out_dir", paths.out_dir);
  if (j.contains("mode")) cfg.mode = parse_mode(j.at("mode").get<std::string>());
  num("lambda", cfg.lambda);
  num("batch_size", cfg.batch_size);
  num("epochs", cfg.epochs);
  num("patience", cfg.patience);
  num("seed", cfg.seed);
  if (j.contains("order_a")) cfg.order_a = parse_order(j.at("order_a").get<std::string>());
  if (j.contains("order_b")) cfg.order_b = parse_order(j.at("order_b").get<std::string>());
  str("kl_nodes", cfg.kl_nodes);
  num("share_encoder", cfg.share_encoder);
  num("single_combined_step", cfg.single_combined_step);
  str("single_role", cfg.single_role);
  str("teacher_checkpoint", cfg.teacher_checkpoint);
  num("hidden", cfg.model.hidden);
  num("embed", cfg.model.embed);
  num("action_embed", cfg.model.action_embed);
  num("type_embed", cfg.model.type_embed);
  str("attention", cfg.model.attention);
  num("dropout", cfg.model.dropout);
  if (j.contains("optimizer")) {
    std::string algo = j.at("optimizer").get<std::string>();
    if (algo == "adam")
      cfg.optimizer.algo = OptimizerConfig::Algo::Adam;
    else if (algo == "sgd")
      cfg.optimizer.algo = OptimizerConfig::Algo::Sgd;
    else
      throw Error(ErrorKind::ConfigError, "optimizer must be adam or sgd, got '" + algo + "'");
  }
  num("lr", cfg.optimizer.lr);
  num("beta1", cfg.optimizer.beta1);
  num("beta2", cfg.optimizer.beta2);
  num("eps", cfg.optimizer.eps);
  num("clip_norm", cfg.optimizer.clip_norm);
  num("init_lo", cfg.init_lo);
  num("init_hi", cfg.init_hi);
  num("min_freq", cfg.min_freq);
  num("eval_beam", cfg.eval_beam);
  num("max_decode_steps", cfg.max_decode_steps);
  str("preset", preset);
}

json resolved_config(const TrainConfig& cfg, const RunPaths& paths) {
  json j;
  j["grammar"] = paths.grammar;
  j["train"] = paths.train;
  j["valid"] = paths.valid;
  if (!paths.test.empty()) j["test"] = paths.test;
  j["out_dir"] = paths.out_dir;
  j["mode"] = mode_name(cfg.mode);
  j["lambda"] = cfg.lambda;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["order_a"] = order_name(cfg.order_a);
  j["order_b"] = order_name(cfg.order_b);
  j["kl_nodes"] = cfg.kl_nodes;
  j["share_encoder"] = cfg.share_encoder;
  j["single_combined_step"] = cfg.single_combined_step;
  j["single_role"] = cfg.single_role;
  if (!cfg.teacher_checkpoint.empty()) j["teacher_checkpoint"] = cfg.teacher_checkpoint;
  j["hidden"] = cfg.model.hidden;
  j["embed"] = cfg.model.embed;
  j["action_embed"] = cfg.model.action_embed;
  j["type_embed"] = cfg.model.type_embed;
  j["attention"] = cfg.model.attention;
  j["dropout"] = cfg.model.dropout;
  j["optimizer"] = cfg.optimizer.algo == OptimizerConfig::Algo::Adam ? "adam" : "sgd";
  j["lr"] = cfg.optimizer.lr;
  j["beta1"] = cfg.optimizer.beta1;
  j["beta2"] = cfg.optimizer.beta2;
  j["eps"] = cfg.optimizer.eps;
  j["clip_norm"] = cfg.optimizer.clip_norm;
  j["init_lo"] = cfg.init_lo;
  j["init_hi"] = cfg.init_hi;
  j["min_freq"] = cfg.min_freq;
  j["eval_beam"] = cfg.eval_beam;
  j["max_decode_steps"] = cfg.max_decode_steps;
  return j;
}

/// Seed precedence: explicit flag > config file > DTS_SEED > default.
void apply_env_seed(bool seed_given, TrainConfig& cfg) {
  if (seed_given) return;
  if (const char* env = std::getenv("DTS_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

int cmd_grammar_check(const std::string& path) {
  AsdlGrammar g = parse_grammar(read_file(path));
  json out;
  out["root"] = g.root_type();
  out["composite_types"] = g.composite_types();
  out["primitive_types"] = g.primitive_types();
  json ctors = json::array();
  for (const Constructor& c : g.constructors()) ctors.push_back(c.name);
  out["constructors"] = ctors;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(grammar_hash(g)));
  out["hash"] = hex;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_linearize(const std::string& grammar_path, const std::string& sexpr,
                  const std::string& order_name_str, bool multi_token) {
  AsdlGrammar g = parse_grammar(read_file(grammar_path));
  ActionVocab vocab = action_vocabulary(g);
  TransitionOptions opts;
  opts.multi_token = multi_token;
  AstPtr ast = parse_sexpr(sexpr, g, g.root_type(), ValidateOptions{multi_token});
  ActionTree tree = build_action_tree(*ast, g, opts);
  ActionSequence seq = linearize(tree, parse_order(order_name_str));
  for (int t = 0; t < seq.length(); ++t) {
    const ActionStep& step = seq.steps[t];
    std::string field = "-";
    if (step.parent_node >= 0) {
      const auto& parent_action = tree.nodes[step.parent_node].action;
      const Constructor& ctor = g.constructor(vocab.constructor_names[parent_action.ctor_id]);
      field = ctor.fields[step.field_index].name;
    }
    std::cout << (t + 1) << "\t" << render_action(step.action, vocab) << "\t"
              << (step.parent_timestep + 1) << "\t" << field << "\n";
  }
  return 0;
}

int cmd_gen_toy(const std::string& grammar_path, int size, std::uint64_t seed,
                const std::string& out_dir, int max_depth) {
  AsdlGrammar g = parse_grammar(read_file(grammar_path));
  ToyCorpus corpus = generate_toy_corpus(g, size, seed, {}, max_depth);
  fs::create_directories(out_dir);
  write_dataset(out_dir + "/train.jsonl", corpus.train, g);
  write_dataset(out_dir + "/valid.jsonl", corpus.valid, g);
  write_dataset(out_dir + "/test.jsonl", corpus.test, g);
  json out;
  out["train"] = corpus.train.size();
  out["valid"] = corpus.valid.size();
  out["test"] = corpus.test.size();
  out["out_dir"] = out_dir;
  out["seed"] = seed;
  std::cout << out.dump(2) << "\n";
  return 0;
}

json train_once(const AsdlGrammar& g, const Dataset& train_data, const Dataset& valid_data,
                const TrainConfig& cfg, const std::string& out_dir) {
  TrainResult result = train(g, train_data, valid_data, cfg, out_dir);
  json out;
  out["epochs_run"] = result.history.size();
  out["best_acc_a"] = result.best_acc_a;
  out["best_acc_b"] = result.best_acc_b;
  out["best_epoch_a"] = result.best_epoch_a;
  out["best_epoch_b"] = result.best_epoch_b;
  if (!result.ckpt_a.empty()) out["checkpoint_a"] = result.ckpt_a;
  if (!result.ckpt_b.empty()) out["checkpoint_b"] = result.ckpt_b;
  return out;
}

int cmd_train(const TrainConfig& base, const RunPaths& paths, int runs, bool parallel) {
  if (paths.grammar.empty() || paths.train.empty() || paths.valid.empty())
    throw Error(ErrorKind::ConfigError, "train requires grammar, train, and valid paths");
  AsdlGrammar g = parse_grammar(read_file(paths.grammar));
  Dataset train_data = load_dataset(paths.train, g, "train");
  Dataset valid_data = load_dataset(paths.valid, g, "valid");

  if (!paths.out_dir.empty()) {
    fs::create_directories(paths.out_dir);
    std::ofstream cfg_out(paths.out_dir + "/config.json");
    cfg_out << resolved_config(base, paths).dump(2) << "\n";
  }

  if (runs <= 1) {
    std::cout << train_once(g, train_data, valid_data, base, paths.out_dir).dump(2) << "\n";
    return 0;
  }

  // Independent restarts: run i uses seed+i and its own out dir.
  std::vector<json> results(runs);
  auto run_one = [&](int i) {
    TrainConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    std::string dir =
        paths.out_dir.empty() ? std::string() : paths.out_dir + "/run_" + std::to_string(i);
    results[i] = train_once(g, train_data, valid_data, cfg, dir);
  };
  if (parallel) {
    std::vector<std::thread> workers;
    for (int i = 0; i < runs; ++i) workers.emplace_back(run_one, i);
    for (auto& w : workers) w.join();
  } else {
    for (int i = 0; i < runs; ++i) run_one(i);
  }

  std::vector<std::pair<double, double>> accs;
  for (const json& r : results) accs.emplace_back(r["best_acc_a"], r["best_acc_b"]);
  RunAggregate agg = aggregate_runs(accs);
  json out;
  out["runs"] = results;
  out["mean_acc_a"] = agg.mean_a;
  out["mean_acc_b"] = agg.mean_b;
  out["spread_a"] = agg.spread_a;
  out["spread_b"] = agg.spread_b;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_path,
             const std::string& order_flag, int beam, int max_steps) {
  LoadedModel loaded = load_checkpoint(ckpt_dir);
  Dataset data = load_dataset(data_path, *loaded.grammar, "test");
  TraversalOrder order = order_flag.empty() ? loaded.meta.order : parse_order(order_flag);
  EvalReport report = evaluate(*loaded.model, loaded.store, data, order, beam, max_steps);
  std::cout << report_to_json(report) << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt_dir, const std::string& utterance, int beam,
              int max_steps) {
  LoadedModel loaded = load_checkpoint(ckpt_dir);
  std::vector<std::string> tokens = split_ws(utterance);
  AstPtr ast = loaded.model->beam_decode(loaded.store, tokens, loaded.meta.order, beam, max_steps);
  json out;
  out["utterance"] = tokens;
  out["order"] = order_name(loaded.meta.order);
  out["beam"] = beam;
  out["prediction"] = to_sexpr(*ast, *loaded.grammar);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const TrainConfig& base, const RunPaths& paths, const std::string& values_csv) {
  if (paths.grammar.empty() || paths.train.empty() || paths.valid.empty())
    throw Error(ErrorKind::ConfigError, "sweep requires grammar, train, and valid paths");
  std::vector<double> values;
  std::istringstream in(values_csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) values.push_back(std::strtod(item.c_str(), nullptr));
  }
  if (values.empty()) throw Error(ErrorKind::ConfigError, "sweep needs at least one lambda value");

  AsdlGrammar g = parse_grammar(read_file(paths.grammar));
  Dataset train_data = load_dataset(paths.train, g, "train");
  Dataset valid_data = load_dataset(paths.valid, g, "valid");
  std::vector<SweepRow> rows = lambda_sweep(g, train_data, valid_data, base, values, paths.out_dir);
  std::string csv = sweep_to_csv(rows);
  if (!paths.out_dir.empty()) {
    fs::create_directories(paths.out_dir);
    std::ofstream out(paths.out_dir + "/sweep.csv");
    out << csv;
  }
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grammar-driven sequence-to-tree trainer"};
  app.require_subcommand(1);

  // grammar check
  auto* grammar_cmd = app.add_subcommand("grammar", "grammar utilities");
  grammar_cmd->require_subcommand(1);
  std::string grammar_file;
  auto* check_cmd = grammar_cmd->add_subcommand("check", "parse and summarize a grammar");
  check_cmd->add_option("file", grammar_file, "grammar source file")->required();

  // linearize
  std::string lin_grammar, lin_sexpr, lin_order = "pre";
  bool lin_multi = false;
  auto* lin_cmd = app.add_subcommand("linearize", "print a traversal of one AST");
  lin_cmd->add_option("grammar", lin_grammar, "grammar source file")->required();
  lin_cmd->add_option("sexpr", lin_sexpr, "AST as an s-expression")->required();
  lin_cmd->add_option("--order", lin_order, "pre or bfs");
  lin_cmd->add_flag("--multi-token", lin_multi, "allow multi-token primitive fields");

  // gen-toy
  std::string toy_grammar, toy_out;
  int toy_size = 100, toy_depth = 6;
  std::uint64_t toy_seed = 1;
  bool toy_seed_given = false;
  auto* toy_cmd = app.add_subcommand("gen-toy", "generate a toy corpus");
  toy_cmd->add_option("grammar", toy_grammar, "grammar source file")->required();
  toy_cmd->add_option("--size", toy_size, "training examples");
  toy_cmd->add_option("--seed", toy_seed, "corpus seed")->each([&](const std::string&) {
    toy_seed_given = true;
  });
  toy_cmd->add_option("--out", toy_out, "output directory")->required();
  toy_cmd->add_option("--max-depth", toy_depth, "AST depth budget");

  // train + sweep share the config/flag plumbing
  std::string cfg_path, flag_mode, flag_order_a, flag_order_b, flag_preset, flag_single_role;
  std::string flag_grammar, flag_train, flag_valid, flag_test, flag_out_dir, flag_teacher;
  double flag_lambda = 0, flag_dropout = 0;
  int flag_batch = 0, flag_epochs = 0, flag_patience = 0, flag_hidden = 0, flag_embed = 0;
  int flag_eval_beam = 0, flag_runs = 1;
  std::uint64_t flag_seed = 0;
  bool flag_parallel = false;

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg_path, "JSON config file");
    cmd->add_option("--grammar", flag_grammar, "grammar source file");
    cmd->add_option("--train", flag_train, "training JSONL");
    cmd->add_option("--valid", flag_valid, "validation JSONL");
    cmd->add_option("--test", flag_test, "test JSONL");
    cmd->add_option("--out-dir", flag_out_dir, "artifact directory");
    cmd->add_option("--mode", flag_mode, "mutual | mle | kd | ml2");
    cmd->add_option("--lambda", flag_lambda, "distillation weight");
    cmd->add_option("--batch-size", flag_batch, "minibatch size");
    cmd->add_option("--epochs", flag_epochs, "epoch cap");
    cmd->add_option("--patience", flag_patience, "early-stop patience");
    cmd->add_option("--seed", flag_seed, "master seed");
    cmd->add_option("--order-a", flag_order_a, "pre or bfs");
    cmd->add_option("--order-b", flag_order_b, "pre or bfs");
    cmd->add_option("--hidden", flag_hidden, "hidden size");
    cmd->add_option("--embed", flag_embed, "embedding size");
    cmd->add_option("--dropout", flag_dropout, "decoder input dropout");
    cmd->add_option("--eval-beam", flag_eval_beam, "validation beam width");
    cmd->add_option("--preset", flag_preset, "django | atis | geo | ifttt");
    cmd->add_option("--single-role", flag_single_role, "mle: train role a or b");
    cmd->add_option("--teacher-checkpoint", flag_teacher, "kd: frozen teacher");
  };

  auto* train_cmd = app.add_subcommand("train", "train the two decoders");
  add_shared(train_cmd);
  train_cmd->add_option("--runs", flag_runs, "independent restarts");
  train_cmd->add_flag("--parallel", flag_parallel, "run restarts concurrently");

  std::string sweep_values = "0,0.25,0.5,0.75,1.0";
  auto* sweep_cmd = app.add_subcommand("sweep", "train once per lambda value");
  add_shared(sweep_cmd);
  sweep_cmd->add_option("--values", sweep_values, "comma-separated lambda values");

  // eval
  std::string eval_ckpt, eval_data, eval_order;
  int eval_beam = 1, eval_max_steps = 512;
  auto* eval_cmd = app.add_subcommand("eval", "exact-match evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_data, "JSONL dataset")->required();
  eval_cmd->add_option("--order", eval_order, "pre or bfs (default: checkpoint order)");
  eval_cmd->add_option("--beam", eval_beam, "beam width");
  eval_cmd->add_option("--max-steps", eval_max_steps, "decode step cap");

  // infer
  std::string infer_ckpt, infer_utt;
  int infer_beam = 1, infer_max_steps = 512;
  auto* infer_cmd = app.add_subcommand("infer", "decode one utterance");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "checkpoint directory")->required();
  infer_cmd->add_option("--utterance", infer_utt, "whitespace-tokenized input")->required();
  infer_cmd->add_option("--beam", infer_beam, "beam width");
  infer_cmd->add_option("--max-steps", infer_max_steps, "decode step cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check_cmd->parsed()) return cmd_grammar_check(grammar_file);
    if (lin_cmd->parsed()) return cmd_linearize(lin_grammar, lin_sexpr, lin_order, lin_multi);
    if (toy_cmd->parsed()) {
      if (!toy_seed_given) {
        if (const char* env = std::getenv("DTS_SEED")) toy_seed = std::strtoull(env, nullptr, 10);
      }
      return cmd_gen_toy(toy_grammar, toy_size, toy_seed, toy_out, toy_depth);
    }

    if (train_cmd->parsed() || sweep_cmd->parsed()) {
      CLI::App* cmd = train_cmd->parsed() ? train_cmd : sweep_cmd;
      TrainConfig cfg;
      RunPaths paths;
      std::string preset;
      if (!cfg_path.empty()) apply_config(load_config_file(cfg_path), cfg, paths, preset);
      if (cmd->count("--preset")) preset = flag_preset;
      if (!preset.empty()) apply_preset(preset, cfg);
      // Flags win over both the config file and the preset.
      if (cmd->count("--grammar")) paths.grammar = flag_grammar;
      if (cmd->count("--train")) paths.train = flag_train;
      if (cmd->count("--valid")) paths.valid = flag_valid;
      if (cmd->count("--test")) paths.test = flag_test;
      if (cmd->count("--out-dir")) paths.out_dir = flag_out_dir;
      if (cmd->count("--mode")) cfg.mode = parse_mode(flag_mode);
      if (cmd->count("--lambda")) cfg.lambda = flag_lambda;
      if (cmd->count("--batch-size")) cfg.batch_size = flag_batch;
      if (cmd->count("--epochs")) cfg.epochs = flag_epochs;
      if (cmd->count("--patience")) cfg.patience = flag_patience;
      if (cmd->count("--seed")) cfg.seed = flag_seed;
      if (cmd->count("--order-a")) cfg.order_a = parse_order(flag_order_a);
      if (cmd->count("--order-b")) cfg.order_b = parse_order(flag_order_b);
      if (cmd->count("--hidden")) cfg.model.hidden = flag_hidden;
      if (cmd->count("--embed")) cfg.model.embed = flag_embed;
      if (cmd->count("--dropout")) cfg.model.dropout = flag_dropout;
      if (cmd->count("--eval-beam")) cfg.eval_beam = flag_eval_beam;
      if (cmd->count("--single-role")) cfg.single_role = flag_single_role;
      if (cmd->count("--teacher-checkpoint")) cfg.teacher_checkpoint = flag_teacher;
      bool seed_given = cmd->count("--seed") > 0 ||
                        (!cfg_path.empty() && load_config_file(cfg_path).contains("seed"));
      apply_env_seed(seed_given, cfg);
      if (train_cmd->parsed()) return cmd_train(cfg, paths, flag_runs, flag_parallel);
      return cmd_sweep(cfg, paths, sweep_values);
    }

    if (eval_cmd->parsed()) {
      return cmd_eval(eval_ckpt, eval_data, eval_order, eval_beam, eval_max_steps);
    }
    if (infer_cmd->parsed()) {
      return cmd_infer(infer_ckpt, infer_utt, infer_beam, infer_max_steps);
    }
  } catch (const Error& e) {
    json err;
    err["error"] = error_kind_name(e.kind());
    err["message"] = e.what();
    if (!e.where().empty()) err["where"] = e.where();
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err;
    err["error"] = "Internal";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
