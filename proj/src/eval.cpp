#include "seq2tree/eval.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "seq2tree/error.hpp"
#include "seq2tree/train.hpp"

namespace seq2tree {

std::vector<BucketStats> empty_buckets() {
  return {{1, 10}, {11, 20}, {21, 30}, {31, 40}, {41, -1}};
}

int bucket_index(int tree_size) {
  if (tree_size <= 10) return 0;
  if (tree_size <= 20) return 1;
  if (tree_size <= 30) return 2;
  if (tree_size <= 40) return 3;
  return 4;
}

bool exact_match(const AstNode& pred, const AstNode& gold, const AsdlGrammar& g) {
  return to_sexpr(pred, g) == to_sexpr(gold, g);
}

EvalReport evaluate(const Model& model, ParameterStore& store, const Dataset& data,
                    TraversalOrder order, int beam_width, int max_steps) {
  EvalReport report;
  report.order = order_name(order);
  report.beam_width = beam_width;
  report.buckets = empty_buckets();
  const AsdlGrammar& g = model.grammar();
  for (int i = 0; i < data.size(); ++i) {
    const Example& ex = data.examples[i];
    ExampleVerdict verdict;
    verdict.index = i;
    try {
      AstPtr pred = model.beam_decode(store, ex.utterance, order, beam_width, max_steps);
      verdict.predicted = to_sexpr(*pred, g);
      verdict.match = exact_match(*pred, *ex.ast, g);
    } catch (const Error& e) {
      verdict.error = e.what();
      verdict.match = false;
    }
    BucketStats& bucket = report.buckets[bucket_index(ex.tree.size())];
    bucket.total += 1;
    report.total += 1;
    if (verdict.match) {
      bucket.matches += 1;
      report.matches += 1;
    }
    report.verdicts.push_back(std::move(verdict));
  }
  report.accuracy = report.total == 0 ? 0.0 : double(report.matches) / report.total;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const BucketStats& b : report.buckets) {
    nlohmann::json jb = {{"lo", b.lo},
                         {"total", b.total},
                         {"matches", b.matches},
                         {"accuracy", b.accuracy()}};
    if (b.hi >= 0)
      jb["hi"] = b.hi;
    else
      jb["hi"] = nullptr;
    buckets.push_back(jb);
  }
  nlohmann::json verdicts = nlohmann::json::array();
  for (const ExampleVerdict& v : report.verdicts) {
    nlohmann::json jv = {{"index", v.index}, {"match", v.match}};
    if (!v.predicted.empty()) jv["predicted"] = v.predicted;
    if (!v.error.empty()) jv["error"] = v.error;
    verdicts.push_back(jv);
  }
  nlohmann::json j = {{"total", report.total},     {"matches", report.matches},
                      {"accuracy", report.accuracy}, {"buckets", buckets},
                      {"order", report.order},     {"beam_width", report.beam_width},
                      {"verdicts", verdicts}};
  return j.dump(2);
}

std::vector<SweepRow> lambda_sweep(const AsdlGrammar& g, const Dataset& train_data,
                                   const Dataset& valid_data, const TrainConfig& base,
                                   const std::vector<double>& values,
                                   const std::string& out_dir) {
  if (values.empty()) throw Error(ErrorKind::ConfigError, "lambda sweep needs values");
  std::vector<SweepRow> rows;
  for (double lambda : values) {
    TrainConfig cfg = base;
    cfg.lambda = lambda;
    std::string run_dir;
    if (!out_dir.empty()) {
      std::ostringstream name;
      name << out_dir << "/lambda_" << lambda;
      run_dir = name.str();
    }
    TrainResult result = train(g, train_data, valid_data, cfg, run_dir);
    SweepRow row;
    row.lambda = lambda;
    row.acc_a = result.best_acc_a;
    row.acc_b = result.best_acc_b;
    row.mean = (row.acc_a + row.acc_b) / 2.0;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "lambda,acc_a,acc_b,mean\n";
  for (const SweepRow& r : rows)
    out << r.lambda << "," << r.acc_a << "," << r.acc_b << "," << r.mean << "\n";
  return out.str();
}

RunAggregate aggregate_runs(const std::vector<std::pair<double, double>>& accs) {
  RunAggregate agg;
  agg.runs = static_cast<int>(accs.size());
  if (accs.empty()) return agg;
  double min_a = accs[0].first, max_a = accs[0].first;
  double min_b = accs[0].second, max_b = accs[0].second;
  for (const auto& [a, b] : accs) {
    agg.mean_a += a;
    agg.mean_b += b;
    min_a = std::min(min_a, a);
    max_a = std::max(max_a, a);
    min_b = std::min(min_b, b);
    max_b = std::max(max_b, b);
  }
  agg.mean_a /= agg.runs;
  agg.mean_b /= agg.runs;
  agg.spread_a = max_a - min_a;
  agg.spread_b = max_b - min_b;
  return agg;
}

}  // namespace seq2tree
