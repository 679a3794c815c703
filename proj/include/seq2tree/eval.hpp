#pragma once

#include <string>
#include <vector>

#include "seq2tree/corpus.hpp"
#include "seq2tree/model.hpp"

namespace seq2tree {

struct TrainConfig;  // train.hpp; lambda_sweep trains once per value

/// Tables bucket examples by action-tree node count.
struct BucketStats {
  int lo = 0;
  int hi = 0;  // -1 marks the open [41, inf) bucket
  int total = 0;
  int matches = 0;

  double accuracy() const { return total == 0 ? 0.0 : double(matches) / total; }
};

struct ExampleVerdict {
  int index = 0;
  bool match = false;
  std::string predicted;  // canonical s-expr; empty when the decode failed
  std::string error;      // decode failure note, empty otherwise
};

struct EvalReport {
  int total = 0;
  int matches = 0;
  double accuracy = 0;
  std::vector<BucketStats> buckets;  // [1,10] [11,20] [21,30] [31,40] [41,inf)
  std::vector<ExampleVerdict> verdicts;
  std::string order;
  int beam_width = 1;
};

std::vector<BucketStats> empty_buckets();
int bucket_index(int tree_size);

/// Canonical s-expressions compared byte-for-byte.
bool exact_match(const AstNode& pred, const AstNode& gold, const AsdlGrammar& g);

/// Decodes every example; failures count as non-matches, never abort.
EvalReport evaluate(const Model& model, ParameterStore& store, const Dataset& data,
                    TraversalOrder order, int beam_width, int max_steps = 512);

std::string report_to_json(const EvalReport& report);

struct SweepRow {
  double lambda = 0;
  double acc_a = 0;
  double acc_b = 0;
  double mean = 0;
};

/// Trains once per λ value from the same base config and reports the best
/// validation accuracies. Subdirectories lambda_<value> under out_dir hold
/// the per-value runs when out_dir is nonempty.
std::vector<SweepRow> lambda_sweep(const AsdlGrammar& g, const Dataset& train_data,
                                   const Dataset& valid_data, const TrainConfig& base,
                                   const std::vector<double>& values,
                                   const std::string& out_dir);

/// CSV with header `lambda,acc_a,acc_b,mean`.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Mean and max-min spread over per-run accuracies.
struct RunAggregate {
  int runs = 0;
  double mean_a = 0, mean_b = 0;
  double spread_a = 0, spread_b = 0;
};

RunAggregate aggregate_runs(const std::vector<std::pair<double, double>>& accs);

}  // namespace seq2tree
