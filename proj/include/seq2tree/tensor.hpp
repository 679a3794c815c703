#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seq2tree/rng.hpp"

namespace seq2tree {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Vectors are column vectors throughout.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  double scalar() const;  // ShapeMismatch unless 1x1
};

/// Named parameters with gradients. Gradients accumulate additively across
/// backward calls within one step; the trainer zeroes them between steps.
/// Iteration order is creation order so serialization and optimizer sweeps
/// are deterministic.
class ParameterStore {
 public:
  Mat& create(const std::string& name, int rows, int cols);
  Mat& create_uniform(const std::string& name, int rows, int cols, Rng& rng, double lo,
                      double hi);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);
  void zero_grads();
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  int index_of(const std::string& name) const;

  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
};

/// Little-endian parameter blob: u64 JSON-header length, JSON table
/// {name -> {dtype, shape, offset}} with offsets into the data section,
/// then the raw arrays in offset order.
void save_params(const ParameterStore& store, const std::string& path, bool f32 = false);
void load_params(ParameterStore& store, const std::string& path);

/// Reverse-mode op recorder. Single-owner during recording; ops append
/// nodes, so ids are already topologically ordered and backward is a
/// straight reverse sweep. Parameter leaves copy the parameter's value at
/// record time, so a later in-place parameter update does not disturb
/// gradients still to be taken from this tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat&)>;

  Tensor input(Mat value);
  Tensor input(double scalar_value);

  /// Binds a parameter as a leaf, copying its current value. Re-binding the
  /// same (store, name) on this tape returns the existing leaf.
  Tensor param(ParameterStore& store, const std::string& name);

  int push(Mat value, BackwardFn backward);

  const Mat& value(int id) const;
  void accum_grad(int id, const Mat& g);

  /// Gradient of the last backward() w.r.t. a recorded tensor; empty matrix
  /// if the tensor received none.
  const Mat& grad(const Tensor& t) const;

  /// Reverse sweep from a recorded scalar; adds parameter-leaf gradients
  /// into their stores. May be called repeatedly (e.g. once per objective).
  void backward(const Tensor& loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct TapeNode {
    Mat value;
    BackwardFn backward;
  };
  struct ParamBinding {
    int id;
    ParameterStore* store;
    std::string name;
  };

  void check_owned(const Tensor& t) const;

  std::vector<TapeNode> nodes_;
  std::vector<Mat> grads_;
  std::vector<ParamBinding> bindings_;
  std::map<std::pair<const ParameterStore*, std::string>, int> bound_ids_;
};

// Forward ops. All tensors of one expression must live on one tape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double k);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);  // [a; b; ...]
Tensor concat_cols(const std::vector<Tensor>& parts);  // [a, b, ...]
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor pick(const Tensor& a, int row, int col);             // 1x1 view
Tensor add_col_broadcast(const Tensor& m, const Tensor& v);  // v added to every column
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);  // input floored at 1e-12
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a);  // over a column vector
Tensor softmax_masked(const Tensor& a, const std::vector<uint8_t>& mask);
Tensor embedding(const Tensor& table, int column);  // sparse gradient into one column
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool train);
Tensor detach(const Tensor& a);
Tensor kl_divergence(const Tensor& p, const Tensor& q);

/// p(v) = p_gen·p_vocab[v] + (1-p_gen)·Σ_{i: slot_of[i]=v} p_copy[i], laid
/// out on a support whose first |p_vocab| slots are vocabulary ids and
/// whose tail slots are extra surface tokens. Exact simplex output for
/// simplex inputs.
Tensor gen_copy_mixture(const Tensor& p_gen, const Tensor& p_vocab, const Tensor& p_copy,
                        const std::vector<int>& slot_of, int support_size);

struct LstmParams {
  Tensor w;  // (4H, input)  gate order [i; f; o; g]
  Tensor u;  // (4H, H)
  Tensor b;  // (4H, 1)
};

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& params);

struct OptimizerConfig {
  enum class Algo { Adam, Sgd };
  Algo algo = Algo::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping
};

/// Owns the update rule state (Adam moments, step count) for a fixed set of
/// parameter names; two optimizers may manage overlapping names (the shared
/// encoder) with independent moments.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<std::string> param_names);

  void step(ParameterStore& store);
  const OptimizerConfig& config() const { return config_; }
  const std::vector<std::string>& param_names() const { return names_; }

 private:
  OptimizerConfig config_;
  std::vector<std::string> names_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long step_count_ = 0;
};

}  // namespace seq2tree
