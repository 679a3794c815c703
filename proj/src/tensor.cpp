#include "seq2tree/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "seq2tree/error.hpp"

namespace seq2tree {

namespace {

constexpr double kFloor = 1e-12;

void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

Tape* tape_of(const Tensor& a, const Tensor& b) {
  require(a.tape != nullptr && a.tape == b.tape, ErrorKind::UnrecordedTensor,
          "operands recorded on different tapes");
  return a.tape;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor / Tape

const Mat& Tensor::value() const {
  require(tape != nullptr, ErrorKind::UnrecordedTensor, "tensor has no tape");
  return tape->value(id);
}

double Tensor::scalar() const {
  const Mat& v = value();
  require(v.rows() == 1 && v.cols() == 1, ErrorKind::ShapeMismatch,
          "scalar() on a non-1x1 tensor");
  return v(0, 0);
}

Tensor Tape::input(Mat value) {
  return Tensor{this, push(std::move(value), nullptr)};
}

Tensor Tape::input(double scalar_value) {
  Mat m(1, 1);
  m(0, 0) = scalar_value;
  return input(std::move(m));
}

Tensor Tape::param(ParameterStore& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const ParameterStore*>(&store), name);
  auto it = bound_ids_.find(key);
  if (it != bound_ids_.end()) return Tensor{this, it->second};
  int id = push(store.value(name), nullptr);
  bindings_.push_back({id, &store, name});
  bound_ids_[key] = id;
  return Tensor{this, id};
}

int Tape::push(Mat value, BackwardFn backward) {
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back({std::move(value), std::move(backward)});
  return id;
}

const Mat& Tape::value(int id) const { return nodes_[id].value; }

void Tape::accum_grad(int id, const Mat& g) {
  if (grads_[id].size() == 0)
    grads_[id] = g;
  else
    grads_[id] += g;
}

const Mat& Tape::grad(const Tensor& t) const {
  check_owned(t);
  return grads_[t.id];
}

void Tape::check_owned(const Tensor& t) const {
  require(t.tape == this && t.id >= 0 && t.id < size(), ErrorKind::UnrecordedTensor,
          "tensor not recorded on this tape");
}

void Tape::backward(const Tensor& loss) {
  check_owned(loss);
  const Mat& v = nodes_[loss.id].value;
  require(v.rows() == 1 && v.cols() == 1, ErrorKind::ShapeMismatch,
          "backward from a non-scalar tensor");
  grads_.assign(nodes_.size(), Mat());
  grads_[loss.id] = Mat::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    if (grads_[id].size() == 0 || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, grads_[id]);
  }
  for (const ParamBinding& b : bindings_) {
    if (b.id <= loss.id && grads_[b.id].size() != 0) b.store->grad(b.name) += grads_[b.id];
  }
}

// ---------------------------------------------------------------------------
// ParameterStore

int ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::UnrecordedTensor, "unknown parameter '" + name + "'");
  return it->second;
}

Mat& ParameterStore::create(const std::string& name, int rows, int cols) {
  require(index_.count(name) == 0, ErrorKind::ConfigError,
          "parameter '" + name + "' already exists");
  index_[name] = static_cast<int>(names_.size());
  names_.push_back(name);
  values_.push_back(Mat::Zero(rows, cols));
  grads_.push_back(Mat::Zero(rows, cols));
  return values_.back();
}

Mat& ParameterStore::create_uniform(const std::string& name, int rows, int cols, Rng& rng,
                                    double lo, double hi) {
  Mat& m = create(name, rows, cols);
  // Row-major fill so the draw order reads like the printed matrix.
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Mat& ParameterStore::value(const std::string& name) { return values_[index_of(name)]; }
const Mat& ParameterStore::value(const std::string& name) const {
  return values_[index_of(name)];
}
Mat& ParameterStore::grad(const std::string& name) { return grads_[index_of(name)]; }

void ParameterStore::zero_grads() {
  for (Mat& g : grads_) g.setZero();
}

// ---------------------------------------------------------------------------
// Parameter blob

void save_params(const ParameterStore& store, const std::string& path, bool f32) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const std::string& name : store.names()) {
    const Mat& m = store.value(name);
    std::uint64_t bytes =
        static_cast<std::uint64_t>(m.size()) * (f32 ? sizeof(float) : sizeof(double));
    header[name] = {{"dtype", f32 ? "f32" : "f64"},
                    {"shape", {m.rows(), m.cols()}},
                    {"offset", offset}};
    offset += bytes;
  }
  std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::IoError, "cannot write '" + path + "'");
  std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const std::string& name : store.names()) {
    const Mat& m = store.value(name);
    if (f32) {
      std::vector<float> buf(static_cast<std::size_t>(m.size()));
      for (Eigen::Index i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m.data()[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
  }
  require(out.good(), ErrorKind::IoError, "short write to '" + path + "'");
}

void load_params(ParameterStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::IoError, "cannot read '" + path + "'");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  require(in.good(), ErrorKind::IoError, "truncated parameter blob header");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  require(in.good(), ErrorKind::IoError, "truncated parameter blob header");
  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  require(!header.is_discarded() && header.is_object(), ErrorKind::IoError,
          "parameter blob header is not a JSON object");

  // Offsets say where each array lives; read in offset order.
  std::vector<std::pair<std::uint64_t, std::string>> order;
  for (const auto& [name, entry] : header.items())
    order.emplace_back(entry.at("offset").get<std::uint64_t>(), name);
  std::sort(order.begin(), order.end());

  std::uint64_t data_start = sizeof(header_len) + header_len;
  for (const auto& [offset, name] : order) {
    const nlohmann::json& entry = header.at(name);
    std::string dtype = entry.at("dtype").get<std::string>();
    require(dtype == "f64" || dtype == "f32", ErrorKind::IoError,
            "unknown dtype '" + dtype + "' for parameter '" + name + "'");
    int rows = entry.at("shape").at(0).get<int>();
    int cols = entry.at("shape").at(1).get<int>();
    Mat& m = store.has(name) ? store.value(name) : store.create(name, rows, cols);
    require(m.rows() == rows && m.cols() == cols, ErrorKind::ShapeMismatch,
            "parameter '" + name + "' shape differs from blob");
    in.seekg(static_cast<std::streamoff>(data_start + offset));
    if (dtype == "f32") {
      std::vector<float> buf(static_cast<std::size_t>(m.size()));
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = buf[i];
    } else {
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    require(in.good(), ErrorKind::IoError, "truncated data for parameter '" + name + "'");
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear ops

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of(a, b);
  require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
          ErrorKind::ShapeMismatch, "add: operand shapes differ");
  int ia = a.id, ib = b.id;
  return Tensor{tape, tape->push(a.value() + b.value(), [ia, ib](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g);
                  t.accum_grad(ib, g);
                })};
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of(a, b);
  require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
          ErrorKind::ShapeMismatch, "sub: operand shapes differ");
  int ia = a.id, ib = b.id;
  return Tensor{tape, tape->push(a.value() - b.value(), [ia, ib](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g);
                  t.accum_grad(ib, -g);
                })};
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of(a, b);
  require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
          ErrorKind::ShapeMismatch, "mul: operand shapes differ");
  int ia = a.id, ib = b.id;
  // Closures capture ids only and reread inputs from the tape: copying
  // operand matrices here multiplies memory by the expression depth.
  return Tensor{tape, tape->push(a.value().cwiseProduct(b.value()),
                                 [ia, ib](Tape& t, const Mat& g) {
                                   t.accum_grad(ia, g.cwiseProduct(t.value(ib)));
                                   t.accum_grad(ib, g.cwiseProduct(t.value(ia)));
                                 })};
}

Tensor scale(const Tensor& a, double k) {
  int ia = a.id;
  return Tensor{a.tape, a.tape->push(a.value() * k, [ia, k](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g * k);
                })};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* tape = tape_of(a, b);
  require(a.value().cols() == b.value().rows(), ErrorKind::ShapeMismatch,
          "matmul: inner dimensions differ");
  int ia = a.id, ib = b.id;
  return Tensor{tape, tape->push(a.value() * b.value(), [ia, ib](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g * t.value(ib).transpose());
                  t.accum_grad(ib, t.value(ia).transpose() * g);
                })};
}

Tensor transpose(const Tensor& a) {
  int ia = a.id;
  return Tensor{a.tape, a.tape->push(a.value().transpose(), [ia](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g.transpose());
                })};
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_rows of nothing");
  Tape* tape = parts[0].tape;
  Eigen::Index cols = parts[0].value().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Tensor& p : parts) {
    tape_of(parts[0], p);
    require(p.value().cols() == cols, ErrorKind::ShapeMismatch,
            "concat_rows: column counts differ");
    ids.push_back(p.id);
    heights.push_back(p.value().rows());
    rows += p.value().rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.value().rows()) = p.value();
    at += p.value().rows();
  }
  return Tensor{tape, tape->push(std::move(out), [ids, heights](Tape& t, const Mat& g) {
                  Eigen::Index at = 0;
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    t.accum_grad(ids[i], g.middleRows(at, heights[i]));
                    at += heights[i];
                  }
                })};
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_cols of nothing");
  Tape* tape = parts[0].tape;
  Eigen::Index rows = parts[0].value().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Tensor& p : parts) {
    tape_of(parts[0], p);
    require(p.value().rows() == rows, ErrorKind::ShapeMismatch,
            "concat_cols: row counts differ");
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
    cols += p.value().cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.value().cols()) = p.value();
    at += p.value().cols();
  }
  return Tensor{tape, tape->push(std::move(out), [ids, widths](Tape& t, const Mat& g) {
                  Eigen::Index at = 0;
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    t.accum_grad(ids[i], g.middleCols(at, widths[i]));
                    at += widths[i];
                  }
                })};
}

Tensor slice_rows(const Tensor& a, int start, int len) {
  const Mat& v = a.value();
  require(start >= 0 && len >= 1 && start + len <= v.rows(), ErrorKind::ShapeMismatch,
          "slice_rows out of range");
  int ia = a.id;
  Eigen::Index rows = v.rows(), cols = v.cols();
  return Tensor{a.tape, a.tape->push(v.middleRows(start, len),
                                     [ia, start, len, rows, cols](Tape& t, const Mat& g) {
                                       Mat full = Mat::Zero(rows, cols);
                                       full.middleRows(start, len) = g;
                                       t.accum_grad(ia, full);
                                     })};
}

Tensor pick(const Tensor& a, int row, int col) {
  const Mat& v = a.value();
  require(row >= 0 && row < v.rows() && col >= 0 && col < v.cols(), ErrorKind::ShapeMismatch,
          "pick out of range");
  int ia = a.id;
  Eigen::Index rows = v.rows(), cols = v.cols();
  Mat out(1, 1);
  out(0, 0) = v(row, col);
  return Tensor{a.tape, a.tape->push(std::move(out),
                                     [ia, row, col, rows, cols](Tape& t, const Mat& g) {
                                       Mat full = Mat::Zero(rows, cols);
                                       full(row, col) = g(0, 0);
                                       t.accum_grad(ia, full);
                                     })};
}

Tensor add_col_broadcast(const Tensor& m, const Tensor& v) {
  Tape* tape = tape_of(m, v);
  require(v.value().cols() == 1 && v.value().rows() == m.value().rows(),
          ErrorKind::ShapeMismatch, "add_col_broadcast: v must be a matching column");
  int im = m.id, iv = v.id;
  Mat out = m.value();
  out.colwise() += Eigen::VectorXd(v.value().col(0));
  return Tensor{tape, tape->push(std::move(out), [im, iv](Tape& t, const Mat& g) {
                  t.accum_grad(im, g);
                  t.accum_grad(iv, g.rowwise().sum());
                })};
}

// ---------------------------------------------------------------------------
// Nonlinearities and reductions

Tensor tanh(const Tensor& a) {
  int ia = a.id;
  int out = a.tape->size();  // id the push below assigns
  return Tensor{a.tape, a.tape->push(a.value().array().tanh().matrix(),
                                     [ia, out](Tape& t, const Mat& g) {
                                       const Mat& y = t.value(out);
                                       t.accum_grad(
                                           ia, (g.array() * (1.0 - y.array().square())).matrix());
                                     })};
}

Tensor sigmoid(const Tensor& a) {
  int ia = a.id;
  int out = a.tape->size();
  return Tensor{a.tape,
                a.tape->push((1.0 / (1.0 + (-a.value().array()).exp())).matrix(),
                             [ia, out](Tape& t, const Mat& g) {
                               const Mat& y = t.value(out);
                               t.accum_grad(
                                   ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
                             })};
}

Tensor log(const Tensor& a) {
  int ia = a.id;
  return Tensor{a.tape, a.tape->push(a.value().array().max(kFloor).log().matrix(),
                                     [ia](Tape& t, const Mat& g) {
                                       // Zero slope inside the floored region.
                                       const Mat& x = t.value(ia);
                                       Mat dx = (x.array() > kFloor)
                                                    .select(g.array() / x.array(),
                                                            Mat::Zero(x.rows(), x.cols()))
                                                    .matrix();
                                       t.accum_grad(ia, dx);
                                     })};
}

Tensor exp(const Tensor& a) {
  int ia = a.id;
  int out = a.tape->size();
  return Tensor{a.tape, a.tape->push(a.value().array().exp().matrix(),
                                     [ia, out](Tape& t, const Mat& g) {
                                       t.accum_grad(ia,
                                                    (g.array() * t.value(out).array()).matrix());
                                     })};
}

Tensor sum(const Tensor& a) {
  int ia = a.id;
  Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor{a.tape, a.tape->push(std::move(out), [ia, rows, cols](Tape& t, const Mat& g) {
                  t.accum_grad(ia, Mat::Constant(rows, cols, g(0, 0)));
                })};
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

namespace {

Tensor softmax_impl(const Tensor& a, const std::vector<uint8_t>* mask) {
  const Mat& x = a.value();
  require(x.cols() == 1, ErrorKind::ShapeMismatch, "softmax expects a column vector");
  if (mask)
    require(static_cast<Eigen::Index>(mask->size()) == x.rows(), ErrorKind::ShapeMismatch,
            "softmax mask length differs from input");
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (!mask || (*mask)[i]) best = std::max(best, x(i, 0));
  require(std::isfinite(best), ErrorKind::AllMasked, "softmax: no unmasked entries");
  Mat y = Mat::Zero(x.rows(), 1);
  double z = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    y(i, 0) = std::exp(x(i, 0) - best);
    z += y(i, 0);
  }
  y /= z;
  int ia = a.id;
  int out = a.tape->size();
  return Tensor{a.tape, a.tape->push(std::move(y), [ia, out](Tape& t, const Mat& g) {
                  // Masked entries have y = 0, hence zero gradient rows.
                  const Mat& yv = t.value(out);
                  double dot = (g.array() * yv.array()).sum();
                  t.accum_grad(ia, (yv.array() * (g.array() - dot)).matrix());
                })};
}

}  // namespace

Tensor softmax(const Tensor& a) { return softmax_impl(a, nullptr); }

Tensor softmax_masked(const Tensor& a, const std::vector<uint8_t>& mask) {
  return softmax_impl(a, &mask);
}

Tensor embedding(const Tensor& table, int column) {
  const Mat& v = table.value();
  require(column >= 0 && column < v.cols(), ErrorKind::ShapeMismatch,
          "embedding column out of range");
  int ia = table.id;
  Eigen::Index rows = v.rows(), cols = v.cols();
  return Tensor{table.tape,
                table.tape->push(v.col(column), [ia, column, rows, cols](Tape& t, const Mat& g) {
                  Mat full = Mat::Zero(rows, cols);
                  full.col(column) = g;
                  t.accum_grad(ia, full);
                })};
}

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool train) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::ConfigError, "dropout rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  const Mat& x = a.value();
  double keep = 1.0 - rate;
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  int ia = a.id;
  return Tensor{a.tape, a.tape->push(x.cwiseProduct(mask), [ia, mask](Tape& t, const Mat& g) {
                  t.accum_grad(ia, g.cwiseProduct(mask));
                })};
}

Tensor detach(const Tensor& a) {
  return Tensor{a.tape, a.tape->push(a.value(), nullptr)};
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  Tape* tape = tape_of(p, q);
  const Mat& vp = p.value();
  const Mat& vq = q.value();
  require(vp.rows() == vq.rows() && vp.cols() == 1 && vq.cols() == 1, ErrorKind::ShapeMismatch,
          "kl_divergence expects two equal-length columns");
  require(std::abs(vp.sum() - 1.0) <= 1e-6, ErrorKind::NotNormalized,
          "kl_divergence: p does not sum to 1");
  require(std::abs(vq.sum() - 1.0) <= 1e-6, ErrorKind::NotNormalized,
          "kl_divergence: q does not sum to 1");
  double kl = 0;
  for (Eigen::Index i = 0; i < vp.rows(); ++i) {
    if (vp(i, 0) <= 0) continue;  // 0·ln0 = 0
    kl += vp(i, 0) * std::log(vp(i, 0) / std::max(vq(i, 0), kFloor));
  }
  Mat out(1, 1);
  out(0, 0) = kl;
  int ip = p.id, iq = q.id;
  return Tensor{tape, tape->push(std::move(out), [ip, iq](Tape& t, const Mat& g) {
                  const Mat& vp = t.value(ip);
                  const Mat& vq = t.value(iq);
                  Mat dp = Mat::Zero(vp.rows(), 1);
                  Mat dq = Mat::Zero(vq.rows(), 1);
                  for (Eigen::Index i = 0; i < vp.rows(); ++i) {
                    double qi = std::max(vq(i, 0), kFloor);
                    if (vp(i, 0) > 0) dp(i, 0) = std::log(vp(i, 0) / qi) + 1.0;
                    if (vq(i, 0) > kFloor) dq(i, 0) = -vp(i, 0) / qi;
                  }
                  t.accum_grad(ip, g(0, 0) * dp);
                  t.accum_grad(iq, g(0, 0) * dq);
                })};
}

Tensor gen_copy_mixture(const Tensor& p_gen, const Tensor& p_vocab, const Tensor& p_copy,
                        const std::vector<int>& slot_of, int support_size) {
  Tape* tape = tape_of(p_gen, p_vocab);
  tape_of(p_vocab, p_copy);
  require(p_gen.value().rows() == 1 && p_gen.value().cols() == 1, ErrorKind::ShapeMismatch,
          "gen_copy_mixture: p_gen must be scalar");
  require(p_vocab.value().cols() == 1 && p_copy.value().cols() == 1, ErrorKind::ShapeMismatch,
          "gen_copy_mixture: distributions must be columns");
  Eigen::Index v_size = p_vocab.value().rows();
  Eigen::Index c_size = p_copy.value().rows();
  require(static_cast<Eigen::Index>(slot_of.size()) == c_size, ErrorKind::ShapeMismatch,
          "gen_copy_mixture: slot map length differs from p_copy");
  require(support_size >= v_size, ErrorKind::ShapeMismatch,
          "gen_copy_mixture: support smaller than vocabulary");
  for (int s : slot_of)
    require(s >= 0 && s < support_size, ErrorKind::ShapeMismatch,
            "gen_copy_mixture: slot out of support");

  double gen = p_gen.value()(0, 0);
  Mat out = Mat::Zero(support_size, 1);
  out.topRows(v_size) = gen * p_vocab.value();
  for (Eigen::Index i = 0; i < c_size; ++i)
    out(slot_of[i], 0) += (1.0 - gen) * p_copy.value()(i, 0);

  int ig = p_gen.id, iv = p_vocab.id, ic = p_copy.id;
  return Tensor{tape, tape->push(std::move(out),
                                 [ig, iv, ic, slot_of, gen](Tape& t, const Mat& g) {
                                   const Mat& vv = t.value(iv);
                                   const Mat& vc = t.value(ic);
                                   Eigen::Index v_size = vv.rows();
                                   Mat dv = gen * g.topRows(v_size);
                                   Mat dc = Mat::Zero(vc.rows(), 1);
                                   double dgen = (g.topRows(v_size).array() * vv.array()).sum();
                                   for (Eigen::Index i = 0; i < vc.rows(); ++i) {
                                     dc(i, 0) = (1.0 - gen) * g(slot_of[i], 0);
                                     dgen -= g(slot_of[i], 0) * vc(i, 0);
                                   }
                                   t.accum_grad(iv, dv);
                                   t.accum_grad(ic, dc);
                                   Mat dg(1, 1);
                                   dg(0, 0) = dgen;
                                   t.accum_grad(ig, dg);
                                 })};
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& params) {
  Eigen::Index hidden = h_prev.value().rows();
  require(params.w.value().rows() == 4 * hidden && params.u.value().rows() == 4 * hidden &&
              params.b.value().rows() == 4 * hidden,
          ErrorKind::ShapeMismatch, "lstm_cell: gate stack must be 4x hidden");
  Tensor gates = add(add(matmul(params.w, x), matmul(params.u, h_prev)), params.b);
  int h = static_cast<int>(hidden);
  Tensor i = sigmoid(slice_rows(gates, 0, h));
  Tensor f = sigmoid(slice_rows(gates, h, h));
  Tensor o = sigmoid(slice_rows(gates, 2 * h, h));
  Tensor g = tanh(slice_rows(gates, 3 * h, h));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h_out = mul(o, tanh(c));
  return {h_out, c};
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(OptimizerConfig config, std::vector<std::string> param_names)
    : config_(config), names_(std::move(param_names)) {
  require(config_.lr > 0, ErrorKind::ConfigError, "learning rate must be positive");
}

void Optimizer::step(ParameterStore& store) {
  if (m_.empty()) {
    m_.reserve(names_.size());
    v_.reserve(names_.size());
    for (const std::string& name : names_) {
      const Mat& p = store.value(name);
      m_.push_back(Mat::Zero(p.rows(), p.cols()));
      v_.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
  if (config_.clip_norm > 0) {
    double sq = 0;
    for (const std::string& name : names_) sq += store.grad(name).squaredNorm();
    double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) {
      double shrink = config_.clip_norm / norm;
      for (const std::string& name : names_) store.grad(name) *= shrink;
    }
  }
  step_count_ += 1;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    Mat& p = store.value(names_[i]);
    const Mat& g = store.grad(names_[i]);
    if (config_.algo == OptimizerConfig::Algo::Sgd) {
      p -= config_.lr * g;
      continue;
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    Mat m_hat = m_[i] / bc1;
    Mat v_hat = v_[i] / bc2;
    p -= config_.lr * (m_hat.array() / (v_hat.array().sqrt() + config_.eps)).matrix();
  }
}

}  // namespace seq2tree
