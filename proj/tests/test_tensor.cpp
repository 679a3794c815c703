#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "seq2tree/tensor.hpp"
#include "test_util.hpp"

using namespace seq2tree;

namespace {

Mat col(std::initializer_list<double> xs) {
  Mat m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("tensor: forward values of the elementwise and linear ops") {
  Tape tape;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  Tensor ta = tape.input(a), tb = tape.input(b);

  CHECK(add(ta, tb).value()(1, 1) == 12);
  CHECK(sub(ta, tb).value()(0, 0) == -4);
  CHECK(mul(ta, tb).value()(1, 0) == 21);
  CHECK(scale(ta, 2.5).value()(0, 1) == 5.0);
  CHECK(matmul(ta, tb).value()(0, 0) == 19);  // 1*5 + 2*7
  CHECK(transpose(ta).value()(0, 1) == 3);
  CHECK(sum(ta).scalar() == 10);
  CHECK(mean(ta).scalar() == 2.5);
  CHECK(pick(ta, 1, 0).scalar() == 3);
  CHECK(slice_rows(ta, 1, 1).value()(0, 1) == 4);

  Tensor stacked = concat_rows({ta, tb});
  CHECK(stacked.rows() == 4);
  CHECK(stacked.value()(3, 0) == 7);
  Tensor side = concat_cols({ta, tb});
  CHECK(side.cols() == 4);
  CHECK(side.value()(0, 3) == 6);

  Tensor v = tape.input(col({10, 20}));
  Tensor bc = add_col_broadcast(ta, v);
  CHECK(bc.value()(0, 1) == 12);
  CHECK(bc.value()(1, 0) == 23);

  CHECK(tanh(ta).value()(0, 0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(sigmoid(ta).value()(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(exp(ta).value()(0, 1) == doctest::Approx(std::exp(2.0)));
  CHECK(log(exp(ta)).value()(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  // the log floor keeps zero inputs finite
  Tensor z = tape.input(Mat::Zero(1, 1));
  CHECK(log(z).scalar() == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("tensor: shape and tape violations throw") {
  Tape tape, other;
  Tensor a = tape.input(Mat::Zero(2, 2));
  Tensor b = other.input(Mat::Zero(2, 2));
  CHECK_KIND(add(a, b), ErrorKind::UnrecordedTensor);
  CHECK_KIND(add(a, tape.input(Mat::Zero(3, 2))), ErrorKind::ShapeMismatch);
  CHECK_KIND(matmul(a, tape.input(Mat::Zero(3, 1))), ErrorKind::ShapeMismatch);
  CHECK_KIND(slice_rows(a, 1, 5), ErrorKind::ShapeMismatch);
  CHECK_KIND(pick(a, 2, 0), ErrorKind::ShapeMismatch);
  CHECK_KIND(a.scalar(), ErrorKind::ShapeMismatch);
  CHECK_KIND(tape.backward(a), ErrorKind::ShapeMismatch);
  CHECK_KIND(softmax(a), ErrorKind::ShapeMismatch);
  Tensor c = tape.input(col({1, 2}));
  std::vector<uint8_t> none = {0, 0};
  CHECK_KIND(softmax_masked(c, none), ErrorKind::AllMasked);
}

TEST_CASE("tensor: softmax matches the closed form and respects masks") {
  Tape tape;
  Tensor x = tape.input(col({1, 2, 3}));
  Tensor p = softmax(x);
  CHECK(p.value()(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(p.value()(1, 0) == doctest::Approx(0.24472847105479764).epsilon(1e-14));
  CHECK(p.value()(2, 0) == doctest::Approx(0.6652409557748218).epsilon(1e-14));
  CHECK(p.value().sum() == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<uint8_t> mask = {1, 0, 1};
  Tensor q = softmax_masked(x, mask);
  CHECK(q.value()(1, 0) == 0.0);
  CHECK(q.value().sum() == doctest::Approx(1.0).epsilon(1e-12));
  // masking renormalizes over the survivors
  double z = std::exp(1.0 - 3.0) + 1.0;
  CHECK(q.value()(2, 0) == doctest::Approx(1.0 / z).epsilon(1e-14));
}

TEST_CASE("tensor: kl_divergence closed forms") {
  Tape tape;
  Tensor p = tape.input(col({0.5, 0.5}));
  Tensor q = tape.input(col({0.25, 0.75}));
  // 0.5 ln 2 + 0.5 ln(2/3), frozen from an independent evaluation
  CHECK(kl_divergence(p, q).scalar() == doctest::Approx(0.14384103622589042).epsilon(1e-12));
  CHECK(kl_divergence(p, p).scalar() == 0.0);  // exactly, not approximately

  Tensor zeroed = tape.input(col({1.0, 0.0}));
  CHECK(kl_divergence(zeroed, zeroed).scalar() == 0.0);  // 0 ln 0 term drops

  Tensor not_dist = tape.input(col({0.5, 0.4}));
  CHECK_KIND(kl_divergence(not_dist, q), ErrorKind::NotNormalized);
  CHECK_KIND(kl_divergence(p, not_dist), ErrorKind::NotNormalized);
}

TEST_CASE("tensor: lstm_cell matches the frozen reference step") {
  ParameterStore store;
  Mat& w = store.create("w", 8, 2);
  w << 0.5, -0.3, 0.1, 0.2, -0.4, 0.6, 0.7, -0.1, 0.2, 0.3, -0.5, 0.4, 0.3, -0.2, 0.1, 0.6;
  Mat& u = store.create("u", 8, 2);
  u << 0.1, -0.2, 0.3, 0.4, -0.1, 0.5, 0.2, 0.2, -0.3, 0.1, 0.4, -0.4, 0.5, 0.3, -0.2, 0.1;
  Mat& b = store.create("b", 8, 1);
  b << 0.01, -0.02, 0.03, 0.04, -0.05, 0.06, 0.07, -0.08;

  Tape tape;
  LstmParams params{tape.param(store, "w"), tape.param(store, "u"), tape.param(store, "b")};
  Tensor x = tape.input(col({0.5, -0.3}));
  Tensor h0 = tape.input(col({0.1, 0.2}));
  Tensor c0 = tape.input(col({-0.4, 0.3}));
  auto [h1, c1] = lstm_cell(x, h0, c0, params);

  CHECK(h1.value()(0, 0) == doctest::Approx(0.019972765882719425).epsilon(1e-14));
  CHECK(h1.value()(1, 0) == doctest::Approx(0.03205696994275854).epsilon(1e-14));
  CHECK(c1.value()(0, 0) == doctest::Approx(0.040992503013558695).epsilon(1e-14));
  CHECK(c1.value()(1, 0) == doctest::Approx(0.07770398880214621).epsilon(1e-14));
}

TEST_CASE("tensor: finite differences confirm every op's gradient") {
  ParameterStore store;
  Rng rng(123);
  store.create_uniform("m", 3, 3, rng, -1, 1);
  store.create_uniform("n", 3, 3, rng, -1, 1);
  store.create_uniform("v", 3, 1, rng, 0.1, 1);  // positive: feeds log
  std::vector<std::string> all = {"m", "n", "v"};

  auto check = [&](const char* what, const std::function<Tensor(Tape&)>& build) {
    double err = fd_max_rel_err(store, all, build);
    CHECK_MESSAGE(err < 1e-4, what << ": worst rel err " << err);
  };

  check("add+scale", [&](Tape& t) {
    return sum(scale(add(t.param(store, "m"), t.param(store, "n")), 1.7));
  });
  check("sub", [&](Tape& t) { return sum(sub(t.param(store, "m"), t.param(store, "n"))); });
  check("mul", [&](Tape& t) { return sum(mul(t.param(store, "m"), t.param(store, "n"))); });
  check("matmul", [&](Tape& t) {
    return sum(matmul(t.param(store, "m"), t.param(store, "n")));
  });
  check("transpose", [&](Tape& t) {
    return sum(matmul(transpose(t.param(store, "m")), t.param(store, "v")));
  });
  check("concat_rows", [&](Tape& t) {
    return sum(matmul(concat_rows({t.param(store, "m"), t.param(store, "n")}),
                      t.param(store, "v")));
  });
  check("concat_cols", [&](Tape& t) {
    return sum(concat_cols({t.param(store, "m"), t.param(store, "n")}));
  });
  check("slice+pick", [&](Tape& t) {
    Tensor m = t.param(store, "m");
    return add(sum(slice_rows(m, 1, 2)), pick(m, 0, 2));
  });
  check("add_col_broadcast", [&](Tape& t) {
    return sum(add_col_broadcast(t.param(store, "m"), t.param(store, "v")));
  });
  check("tanh", [&](Tape& t) { return sum(tanh(t.param(store, "m"))); });
  check("sigmoid", [&](Tape& t) { return sum(sigmoid(t.param(store, "m"))); });
  check("exp", [&](Tape& t) { return mean(exp(t.param(store, "m"))); });
  check("log", [&](Tape& t) { return sum(log(t.param(store, "v"))); });
  check("softmax", [&](Tape& t) {
    // weight the entries so the gradient is not the zero vector
    Tensor p = softmax(t.param(store, "v"));
    return pick(p, 1, 0);
  });
  check("softmax_masked", [&](Tape& t) {
    std::vector<uint8_t> mask = {1, 0, 1};
    return pick(softmax_masked(t.param(store, "v"), mask), 2, 0);
  });
  check("embedding", [&](Tape& t) { return sum(embedding(t.param(store, "m"), 1)); });
  check("dropout", [&](Tape& t) {
    Rng r(99);  // reseeded per tape so every rebuild draws the same mask
    return sum(dropout(t.param(store, "m"), 0.4, r, true));
  });
  check("lstm_cell", [&](Tape& t) {
    ParameterStore cell;
    // reuse m/n/v as cell inputs; parameters under test stay in `store`
    LstmParams params{concat_rows({t.param(store, "m"), t.param(store, "n"),
                                   t.param(store, "m"), t.param(store, "n")}),
                      concat_rows({t.param(store, "n"), t.param(store, "m"),
                                   t.param(store, "n"), t.param(store, "m")}),
                      t.input(Mat::Zero(12, 1))};
    auto [h, c] = lstm_cell(t.param(store, "v"), t.input(col({0.1, -0.2, 0.3})),
                            t.input(col({0.2, 0.1, -0.1})), params);
    return add(sum(h), sum(c));
  });
  check("kl", [&](Tape& t) {
    Tensor p = softmax(t.param(store, "v"));
    Tensor q = softmax(embedding(t.param(store, "m"), 0));
    return kl_divergence(p, q);
  });
  check("gen_copy_mixture", [&](Tape& t) {
    Tensor p_gen = sigmoid(pick(t.param(store, "m"), 0, 0));
    Tensor p_vocab = softmax(t.param(store, "v"));
    Tensor p_copy = softmax(embedding(t.param(store, "n"), 2));
    std::vector<int> slot_of = {1, 3, 1};  // two copy positions share a slot
    Tensor mix = gen_copy_mixture(p_gen, p_vocab, p_copy, slot_of, 4);
    return log(pick(mix, 1, 0));
  });
}

TEST_CASE("tensor: detach blocks gradients exactly") {
  ParameterStore store;
  Rng rng(5);
  store.create_uniform("w", 2, 2, rng, -1, 1);

  Tape tape;
  Tensor w = tape.param(store, "w");
  Tensor loss = sum(mul(detach(w), w));
  tape.backward(loss);
  // d/dw [stop(w) * w] = stop(w): the detached factor contributes nothing
  const Mat& g = store.grad("w");
  CHECK(g == store.value("w"));

  store.zero_grads();
  Tape t2;
  Tensor w2 = t2.param(store, "w");
  t2.backward(sum(detach(w2)));
  CHECK(store.grad("w").isZero(0.0));  // exactly zero, not just small
}

TEST_CASE("tensor: parameter binding dedups and accumulates across backward calls") {
  ParameterStore store;
  store.create("w", 1, 1)(0, 0) = 3.0;

  Tape tape;
  Tensor first = tape.param(store, "w");
  Tensor second = tape.param(store, "w");
  CHECK(first.id == second.id);  // one leaf per (store, name)

  Tensor loss_a = scale(first, 2.0);
  Tensor loss_b = scale(second, 5.0);
  tape.backward(loss_a);
  CHECK(store.grad("w")(0, 0) == 2.0);
  tape.backward(loss_b);  // second objective adds in
  CHECK(store.grad("w")(0, 0) == 7.0);
}

TEST_CASE("tensor: gradients flow only through nodes below the loss") {
  ParameterStore store;
  store.create("w", 1, 1)(0, 0) = 2.0;
  Tape tape;
  Tensor w = tape.param(store, "w");
  Tensor early = scale(w, 3.0);
  Tensor late = scale(w, 10.0);  // recorded after `early`
  tape.backward(early);
  CHECK(store.grad("w")(0, 0) == 3.0);
  CHECK(tape.grad(late).size() == 0);  // untouched by the sweep
}

TEST_CASE("tensor: optimizer steps match hand-computed updates") {
  SUBCASE("sgd") {
    ParameterStore store;
    store.create("p", 1, 1)(0, 0) = 1.0;
    store.grad("p")(0, 0) = 0.5;
    OptimizerConfig cfg;
    cfg.algo = OptimizerConfig::Algo::Sgd;
    cfg.lr = 0.1;
    Optimizer opt(cfg, {"p"});
    opt.step(store);
    CHECK(store.value("p")(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  }

  SUBCASE("adam with defaults") {
    ParameterStore store;
    store.create("p", 1, 1)(0, 0) = 1.0;
    OptimizerConfig cfg;  // lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8
    Optimizer opt(cfg, {"p"});
    store.grad("p")(0, 0) = 0.5;
    opt.step(store);
    CHECK(store.value("p")(0, 0) == doctest::Approx(0.99900000002).epsilon(1e-12));
    store.grad("p")(0, 0) = 0.5;
    opt.step(store);
    CHECK(store.value("p")(0, 0) == doctest::Approx(0.99800000004).epsilon(1e-12));
  }

  SUBCASE("global norm clipping") {
    ParameterStore store;
    store.create("a", 1, 1)(0, 0) = 0.0;
    store.create("b", 1, 1)(0, 0) = 0.0;
    store.grad("a")(0, 0) = 3.0;
    store.grad("b")(0, 0) = 4.0;  // global norm 5
    OptimizerConfig cfg;
    cfg.algo = OptimizerConfig::Algo::Sgd;
    cfg.lr = 1.0;
    cfg.clip_norm = 1.0;
    Optimizer opt(cfg, {"a", "b"});
    opt.step(store);
    CHECK(store.value("a")(0, 0) == doctest::Approx(-0.6).epsilon(1e-12));
    CHECK(store.value("b")(0, 0) == doctest::Approx(-0.8).epsilon(1e-12));
  }

  SUBCASE("invalid learning rate") {
    OptimizerConfig cfg;
    cfg.lr = 0;
    CHECK_KIND(Optimizer(cfg, {}), ErrorKind::ConfigError);
  }
}

TEST_CASE("tensor: parameter blob round-trips") {
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "dts_params_test.bin").string();

  ParameterStore store;
  Rng rng(2024);
  store.create_uniform("enc.w", 4, 3, rng, -1, 1);
  store.create_uniform("dec.b", 2, 1, rng, -1, 1);

  SUBCASE("f64 is bit-exact") {
    save_params(store, path);
    ParameterStore back;
    load_params(back, path);
    CHECK(back.value("enc.w") == store.value("enc.w"));
    CHECK(back.value("dec.b") == store.value("dec.b"));
  }

  SUBCASE("f32 loses at most single precision") {
    save_params(store, path, true);
    ParameterStore back;
    load_params(back, path);
    CHECK((back.value("enc.w") - store.value("enc.w")).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("loading into an existing store checks shapes") {
    save_params(store, path);
    ParameterStore other;
    other.create("enc.w", 5, 5);
    CHECK_KIND(load_params(other, path), ErrorKind::ShapeMismatch);
  }

  fs::remove(path);
}

TEST_CASE("tensor: create_uniform is deterministic and in range") {
  ParameterStore s1, s2;
  Rng r1(77), r2(77);
  Mat& a = s1.create_uniform("w", 10, 10, r1, -0.1, 0.1);
  Mat& b = s2.create_uniform("w", 10, 10, r2, -0.1, 0.1);
  CHECK(a == b);
  CHECK(a.maxCoeff() < 0.1);
  CHECK(a.minCoeff() >= -0.1);
  CHECK_KIND(s1.create("w", 1, 1), ErrorKind::ConfigError);
}
