#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "cscore/nn/gradcheck.hpp"
#include "cscore/nn/optim.hpp"
#include "cscore/nn/params.hpp"
#include "cscore/nn/rng.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/nn/transformer.hpp"

using namespace cs;
using namespace cs::nn;

namespace {

TensorF make(std::int64_t r, std::int64_t c, std::vector<float> v) {
  TensorF t(r, c);
  REQUIRE(static_cast<std::int64_t>(v.size()) == r * c);
  t.data = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("affine map") {
  TapeF tape;
  const auto x = tape.leaf(make(1, 2, {1, 2}));
  const auto w = tape.leaf(make(2, 1, {1, 1}));
  const auto b = tape.leaf(make(1, 1, {3}));
  const auto y = tape.affine(x, w, b);
  CHECK(tape.value(y).at(0, 0) == 6.0f);

  // identity weights pass the input through
  TapeF t2;
  const auto x2 = t2.leaf(make(1, 2, {1, 0}));
  const auto w2 = t2.leaf(make(2, 2, {1, 0, 0, 1}));
  const auto b2 = t2.leaf(make(1, 2, {0, 0}));
  const auto y2 = t2.affine(x2, w2, b2);
  CHECK(t2.value(y2).at(0, 0) == 1.0f);
  CHECK(t2.value(y2).at(0, 1) == 0.0f);

  // d(sum)/db is all ones regardless of x and w
  TapeF t3;
  const auto x3 = t3.leaf(make(3, 2, {1, 2, 3, 4, 5, 6}));
  const auto w3 = t3.leaf(make(2, 4, std::vector<float>(8, 0.5f)));
  const auto b3 = t3.leaf(make(1, 4, {0, 0, 0, 0}));
  t3.backward(t3.reduce_sum_all(t3.affine(x3, w3, b3)));
  for (std::int64_t c = 0; c < 4; ++c)
    CHECK(t3.grad(b3).at(0, c) == 3.0f);  // three rows contribute one each
}

TEST_CASE("layer norm") {
  TapeF tape;
  const auto gain1 = tape.leaf(make(1, 3, {1, 1, 1}));
  const auto off0 = tape.leaf(make(1, 3, {0, 0, 0}));

  // constant row has zero variance; epsilon keeps it finite and zero
  const auto c = tape.leaf(make(1, 3, {4, 4, 4}));
  const auto yc = tape.layer_norm(c, gain1, off0);
  for (std::int64_t j = 0; j < 3; ++j) CHECK(tape.value(yc).at(0, j) == 0.0f);

  // already standardized row passes through (up to the epsilon)
  TapeF t2;
  const auto g2 = t2.leaf(make(1, 2, {1, 1}));
  const auto o2 = t2.leaf(make(1, 2, {0, 0}));
  const auto x2 = t2.leaf(make(1, 2, {1, -1}));
  const auto y2 = t2.layer_norm(x2, g2, o2);
  CHECK(t2.value(y2).at(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(t2.value(y2).at(0, 1) == doctest::Approx(-1.0).epsilon(1e-4));

  // zero gain, offset 5 pins every entry at 5
  TapeF t3;
  const auto g3 = t3.leaf(make(1, 2, {0, 0}));
  const auto o3 = t3.leaf(make(1, 2, {5, 5}));
  const auto x3 = t3.leaf(make(2, 2, {7, -2, 0.5f, 3}));
  const auto y3 = t3.layer_norm(x3, g3, o3);
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j) CHECK(t3.value(y3).at(i, j) == 5.0f);
}

TEST_CASE("masked attention") {
  rng::Rng rng(5);

  SUBCASE("single key returns v") {
    TapeF tape;
    TensorF qv(1, 8), kv(1, 8), vv(1, 4);
    for (float& f : qv.data) f = static_cast<float>(rng.normal());
    for (float& f : kv.data) f = static_cast<float>(rng.normal());
    for (float& f : vv.data) f = static_cast<float>(rng.normal());
    const auto out = masked_attention(
        tape, tape.leaf(qv), tape.leaf(kv), tape.leaf(vv),
        AttentionMask::dense(), 2);
    for (std::int64_t j = 0; j < 4; ++j)
      CHECK(tape.value(out).at(0, j) ==
            doctest::Approx(vv.at(0, j)).epsilon(1e-6));
  }

  SUBCASE("causal query 0 copies v[0], and future v edits do not reach row i") {
    TensorF q(6, 8), k(6, 8), v(6, 4);
    for (float& f : q.data) f = static_cast<float>(rng.normal());
    for (float& f : k.data) f = static_cast<float>(rng.normal());
    for (float& f : v.data) f = static_cast<float>(rng.normal());

    const auto run = [&](const TensorF& vx) {
      TapeF tape;
      const auto out =
          masked_attention(tape, tape.leaf(q), tape.leaf(k), tape.leaf(vx),
                           AttentionMask::causal(), 2);
      return tape.value(out);
    };
    const TensorF base = run(v);
    for (std::int64_t j = 0; j < 4; ++j)
      CHECK(base.at(0, j) == doctest::Approx(v.at(0, j)).epsilon(1e-6));

    TensorF mutated = v;
    mutated.at(4, 1) += 10.0f;
    mutated.at(5, 3) -= 4.0f;
    const TensorF other = run(mutated);
    // rows 0..3 must be bit-identical, row 4 and 5 may move
    CHECK(std::memcmp(base.data.data(), other.data.data(),
                      sizeof(float) * 4 * 4) == 0);
  }

  SUBCASE("attention output stays inside the attended value range") {
    TapeF tape;
    TensorF q(5, 4), k(7, 4), v(7, 2);
    for (float& f : q.data) f = static_cast<float>(rng.normal());
    for (float& f : k.data) f = static_cast<float>(rng.normal());
    for (float& f : v.data) f = static_cast<float>(rng.normal());
    const auto out = masked_attention(tape, tape.leaf(q), tape.leaf(k),
                                      tape.leaf(v), AttentionMask::dense(), 2);
    for (std::int64_t c = 0; c < 2; ++c) {
      float lo = v.at(0, c), hi = v.at(0, c);
      for (std::int64_t i = 1; i < 7; ++i) {
        lo = std::min(lo, v.at(i, c));
        hi = std::max(hi, v.at(i, c));
      }
      for (std::int64_t i = 0; i < 5; ++i) {
        CHECK(tape.value(out).at(i, c) >= lo - 1e-6f);
        CHECK(tape.value(out).at(i, c) <= hi + 1e-6f);
      }
    }
  }

  SUBCASE("fully denied query row yields zeros") {
    TapeF tape;
    TensorF q(2, 4), k(3, 4), v(3, 2);
    for (float& f : q.data) f = 1.0f;
    for (float& f : k.data) f = 1.0f;
    for (float& f : v.data) f = 2.0f;
    std::vector<std::uint8_t> allow(2 * 3, 1);
    allow[0] = allow[1] = allow[2] = 0;  // row 0 sees nothing
    const auto out = masked_attention(tape, tape.leaf(q), tape.leaf(k),
                                      tape.leaf(v),
                                      AttentionMask::custom(2, 3, allow), 2);
    for (std::int64_t c = 0; c < 2; ++c) {
      CHECK(tape.value(out).at(0, c) == 0.0f);
      CHECK(tape.value(out).at(1, c) == 2.0f);
    }
  }
}

TEST_CASE("softmax rows sum to one") {
  rng::Rng rng(11);
  TapeF tape;
  TensorF scores(6, 6);
  for (float& f : scores.data) f = static_cast<float>(3.0 * rng.normal());
  const auto sm = tape.row_softmax(tape.leaf(scores), AttentionMask::causal());
  for (std::int64_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 6; ++j) s += tape.value(sm).at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits over 256 classes") {
    TapeF tape;
    const auto ce = tape.softmax_cross_entropy(
        tape.leaf(TensorF(3, 256)), {0, 100, 255});
    CHECK(tape.value(ce).at(0, 0) ==
          doctest::Approx(std::log(256.0)).epsilon(1e-6));
  }
  SUBCASE("saturated target logit") {
    TensorF logits(1, 8);
    logits.at(0, 3) = 30.0f;
    TapeF tape;
    const auto ce = tape.softmax_cross_entropy(tape.leaf(logits), {3});
    CHECK(tape.value(ce).at(0, 0) < 1e-6f);
  }
  SUBCASE("gradient is softmax minus one-hot over n") {
    TensorF logits(2, 4);
    logits.at(0, 0) = 1.0f;
    logits.at(1, 2) = -0.5f;
    TapeF tape;
    const auto in = tape.leaf(logits);
    tape.backward(tape.softmax_cross_entropy(in, {1, 2}));
    for (std::int64_t i = 0; i < 2; ++i) {
      double denom = 0.0;
      for (std::int64_t j = 0; j < 4; ++j)
        denom += std::exp(static_cast<double>(logits.at(i, j)));
      for (std::int64_t j = 0; j < 4; ++j) {
        const double p =
            std::exp(static_cast<double>(logits.at(i, j))) / denom;
        const double want =
            (p - ((i == 0 && j == 1) || (i == 1 && j == 2) ? 1.0 : 0.0)) / 2.0;
        CHECK(tape.grad(in).at(i, j) ==
              doctest::Approx(want).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("straight-through binarizer") {
  TapeF tape;
  const auto x = tape.leaf(make(1, 4, {0.3f, -0.2f, 0.0f, -5.0f}));
  const auto hard = tape.binarize_ste(x, 0.5f);
  CHECK(tape.value(hard).at(0, 0) == 0.5f);
  CHECK(tape.value(hard).at(0, 1) == -0.5f);
  CHECK(tape.value(hard).at(0, 2) == 0.5f);  // tie goes positive
  CHECK(tape.value(hard).at(0, 3) == -0.5f);

  const auto w = tape.leaf(make(1, 4, {1, 2, 3, 4}));
  tape.backward(tape.reduce_sum_all(tape.mul(hard, w)));
  for (std::int64_t j = 0; j < 4; ++j)
    CHECK(tape.grad(x).at(0, j) == static_cast<float>(j + 1));

  // relaxed forward is the identity
  TapeF t2;
  const auto x2 = t2.leaf(make(1, 2, {0.3f, -0.2f}));
  const auto soft = t2.binarize_ste(x2, 0.5f, true);
  CHECK(t2.value(soft).at(0, 0) == 0.3f);
  CHECK(t2.value(soft).at(0, 1) == -0.2f);
}

TEST_CASE("adam closed forms") {
  SUBCASE("one bias-corrected step moves by about lr") {
    ParameterStore store;
    store.add("x", init_constant(1, 1, 1.0f));
    store.param("x").gradient.at(0, 0) = 1.0f;
    AdamConfig cfg;
    cfg.base_lr = 8e-4;
    cfg.total_steps = 1;
    Adam opt(cfg);
    opt.step(store);
    const double want = 1.0 - 8e-4 * (1.0 / (1.0 + 1e-8));
    CHECK(store.param("x").value.at(0, 0) ==
          doctest::Approx(want).epsilon(1e-9));
    // gradients are consumed by the step
    CHECK(store.param("x").gradient.at(0, 0) == 0.0f);
  }

  SUBCASE("zero gradient is a fixed point") {
    ParameterStore store;
    store.add("x", init_constant(2, 2, 3.5f));
    AdamConfig cfg;
    cfg.total_steps = 10;
    Adam opt(cfg);
    for (int i = 0; i < 3; ++i) opt.step(store);
    for (const float v : store.param("x").value.data) CHECK(v == 3.5f);
  }

  SUBCASE("learning rate decays linearly to a tenth") {
    AdamConfig cfg;
    cfg.base_lr = 2e-3;
    cfg.total_steps = 2000;
    Adam opt(cfg);
    CHECK(opt.lr_at(1) == doctest::Approx(2e-3).epsilon(1e-12));
    CHECK(opt.lr_at(2000) == doctest::Approx(2e-4).epsilon(1e-9));
    CHECK(opt.lr_at(1000) ==
          doctest::Approx(2e-3 * (1.0 - 0.9 * 999.0 / 1999.0)).epsilon(1e-9));
  }
}

TEST_CASE("ema update") {
  ParameterStore store;
  store.add("x", init_constant(1, 1, 2.0f));
  // registration snapshots the value into the shadow
  CHECK(store.param("x").ema_value.at(0, 0) == 2.0f);

  store.param("x").ema_value.at(0, 0) = 0.0f;
  store.ema_update(0.5);
  CHECK(store.param("x").ema_value.at(0, 0) == 1.0f);

  store.ema_update(1.0);
  CHECK(store.param("x").ema_value.at(0, 0) == 1.0f);

  store.ema_update(0.0);
  CHECK(store.param("x").ema_value.at(0, 0) == 2.0f);

  // swapping twice restores both slots
  store.param("x").ema_value.at(0, 0) = 0.25f;
  store.swap_ema();
  CHECK(store.param("x").value.at(0, 0) == 0.25f);
  store.swap_ema();
  CHECK(store.param("x").value.at(0, 0) == 2.0f);
}

TEST_CASE("finite differences agree with the tape") {
  rng::Rng rng(77);

  SUBCASE("quadratic and constant losses") {
    ParameterStore store;
    store.add("x", init_constant(1, 1, 3.0f));
    const auto quad = [&](TapeD& tape, const AttachedParams<double>& att) {
      return tape.scale(tape.square(att.id(store, "x")), 0.5);
    };
    const GradCheckResult r =
        finite_diff_check(quad, store, 1e-3, rng, 32, 1e-3);
    CHECK(r.ok);
    CHECK(r.coords_checked >= 1);

    const auto constant = [&](TapeD& tape, const AttachedParams<double>& att) {
      return tape.scale(tape.mul(att.id(store, "x"),
                                 tape.constant(TensorD(1, 1))),
                        1.0);
    };
    CHECK(finite_diff_check(constant, store, 1e-3, rng, 32, 1e-3).ok);
  }

  SUBCASE("small transformer with a cross stream") {
    TransformerConfig cfg;
    cfg.depth = 1;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.mlp_mult = 2;
    cfg.cross_streams = {"mem"};
    ParameterStore store;
    rng::Rng init(3);
    register_transformer(store, "tf", cfg, init);

    TensorD x(5, 8), mem(3, 8);
    rng::Rng data(4);
    for (double& v : x.data) v = 0.5 * data.normal();
    for (double& v : mem.data) v = 0.5 * data.normal();

    const auto build = [&](TapeD& tape, const AttachedParams<double>& att) {
      const auto xid = tape.constant(x);
      CrossStream<double> cross;
      cross.source = tape.constant(mem);
      cross.mask = AttentionMask::dense();
      const auto h = apply_transformer<double>(
          tape, store, att, "tf", cfg, xid, AttentionMask::causal(),
          {{"mem", cross}});
      return tape.reduce_mean_all(tape.square(h));
    };
    const GradCheckResult r =
        finite_diff_check(build, store, 1e-4, rng, 64, 1e-3);
    CHECK(r.ok);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("positional rows have unit norm and distinct directions") {
  const TensorF pe = sinusoidal_posenc(50, 64);
  REQUIRE(pe.rows() == 50);
  REQUIRE(pe.cols() == 64);
  for (std::int64_t i = 0; i < 50; ++i) {
    double n = 0.0;
    for (std::int64_t j = 0; j < 64; ++j)
      n += static_cast<double>(pe.at(i, j)) * pe.at(i, j);
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // neighbouring positions must be distinguishable
  double dot = 0.0;
  for (std::int64_t j = 0; j < 64; ++j)
    dot += static_cast<double>(pe.at(0, j)) * pe.at(1, j);
  CHECK(dot < 0.999);
}

TEST_CASE("transformer prefix consistency under the causal mask") {
  TransformerConfig cfg;
  cfg.depth = 2;
  cfg.width = 16;
  cfg.heads = 4;
  ParameterStore store;
  rng::Rng init(9);
  register_transformer(store, "tf", cfg, init);

  rng::Rng data(10);
  TensorF x(12, 16);
  for (float& v : x.data) v = static_cast<float>(data.normal());

  const auto run = [&](const TensorF& input) {
    TapeF tape;
    const auto att = attach_params<float>(tape, store);
    const auto h = apply_transformer<float>(tape, store, att, "tf", cfg,
                                            tape.leaf(input),
                                            AttentionMask::causal());
    return tape.value(h);
  };

  const TensorF full = run(x);
  TensorF head(7, 16);
  for (std::int64_t i = 0; i < 7; ++i)
    for (std::int64_t j = 0; j < 16; ++j) head.at(i, j) = x.at(i, j);
  const TensorF part = run(head);
  CHECK(std::memcmp(full.data.data(), part.data.data(),
                    sizeof(float) * 7 * 16) == 0);
}
