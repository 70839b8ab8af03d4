#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fairbf/autonet/adam.hpp"
#include "fairbf/autonet/checkpoint.hpp"
#include "fairbf/autonet/model.hpp"
#include "fairbf/autonet/ops.hpp"
#include "oracles.hpp"

using namespace fairbf;
using namespace fairbf::autonet;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, bool rg = false, double scale = 1.0) {
  Tensor<T> t(std::move(shape), rg);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

ModelConfig tiny_config(std::uint64_t seed = 1) {
  // n_t = 2 -> n_f = 5; d_model 4 with 2 heads.
  return {5, 4, 2, 2, 2, seed};
}

// Straight-line attention sub-layer for one group of rows, one head:
// x + Proj(softmax(Q K^T / sqrt(d)) V) with Q, K, V from LN(x).
std::vector<std::vector<double>> dense_attention(const std::vector<std::vector<double>>& x,
                                                 const EncoderBlock<double>& b) {
  const std::size_t n = x.size(), d = x[0].size();
  auto affine = [&](const std::vector<double>& in, const Affine<double>& a) {
    std::vector<double> out(d);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = a.b.data()[j];
      for (std::size_t i = 0; i < d; ++i) out[j] += in[i] * a.w.data()[i * d + j];
    }
    return out;
  };
  std::vector<std::vector<double>> q(n), k(n), v(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0, var = 0.0;
    for (double e : x[r]) mu += e / d;
    for (double e : x[r]) var += (e - mu) * (e - mu) / d;
    std::vector<double> a(d);
    for (std::size_t j = 0; j < d; ++j)
      a[j] = (x[r][j] - mu) / std::sqrt(var + 1e-5) * b.ln_attn.gamma.data()[j] +
             b.ln_attn.beta.data()[j];
    q[r] = affine(a, b.query);
    k[r] = affine(a, b.key);
    v[r] = affine(a, b.value);
  }
  std::vector<std::vector<double>> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> s(n);
    for (std::size_t c = 0; c < n; ++c) {
      s[c] = 0.0;
      for (std::size_t j = 0; j < d; ++j) s[c] += q[r][j] * k[c][j];
      s[c] /= std::sqrt(static_cast<double>(d));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    std::vector<double> ctx(d, 0.0);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t j = 0; j < d; ++j) ctx[j] += s[c] / z * v[c][j];
    out[r] = affine(ctx, b.proj);
    for (std::size_t j = 0; j < d; ++j) out[r][j] += x[r][j];
  }
  return out;
}

}  // namespace

TEST(Backward, LinearAndQuadratic) {
  std::mt19937_64 rng(1);
  auto w = random_tensor<double>({5}, rng, true);
  const auto x = random_tensor<double>({5}, rng);
  backward(sum(mul(w, x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], x.data()[i]);

  auto v = random_tensor<double>({3, 2}, rng, true);
  backward(sum(square(v)));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(v.grad()[i], 2.0 * v.data()[i]);
}

TEST(Backward, NonScalarThrows) {
  std::mt19937_64 rng(2);
  auto w = random_tensor<float>({3}, rng, true);
  EXPECT_THROW(backward(square(w)), DimensionError);
}

TEST(Backward, ConsumesGraph) {
  std::mt19937_64 rng(3);
  auto w = random_tensor<double>({2}, rng, true);
  const auto loss = sum(square(w));
  backward(loss);
  EXPECT_TRUE(loss.node()->parents.empty());
}

TEST(CountParams, Examples) {
  EXPECT_EQ(affine_params(4, 4), 20u);     // head only: d_model 4, n_t 2
  EXPECT_EQ(affine_params(33, 132), 4488u);  // embedding of the default config
  const ModelConfig def;
  EXPECT_EQ(count_params(def), 715208u);
  EXPECT_EQ(count_params(ModelConfig::for_antennas(8, 4, 4, 4)), 97256u);
}

TEST(CountParams, MatchesInstantiatedModel) {
  for (const auto& c : {tiny_config(), ModelConfig::for_antennas(3, 4, 3, 2),
                        ModelConfig::for_antennas(8, 4, 4, 4)}) {
    const Model<float> m(c);
    EXPECT_EQ(m.parameter_count(), count_params(c));
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig c = tiny_config();
  c.n_head = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(Model<float>{c}, ConfigError);
}

TEST(Model, InitIsSeedDeterministic) {
  const Model<float> a(tiny_config(5)), b(tiny_config(5)), c(tiny_config(6));
  EXPECT_EQ(a.snapshot(), b.snapshot());
  EXPECT_NE(a.snapshot(), c.snapshot());
}

TEST(Forward, OutputShape) {
  std::mt19937_64 rng(4);
  const Model<float> m(ModelConfig::for_antennas(16, 1, 1, 1));
  const auto y = m.forward(random_tensor<float>({2, 12, 33}, rng));
  EXPECT_EQ(y.shape(), (Shape{2, 12, 32}));
  EXPECT_THROW(m.forward(random_tensor<float>({2, 12, 30}, rng)), DimensionError);
}

TEST(Forward, ZeroHeadGivesBias) {
  std::mt19937_64 rng(5);
  Model<float> m(tiny_config());
  std::fill(m.head().w.data().begin(), m.head().w.data().end(), 0.0f);
  const auto y = m.forward(random_tensor<float>({3, 4, 5}, rng));
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.data()[r * 4 + j], m.head().b.data()[j]);
}

TEST(Forward, Deterministic) {
  std::mt19937_64 rng(6);
  const Model<float> m(tiny_config());
  const auto x = random_tensor<float>({2, 3, 5}, rng);
  const auto a = m.forward(x), b = m.forward(x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Attention, MatchesDenseOracle) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    ModelConfig c{5, 4, 1, 1, 2, static_cast<std::uint64_t>(t)};
    Model<double> m(c);
    auto& blk = m.block(0);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto* p : {&blk.ln_attn.gamma, &blk.ln_attn.beta})
      for (auto& v : p->data()) v += n(rng);
    const auto x = random_tensor<double>({1, 3, 4}, rng);
    const auto y = m.attention(x, blk, 3);
    std::vector<std::vector<double>> rows(3, std::vector<double>(4));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) rows[r][j] = x.data()[r * 4 + j];
    const auto ref = dense_attention(rows, blk);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.data()[r * 4 + j], ref[r][j], 1e-6);
  }
}

TEST(Attention, SingleTokenIsValueProjection) {
  std::mt19937_64 rng(8);
  Model<double> m({5, 4, 1, 2, 2, 3});
  const auto& blk = m.block(0);
  const auto x = random_tensor<double>({1, 1, 4}, rng);
  const auto y = m.attention(x, blk, 1);
  const auto a = layer_norm(x, blk.ln_attn.gamma, blk.ln_attn.beta);
  const auto expect = add(x, linear(linear(a, blk.value.w, blk.value.b), blk.proj.w, blk.proj.b));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.data()[j], expect.data()[j], 1e-12);
}

TEST(Attention, IdenticalRowsGiveIdenticalOutputs) {
  std::mt19937_64 rng(9);
  Model<float> m(tiny_config());
  auto row = random_tensor<float>({4}, rng);
  Tensor<float> x({1, 5, 4});
  for (std::size_t r = 0; r < 5; ++r)
    std::copy(row.data().begin(), row.data().end(), x.data().begin() + r * 4);
  const auto y = m.attention(x, m.block(0), 5);
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.data()[r * 4 + j], y.data()[j]);
}

TEST(Forward, PermutationEquivariance) {
  EXPECT_LE(fairbf::testing::equivariance_error(10, 50), 1e-5f);
}

TEST(NormalizeColumns, Examples) {
  const std::vector<float> e1{1, 0, 0, 0, 0, 0};
  const auto a = normalize_columns<float>(e1, 1, 3, 2.0);
  EXPECT_EQ(a.f_tilde[0][0], cplx(1.0, 0.0));
  EXPECT_EQ(a.power_per_user, 2.0);
  const std::vector<float> r{3, 0, 0, 4, 0, 0};
  const auto b = normalize_columns<float>(r, 1, 3, 1.0);
  EXPECT_NEAR(std::abs(b.f_tilde[0][0] - cplx(0.6, 0.8)), 0.0, 1e-7);
  EXPECT_EQ(b.f_tilde[0][1], cplx(0.0, 0.0));
}

TEST(NormalizeColumns, DeadRowFallback) {
  const std::vector<float> raw{0, 0, 0, 0, 1, 2, 3, 4};
  std::size_t dead = 0;
  const auto bf = normalize_columns<float>(raw, 2, 2, 1.0, &dead);
  EXPECT_EQ(dead, 1u);
  EXPECT_EQ(bf.f_tilde[0][0], cplx(1.0, 0.0));
  EXPECT_NEAR(bf.f_tilde[1].norm(), 1.0, 1e-6);

  Tensor<float> t({1, 2, 4}, raw, true);
  std::size_t dead_graph = 0;
  const auto n = row_normalize(t, &dead_graph);
  EXPECT_EQ(dead_graph, 1u);
  backward(sum(n));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(t.grad()[j], 0.0f);
}

TEST(NormalizeColumns, UnitNormsAndZeroNormGradient) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    auto raw = random_tensor<float>({1, 3, 6}, rng, true);
    const auto n = row_normalize(raw);
    for (std::size_t u = 0; u < 3; ++u) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += n.data()[u * 6 + j] * n.data()[u * 6 + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    backward(sum(square(n)));
    // Finite differences of the constant |f|^2 = U.
    const float h = 1e-3f;
    for (std::size_t i = 0; i < raw.numel(); ++i) {
      auto eval = [&](float delta) {
        Tensor<float> p(raw.shape(), std::vector<float>(raw.data().begin(), raw.data().end()));
        p.data()[i] += delta;
        const auto q = row_normalize(p);
        double s = 0.0;
        for (float v : q.data()) s += static_cast<double>(v) * v;
        return s;
      };
      EXPECT_NEAR((eval(h) - eval(-h)) / (2 * h), 0.0, 1e-2);
      EXPECT_NEAR(raw.grad()[i], 0.0f, 1e-5f);
    }
  }
}

TEST(Ops, StandardizeColumns) {
  Tensor<double> x({2, 2}, {1.0, 10.0, 3.0, 30.0}, true);
  const std::vector<double> shift{2.0, 20.0}, gain{0.5, 0.1};
  const auto y = standardize_columns(x, std::span<const double>(shift), std::span<const double>(gain));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{-0.5, -1.0, 0.5, 1.0}));
  backward(sum(y));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{0.5, 0.1, 0.5, 0.1}));
}

TEST(Adam, FirstStepMagnitude) {
  Tensor<double> p({1}, {0.0}, true);
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  p.node()->ensure_grad()[0] = 1.0;
  adam_step(params, st, {0.1, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(p.data()[0], -0.1, 1e-6);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  std::mt19937_64 rng(12);
  auto p = random_tensor<double>({4}, rng, true);
  const std::vector<double> before(p.data().begin(), p.data().end());
  std::vector<Tensor<double>> params{p};
  AdamState<double> st;
  for (int i = 0; i < 10; ++i) {
    p.node()->ensure_grad();
    p.zero_grad();
    adam_step(params, st, {});
  }
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), before);
}

TEST(Adam, DeterministicTrajectories) {
  auto run = [] {
    std::mt19937_64 rng(13);
    Model<float> m(tiny_config());
    auto params = m.parameters();
    AdamState<float> st;
    for (int i = 0; i < 5; ++i) {
      const auto x = random_tensor<float>({2, 3, 5}, rng);
      m.zero_grad();
      backward(sum(square(m.forward(x))));
      adam_step(params, st, {});
    }
    return m.snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(Model, CloneAndCast) {
  Model<float> m(tiny_config());
  m.set_input_normalization({1, 2, 3, 4, 5}, {0.5f, 0.5f, 0.5f, 0.5f, 0.5f});
  const auto c = m.clone();
  EXPECT_EQ(c.snapshot(), m.snapshot());
  EXPECT_EQ(c.input_shift(), m.input_shift());
  const auto d = m.cast<double>();
  std::mt19937_64 rng(14);
  const auto x = random_tensor<float>({1, 3, 5}, rng);
  Tensor<double> xd(x.shape());
  std::copy(x.data().begin(), x.data().end(), xd.data().begin());
  const auto ya = m.forward(x);
  const auto yb = d.forward(xd);
  for (std::size_t i = 0; i < ya.numel(); ++i) EXPECT_NEAR(ya.data()[i], yb.data()[i], 1e-5);
}

TEST(Checkpoint, RoundTripBitExact) {
  Model<float> m(ModelConfig::for_antennas(3, 4, 2, 2, 9));
  m.set_input_normalization(std::vector<float>(7, 0.25f), std::vector<float>(7, 3.0f));
  const auto bytes = encode_checkpoint(m);
  const auto back = decode_checkpoint<float>(bytes);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.snapshot(), m.snapshot());
  EXPECT_EQ(back.input_gain(), m.input_gain());
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptHeaders) {
  const Model<float> m(tiny_config());
  const auto good = encode_checkpoint(m);
  auto bad = good;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  bad = good;
  bad[4] = 2;
  try {
    decode_checkpoint<float>(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }
  bad = good;
  bad[40] ^= 1;  // parameter count
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 4);
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  bad = good;
  bad[12] = 3;  // d_model 3 not divisible by 2 heads
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
}
