#include <gtest/gtest.h>

#include "fairbf/baselines.hpp"
#include "fairbf/metrics.hpp"
#include "oracles.hpp"

using namespace fairbf;
using fairbf::testing::random_sample;

namespace {

double abs_inner(const CVec& a, const CVec& b) { return std::abs(hdot(a, b)); }

}  // namespace

TEST(Mrt, HandInstanceAndUnitNorm) {
  ChannelSample s;
  s.h = {CVec{3.0, {0.0, 4.0}}};
  s.sigma2 = {1.0};
  const auto bf = mrt(s);
  EXPECT_NEAR(std::abs(bf.f_tilde[0][0] - cplx(0.6, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(bf.f_tilde[0][1] - cplx(0.0, 0.8)), 0.0, 1e-15);
}

TEST(Mrt, SingleUserBeatsRandomDirections) {
  std::mt19937_64 rng(31);
  const auto s = random_sample(1, 6, rng);
  const double best = evaluate_rates(s, mrt(s)).sinr[0];
  for (int t = 0; t < 500; ++t) {
    const BeamformerSet bf{{normalized(fairbf::testing::random_cvec(6, rng))}, 1.0};
    EXPECT_LE(evaluate_rates(s, bf).sinr[0], best * (1.0 + 1e-12));
  }
}

TEST(Baselines, AllUnitNorm) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_sample(4, 6, rng);
    for (const auto& bf : {mrt(s), zf(s), slnr(s), wslnr(s, 0.0), wslnr(s, 1.0), wslnr(s, 5.0)})
      for (const auto& f : bf.f_tilde) EXPECT_NEAR(f.norm(), 1.0, 1e-6);
  }
}

TEST(Zf, NullingResidual) {
  std::mt19937_64 rng(33);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto s = random_sample(1 + t % 6, 6, rng);
    const auto bf = zf(s);
    for (std::size_t u = 0; u < s.n_u(); ++u)
      for (std::size_t l = 0; l < s.n_u(); ++l)
        if (l != u)
          worst = std::max(worst, std::norm(hdot(s.h[u], bf.f_tilde[l])) / s.h[u].squared_norm());
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Zf, OrthogonalRowsMatchMrt) {
  ChannelSample s;
  s.h = {CVec{1.0, {0.0, 1.0}, 0.0}, CVec{0.0, 0.0, 2.0}};
  s.sigma2 = {1.0, 1.0};
  const auto a = zf(s), b = mrt(s);
  for (std::size_t u = 0; u < 2; ++u) EXPECT_NEAR(abs_inner(a.f_tilde[u], b.f_tilde[u]), 1.0, 1e-12);
}

TEST(Zf, TwoByTwoHandInversion) {
  ChannelSample s;
  const double r = 1.0 / std::sqrt(2.0);
  s.h = {CVec{1.0, 0.0}, CVec{r, r}};
  s.sigma2 = {1.0, 1.0};
  const auto bf = zf(s);
  EXPECT_NEAR(abs_inner(bf.f_tilde[0], CVec{r, -r}), 1.0, 1e-12);
  EXPECT_NEAR(abs_inner(bf.f_tilde[1], CVec{0.0, 1.0}), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(hdot(s.h[0], bf.f_tilde[1])), 0.0, 1e-12);
}

TEST(Zf, RankDeficiency) {
  std::mt19937_64 rng(34);
  EXPECT_THROW(zf(random_sample(5, 4, rng)), RankDeficientError);
  auto s = random_sample(2, 4, rng);
  s.h[1] = s.h[0];
  s.h[1] *= cplx(0.0, 2.0);
  try {
    zf(s);
    FAIL();
  } catch (const RankDeficientError& e) {
    EXPECT_NE(std::string(e.what()).find("rank-deficient"), std::string::npos);
  }
}

TEST(WslnrWeights, Cases) {
  ChannelSample s;
  s.h = {CVec{1.0, 0.0}, CVec{2.0, 0.0}};  // gains 1 and 4
  s.sigma2 = {1.0, 1.0};
  const auto w0 = wslnr_weights(s, 0.0);
  EXPECT_EQ(w0.omega[0], 0.5);
  EXPECT_EQ(w0.omega[1], 0.5);
  const auto w1 = wslnr_weights(s, 1.0);
  EXPECT_NEAR(w1.omega[0], 0.8, 1e-15);
  EXPECT_NEAR(w1.omega[1], 0.2, 1e-15);
  const auto w5 = wslnr_weights(s, 5.0);
  EXPECT_NEAR(w5.omega[0], 1024.0 / 1025.0, 1e-15);
  EXPECT_NEAR(w5.omega[1], 1.0 / 1025.0, 1e-15);
}

TEST(WslnrWeights, SumToOne) {
  std::mt19937_64 rng(35);
  for (double alpha : {0.0, 0.3, 1.0, 2.0, 5.0, 20.0}) {
    const auto w = wslnr_weights(random_sample(7, 3, rng), alpha);
    double s = 0.0;
    for (double o : w.omega) s += o;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(wslnr_weights(random_sample(2, 2, rng), -1.0), ConfigError);
}

TEST(Wslnr, MatchesAdjugateOracle) {
  std::mt19937_64 rng(36);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto s = random_sample(2 + t % 2, 3, rng, 0.5 + 0.01 * t);
    const double alpha = 0.5 * (t % 5);
    const auto w = wslnr_weights(s, alpha);
    const auto bf = wslnr(s, alpha);
    for (std::size_t u = 0; u < s.n_u(); ++u)
      worst = std::max(worst, std::abs(1.0 - abs_inner(fairbf::testing::oracle_direction(s, w.omega, u), bf.f_tilde[u])));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(Wslnr, SingleUserAndOrthogonalReduceToMrt) {
  std::mt19937_64 rng(37);
  const auto one = random_sample(1, 4, rng);
  EXPECT_NEAR(abs_inner(wslnr(one, 2.0).f_tilde[0], mrt(one).f_tilde[0]), 1.0, 1e-12);
  EXPECT_NEAR(abs_inner(slnr(one).f_tilde[0], mrt(one).f_tilde[0]), 1.0, 1e-12);
  ChannelSample s;
  s.h = {CVec{1.0, 0.0, 0.0}, CVec{0.0, 3.0, 0.0}, CVec{0.0, 0.0, {0.0, 0.5}}};
  s.sigma2 = {1.0, 1.0, 1.0};
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_NEAR(abs_inner(wslnr(s, 1.0).f_tilde[u], mrt(s).f_tilde[u]), 1.0, 1e-12);
    EXPECT_NEAR(abs_inner(slnr(s).f_tilde[u], mrt(s).f_tilde[u]), 1.0, 1e-12);
  }
}

TEST(Slnr, DiffersFromUniformWslnr) {
  std::mt19937_64 rng(38);
  const auto s = random_sample(3, 4, rng);
  const auto a = slnr(s), b = wslnr(s, 0.0);
  EXPECT_LT(abs_inner(a.f_tilde[0], b.f_tilde[0]), 1.0 - 1e-6);
}

TEST(Baselines, JointScalingInvariance) {
  std::mt19937_64 rng(39);
  const auto s = random_sample(4, 5, rng, 0.8);
  auto t = s;
  const double c = 3.3;
  for (auto& h : t.h) h *= c;
  for (auto& v : t.sigma2) v *= c * c;
  const std::vector<std::pair<BeamformerSet, BeamformerSet>> pairs{
      {wslnr(s, 1.5), wslnr(t, 1.5)}, {slnr(s), slnr(t)}, {zf(s), zf(t)}};
  for (const auto& [a, b] : pairs)
    for (std::size_t u = 0; u < 4; ++u) EXPECT_NEAR(abs_inner(a.f_tilde[u], b.f_tilde[u]), 1.0, 1e-8);
}

TEST(Baselines, UniformWslnrWeightsAreExact) {
  std::mt19937_64 rng(40);
  const auto s = random_sample(6, 4, rng);
  for (double o : wslnr_weights(s, 0.0).omega) EXPECT_EQ(o, 1.0 / 6.0);
}
