#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "fairbf/trainer.hpp"

using namespace fairbf;
namespace fs = std::filesystem;

namespace {

ScenarioConfig tiny_scenario(std::uint64_t seed = 3) {
  ScenarioConfig c;
  c.n_t = 3;
  c.n_u = 2;
  c.seed = seed;
  return c;
}

TrainConfig tiny_train(double j_lb = 0.8) {
  TrainConfig c;
  c.j_lb = j_lb;
  c.batch_size = 16;
  c.max_epochs = 3;
  c.model = ModelConfig::for_antennas(3, 2, 1, 2, 5);
  return c;
}

struct Splits {
  Dataset train, val;
};

Splits tiny_splits() {
  const auto ds = generate_dataset(tiny_scenario(), 100);
  auto s = split_dataset(ds, {0.6, 0.2, 0.2}, 1);
  return {std::move(s.train), std::move(s.val)};
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c = tiny_train();
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_train(1.0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_train(0.0);
  EXPECT_THROW(c.validate(), ConfigError);
  c.freeze_dual = true;
  EXPECT_NO_THROW(c.validate());
}

TEST(Train, DeterministicAcrossRuns) {
  const auto s = tiny_splits();
  const auto a = train(tiny_train(), s.train, s.val);
  const auto b = train(tiny_train(), s.train, s.val);
  EXPECT_EQ(a.model.snapshot(), b.model.snapshot());
  EXPECT_EQ(a.dual.lambda, b.dual.lambda);
  ASSERT_EQ(a.history.batches.size(), b.history.batches.size());
  for (std::size_t i = 0; i < a.history.batches.size(); ++i)
    EXPECT_EQ(a.history.batches[i].loss, b.history.batches[i].loss);
}

TEST(Train, BatchesPartitionEveryEpoch) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(), s.train, s.val);
  const std::size_t n = s.train.size();
  for (std::size_t e = 1; e <= r.history.epochs.size(); ++e) {
    std::multiset<std::size_t> seen;
    for (const auto& b : r.history.batches)
      if (b.epoch == e) seen.insert(b.indices.begin(), b.indices.end());
    EXPECT_EQ(seen.size(), n);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), n);
  }
  EXPECT_EQ(r.history.batches.size(), r.history.epochs.size() * ((n + 15) / 16));
}

TEST(Train, DualFollowsViolationSign) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(0.95), s.train, s.val);
  double prev = 1.0;
  for (const auto& b : r.history.batches) {
    const double v = b.j_bar - 0.95;
    if (v < -0.003) {
      EXPECT_GT(b.lambda, prev);
    } else if (v > 0.003) {
      EXPECT_LE(b.lambda, prev);
    } else {
      EXPECT_EQ(b.lambda, prev);
    }
    EXPECT_GE(b.lambda, 0.0);
    prev = b.lambda;
  }
}

TEST(Train, FrozenDualAblation) {
  const auto s = tiny_splits();
  TrainConfig c = tiny_train(0.0);
  c.freeze_dual = true;
  c.lambda0 = 0.0;
  const auto r = train(c, s.train, s.val);
  for (const auto& b : r.history.batches) {
    EXPECT_EQ(b.lambda, 0.0);
    EXPECT_NEAR(b.loss, -b.s_bar, 1e-6);
  }
  EXPECT_TRUE(r.history.selected_epoch.has_value());
}

TEST(Train, DimensionMismatch) {
  const auto s = tiny_splits();
  TrainConfig c = tiny_train();
  c.model = ModelConfig::for_antennas(4, 2, 1, 2);
  EXPECT_THROW(train(c, s.train, s.val), DimensionError);
  EXPECT_THROW(evaluate(Model<float>(c.model), s.val), DimensionError);
}

TEST(Train, ValidationSummaryMatchesEvaluate) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(), s.train, s.val);
  const auto e = evaluate(r.model, s.val);
  EXPECT_EQ(e.mean_sum_rate, r.validation.mean_sum_rate);
  EXPECT_EQ(e.mean_jain, r.validation.mean_jain);
}

TEST(Train, InputStatisticsFromTrainingSet) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(), s.train, s.val);
  const auto [shift, gain] = feature_statistics(s.train);
  EXPECT_EQ(r.model.input_shift(), shift);
  EXPECT_EQ(r.model.input_gain(), gain);
}

TEST(Checkpoint, RoundTripPreservesEvaluation) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(), s.train, s.val);
  const auto dir = fs::temp_directory_path() / "fairbf_test_trainer";
  fs::create_directories(dir);
  const auto path = dir / "m.fbck";
  save_checkpoint(path, r.model, r.dual, {{"note", "x"}});
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.model.snapshot(), r.model.snapshot());
  EXPECT_EQ(back.dual.lambda, r.dual.lambda);
  EXPECT_EQ(back.provenance.at("note"), "x");
  const auto a = evaluate(r.model, s.val), b = evaluate(back.model, s.val);
  EXPECT_EQ(a.stream_sum_rates, b.stream_sum_rates);
}

TEST(Policies, WslnrAdapterMatchesDirectCall) {
  const auto ds = generate_dataset(tiny_scenario(), 10);
  const double ppu = ds.config.power_per_user();
  const auto e = evaluate_policy(wslnr_policy(1.5, ppu), ds, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto rep = evaluate_rates(ds.samples[i], wslnr(ds.samples[i], 1.5, ppu));
    EXPECT_EQ(e.stream_sum_rates[i], rep.sum_rate);
    EXPECT_EQ(e.stream_jains[i], rep.jain);
  }
}

TEST(Policies, JainConsistentWithUserRates) {
  const auto ds = generate_dataset(tiny_scenario(), 20);
  const auto e = evaluate_policy(
      baseline_policy([&](const ChannelSample& s) { return mrt(s, ds.config.power_per_user()); }),
      ds);
  ASSERT_EQ(e.user_rates.size(), 20u * 2u);
  for (std::size_t k = 0; k < 20; ++k) {
    const std::vector<double> row(e.user_rates.begin() + 2 * k, e.user_rates.begin() + 2 * k + 2);
    EXPECT_NEAR(jain_index(row), e.stream_jains[k], 1e-12);
    EXPECT_NEAR(row[0] + row[1], e.stream_sum_rates[k], 1e-12);
  }
}

TEST(History, CsvHeaderAndRows) {
  const auto s = tiny_splits();
  const auto r = train(tiny_train(), s.train, s.val);
  const auto csv = history_csv(r.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,loss,s_bar,j_bar,lambda,grad_ema");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')),
            r.history.batches.size() + 1);
}
