#pragma once

// Adaptive dual-multiplier training loop, model/baseline evaluation and
// checkpoint persistence.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairbf/autonet/adam.hpp"
#include "fairbf/autonet/checkpoint.hpp"
#include "fairbf/autonet/model.hpp"
#include "fairbf/baselines.hpp"
#include "fairbf/channel.hpp"
#include "fairbf/fairness_loss.hpp"
#include "fairbf/metrics.hpp"

namespace fairbf {

using autonet::Model;
using autonet::ModelConfig;

struct TrainConfig {
  double j_lb = 0.8;
  std::size_t batch_size = 256;
  double lr = 0.002;
  double eps = 0.003;
  double eta = 0.01;
  std::size_t max_epochs = 100;
  double grad_tol = 1e-3;   // threshold on the gradient-norm EMA
  double ema_decay = 0.99;
  double lambda0 = 1.0;
  bool freeze_dual = false;  // keep lambda at lambda0 (ablation)
  std::uint64_t seed = 1;
  ModelConfig model;

  void validate() const {
    if (!(j_lb >= 0.0 && j_lb < 1.0))
      throw ConfigError(detail::concat("train: j_lb must lie in [0, 1), got ", j_lb));
    if (j_lb == 0.0 && !freeze_dual)
      throw ConfigError("train: j_lb = 0 is only meaningful with a frozen dual");
    if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (!(eps > 0.0) || !(eta > 0.0)) throw ConfigError("train: eps and eta must be > 0");
    if (!(lambda0 >= 0.0)) throw ConfigError("train: lambda0 must be >= 0");
    model.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"j_lb", c.j_lb},           {"batch_size", c.batch_size},
                     {"lr", c.lr},               {"eps", c.eps},
                     {"eta", c.eta},             {"max_epochs", c.max_epochs},
                     {"grad_tol", c.grad_tol},   {"ema_decay", c.ema_decay},
                     {"lambda0", c.lambda0},     {"freeze_dual", c.freeze_dual},
                     {"seed", c.seed},           {"model", c.model}};
}

struct BatchRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double s_bar = 0.0;
  double j_bar = 0.0;
  double lambda = 0.0;  // after this batch's dual update
  double grad_ema = 0.0;
  std::vector<std::size_t> indices;  // training-set rows in this batch
};

struct EpochRecord {
  std::size_t epoch = 0;
  double val_mean_sum_rate = 0.0;
  double val_mean_jain = 0.0;
  double lambda = 0.0;
  bool feasible = false;
};

struct TrainHistory {
  std::vector<BatchRecord> batches;
  std::vector<EpochRecord> epochs;
  std::size_t dead_rows = 0;
  std::size_t degenerate_batches = 0;
  std::optional<std::size_t> selected_epoch;  // best feasible epoch, if any
  bool converged = false;
};

struct EvalSummary {
  std::size_t n_u = 0;
  double mean_sum_rate = 0.0;
  double mean_jain = 0.0;
  std::vector<double> user_rates;        // [samples * n_u], row = sample
  std::vector<double> stream_sum_rates;  // per sample
  std::vector<double> stream_jains;      // per sample
  std::size_t dead_rows = 0;
};

// Maps a run of samples to one beamformer set per sample.
using BeamformingPolicy =
    std::function<std::vector<BeamformerSet>(std::span<const ChannelSample>)>;

inline EvalSummary evaluate_policy(const BeamformingPolicy& policy, const Dataset& ds,
                                   std::size_t chunk = 512) {
  if (ds.samples.empty()) throw DimensionError("evaluate: empty dataset");
  EvalSummary out;
  out.n_u = ds.config.n_u;
  std::span<const ChannelSample> all(ds.samples);
  for (std::size_t lo = 0; lo < all.size(); lo += chunk) {
    const auto part = all.subspan(lo, std::min(chunk, all.size() - lo));
    const auto bfs = policy(part);
    if (bfs.size() != part.size()) throw DimensionError("evaluate: policy output size mismatch");
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto rep = evaluate_rates(part[i], bfs[i]);
      out.user_rates.insert(out.user_rates.end(), rep.rate.begin(), rep.rate.end());
      out.stream_sum_rates.push_back(rep.sum_rate);
      out.stream_jains.push_back(rep.jain);
    }
  }
  const double n = static_cast<double>(out.stream_sum_rates.size());
  out.mean_sum_rate =
      std::accumulate(out.stream_sum_rates.begin(), out.stream_sum_rates.end(), 0.0) / n;
  out.mean_jain = std::accumulate(out.stream_jains.begin(), out.stream_jains.end(), 0.0) / n;
  return out;
}

// Per-sample closed-form beamformer as a policy.
inline BeamformingPolicy baseline_policy(std::function<BeamformerSet(const ChannelSample&)> fn) {
  return [fn = std::move(fn)](std::span<const ChannelSample> part) {
    std::vector<BeamformerSet> out;
    out.reserve(part.size());
    for (const auto& s : part) out.push_back(fn(s));
    return out;
  };
}

inline BeamformingPolicy wslnr_policy(double alpha, double power_per_user) {
  return baseline_policy(
      [=](const ChannelSample& s) { return wslnr(s, alpha, power_per_user); });
}

// Input features of a run of samples as a [N, N_u, N_f] tensor.
template <typename T>
autonet::Tensor<T> feature_tensor(std::span<const ChannelSample* const> samples) {
  if (samples.empty()) throw DimensionError("feature_tensor: no samples");
  const std::size_t nu = samples.front()->n_u();
  const std::size_t nf = 2 * samples.front()->n_t() + 1;
  autonet::Tensor<T> x({samples.size(), nu, nf});
  auto data = x.data();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto f = encode_features(*samples[k]);
    if (f.n_u != nu || f.n_f != nf) throw DimensionError("feature_tensor: mixed dimensions");
    for (std::size_t i = 0; i < f.rows.size(); ++i)
      data[k * nu * nf + i] = static_cast<T>(f.rows[i]);
  }
  return x;
}

template <typename T>
BeamformingPolicy model_policy(const Model<T>& model, double power_per_user,
                               std::size_t* dead_rows = nullptr) {
  return [&model, power_per_user, dead_rows](std::span<const ChannelSample> part) {
    std::vector<const ChannelSample*> ptrs;
    ptrs.reserve(part.size());
    for (const auto& s : part) ptrs.push_back(&s);
    const auto raw = model.forward(feature_tensor<T>(ptrs));
    const std::size_t nu = raw.dim(1), width = raw.dim(2);
    std::vector<BeamformerSet> out;
    out.reserve(part.size());
    for (std::size_t k = 0; k < part.size(); ++k)
      out.push_back(autonet::normalize_columns<T>(raw.data().subspan(k * nu * width, nu * width),
                                                  nu, width / 2, power_per_user, dead_rows));
    return out;
  };
}

template <typename T>
EvalSummary evaluate(const Model<T>& model, const Dataset& ds) {
  if (ds.config.n_t != model.config().n_t || 2 * ds.config.n_t + 1 != model.config().n_f)
    throw DimensionError(detail::concat("evaluate: model expects n_t=", model.config().n_t,
                                        ", dataset has n_t=", ds.config.n_t));
  std::size_t dead = 0;
  auto summary = evaluate_policy(model_policy(model, ds.config.power_per_user(), &dead), ds);
  summary.dead_rows = dead;
  return summary;
}

// Per-feature mean and inverse standard deviation over every user row of
// the dataset.
inline std::pair<std::vector<float>, std::vector<float>> feature_statistics(const Dataset& ds) {
  const std::size_t nf = 2 * ds.config.n_t + 1;
  std::vector<double> s1(nf, 0.0), s2(nf, 0.0);
  std::size_t rows = 0;
  for (const auto& sample : ds.samples) {
    const auto f = encode_features(sample);
    for (std::size_t u = 0; u < f.n_u; ++u, ++rows)
      for (std::size_t j = 0; j < nf; ++j) {
        s1[j] += f(u, j);
        s2[j] += f(u, j) * f(u, j);
      }
  }
  std::vector<float> shift(nf), gain(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    const double mu = s1[j] / static_cast<double>(rows);
    const double var = std::max(0.0, s2[j] / static_cast<double>(rows) - mu * mu);
    shift[j] = static_cast<float>(mu);
    gain[j] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-6));
  }
  return {shift, gain};
}

struct TrainResult {
  Model<float> model;
  DualState dual;
  TrainHistory history;
  EvalSummary validation;  // of the returned model
};

using ProgressFn = std::function<void(const EpochRecord&)>;

inline double global_grad_norm(const std::vector<autonet::Tensor<float>>& params) {
  double s = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (float g : p.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

inline TrainResult train(const TrainConfig& config, const Dataset& train_set,
                         const Dataset& val_set, const ProgressFn& progress = {}) {
  config.validate();
  for (const Dataset* ds : {&train_set, &val_set}) {
    ds->validate();
    if (ds->config.n_t != config.model.n_t || 2 * ds->config.n_t + 1 != config.model.n_f)
      throw DimensionError(detail::concat("train: model built for n_t=", config.model.n_t,
                                          " (n_f=", config.model.n_f,
                                          ") but dataset has n_t=", ds->config.n_t));
    if (ds->samples.empty()) throw DimensionError("train: empty dataset");
  }
  if (val_set.config.n_u != train_set.config.n_u)
    throw DimensionError("train: train and validation user counts differ");

  const double power = train_set.config.power_per_user();
  Model<float> model(config.model);
  {
    auto [shift, gain] = feature_statistics(train_set);
    model.set_input_normalization(std::move(shift), std::move(gain));
  }
  auto params = model.parameters();
  autonet::AdamState<float> adam;
  const autonet::AdamParameters hp{config.lr, 0.9, 0.999, 1e-8};
  DualState dual{config.lambda0, config.j_lb, config.eps, config.eta};

  TrainHistory history;
  LossDiagnostics diag;
  Rng rng(config.seed);
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  double grad_ema = 0.0;
  bool ema_started = false;
  std::size_t step = 0;
  std::optional<std::vector<std::vector<float>>> best_values;
  DualState best_dual;
  double best_objective = -1.0;
  std::optional<EvalSummary> best_val;
  EvalSummary last_val;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t m = 0; m < steps_per_epoch; ++m) {
      const std::size_t lo = m * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      std::vector<const ChannelSample*> batch;
      batch.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&train_set.samples[perm[i]]);

      const auto channels = ChannelBatch<float>::from_samples(batch, power);
      const auto raw = model.forward(feature_tensor<float>(batch));
      auto rep = batch_loss(channels, raw, dual, &diag);
      model.zero_grad();
      autonet::backward(rep.loss);

      const double gnorm = global_grad_norm(params);
      grad_ema = ema_started ? config.ema_decay * grad_ema + (1.0 - config.ema_decay) * gnorm
                             : gnorm;
      ema_started = true;

      const double j_bar = rep.j_bar.item();
      BatchRecord rec;
      rec.step = ++step;
      rec.epoch = epoch;
      rec.loss = rep.loss.item();
      rec.s_bar = rep.s_bar.item();
      rec.j_bar = j_bar;
      if (!config.freeze_dual) dual = dual_update(dual, j_bar);
      rec.lambda = dual.lambda;
      rec.grad_ema = grad_ema;
      rec.indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                         perm.begin() + static_cast<std::ptrdiff_t>(hi));
      history.batches.push_back(std::move(rec));

      autonet::adam_step(params, adam, hp);
    }

    last_val = evaluate(model, val_set);
    EpochRecord er;
    er.epoch = epoch;
    er.val_mean_sum_rate = last_val.mean_sum_rate;
    er.val_mean_jain = last_val.mean_jain;
    er.lambda = dual.lambda;
    er.feasible = last_val.mean_jain >= config.j_lb - config.eps;
    history.epochs.push_back(er);
    if (progress) progress(er);

    if (er.feasible && last_val.mean_sum_rate > best_objective) {
      best_objective = last_val.mean_sum_rate;
      best_values = model.snapshot();
      best_dual = dual;
      best_val = last_val;
      history.selected_epoch = epoch;
    }
    const double val_violation = last_val.mean_jain - config.j_lb;
    if (grad_ema <= config.grad_tol && std::abs(val_violation) <= config.eps) {
      history.converged = true;
      break;
    }
  }
  history.dead_rows = diag.dead_rows;
  history.degenerate_batches = diag.degenerate_batches;

  if (best_values) {
    model.load_values(*best_values);
    return {std::move(model), best_dual, std::move(history), std::move(*best_val)};
  }
  return {std::move(model), dual, std::move(history), std::move(last_val)};
}

inline std::string history_csv(const TrainHistory& h) {
  std::ostringstream oss;
  oss << "step,epoch,loss,s_bar,j_bar,lambda,grad_ema\n";
  oss.precision(9);
  for (const auto& r : h.batches)
    oss << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.s_bar << ',' << r.j_bar << ','
        << r.lambda << ',' << r.grad_ema << '\n';
  return oss.str();
}

struct LoadedCheckpoint {
  Model<float> model;
  DualState dual;
  nlohmann::json provenance;
};

inline void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                            const DualState& dual, nlohmann::json provenance = {}) {
  if (provenance.is_null()) provenance = nlohmann::json::object();
  provenance["dual"] = dual;
  autonet::save_model(model, path, provenance);
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json prov;
  auto model = autonet::load_model<float>(path, &prov);
  DualState dual;
  if (prov.contains("dual")) {
    try {
      dual = prov.at("dual").get<DualState>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(detail::concat("checkpoint sidecar: bad dual state: ", e.what()));
    }
  }
  return {std::move(model), dual, std::move(prov)};
}

}  // namespace fairbf
