#pragma once

// Experiment drivers: wSLNR alpha sweep, fixed reference beamformers, DNN
// fairness-target sweep, and CSV report emission.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairbf/baselines.hpp"
#include "fairbf/channel.hpp"
#include "fairbf/io.hpp"
#include "fairbf/metrics.hpp"
#include "fairbf/parallel.hpp"
#include "fairbf/trainer.hpp"

namespace fairbf {

struct OperatingPoint {
  std::string method;          // dnn | wslnr | mrt | zf | slnr
  std::optional<double> knob;  // alpha for wslnr, J_LB for dnn
  double mean_sum_rate = 0.0;
  double mean_jain = 0.0;
  std::optional<double> lambda_final;
  bool failed = false;
  std::string error;
  EvalSummary summary;  // empty when failed
};

inline OperatingPoint make_point(std::string method, std::optional<double> knob,
                                 EvalSummary summary) {
  OperatingPoint p;
  p.method = std::move(method);
  p.knob = knob;
  p.mean_sum_rate = summary.mean_sum_rate;
  p.mean_jain = summary.mean_jain;
  p.summary = std::move(summary);
  return p;
}

inline OperatingPoint failed_point(std::string method, std::optional<double> knob,
                                   std::string error) {
  OperatingPoint p;
  p.method = std::move(method);
  p.knob = knob;
  p.failed = true;
  p.error = std::move(error);
  return p;
}

inline std::vector<OperatingPoint> baseline_sweep(std::span<const double> alphas,
                                                  const Dataset& test_set,
                                                  std::size_t threads = 1) {
  if (alphas.empty()) throw ConfigError("baseline_sweep: no alpha values");
  std::vector<OperatingPoint> out(alphas.size());
  const double ppu = test_set.config.power_per_user();
  parallel_for(alphas.size(), threads, [&](std::size_t i) {
    out[i] = make_point("wslnr", alphas[i],
                        evaluate_policy(wslnr_policy(alphas[i], ppu), test_set));
  });
  return out;
}

// MRT, SLNR, and ZF when the scenario admits it.
inline std::vector<OperatingPoint> reference_points(const Dataset& test_set) {
  const double ppu = test_set.config.power_per_user();
  std::vector<OperatingPoint> out;
  out.push_back(make_point(
      "mrt", std::nullopt,
      evaluate_policy(baseline_policy([=](const ChannelSample& s) { return mrt(s, ppu); }),
                      test_set)));
  if (test_set.config.n_u <= test_set.config.n_t) {
    try {
      out.push_back(make_point(
          "zf", std::nullopt,
          evaluate_policy(baseline_policy([=](const ChannelSample& s) { return zf(s, ppu); }),
                          test_set)));
    } catch (const Error& e) {
      out.push_back(failed_point("zf", std::nullopt, e.what()));
    }
  }
  out.push_back(make_point(
      "slnr", std::nullopt,
      evaluate_policy(baseline_policy([=](const ChannelSample& s) { return slnr(s, ppu); }),
                      test_set)));
  return out;
}

struct SweepRun {
  OperatingPoint point;
  std::optional<TrainResult> result;  // absent for failed points
};

using SweepProgressFn = std::function<void(std::size_t point, const EpochRecord&)>;

// One independently trained model per target. Point i uses seed and
// init_seed offset by i.
inline std::vector<SweepRun> pareto_sweep(std::span<const double> j_lbs, const Dataset& train_set,
                                          const Dataset& val_set, const Dataset& test_set,
                                          const TrainConfig& base, std::size_t threads = 1,
                                          const SweepProgressFn& progress = {}) {
  if (j_lbs.empty()) throw ConfigError("pareto_sweep: no J_LB values");
  std::vector<SweepRun> out(j_lbs.size());
  parallel_for(j_lbs.size(), threads, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.j_lb = j_lbs[i];
    cfg.seed = base.seed + i;
    cfg.model.init_seed = base.model.init_seed + i;
    try {
      ProgressFn fn;
      if (progress) fn = [&, i](const EpochRecord& e) { progress(i, e); };
      auto res = train(cfg, train_set, val_set, fn);
      auto point = make_point("dnn", cfg.j_lb, evaluate(res.model, test_set));
      point.lambda_final = res.dual.lambda;
      out[i] = {std::move(point), std::move(res)};
    } catch (const std::exception& e) {
      out[i] = {failed_point("dnn", cfg.j_lb, e.what()), std::nullopt};
    }
  });
  return out;
}

inline void to_json(nlohmann::json& j, const OperatingPoint& p) {
  j = nlohmann::json{{"method", p.method},
                     {"mean_sum_rate", p.mean_sum_rate},
                     {"mean_jain", p.mean_jain},
                     {"failed", p.failed}};
  j["knob"] = p.knob ? nlohmann::json(*p.knob) : nlohmann::json(nullptr);
  j["lambda_final"] = p.lambda_final ? nlohmann::json(*p.lambda_final) : nlohmann::json(nullptr);
  if (p.failed) j["error"] = p.error;
  j["n_u"] = p.summary.n_u;
  j["user_rates"] = p.summary.user_rates;
  j["stream_sum_rates"] = p.summary.stream_sum_rates;
  j["stream_jains"] = p.summary.stream_jains;
}

inline void from_json(const nlohmann::json& j, OperatingPoint& p) {
  j.at("method").get_to(p.method);
  j.at("mean_sum_rate").get_to(p.mean_sum_rate);
  j.at("mean_jain").get_to(p.mean_jain);
  j.at("failed").get_to(p.failed);
  p.knob = j.at("knob").is_null() ? std::nullopt : std::optional(j.at("knob").get<double>());
  p.lambda_final = j.at("lambda_final").is_null()
                       ? std::nullopt
                       : std::optional(j.at("lambda_final").get<double>());
  p.error = j.value("error", std::string());
  p.summary.n_u = j.value("n_u", std::size_t{0});
  p.summary.mean_sum_rate = p.mean_sum_rate;
  p.summary.mean_jain = p.mean_jain;
  j.at("user_rates").get_to(p.summary.user_rates);
  j.at("stream_sum_rates").get_to(p.summary.stream_sum_rates);
  j.at("stream_jains").get_to(p.summary.stream_jains);
}

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream oss;
  oss << std::setprecision(10) << v;
  return oss.str();
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

inline std::string csv_header(const nlohmann::json& meta, std::string_view columns) {
  return "# " + meta.dump() + "\n" + std::string(columns) + "\n";
}

// Per-sample user rates sorted ascending, averaged rank by rank.
inline std::vector<double> mean_sorted_user_rates(const EvalSummary& s) {
  std::vector<double> acc(s.n_u, 0.0);
  const std::size_t samples = s.n_u ? s.user_rates.size() / s.n_u : 0;
  std::vector<double> row(s.n_u);
  for (std::size_t k = 0; k < samples; ++k) {
    std::copy_n(s.user_rates.begin() + static_cast<std::ptrdiff_t>(k * s.n_u), s.n_u,
                row.begin());
    std::sort(row.begin(), row.end());
    for (std::size_t u = 0; u < s.n_u; ++u) acc[u] += row[u];
  }
  for (auto& a : acc) a /= static_cast<double>(std::max<std::size_t>(samples, 1));
  return acc;
}

}  // namespace detail

// Writes scatter.csv, ecdf_user.csv, ecdf_sum.csv, bars_user.csv,
// bars_sum.csv and table2.csv into out_dir. Each file starts with a
// "# {json}" metadata line. Failed points appear only in scatter.csv and
// table2.csv (with empty measurement fields).
inline void emit_reports(const std::vector<OperatingPoint>& points,
                         const std::filesystem::path& out_dir,
                         const nlohmann::json& metadata = nlohmann::json::object()) {
  if (points.empty()) throw ConfigError("emit_reports: no operating points");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw Error(detail::concat("cannot create report directory '", out_dir.string(),
                               "': ", ec.message()));
  using detail::fmt;
  auto meta = [&](std::string_view file) {
    nlohmann::json m = metadata;
    m["file"] = file;
    return m;
  };

  std::string scatter = detail::csv_header(meta("scatter"), "jain,sum_rate,method,knob");
  for (const auto& p : points)
    scatter += (p.failed ? std::string() : fmt(p.mean_jain)) + "," +
               (p.failed ? std::string() : fmt(p.mean_sum_rate)) + "," + p.method + "," +
               fmt(p.knob) + "\n";
  io::write_text(out_dir / "scatter.csv", scatter);

  std::string ecdf_user = detail::csv_header(meta("ecdf_user"), "method,knob,rate,cdf");
  std::string ecdf_sum = detail::csv_header(meta("ecdf_sum"), "method,knob,sum_rate,cdf");
  std::string bars_user = detail::csv_header(meta("bars_user"), "method,knob,user,mean_rate");
  std::string bars_sum =
      detail::csv_header(meta("bars_sum"), "method,knob,mean_sum_rate,mean_jain");
  for (const auto& p : points) {
    if (p.failed || p.summary.stream_sum_rates.empty()) continue;
    const std::string tag = p.method + "," + fmt(p.knob) + ",";
    for (const auto& e : ecdf(p.summary.user_rates))
      ecdf_user += tag + fmt(e.value) + "," + fmt(e.prob) + "\n";
    for (const auto& e : ecdf(p.summary.stream_sum_rates))
      ecdf_sum += tag + fmt(e.value) + "," + fmt(e.prob) + "\n";
    const auto ranks = detail::mean_sorted_user_rates(p.summary);
    for (std::size_t u = 0; u < ranks.size(); ++u)
      bars_user += tag + std::to_string(u + 1) + "," + fmt(ranks[u]) + "\n";
    bars_sum += tag + fmt(p.mean_sum_rate) + "," + fmt(p.mean_jain) + "\n";
  }
  io::write_text(out_dir / "ecdf_user.csv", ecdf_user);
  io::write_text(out_dir / "ecdf_sum.csv", ecdf_sum);
  io::write_text(out_dir / "bars_user.csv", bars_user);
  io::write_text(out_dir / "bars_sum.csv", bars_sum);

  // Row i pairs the i-th wslnr point with the i-th dnn point.
  std::vector<const OperatingPoint*> ws, dnn;
  for (const auto& p : points) {
    if (p.method == "wslnr") ws.push_back(&p);
    if (p.method == "dnn") dnn.push_back(&p);
  }
  std::string table =
      detail::csv_header(meta("table2"), "alpha,wslnr_mean_sr,j_lb,j_dnn,lambda,dnn_mean_sr");
  for (std::size_t i = 0; i < std::max(ws.size(), dnn.size()); ++i) {
    std::string row;
    if (i < ws.size())
      row += fmt(ws[i]->knob) + "," + (ws[i]->failed ? "" : fmt(ws[i]->mean_sum_rate)) + ",";
    else
      row += ",,";
    if (i < dnn.size()) {
      const auto& d = *dnn[i];
      row += fmt(d.knob) + "," + (d.failed ? "" : fmt(d.mean_jain)) + "," +
             fmt(d.lambda_final) + "," + (d.failed ? "" : fmt(d.mean_sum_rate));
    } else {
      row += ",,,";
    }
    table += row + "\n";
  }
  io::write_text(out_dir / "table2.csv", table);
}

}  // namespace fairbf
