#pragma once

// fairbf command-line driver: gen, baseline, train, eval, sweep, report.
//
// Exit codes: 0 success, 1 usage error, 2 runtime or data error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairbf/baselines.hpp"
#include "fairbf/channel.hpp"
#include "fairbf/io.hpp"
#include "fairbf/metrics.hpp"
#include "fairbf/parallel.hpp"
#include "fairbf/sweep.hpp"
#include "fairbf/trainer.hpp"

namespace fairbf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& baseline_methods() {
  static const std::vector<std::string> m{"mrt", "zf", "slnr", "wslnr"};
  return m;
}

struct ScenarioFlags {
  std::size_t nt = 16;
  std::size_t nu = 12;
  std::size_t samples = 50000;
  double radius = 500.0;
  double dmin = 35.0;
  double plexp = 3.76;
  double refsnr = 60.0;
  double ptot = 10.0;
  std::uint64_t seed = 1;
};

struct TrainFlags {
  double jlb = 0.8;
  std::size_t batch = 256;
  double lr = 0.002;
  double eps = 0.003;
  double eta = 0.01;
  std::size_t epochs = 100;
  double grad_tol = 1e-3;
  double lambda0 = 1.0;
  bool freeze_dual = false;
  std::uint64_t seed = 1;
  std::size_t emb_factor = 4;
  std::size_t blocks = 8;
  std::size_t heads = 4;
  std::uint64_t init_seed = 7;
  std::uint64_t split_seed = 1;

  TrainConfig to_config(std::size_t n_t) const {
    TrainConfig c;
    c.j_lb = jlb;
    c.batch_size = batch;
    c.lr = lr;
    c.eps = eps;
    c.eta = eta;
    c.max_epochs = epochs;
    c.grad_tol = grad_tol;
    c.lambda0 = lambda0;
    c.freeze_dual = freeze_dual;
    c.seed = seed;
    c.model = ModelConfig::for_antennas(n_t, emb_factor, blocks, heads, init_seed);
    return c;
  }
};

inline void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--batch", f.batch, "Batch size")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--eps", f.eps, "Dual inactive band")->capture_default_str();
  cmd->add_option("--eta", f.eta, "Dual step size")->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "Maximum epochs")->capture_default_str();
  cmd->add_option("--grad-tol", f.grad_tol, "Gradient-norm EMA stop threshold")
      ->capture_default_str();
  cmd->add_option("--lambda0", f.lambda0, "Initial multiplier")->capture_default_str();
  cmd->add_flag("--freeze-dual", f.freeze_dual, "Keep the multiplier at lambda0");
  cmd->add_option("--seed", f.seed, "Batch shuffling seed")->capture_default_str();
  cmd->add_option("--emb-factor", f.emb_factor, "d_model = emb-factor * (2 nt + 1)")
      ->capture_default_str();
  cmd->add_option("--blocks", f.blocks, "Attention blocks")->capture_default_str();
  cmd->add_option("--heads", f.heads, "Attention heads")->capture_default_str();
  cmd->add_option("--init-seed", f.init_seed, "Parameter init seed")->capture_default_str();
  cmd->add_option("--split-seed", f.split_seed, "Train/val/test split seed")
      ->capture_default_str();
}

// Options the user set on the command line or through --config.
inline json resolved_options(const CLI::App* cmd) {
  json j = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    const auto results = opt->results();
    if (!results.empty())
      j[name] = results.size() == 1 ? json(results.front()) : json(results);
    else if (!opt->get_default_str().empty())
      j[name] = opt->get_default_str();
  }
  return j;
}

inline void write_manifest(const fs::path& path, const std::string& command, const json& options,
                           json extra = json::object()) {
  json m = std::move(extra);
  m["command"] = command;
  m["options"] = options;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, m.dump(2) + "\n");
}

inline json dataset_ref(const fs::path& path) {
  return {{"path", path.string()}, {"content_hash", io::content_hash(io::read_file(path))}};
}

// Applies flat {"flag-name": value} entries from a JSON file to options the
// command line left unset.
inline void apply_config_file(CLI::App* cmd, const fs::path& path) {
  const auto bytes = io::read_file(path);
  json cfg;
  try {
    cfg = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw UsageError(detail::concat("config file '", path.string(), "': ", e.what()));
  }
  if (!cfg.is_object())
    throw UsageError(detail::concat("config file '", path.string(), "' must hold a JSON object"));
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = nullptr;
    for (CLI::Option* o : cmd->get_options())
      if (o->get_single_name() == key) opt = o;
    if (!opt || key == "config" || key == "help")
      throw UsageError(detail::concat("config file: unknown key '", key, "' for '",
                                      cmd->get_name(), "'"));
    if (opt->count() > 0) continue;
    std::vector<std::string> items;
    auto to_str = [](const json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_array())
      for (const auto& v : value) items.push_back(to_str(v));
    else
      items.push_back(to_str(value));
    for (auto& s : items) opt->add_result(s);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(detail::concat("config file: bad value for '", key, "': ", e.what()));
    }
  }
}

inline void require(bool given, std::string_view flag, std::string_view cmd) {
  if (!given) throw UsageError(detail::concat(cmd, ": ", flag, " is required"));
}

inline std::vector<double> parse_list(const std::string& text, std::string_view flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(detail::concat(flag, ": '", item, "' is not a number"));
    }
  }
  if (out.empty()) throw UsageError(detail::concat(flag, ": empty list"));
  return out;
}

struct DataSplits {
  Dataset full;
  DatasetSplit split;
};

inline DataSplits load_splits(const fs::path& data, std::uint64_t split_seed) {
  DataSplits d{load_dataset(data), {}};
  d.split = split_dataset(d.full, SplitFractions{}, split_seed);
  return d;
}

inline const Dataset& pick_subset(const DataSplits& d, const std::string& subset) {
  if (subset == "train") return d.split.train;
  if (subset == "val") return d.split.val;
  if (subset == "test") return d.split.test;
  if (subset == "all") return d.full;
  throw UsageError(detail::concat("--subset must be one of train, val, test, all; got '",
                                  subset, "'"));
}

inline json summary_json(const EvalSummary& s) {
  return {{"mean_sum_rate", s.mean_sum_rate},
          {"mean_jain", s.mean_jain},
          {"samples", s.stream_sum_rates.size()},
          {"n_u", s.n_u},
          {"dead_rows", s.dead_rows}};
}

// sample,sum_rate,jain,rate_1..rate_U with a leading metadata line.
inline std::string per_sample_csv(const EvalSummary& s, const json& meta) {
  std::ostringstream oss;
  oss << "# " << meta.dump() << "\n";
  oss << "sample,sum_rate,jain";
  for (std::size_t u = 1; u <= s.n_u; ++u) oss << ",rate_" << u;
  oss << "\n";
  oss.precision(10);
  for (std::size_t k = 0; k < s.stream_sum_rates.size(); ++k) {
    oss << k << ',' << s.stream_sum_rates[k] << ',' << s.stream_jains[k];
    for (std::size_t u = 0; u < s.n_u; ++u) oss << ',' << s.user_rates[k * s.n_u + u];
    oss << "\n";
  }
  return oss.str();
}

inline void check_method(const std::string& method, const std::optional<double>& alpha) {
  const auto& valid = baseline_methods();
  if (std::find(valid.begin(), valid.end(), method) == valid.end()) {
    std::string list;
    for (const auto& m : valid) list += (list.empty() ? "" : ", ") + m;
    throw UsageError(
        detail::concat("baseline: unknown method '", method, "' (valid: ", list, ")"));
  }
  if (method == "wslnr" && !alpha) throw UsageError("baseline: --method wslnr requires --alpha");
}

inline BeamformingPolicy make_baseline(const std::string& method,
                                       const std::optional<double>& alpha, const Dataset& ds) {
  const double ppu = ds.config.power_per_user();
  if (method == "mrt")
    return baseline_policy([=](const ChannelSample& s) { return mrt(s, ppu); });
  if (method == "zf") {
    if (ds.config.n_u > ds.config.n_t)
      throw RankDeficientError(detail::concat("zf requires n_u <= n_t, dataset has n_u=",
                                              ds.config.n_u, " > n_t=", ds.config.n_t));
    return baseline_policy([=](const ChannelSample& s) { return zf(s, ppu); });
  }
  if (method == "slnr")
    return baseline_policy([=](const ChannelSample& s) { return slnr(s, ppu); });
  check_method(method, alpha);
  return wslnr_policy(*alpha, ppu);
}

inline std::ostream& diag_out() { return std::cerr; }

inline void print_progress(const std::string& prefix, const EpochRecord& e) {
  diag_out() << prefix << "epoch " << e.epoch << "  val sum rate " << e.val_mean_sum_rate
        << "  val jain " << e.val_mean_jain << "  lambda " << e.lambda
        << (e.feasible ? "" : "  (infeasible)") << "\n";
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout) {
  CLI::App app{"Fairness-constrained multi-user beamforming toolkit"};
  app.require_subcommand(1);
  std::size_t threads = default_threads();
  app.add_option("--threads", threads, "Worker thread cap")->capture_default_str();

  std::map<CLI::App*, std::string> config_paths;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_paths[cmd], "JSON file with flat flag-name keys");
  };

  // gen
  ScenarioFlags sf;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a channel dataset");
  gen->add_option("--nt", sf.nt, "Transmit antennas")->capture_default_str();
  gen->add_option("--nu", sf.nu, "Users")->capture_default_str();
  gen->add_option("--samples", sf.samples, "Sample count")->capture_default_str();
  gen->add_option("--radius", sf.radius, "Cell radius [m]")->capture_default_str();
  gen->add_option("--dmin", sf.dmin, "Minimum user distance [m]")->capture_default_str();
  gen->add_option("--plexp", sf.plexp, "Pathloss exponent")->capture_default_str();
  gen->add_option("--refsnr", sf.refsnr, "Full-power SNR at dmin [dB]")->capture_default_str();
  gen->add_option("--ptot", sf.ptot, "Total transmit power")->capture_default_str();
  gen->add_option("--seed", sf.seed, "Dataset seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output .fbd path");
  add_config(gen);

  // baseline
  std::string bl_method, bl_data, bl_out, bl_subset = "all";
  std::optional<double> bl_alpha;
  auto* bl = app.add_subcommand("baseline", "Evaluate a closed-form beamformer");
  bl->add_option("--method", bl_method, "mrt | zf | slnr | wslnr");
  bl->add_option("--alpha", bl_alpha, "wSLNR exponent");
  bl->add_option("--data", bl_data, "Dataset .fbd");
  bl->add_option("--subset", bl_subset, "train | val | test | all")->capture_default_str();
  std::uint64_t bl_split_seed = 1;
  bl->add_option("--split-seed", bl_split_seed, "Split seed")->capture_default_str();
  bl->add_option("--out", bl_out, "Per-sample results CSV");
  add_config(bl);

  // train
  TrainFlags tf;
  std::string tr_data, tr_out;
  auto* tr = app.add_subcommand("train", "Train a fairness-constrained beamforming model");
  tr->add_option("--data", tr_data, "Dataset .fbd");
  tr->add_option("--jlb", tf.jlb, "Jain lower bound J_LB")->capture_default_str();
  add_train_flags(tr, tf);
  tr->add_option("--out", tr_out, "Output directory");
  add_config(tr);

  // eval
  std::string ev_model, ev_data, ev_out, ev_subset = "test";
  std::optional<std::uint64_t> ev_split_seed;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  ev->add_option("--model", ev_model, "Checkpoint .fbck");
  ev->add_option("--data", ev_data, "Dataset .fbd");
  ev->add_option("--subset", ev_subset, "train | val | test | all")->capture_default_str();
  ev->add_option("--split-seed", ev_split_seed, "Split seed (default: from checkpoint)");
  ev->add_option("--out", ev_out, "Output directory");
  add_config(ev);

  // sweep
  TrainFlags sw;
  std::string sw_data, sw_out, sw_jlbs = "0.6,0.7,0.8,0.9", sw_alphas = "0,0.5,1,2,5";
  auto* swc = app.add_subcommand("sweep", "wSLNR alpha sweep plus one DNN per J_LB");
  swc->add_option("--data", sw_data, "Dataset .fbd");
  swc->add_option("--jlb", sw_jlbs, "Comma-separated J_LB targets")->capture_default_str();
  swc->add_option("--alpha", sw_alphas, "Comma-separated wSLNR exponents")
      ->capture_default_str();
  add_train_flags(swc, sw);
  swc->add_option("--out", sw_out, "Output directory");
  add_config(swc);

  // report
  std::string rp_in, rp_out;
  auto* rp = app.add_subcommand("report", "Re-emit report CSVs from a sweep's points.json");
  rp->add_option("--in", rp_in, "points.json written by sweep");
  rp->add_option("--out", rp_out, "Output directory");
  add_config(rp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (!config_paths[cmd].empty()) apply_config_file(cmd, config_paths[cmd]);
    if (threads == 0) throw UsageError("--threads must be >= 1");
    json options = resolved_options(cmd);
    options["threads"] = threads;

    if (cmd == gen) {
      require(!gen_out.empty(), "--out", name);
      if (sf.samples == 0) throw UsageError("gen: --samples must be >= 1");
      ScenarioConfig sc;
      sc.n_t = sf.nt;
      sc.n_u = sf.nu;
      sc.radius = sf.radius;
      sc.d_min = sf.dmin;
      sc.pathloss_exponent = sf.plexp;
      sc.ref_snr_db = sf.refsnr;
      sc.p_tot = sf.ptot;
      sc.seed = sf.seed;
      try {
        sc.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      const auto ds = generate_dataset(sc, sf.samples, threads);
      save_dataset(ds, gen_out);
      double snr_db = 0.0;
      for (const auto& s : ds.samples)
        for (std::size_t u = 0; u < s.n_u(); ++u)
          snr_db += 10.0 * std::log10(sc.power_per_user() * s.h[u].squared_norm() / s.sigma2[u]);
      snr_db /= static_cast<double>(ds.samples.size() * sc.n_u);
      out << "wrote " << ds.samples.size() << " samples (n_t=" << sc.n_t << ", n_u=" << sc.n_u
          << ") to " << gen_out << "\n"
          << "mean per-user SNR: " << snr_db << " dB\n";
      write_manifest(gen_out + ".manifest.json", name, options,
                     {{"scenario", sc},
                      {"dataset", dataset_ref(gen_out)},
                      {"mean_user_snr_db", snr_db}});
      return kExitOk;
    }

    if (cmd == bl) {
      require(!bl_method.empty(), "--method", name);
      require(!bl_data.empty(), "--data", name);
      require(!bl_out.empty(), "--out", name);
      check_method(bl_method, bl_alpha);
      const auto splits = load_splits(bl_data, bl_split_seed);
      const auto& ds = pick_subset(splits, bl_subset);
      const auto summary = evaluate_policy(make_baseline(bl_method, bl_alpha, ds), ds);
      json meta = {{"method", bl_method}, {"summary", summary_json(summary)}};
      if (bl_alpha) meta["alpha"] = *bl_alpha;
      io::write_text(bl_out, per_sample_csv(summary, meta));
      out << bl_method << (bl_alpha ? " alpha=" + detail::fmt(*bl_alpha) : std::string())
          << ": mean sum rate " << summary.mean_sum_rate << " bit/s/Hz, mean jain "
          << summary.mean_jain << " over " << summary.stream_sum_rates.size() << " samples\n";
      write_manifest(bl_out + ".manifest.json", name, options,
                     {{"dataset", dataset_ref(bl_data)}, {"summary", summary_json(summary)}});
      return kExitOk;
    }

    if (cmd == tr) {
      require(!tr_data.empty(), "--data", name);
      require(!tr_out.empty(), "--out", name);
      const auto splits = load_splits(tr_data, tf.split_seed);
      const auto config = tf.to_config(splits.full.config.n_t);
      try {
        config.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      const auto result =
          train(config, splits.split.train, splits.split.val,
                [](const EpochRecord& e) { print_progress("", e); });
      fs::create_directories(tr_out);
      const fs::path dir(tr_out);
      const json summary = {{"validation", summary_json(result.validation)},
                            {"lambda_final", result.dual.lambda},
                            {"selected_epoch", result.history.selected_epoch
                                                   ? json(*result.history.selected_epoch)
                                                   : json(nullptr)},
                            {"epochs_run", result.history.epochs.size()},
                            {"converged", result.history.converged},
                            {"dead_rows", result.history.dead_rows},
                            {"degenerate_batches", result.history.degenerate_batches}};
      save_checkpoint(dir / "model.fbck", result.model, result.dual,
                      {{"train", config},
                       {"split_seed", tf.split_seed},
                       {"dataset", dataset_ref(tr_data)},
                       {"summary", summary}});
      io::write_text(dir / "history.csv", history_csv(result.history));
      io::write_text(dir / "summary.json", summary.dump(2) + "\n");
      write_manifest(dir / "manifest.json", name, options,
                     {{"train", config},
                      {"scenario", splits.full.config},
                      {"dataset", dataset_ref(tr_data)},
                      {"split_seed", tf.split_seed},
                      {"summary", summary}});
      out << "validation: mean sum rate " << result.validation.mean_sum_rate
          << " bit/s/Hz, mean jain " << result.validation.mean_jain << ", lambda "
          << result.dual.lambda << "\n";
      return kExitOk;
    }

    if (cmd == ev) {
      require(!ev_model.empty(), "--model", name);
      require(!ev_data.empty(), "--data", name);
      require(!ev_out.empty(), "--out", name);
      auto ck = load_checkpoint(ev_model);
      const std::uint64_t seed =
          ev_split_seed ? *ev_split_seed : ck.provenance.value("split_seed", std::uint64_t{1});
      const auto splits = load_splits(ev_data, seed);
      const auto& ds = pick_subset(splits, ev_subset);
      const auto summary = evaluate(ck.model, ds);
      const fs::path dir(ev_out);
      fs::create_directories(dir);
      json meta = {{"model", ev_model}, {"subset", ev_subset}, {"summary", summary_json(summary)}};
      io::write_text(dir / "eval.csv", per_sample_csv(summary, meta));
      io::write_text(dir / "eval.json", summary_json(summary).dump(2) + "\n");
      write_manifest(dir / "manifest.json", name, options,
                     {{"dataset", dataset_ref(ev_data)},
                      {"split_seed", seed},
                      {"subset", ev_subset},
                      {"summary", summary_json(summary)}});
      out << ev_subset << ": mean sum rate " << summary.mean_sum_rate << " bit/s/Hz, mean jain "
          << summary.mean_jain << "\n";
      return kExitOk;
    }

    if (cmd == swc) {
      require(!sw_data.empty(), "--data", name);
      require(!sw_out.empty(), "--out", name);
      const auto jlbs = parse_list(sw_jlbs, "--jlb");
      const auto alphas = parse_list(sw_alphas, "--alpha");
      const auto splits = load_splits(sw_data, sw.split_seed);
      auto base = sw.to_config(splits.full.config.n_t);
      for (double j : jlbs) {
        auto c = base;
        c.j_lb = j;
        try {
          c.validate();
        } catch (const ConfigError& e) {
          throw UsageError(e.what());
        }
      }
      const fs::path dir(sw_out);
      fs::create_directories(dir);
      auto points = baseline_sweep(alphas, splits.split.test, threads);
      for (auto& p : reference_points(splits.split.test)) points.push_back(std::move(p));
      auto runs = pareto_sweep(jlbs, splits.split.train, splits.split.val, splits.split.test,
                               base, threads, [&](std::size_t i, const EpochRecord& e) {
                                 print_progress("[jlb " + detail::fmt(jlbs[i]) + "] ", e);
                               });
      for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].result) {
          const auto stem = "dnn_" + std::to_string(i + 1);
          save_checkpoint(dir / (stem + ".fbck"), runs[i].result->model, runs[i].result->dual,
                          {{"j_lb", jlbs[i]}, {"split_seed", sw.split_seed}});
          io::write_text(dir / (stem + "_history.csv"), history_csv(runs[i].result->history));
        } else {
          diag_out() << "sweep point J_LB=" << jlbs[i] << " failed: " << runs[i].point.error << "\n";
        }
        points.push_back(std::move(runs[i].point));
      }
      const json meta = {{"dataset", dataset_ref(sw_data)}, {"split_seed", sw.split_seed}};
      emit_reports(points, dir, meta);
      io::write_text(dir / "points.json", json({{"meta", meta}, {"points", points}}).dump() + "\n");
      write_manifest(dir / "manifest.json", name, options,
                     {{"train", base},
                      {"scenario", splits.full.config},
                      {"dataset", dataset_ref(sw_data)},
                      {"split_seed", sw.split_seed}});
      for (const auto& p : points) {
        out << p.method << (p.knob ? " " + detail::fmt(*p.knob) : std::string()) << ": ";
        if (p.failed)
          out << "failed (" << p.error << ")\n";
        else
          out << "mean sum rate " << p.mean_sum_rate << ", mean jain " << p.mean_jain
              << (p.lambda_final ? ", lambda " + detail::fmt(*p.lambda_final) : std::string())
              << "\n";
      }
      return kExitOk;
    }

    if (cmd == rp) {
      require(!rp_in.empty(), "--in", name);
      require(!rp_out.empty(), "--out", name);
      const auto bytes = io::read_file(rp_in);
      std::vector<OperatingPoint> points;
      json meta;
      try {
        const auto j = json::parse(bytes.begin(), bytes.end());
        meta = j.at("meta");
        j.at("points").get_to(points);
      } catch (const json::exception& e) {
        throw FormatError(detail::concat("report: cannot read '", rp_in, "': ", e.what()));
      }
      emit_reports(points, rp_out, meta);
      write_manifest(fs::path(rp_out) / "manifest.json", name, options,
                     {{"points", dataset_ref(rp_in)}});
      out << "wrote reports for " << points.size() << " operating points to " << rp_out << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    diag_out() << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    diag_out() << "error: " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace fairbf::cli
