#pragma once

// Single-cell downlink scenario: user drops, Rayleigh fading with
// log-distance pathloss, CSI feature encoding, dataset splits and the
// `.fbd` binary dataset format.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "fairbf/complex_core.hpp"
#include "fairbf/error.hpp"
#include "fairbf/io.hpp"
#include "fairbf/parallel.hpp"

namespace fairbf {

struct ScenarioConfig {
  std::size_t n_t = 16;
  std::size_t n_u = 12;
  double p_tot = 10.0;                // W
  double radius = 500.0;              // m
  double d_min = 35.0;                // m
  double pathloss_exponent = 3.76;
  double ref_snr_db = 60.0;           // full-power single-user SNR at d_min
  double carrier_hz = 2.0e9;          // metadata only
  double bandwidth_hz = 15.0e3;       // metadata only
  std::uint64_t seed = 1;

  void validate() const {
    if (n_t < 1) throw ConfigError("scenario: n_t must be >= 1");
    if (n_u < 1) throw ConfigError("scenario: n_u must be >= 1");
    if (!(p_tot > 0.0)) throw ConfigError("scenario: p_tot must be > 0");
    if (!(d_min > 0.0) || !(d_min < radius))
      throw ConfigError(detail::concat("scenario: need 0 < d_min < radius, got d_min=",
                                       d_min, " radius=", radius));
    if (!std::isfinite(pathloss_exponent) || !std::isfinite(ref_snr_db))
      throw ConfigError("scenario: pathloss exponent and reference SNR must be finite");
  }

  // Large-scale gain gamma_0 at d_min. A user there with the whole budget
  // and unit noise sees E[|h|^2] * p_tot = n_t * gamma_0 * p_tot = ref SNR.
  double reference_gain() const {
    return std::pow(10.0, ref_snr_db / 10.0) / (p_tot * static_cast<double>(n_t));
  }

  double pathloss_gain(double d) const {
    return reference_gain() * std::pow(d / d_min, -pathloss_exponent);
  }

  double power_per_user() const { return p_tot / static_cast<double>(n_u); }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{{"n_t", c.n_t},
                     {"n_u", c.n_u},
                     {"p_tot", c.p_tot},
                     {"radius", c.radius},
                     {"d_min", c.d_min},
                     {"pathloss_exponent", c.pathloss_exponent},
                     {"ref_snr_db", c.ref_snr_db},
                     {"carrier_hz", c.carrier_hz},
                     {"bandwidth_hz", c.bandwidth_hz},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  j.at("n_t").get_to(c.n_t);
  j.at("n_u").get_to(c.n_u);
  j.at("p_tot").get_to(c.p_tot);
  j.at("radius").get_to(c.radius);
  j.at("d_min").get_to(c.d_min);
  j.at("pathloss_exponent").get_to(c.pathloss_exponent);
  j.at("ref_snr_db").get_to(c.ref_snr_db);
  j.at("carrier_hz").get_to(c.carrier_hz);
  j.at("bandwidth_hz").get_to(c.bandwidth_hz);
  j.at("seed").get_to(c.seed);
}

struct Position {
  double x = 0.0;
  double y = 0.0;
  double distance() const { return std::hypot(x, y); }
  friend bool operator==(const Position&, const Position&) = default;
};

// One drop. Row u of the channel matrix is the channel vector h_u; user u
// receives h_u^H f. Values are held at float32 resolution so that the
// binary format round-trips exactly.
struct ChannelSample {
  std::vector<CVec> h;
  std::vector<double> sigma2;
  std::vector<Position> positions;

  std::size_t n_u() const noexcept { return h.size(); }
  std::size_t n_t() const noexcept { return h.empty() ? 0 : h.front().size(); }

  // Common noise variance; the mean if per-user values ever differ.
  double common_noise() const {
    return std::accumulate(sigma2.begin(), sigma2.end(), 0.0) /
           static_cast<double>(sigma2.size());
  }

  void validate() const {
    if (h.empty()) throw DimensionError("channel sample has no users");
    if (sigma2.size() != h.size())
      throw DimensionError(detail::concat("channel sample: ", h.size(),
                                          " channel rows but ", sigma2.size(),
                                          " noise variances"));
    const std::size_t nt = n_t();
    for (std::size_t u = 0; u < h.size(); ++u) {
      if (h[u].size() != nt || nt == 0)
        throw DimensionError(detail::concat("channel sample: row ", u,
                                            " has length ", h[u].size()));
      if (!(h[u].squared_norm() > 0.0))
        throw DimensionError(detail::concat("channel sample: row ", u, " is all zero"));
      if (!(sigma2[u] > 0.0))
        throw DimensionError(detail::concat("channel sample: sigma2[", u, "] <= 0"));
    }
  }

  friend bool operator==(const ChannelSample&, const ChannelSample&) = default;
};

// N_u x N_f features, N_f = 2 N_t + 1, row-major.
struct CsiFeatureSequence {
  std::size_t n_u = 0;
  std::size_t n_f = 0;
  std::vector<double> rows;

  double operator()(std::size_t u, std::size_t f) const { return rows[u * n_f + f]; }
};

struct Dataset {
  ScenarioConfig config;
  std::vector<ChannelSample> samples;

  std::size_t size() const noexcept { return samples.size(); }

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (s.n_u() != config.n_u || s.n_t() != config.n_t)
        throw DimensionError(detail::concat("dataset sample ", i, " is ", s.n_u(),
                                            "x", s.n_t(), ", config says ",
                                            config.n_u, "x", config.n_t));
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// splitmix64 finalizer; gives every sample index an independent stream.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Rounds to float32 precision through a volatile store.
inline double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

// Area-uniform over the annulus d_min <= d <= radius.
inline std::vector<Position> drop_users(const ScenarioConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r0 = config.d_min * config.d_min;
  const double r1 = config.radius * config.radius;
  std::vector<Position> out(config.n_u);
  for (auto& p : out) {
    const double d = std::sqrt(r0 + unit(rng) * (r1 - r0));
    const double theta = 2.0 * std::numbers::pi * unit(rng);
    p = {d * std::cos(theta), d * std::sin(theta)};
  }
  return out;
}

inline ChannelSample generate_sample(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  ChannelSample s;
  auto positions = drop_users(config, rng);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  s.h.reserve(config.n_u);
  for (auto& p : positions) {
    p = {to_f32(p.x), to_f32(p.y)};
    const double d = std::clamp(p.distance(), config.d_min, config.radius);
    const double amp = std::sqrt(config.pathloss_gain(d));
    CVec h(config.n_t);
    for (auto& z : h) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      z = {to_f32(amp * re), to_f32(amp * im)};
    }
    // A float32 underflow to an all-zero row would break the sample
    // invariant; redraw (probability is astronomically small).
    while (!(h.squared_norm() > 0.0)) {
      for (auto& z : h) z = {to_f32(amp * gauss(rng)), to_f32(amp * gauss(rng))};
    }
    s.h.push_back(std::move(h));
  }
  s.sigma2.assign(config.n_u, 1.0);
  s.positions = std::move(positions);
  return s;
}

inline ChannelSample generate_sample_at(const ScenarioConfig& config, std::size_t index) {
  Rng rng(child_seed(config.seed, index));
  return generate_sample(config, rng);
}

inline Dataset generate_dataset(const ScenarioConfig& config, std::size_t count,
                                std::size_t threads = 1) {
  config.validate();
  Dataset ds{config, std::vector<ChannelSample>(count)};
  parallel_for(count, threads,
               [&](std::size_t i) { ds.samples[i] = generate_sample_at(config, i); });
  return ds;
}

inline CsiFeatureSequence encode_features(const ChannelSample& sample) {
  sample.validate();
  const std::size_t nt = sample.n_t();
  CsiFeatureSequence f{sample.n_u(), 2 * nt + 1, {}};
  f.rows.resize(f.n_u * f.n_f);
  for (std::size_t u = 0; u < f.n_u; ++u) {
    const CVec& h = sample.h[u];
    const double g = h.squared_norm();
    const double inv = 1.0 / std::sqrt(g);
    double* row = f.rows.data() + u * f.n_f;
    for (std::size_t n = 0; n < nt; ++n) {
      row[n] = h[n].real() * inv;
      row[nt + n] = h[n].imag() * inv;
    }
    row[2 * nt] = 10.0 * std::log10(g / sample.sigma2[u]);
  }
  return f;
}

struct SplitFractions {
  double train = 0.64;
  double val = 0.16;
  double test = 0.20;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Index-level split; the three sets partition [0, n).
inline std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                             SplitFractions fr,
                                                             std::uint64_t seed) {
  if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0))
    throw ConfigError("split fractions must all be positive");
  const double sum = fr.train + fr.val + fr.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError(detail::concat("split fractions sum to ", sum, ", expected 1"));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fr.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(
                                               std::llround(fr.val * static_cast<double>(n))));
  std::array<std::vector<std::size_t>, 3> out;
  out[0].assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out[1].assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out[2].assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

inline DatasetSplit split_dataset(const Dataset& ds, SplitFractions fr, std::uint64_t seed) {
  auto idx = split_indices(ds.size(), fr, seed);
  auto take = [&](const std::vector<std::size_t>& ids) {
    Dataset part{ds.config, {}};
    part.samples.reserve(ids.size());
    for (auto i : ids) part.samples.push_back(ds.samples[i]);
    return part;
  };
  return {take(idx[0]), take(idx[1]), take(idx[2])};
}

// ---------------------------------------------------------------------------
// .fbd format
//
//   offset  size  field
//        0     4  magic "FBDS"
//        4     4  u32 format version
//        8     4  u32 n_t
//       12     4  u32 n_u
//       16     8  u64 sample count
//       24     4  u32 flags (reserved, 0)
//       28     4  u32 reserved (0)
//   then per sample, all little-endian float32:
//     n_u * n_t complex entries (re, im interleaved), row u = h_u
//     n_u noise variances
//     n_u (x, y) positions
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDatasetMagic = "FBDS";
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 32;

inline std::vector<unsigned char> encode_dataset(const Dataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.config.n_t));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.config.n_u));
  w.put<std::uint64_t>(ds.samples.size());
  w.put<std::uint32_t>(0);
  w.put<std::uint32_t>(0);
  for (const auto& s : ds.samples) {
    for (const auto& row : s.h)
      for (const auto& z : row) {
        w.put<float>(static_cast<float>(z.real()));
        w.put<float>(static_cast<float>(z.imag()));
      }
    for (double v : s.sigma2) w.put<float>(static_cast<float>(v));
    for (std::size_t u = 0; u < s.n_u(); ++u) {
      const Position p = u < s.positions.size() ? s.positions[u] : Position{};
      w.put<float>(static_cast<float>(p.x));
      w.put<float>(static_cast<float>(p.y));
    }
  }
  return w.bytes();
}

// Decodes the sample payload; the scenario config comes from the sidecar
// (or the caller) and must agree with the header dimensions.
inline std::vector<ChannelSample> decode_samples(std::span<const unsigned char> bytes,
                                                 std::size_t* n_t_out = nullptr,
                                                 std::size_t* n_u_out = nullptr) {
  io::ByteReader r(bytes, "dataset");
  const std::string magic = r.get_bytes(4);
  if (magic != kDatasetMagic)
    throw FormatError(detail::concat("dataset: bad magic bytes, expected \"",
                                     kDatasetMagic, "\""));
  const auto version = r.get<std::uint32_t>();
  if (version > kDatasetVersion || version == 0)
    throw FormatError(detail::concat("dataset: file format version ", version,
                                     " is not supported (this build supports version ",
                                     kDatasetVersion, ")"));
  const auto nt = r.get<std::uint32_t>();
  const auto nu = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  r.skip(8);
  if (nt == 0 || nu == 0) throw FormatError("dataset: zero antenna or user count in header");
  const std::size_t per_sample = 4ull * (2ull * nu * nt + nu + 2ull * nu);
  if (count > r.remaining() / per_sample || r.remaining() != count * per_sample)
    throw FormatError(detail::concat("dataset: payload is ", r.remaining(),
                                     " bytes, header implies ", count, " samples of ",
                                     per_sample, " bytes"));
  std::vector<ChannelSample> samples(count);
  for (auto& s : samples) {
    s.h.assign(nu, CVec(nt));
    for (auto& row : s.h)
      for (auto& z : row) {
        const float re = r.get<float>();
        const float im = r.get<float>();
        z = {re, im};
      }
    s.sigma2.resize(nu);
    for (auto& v : s.sigma2) v = r.get<float>();
    s.positions.resize(nu);
    for (auto& p : s.positions) {
      const float x = r.get<float>();
      const float y = r.get<float>();
      p = {x, y};
    }
  }
  if (n_t_out) *n_t_out = nt;
  if (n_u_out) *n_u_out = nu;
  return samples;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  io::write_file(path, bytes);
  const auto now = std::chrono::system_clock::now();
  nlohmann::json side{
      {"format", "fbd"},
      {"format_version", kDatasetVersion},
      {"config", ds.config},
      {"seed", ds.config.seed},
      {"sample_count", ds.samples.size()},
      {"content_hash", io::content_hash(bytes)},
      {"created_unix",
       std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()}};
  io::write_text(sidecar_path(path), side.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::size_t nt = 0, nu = 0;
  Dataset ds;
  ds.samples = decode_samples(bytes, &nt, &nu);
  const auto side_path = sidecar_path(path);
  if (std::filesystem::exists(side_path)) {
    const auto text = io::read_file(side_path);
    try {
      const auto side = nlohmann::json::parse(text.begin(), text.end());
      ds.config = side.at("config").get<ScenarioConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(detail::concat("dataset sidecar '", side_path.string(),
                                       "': ", e.what()));
    }
  } else {
    ds.config.n_t = nt;
    ds.config.n_u = nu;
  }
  if (ds.config.n_t != nt || ds.config.n_u != nu)
    throw FormatError(detail::concat("dataset: sidecar says ", ds.config.n_u, "x",
                                     ds.config.n_t, ", binary header says ", nu, "x", nt));
  return ds;
}

}  // namespace fairbf
