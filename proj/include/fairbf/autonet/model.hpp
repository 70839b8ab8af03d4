#pragma once

// Set-transformer beamforming network: per-user affine embedding, pre-norm
// attention encoder blocks over the user axis, shared affine regression
// head producing 2*N_t real outputs per user (real parts, then imaginary
// parts). No positional encoding, so the map is permutation-equivariant in
// the users.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"

#include "fairbf/autonet/ops.hpp"
#include "fairbf/autonet/tensor.hpp"
#include "fairbf/complex_core.hpp"
#include "fairbf/error.hpp"
#include "fairbf/metrics.hpp"

namespace fairbf::autonet {

struct ModelConfig {
  std::size_t n_f = 33;
  std::size_t d_model = 132;
  std::size_t n_att = 8;
  std::size_t n_head = 4;
  std::size_t n_t = 16;
  std::uint64_t init_seed = 7;

  // d_model = emb_factor * n_f, n_f = 2 n_t + 1.
  static ModelConfig for_antennas(std::size_t n_t, std::size_t emb_factor = 4,
                                  std::size_t blocks = 8, std::size_t heads = 4,
                                  std::uint64_t seed = 7) {
    const std::size_t nf = 2 * n_t + 1;
    return {nf, emb_factor * nf, blocks, heads, n_t, seed};
  }

  std::size_t out_dim() const noexcept { return 2 * n_t; }

  void validate() const {
    if (n_f == 0 || d_model == 0 || n_t == 0 || n_head == 0)
      throw ConfigError("model: dimensions must be positive");
    if (d_model % n_head != 0)
      throw ConfigError(fairbf::detail::concat("model: d_model ", d_model,
                                               " not divisible by ", n_head, " heads"));
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_f", c.n_f},         {"d_model", c.d_model}, {"n_att", c.n_att},
                     {"n_head", c.n_head},   {"n_t", c.n_t},         {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("n_f").get_to(c.n_f);
  j.at("d_model").get_to(c.d_model);
  j.at("n_att").get_to(c.n_att);
  j.at("n_head").get_to(c.n_head);
  j.at("n_t").get_to(c.n_t);
  j.at("init_seed").get_to(c.init_seed);
}

inline std::size_t affine_params(std::size_t in, std::size_t out) { return in * out + out; }

inline std::size_t block_params(std::size_t d) {
  return 2 * (2 * d)                 // two layer norms
         + 4 * affine_params(d, d)   // query, key, value, output
         + affine_params(d, d);      // position-wise layer
}

inline std::size_t count_params(const ModelConfig& c) {
  return affine_params(c.n_f, c.d_model) + c.n_att * block_params(c.d_model) +
         affine_params(c.d_model, c.out_dim());
}

template <typename T>
struct Affine {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [out]
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
struct EncoderBlock {
  LayerNormParams<T> ln_attn;
  Affine<T> query, key, value, proj;
  LayerNormParams<T> ln_ff;
  Affine<T> ff;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.init_seed);
    embed_ = make_affine(config_.n_f, config_.d_model, rng);
    blocks_.reserve(config_.n_att);
    for (std::size_t i = 0; i < config_.n_att; ++i) {
      EncoderBlock<T> blk;
      const std::size_t d = config_.d_model;
      blk.ln_attn = make_norm(d);
      blk.query = make_affine(d, d, rng);
      blk.key = make_affine(d, d, rng);
      blk.value = make_affine(d, d, rng);
      blk.proj = make_affine(d, d, rng);
      blk.ln_ff = make_norm(d);
      blk.ff = make_affine(d, d, rng);
      blocks_.push_back(std::move(blk));
    }
    head_ = make_affine(config_.d_model, config_.out_dim(), rng);
    input_shift_.assign(config_.n_f, T(0));
    input_gain_.assign(config_.n_f, T(1));
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // Independent copy with the same parameter values.
  Model clone() const {
    Model m(config_);
    m.load_values(snapshot());
    m.set_input_normalization(input_shift_, input_gain_);
    return m;
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> m(config_);
    auto src = parameters();
    auto dst = m.parameters();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t j = 0; j < src[i].numel(); ++j)
        dst[i].data()[j] = static_cast<U>(src[i].data()[j]);
    m.set_input_normalization(std::vector<U>(input_shift_.begin(), input_shift_.end()),
                              std::vector<U>(input_gain_.begin(), input_gain_.end()));
    return m;
  }

  const ModelConfig& config() const noexcept { return config_; }

  // Fixed (non-trainable) per-feature input standardization,
  // x' = (x - shift) * gain, applied before the embedding.
  void set_input_normalization(std::vector<T> shift, std::vector<T> gain) {
    if (shift.size() != config_.n_f || gain.size() != config_.n_f)
      throw DimensionError("model: input normalization must have n_f entries");
    input_shift_ = std::move(shift);
    input_gain_ = std::move(gain);
  }
  const std::vector<T>& input_shift() const noexcept { return input_shift_; }
  const std::vector<T>& input_gain() const noexcept { return input_gain_; }

  // Parameters in declaration order: embed, blocks (ln_attn, query, key,
  // value, proj, ln_ff, ff), head. Handles share storage with the model.
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> p;
    auto push_affine = [&](const Affine<T>& a) {
      p.push_back(a.w);
      p.push_back(a.b);
    };
    auto push_norm = [&](const LayerNormParams<T>& n) {
      p.push_back(n.gamma);
      p.push_back(n.beta);
    };
    push_affine(embed_);
    for (const auto& blk : blocks_) {
      push_norm(blk.ln_attn);
      push_affine(blk.query);
      push_affine(blk.key);
      push_affine(blk.value);
      push_affine(blk.proj);
      push_norm(blk.ln_ff);
      push_affine(blk.ff);
    }
    push_affine(head_);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : parameters()) n += t.numel();
    return n;
  }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    for (const auto& t : parameters()) out.emplace_back(t.data().begin(), t.data().end());
    return out;
  }

  void load_values(const std::vector<std::vector<T>>& values) {
    auto params = parameters();
    if (values.size() != params.size())
      throw DimensionError("model: parameter tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (values[i].size() != params[i].numel())
        throw DimensionError(fairbf::detail::concat("model: parameter ", i, " has ",
                                                    values[i].size(), " values, expected ",
                                                    params[i].numel()));
      std::copy(values[i].begin(), values[i].end(), params[i].data().begin());
    }
  }

  void zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
  }

  EncoderBlock<T>& block(std::size_t i) { return blocks_.at(i); }
  const EncoderBlock<T>& block(std::size_t i) const { return blocks_.at(i); }
  Affine<T>& embed() { return embed_; }
  Affine<T>& head() { return head_; }

  // x + MHA(LN(x)) over groups of `tokens` rows.
  Tensor<T> attention(const Tensor<T>& x, const EncoderBlock<T>& blk,
                      std::size_t tokens) const {
    const auto a = layer_norm(x, blk.ln_attn.gamma, blk.ln_attn.beta);
    const auto q = linear(a, blk.query.w, blk.query.b);
    const auto k = linear(a, blk.key.w, blk.key.b);
    const auto v = linear(a, blk.value.w, blk.value.b);
    const auto c = grouped_attention(q, k, v, tokens, config_.n_head);
    return add(x, linear(c, blk.proj.w, blk.proj.b));
  }

  Tensor<T> encoder_block(const Tensor<T>& x, const EncoderBlock<T>& blk,
                          std::size_t tokens) const {
    const auto h = attention(x, blk, tokens);
    const auto f = layer_norm(h, blk.ln_ff.gamma, blk.ln_ff.beta);
    return add(h, relu(linear(f, blk.ff.w, blk.ff.b)));
  }

  // batch [N_b, N_u, n_f] -> raw quasi-beamformers [N_b, N_u, 2 n_t].
  Tensor<T> forward(const Tensor<T>& batch) const {
    if (batch.rank() != 3 || batch.dim(2) != config_.n_f)
      throw DimensionError(fairbf::detail::concat(
          "forward: expected [N_b, N_u, ", config_.n_f, "] input"));
    const std::size_t tokens = batch.dim(1);
    const auto x = standardize_columns(batch, std::span<const T>(input_shift_),
                                       std::span<const T>(input_gain_));
    auto h = linear(x, embed_.w, embed_.b);
    for (const auto& blk : blocks_) h = encoder_block(h, blk, tokens);
    return linear(h, head_.w, head_.b);
  }

 private:
  static Affine<T> make_affine(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Affine<T> a{Tensor<T>({in, out}, true), Tensor<T>({out}, true)};
    for (auto& v : a.w.data()) v = static_cast<T>(dist(rng));
    for (auto& v : a.b.data()) v = static_cast<T>(dist(rng));
    return a;
  }

  static LayerNormParams<T> make_norm(std::size_t d) {
    LayerNormParams<T> n{Tensor<T>({d}, true), Tensor<T>({d}, true)};
    std::fill(n.gamma.data().begin(), n.gamma.data().end(), T(1));
    return n;
  }

  ModelConfig config_;
  Affine<T> embed_;
  std::vector<EncoderBlock<T>> blocks_;
  Affine<T> head_;
  std::vector<T> input_shift_;
  std::vector<T> input_gain_;
};

// Reinterprets one user's raw output row [re_1..re_nt, im_1..im_nt] as a
// complex direction and normalizes it. Rows with norm < 1e-12 fall back to
// e_1 and bump *dead_rows.
template <typename T>
CVec normalize_row(std::span<const T> raw, std::size_t n_t, std::size_t* dead_rows = nullptr) {
  if (raw.size() != 2 * n_t) throw DimensionError("normalize_row: expected 2*n_t entries");
  double s = 0.0;
  for (T v : raw) s += static_cast<double>(v) * static_cast<double>(v);
  const double nrm = std::sqrt(s);
  CVec f(n_t);
  if (!(nrm >= 1e-12)) {
    f[0] = 1.0;
    if (dead_rows) ++*dead_rows;
    return f;
  }
  for (std::size_t n = 0; n < n_t; ++n)
    f[n] = {static_cast<double>(raw[n]) / nrm, static_cast<double>(raw[n_t + n]) / nrm};
  return f;
}

// raw [N_u, 2 n_t] block of one batch element -> unit-norm beamformers.
template <typename T>
BeamformerSet normalize_columns(std::span<const T> raw, std::size_t n_u, std::size_t n_t,
                                double power_per_user, std::size_t* dead_rows = nullptr) {
  if (raw.size() != n_u * 2 * n_t)
    throw DimensionError("normalize_columns: raw block size mismatch");
  BeamformerSet bf{{}, power_per_user};
  bf.f_tilde.reserve(n_u);
  for (std::size_t u = 0; u < n_u; ++u)
    bf.f_tilde.push_back(normalize_row(raw.subspan(u * 2 * n_t, 2 * n_t), n_t, dead_rows));
  return bf;
}

}  // namespace fairbf::autonet
