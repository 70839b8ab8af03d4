#pragma once

// `.fbck` model checkpoint.
//
//   offset  size  field
//        0     4  magic "FBCK"
//        4     4  u32 format version
//        8     4  u32 n_f
//       12     4  u32 d_model
//       16     4  u32 n_att
//       20     4  u32 n_head
//       24     4  u32 n_t
//       28     4  u32 reserved (0)
//       32     8  u64 init_seed
//       40     8  u64 total parameter count
//   then, all little-endian float32: the input normalization shift (n_f)
//   and gain (n_f), followed by every parameter tensor in declaration
//   order. Training provenance lives in a JSON sidecar (<path>.json).

#include <filesystem>
#include <string_view>

#include "json.hpp"

#include "fairbf/autonet/model.hpp"
#include "fairbf/io.hpp"

namespace fairbf::autonet {

inline constexpr std::string_view kCheckpointMagic = "FBCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::vector<unsigned char> encode_checkpoint(const Model<T>& model) {
  const auto& c = model.config();
  io::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_f));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.d_model));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_att));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_head));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_t));
  w.put<std::uint32_t>(0);
  w.put<std::uint64_t>(c.init_seed);
  w.put<std::uint64_t>(model.parameter_count());
  for (T v : model.input_shift()) w.put<float>(static_cast<float>(v));
  for (T v : model.input_gain()) w.put<float>(static_cast<float>(v));
  for (const auto& p : model.parameters())
    for (T v : p.data()) w.put<float>(static_cast<float>(v));
  return w.bytes();
}

template <typename T>
Model<T> decode_checkpoint(std::span<const unsigned char> bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(4) != kCheckpointMagic)
    throw FormatError(fairbf::detail::concat("checkpoint: bad magic bytes, expected \"",
                                             kCheckpointMagic, "\""));
  const auto version = r.get<std::uint32_t>();
  if (version == 0 || version > kCheckpointVersion)
    throw FormatError(fairbf::detail::concat("checkpoint: file format version ", version,
                                             " is not supported (this build supports version ",
                                             kCheckpointVersion, ")"));
  ModelConfig c;
  c.n_f = r.get<std::uint32_t>();
  c.d_model = r.get<std::uint32_t>();
  c.n_att = r.get<std::uint32_t>();
  c.n_head = r.get<std::uint32_t>();
  c.n_t = r.get<std::uint32_t>();
  r.skip(4);
  c.init_seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model header: ") + e.what());
  }
  if (count != count_params(c))
    throw FormatError(fairbf::detail::concat("checkpoint: header declares ", count,
                                             " parameters, architecture implies ",
                                             count_params(c)));
  const std::size_t expected = 4 * (2 * c.n_f + count);
  if (r.remaining() != expected)
    throw FormatError(fairbf::detail::concat("checkpoint: payload is ", r.remaining(),
                                             " bytes, expected ", expected));
  Model<T> model(c);
  std::vector<T> shift(c.n_f), gain(c.n_f);
  for (auto& v : shift) v = static_cast<T>(r.get<float>());
  for (auto& v : gain) v = static_cast<T>(r.get<float>());
  model.set_input_normalization(std::move(shift), std::move(gain));
  for (auto& p : model.parameters())
    for (auto& v : p.data()) v = static_cast<T>(r.get<float>());
  return model;
}

template <typename T>
void save_model(const Model<T>& model, const std::filesystem::path& path,
                const nlohmann::json& provenance) {
  io::write_file(path, encode_checkpoint(model));
  auto side = path;
  side += ".json";
  nlohmann::json j = provenance;
  j["format"] = "fbck";
  j["format_version"] = kCheckpointVersion;
  j["model"] = model.config();
  io::write_text(side, j.dump(2) + "\n");
}

template <typename T>
Model<T> load_model(const std::filesystem::path& path, nlohmann::json* provenance = nullptr) {
  auto model = decode_checkpoint<T>(io::read_file(path));
  if (provenance) {
    auto side = path;
    side += ".json";
    if (std::filesystem::exists(side)) {
      const auto text = io::read_file(side);
      try {
        *provenance = nlohmann::json::parse(text.begin(), text.end());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(fairbf::detail::concat("checkpoint sidecar: ", e.what()));
      }
    } else {
      *provenance = nlohmann::json::object();
    }
  }
  return model;
}

}  // namespace fairbf::autonet
