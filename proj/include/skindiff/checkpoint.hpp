#pragma once

// Checkpoint byte layout (all integers and floats little-endian):
//
//   offset 0   8 bytes   magic "SKDFCKPT"
//          8   u32       schema version (kCheckpointVersion)
//         12   u32       header length L
//         16   L bytes   UTF-8 JSON header:
//                          T, beta_start, beta_end, layer_dims, n_taxels, time_dim,
//                          activation, std_mean[4], std_dev[4], train_seed, param_count
//     16 + L   u64       parameter count P
//     24 + L   P x f64   parameters; per layer the weight matrix row-major (out x in),
//                        then the bias vector

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skindiff/ddpm.hpp"

namespace skindiff {

inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'D', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IncompatibleCheckpoint("incompatible checkpoint: truncated file");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const DiffusionModel& m) {
  const auto params = m.net.parameters();
  const auto& mean = m.standardization.mean;
  const auto& sd = m.standardization.stddev;
  const nlohmann::json header = {
      {"T", m.schedule.T},
      {"beta_start", m.schedule.beta_start},
      {"beta_end", m.schedule.beta_end},
      {"layer_dims", m.net.dims()},
      {"n_taxels", m.n_taxels},
      {"time_dim", m.time_dim},
      {"activation", "softplus"},
      {"std_mean", {mean[0], mean[1], mean[2], mean[3]}},
      {"std_dev", {sd[0], sd[1], sd[2], sd[3]}},
      {"train_seed", m.train_seed},
      {"param_count", params.size()},
  };
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  detail::put_le<std::uint64_t>(out, params.size());
  for (double p : params) detail::put_le<double>(out, p);
  return out;
}

inline DiffusionModel deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IncompatibleCheckpoint("incompatible checkpoint: bad magic");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw IncompatibleCheckpoint("incompatible checkpoint: schema version " + std::to_string(version) +
                                 ", expected " + std::to_string(kCheckpointVersion));
  const auto hlen = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw IncompatibleCheckpoint("incompatible checkpoint: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(std::string("incompatible checkpoint: bad header: ") + e.what());
  }
  pos += hlen;
  DiffusionModel m;
  try {
    m.schedule = make_schedule(h.at("T").get<int>(), h.at("beta_start").get<double>(), h.at("beta_end").get<double>());
    m.n_taxels = h.at("n_taxels").get<std::size_t>();
    m.time_dim = h.at("time_dim").get<std::size_t>();
    m.train_seed = h.at("train_seed").get<std::uint64_t>();
    if (h.at("activation").get<std::string>() != "softplus")
      throw IncompatibleCheckpoint("incompatible checkpoint: unsupported activation");
    const auto dims = h.at("layer_dims").get<std::vector<std::size_t>>();
    if (dims.size() != 5 || dims.front() != kPoseDim + m.n_taxels + m.time_dim || dims.back() != kPoseDim)
      throw IncompatibleCheckpoint("incompatible checkpoint: unexpected layer dims");
    m.net = Mlp(dims);
    const auto mean = h.at("std_mean").get<std::vector<double>>();
    const auto sd = h.at("std_dev").get<std::vector<double>>();
    if (mean.size() != 4 || sd.size() != 4)
      throw IncompatibleCheckpoint("incompatible checkpoint: bad standardization");
    m.standardization.mean = Vec4(mean[0], mean[1], mean[2], mean[3]);
    m.standardization.stddev = Vec4(sd[0], sd[1], sd[2], sd[3]);
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(std::string("incompatible checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IncompatibleCheckpoint(std::string("incompatible checkpoint: ") + e.what());
  }
  const auto count = detail::get_le<std::uint64_t>(bytes, pos);
  if (count != m.net.parameter_count())
    throw IncompatibleCheckpoint("incompatible checkpoint: parameter count does not match layer dims");
  std::vector<double> params(count);
  for (auto& p : params) p = detail::get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw IncompatibleCheckpoint("incompatible checkpoint: trailing bytes");
  m.net.set_parameters(params);
  return m;
}

}  // namespace skindiff
