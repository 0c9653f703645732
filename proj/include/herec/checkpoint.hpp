#pragma once

// Binary checkpoint (little-endian) plus a JSON sidecar with run metadata.
//
// Layout: "HERECKP\0" | u32 version | u32 layers | u64 n | u64 users |
// u64 items | f64 kappa | (users + items) x (n + 1) f64 base embeddings |
// u64 in | u64 hidden | u64 out | adapter params f64.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "herec/error.hpp"
#include "herec/model.hpp"

namespace herec {

inline constexpr std::array<char, 8> kCheckpointMagic{'H', 'E', 'R', 'E', 'C', 'K', 'P', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  std::string data_path;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_recall = 0.0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

/// Learned parameters: base embeddings h0 and the semantic adapter. Final
/// embeddings are recomputed by message passing over the training graph.
struct Checkpoint {
  std::size_t layers = 2;
  EmbeddingTable h0;
  Adapter adapter;
  CheckpointMeta meta;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("checkpoint: truncated file");
  return v;
}

inline void put_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& is, std::span<double> v) {
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
    throw FormatError("checkpoint: truncated file");
  }
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.layers));
  detail::put<std::uint64_t>(os, c.h0.dim());
  detail::put<std::uint64_t>(os, c.h0.user_count());
  detail::put<std::uint64_t>(os, c.h0.item_count());
  detail::put<double>(os, c.h0.kappa());
  detail::put_doubles(os, c.h0.data());
  detail::put<std::uint64_t>(os, c.adapter.in_dim);
  detail::put<std::uint64_t>(os, c.adapter.hidden);
  detail::put<std::uint64_t>(os, c.adapter.out_dim);
  detail::put_doubles(os, c.adapter.params);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  c.layers = detail::get<std::uint32_t>(is);
  const auto n = detail::get<std::uint64_t>(is);
  const auto users = detail::get<std::uint64_t>(is);
  const auto items = detail::get<std::uint64_t>(is);
  const auto kappa = detail::get<double>(is);
  if (n < 1 || !(kappa > 0.0)) throw FormatError("checkpoint: invalid header");
  c.h0 = EmbeddingTable(users, items, n, kappa);
  detail::get_doubles(is, c.h0.data());
  const auto in = detail::get<std::uint64_t>(is);
  const auto hid = detail::get<std::uint64_t>(is);
  const auto out = detail::get<std::uint64_t>(is);
  c.adapter = Adapter{in, hid, out, std::vector<double>(Adapter::param_count(in, hid, out))};
  detail::get_doubles(is, c.adapter.params);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

inline nlohmann::ordered_json meta_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["layers"] = c.layers;
  j["dim"] = c.h0.dim();
  j["user_count"] = c.h0.user_count();
  j["item_count"] = c.h0.item_count();
  j["seed"] = c.meta.seed;
  j["split_ratio"] = c.meta.split_ratio;
  j["data_path"] = c.meta.data_path;
  j["epochs_run"] = c.meta.epochs_run;
  j["best_epoch"] = c.meta.best_epoch;
  j["best_val_recall"] = c.meta.best_val_recall;
  j["config"] = c.meta.config;
  return j;
}

inline void apply_meta_json(const nlohmann::ordered_json& j, Checkpoint& c) {
  if (j.value("layers", c.layers) != c.layers || j.value("dim", c.h0.dim()) != c.h0.dim()) {
    throw FormatError("checkpoint sidecar does not match binary");
  }
  c.meta.seed = j.value("seed", std::uint64_t{0});
  c.meta.split_ratio = j.value("split_ratio", 0.8);
  c.meta.data_path = j.value("data_path", std::string{});
  c.meta.epochs_run = j.value("epochs_run", std::size_t{0});
  c.meta.best_epoch = j.value("best_epoch", std::size_t{0});
  c.meta.best_val_recall = j.value("best_val_recall", 0.0);
  if (j.contains("config")) c.meta.config = j.at("config");
}

inline std::string sidecar_path(const std::string& path) { return path + ".json"; }

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  write_checkpoint(os, c);
  std::ofstream js(sidecar_path(path), std::ios::trunc);
  if (!js) throw Error("cannot write " + sidecar_path(path));
  js << meta_to_json(c).dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  auto c = read_checkpoint(is);
  std::ifstream js(sidecar_path(path));
  if (js) {
    try {
      apply_meta_json(nlohmann::ordered_json::parse(js), c);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint sidecar: ") + e.what());
    }
  }
  return c;
}

}  // namespace herec
