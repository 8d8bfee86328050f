#pragma once

// Checkpoint file: "BDLFCKPT", u32 version, u64 header length, a JSON header
// (config, RNG state, tensor table), then every tensor as raw f64
// little-endian in table order.

#include "bdlf/config.hpp"
#include "bdlf/io.hpp"
#include "bdlf/objective.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace bdlf {

inline constexpr char kCheckpointMagic[8] = {'B', 'D', 'L', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to evaluate or resume a run, stored in double precision.
struct Checkpoint {
  ExperimentConfig config;
  int epochs_done = 0;
  int global_step = 0;
  std::string rng_state;
  std::map<std::string, Matrix<double>> params;
  std::map<std::string, Matrix<double>> ema;
  std::map<std::string, Matrix<double>> velocity;
};

namespace detail {

template <class T>
std::map<std::string, Matrix<double>> to_f64(const std::map<std::string, Matrix<T>>& m) {
  std::map<std::string, Matrix<double>> out;
  for (const auto& [k, v] : m) out.emplace(k, v.template cast<double>());
  return out;
}

template <class T>
std::map<std::string, Matrix<T>> from_f64(const std::map<std::string, Matrix<double>>& m) {
  std::map<std::string, Matrix<T>> out;
  for (const auto& [k, v] : m) out.emplace(k, v.template cast<T>());
  return out;
}

}  // namespace detail

template <class T>
Checkpoint make_checkpoint(const ExperimentConfig& config, const BdlfModel<T>& model,
                           const Trainer<T>& trainer, int epochs_done) {
  Checkpoint c;
  c.config = config;
  c.epochs_done = epochs_done;
  c.global_step = trainer.global_step();
  std::ostringstream rs;
  rs << trainer.rng();
  c.rng_state = rs.str();
  c.params = detail::to_f64(model.params().snapshot());
  c.ema = detail::to_f64(trainer.ema().shadow());
  c.velocity = detail::to_f64(trainer.velocity());
  return c;
}

/// Restores parameters, EMA shadow, momentum and sampler state.
template <class T>
void restore_checkpoint(const Checkpoint& c, BdlfModel<T>& model, Trainer<T>* trainer = nullptr) {
  model.params().load(detail::from_f64<T>(c.params));
  if (trainer == nullptr) return;
  trainer->ema().shadow() = detail::from_f64<T>(c.ema);
  trainer->velocity() = detail::from_f64<T>(c.velocity);
  std::istringstream rs(c.rng_state);
  rs >> trainer->rng();
  if (rs.fail()) throw io::FormatError("checkpoint: unreadable RNG state");
  trainer->set_global_step(c.global_step);
}

inline void save_checkpoint(const io::fs::path& path, const Checkpoint& c) {
  Json table = Json::array();
  std::vector<const Matrix<double>*> order;
  std::uint64_t offset = 0;
  for (const auto& [group, tensors] :
       {std::pair<const char*, const std::map<std::string, Matrix<double>>*>{"params", &c.params},
        {"ema", &c.ema},
        {"velocity", &c.velocity}}) {
    for (const auto& [name, m] : *tensors) {
      table.push_back(Json{{"group", group}, {"name", name}, {"rows", m.rows()}, {"cols", m.cols()},
                           {"offset", offset}});
      offset += static_cast<std::uint64_t>(m.size());
      order.push_back(&m);
    }
  }
  const Json header{{"config", c.config},
                    {"epochs_done", c.epochs_done},
                    {"global_step", c.global_step},
                    {"rng_state", c.rng_state},
                    {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) io::fs::create_directories(path.parent_path());
  const auto tmp = io::fs::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint32_t version = kCheckpointVersion;
    io::write_le(os, std::span<const std::uint32_t>(&version, 1));
    const std::uint64_t len = text.size();
    io::write_le(os, std::span<const std::uint64_t>(&len, 1));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* m : order) {
      io::write_le(os, std::span<const double>(m->data(), static_cast<std::size_t>(m->size())));
    }
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  io::fs::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const io::fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("missing checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + sizeof(magic), kCheckpointMagic)) {
    throw io::FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = io::read_le<std::uint32_t>(is, 1).at(0);
  if (version != kCheckpointVersion) {
    throw io::FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = io::read_le<std::uint64_t>(is, 1).at(0);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw io::FormatError(path.string() + ": truncated header");

  Json header;
  try {
    header = Json::parse(text);
  } catch (const std::exception& e) {
    throw io::FormatError(path.string() + ": corrupt header: " + e.what());
  }
  Checkpoint c;
  c.config = header.at("config").get<ExperimentConfig>();
  c.epochs_done = header.at("epochs_done").get<int>();
  c.global_step = header.at("global_step").get<int>();
  c.rng_state = header.at("rng_state").get<std::string>();
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    auto v = io::read_le<double>(is, static_cast<std::size_t>(rows * cols));
    Matrix<double> m = Eigen::Map<Matrix<double>>(v.data(), rows, cols);
    const auto group = t.at("group").get<std::string>();
    auto& dst = group == "params" ? c.params : group == "ema" ? c.ema : c.velocity;
    dst.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw io::FormatError(path.string() + ": trailing bytes after tensor data");
  }
  return c;
}

}  // namespace bdlf
