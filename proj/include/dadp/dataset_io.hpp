#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "dadp/common.hpp"
#include "dadp/trajectory.hpp"

// Dataset container format
// ------------------------
// Self-describing, little-endian, 64-bit float payloads:
//
//   magic    8 bytes  "DADPDS01"
//   version  u32
//   D_s      u32      state dimension (shared by all records)
//   D_a      u32      action dimension
//   dt       f64      control timestep (shared)
//   count    u64      number of trajectory records
//   norm     f64[2*D_s + 2*D_a]   state mean/scale, action mean/scale
//   records, each:
//     length u64      byte length of the record body that follows
//     body:  delta f64, n u64, task string (u32 len + bytes),
//            seed u64, episode u64,
//            states f64[(n+1)*D_s], actions f64[n*D_a]
//
// Floats are stored as raw IEEE-754 bit patterns, so save/load round-trips
// are bit-exact.

namespace dadp {

inline constexpr char kDatasetMagic[8] = {'D', 'A', 'D', 'P', 'D', 'S', '0', '1'};

namespace detail {

inline std::size_t record_body_size(const Trajectory& t) {
  return 8                                  // delta
         + 8                                // n
         + 4 + t.meta.task.size()           // task string
         + 8 + 8                            // seed, episode
         + (t.states.size() * t.state_dim() + t.n() * t.action_dim()) * 8;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
  // all records must agree with the header
  std::size_t sd = 0, ad = 0;
  double dt = 0.0;
  if (!ds.entries.empty()) {
    sd = ds.entries.front().traj.state_dim();
    ad = ds.entries.front().traj.action_dim();
    dt = ds.entries.front().traj.dt;
  }
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const Trajectory& t = ds.entries[i].traj;
    if (auto issue = validate(t))
      throw data_error("save_dataset: record " + std::to_string(i) + ": " + issue->what);
    if (t.state_dim() != sd || t.action_dim() != ad)
      throw data_error("save_dataset: dimension inconsistency at record " + std::to_string(i));
    if (t.dt != dt)
      throw data_error("save_dataset: dt mismatch at record " + std::to_string(i));
  }
  if (!ds.norm.state_mean.empty() && ds.norm.state_mean.size() != sd)
    throw data_error("save_dataset: normalization state dimension mismatch");
  if (!ds.norm.action_mean.empty() && ds.norm.action_mean.size() != ad)
    throw data_error("save_dataset: normalization action dimension mismatch");

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw data_error("save_dataset: cannot open '" + path + "' for writing");

  os.write(kDatasetMagic, 8);
  io::write_u32(os, ds.format_version);
  io::write_u32(os, std::uint32_t(sd));
  io::write_u32(os, std::uint32_t(ad));
  io::write_f64(os, dt);
  io::write_u64(os, ds.entries.size());

  auto write_norm_dim = [&](const std::vector<double>& mean, const std::vector<double>& scale,
                            std::size_t dim) {
    for (std::size_t d = 0; d < dim; ++d) io::write_f64(os, d < mean.size() ? mean[d] : 0.0);
    for (std::size_t d = 0; d < dim; ++d) io::write_f64(os, d < scale.size() ? scale[d] : 1.0);
  };
  write_norm_dim(ds.norm.state_mean, ds.norm.state_scale, sd);
  write_norm_dim(ds.norm.action_mean, ds.norm.action_scale, ad);

  for (const auto& e : ds.entries) {
    const Trajectory& t = e.traj;
    io::write_u64(os, detail::record_body_size(t));
    io::write_f64(os, e.delta);
    io::write_u64(os, t.n());
    io::write_string(os, t.meta.task);
    io::write_u64(os, t.meta.seed);
    io::write_u64(os, t.meta.episode);
    for (const auto& s : t.states)
      for (double v : s) io::write_f64(os, v);
    for (const auto& a : t.actions)
      for (double v : a) io::write_f64(os, v);
  }
  os.flush();
  if (!os) throw data_error("save_dataset: write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_dataset: cannot open '" + path + "'");

  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw data_error("load_dataset: '" + path + "' is not a dataset file");

  Dataset ds;
  ds.format_version = io::read_u32(is, "header");
  if (ds.format_version != kDatasetFormatVersion)
    throw data_error("load_dataset: unsupported version " + std::to_string(ds.format_version));

  const std::size_t sd = io::read_u32(is, "header");
  const std::size_t ad = io::read_u32(is, "header");
  const double dt = io::read_f64(is, "header");
  const std::uint64_t count = io::read_u64(is, "header");

  auto read_norm_dim = [&](std::vector<double>& mean, std::vector<double>& scale, std::size_t dim) {
    mean.resize(dim);
    scale.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) mean[d] = io::read_f64(is, "normalization");
    for (std::size_t d = 0; d < dim; ++d) scale[d] = io::read_f64(is, "normalization");
  };
  read_norm_dim(ds.norm.state_mean, ds.norm.state_scale, sd);
  read_norm_dim(ds.norm.action_mean, ds.norm.action_scale, ad);

  ds.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string where = "record " + std::to_string(i);
    const std::uint64_t body_len = io::read_u64(is, where);

    Dataset::Entry e;
    e.delta = io::read_f64(is, where);
    const std::uint64_t n = io::read_u64(is, where);
    e.traj.dt = dt;
    e.traj.meta.task = io::read_string(is, where);
    e.traj.meta.seed = io::read_u64(is, where);
    e.traj.meta.episode = io::read_u64(is, where);

    e.traj.states.assign(n + 1, std::vector<double>(sd));
    for (auto& s : e.traj.states)
      for (double& v : s) v = io::read_f64(is, where);
    e.traj.actions.assign(n, std::vector<double>(ad));
    for (auto& a : e.traj.actions)
      for (double& v : a) v = io::read_f64(is, where);

    if (detail::record_body_size(e.traj) != body_len)
      throw data_error("load_dataset: dimension inconsistency at " + where);
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

/// Canonical dataset layout: <root>/<task>/<delta-tag>/<seed>.traj
inline std::string delta_tag(double delta) { return "d" + format_compact(delta); }

inline std::string dataset_path(const std::string& root, const std::string& task, double delta,
                                std::uint64_t seed) {
  return (std::filesystem::path(root) / task / delta_tag(delta) /
          (std::to_string(seed) + ".traj"))
      .string();
}

}  // namespace dadp
