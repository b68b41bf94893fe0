#pragma once

// Versioned binary checkpoint: model/train config snapshot, iteration
// counter, flat parameters and ADAM moments. Doubles are stored in their
// native representation, so save -> load -> continue is bit-identical to an
// uninterrupted run.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dggn/model.hpp"
#include "dggn/trainer.hpp"

namespace dggn {

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::size_t iteration = 0;
  std::vector<double> params;
  AdamState moments;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'D', 'G', 'G', 'N', 'C', 'K', 'P', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f64s(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
inline std::vector<double> read_f64s(std::istream& in) {
  std::vector<double> v(read_u64(in));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  using namespace detail;
  out.write(kCheckpointMagic, 8);
  const ModelConfig& mc = ckpt.model_config;
  write_u64(out, static_cast<std::uint64_t>(mc.mode));
  write_u64(out, mc.use_global ? 1 : 0);
  write_u64(out, mc.weighted_pool ? 1 : 0);
  write_u64(out, mc.through_memory ? 1 : 0);
  write_u64(out, mc.hidden_dim);
  write_u64(out, mc.seed);
  const TrainConfig& tc = ckpt.train_config;
  write_f64(out, tc.lr0);
  write_f64(out, tc.lr_decay);
  write_u64(out, tc.decay_interval);
  write_u64(out, tc.batch);
  write_u64(out, tc.iterations);
  write_f64(out, tc.adam_beta1);
  write_f64(out, tc.adam_beta2);
  write_f64(out, tc.adam_eps);
  write_f64(out, tc.loss_alpha);
  write_f64(out, tc.loss_beta);
  write_f64(out, tc.loss_gamma);
  write_u64(out, tc.sampling.count);
  write_f64(out, tc.sampling.positive_fraction);
  write_f64(out, tc.detect_score_thresh);
  write_f64(out, tc.detect_nms_iou);
  write_u64(out, tc.log_every);
  write_u64(out, tc.seed);
  write_u64(out, ckpt.iteration);
  write_f64s(out, ckpt.params);
  write_f64s(out, ckpt.moments.m);
  write_f64s(out, ckpt.moments.v);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path.string() + "'");
  using namespace detail;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint file");
  Checkpoint ckpt;
  ModelConfig& mc = ckpt.model_config;
  mc.mode = static_cast<Mode>(read_u64(in));
  mc.use_global = read_u64(in) != 0;
  mc.weighted_pool = read_u64(in) != 0;
  mc.through_memory = read_u64(in) != 0;
  mc.hidden_dim = read_u64(in);
  mc.seed = read_u64(in);
  TrainConfig& tc = ckpt.train_config;
  tc.lr0 = read_f64(in);
  tc.lr_decay = read_f64(in);
  tc.decay_interval = read_u64(in);
  tc.batch = read_u64(in);
  tc.iterations = read_u64(in);
  tc.adam_beta1 = read_f64(in);
  tc.adam_beta2 = read_f64(in);
  tc.adam_eps = read_f64(in);
  tc.loss_alpha = read_f64(in);
  tc.loss_beta = read_f64(in);
  tc.loss_gamma = read_f64(in);
  tc.sampling.count = read_u64(in);
  tc.sampling.positive_fraction = read_f64(in);
  tc.detect_score_thresh = read_f64(in);
  tc.detect_nms_iou = read_f64(in);
  tc.log_every = read_u64(in);
  tc.seed = read_u64(in);
  ckpt.iteration = read_u64(in);
  ckpt.params = read_f64s(in);
  ckpt.moments.m = read_f64s(in);
  ckpt.moments.v = read_f64s(in);
  if (!in) throw std::runtime_error("truncated checkpoint '" + path.string() + "'");
  return ckpt;
}

inline Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& train_config) {
  Checkpoint ckpt;
  ckpt.model_config = result.model.config;
  ckpt.train_config = train_config;
  ckpt.iteration = result.iterations_done;
  ckpt.params = result.model.flat_parameters();
  ckpt.moments = result.moments;
  return ckpt;
}

inline Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model = Model::init(ckpt.model_config);
  model.set_flat_parameters(ckpt.params);
  return model;
}

}  // namespace dggn
