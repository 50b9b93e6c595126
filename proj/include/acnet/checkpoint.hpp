#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "acnet/config.hpp"
#include "acnet/model.hpp"
#include "acnet/trainer.hpp"

namespace acnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One entry of the on-disk tensor table.
struct TensorRecord {
  std::uint8_t dtype = 1;  // 0 = f32, 1 = f64
  std::vector<std::uint32_t> extents;
  std::vector<std::uint8_t> payload;  // little-endian scalars, row-major
};

// Container layout: magic "ACNT", u32 LE version, u32 LE record count, then
// per record u16 name length + name bytes + u8 dtype + u8 rank + rank u32
// extents + payload, and finally a u32 CRC32 of everything after the magic.
std::vector<std::uint8_t> encode_container(
    const std::vector<std::pair<std::string, TensorRecord>>& records);
std::vector<std::pair<std::string, TensorRecord>> decode_container(
    const std::vector<std::uint8_t>& bytes);

// Writes config text, epoch counter, rng state, normalization constants, all
// model parameters, optional optimizer velocities, and the norm-layer running
// statistics as one container. Bookkeeping scalars travel as reserved
// `meta.*` records so the container stays a plain tensor table.
void save_checkpoint(const std::string& path, const RunConfig& cfg, ModelParams<double>& params,
                     const SgdState* opt, int epoch,
                     const std::array<std::uint64_t, 2>& rng_state, const NormStats& norm,
                     bool bn_ready);

struct LoadedCheckpoint {
  RunConfig cfg;
  ModelParams<double> params;
  SgdState opt;
  bool has_opt = false;
  int epoch = 0;
  std::array<std::uint64_t, 2> rng_state{};
  NormStats norm;
  bool bn_ready = false;
};

// Validates magic, version, record framing, and the trailing checksum, then
// rebuilds the model from the embedded config and checks every stored shape
// against it. Unknown or missing tensors are errors, not warnings.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace acnet
