#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stvnn/metrics.hpp"
#include "stvnn/online.hpp"

namespace stvnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume a streaming network model.
struct ModelCheckpoint {
  std::string config_text;
  NetworkParams params;
  CovarianceState covariance;
  Standardizer standardizer;
  OnlineOptions options;
  std::deque<Vector> history;
  std::deque<PendingForecast> pending;
  std::uint64_t steps = 0;
};

// Layout: "STVNNCKP", u32 version, u64 config hash, u32 section count, then
// sections (4-byte tag, u64 length, payload), then u64 FNV-1a of all
// preceding bytes. Integers and doubles are little-endian.
std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

ModelCheckpoint snapshot(const NetworkForecaster& model, const Standardizer& standardizer,
                         const std::string& config_text);
NetworkForecaster restore_forecaster(const ModelCheckpoint& ckpt);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace stvnn
