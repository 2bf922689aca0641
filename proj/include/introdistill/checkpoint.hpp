#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "introdistill/network.hpp"

namespace introdistill {

// Where a checkpoint came from: training method, epoch, and the metrics at
// save time.
struct Provenance {
  std::string method = "none";
  std::size_t epoch = 0;
  std::map<std::string, double> metrics;
};

inline constexpr std::size_t kCheckpointVersion = 1;

// Container layout: a textual header (version line + one-line JSON document
// with the network spec and provenance), a length-prefixed little-endian
// 32-bit-float parameter blob, and a trailing content digest over everything
// before it. Loading verifies version, blob size against the spec, and the
// digest.
void save_checkpoint(const Network& net, const Provenance& prov,
                     const std::string& path);

struct LoadedCheckpoint {
  Network net;
  Provenance prov;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a 64-bit over a byte range; the checkpoint content digest.
std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);

}  // namespace introdistill
