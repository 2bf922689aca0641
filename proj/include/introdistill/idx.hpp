#pragma once

#include <string>
#include <vector>

#include "introdistill/dataset.hpp"
#include "introdistill/ndarray.hpp"

namespace introdistill {

// One IDX image/label file pair: u8 pixels scaled into [0,1].
struct IdxData {
  NdArray x;  // [n, rows*cols]
  std::vector<int> y;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Parses the big-endian IDX pair (magic 0x00000803 for images, 0x00000801 for
// labels). Wrong magic, truncated payloads and image/label count mismatches
// are reported as distinct errors.
IdxData load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Dataset handle from IDX pairs; the test pair may be omitted (empty paths).
DatasetHandle dataset_from_idx(const std::string& train_images,
                               const std::string& train_labels,
                               const std::string& test_images,
                               const std::string& test_labels);

}  // namespace introdistill
