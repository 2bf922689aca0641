#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "introdistill/ndarray.hpp"

namespace introdistill {

enum class SyntheticKind { GaussianBlobs, TwoMoons };

std::string synthetic_kind_name(SyntheticKind kind);
SyntheticKind synthetic_kind_from_name(const std::string& name);

// Parameters for the generators. GaussianBlobs has two constructions:
//  - margin mode (classes == 2, margin > 0): the two clusters are separated
//    along the first coordinate with an exact L-inf margin, noise bounded by
//    noise_clip; closed-form attack tests rely on this margin.
//  - template mode (otherwise): each class is a fixed smooth template (sum of
//    random bumps around mid-gray) plus per-sample gaussian pixel noise.
struct SyntheticParams {
  std::size_t classes = 2;
  Shape input_shape = {2};
  double margin = 0.0;
  double noise_sigma = 0.1;
  double noise_clip = 0.15;
  double template_amplitude = 0.3;
  std::size_t template_bumps = 6;
  double moon_radius = 0.3;
  double moon_gap = 0.15;
  double moon_noise = 0.02;
};

struct DatasetHandle {
  std::string name;
  NdArray train_x;  // [n, input_numel], values in [0,1]
  std::vector<int> train_y;
  NdArray test_x;
  std::vector<int> test_y;
  Shape input_shape;
  std::size_t classes = 0;
  std::string provenance;
  double margin = 0.0;  // known class margin when > 0

  std::size_t input_numel() const { return shape_numel(input_shape); }
  void validate() const;
};

DatasetHandle make_synthetic(SyntheticKind kind, std::size_t n_train,
                             std::size_t n_test, std::uint64_t seed,
                             const SyntheticParams& params);

// Row subset [first, first+count) of a split as a batch.
NdArray gather_rows(const NdArray& x, const std::vector<std::size_t>& indices);

}  // namespace introdistill
