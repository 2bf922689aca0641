#include "introdistill/idx.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace introdistill {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("idx: truncated header in " + path);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  return in;
}

}  // namespace

IdxData load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img = open_binary(images_path);
  const std::uint32_t img_magic = read_be_u32(img, images_path);
  if (img_magic != kImagesMagic) {
    throw std::runtime_error("idx: wrong magic in images file " + images_path);
  }
  const std::uint32_t n_images = read_be_u32(img, images_path);
  const std::uint32_t rows = read_be_u32(img, images_path);
  const std::uint32_t cols = read_be_u32(img, images_path);

  std::ifstream lab = open_binary(labels_path);
  const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
  if (lab_magic != kLabelsMagic) {
    throw std::runtime_error("idx: wrong magic in labels file " + labels_path);
  }
  const std::uint32_t n_labels = read_be_u32(lab, labels_path);

  if (n_images != n_labels) {
    throw std::runtime_error("idx: count mismatch, " +
                             std::to_string(n_images) + " images vs " +
                             std::to_string(n_labels) + " labels");
  }

  const std::size_t pixels =
      std::size_t(n_images) * std::size_t(rows) * std::size_t(cols);
  std::vector<unsigned char> raw(pixels);
  if (!img.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(pixels))) {
    throw std::runtime_error("idx: truncated image payload in " + images_path);
  }
  std::vector<unsigned char> raw_labels(n_labels);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(n_labels))) {
    throw std::runtime_error("idx: truncated label payload in " + labels_path);
  }

  IdxData data;
  data.rows = rows;
  data.cols = cols;
  std::vector<double> scaled(pixels);
  for (std::size_t i = 0; i < pixels; ++i) scaled[i] = raw[i] / 255.0;
  data.x = NdArray({n_images, std::size_t(rows) * cols}, std::move(scaled));
  data.y.assign(raw_labels.begin(), raw_labels.end());
  return data;
}

DatasetHandle dataset_from_idx(const std::string& train_images,
                               const std::string& train_labels,
                               const std::string& test_images,
                               const std::string& test_labels) {
  IdxData train = load_idx(train_images, train_labels);
  DatasetHandle ds;
  ds.name = "idx";
  ds.provenance = "idx-file";
  ds.input_shape = {1, train.rows, train.cols};
  ds.train_x = train.x.reshaped({train.x.dim(0), train.rows * train.cols});
  ds.train_y = train.y;
  int max_label = 1;
  for (int y : ds.train_y) max_label = std::max(max_label, y);
  if (!test_images.empty()) {
    IdxData test = load_idx(test_images, test_labels);
    if (test.rows != train.rows || test.cols != train.cols) {
      throw std::runtime_error("idx: train/test image dimensions disagree");
    }
    ds.test_x = test.x;
    ds.test_y = test.y;
    for (int y : ds.test_y) max_label = std::max(max_label, y);
  } else {
    ds.test_x = NdArray({0, train.rows * train.cols}, {});
    ds.test_y = {};
  }
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  ds.validate();
  return ds;
}

}  // namespace introdistill
