#include "introdistill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "introdistill/rng.hpp"

namespace introdistill {

std::string synthetic_kind_name(SyntheticKind kind) {
  return kind == SyntheticKind::GaussianBlobs ? "gaussian-blobs" : "two-moons";
}

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "gaussian-blobs" || name == "blobs")
    return SyntheticKind::GaussianBlobs;
  if (name == "two-moons" || name == "moons") return SyntheticKind::TwoMoons;
  throw std::invalid_argument("unknown synthetic dataset kind '" + name + "'");
}

void DatasetHandle::validate() const {
  if (classes < 2) throw std::invalid_argument("dataset: need >= 2 classes");
  if (train_x.dim(0) != train_y.size() || test_x.numel() / input_numel() !=
                                              test_y.size()) {
    throw std::invalid_argument("dataset: split sizes disagree");
  }
  auto check_split = [&](const NdArray& x, const std::vector<int>& y) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] < 0.0 || x[i] > 1.0) {
        throw std::invalid_argument("dataset: value outside [0,1]");
      }
    }
    for (int label : y) {
      if (label < 0 || static_cast<std::size_t>(label) >= classes) {
        throw std::invalid_argument("dataset: label outside class range");
      }
    }
  };
  check_split(train_x, train_y);
  check_split(test_x, test_y);
}

namespace {

// Smooth per-class template: a few gaussian bumps around mid-gray, rescaled
// to +-amplitude and clipped away from the value bounds.
std::vector<double> make_template(const Shape& shape, std::size_t bumps,
                                  double amplitude, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> pattern(n, 0.0);
  if (shape.size() == 3) {
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    for (std::size_t b = 0; b < bumps; ++b) {
      const double ch = rng.uniform(0.0, static_cast<double>(h));
      const double cw = rng.uniform(0.0, static_cast<double>(w));
      const double width = rng.uniform(2.0, std::max(3.0, h / 3.0));
      const double amp = rng.uniform(-1.0, 1.0);
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) {
            const double d2 = (i - ch) * (i - ch) + (j - cw) * (j - cw);
            pattern[(ci * h + i) * w + j] +=
                amp * std::exp(-d2 / (2.0 * width * width));
          }
    }
  } else {
    for (double& v : pattern) v = rng.uniform(-1.0, 1.0);
  }
  double peak = 1e-9;
  for (double v : pattern) peak = std::max(peak, std::fabs(v));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::clamp(0.5 + amplitude * pattern[i] / peak, 0.05, 0.95);
  }
  return out;
}

void fill_blobs(std::vector<double>& xs, std::vector<int>& ys, std::size_t n,
                const SyntheticParams& p, Rng& rng,
                const std::vector<std::vector<double>>& templates) {
  const std::size_t d = shape_numel(p.input_shape);
  const bool margin_mode = p.margin > 0.0 && p.classes == 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % p.classes);
    ys.push_back(label);
    if (margin_mode) {
      const double side = label == 0 ? -1.0 : 1.0;
      xs.push_back(0.5 +
                   side * (p.margin + p.noise_clip * rng.uniform()));
      for (std::size_t j = 1; j < d; ++j) {
        const double v = 0.5 + p.noise_sigma * rng.normal();
        xs.push_back(std::clamp(v, 0.0, 1.0));
      }
    } else {
      const std::vector<double>& t = templates[static_cast<std::size_t>(label)];
      for (std::size_t j = 0; j < d; ++j) {
        xs.push_back(std::clamp(t[j] + p.noise_sigma * rng.normal(), 0.0, 1.0));
      }
    }
  }
}

void fill_moons(std::vector<double>& xs, std::vector<int>& ys, std::size_t n,
                const SyntheticParams& p, Rng& rng) {
  // Interlocking half circles mapped into the unit square; bounded disc noise
  // keeps the gap between the arcs.
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    ys.push_back(label);
    const double theta = rng.uniform(0.0, pi);
    double rx, ry;
    if (label == 0) {
      rx = std::cos(theta);
      ry = std::sin(theta);
    } else {
      rx = 1.0 - std::cos(theta);
      ry = p.moon_gap - std::sin(theta);
    }
    // Raw x in [-1,2], raw y in [gap-1, 1]; normalize to [0.1, 0.9].
    double u = (rx + 1.0) / 3.0;
    double v = (ry - (p.moon_gap - 1.0)) / (2.0 - p.moon_gap);
    const double angle = rng.uniform(0.0, 2.0 * pi);
    const double rad = p.moon_noise * std::sqrt(rng.uniform());
    u = 0.1 + 0.8 * u + rad * std::cos(angle);
    v = 0.1 + 0.8 * v + rad * std::sin(angle);
    xs.push_back(std::clamp(u, 0.0, 1.0));
    xs.push_back(std::clamp(v, 0.0, 1.0));
    (void)p.moon_radius;
  }
}

}  // namespace

DatasetHandle make_synthetic(SyntheticKind kind, std::size_t n_train,
                             std::size_t n_test, std::uint64_t seed,
                             const SyntheticParams& params) {
  if (n_train == 0) {
    throw std::invalid_argument("make_synthetic: n_train must be > 0");
  }
  if (params.classes < 2) {
    throw std::invalid_argument("make_synthetic: need >= 2 classes");
  }
  if (params.noise_sigma < 0.0 || params.noise_clip < 0.0) {
    throw std::invalid_argument("make_synthetic: negative noise parameter");
  }
  const bool margin_mode =
      params.margin > 0.0 && params.classes == 2 &&
      kind == SyntheticKind::GaussianBlobs;
  if (params.margin > 0.0 && kind == SyntheticKind::GaussianBlobs) {
    if (params.classes != 2) {
      throw std::invalid_argument(
          "make_synthetic: the margin construction is two-class");
    }
    if (params.margin + params.noise_clip > 0.5) {
      throw std::invalid_argument(
          "make_synthetic: margin + noise_clip must fit in [0,1]");
    }
  }
  if (kind == SyntheticKind::TwoMoons &&
      (params.classes != 2 || shape_numel(params.input_shape) != 2)) {
    throw std::invalid_argument("make_synthetic: moons are two-class in 2-d");
  }

  Rng rng(Rng::derive(seed, {streams::kData}));
  std::vector<std::vector<double>> templates;
  if (kind == SyntheticKind::GaussianBlobs && !margin_mode) {
    for (std::size_t k = 0; k < params.classes; ++k) {
      templates.push_back(make_template(params.input_shape,
                                        params.template_bumps,
                                        params.template_amplitude, rng));
    }
  }

  std::vector<double> train_xs, test_xs;
  std::vector<int> train_ys, test_ys;
  if (kind == SyntheticKind::GaussianBlobs) {
    fill_blobs(train_xs, train_ys, n_train, params, rng, templates);
    fill_blobs(test_xs, test_ys, n_test, params, rng, templates);
  } else {
    fill_moons(train_xs, train_ys, n_train, params, rng);
    fill_moons(test_xs, test_ys, n_test, params, rng);
  }

  DatasetHandle ds;
  ds.name = synthetic_kind_name(kind);
  ds.input_shape = params.input_shape;
  ds.classes = params.classes;
  const std::size_t d = ds.input_numel();
  ds.train_x = NdArray({n_train, d}, std::move(train_xs));
  ds.train_y = std::move(train_ys);
  ds.test_x = NdArray({n_test, d}, std::move(test_xs));
  ds.test_y = std::move(test_ys);
  ds.margin = margin_mode ? params.margin : 0.0;
  std::ostringstream prov;
  prov << "synthetic(kind=" << ds.name << ",seed=" << seed
       << ",classes=" << params.classes << ",margin=" << params.margin
       << ",sigma=" << params.noise_sigma << ")";
  ds.provenance = prov.str();
  ds.validate();
  return ds;
}

NdArray gather_rows(const NdArray& x, const std::vector<std::size_t>& indices) {
  const std::size_t d = x.dim(1);
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (std::size_t idx : indices) {
    out.insert(out.end(), x.data() + idx * d, x.data() + (idx + 1) * d);
  }
  return NdArray({indices.size(), d}, std::move(out));
}

}  // namespace introdistill
