#pragma once

// Training references: random pyramid patches with optional rotation/flip,
// perceptual k-medoids thinning, and the on-disk dataset archive.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "paintbot/canvas.hpp"
#include "paintbot/error.hpp"
#include "paintbot/image_io.hpp"
#include "paintbot/losses.hpp"

namespace paintbot {

struct Dataset {
  std::vector<Canvas> patches;
  // Running mean of observed episode returns per reference, starting at 0.
  std::vector<double> difficulty;
  std::vector<long> visits;

  Dataset() = default;
  explicit Dataset(std::vector<Canvas> p) : patches(std::move(p)) {
    if (patches.empty()) throw InvalidArgument("dataset must not be empty");
    for (const auto& c : patches) {
      if (!c.same_shape(patches.front())) throw InvalidArgument("dataset patches must share one shape");
    }
    difficulty.assign(patches.size(), 0.0);
    visits.assign(patches.size(), 0);
  }

  std::size_t size() const { return patches.size(); }
  int height() const { return patches.front().height(); }
  int width() const { return patches.front().width(); }

  void record_return(std::size_t index, double episode_return) {
    ++visits[index];
    difficulty[index] += (episode_return - difficulty[index]) / static_cast<double>(visits[index]);
  }
};

// Synthetic references: solid fills and linear two-colour gradients in light
// colours (channels in [lo, 1]), alternating, plus uniform-noise patches.
inline Canvas gradient_patch(int h, int w, Rgb a, Rgb b, double angle) {
  Canvas c(h, w);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double half = 0.5 * (std::abs(dx) * (w - 1) + std::abs(dy) * (h - 1));
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const double t = half > 0.0 ? std::clamp(((col - cx) * dx + (r - cy) * dy) / (2.0 * half) + 0.5, 0.0, 1.0) : 0.5;
      c.set_pixel(r, col, {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t});
    }
  }
  return c;
}

template <class Rng>
std::vector<Canvas> synthetic_patches(std::size_t n, int h, int w, Rng& rng, double lo = 0.3) {
  std::uniform_real_distribution<double> chan(lo, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  auto colour = [&] { return Rgb{chan(rng), chan(rng), chan(rng)}; };
  std::vector<Canvas> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      out.push_back(Canvas(h, w, colour()));
    } else {
      const Rgb a = colour(), b = colour();
      out.push_back(gradient_patch(h, w, a, b, ang(rng)));
    }
  }
  return out;
}

// Independent binary noise per pixel and channel.
template <class Rng>
Canvas noise_patch(int h, int w, Rng& rng) {
  Canvas c(h, w);
  std::bernoulli_distribution coin(0.5);
  for (auto& v : c.data()) v = coin(rng) ? 1.0 : 0.0;
  return c;
}

struct PatchOptions {
  int out_h = 32;
  int out_w = 32;
  // Crop side = output side * scale, so scales > 1 sample coarser pyramid levels.
  std::vector<double> scales{1.0};
  bool rotate = false;
  bool flip = false;
};

template <class Rng>
Dataset prepare_dataset(const std::vector<Canvas>& sources, int n, const PatchOptions& opt, Rng& rng) {
  if (sources.empty()) throw InvalidArgument("prepare_dataset: no source images");
  if (n < 1) throw InvalidArgument("prepare_dataset: n must be at least 1");
  if (opt.out_h < 1 || opt.out_w < 1 || opt.scales.empty()) {
    throw InvalidArgument("prepare_dataset: invalid patch size or scales");
  }
  std::vector<std::pair<int, int>> crops;
  for (double s : opt.scales) {
    if (!(s > 0.0)) throw InvalidArgument("prepare_dataset: scales must be positive");
    const int ch = std::max(1, static_cast<int>(std::lround(opt.out_h * s)));
    const int cw = std::max(1, static_cast<int>(std::lround(opt.out_w * s)));
    for (const auto& src : sources) {
      if (ch > src.height() || cw > src.width()) {
        throw InvalidArgument("patch " + std::to_string(ch) + "x" + std::to_string(cw) +
                              " larger than source image " + std::to_string(src.height()) + "x" +
                              std::to_string(src.width()));
      }
    }
    crops.emplace_back(ch, cw);
  }
  std::vector<Canvas> patches;
  patches.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& src = sources[std::uniform_int_distribution<std::size_t>(0, sources.size() - 1)(rng)];
    const auto [ch, cw] = crops[std::uniform_int_distribution<std::size_t>(0, crops.size() - 1)(rng)];
    const int row = std::uniform_int_distribution<int>(0, src.height() - ch)(rng);
    const int col = std::uniform_int_distribution<int>(0, src.width() - cw)(rng);
    Canvas patch = crop(src, row, col, ch, cw);
    if (opt.rotate) patch = rotate90(patch, std::uniform_int_distribution<int>(0, 3)(rng));
    if (opt.flip && std::uniform_int_distribution<int>(0, 1)(rng) == 1) patch = flip_horizontal(patch);
    if (patch.height() != opt.out_h || patch.width() != opt.out_w) {
      patch = resize_bilinear(patch, opt.out_h, opt.out_w);
    }
    patches.push_back(std::move(patch));
  }
  return Dataset(std::move(patches));
}

using DistanceMatrix = std::vector<std::vector<double>>;

inline DistanceMatrix perceptual_distances(const std::vector<Canvas>& patches, const FeatureStack& phi) {
  std::vector<std::vector<std::vector<double>>> feats;
  feats.reserve(patches.size());
  for (const auto& p : patches) feats.push_back(phi.features(p));
  DistanceMatrix d(patches.size(), std::vector<double>(patches.size(), 0.0));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    for (std::size_t j = i + 1; j < patches.size(); ++j) d[i][j] = d[j][i] = feature_distance(feats[i], feats[j]);
  }
  return d;
}

struct KMedoids {
  std::vector<std::size_t> medoids;     // sorted point indices
  std::vector<std::size_t> assignment;  // cluster index (into medoids) per point
  double cost = 0.0;
};

namespace detail {

inline KMedoids assign_to(const DistanceMatrix& d, std::vector<std::size_t> medoids) {
  std::sort(medoids.begin(), medoids.end());
  KMedoids r;
  r.medoids = std::move(medoids);
  r.assignment.resize(d.size());
  for (std::size_t p = 0; p < d.size(); ++p) {
    // Medoids always own their cluster; others go to the nearest, lowest index on ties.
    const auto self = std::find(r.medoids.begin(), r.medoids.end(), p);
    std::size_t best = 0;
    if (self != r.medoids.end()) {
      best = static_cast<std::size_t>(self - r.medoids.begin());
    } else {
      for (std::size_t m = 1; m < r.medoids.size(); ++m) {
        if (d[p][r.medoids[m]] < d[p][r.medoids[best]]) best = m;
      }
    }
    r.assignment[p] = best;
    r.cost += d[p][r.medoids[best]];
  }
  return r;
}

inline double combinations(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c;
}

// Advances idx to the next k-subset of [0, n) in lexicographic order.
inline bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  std::size_t i = k;
  while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
  if (i == 0) return false;
  ++idx[i - 1];
  for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  return true;
}

}  // namespace detail

// k-medoids over a symmetric distance matrix. Small problems are solved by
// enumerating every medoid set; larger ones use greedy build plus swap
// refinement until no single swap lowers the cost.
inline KMedoids kmedoids(const DistanceMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  if (k < 1 || k > n) throw InvalidArgument("kmedoids: k must lie in [1, number of points]");
  if (detail::combinations(n, k) <= 20000.0) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    KMedoids best = detail::assign_to(d, idx);
    while (detail::next_combination(idx, n)) {
      KMedoids cand = detail::assign_to(d, idx);
      if (cand.cost < best.cost) best = std::move(cand);
    }
    return best;
  }
  std::vector<std::size_t> medoids;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = n;
    double pick_cost = std::numeric_limits<double>::infinity();
    for (std::size_t cand = 0; cand < n; ++cand) {
      if (std::find(medoids.begin(), medoids.end(), cand) != medoids.end()) continue;
      double cost = 0.0;
      for (std::size_t p = 0; p < n; ++p) cost += std::min(nearest[p], d[p][cand]);
      if (cost < pick_cost) {
        pick_cost = cost;
        pick = cand;
      }
    }
    medoids.push_back(pick);
    for (std::size_t p = 0; p < n; ++p) nearest[p] = std::min(nearest[p], d[p][pick]);
  }
  KMedoids best = detail::assign_to(d, medoids);
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t m = 0; m < k && !improved; ++m) {
      for (std::size_t cand = 0; cand < n && !improved; ++cand) {
        if (std::find(best.medoids.begin(), best.medoids.end(), cand) != best.medoids.end()) continue;
        auto trial = best.medoids;
        trial[m] = cand;
        KMedoids r = detail::assign_to(d, trial);
        if (r.cost < best.cost - 1e-15) {
          best = std::move(r);
          improved = true;
        }
      }
    }
  }
  return best;
}

// Groups patches by perceptual distance and keeps one random member per cluster.
template <class Rng>
Dataset cluster_representatives(const std::vector<Canvas>& patches, const FeatureStack& phi,
                                std::size_t k, Rng& rng) {
  if (k < 1 || k > patches.size()) {
    throw InvalidArgument("cluster_representatives: k=" + std::to_string(k) + " must lie in [1, " +
                          std::to_string(patches.size()) + "]");
  }
  const KMedoids km = kmedoids(perceptual_distances(patches, phi), k);
  std::vector<Canvas> reps;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < patches.size(); ++p) {
      if (km.assignment[p] == c) members.push_back(p);
    }
    reps.push_back(patches[members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)]]);
  }
  return Dataset(std::move(reps));
}

// Archive: a text manifest terminated by "end\n", then for each patch its R,
// G and B planes as row-major 8-bit samples.
inline std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream out;
  out << "PBDS 1\ncount " << ds.size() << "\nheight " << ds.height() << "\nwidth " << ds.width()
      << "\nchannels 3\nend\n";
  std::string bytes = out.str();
  for (const auto& p : ds.patches) {
    for (int ch = 0; ch < 3; ++ch) {
      for (int r = 0; r < p.height(); ++r) {
        for (int c = 0; c < p.width(); ++c) bytes.push_back(static_cast<char>(to_byte(p.at(r, c, ch))));
      }
    }
  }
  return bytes;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing", path);
  const std::string bytes = serialize_dataset(ds);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("dataset write failed", path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset", path);
  std::string line;
  std::getline(in, line);
  if (line != "PBDS 1") throw FormatError("not a dataset archive (bad header): " + path);
  long count = -1, height = -1, width = -1, channels = -1;
  while (std::getline(in, line) && line != "end") {
    std::istringstream fields(line);
    std::string key;
    long value = -1;
    if (!(fields >> key >> value)) throw FormatError("malformed manifest line '" + line + "': " + path);
    if (key == "count") count = value;
    else if (key == "height") height = value;
    else if (key == "width") width = value;
    else if (key == "channels") channels = value;
    else throw FormatError("unknown manifest key '" + key + "': " + path);
  }
  if (line != "end") throw FormatError("dataset manifest not terminated: " + path);
  if (count < 0 || height < 1 || width < 1 || channels != 3) {
    throw FormatError("dataset manifest incomplete or invalid: " + path);
  }
  if (count == 0) throw InvalidArgument("dataset archive is empty: " + path);
  std::vector<Canvas> patches;
  std::vector<char> plane(static_cast<std::size_t>(height * width));
  for (long i = 0; i < count; ++i) {
    Canvas p(static_cast<int>(height), static_cast<int>(width));
    for (int ch = 0; ch < 3; ++ch) {
      in.read(plane.data(), static_cast<std::streamsize>(plane.size()));
      if (in.gcount() != static_cast<std::streamsize>(plane.size())) {
        throw FormatError("dataset archive truncated at patch " + std::to_string(i) + ": " + path);
      }
      for (long r = 0; r < height; ++r) {
        for (long c = 0; c < width; ++c) {
          p.at(static_cast<int>(r), static_cast<int>(c), ch) = from_byte(static_cast<std::uint8_t>(plane[r * width + c]));
        }
      }
    }
    patches.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in dataset archive: " + path);
  return Dataset(std::move(patches));
}

}  // namespace paintbot
