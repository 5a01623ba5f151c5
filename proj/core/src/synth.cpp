#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dfm/data.hpp"
#include "dfm/distance_transform.hpp"
#include "dfm/nifti.hpp"

namespace fs = std::filesystem;

namespace dfm {
namespace {

constexpr double kPi = std::numbers::pi;

// Portable draws so a seed gives the same phantom on every standard library.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

struct Ellipse {
  double cx, cy, ra, rb, phi;

  double level(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (std::cos(phi) * dx + std::sin(phi) * dy) / ra;
    const double v = (-std::sin(phi) * dx + std::cos(phi) * dy) / rb;
    return u * u + v * v;
  }
  bool inside(double x, double y) const { return level(x, y) <= 1.0; }
};

struct Anatomy {
  Ellipse lv, outer, rv;
};

Anatomy draw_anatomy(std::mt19937_64& rng, double s) {
  Anatomy a;
  const double cx = uniform(rng, 0.42, 0.58) * s;
  const double cy = uniform(rng, 0.42, 0.58) * s;
  const double ra = uniform(rng, 0.08, 0.13) * s;
  const double rb = ra * uniform(rng, 0.75, 1.0);
  const double phi = uniform(rng, 0.0, kPi);
  const double wall = std::max(1.5, uniform(rng, 0.04, 0.065) * s);
  a.lv = {cx, cy, ra, rb, phi};
  a.outer = {cx, cy, ra + wall, rb + wall, phi};

  const double psi = uniform(rng, 0.0, 2.0 * kPi);
  const double r = 0.5 * (ra + rb) + wall;
  const double rv_major = r * uniform(rng, 1.05, 1.5);
  const double rv_minor = r * uniform(rng, 0.5, 0.8);
  const double d = r + rv_minor * uniform(rng, -0.3, 0.4);
  a.rv = {cx + d * std::cos(psi), cy + d * std::sin(psi), rv_minor, rv_major, psi};
  return a;
}

int label_at(const Anatomy& a, double x, double y) {
  if (a.lv.inside(x, y)) return 3;
  if (a.outer.inside(x, y)) return 2;
  if (a.rv.inside(x, y)) return 1;
  return 0;
}

void blur3(std::vector<double>& img, int n) {
  std::vector<double> tmp(img.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int l = std::max(x - 1, 0);
      const int r = std::min(x + 1, n - 1);
      tmp[y * n + x] = 0.25 * img[y * n + l] + 0.5 * img[y * n + x] + 0.25 * img[y * n + r];
    }
  }
  for (int y = 0; y < n; ++y) {
    const int u = std::max(y - 1, 0);
    const int d = std::min(y + 1, n - 1);
    for (int x = 0; x < n; ++x) {
      img[y * n + x] = 0.25 * tmp[u * n + x] + 0.5 * tmp[y * n + x] + 0.25 * tmp[d * n + x];
    }
  }
}

// Every nearest non-LV pixel of every LV pixel is MYO, ties included.
bool myo_encloses_lv(const std::vector<std::int32_t>& labels, int n) {
  std::vector<std::uint8_t> outside(labels.size()), other(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    outside[i] = labels[i] != 3;
    other[i] = labels[i] != 3 && labels[i] != 2;
  }
  const NearestSiteMap to_outside = nearest_site_transform(n, n, outside);
  const NearestSiteMap to_other = nearest_site_transform(n, n, other);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 3 && to_other.squared_distance[i] <= to_outside.squared_distance[i]) return false;
  }
  return true;
}

}  // namespace

VolumeSample synth_volume(std::mt19937_64& rng, const SynthOptions& opts) {
  const int n = opts.size;
  if (n < 16) throw std::invalid_argument("synthetic size must be at least 16");
  const double s = n;
  const std::size_t plane = static_cast<std::size_t>(n) * n;

  std::vector<std::int32_t> labels(plane);
  Anatomy a{};
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw std::runtime_error("could not place a synthetic phantom");
    a = draw_anatomy(rng, s);
    std::array<std::size_t, 4> counts{};
    bool touches_edge = false;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const int c = label_at(a, x, y);
        labels[y * n + x] = c;
        ++counts[c];
        if (c != 0 && (x < 2 || y < 2 || x >= n - 2 || y >= n - 2)) touches_edge = true;
      }
    }
    if (touches_edge || counts[1] < 20 || counts[2] < 20 || counts[3] < 20) continue;
    if (myo_encloses_lv(labels, n)) break;
  }

  // Papillary muscles: myocardium-bright tissue inside the cavity, labelled LV.
  std::vector<Ellipse> papillary;
  const int n_papillary = 1 + static_cast<int>(uniform(rng, 0.0, 2.0));
  for (int i = 0; i < n_papillary; ++i) {
    const double theta = uniform(rng, 0.0, 2.0 * kPi);
    const double reach = uniform(rng, 0.5, 0.7);
    const double r = std::min(a.lv.ra, a.lv.rb) * uniform(rng, 0.2, 0.35);
    const double ux = std::cos(theta) * a.lv.ra * reach;
    const double uy = std::sin(theta) * a.lv.rb * reach;
    papillary.push_back({a.lv.cx + std::cos(a.lv.phi) * ux - std::sin(a.lv.phi) * uy,
                         a.lv.cy + std::sin(a.lv.phi) * ux + std::cos(a.lv.phi) * uy, r,
                         r * uniform(rng, 0.7, 1.0), uniform(rng, 0.0, kPi)});
  }

  // Bright structures elsewhere in the field of view, kept clear of the heart.
  std::vector<Ellipse> blobs;
  const int n_blobs = static_cast<int>(uniform(rng, 0.0, opts.max_distractors + 1.0));
  for (int b = 0; b < n_blobs; ++b) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double r = uniform(rng, 0.04, 0.09) * s;
      Ellipse e{uniform(rng, 0.1, 0.9) * s, uniform(rng, 0.1, 0.9) * s, r,
                r * uniform(rng, 0.6, 1.0), uniform(rng, 0.0, kPi)};
      Ellipse grown = e;
      grown.ra += 0.03 * s;
      grown.rb += 0.03 * s;
      bool clear = true;
      for (int y = 0; y < n && clear; ++y) {
        for (int x = 0; x < n; ++x) {
          if (labels[y * n + x] != 0 && grown.inside(x, y)) {
            clear = false;
            break;
          }
        }
      }
      if (clear) {
        blobs.push_back(e);
        break;
      }
    }
  }

  const double bg = uniform(rng, 0.2, 0.3);
  const double myo = uniform(rng, 0.38, 0.48);
  const double lv = uniform(rng, 0.8, 0.95);
  const double rv = lv * uniform(rng, 0.85, 1.0);
  const double gx = uniform(rng, -0.15, 0.15);
  const double gy = uniform(rng, -0.15, 0.15);
  struct Wave { double kx, ky, phase, amp; };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = {uniform(rng, -6.0, 6.0) * kPi / s, uniform(rng, -6.0, 6.0) * kPi / s,
         uniform(rng, 0.0, 2.0 * kPi), uniform(rng, 0.02, 0.06)};
  }
  std::vector<double> blob_level;
  for (std::size_t i = 0; i < blobs.size(); ++i) blob_level.push_back(uniform(rng, 0.55, 0.9));

  std::vector<double> img(plane);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double v = bg;
      for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      for (std::size_t i = 0; i < blobs.size(); ++i) {
        if (blobs[i].inside(x, y)) v = blob_level[i];
      }
      switch (labels[y * n + x]) {
        case 1: v = rv; break;
        case 2: v = myo; break;
        case 3:
          v = lv;
          for (const auto& e : papillary) {
            if (e.inside(x, y)) v = myo;
          }
          break;
        default: break;
      }
      img[y * n + x] = v;
    }
  }
  blur3(img, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double bias = 1.0 + gx * (x / s - 0.5) + gy * (y / s - 0.5);
      img[y * n + x] = img[y * n + x] * bias + opts.noise * gaussian(rng);
    }
  }

  VolumeSample v;
  v.depth = 1;
  v.height = n;
  v.width = n;
  v.image.assign(img.begin(), img.end());
  v.label = std::move(labels);
  v.spacing = {10.0, 320.0 / n, 320.0 / n};
  v.case_id = "synthetic";
  return v;
}

SliceSample synth_sample(std::mt19937_64& rng, const SynthOptions& opts) {
  VolumeSample v = synth_volume(rng, opts);
  return std::move(slice_and_preprocess(v, opts.size, 3).front());
}

SliceSample synth_sample(std::mt19937_64& rng, int size) {
  SynthOptions opts;
  opts.size = size;
  return synth_sample(rng, opts);
}

std::uint64_t synth_seed(std::uint64_t base_seed, std::uint64_t index) {
  // splitmix64
  std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<SynthManifestEntry> write_synthetic_dataset(const std::string& out_dir, int count,
                                                        std::uint64_t seed,
                                                        const SynthOptions& opts) {
  if (count < 1) throw std::invalid_argument("synthetic count must be positive");
  fs::create_directories(out_dir);
  std::vector<SynthManifestEntry> entries;
  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + out_dir);
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    SynthManifestEntry e;
    e.id = id;
    e.seed = synth_seed(seed, static_cast<std::uint64_t>(i));
    e.image_path = e.id + ".nii.gz";
    e.label_path = e.id + "_gt.nii.gz";

    std::mt19937_64 rng(e.seed);
    const VolumeSample v = synth_volume(rng, opts);
    NiftiVolume img{v.depth, v.height, v.width, v.spacing, {v.image.begin(), v.image.end()}};
    NiftiVolume lab{v.depth, v.height, v.width, v.spacing, {v.label->begin(), v.label->end()}};
    write_nifti((fs::path(out_dir) / e.image_path).string(), img, NiftiType::kFloat32);
    write_nifti((fs::path(out_dir) / e.label_path).string(), lab, NiftiType::kUInt8);
    manifest << e.id << '\t' << e.image_path << '\t' << e.label_path << '\t' << e.seed << '\n';
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<SynthManifestEntry> read_synthetic_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.tsv");
  if (!in) throw std::runtime_error("no manifest.tsv in " + dir);
  std::vector<SynthManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SynthManifestEntry e;
    if (!(ss >> e.id >> e.image_path >> e.label_path >> e.seed)) {
      throw std::runtime_error(dir + "/manifest.tsv:" + std::to_string(line_no) + ": malformed");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace dfm
