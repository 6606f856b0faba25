#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "veil/common.hpp"
#include "veil/image_io.hpp"
#include "veil/rng.hpp"
#include "veil/tensor.hpp"

namespace veil {

/// One sample: CHW pixels in [0,1] plus the (hidden, public) label pair.
struct LabeledImage {
  Tensor<float> pixels;  // 3 x S x S
  int hidden_label = 0;
  int public_label = 0;
  std::string id;
};

struct Dataset {
  std::vector<LabeledImage> items;
  int k_hidden = 0;
  int k_public = 0;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  int image_size() const { return items.empty() ? 0 : items.front().pixels.dim(1); }
};

/// Parameters of the synthetic two-attribute set. The public attribute is the
/// rendered shape (disc or square), the hidden attribute is the hue family of
/// its fill color.
struct SyntheticSpec {
  int n = 0;
  int k_hidden = 5;        // hue families at 0/72/144/216/288 degrees
  int k_public = 2;        // 0 = disc, 1 = square
  int image_size = 32;
  double noise_sigma = 0.05;
  int jitter = 4;          // max |position offset| in pixels
  std::uint64_t seed = 1;
};

namespace detail {

inline void hsv_to_rgb(double h_deg, double s, double v, double rgb[3]) {
  double h = std::fmod(h_deg, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

// Coverage in [0,1] of the shape over the unit pixel centered at (px, py).
inline double shape_coverage(int shape, double px, double py, double cx,
                             double cy, double radius) {
  if (shape == 0) {  // disc, 1-px soft edge
    const double d = std::hypot(px - cx, py - cy);
    return std::clamp(radius + 0.5 - d, 0.0, 1.0);
  }
  // axis-aligned square: exact box overlap
  const double ox = std::clamp(std::min(cx + radius, px + 0.5) -
                                   std::max(cx - radius, px - 0.5),
                               0.0, 1.0);
  const double oy = std::clamp(std::min(cy + radius, py + 0.5) -
                                   std::max(cy - radius, py - 0.5),
                               0.0, 1.0);
  return ox * oy;
}

}  // namespace detail

/// Deterministic synthetic dataset. Per-sample draw order is fixed (labels,
/// hue jitter, position jitter, then per-pixel noise), so any (seed, spec)
/// pair renders bit-identical pixels on every run.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  require(spec.n >= 0, "generate_synthetic: n must be >= 0");
  require(spec.k_hidden >= 2 && spec.k_public >= 1,
          "generate_synthetic: need k_hidden >= 2 and k_public >= 1");
  require(spec.image_size >= 8, "generate_synthetic: image_size too small");
  Dataset ds;
  ds.k_hidden = spec.k_hidden;
  ds.k_public = spec.k_public;
  ds.items.reserve(static_cast<std::size_t>(spec.n));
  Rng rng(spec.seed);
  const int S = spec.image_size;
  const double bg = 0.5;
  for (int i = 0; i < spec.n; ++i) {
    LabeledImage item;
    item.hidden_label = static_cast<int>(rng.bounded(
        static_cast<std::uint64_t>(spec.k_hidden)));
    item.public_label = static_cast<int>(rng.bounded(
        static_cast<std::uint64_t>(spec.k_public)));
    const double hue_center = 360.0 * item.hidden_label / spec.k_hidden;
    const double hue = hue_center + rng.uniform(-15.0, 15.0);
    const int span = 2 * spec.jitter + 1;
    const double cx = S / 2.0 +
                      static_cast<double>(rng.bounded(static_cast<std::uint64_t>(span))) -
                      spec.jitter;
    const double cy = S / 2.0 +
                      static_cast<double>(rng.bounded(static_cast<std::uint64_t>(span))) -
                      spec.jitter;
    const int shape = item.public_label % 2;
    const double radius = shape == 0 ? 0.28 * S : 0.25 * S;
    double color[3];
    detail::hsv_to_rgb(hue, 0.8, 0.9, color);

    item.pixels = Tensor<float>({3, S, S});
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double cov =
            detail::shape_coverage(shape, x + 0.5, y + 0.5, cx, cy, radius);
        for (int c = 0; c < 3; ++c) {
          double v = bg + cov * (color[c] - bg);
          v += rng.normal() * spec.noise_sigma;
          item.pixels[static_cast<std::size_t>(c) * plane +
                      static_cast<std::size_t>(y) * S + x] =
              static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    std::ostringstream id;
    id << "syn-" << std::setw(6) << std::setfill('0') << i;
    item.id = id.str();
    ds.items.push_back(std::move(item));
  }
  return ds;
}

// --- Manifest I/O -------------------------------------------------------------

/// Writes `manifest.csv` plus one image file per sample into `dir`.
/// Columns: id,file,hidden_label,public_label. Pixels are quantized to 8 bits.
inline void write_manifest(const Dataset& ds, const std::string& dir,
                           const std::string& image_format = "ppm") {
  require(image_format == "ppm" || image_format == "png",
          "write_manifest: image format must be ppm or png, got ", image_format);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(concat("cannot create directory ", dir, ": ", ec.message()));
  std::ofstream csv(std::filesystem::path(dir) / "manifest.csv",
                    std::ios::trunc);
  if (!csv) throw IoError(concat("cannot write manifest in ", dir));
  csv << "id,file,hidden_label,public_label\n";
  for (const auto& item : ds.items) {
    require(item.id.find(',') == std::string::npos,
            "write_manifest: sample id must not contain commas: ", item.id);
    const std::string file = item.id + "." + image_format;
    write_image(quantize_image(item.pixels),
                (std::filesystem::path(dir) / file).string());
    csv << item.id << "," << file << "," << item.hidden_label << ","
        << item.public_label << "\n";
  }
  if (!csv) throw IoError(concat("manifest write failed in ", dir));
}

/// Loads a manifest directory written by write_manifest (or assembled by
/// hand). Labels are range-checked, pixels land in [0,1] by construction,
/// and class counts are inferred as max(label)+1.
inline Dataset load_manifest(const std::string& dir) {
  const auto csv_path = std::filesystem::path(dir) / "manifest.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw IoError(concat("cannot open manifest: ", csv_path.string()));
  std::string line;
  require<IoError>(static_cast<bool>(std::getline(csv, line)),
                   csv_path.string(), ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require<IoError>(line == "id,file,hidden_label,public_label",
                   csv_path.string(), ": unexpected manifest header: ", line);
  Dataset ds;
  int expected_size = -1;
  int row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require<IoError>(cols.size() == 4, csv_path.string(), " row ", row,
                     ": expected 4 columns, got ", cols.size());
    LabeledImage item;
    item.id = cols[0];
    try {
      item.hidden_label = std::stoi(cols[2]);
      item.public_label = std::stoi(cols[3]);
    } catch (const std::logic_error&) {
      throw IoError(concat(csv_path.string(), " row ", row,
                           ": labels must be integers"));
    }
    require<IoError>(item.hidden_label >= 0 && item.public_label >= 0,
                     csv_path.string(), " row ", row, ": label out of range");
    const auto img_path = std::filesystem::path(dir) / cols[1];
    if (!std::filesystem::exists(img_path))
      throw IoError(concat(csv_path.string(), " row ", row,
                           ": referenced file does not exist: ", cols[1]));
    ImageU8 img;
    try {
      img = read_image(img_path.string());
    } catch (const IoError& e) {
      throw IoError(concat(csv_path.string(), " row ", row, ": ", e.what()));
    }
    require<IoError>(img.width == img.height, csv_path.string(), " row ", row,
                     ": images must be square, got ", img.width, "x", img.height);
    if (expected_size < 0) expected_size = img.width;
    require<IoError>(img.width == expected_size, csv_path.string(), " row ", row,
                     ": image geometry ", img.width, "x", img.height,
                     " does not match dataset geometry ", expected_size, "x",
                     expected_size);
    item.pixels = dequantize_image(img);
    ds.k_hidden = std::max(ds.k_hidden, item.hidden_label + 1);
    ds.k_public = std::max(ds.k_public, item.public_label + 1);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

// --- UTKFace-style ingestion ---------------------------------------------------

enum class UtkField { Age, Gender, Race };

inline UtkField utk_field_from_string(const std::string& s) {
  if (s == "age") return UtkField::Age;
  if (s == "gender") return UtkField::Gender;
  if (s == "race") return UtkField::Race;
  throw ConfigError(concat("unknown attribute field: ", s,
                           " (expected age, gender, or race)"));
}

/// Age buckets: 0-12, 13-25, 26-40, 41-60, 61+.
inline int utk_age_bucket(int age) {
  if (age <= 12) return 0;
  if (age <= 25) return 1;
  if (age <= 40) return 2;
  if (age <= 60) return 3;
  return 4;
}

inline int utk_field_classes(UtkField f) {
  return f == UtkField::Gender ? 2 : 5;
}

struct UtkIngestResult {
  Dataset dataset;
  int skipped = 0;  // malformed filenames
};

/// Ingests files named `<age>_<gender>_<race>_*.png|.ppm`, pre-resized to one
/// square geometry. Malformed names are skipped and counted; zero parseable
/// files is an error.
inline UtkIngestResult ingest_utk_names(const std::string& dir,
                                        UtkField hidden_field,
                                        UtkField public_field) {
  require(hidden_field != public_field,
          "ingest_utk_names: hidden and public fields must differ");
  require<IoError>(std::filesystem::is_directory(dir), dir,
                   ": not a directory");
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() >= 4 &&
        (name.ends_with(".png") || name.ends_with(".ppm")))
      names.push_back(name);
  }
  std::sort(names.begin(), names.end());

  UtkIngestResult result;
  result.dataset.k_hidden = utk_field_classes(hidden_field);
  result.dataset.k_public = utk_field_classes(public_field);
  int expected_size = -1;
  for (const auto& name : names) {
    int fields[3] = {-1, -1, -1};
    std::size_t start = 0;
    bool ok = true;
    for (int f = 0; f < 3 && ok; ++f) {
      const std::size_t underscore = name.find('_', start);
      if (underscore == std::string::npos || underscore == start) {
        ok = false;
        break;
      }
      const std::string part = name.substr(start, underscore - start);
      if (!std::all_of(part.begin(), part.end(),
                       [](unsigned char c) { return std::isdigit(c); })) {
        ok = false;
        break;
      }
      try {
        fields[f] = std::stoi(part);
      } catch (const std::logic_error&) {
        ok = false;
      }
      start = underscore + 1;
    }
    ok = ok && fields[0] >= 0 && fields[1] >= 0 && fields[1] < 2 &&
         fields[2] >= 0 && fields[2] < 5;
    if (!ok) {
      ++result.skipped;
      continue;
    }
    auto label_for = [&](UtkField f) {
      switch (f) {
        case UtkField::Age: return utk_age_bucket(fields[0]);
        case UtkField::Gender: return fields[1];
        default: return fields[2];
      }
    };
    LabeledImage item;
    item.id = name.substr(0, name.size() - 4);
    item.hidden_label = label_for(hidden_field);
    item.public_label = label_for(public_field);
    const ImageU8 img =
        read_image((std::filesystem::path(dir) / name).string());
    require<IoError>(img.width == img.height, dir, "/", name,
                     ": images must be square");
    if (expected_size < 0) expected_size = img.width;
    require<IoError>(img.width == expected_size, dir, "/", name,
                     ": image geometry does not match the rest of the set");
    item.pixels = dequantize_image(img);
    result.dataset.items.push_back(std::move(item));
  }
  require<IoError>(!result.dataset.items.empty(), dir,
                   ": no parseable <age>_<gender>_<race>_* image files found");
  return result;
}

// --- Split ----------------------------------------------------------------------

/// Deterministic shuffled split: first round(n*fraction) samples train.
/// Rejects splits that leave either side empty.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction,
                                         std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0,
          "split: fraction must be in (0, 1), got ", fraction);
  const std::size_t n = ds.items.size();
  const auto n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * fraction));
  require(n_train > 0 && n_train < n,
          "split: fraction ", fraction, " of ", n,
          " samples leaves one side empty");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.bounded(i);
    std::swap(order[i - 1], order[j]);
  }
  Dataset train, test;
  train.k_hidden = test.k_hidden = ds.k_hidden;
  train.k_public = test.k_public = ds.k_public;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).items.push_back(ds.items[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace veil
