#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/geometry.hpp"
#include "oodkit/rng.hpp"

namespace oodkit {

enum class Split { train, test_id, ood };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test_id: return "test_id";
    case Split::ood: return "ood";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test_id") return Split::test_id;
  if (s == "ood") return Split::ood;
  throw DataError("unknown split '" + s + "' (expected train, test_id or ood)");
}

// N x D embedding matrix with optional integer class labels and a split tag.
// Immutable by convention once built: operations return fresh sets.
struct EmbeddingSet {
  Matrix data;
  std::optional<std::vector<std::int32_t>> labels;
  Split split = Split::train;
  std::string name;

  std::size_t size() const { return data.rows; }
  std::size_t dim() const { return data.cols; }

  void validate() const {
    if (data.rows == 0 || data.cols == 0)
      throw DataError("embedding set '" + name + "' is empty");
    for (std::size_t i = 0; i < data.rows; ++i)
      for (std::size_t j = 0; j < data.cols; ++j)
        if (!std::isfinite(data(i, j)))
          throw DataError("embedding set '" + name + "' has a non-finite value at row " +
                          std::to_string(i));
    if (labels) {
      if (labels->size() != data.rows)
        throw DataError("embedding set '" + name + "' has " + std::to_string(labels->size()) +
                        " labels for " + std::to_string(data.rows) + " samples");
      for (std::size_t i = 0; i < labels->size(); ++i)
        if ((*labels)[i] < 0)
          throw DataError("embedding set '" + name + "' has a negative label at row " +
                          std::to_string(i));
    }
  }
};

// One embedding set per training epoch, for tracking separation over time.
struct CheckpointEntry {
  int epoch = 0;
  EmbeddingSet embeddings;
};

struct CheckpointSeries {
  std::vector<CheckpointEntry> entries;

  void validate() const {
    if (entries.empty()) throw DataError("checkpoint series is empty");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].embeddings.validate();
      if (i > 0) {
        if (entries[i].epoch <= entries[i - 1].epoch)
          throw DataError("checkpoint epochs must be strictly increasing");
        if (entries[i].embeddings.dim() != entries[0].embeddings.dim())
          throw DataError("checkpoint dimension changed at epoch " +
                          std::to_string(entries[i].epoch));
        if (entries[i].embeddings.labels.has_value() != entries[0].embeddings.labels.has_value())
          throw DataError("checkpoint label scheme changed at epoch " +
                          std::to_string(entries[i].epoch));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Binary storage: little-endian 4-byte IEEE floats, row-major, plus an int32
// label file. A plain-text manifest of `key = value` lines ties them together:
//
//   dimension = 64
//   dtype     = f32
//   train.data = train.f32
//   train.labels = train.labels
//
// Paths are resolved relative to the manifest's directory.
// ---------------------------------------------------------------------------

namespace io_detail {

inline void write_u32_le(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF),
                         static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("failed to read file: " + path.string());
  return bytes;
}

}  // namespace io_detail

inline void write_f32_file(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const double v : values)
    io_detail::write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<double> read_f32_file(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file_bytes(path);
  if (bytes.size() % 4 != 0)
    throw DataError("file size of " + path.string() + " (" + std::to_string(bytes.size()) +
                    " bytes) is not a multiple of the 4-byte element width");
  std::vector<double> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<double>(std::bit_cast<float>(io_detail::read_u32_le(&bytes[i * 4])));
  return values;
}

inline void write_labels_file(const std::filesystem::path& path,
                              const std::vector<std::int32_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const std::int32_t v : labels)
    io_detail::write_u32_le(out, static_cast<std::uint32_t>(v));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<std::int32_t> read_labels_file(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file_bytes(path);
  if (bytes.size() % 4 != 0)
    throw DataError("label file size of " + path.string() + " is not a multiple of 4 bytes");
  std::vector<std::int32_t> labels(bytes.size() / 4);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<std::int32_t>(io_detail::read_u32_le(&bytes[i * 4]));
  return labels;
}

struct ManifestSplit {
  std::string data_path;
  std::string labels_path;                 // empty when absent
  std::optional<std::size_t> count;        // optional declared sample count
};

struct DatasetManifest {
  std::size_t dimension = 0;
  std::string dtype = "f32";
  std::map<Split, ManifestSplit> splits;   // ordered: train, test_id, ood
};

inline DatasetManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  DatasetManifest manifest;
  bool have_dimension = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                        ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                      ": empty key or value");
    if (key == "dimension") {
      std::size_t d = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), d);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size() || d == 0)
        throw DataError("manifest " + path.string() + ": invalid dimension '" + value + "'");
      manifest.dimension = d;
      have_dimension = true;
    } else if (key == "dtype") {
      if (value != "f32")
        throw DataError("manifest " + path.string() + ": unsupported dtype '" + value + "'");
      manifest.dtype = value;
    } else {
      const auto dotpos = key.find('.');
      if (dotpos == std::string::npos)
        throw DataError("manifest " + path.string() + ": unknown key '" + key + "'");
      const Split split = split_from_string(key.substr(0, dotpos));
      const std::string field = key.substr(dotpos + 1);
      auto& entry = manifest.splits[split];
      if (field == "data") {
        entry.data_path = value;
      } else if (field == "labels") {
        entry.labels_path = value;
      } else if (field == "count") {
        std::size_t n = 0;
        const auto res = std::from_chars(value.data(), value.data() + value.size(), n);
        if (res.ec != std::errc() || res.ptr != value.data() + value.size())
          throw DataError("manifest " + path.string() + ": invalid count '" + value + "'");
        entry.count = n;
      } else {
        throw DataError("manifest " + path.string() + ": unknown key '" + key + "'");
      }
    }
  }
  if (!have_dimension) throw DataError("manifest " + path.string() + ": missing 'dimension'");
  if (manifest.splits.empty())
    throw DataError("manifest " + path.string() + ": no '<split>.data' entries");
  for (const auto& [split, entry] : manifest.splits)
    if (entry.data_path.empty())
      throw DataError("manifest " + path.string() + ": split '" + to_string(split) +
                      "' has no data file");
  return manifest;
}

// Loads every split declared by the manifest, validating dimensions, counts
// and finiteness. Returns the sets in manifest split order.
inline std::vector<EmbeddingSet> load_manifest(const std::filesystem::path& path) {
  const DatasetManifest manifest = parse_manifest(path);
  const auto base = path.parent_path();
  std::vector<EmbeddingSet> sets;
  for (const auto& [split, entry] : manifest.splits) {
    const auto data_path = base / entry.data_path;
    std::vector<double> values = read_f32_file(data_path);
    if (values.size() % manifest.dimension != 0)
      throw DataError("file " + data_path.string() + " holds " + std::to_string(values.size()) +
                      " values, not divisible by dimension " +
                      std::to_string(manifest.dimension));
    const std::size_t n = values.size() / manifest.dimension;
    if (entry.count && *entry.count != n)
      throw DataError("manifest declares " + std::to_string(*entry.count) + " samples for split '" +
                      to_string(split) + "' but " + data_path.string() + " holds " +
                      std::to_string(n));
    EmbeddingSet set;
    set.data.rows = n;
    set.data.cols = manifest.dimension;
    set.data.values = std::move(values);
    set.split = split;
    set.name = to_string(split);
    if (!entry.labels_path.empty()) {
      auto labels = read_labels_file(base / entry.labels_path);
      if (labels.size() != n)
        throw DataError("label file " + (base / entry.labels_path).string() + " holds " +
                        std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                        " samples");
      set.labels = std::move(labels);
    }
    set.validate();
    sets.push_back(std::move(set));
  }
  return sets;
}

// Writes <split>.f32 (+ <split>.labels) files and a manifest. Returns the
// manifest path. Values are stored as f32, so a set that was itself loaded
// from f32 storage round-trips bit-identically.
inline std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                          const std::vector<EmbeddingSet>& sets,
                                          const std::string& manifest_name = "manifest.txt") {
  if (sets.empty()) throw DataError("save_dataset: no embedding sets");
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / manifest_name, std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  manifest << "dimension = " << sets.front().dim() << "\n";
  manifest << "dtype = f32\n";
  for (const auto& set : sets) {
    if (set.dim() != sets.front().dim())
      throw DataError("save_dataset: splits disagree on dimension");
    const std::string split = to_string(set.split);
    write_f32_file(dir / (split + ".f32"), set.data.values);
    manifest << split << ".data = " << split << ".f32\n";
    manifest << split << ".count = " << set.size() << "\n";
    if (set.labels) {
      write_labels_file(dir / (split + ".labels"), *set.labels);
      manifest << split << ".labels = " << split << ".labels\n";
    }
  }
  if (!manifest) throw DataError("manifest write failed in " + dir.string());
  return dir / manifest_name;
}

// CSV rows of decimal floats, optional final integer label column.
inline EmbeddingSet load_csv(const std::filesystem::path& path, bool has_label_column,
                             Split split = Split::train, std::string name = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  EmbeddingSet set;
  set.split = split;
  set.name = name.empty() ? path.filename().string() : std::move(name);
  std::vector<double> values;
  std::vector<std::int32_t> labels;
  std::string line;
  std::size_t row = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (columns == 0) {
      columns = cells.size();
      if (has_label_column && columns < 2)
        throw DataError(path.string() + ": need at least one feature column besides the label");
    } else if (cells.size() != columns) {
      throw DataError(path.string() + " row " + std::to_string(row) + ": has " +
                      std::to_string(cells.size()) + " columns, expected " +
                      std::to_string(columns));
    }
    const std::size_t feature_cols = has_label_column ? columns - 1 : columns;
    for (std::size_t c = 0; c < feature_cols; ++c) {
      const std::string& cell = cells[c];
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw DataError(path.string() + " row " + std::to_string(row) + " column " +
                        std::to_string(c) + ": cannot parse '" + cell + "' as a number");
      if (!std::isfinite(v))
        throw DataError(path.string() + " row " + std::to_string(row) + " column " +
                        std::to_string(c) + ": non-finite value");
      values.push_back(v);
    }
    if (has_label_column) {
      const std::string& cell = cells[columns - 1];
      std::int32_t label = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), label);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw DataError(path.string() + " row " + std::to_string(row) +
                        ": cannot parse label '" + cell + "'");
      labels.push_back(label);
    }
    ++row;
  }
  if (row == 0) throw DataError(path.string() + ": no data rows");
  set.data.rows = row;
  set.data.cols = has_label_column ? columns - 1 : columns;
  set.data.values = std::move(values);
  if (has_label_column) set.labels = std::move(labels);
  set.validate();
  return set;
}

// Scales every row to unit Euclidean norm. Rows already within 1e-12 of unit
// norm are passed through unchanged, which makes the operation exactly
// idempotent.
inline EmbeddingSet l2_normalize(const EmbeddingSet& set) {
  EmbeddingSet out = set;
  for (std::size_t i = 0; i < out.data.rows; ++i) {
    auto row = out.data.row(i);
    const double norm = std::sqrt(squared_norm(row));
    if (norm == 0.0)
      throw DataError("cannot normalize zero-norm row " + std::to_string(i) + " of '" +
                      set.name + "'");
    if (std::abs(norm - 1.0) <= 1e-12) continue;
    for (double& v : row) v /= norm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic blob generator. Stands in for trained-network embeddings in tests
// and benchmarks: J isotropic Gaussian clusters with centers placed
// deterministically on a sphere of radius `center_scale`. Values are rounded
// to f32 precision at generation so saved copies reload bit-identically.
// ---------------------------------------------------------------------------

// J deterministic unit directions scaled to `scale`, from normalized
// Gaussian draws.
inline Matrix blob_centers(std::size_t num_clusters, std::size_t dim, double scale,
                           std::uint64_t seed) {
  if (num_clusters == 0 || dim == 0) throw DataError("blob_centers: need J >= 1 and D >= 1");
  SplitMix64 rng(seed);
  Matrix centers(num_clusters, dim);
  for (std::size_t j = 0; j < num_clusters; ++j) {
    auto row = centers.row(j);
    for (double& v : row) v = rng.next_gaussian();
    const double norm = std::sqrt(squared_norm(row));
    if (norm == 0.0) {
      row[0] = 1.0;
      for (std::size_t k = 1; k < dim; ++k) row[k] = 0.0;
    } else {
      for (double& v : row) v = v / norm * scale;
    }
  }
  return centers;
}

// Displaces each center by `offset` (chord length) along its sphere, keeping
// the center norm. Used to derive near/far OOD layouts from an
// in-distribution layout: small offsets stay angularly close, large offsets
// rotate well away, without the norm drift a straight translation would add.
// Centers at the origin fall back to a plain translation.
inline Matrix offset_centers(const Matrix& centers, double offset, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix shifted = centers;
  std::vector<double> tangent(centers.cols);
  for (std::size_t j = 0; j < centers.rows; ++j) {
    const auto center = centers.row(j);
    auto out = shifted.row(j);
    for (double& v : tangent) v = rng.next_gaussian();
    const double radius = std::sqrt(squared_norm(center));
    if (radius == 0.0) {
      const double norm = std::sqrt(squared_norm(tangent));
      for (std::size_t k = 0; k < tangent.size(); ++k)
        out[k] = norm == 0.0 ? (k == 0 ? offset : 0.0) : tangent[k] / norm * offset;
      continue;
    }
    // Project the draw onto the tangent plane at the center.
    const double along = dot(tangent, center) / (radius * radius);
    for (std::size_t k = 0; k < tangent.size(); ++k) tangent[k] -= along * center[k];
    double tangent_norm = std::sqrt(squared_norm(tangent));
    if (tangent_norm == 0.0) {
      tangent[0] = 1.0;   // degenerate draw; any tangent direction works
      tangent_norm = 1.0;
    }
    // Rotate by the angle whose chord equals the requested offset, capped at
    // the antipode.
    const double half_chord = std::min(offset / (2.0 * radius), 1.0);
    const double angle = 2.0 * std::asin(half_chord);
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (std::size_t k = 0; k < tangent.size(); ++k)
      out[k] = cos_a * center[k] + sin_a * radius * tangent[k] / tangent_norm;
  }
  return shifted;
}

// Draws `per_cluster` samples around each center with isotropic stddev
// `sigma`; labels record the generating component.
inline EmbeddingSet sample_blobs(const Matrix& centers, std::size_t per_cluster, double sigma,
                                 std::uint64_t seed, Split split = Split::train,
                                 std::string name = "blobs") {
  if (per_cluster == 0) throw DataError("sample_blobs: need per_cluster >= 1");
  if (sigma < 0.0) throw DataError("sample_blobs: sigma must be >= 0");
  SplitMix64 rng(seed);
  const std::size_t j_count = centers.rows;
  const std::size_t dim = centers.cols;
  EmbeddingSet set;
  set.split = split;
  set.name = std::move(name);
  set.data = Matrix(j_count * per_cluster, dim);
  std::vector<std::int32_t> labels(j_count * per_cluster);
  std::size_t row = 0;
  for (std::size_t j = 0; j < j_count; ++j) {
    const auto center = centers.row(j);
    for (std::size_t s = 0; s < per_cluster; ++s, ++row) {
      auto out = set.data.row(row);
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = center[k] + sigma * rng.next_gaussian();
        out[k] = static_cast<double>(static_cast<float>(v));
      }
      labels[row] = static_cast<std::int32_t>(j);
    }
  }
  set.labels = std::move(labels);
  return set;
}

// J*n samples from J blobs; fully determined by the seed.
inline EmbeddingSet synth_blobs(std::size_t num_clusters, std::size_t per_cluster,
                                std::size_t dim, double center_scale, double sigma,
                                std::uint64_t seed, Split split = Split::train,
                                std::string name = "blobs") {
  const Matrix centers = blob_centers(num_clusters, dim, center_scale, derive_seed(seed, 1));
  return sample_blobs(centers, per_cluster, sigma, derive_seed(seed, 2), split, std::move(name));
}

}  // namespace oodkit
