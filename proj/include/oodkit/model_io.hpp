#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oodkit/embedding.hpp"
#include "oodkit/error.hpp"
#include "oodkit/format.hpp"
#include "oodkit/scoring.hpp"

namespace oodkit {

// Fitted ClusterModel persistence: a plain-text manifest plus little-endian
// f64 blobs, so `score` can reuse a model without refitting and reproduce the
// original scores bit for bit.

namespace model_io_detail {

inline void write_f64_file(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    out.write(bytes, 8);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<double> read_f64_file(const std::filesystem::path& path,
                                         std::size_t expected_count) {
  const auto bytes = io_detail::read_file_bytes(path);
  if (bytes.size() != expected_count * 8)
    throw DataError("file " + path.string() + " holds " + std::to_string(bytes.size() / 8) +
                    " values, expected " + std::to_string(expected_count));
  std::vector<double> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

inline std::vector<double> flatten_stats_means(const std::vector<GaussianStats>& stats) {
  std::vector<double> out;
  for (const auto& s : stats) out.insert(out.end(), s.mean.begin(), s.mean.end());
  return out;
}

inline std::vector<double> flatten_stats_covs(const std::vector<GaussianStats>& stats) {
  std::vector<double> out;
  for (const auto& s : stats)
    out.insert(out.end(), s.covariance.values.begin(), s.covariance.values.end());
  return out;
}

inline std::vector<GaussianStats> rebuild_stats(const std::vector<double>& means,
                                                const std::vector<double>& covs,
                                                const std::vector<double>& eps, std::size_t k,
                                                std::size_t d) {
  std::vector<GaussianStats> stats;
  stats.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> mean(means.begin() + static_cast<std::ptrdiff_t>(c * d),
                             means.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
    Matrix cov(d, d);
    std::copy_n(covs.begin() + static_cast<std::ptrdiff_t>(c * d * d), d * d,
                cov.values.begin());
    stats.push_back(make_gaussian(std::move(mean), std::move(cov), eps[c]));
  }
  return stats;
}

}  // namespace model_io_detail

inline void save_cluster_model(const ClusterModel& model, const std::filesystem::path& dir) {
  namespace md = model_io_detail;
  std::filesystem::create_directories(dir);
  const std::size_t k = model.num_clusters();
  const std::size_t d = model.dim();

  std::ofstream manifest(dir / "model.txt", std::ios::trunc);
  if (!manifest) throw DataError("cannot write model manifest in " + dir.string());
  manifest << "format = oodkit-cluster-model-v1\n";
  manifest << "metric = " << to_string(model.metric) << "\n";
  manifest << "source = " << to_string(model.source) << "\n";
  manifest << "normalized = " << (model.normalized_inputs ? 1 : 0) << "\n";
  manifest << "clusters = " << k << "\n";
  manifest << "dimension = " << d << "\n";
  manifest << "reference_lengths =";
  for (const auto& ref : model.references) manifest << ' ' << ref.size();
  manifest << "\n";
  manifest << "has_stats = " << (model.stats.empty() ? 0 : 1) << "\n";
  manifest << "has_gmm = " << (model.gmm ? 1 : 0) << "\n";

  md::write_f64_file(dir / "means.f64", model.means.values);
  std::vector<double> all_refs;
  for (const auto& ref : model.references) all_refs.insert(all_refs.end(), ref.begin(), ref.end());
  md::write_f64_file(dir / "references.f64", all_refs);

  if (!model.stats.empty()) {
    md::write_f64_file(dir / "stats_means.f64", md::flatten_stats_means(model.stats));
    md::write_f64_file(dir / "stats_covs.f64", md::flatten_stats_covs(model.stats));
    std::vector<double> eps;
    for (const auto& s : model.stats) eps.push_back(s.regularization_epsilon);
    md::write_f64_file(dir / "stats_eps.f64", eps);
  }

  if (model.gmm) {
    const auto& gmm = *model.gmm;
    manifest << "gmm_components = " << gmm.components.size() << "\n";
    manifest << "gmm_iterations = " << gmm.iterations_run << "\n";
    manifest << "gmm_final_log_likelihood = " << format_double(gmm.final_log_likelihood) << "\n";
    md::write_f64_file(dir / "gmm_weights.f64", gmm.weights);
    md::write_f64_file(dir / "gmm_means.f64", md::flatten_stats_means(gmm.components));
    md::write_f64_file(dir / "gmm_covs.f64", md::flatten_stats_covs(gmm.components));
    std::vector<double> eps;
    for (const auto& s : gmm.components) eps.push_back(s.regularization_epsilon);
    md::write_f64_file(dir / "gmm_eps.f64", eps);
    md::write_f64_file(dir / "gmm_reference.f64", model.gmm_reference);
  }
  if (!manifest) throw DataError("model manifest write failed in " + dir.string());
}

inline ClusterModel load_cluster_model(const std::filesystem::path& dir) {
  namespace md = model_io_detail;
  std::ifstream in(dir / "model.txt");
  if (!in) throw DataError("cannot open model manifest: " + (dir / "model.txt").string());
  std::map<std::string, std::string> fields;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto required = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end())
      throw DataError("model manifest is missing '" + key + "'");
    return it->second;
  };
  auto parse_size = [&](const std::string& key) {
    const std::string& value = required(key);
    std::size_t out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
      throw DataError("model manifest: invalid integer for '" + key + "'");
    return out;
  };
  auto parse_f64 = [&](const std::string& key) {
    const std::string& value = required(key);
    double out = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
      throw DataError("model manifest: invalid number for '" + key + "'");
    return out;
  };
  if (required("format") != "oodkit-cluster-model-v1")
    throw DataError("unsupported model format '" + fields["format"] + "'");

  ClusterModel model;
  model.metric = metric_from_string(required("metric"));
  model.source = cluster_source_from_string(required("source"));
  model.normalized_inputs = required("normalized") == "1";
  const std::size_t k = parse_size("clusters");
  const std::size_t d = parse_size("dimension");

  std::vector<std::size_t> ref_lengths;
  {
    std::istringstream lengths(required("reference_lengths"));
    std::size_t value = 0;
    while (lengths >> value) ref_lengths.push_back(value);
    if (ref_lengths.size() != k)
      throw DataError("model manifest declares " + std::to_string(ref_lengths.size()) +
                      " reference lists for " + std::to_string(k) + " clusters");
  }

  model.means.rows = k;
  model.means.cols = d;
  model.means.values = md::read_f64_file(dir / "means.f64", k * d);

  std::size_t total_refs = 0;
  for (const auto n : ref_lengths) total_refs += n;
  const auto all_refs = md::read_f64_file(dir / "references.f64", total_refs);
  model.references.resize(k);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < k; ++c) {
    model.references[c].assign(all_refs.begin() + static_cast<std::ptrdiff_t>(offset),
                               all_refs.begin() +
                                   static_cast<std::ptrdiff_t>(offset + ref_lengths[c]));
    offset += ref_lengths[c];
  }
  model.global_reference = all_refs;
  std::sort(model.global_reference.begin(), model.global_reference.end());

  if (required("has_stats") == "1") {
    const auto means = md::read_f64_file(dir / "stats_means.f64", k * d);
    const auto covs = md::read_f64_file(dir / "stats_covs.f64", k * d * d);
    const auto eps = md::read_f64_file(dir / "stats_eps.f64", k);
    model.stats = md::rebuild_stats(means, covs, eps, k, d);
  }

  if (required("has_gmm") == "1") {
    const std::size_t gk = parse_size("gmm_components");
    GmmModel gmm;
    gmm.iterations_run = static_cast<int>(parse_size("gmm_iterations"));
    gmm.final_log_likelihood = parse_f64("gmm_final_log_likelihood");
    gmm.weights = md::read_f64_file(dir / "gmm_weights.f64", gk);
    const auto means = md::read_f64_file(dir / "gmm_means.f64", gk * d);
    const auto covs = md::read_f64_file(dir / "gmm_covs.f64", gk * d * d);
    const auto eps = md::read_f64_file(dir / "gmm_eps.f64", gk);
    gmm.components = md::rebuild_stats(means, covs, eps, gk, d);
    model.gmm = std::move(gmm);
    const std::size_t ref_n = std::filesystem::file_size(dir / "gmm_reference.f64") / 8;
    model.gmm_reference = md::read_f64_file(dir / "gmm_reference.f64", ref_n);
  }
  return model;
}

}  // namespace oodkit
