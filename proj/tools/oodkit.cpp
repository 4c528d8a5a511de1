// oodkit: cluster-based out-of-distribution detection over embedding files.
//
// Subcommands wire the library end to end: synthesize datasets, fit cluster
// models, report cluster quality, score samples, evaluate AUROC, and run the
// full comparison sweep. All randomness hangs off --seed; re-running a
// command with the same flags reproduces every output byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <oodkit/oodkit.hpp>

namespace fs = std::filesystem;
using namespace oodkit;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

EmbeddingSet load_split(const fs::path& manifest, Split split) {
  for (auto& set : load_manifest(manifest))
    if (set.split == split) return std::move(set);
  throw DataError("manifest " + manifest.string() + " has no '" + to_string(split) +
                  "' split");
}

bool resolve_normalize(const std::string& flag, Metric metric) {
  if (flag == "on") return true;
  if (flag == "off") return false;
  if (flag == "auto") return metric == Metric::cosine;
  throw DataError("unknown --normalize value '" + flag + "' (expected auto, on or off)");
}

struct FitFlags {
  std::uint64_t seed = 1;
  int kmeans_max_iter = 300;
  int em_max_iter = 200;
  double tol = 1e-6;
  int restarts = 5;

  KMeansConfig kmeans() const { return {kmeans_max_iter, tol, restarts}; }
  GmmConfig gmm() const { return {em_max_iter, tol, kmeans()}; }
};

void add_fit_flags(CLI::App* cmd, FitFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Seed for all randomized steps");
  cmd->add_option("--kmeans-max-iter", flags.kmeans_max_iter, "Lloyd iteration cap");
  cmd->add_option("--em-max-iter", flags.em_max_iter, "EM iteration cap");
  cmd->add_option("--tol", flags.tol, "Relative convergence tolerance");
  cmd->add_option("--restarts", flags.restarts, "k-means restarts (best inertia wins)");
}

ClusterAssignment build_clusters(const EmbeddingSet& set,
                                 ClusterAssignment::Source source, std::size_t k,
                                 std::uint64_t seed, const FitFlags& flags,
                                 std::optional<GmmModel>* gmm_out = nullptr) {
  switch (source) {
    case ClusterAssignment::Source::ground_truth: return from_labels(set);
    case ClusterAssignment::Source::single: return single_cluster(set);
    case ClusterAssignment::Source::kmeans:
      return kmeans_fit(set, k, seed, flags.kmeans()).second;
    case ClusterAssignment::Source::gmm: {
      auto [model, assignment] = gmm_fit(set, k, seed, flags.gmm());
      if (gmm_out != nullptr) *gmm_out = std::move(model);
      return assignment;
    }
  }
  throw DataError("unknown cluster source");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t clusters = 5;
  std::size_t per_cluster = 200;
  std::size_t test_per_cluster = 50;
  std::size_t ood_per_cluster = 50;
  std::size_t dim = 64;
  double scale = 10.0;
  double sigma = 1.0;
  double ood_offset = 10.0;
  std::uint64_t seed = 7;
};

int run_synth(const SynthArgs& args) {
  const Matrix centers = blob_centers(args.clusters, args.dim, args.scale,
                                      derive_seed(args.seed, 1));
  const auto train =
      sample_blobs(centers, args.per_cluster, args.sigma, derive_seed(args.seed, 2),
                   Split::train, "train");
  const auto test_id =
      sample_blobs(centers, args.test_per_cluster, args.sigma, derive_seed(args.seed, 3),
                   Split::test_id, "test_id");
  const Matrix ood_centers =
      offset_centers(centers, args.ood_offset * args.sigma, derive_seed(args.seed, 4));
  const auto ood =
      sample_blobs(ood_centers, args.ood_per_cluster, args.sigma, derive_seed(args.seed, 5),
                   Split::ood, "ood");
  const auto manifest = save_dataset(args.out, {train, test_id, ood});
  std::cout << "wrote " << manifest.string() << "\n"
            << "train: N=" << train.size() << " D=" << train.dim() << " J=" << args.clusters
            << "\n"
            << "test_id: N=" << test_id.size() << "  ood: N=" << ood.size()
            << " (offset " << format_double(args.ood_offset) << " sigma)\n";
  if (args.sigma > 0.0)
    std::cout << "separation s/sigma = " << format_double(args.scale / args.sigma) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string split = "train";
  std::string source = "kmeans";
  std::size_t k = 0;
  std::string metric = "cosine";
  std::string normalize = "auto";
  std::string out;
  FitFlags flags;
};

int run_fit(const FitArgs& args) {
  const Metric metric = metric_from_string(args.metric);
  const auto source = cluster_source_from_string(args.source);
  if ((source == ClusterAssignment::Source::kmeans ||
       source == ClusterAssignment::Source::gmm) &&
      args.k == 0)
    throw DataError("--k is required for kmeans and gmm sources");
  auto train = load_split(args.data, split_from_string(args.split));
  const bool normalized = resolve_normalize(args.normalize, metric);
  if (normalized) train = l2_normalize(train);

  std::optional<GmmModel> gmm;
  const auto clusters = build_clusters(train, source, args.k, args.flags.seed, args.flags,
                                       &gmm);
  auto model = fit_cluster_model(train, clusters, metric, gmm ? &*gmm : nullptr);
  model.normalized_inputs = normalized;
  save_cluster_model(model, args.out);

  std::cout << "fitted " << to_string(source) << " model: k=" << model.num_clusters()
            << " metric=" << to_string(metric) << " normalized=" << (normalized ? 1 : 0)
            << "\n";
  std::cout << "cluster sizes:";
  for (const auto& reference : model.references) std::cout << ' ' << reference.size();
  std::cout << "\nsaved to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// quality
// ---------------------------------------------------------------------------

struct QualityArgs {
  std::string data;
  std::string checkpoints;
  std::string split = "train";
  std::string clusters = "gt";
  std::size_t k = 0;
  std::string metric = "cosine";
  std::string normalize = "off";
  double x_fraction = 0.1;
  double radius_quantile = 0.95;
  std::string out;
  FitFlags flags;
};

void write_quality_header(std::ostream& out, const QualityArgs& args) {
  out << "# x_fraction = " << format_double(args.x_fraction) << "\n";
  out << "# radius_quantile = " << format_double(args.radius_quantile) << "\n";
  out << "# metric = " << args.metric << "\n";
  out << "# clusters = " << args.clusters << "\n";
}

int run_quality(const QualityArgs& args) {
  const Metric metric = metric_from_string(args.metric);
  const SeparationConfig config{args.x_fraction, metric};

  if (!args.checkpoints.empty()) {
    // Per-epoch mode: a text file of `epoch manifest_path` lines, evaluated
    // on ground-truth clusters at every checkpoint.
    std::ifstream list(args.checkpoints);
    if (!list) throw DataError("cannot open checkpoint list: " + args.checkpoints);
    CheckpointSeries series;
    std::string line;
    const fs::path base = fs::path(args.checkpoints).parent_path();
    while (std::getline(list, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      int epoch = 0;
      std::string manifest;
      if (!(fields >> epoch >> manifest)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw DataError("checkpoint list: expected 'epoch manifest_path' per line");
        continue;
      }
      fs::path manifest_path(manifest);
      if (manifest_path.is_relative()) manifest_path = base / manifest_path;
      series.entries.push_back(
          {epoch, load_split(manifest_path, split_from_string(args.split))});
    }
    const auto rows = separation_evolution(series, config);
    auto out = open_output(args.out);
    out << "# x_fraction = " << format_double(args.x_fraction) << "\n";
    out << "# metric = " << args.metric << "\n";
    out << "epoch,cluster,gs\n";
    for (const auto& row : rows)
      for (std::size_t c = 0; c < row.gs.size(); ++c)
        out << row.epoch << ',' << c << ',' << format_double(row.gs[c]) << '\n';
    std::cout << "wrote " << args.out << " (" << rows.size() << " epochs)\n";
    return 0;
  }

  auto set = load_split(args.data, split_from_string(args.split));
  if (resolve_normalize(args.normalize, metric)) set = l2_normalize(set);
  const auto source = cluster_source_from_string(args.clusters);
  if ((source == ClusterAssignment::Source::kmeans ||
       source == ClusterAssignment::Source::gmm) &&
      args.k == 0)
    throw DataError("--k is required for kmeans and gmm cluster sources");
  const auto assignment = build_clusters(set, source, args.k, args.flags.seed, args.flags);

  std::vector<double> gs;
  if (assignment.num_clusters >= 2) gs = global_separation(set, assignment, config);
  std::vector<double> purity;
  if (set.labels) purity = cluster_purity(assignment, *set.labels);
  const auto radius = cluster_radius(set, assignment, metric, args.radius_quantile);

  auto out = open_output(args.out);
  write_quality_header(out, args);
  out << "cluster,size,gs,purity,radius\n";
  for (std::size_t c = 0; c < assignment.num_clusters; ++c) {
    out << c << ',' << assignment.members[c].size() << ',';
    if (!gs.empty()) out << format_double(gs[c]);
    out << ',';
    if (!purity.empty()) out << format_double(purity[c]);
    out << ',' << format_double(radius[c]) << '\n';
  }
  std::cout << "wrote " << args.out << " (" << assignment.num_clusters << " clusters)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string model;
  std::string data;
  std::string split = "test_id";
  std::string mode = "cluster";
  std::string out;
};

int run_score(const ScoreArgs& args) {
  const auto model = load_cluster_model(args.model);
  auto samples = load_split(args.data, split_from_string(args.split));
  if (model.normalized_inputs) samples = l2_normalize(samples);
  const ThresholdMode mode = threshold_mode_from_string(args.mode);
  const auto scores = score_set(model, samples, mode);
  auto out = open_output(args.out);
  out << "sample,assigned_cluster,raw_distance,probability\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    out << i << ',' << scores[i].assigned_cluster << ','
        << format_double(scores[i].raw_distance) << ',' << format_double(scores[i].value)
        << '\n';
  std::cout << "wrote " << args.out << " (" << scores.size() << " samples, mode "
            << to_string(mode) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::vector<double> read_score_column(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError(path.string() + " is empty");
  std::vector<std::string> columns;
  std::istringstream head(header);
  std::string cell;
  while (std::getline(head, cell, ',')) columns.push_back(cell);
  std::size_t column = columns.size();
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == "probability") column = i;
  if (column == columns.size())
    throw DataError(path.string() + " has no 'probability' column");
  std::vector<double> values;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    std::size_t index = 0;
    double value = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(fields, field, ',')) {
      if (index++ != column) continue;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
      if (res.ec != std::errc())
        throw DataError(path.string() + " row " + std::to_string(row) +
                        ": bad probability '" + field + "'");
    }
    values.push_back(value);
    ++row;
  }
  if (values.empty()) throw DataError(path.string() + " has no score rows");
  return values;
}

struct EvalArgs {
  std::string id_scores;
  std::string ood_scores;
  std::string roc;
  std::string out;
};

int run_eval(const EvalArgs& args) {
  std::vector<BinaryScoredSample> samples;
  const auto id_values = read_score_column(args.id_scores);
  const auto ood_values = read_score_column(args.ood_scores);
  for (const double v : id_values) samples.push_back({v, true});
  for (const double v : ood_values) samples.push_back({v, false});
  const double area = auroc(samples);
  std::cout << "auroc = " << format_double(area) << " (n_id = " << id_values.size()
            << ", n_ood = " << ood_values.size() << ")\n";
  if (!args.roc.empty()) {
    const auto curve = roc_curve(samples);
    auto out = open_output(args.roc);
    out << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : curve)
      out << format_double(fpr) << ',' << format_double(tpr) << '\n';
  }
  if (!args.out.empty()) {
    auto out = open_output(args.out);
    out << "auroc,n_id,n_ood\n";
    out << format_double(area) << ',' << id_values.size() << ',' << ood_values.size()
        << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::vector<std::string> grid;
  std::string k_list = "1,5,10,15,20";
  bool raw_cosine = false;
  std::string out;
  FitFlags flags;
};

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> values;
  std::istringstream fields(text);
  std::string cell;
  while (std::getline(fields, cell, ',')) {
    std::size_t k = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), k);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || k == 0)
      throw DataError("bad K value '" + cell + "' in --k-list");
    values.push_back(k);
  }
  if (values.empty()) throw DataError("--k-list is empty");
  return values;
}

SweepCell parse_grid_cell(const std::string& text, std::optional<std::size_t> gt_k) {
  std::vector<std::string> parts;
  std::istringstream fields(text);
  std::string cell;
  while (std::getline(fields, cell, ':')) parts.push_back(cell);
  if (parts.size() != 4)
    throw DataError("grid cell '" + text + "' must be source:metric:K:mode");
  SweepCell out;
  out.source = cluster_source_from_string(parts[0]);
  out.metric = metric_from_string(parts[1]);
  if (parts[2] == "gt") {
    if (!gt_k) throw DataError("grid cell '" + text + "' uses K=gt but the data is unlabeled");
    out.k = *gt_k;
  } else {
    const auto res = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(),
                                     out.k);
    if (res.ec != std::errc() || res.ptr != parts[2].data() + parts[2].size())
      throw DataError("grid cell '" + text + "' has a bad K value");
  }
  out.mode = threshold_mode_from_string(parts[3]);
  return out;
}

int run_sweep_command(const SweepArgs& args) {
  const auto sets = load_manifest(args.data);
  const EmbeddingSet* train = nullptr;
  const EmbeddingSet* test_id = nullptr;
  const EmbeddingSet* ood = nullptr;
  for (const auto& set : sets) {
    if (set.split == Split::train) train = &set;
    if (set.split == Split::test_id) test_id = &set;
    if (set.split == Split::ood) ood = &set;
  }
  if (train == nullptr || test_id == nullptr || ood == nullptr)
    throw DataError("sweep needs train, test_id and ood splits in " + args.data);

  std::optional<std::size_t> gt_k;
  if (train->labels) gt_k = from_labels(*train).num_clusters;

  std::vector<SweepCell> cells;
  if (args.grid.empty()) {
    cells = default_grid(train->labels.has_value(), parse_k_list(args.k_list), gt_k);
  } else {
    for (const auto& cell_text : args.grid)
      cells.push_back(parse_grid_cell(cell_text, gt_k));
  }

  SweepOptions options;
  options.seed = args.flags.seed;
  options.kmeans = args.flags.kmeans();
  options.gmm = args.flags.gmm();
  options.normalize_for_cosine = !args.raw_cosine;

  const auto report = run_sweep(*train, *test_id, *ood, cells, options);

  fs::create_directories(args.out);
  {
    auto out = open_output(fs::path(args.out) / "sweep.csv");
    report.write_csv(out);
  }
  {
    nlohmann::json doc;
    doc["data"] = args.data;
    doc["seed"] = args.flags.seed;
    doc["normalize_cosine"] = options.normalize_for_cosine;
    auto& rows = doc["rows"];
    rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
      nlohmann::json cell;
      cell["source"] = to_string(row.source);
      cell["metric"] = to_string(row.metric);
      cell["k"] = row.k;
      cell["mode"] = to_string(row.mode);
      if (row.error.empty()) cell["auroc"] = row.auroc;
      else cell["error"] = row.error;
      cell["n_id"] = row.n_id;
      cell["n_ood"] = row.n_ood;
      rows.push_back(std::move(cell));
    }
    auto out = open_output(fs::path(args.out) / "sweep.json");
    out << doc.dump(2) << "\n";
  }
  {
    auto out = open_output(fs::path(args.out) / "run_manifest.txt");
    out << "command = sweep\n";
    out << "data = " << args.data << "\n";
    out << "seed = " << args.flags.seed << "\n";
    out << "k_list = " << args.k_list << "\n";
    out << "kmeans_max_iter = " << args.flags.kmeans_max_iter << "\n";
    out << "em_max_iter = " << args.flags.em_max_iter << "\n";
    out << "tol = " << format_double(args.flags.tol) << "\n";
    out << "restarts = " << args.flags.restarts << "\n";
    out << "normalize_cosine = " << (options.normalize_for_cosine ? 1 : 0) << "\n";
    out << "grid_cells = " << cells.size() << "\n";
    for (const auto& cell_text : args.grid) out << "grid = " << cell_text << "\n";
  }

  std::size_t errors = 0;
  for (const auto& row : report.rows)
    if (!row.error.empty()) ++errors;
  std::cout << "wrote " << (fs::path(args.out) / "sweep.csv").string() << " ("
            << report.rows.size() << " cells, " << errors << " errors)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-based out-of-distribution detection over embedding files"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = parallel::hardware_threads();
  app.add_option("--threads", threads, "Worker threads (results do not depend on this)");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic blob dataset trio");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--clusters", synth_args.clusters, "Number of blobs");
  synth->add_option("--per-cluster", synth_args.per_cluster, "Train samples per blob");
  synth->add_option("--test-per-cluster", synth_args.test_per_cluster,
                    "Test-ID samples per blob");
  synth->add_option("--ood-per-cluster", synth_args.ood_per_cluster, "OOD samples per blob");
  synth->add_option("--dim", synth_args.dim, "Embedding dimension");
  synth->add_option("--scale", synth_args.scale, "Center sphere radius");
  synth->add_option("--sigma", synth_args.sigma, "Per-coordinate sample stddev");
  synth->add_option("--ood-offset", synth_args.ood_offset,
                    "OOD center displacement in sigma units");
  synth->add_option("--seed", synth_args.seed, "Generator seed");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit clusters and a scoring model");
  fit->add_option("--data", fit_args.data, "Dataset manifest")->required();
  fit->add_option("--split", fit_args.split, "Split to fit on");
  fit->add_option("--source", fit_args.source, "Cluster source: gt, single, kmeans, gmm");
  fit->add_option("--k", fit_args.k, "Cluster count for kmeans/gmm");
  fit->add_option("--metric", fit_args.metric, "cosine, euclidean or mahalanobis");
  fit->add_option("--normalize", fit_args.normalize, "auto, on or off");
  fit->add_option("--out", fit_args.out, "Model output directory")->required();
  add_fit_flags(fit, fit_args.flags);

  QualityArgs quality_args;
  auto* quality = app.add_subcommand("quality", "Separation / purity / radius report");
  quality->add_option("--data", quality_args.data, "Dataset manifest");
  quality->add_option("--checkpoints", quality_args.checkpoints,
                      "File of 'epoch manifest_path' lines (evolution mode)");
  quality->add_option("--split", quality_args.split, "Split to analyse");
  quality->add_option("--clusters", quality_args.clusters,
                      "Cluster source: gt, single, kmeans, gmm");
  quality->add_option("--k", quality_args.k, "Cluster count for kmeans/gmm");
  quality->add_option("--metric", quality_args.metric, "cosine or euclidean");
  quality->add_option("--normalize", quality_args.normalize, "auto, on or off");
  quality->add_option("--x-fraction", quality_args.x_fraction,
                      "Smallest fraction of each pairwise distance list");
  quality->add_option("--radius-quantile", quality_args.radius_quantile,
                      "Quantile for the cluster radius");
  quality->add_option("--out", quality_args.out, "Report CSV path")->required();
  add_fit_flags(quality, quality_args.flags);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score a split with a saved model");
  score->add_option("--model", score_args.model, "Model directory")->required();
  score->add_option("--data", score_args.data, "Dataset manifest")->required();
  score->add_option("--split", score_args.split, "Split to score");
  score->add_option("--mode", score_args.mode, "cluster, global or gmm");
  score->add_option("--out", score_args.out, "Scores CSV path")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "AUROC from two score CSVs");
  eval->add_option("--id", eval_args.id_scores, "Score CSV for ID samples")->required();
  eval->add_option("--ood", eval_args.ood_scores, "Score CSV for OOD samples")->required();
  eval->add_option("--roc", eval_args.roc, "Optional ROC curve CSV path");
  eval->add_option("--out", eval_args.out, "Optional result CSV path");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "AUROC grid over clusters/metrics/thresholds");
  sweep->add_option("--data", sweep_args.data, "Dataset manifest with all three splits")
      ->required();
  sweep->add_option("--grid", sweep_args.grid,
                    "Grid cells source:metric:K:mode (default: full grid)");
  sweep->add_option("--k-list", sweep_args.k_list, "K values for kmeans/gmm sources");
  sweep->add_flag("--raw-cosine", sweep_args.raw_cosine,
                  "Run cosine cells on raw rows instead of L2-normalized");
  sweep->add_option("--out", sweep_args.out, "Output directory")->required();
  add_fit_flags(sweep, sweep_args.flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  parallel::set_threads(threads);
  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (fit->parsed()) return run_fit(fit_args);
    if (quality->parsed()) return run_quality(quality_args);
    if (score->parsed()) return run_score(score_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (sweep->parsed()) return run_sweep_command(sweep_args);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
