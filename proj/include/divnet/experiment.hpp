#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "divnet/config.hpp"
#include "divnet/csv.hpp"
#include "divnet/dataset.hpp"
#include "divnet/loaders.hpp"
#include "divnet/mlp.hpp"
#include "divnet/prune.hpp"
#include "divnet/svg.hpp"

namespace divnet {

// --- dataset resolution ------------------------------------------------------

inline std::string dataset_root(const ConfigFile& cfg) {
  if (cfg.has("dataset.data_root")) return cfg.get_string("dataset.data_root", "data");
  if (const char* env = std::getenv("DIVNET_DATA_ROOT"); env && *env) return env;
  return "data";
}

namespace detail {

inline std::string join_path(const std::string& root, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  return root + "/" + path;
}

}  // namespace detail

/// Build the train/test split a config's [dataset] section describes.
/// Kinds: digits (bundled), idx, amat, cifar10, synth_blobs, rot_synth.
inline DataSplit resolve_dataset(const ConfigFile& cfg) {
  const std::string kind = cfg.require_string("dataset.kind");
  const std::string root = dataset_root(cfg);
  DataSplit split;

  if (kind == "digits") {
    split.train = load_idx(detail::join_path(root, "digits/digits-train-images.idx3"),
                           detail::join_path(root, "digits/digits-train-labels.idx1"));
    split.test = load_idx(detail::join_path(root, "digits/digits-test-images.idx3"),
                          detail::join_path(root, "digits/digits-test-labels.idx1"));
    split.train.name = split.test.name = "digits";
  } else if (kind == "idx") {
    split.train = load_idx(detail::join_path(root, cfg.require_string("dataset.train_images")),
                           detail::join_path(root, cfg.require_string("dataset.train_labels")),
                           static_cast<int>(cfg.get_u64("dataset.class_count", 10)));
    split.test = load_idx(detail::join_path(root, cfg.require_string("dataset.test_images")),
                          detail::join_path(root, cfg.require_string("dataset.test_labels")),
                          static_cast<int>(cfg.get_u64("dataset.class_count", 10)));
  } else if (kind == "amat") {
    const auto features = cfg.require_u64("dataset.feature_count");
    const int classes = static_cast<int>(cfg.get_u64("dataset.class_count", 0));
    split.train =
        load_amat(detail::join_path(root, cfg.require_string("dataset.train_path")), features,
                  classes);
    split.test = load_amat(detail::join_path(root, cfg.require_string("dataset.test_path")),
                           features, classes);
    if (split.train.class_count != split.test.class_count) {
      const int c = std::max(split.train.class_count, split.test.class_count);
      split.train.class_count = split.test.class_count = c;
    }
  } else if (kind == "cifar10") {
    std::vector<std::string> train_paths, test_paths;
    for (const auto& p : cfg.get_string_list("dataset.train_batches"))
      train_paths.push_back(detail::join_path(root, p));
    for (const auto& p : cfg.get_string_list("dataset.test_batches"))
      test_paths.push_back(detail::join_path(root, p));
    if (train_paths.empty() || test_paths.empty())
      throw format_error(cfg.origin() + ": cifar10 needs train_batches and test_batches");
    split.train = load_cifar10(train_paths);
    split.test = load_cifar10(test_paths);
  } else if (kind == "synth_blobs") {
    split = synth_blobs(static_cast<int>(cfg.get_u64("dataset.classes", 10)),
                        cfg.get_u64("dataset.features", 16), cfg.get_u64("dataset.per_class", 100),
                        cfg.get_double("dataset.spread", 0.05), cfg.get_u64("dataset.seed", 7));
  } else if (kind == "rot_synth") {
    // rotation-augmented variant of an image dataset; the train/test sources
    // stay separate so augmentation cannot leak across the split
    const std::string source = cfg.get_string("dataset.source", "digits");
    DataSplit base;
    std::size_t img_h = 0, img_w = 0;
    if (source == "digits") {
      base.train = load_idx(detail::join_path(root, "digits/digits-train-images.idx3"),
                            detail::join_path(root, "digits/digits-train-labels.idx1"));
      base.test = load_idx(detail::join_path(root, "digits/digits-test-images.idx3"),
                           detail::join_path(root, "digits/digits-test-labels.idx1"));
      base.train.name = base.test.name = "digits";
      img_h = img_w = 8;
    } else if (source == "idx") {
      base.train = load_idx(detail::join_path(root, cfg.require_string("dataset.train_images")),
                            detail::join_path(root, cfg.require_string("dataset.train_labels")),
                            static_cast<int>(cfg.get_u64("dataset.class_count", 10)));
      base.test = load_idx(detail::join_path(root, cfg.require_string("dataset.test_images")),
                           detail::join_path(root, cfg.require_string("dataset.test_labels")),
                           static_cast<int>(cfg.get_u64("dataset.class_count", 10)));
      base.train.name = base.test.name = "mnist";
      img_h = cfg.get_u64("dataset.image_height", 28);
      img_w = cfg.get_u64("dataset.image_width", 28);
    } else {
      throw format_error(cfg.origin() + ": rot_synth source must be digits or idx");
    }
    const std::uint64_t seed = cfg.get_u64("dataset.seed", 11);
    split.train = augment_rotated(base.train, cfg.get_u64("dataset.train_size", base.train.size()),
                                  img_h, img_w, SeedDeriver(seed).with("train").value());
    split.test = augment_rotated(base.test, cfg.get_u64("dataset.test_size", base.test.size()),
                                 img_h, img_w, SeedDeriver(seed).with("test").value());
  } else {
    throw format_error(cfg.origin() + ": unknown dataset kind '" + kind + "'");
  }

  const std::uint64_t sub_seed = cfg.get_u64("dataset.subsample_seed", 7);
  if (const auto n = cfg.get_u64("dataset.train_subsample", 0); n > 0 && n < split.train.size())
    split.train = subsample(split.train, n, SeedDeriver(sub_seed).with("train").value());
  if (const auto n = cfg.get_u64("dataset.test_subsample", 0); n > 0 && n < split.test.size())
    split.test = subsample(split.test, n, SeedDeriver(sub_seed).with("test").value());
  split.train.validate();
  split.test.validate();
  if (split.train.features() != split.test.features() ||
      split.train.class_count != split.test.class_count)
    throw format_error(cfg.origin() + ": train/test splits disagree on width or classes");
  return split;
}

// --- experiment spec ----------------------------------------------------------

struct ExperimentSpec {
  DataSplit data;
  std::vector<std::size_t> architecture;
  TrainConfig train_cfg;  // per-repetition seeds are derived from base_seed
  std::vector<std::string> strategies;
  std::vector<double> fractions;  // fraction of neurons kept, strictly increasing
  std::vector<int> layers;
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";
  DppOptions dpp;
  double ridge = 1e-8;
  bool cache_models = true;
  std::size_t prune_at_epoch = 0;  // > 0: prune mid-training (experimental flag)

  void validate() const {
    if (architecture.size() < 3)
      throw precondition_error("ExperimentSpec: need at least one hidden layer");
    if (architecture.front() != data.train.features())
      throw precondition_error("ExperimentSpec: input width != dataset features");
    if (architecture.back() != static_cast<std::size_t>(data.train.class_count))
      throw precondition_error("ExperimentSpec: output width != class count");
    if (repetitions < 1) throw precondition_error("ExperimentSpec: repetitions must be >= 1");
    if (strategies.empty()) throw precondition_error("ExperimentSpec: no strategies");
    if (fractions.empty()) throw precondition_error("ExperimentSpec: no fractions");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (fractions[i] <= 0.0 || fractions[i] > 1.0)
        throw precondition_error("ExperimentSpec: fractions must lie in (0, 1]");
      if (i > 0 && fractions[i] <= fractions[i - 1])
        throw precondition_error("ExperimentSpec: fractions must be strictly increasing");
    }
    for (int l : layers)
      if (l < 1 || static_cast<std::size_t>(l) + 1 >= architecture.size())
        throw precondition_error("ExperimentSpec: target layer outside the hidden range");
  }
};

struct ParsedStrategy {
  std::string label;
  StrategyConfig::Kind kind = StrategyConfig::Kind::dpp;
  bool reweight = false;
};

inline ParsedStrategy parse_strategy(const std::string& name) {
  ParsedStrategy s;
  s.label = name;
  std::string base = name;
  if (base.size() > 3 && base.substr(base.size() - 3) == "+rw") {
    s.reweight = true;
    base = base.substr(0, base.size() - 3);
  }
  if (base == "divnet") {
    s.kind = StrategyConfig::Kind::dpp;
    s.reweight = true;
  } else if (base == "dpp") {
    s.kind = StrategyConfig::Kind::dpp;
  } else if (base == "random") {
    s.kind = StrategyConfig::Kind::random;
  } else if (base == "importance") {
    s.kind = StrategyConfig::Kind::importance;
  } else {
    throw format_error("unknown pruning strategy '" + name + "'");
  }
  return s;
}

inline DppOptions dpp_options_from_config(const ConfigFile& cfg) {
  DppOptions opt;
  const std::string beta = cfg.get_string("dpp.beta", "auto");
  if (beta != "auto") opt.beta = cfg.require_double("dpp.beta");
  opt.epsilon = cfg.get_double("dpp.epsilon", 0.01);
  const std::string gamma = cfg.get_string("dpp.gamma_mode", "paper");
  if (gamma == "paper")
    opt.gamma_mode = DppOptions::GammaMode::paper;
  else if (gamma == "exact")
    opt.gamma_mode = DppOptions::GammaMode::exact;
  else if (gamma == "none")
    opt.gamma_mode = DppOptions::GammaMode::none;
  else
    throw format_error(cfg.origin() + ": dpp.gamma_mode must be paper/exact/none");
  const std::string sampler = cfg.get_string("dpp.sampler", "kdpp");
  if (sampler == "kdpp")
    opt.sampler = DppOptions::Sampler::kdpp;
  else if (sampler == "dpp")
    opt.sampler = DppOptions::Sampler::dpp;
  else if (sampler == "best_of_m")
    opt.sampler = DppOptions::Sampler::best_of_m;
  else if (sampler == "greedy")
    opt.sampler = DppOptions::Sampler::greedy;
  else
    throw format_error(cfg.origin() + ": dpp.sampler must be kdpp/dpp/best_of_m/greedy");
  opt.best_of_m = cfg.get_u64("dpp.best_of_m", 10);
  opt.instance_cap = cfg.get_u64("dpp.instance_cap", 0);
  return opt;
}

inline TrainConfig train_config_from_config(const ConfigFile& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.get_double("network.learning_rate", 0.1);
  tc.momentum = cfg.get_double("network.momentum", 0.9);
  tc.batch_size = cfg.get_u64("network.batch_size", 100);
  tc.error_threshold = cfg.get_double("network.error_threshold", 0.01);
  tc.max_epochs = cfg.get_u64("network.max_epochs", 100);
  tc.seed = cfg.get_u64("network.seed", 0);
  return tc;
}

inline ExperimentSpec spec_from_config(const ConfigFile& cfg) {
  ExperimentSpec spec;
  spec.data = resolve_dataset(cfg);
  for (double v : cfg.get_double_list("network.layers"))
    spec.architecture.push_back(static_cast<std::size_t>(v));
  spec.train_cfg = train_config_from_config(cfg);
  spec.strategies = cfg.get_string_list("experiment.strategies");
  if (spec.strategies.empty()) spec.strategies = {"divnet", "random"};
  for (const auto& s : spec.strategies) parse_strategy(s);  // validate early
  spec.fractions = cfg.get_double_list("experiment.fractions");
  if (spec.fractions.empty()) spec.fractions = {0.25, 0.5, 0.75};
  for (double v : cfg.get_double_list("experiment.layers"))
    spec.layers.push_back(static_cast<int>(v));
  if (spec.layers.empty()) spec.layers = {1};
  spec.repetitions = cfg.get_u64("experiment.repetitions", 5);
  spec.base_seed = cfg.get_u64("experiment.base_seed", 1);
  spec.output_dir = cfg.get_string("experiment.output_dir", "out/experiment");
  spec.dpp = dpp_options_from_config(cfg);
  spec.ridge = cfg.get_double("dpp.ridge", 1e-8);
  spec.cache_models = cfg.get_bool("experiment.cache_models", true);
  spec.prune_at_epoch = cfg.get_u64("experiment.prune_at_epoch", 0);
  spec.validate();
  return spec;
}

// --- metrics ------------------------------------------------------------------

struct MetricsRecord {
  std::string strategy;
  double fraction = 1.0;
  std::uint64_t seed = 0;  // derived cell seed
  double train_error = 0.0;
  double test_error = 0.0;
  double expected_dpp_size = std::numeric_limits<double>::quiet_NaN();  // NaN: no kernel built
  bool failed = false;
  double t_train_s = 0.0;
  double t_prune_s = 0.0;
};

inline std::uint64_t cell_seed(std::uint64_t base, const std::string& strategy, double fraction,
                               std::size_t rep) {
  return SeedDeriver(base)
      .with("cell")
      .with(strategy)
      .with(static_cast<std::uint64_t>(std::llround(fraction * 1e6)))
      .with(rep)
      .value();
}

inline std::uint64_t train_seed(std::uint64_t base, std::size_t rep) {
  return SeedDeriver(base).with("train").with(rep).value();
}

/// Wall-clock columns are deliberately excluded from the CSVs (they go to
/// timings.log) so repeated runs with one base seed are byte-identical.
inline void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  CsvWriter csv(path,
                {"strategy", "fraction", "seed", "train_error", "test_error", "expected_dpp_size",
                 "status"});
  for (const auto& r : records) {
    csv.row({r.strategy, csv_num(r.fraction), std::to_string(r.seed),
             r.failed ? "nan" : csv_num(r.train_error), r.failed ? "nan" : csv_num(r.test_error),
             std::isnan(r.expected_dpp_size) ? "" : csv_num(r.expected_dpp_size),
             r.failed ? "failed" : "ok"});
  }
  csv.close();
}

struct SummaryRow {
  std::string strategy;
  double fraction = 0.0;
  std::size_t count = 0;
  double mean_train = 0.0, std_train = 0.0;
  double mean_test = 0.0, std_test = 0.0;
};

inline std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records) {
  // preserve first-appearance order of (strategy, fraction)
  std::vector<SummaryRow> rows;
  const auto find_row = [&](const MetricsRecord& r) -> SummaryRow& {
    for (auto& row : rows)
      if (row.strategy == r.strategy && row.fraction == r.fraction) return row;
    rows.push_back(SummaryRow{r.strategy, r.fraction, 0, 0, 0, 0, 0});
    return rows.back();
  };
  for (const auto& r : records) {
    if (r.failed) continue;
    auto& row = find_row(r);
    ++row.count;
    row.mean_train += r.train_error;
    row.mean_test += r.test_error;
  }
  for (auto& row : rows) {
    if (row.count == 0) continue;
    row.mean_train /= static_cast<double>(row.count);
    row.mean_test /= static_cast<double>(row.count);
  }
  for (const auto& r : records) {
    if (r.failed) continue;
    auto& row = find_row(r);
    row.std_train += (r.train_error - row.mean_train) * (r.train_error - row.mean_train);
    row.std_test += (r.test_error - row.mean_test) * (r.test_error - row.mean_test);
  }
  for (auto& row : rows) {
    if (row.count > 1) {
      row.std_train = std::sqrt(row.std_train / static_cast<double>(row.count - 1));
      row.std_test = std::sqrt(row.std_test / static_cast<double>(row.count - 1));
    } else {
      row.std_train = row.std_test = 0.0;
    }
  }
  return rows;
}

inline void write_summary_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  CsvWriter csv(path, {"strategy", "fraction", "n", "mean_train_error", "std_train_error",
                       "mean_test_error", "std_test_error"});
  for (const auto& row : summarize(records))
    csv.row({row.strategy, csv_num(row.fraction), std::to_string(row.count),
             csv_num(row.mean_train), csv_num(row.std_train), csv_num(row.mean_test),
             csv_num(row.std_test)});
  csv.close();
}

inline void write_timings_log(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw format_error(path + ": cannot open for writing");
  os << "# wall-clock diagnostics; not part of the deterministic outputs\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "strategy=%s fraction=%g rep_t_train_s=%.3f t_prune_s=%.4f\n",
                  r.strategy.c_str(), r.fraction, r.t_train_s, r.t_prune_s);
    os << buf;
  }
}

inline void write_error_plot(const std::vector<MetricsRecord>& records, bool test_error,
                             const std::string& strategies_order_hint, const std::string& title,
                             const std::string& path) {
  (void)strategies_order_hint;
  const auto rows = summarize(records);
  std::vector<PlotSeries> series;
  for (const auto& row : rows) {
    PlotSeries* s = nullptr;
    for (auto& existing : series)
      if (existing.name == row.strategy) s = &existing;
    if (!s) {
      series.push_back(PlotSeries{row.strategy, {}});
      s = &series.back();
    }
    s->points.push_back(PlotPoint{row.fraction, test_error ? row.mean_test : row.mean_train,
                                  test_error ? row.std_test : row.std_train});
  }
  PlotAxes axes;
  axes.title = title;
  axes.x_label = "fraction of neurons kept";
  axes.y_label = test_error ? "test error" : "train error";
  emit_plot(series, axes, path);
}

// --- experiment runner ---------------------------------------------------------

struct TrainedModel {
  NetworkParams net;
  double train_seconds = 0.0;
  bool failed = false;
  std::string failure;
};

namespace detail {

inline std::string model_cache_path(const ExperimentSpec& spec, std::size_t rep) {
  std::string arch;
  for (std::size_t i = 0; i < spec.architecture.size(); ++i)
    arch += (i ? "-" : "") + std::to_string(spec.architecture[i]);
  return spec.output_dir + "/models/rep" + std::to_string(rep) + "_" + arch + "_seed" +
         std::to_string(train_seed(spec.base_seed, rep)) + ".bin";
}

inline TrainedModel train_repetition(const ExperimentSpec& spec, std::size_t rep) {
  TrainedModel out;
  TrainConfig cfg = spec.train_cfg;
  cfg.seed = train_seed(spec.base_seed, rep);
  const std::string cache = model_cache_path(spec, rep);
  if (spec.cache_models && std::filesystem::exists(cache)) {
    out.net = load_model(cache);
    return out;
  }
  try {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = train(init_network(spec.architecture, cfg.seed), spec.data.train, cfg);
    out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.net = std::move(result.net);
    if (spec.cache_models) {
      std::filesystem::create_directories(spec.output_dir + "/models");
      save_model(out.net, cache, cfg);
      CsvWriter log(cache + ".epochs.csv", {"epoch", "train_error", "mean_loss"});
      for (const auto& e : result.log)
        log.row({std::to_string(e.epoch), csv_num(e.train_error), csv_num(e.mean_loss)});
      log.close();
    }
  } catch (const training_error& e) {
    out.failed = true;
    out.failure = e.what();
  }
  return out;
}

struct CellResult {
  NetworkParams net;
  std::vector<PruneDecision> decisions;  // one per pruned layer
  double expected_dpp_size = std::numeric_limits<double>::quiet_NaN();
  double prune_seconds = 0.0;
};

/// Prune the spec's target layers front to back (activations recomputed
/// after each layer's surgery) with one strategy at one kept-fraction.
inline CellResult prune_cell(const ExperimentSpec& spec, const NetworkParams& base,
                             const ParsedStrategy& strategy, double fraction,
                             std::uint64_t seed) {
  CellResult cell;
  cell.net = base;
  const auto t0 = std::chrono::steady_clock::now();
  bool recorded_expected = false;
  // front to back: fused weights change downstream activations, so later
  // layers must see the post-surgery network
  std::vector<int> layers_in_order = spec.layers;
  std::sort(layers_in_order.begin(), layers_in_order.end());
  for (int layer : layers_in_order) {
    const std::size_t width = cell.net.layer_sizes[static_cast<std::size_t>(layer)];
    const std::size_t target_k = std::min<std::size_t>(
        width, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                            fraction * static_cast<double>(width)))));
    if (target_k >= width) continue;  // fraction 1.0: nothing to prune

    const std::uint64_t layer_seed =
        SeedDeriver(seed).with("layer").with(static_cast<std::uint64_t>(layer)).value();
    const bool needs_activations =
        strategy.kind == StrategyConfig::Kind::dpp || strategy.reweight;
    ActivationMatrix acts;
    if (needs_activations)
      acts = layer_activations(cell.net, spec.data.train, layer, spec.dpp.instance_cap,
                               SeedDeriver(layer_seed).with("instance_cap").value());

    PruneDecision decision;
    switch (strategy.kind) {
      case StrategyConfig::Kind::dpp: {
        DppKernel kernel = build_kernel(acts, spec.dpp.beta, spec.dpp.epsilon);
        if (!recorded_expected) {
          cell.expected_dpp_size = expected_size(kernel);
          recorded_expected = true;
        }
        if (spec.dpp.gamma_mode == DppOptions::GammaMode::paper)
          kernel = rescale_to_k(kernel, target_k, RescaleMode::paper);
        else if (spec.dpp.gamma_mode == DppOptions::GammaMode::exact)
          kernel = rescale_to_k(kernel, target_k, RescaleMode::exact);
        Rng rng(layer_seed);
        NeuronSubset subset;
        switch (spec.dpp.sampler) {
          case DppOptions::Sampler::kdpp:
            subset = sample_kdpp(kernel, target_k, rng);
            break;
          case DppOptions::Sampler::best_of_m:
            subset = sample_best_of_m(kernel, target_k, spec.dpp.best_of_m, rng);
            break;
          case DppOptions::Sampler::greedy:
            subset = greedy_map(kernel, target_k);
            break;
          case DppOptions::Sampler::dpp:
            for (int attempt = 0; attempt < 100; ++attempt) {
              subset = sample_dpp(kernel, rng);
              if (!subset.indices.empty() && subset.indices.size() < width) break;
            }
            if (subset.indices.empty() || subset.indices.size() >= width)
              throw numeric_error("prune_cell: non-parametric draw kept none or all neurons");
            break;
        }
        decision = decision_from_kept(layer, width, subset.indices);
        break;
      }
      case StrategyConfig::Kind::random: {
        Rng rng(layer_seed);
        decision = select_random(layer, width, target_k, rng);
        break;
      }
      case StrategyConfig::Kind::importance:
        decision = select_importance(layer, cell.net.weights[static_cast<std::size_t>(layer)],
                                     target_k);
        break;
    }

    if (strategy.reweight) {
      decision = compute_fusion(acts, std::move(decision), spec.ridge);
      cell.net = apply_fusion(cell.net, decision);
    } else {
      cell.net = prune_without_fusion(cell.net, decision);
    }
    cell.decisions.push_back(std::move(decision));
  }
  cell.prune_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

inline MetricsRecord run_cell_with_interleaved_training(const ExperimentSpec& spec,
                                                        const ParsedStrategy& strategy,
                                                        double fraction, std::size_t rep) {
  // experimental prune-during-training path: train to the interleave point,
  // prune, then finish training on the smaller network
  MetricsRecord rec;
  rec.strategy = strategy.label;
  rec.fraction = fraction;
  rec.seed = cell_seed(spec.base_seed, strategy.label, fraction, rep);
  TrainConfig cfg = spec.train_cfg;
  cfg.seed = train_seed(spec.base_seed, rep);
  try {
    TrainConfig head = cfg;
    head.max_epochs = std::min(spec.prune_at_epoch, cfg.max_epochs);
    head.error_threshold = 1e-12;  // do not stop early before the prune point
    const auto t0 = std::chrono::steady_clock::now();
    auto first = train(init_network(spec.architecture, cfg.seed), spec.data.train, head);
    const auto cellr = prune_cell(spec, first.net, strategy, fraction, rec.seed);
    rec.expected_dpp_size = cellr.expected_dpp_size;
    rec.t_prune_s = cellr.prune_seconds;
    NetworkParams net = cellr.net;
    if (cfg.max_epochs > head.max_epochs) {
      TrainConfig tail = cfg;
      tail.max_epochs = cfg.max_epochs - head.max_epochs;
      tail.seed = SeedDeriver(cfg.seed).with("tail").value();
      net = train(std::move(net), spec.data.train, tail).net;
    }
    rec.t_train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.train_error = classification_error(net, spec.data.train);
    rec.test_error = classification_error(net, spec.data.test);
  } catch (const training_error&) {
    rec.failed = true;
  }
  return rec;
}

}  // namespace detail

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<double> baseline_train_error;  // per repetition
  std::vector<double> baseline_test_error;
  std::vector<double> train_seconds;  // per repetition (0 when cache-loaded)
};

/// Run strategy x fraction x repetition, training (or cache-loading) one
/// network per repetition. Deterministic given the spec and base seed:
/// every cell's RNG seed is derived, never shared.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult result;
  std::vector<ParsedStrategy> strategies;
  for (const auto& name : spec.strategies) strategies.push_back(parse_strategy(name));

  if (spec.prune_at_epoch > 0) {
    for (const auto& strategy : strategies)
      for (double fraction : spec.fractions)
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep)
          result.records.push_back(
              detail::run_cell_with_interleaved_training(spec, strategy, fraction, rep));
    return result;
  }

  std::vector<TrainedModel> models;
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
    models.push_back(detail::train_repetition(spec, rep));
    result.train_seconds.push_back(models.back().train_seconds);
    if (!models.back().failed) {
      result.baseline_train_error.push_back(
          classification_error(models.back().net, spec.data.train));
      result.baseline_test_error.push_back(classification_error(models.back().net, spec.data.test));
    } else {
      result.baseline_train_error.push_back(std::numeric_limits<double>::quiet_NaN());
      result.baseline_test_error.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }

  for (const auto& strategy : strategies) {
    for (double fraction : spec.fractions) {
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
        MetricsRecord rec;
        rec.strategy = strategy.label;
        rec.fraction = fraction;
        rec.seed = cell_seed(spec.base_seed, strategy.label, fraction, rep);
        rec.t_train_s = models[rep].train_seconds;
        if (models[rep].failed) {
          rec.failed = true;
          result.records.push_back(std::move(rec));
          continue;
        }
        try {
          const auto cell = detail::prune_cell(spec, models[rep].net, strategy, fraction, rec.seed);
          rec.expected_dpp_size = cell.expected_dpp_size;
          rec.t_prune_s = cell.prune_seconds;
          rec.train_error = classification_error(cell.net, spec.data.train);
          rec.test_error = classification_error(cell.net, spec.data.test);
        } catch (const error&) {
          rec.failed = true;
        }
        result.records.push_back(std::move(rec));
      }
    }
  }
  return result;
}

/// run_experiment plus the artifact files: metrics.csv, summary.csv,
/// timings.log and the two error plots.
inline ExperimentResult run_experiment_to_dir(const ExperimentSpec& spec,
                                              const std::string& title = "pruning comparison") {
  std::filesystem::create_directories(spec.output_dir);
  ExperimentResult result = run_experiment(spec);
  write_metrics_csv(result.records, spec.output_dir + "/metrics.csv");
  write_summary_csv(result.records, spec.output_dir + "/summary.csv");
  write_timings_log(result.records, spec.output_dir + "/timings.log");
  write_error_plot(result.records, true, "", title + " (test)", spec.output_dir + "/test_error.svg");
  write_error_plot(result.records, false, "", title + " (train)",
                   spec.output_dir + "/train_error.svg");
  return result;
}

// --- heat map -------------------------------------------------------------------

/// Activations of k selected neurons on one instance per class, as a CSV
/// (rows: classes 0..C-1; columns: neurons). mode "dpp" samples a k-DPP on
/// the training kernel, "first" takes the lowest-index neurons.
inline void heatmap_export(const NetworkParams& net, const Dataset& data, int layer_index,
                           std::size_t k, const std::string& mode, std::uint64_t seed,
                           const DppOptions& dpp_opts, const std::string& path) {
  if (layer_index < 1 || static_cast<std::size_t>(layer_index) > net.hidden_count())
    throw precondition_error("heatmap_export: bad layer index");
  const std::size_t width = net.layer_sizes[static_cast<std::size_t>(layer_index)];
  if (k < 1 || k > width) throw precondition_error("heatmap_export: k outside [1, layer width]");

  std::vector<int> neurons;
  if (mode == "first") {
    for (std::size_t i = 0; i < k; ++i) neurons.push_back(static_cast<int>(i));
  } else if (mode == "dpp") {
    const auto acts = layer_activations(net, data, layer_index, dpp_opts.instance_cap,
                                        SeedDeriver(seed).with("instance_cap").value());
    DppKernel kernel = build_kernel(acts, dpp_opts.beta, dpp_opts.epsilon);
    if (k < width) {
      if (dpp_opts.gamma_mode == DppOptions::GammaMode::paper)
        kernel = rescale_to_k(kernel, k, RescaleMode::paper);
      else if (dpp_opts.gamma_mode == DppOptions::GammaMode::exact)
        kernel = rescale_to_k(kernel, k, RescaleMode::exact);
    }
    Rng rng(seed);
    neurons = sample_kdpp(kernel, k, rng).indices;
  } else {
    throw precondition_error("heatmap_export: mode must be dpp or first");
  }

  // one instance per class: first occurrence
  std::vector<std::ptrdiff_t> instance_of_class(static_cast<std::size_t>(data.class_count), -1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& slot = instance_of_class[static_cast<std::size_t>(data.labels[i])];
    if (slot < 0) slot = static_cast<std::ptrdiff_t>(i);
  }
  for (int c = 0; c < data.class_count; ++c)
    if (instance_of_class[static_cast<std::size_t>(c)] < 0)
      throw precondition_error("heatmap_export: class " + std::to_string(c) + " has no instance");

  Matrix batch(static_cast<std::size_t>(data.class_count), data.features());
  for (int c = 0; c < data.class_count; ++c) {
    const auto src = static_cast<std::size_t>(instance_of_class[static_cast<std::size_t>(c)]);
    std::copy(data.inputs.row_ptr(src), data.inputs.row_ptr(src) + data.features(),
              batch.row_ptr(static_cast<std::size_t>(c)));
  }
  const auto acts = forward(net, batch);
  const Matrix& layer = acts[static_cast<std::size_t>(layer_index)];

  std::vector<std::string> header{"class"};
  for (int n : neurons) header.push_back("neuron_" + std::to_string(n));
  CsvWriter csv(path, header);
  for (int c = 0; c < data.class_count; ++c) {
    std::vector<std::string> row{std::to_string(c)};
    for (int n : neurons)
      row.push_back(csv_num(layer(static_cast<std::size_t>(c), static_cast<std::size_t>(n))));
    csv.row(row);
  }
  csv.close();
}

// --- beta sweeps ------------------------------------------------------------------

struct BetaSweepRow {
  double beta = 0.0;
  std::size_t rep = 0;
  double expected_dpp_size = 0.0;
  std::size_t dpp_sample_size = 0;
  double train_error_after = std::numeric_limits<double>::quiet_NaN();
};

/// Kernel bandwidth sweep on the first target layer. For every beta and
/// repetition: the expected DPP size, one non-parametric DPP draw's size,
/// and (with_prune_error) the training error after a DivNet prune at the
/// first configured fraction.
inline std::vector<BetaSweepRow> beta_sweep(const ExperimentSpec& spec,
                                            const std::vector<double>& betas,
                                            bool with_prune_error) {
  spec.validate();
  for (double b : betas)
    if (!(b > 0.0)) throw precondition_error("beta_sweep: betas must be > 0");
  const int layer = spec.layers.front();
  const double fraction = spec.fractions.front();

  std::vector<TrainedModel> models;
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep)
    models.push_back(detail::train_repetition(spec, rep));

  std::vector<BetaSweepRow> rows;
  for (double beta : betas) {
    std::uint64_t beta_bits;
    std::memcpy(&beta_bits, &beta, 8);
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      if (models[rep].failed) continue;
      BetaSweepRow row;
      row.beta = beta;
      row.rep = rep;
      const std::uint64_t seed =
          SeedDeriver(spec.base_seed).with("beta_sweep").with(beta_bits).with(rep).value();
      const auto acts = layer_activations(models[rep].net, spec.data.train, layer,
                                          spec.dpp.instance_cap,
                                          SeedDeriver(seed).with("instance_cap").value());
      const DppKernel kernel = build_kernel(acts, beta, spec.dpp.epsilon);
      row.expected_dpp_size = expected_size(kernel);
      Rng rng(seed);
      row.dpp_sample_size = sample_dpp(kernel, rng).indices.size();

      if (with_prune_error) {
        // same cell seed as run_experiment's divnet cell, so a sweep point at
        // the experiment's own beta reproduces that cell exactly
        ExperimentSpec cell_spec = spec;
        cell_spec.dpp.beta = beta;
        const ParsedStrategy divnet_strategy = parse_strategy("divnet");
        const auto cell = detail::prune_cell(cell_spec, models[rep].net, divnet_strategy, fraction,
                                             cell_seed(spec.base_seed, "divnet", fraction, rep));
        row.train_error_after = classification_error(cell.net, spec.data.train);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_beta_sweep_outputs(const std::vector<BetaSweepRow>& rows, bool with_prune_error,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    CsvWriter csv(out_dir + "/beta_sweep.csv",
                  {"beta", "rep", "expected_dpp_size", "dpp_sample_size", "train_error_after"});
    for (const auto& r : rows)
      csv.row({csv_num(r.beta), std::to_string(r.rep), csv_num(r.expected_dpp_size),
               std::to_string(r.dpp_sample_size),
               std::isnan(r.train_error_after) ? "" : csv_num(r.train_error_after)});
    csv.close();
  }

  // group by beta, preserving order
  std::vector<double> betas;
  for (const auto& r : rows)
    if (betas.empty() || betas.back() != r.beta) betas.push_back(r.beta);

  PlotSeries mean_size{"mean sampled |Y|", {}}, expected{"expected size", {}};
  PlotSeries err_mean{"mean train error", {}}, err_min{"min", {}}, err_max{"max", {}};
  for (double beta : betas) {
    double sum_size = 0.0, sum_expected = 0.0;
    double emin = 1e300, emax = -1e300, esum = 0.0;
    std::size_t n = 0, n_err = 0;
    for (const auto& r : rows) {
      if (r.beta != beta) continue;
      sum_size += static_cast<double>(r.dpp_sample_size);
      sum_expected += r.expected_dpp_size;
      ++n;
      if (!std::isnan(r.train_error_after)) {
        esum += r.train_error_after;
        emin = std::min(emin, r.train_error_after);
        emax = std::max(emax, r.train_error_after);
        ++n_err;
      }
    }
    const double x = std::log10(beta);
    mean_size.points.push_back({x, sum_size / static_cast<double>(n), 0.0});
    expected.points.push_back({x, sum_expected / static_cast<double>(n), 0.0});
    if (n_err > 0) {
      err_mean.points.push_back({x, esum / static_cast<double>(n_err), 0.0});
      err_min.points.push_back({x, emin, 0.0});
      err_max.points.push_back({x, emax, 0.0});
    }
  }
  PlotAxes size_axes{"non-parametric DPP size vs bandwidth", "log10(beta)", "neurons sampled"};
  emit_plot({mean_size, expected}, size_axes, out_dir + "/dpp_sizes.svg");
  if (with_prune_error && !err_mean.points.empty()) {
    PlotAxes err_axes{"train error after DivNet pruning vs bandwidth", "log10(beta)",
                      "train error"};
    emit_plot({err_mean, err_min, err_max}, err_axes, out_dir + "/beta_error.svg");
  }
}

}  // namespace divnet
