#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "divnet/experiment.hpp"
#include "oracles.hpp"

using divnet::ConfigFile;
using divnet::Dataset;
using divnet::ExperimentSpec;
using divnet::Matrix;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
  static fs::path dir = [] {
    auto p = fs::temp_directory_path() / "divnet_harness_tests";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Tiny synthetic spec that exercises the full pipeline in about a second.
ExperimentSpec tiny_spec(const std::string& out_name) {
  ExperimentSpec spec;
  spec.data = divnet::synth_blobs(4, 10, 50, 0.08, 3);
  spec.architecture = {10, 16, 4};
  spec.train_cfg.learning_rate = 0.3;
  spec.train_cfg.batch_size = 16;
  spec.train_cfg.error_threshold = 0.02;
  spec.train_cfg.max_epochs = 40;
  spec.strategies = {"divnet", "random"};
  spec.fractions = {0.5, 1.0};
  spec.layers = {1};
  spec.repetitions = 2;
  spec.base_seed = 77;
  spec.output_dir = (temp_dir() / out_name).string();
  spec.cache_models = false;
  return spec;
}

}  // namespace

TEST_CASE("config files parse sections, comments and types") {
  const auto cfg = ConfigFile::parse(
      "config_version = 1\n"
      "top = hello\n"
      "[a]\n"
      "x = 2.5   # trailing comment\n"
      "flag = true\n"
      "items = 1, 2, 3\n"
      "names = dpp, random\n");
  REQUIRE(cfg.get_string("top", "") == "hello");
  REQUIRE(cfg.get_double("a.x", 0.0) == 2.5);
  REQUIRE(cfg.get_bool("a.flag", false));
  REQUIRE(cfg.get_double_list("a.items") == std::vector<double>({1.0, 2.0, 3.0}));
  REQUIRE(cfg.get_string_list("a.names") == std::vector<std::string>({"dpp", "random"}));
  REQUIRE(cfg.get_u64("missing", 9) == 9);
  REQUIRE_THROWS_AS(cfg.require_string("missing"), divnet::format_error);
}

TEST_CASE("config files reject bad input") {
  REQUIRE_THROWS_AS(ConfigFile::parse("x = 1\n"), divnet::format_error);  // no version
  REQUIRE_THROWS_AS(ConfigFile::parse("config_version = 2\n"), divnet::format_error);
  REQUIRE_THROWS_AS(ConfigFile::parse("config_version = 1\njust a line\n"),
                    divnet::format_error);
  const auto cfg = ConfigFile::parse("config_version = 1\nx = abc\n");
  REQUIRE_THROWS_AS(cfg.get_double("x", 0.0), divnet::format_error);
}

TEST_CASE("strategy names parse to kind plus reweight flag") {
  auto s = divnet::parse_strategy("dpp");
  REQUIRE(s.kind == divnet::StrategyConfig::Kind::dpp);
  REQUIRE_FALSE(s.reweight);
  s = divnet::parse_strategy("random+rw");
  REQUIRE(s.kind == divnet::StrategyConfig::Kind::random);
  REQUIRE(s.reweight);
  s = divnet::parse_strategy("divnet");
  REQUIRE(s.kind == divnet::StrategyConfig::Kind::dpp);
  REQUIRE(s.reweight);
  s = divnet::parse_strategy("importance");
  REQUIRE(s.kind == divnet::StrategyConfig::Kind::importance);
  REQUIRE_THROWS_AS(divnet::parse_strategy("magic"), divnet::format_error);
}

TEST_CASE("cell seeds are stable and independent") {
  const auto a = divnet::cell_seed(1, "dpp", 0.25, 3);
  REQUIRE(a == divnet::cell_seed(1, "dpp", 0.25, 3));
  REQUIRE(a != divnet::cell_seed(1, "random", 0.25, 3));
  REQUIRE(a != divnet::cell_seed(1, "dpp", 0.5, 3));
  REQUIRE(a != divnet::cell_seed(1, "dpp", 0.25, 4));
  REQUIRE(a != divnet::cell_seed(2, "dpp", 0.25, 3));
}

TEST_CASE("resolve_dataset handles the bundled and synthetic kinds") {
  const auto digits = divnet::resolve_dataset(ConfigFile::parse(
      "config_version = 1\n[dataset]\nkind = digits\n"));
  REQUIRE(digits.train.size() == 1438);
  REQUIRE(digits.test.size() == 359);
  REQUIRE(digits.train.features() == 64);

  const auto rot = divnet::resolve_dataset(ConfigFile::parse(
      "config_version = 1\n[dataset]\nkind = rot_synth\nsource = digits\n"
      "train_size = 200\ntest_size = 50\nseed = 5\n"));
  REQUIRE(rot.train.size() == 200);
  REQUIRE(rot.test.size() == 50);
  REQUIRE(rot.train.name == "digits_rot_synth");

  const auto blobs = divnet::resolve_dataset(ConfigFile::parse(
      "config_version = 1\n[dataset]\nkind = synth_blobs\nclasses = 3\nfeatures = 6\n"
      "per_class = 20\nspread = 0.1\nseed = 2\n"));
  REQUIRE(blobs.train.class_count == 3);

  const auto sub = divnet::resolve_dataset(ConfigFile::parse(
      "config_version = 1\n[dataset]\nkind = digits\ntrain_subsample = 100\n"
      "test_subsample = 40\n"));
  REQUIRE(sub.train.size() == 100);
  REQUIRE(sub.test.size() == 40);

  REQUIRE_THROWS_AS(divnet::resolve_dataset(
                        ConfigFile::parse("config_version = 1\n[dataset]\nkind = nothing\n")),
                    divnet::format_error);
}

TEST_CASE("run_experiment: fraction 1.0 reproduces the unpruned baseline") {
  auto spec = tiny_spec("exp_baseline");
  const auto result = divnet::run_experiment(spec);
  REQUIRE(result.records.size() == 2 * 2 * 2);
  for (const auto& rec : result.records) {
    REQUIRE_FALSE(rec.failed);
    if (rec.fraction == 1.0) {
      // find this record's repetition by its seed
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
        if (rec.seed != divnet::cell_seed(spec.base_seed, rec.strategy, rec.fraction, rep))
          continue;
        REQUIRE(rec.train_error == result.baseline_train_error[rep]);
        REQUIRE(rec.test_error == result.baseline_test_error[rep]);
      }
    }
  }
}

TEST_CASE("run_experiment is deterministic and cells are seed-independent") {
  auto spec = tiny_spec("exp_det");
  const auto r1 = divnet::run_experiment(spec);
  const auto r2 = divnet::run_experiment(spec);
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    REQUIRE(r1.records[i].train_error == r2.records[i].train_error);
    REQUIRE(r1.records[i].test_error == r2.records[i].test_error);
    REQUIRE(r1.records[i].seed == r2.records[i].seed);
  }

  // dropping a strategy must not change the remaining cells' results
  auto solo = spec;
  solo.strategies = {"divnet"};
  const auto r3 = divnet::run_experiment(solo);
  std::size_t matched = 0;
  for (const auto& rec : r3.records) {
    for (const auto& ref : r1.records) {
      if (ref.strategy == rec.strategy && ref.fraction == rec.fraction && ref.seed == rec.seed) {
        REQUIRE(rec.train_error == ref.train_error);
        REQUIRE(rec.test_error == ref.test_error);
        ++matched;
      }
    }
  }
  REQUIRE(matched == r3.records.size());
}

TEST_CASE("experiment artifacts are written and byte-deterministic") {
  auto spec = tiny_spec("exp_files");
  fs::remove_all(spec.output_dir);
  divnet::run_experiment_to_dir(spec, "tiny");
  const std::string metrics1 = slurp(spec.output_dir + "/metrics.csv");
  const std::string summary1 = slurp(spec.output_dir + "/summary.csv");
  const std::string svg1 = slurp(spec.output_dir + "/test_error.svg");
  REQUIRE(metrics1.rfind("strategy,fraction,seed,train_error,test_error,expected_dpp_size,status",
                         0) == 0);

  divnet::run_experiment_to_dir(spec, "tiny");
  REQUIRE(slurp(spec.output_dir + "/metrics.csv") == metrics1);
  REQUIRE(slurp(spec.output_dir + "/summary.csv") == summary1);
  REQUIRE(slurp(spec.output_dir + "/test_error.svg") == svg1);

  // expected_dpp_size present exactly for the kernel-building strategy
  std::istringstream lines(metrics1);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    const bool is_divnet = line.rfind("divnet,", 0) == 0;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const bool pruned_cell = cells[1] != "1";  // fraction 1.0 builds no kernel
    if (is_divnet && pruned_cell) REQUIRE_FALSE(cells[5].empty());
    if (!is_divnet) REQUIRE(cells[5].empty());
  }
}

TEST_CASE("emit_plot writes the golden SVG byte-for-byte") {
  std::vector<divnet::PlotSeries> series{
      {"alpha", {{0.25, 0.62, 0.05}, {0.5, 0.35, 0.02}, {0.75, 0.2, 0.01}}},
      {"beta", {{0.25, 0.7, 0.08}, {0.5, 0.42, 0.03}, {0.75, 0.22, 0.0}}},
  };
  divnet::PlotAxes axes{"golden chart", "fraction kept", "error"};
  const auto path = (temp_dir() / "golden_candidate.svg").string();
  divnet::emit_plot(series, axes, path);
  REQUIRE(slurp(path) == slurp("tests/data/golden_plot.svg"));
}

TEST_CASE("emit_plot degenerate and error cases") {
  const auto path = (temp_dir() / "one_point.svg").string();
  divnet::emit_plot({{"solo", {{0.5, 0.1, 0.0}}}}, {"", "x", "y"}, path);
  const std::string svg = slurp(path);
  REQUIRE(svg.rfind("<?xml", 0) == 0);
  REQUIRE(svg.find("<circle") != std::string::npos);
  REQUIRE(svg.find("</svg>") != std::string::npos);

  REQUIRE_THROWS_AS(divnet::emit_plot({}, {}, path), divnet::precondition_error);
  REQUIRE_THROWS_AS(divnet::emit_plot({{"empty", {}}}, {}, path), divnet::precondition_error);

  // legend entries appear in series order
  divnet::emit_plot({{"zzz", {{0, 1, 0}, {1, 2, 0}}}, {"aaa", {{0, 2, 0}, {1, 3, 0}}}},
                    {"", "", ""}, path);
  const std::string two = slurp(path);
  REQUIRE(two.find(">zzz<") < two.find(">aaa<"));
}

TEST_CASE("heatmap_export modes and errors") {
  const auto split = divnet::synth_blobs(4, 6, 30, 0.1, 5);
  divnet::NetworkParams zero;
  zero.layer_sizes = {6, 8, 4};
  zero.weights.emplace_back(6, 8);
  zero.weights.emplace_back(8, 4);
  zero.biases.emplace_back(8, 0.0);
  zero.biases.emplace_back(4, 0.0);

  const auto path = (temp_dir() / "heat.csv").string();
  divnet::heatmap_export(zero, split.train, 1, 8, "first", 1, {}, path);
  std::istringstream is(slurp(path));
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "class,neuron_0,neuron_1,neuron_2,neuron_3,neuron_4,neuron_5,neuron_6,neuron_7");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    REQUIRE(line.find("0.5") != std::string::npos);
  }
  REQUIRE(rows == 4);

  const auto net = divnet::init_network({6, 8, 4}, 3);
  divnet::heatmap_export(net, split.train, 1, 3, "dpp", 9, {}, path);
  const std::string first_run = slurp(path);
  divnet::heatmap_export(net, split.train, 1, 3, "dpp", 9, {}, path);
  REQUIRE(slurp(path) == first_run);

  // a class with no instances is an error
  Dataset missing = split.train;
  missing.class_count = 5;  // class 4 never occurs
  REQUIRE_THROWS_AS(divnet::heatmap_export(net, missing, 1, 3, "first", 1, {}, path),
                    divnet::precondition_error);
  REQUIRE_THROWS_AS(divnet::heatmap_export(net, split.train, 1, 99, "first", 1, {}, path),
                    divnet::precondition_error);
  REQUIRE_THROWS_AS(divnet::heatmap_export(net, split.train, 1, 3, "nope", 1, {}, path),
                    divnet::precondition_error);
}

TEST_CASE("kernel bandwidth limits match the rank-one-plus-identity analysis") {
  divnet::Rng rng(41);
  const std::size_t n = 9;
  divnet::ActivationMatrix acts;
  acts.layer_index = 1;
  acts.values = oracle::random_matrix(n, 14, rng, 0.1, 0.9);
  acts.instance_count = 14;
  const double eps = 0.01;

  // beta -> 0: kernel -> all-ones + eps I, eigenvalues {n + eps, eps, ...}
  const auto low = divnet::build_kernel(acts, 1e-12, eps);
  const double nd = static_cast<double>(n);
  const double expected_low =
      (nd + eps) / (1.0 + nd + eps) + (nd - 1.0) * eps / (1.0 + eps);
  REQUIRE(divnet::expected_size(low) == Catch::Approx(expected_low).margin(1e-6));

  // beta -> infinity: kernel -> (1 + eps) I
  const auto high = divnet::build_kernel(acts, 1e12, eps);
  REQUIRE(divnet::expected_size(high) ==
          Catch::Approx(nd * (1.0 + eps) / (2.0 + eps)).margin(1e-9));
}

TEST_CASE("beta_sweep reproduces the experiment's divnet cell at the same beta") {
  auto spec = tiny_spec("beta_consistency");
  spec.strategies = {"divnet"};
  spec.fractions = {0.5};
  spec.cache_models = false;
  const auto exp_result = divnet::run_experiment(spec);

  // the experiment used beta = auto = 10 / kernel instance count
  const std::size_t kernel_instances =
      spec.dpp.instance_cap > 0 ? std::min<std::size_t>(spec.dpp.instance_cap, spec.data.train.size())
                                : spec.data.train.size();
  const double auto_beta = 10.0 / static_cast<double>(kernel_instances);
  const auto rows = divnet::beta_sweep(spec, {auto_beta}, true);
  REQUIRE(rows.size() == spec.repetitions);
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
    const auto& exp_rec = exp_result.records[rep];
    REQUIRE(rows[rep].train_error_after == exp_rec.train_error);
  }
}

TEST_CASE("beta_sweep outputs files") {
  auto spec = tiny_spec("beta_files");
  spec.strategies = {"divnet"};
  spec.fractions = {0.5};
  const auto rows = divnet::beta_sweep(spec, {0.001, 0.1, 10.0}, true);
  REQUIRE(rows.size() == 3 * spec.repetitions);
  const auto dir = (temp_dir() / "beta_out").string();
  fs::remove_all(dir);
  divnet::write_beta_sweep_outputs(rows, true, dir);
  REQUIRE(fs::exists(dir + "/beta_sweep.csv"));
  REQUIRE(fs::exists(dir + "/dpp_sizes.svg"));
  REQUIRE(fs::exists(dir + "/beta_error.svg"));
  const std::string csv = slurp(dir + "/beta_sweep.csv");
  REQUIRE(csv.rfind("beta,rep,expected_dpp_size,dpp_sample_size,train_error_after", 0) == 0);
}

TEST_CASE("prune-during-training flag runs end to end") {
  auto spec = tiny_spec("interleaved");
  spec.prune_at_epoch = 3;
  spec.strategies = {"divnet", "random"};
  spec.fractions = {0.5};
  spec.repetitions = 1;
  const auto result = divnet::run_experiment(spec);
  REQUIRE(result.records.size() == 2);
  for (const auto& rec : result.records) {
    REQUIRE_FALSE(rec.failed);
    REQUIRE(rec.train_error >= 0.0);
    REQUIRE(rec.train_error <= 1.0);
  }
}

TEST_CASE("failed records surface in the metrics CSV") {
  divnet::MetricsRecord ok;
  ok.strategy = "random";
  ok.fraction = 0.5;
  ok.seed = 1;
  ok.train_error = 0.1;
  ok.test_error = 0.2;
  divnet::MetricsRecord bad = ok;
  bad.failed = true;
  const auto path = (temp_dir() / "metrics_failed.csv").string();
  divnet::write_metrics_csv({ok, bad}, path);
  const std::string csv = slurp(path);
  REQUIRE(csv.find("random,0.5,1,0.1,0.2,,ok") != std::string::npos);
  REQUIRE(csv.find("random,0.5,1,nan,nan,,failed") != std::string::npos);

  // failed cells are excluded from summaries
  const auto rows = divnet::summarize({ok, bad});
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].count == 1);
}

TEST_CASE("DIVNET_DATA_ROOT steers dataset resolution") {
  const std::string abs_root = fs::absolute("data").string();
  setenv("DIVNET_DATA_ROOT", abs_root.c_str(), 1);
  const auto split = divnet::resolve_dataset(
      ConfigFile::parse("config_version = 1\n[dataset]\nkind = digits\n"));
  REQUIRE(split.train.size() == 1438);
  setenv("DIVNET_DATA_ROOT", "/nonexistent_divnet_root", 1);
  REQUIRE_THROWS_AS(divnet::resolve_dataset(
                        ConfigFile::parse("config_version = 1\n[dataset]\nkind = digits\n")),
                    divnet::format_error);
  unsetenv("DIVNET_DATA_ROOT");
}

TEST_CASE("destructive pruning to a single neuron is near chance level") {
  auto spec = tiny_spec("near_chance");
  const auto models = divnet::run_experiment(spec);  // trains 2 reps as a side effect
  REQUIRE(models.baseline_test_error[0] < 0.2);

  // rebuild the trained net and excise all but one first-layer neuron
  divnet::TrainConfig tc = spec.train_cfg;
  tc.seed = divnet::train_seed(spec.base_seed, 0);
  const auto trained =
      divnet::train(divnet::init_network(spec.architecture, tc.seed), spec.data.train, tc);
  divnet::Rng rng(4);
  const auto decision = divnet::select_random(1, 16, 1, rng);
  const auto crippled = divnet::prune_without_fusion(trained.net, decision);
  const double err = divnet::classification_error(crippled, spec.data.test);
  REQUIRE(err > 2.0 * models.baseline_test_error[0]);
  REQUIRE(err > 0.4);  // chance for 4 balanced classes is 0.75
}

#ifdef DIVNET_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const std::string cmd = std::string(DIVNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}
}  // namespace

TEST_CASE("cli exit codes: 0 success, 2 usage, 1 runtime") {
  const auto dir = temp_dir() / "cli";
  fs::create_directories(dir);
  const std::string cfg = (dir / "smoke.cfg").string();
  std::ofstream(cfg) << "config_version = 1\n"
                        "[dataset]\nkind = synth_blobs\nclasses = 3\nfeatures = 8\n"
                        "per_class = 30\nspread = 0.05\nseed = 2\n"
                        "[network]\nlayers = 8,12,3\nlearning_rate = 0.3\nbatch_size = 16\n"
                        "error_threshold = 0.02\nmax_epochs = 30\n"
                        "[experiment]\nstrategies = divnet,random\nfractions = 0.5\n"
                        "repetitions = 1\nbase_seed = 9\noutput_dir = "
                     << (dir / "exp").string() << "\n";

  const std::string model = (dir / "m.bin").string();
  REQUIRE(run_cli("train --config " + cfg + " --seed 3 --out " + model) == 0);
  REQUIRE(fs::exists(model));
  REQUIRE(run_cli("eval --config " + cfg + " --model " + model) == 0);
  REQUIRE(run_cli("prune --config " + cfg + " --model " + model + " --strategy dpp --keep 0.5" +
                  " --reweight --out " + (dir / "p.bin").string() + " --decision " +
                  (dir / "d.json").string()) == 0);
  REQUIRE(fs::exists(dir / "p.bin"));
  REQUIRE(fs::exists(dir / "d.json"));
  REQUIRE(run_cli("experiment --config " + cfg) == 0);
  REQUIRE(fs::exists(dir / "exp" / "metrics.csv"));
  REQUIRE(run_cli("heatmap --config " + cfg + " --model " + model + " -k 4 --mode dpp --out " +
                  (dir / "h.csv").string()) == 0);
  REQUIRE(run_cli("dpp-size-sweep --config " + cfg + " --betas 0.01,1 --out-dir " +
                  (dir / "sweep").string()) == 0);

  REQUIRE(run_cli("definitely-not-a-subcommand") == 2);
  REQUIRE(run_cli("train --config " + cfg + " --no-such-flag") == 2);
  REQUIRE(run_cli("train --config /nonexistent.cfg") == 2);
  REQUIRE(run_cli("eval --config " + cfg + " --model /nonexistent.bin") == 2);

  // runtime failure: pruning a model that does not match the dataset
  std::ofstream(model, std::ios::binary) << "DVNMgarbage";
  REQUIRE(run_cli("eval --config " + cfg + " --model " + model) == 2);
}
#endif

TEST_CASE("shipped presets parse and resolve") {
  // desk presets resolve against the bundled data
  for (const std::string name :
       {"acceptance_desk", "fig2_desk", "fig3_desk", "fig4_desk", "fig5_desk",
        "appendix_a_desk", "appendix_b_desk", "determinism_small"}) {
    const auto spec = divnet::spec_from_config(ConfigFile::parse_file("configs/" + name + ".cfg"));
    REQUIRE(spec.repetitions >= 1);
    REQUIRE(!spec.strategies.empty());
  }
  // full-scale presets need external data; they must still parse
  for (const std::string name : {"mnist_desk", "mnist_full", "mnist_rot_full", "appendix_c_cifar"}) {
    const auto cfg = ConfigFile::parse_file("configs/" + name + ".cfg");
    REQUIRE(cfg.get_u64("config_version", 0) == 1);
    for (const auto& s : cfg.get_string_list("experiment.strategies")) divnet::parse_strategy(s);
  }
}
