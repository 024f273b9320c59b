// divnet command-line interface: train feed-forward nets, prune them with
// DPP/random/importance strategies (optionally fused), reproduce the
// experiment sweeps, and export kernels/heat maps.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "divnet/csv.hpp"
#include "divnet/decision_io.hpp"
#include "divnet/experiment.hpp"

namespace {

using divnet::ConfigFile;
using divnet::ExperimentSpec;

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

struct CliOptions {
  std::string config_path;
  std::string model_path;
  std::string out_path;
  std::string out_dir;
  std::string strategy = "divnet";
  std::string mode = "dpp";
  std::string split = "both";
  std::string decision_path;
  std::string kernel_path;
  std::vector<double> betas;
  double keep = 0.5;
  std::size_t heat_k = 50;
  int layer = 0;  // 0 = config default (prune: all configured layers)
  std::optional<std::uint64_t> seed;
  bool reweight = false;
};

ExperimentSpec spec_for(const ConfigFile& cfg, const CliOptions& opt) {
  ExperimentSpec spec = divnet::spec_from_config(cfg);
  if (opt.seed) spec.base_seed = *opt.seed;
  if (!opt.out_dir.empty()) spec.output_dir = opt.out_dir;
  if (opt.layer > 0) spec.layers = {opt.layer};
  return spec;
}

int cmd_train(const CliOptions& opt) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  const auto split = divnet::resolve_dataset(cfg);
  divnet::TrainConfig tc = divnet::train_config_from_config(cfg);
  if (opt.seed) tc.seed = *opt.seed;
  std::vector<std::size_t> arch;
  for (double v : cfg.get_double_list("network.layers"))
    arch.push_back(static_cast<std::size_t>(v));

  const auto result = divnet::train(divnet::init_network(arch, tc.seed), split.train, tc);
  const std::string out = opt.out_path.empty() ? "model.bin" : opt.out_path;
  ensure_parent_dir(out);
  divnet::save_model(result.net, out, tc);
  {
    divnet::CsvWriter log(out + ".epochs.csv", {"epoch", "train_error", "mean_loss"});
    for (const auto& e : result.log)
      log.row({std::to_string(e.epoch), divnet::csv_num(e.train_error),
               divnet::csv_num(e.mean_loss)});
    log.close();
  }
  std::printf("trained %zu epochs, train error %.4f%s -> %s\n", result.log.size(),
              result.log.back().train_error,
              result.reached_threshold ? "" : " (threshold not reached)", out.c_str());
  std::printf("test error %.4f\n", divnet::classification_error(result.net, split.test));
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  const auto split = divnet::resolve_dataset(cfg);
  const auto net = divnet::load_model(opt.model_path);
  if (opt.split == "train" || opt.split == "both")
    std::printf("train_error %.6f\n", divnet::classification_error(net, split.train));
  if (opt.split == "test" || opt.split == "both")
    std::printf("test_error %.6f\n", divnet::classification_error(net, split.test));
  return 0;
}

int cmd_prune(const CliOptions& opt) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  ExperimentSpec spec = spec_for(cfg, opt);
  const auto net = divnet::load_model(opt.model_path);

  divnet::ParsedStrategy strategy = divnet::parse_strategy(opt.strategy);
  if (opt.reweight) strategy.reweight = true;
  const std::uint64_t seed = opt.seed.value_or(spec.base_seed);

  if (!opt.kernel_path.empty()) {
    const auto acts = divnet::layer_activations(
        net, spec.data.train, spec.layers.front(), spec.dpp.instance_cap,
        divnet::SeedDeriver(seed).with("instance_cap").value());
    ensure_parent_dir(opt.kernel_path);
    divnet::save_kernel(divnet::build_kernel(acts, spec.dpp.beta, spec.dpp.epsilon),
                        opt.kernel_path);
  }

  const auto cell = divnet::detail::prune_cell(spec, net, strategy, opt.keep, seed);
  const std::string out = opt.out_path.empty() ? "pruned.bin" : opt.out_path;
  ensure_parent_dir(out);
  divnet::save_model(cell.net, out);
  if (!opt.decision_path.empty()) {
    ensure_parent_dir(opt.decision_path);
    if (cell.decisions.size() == 1) {
      divnet::save_decision(cell.decisions.front(), opt.decision_path);
    } else {
      for (std::size_t i = 0; i < cell.decisions.size(); ++i)
        divnet::save_decision(cell.decisions[i],
                              opt.decision_path + ".layer" +
                                  std::to_string(cell.decisions[i].layer_index));
    }
  }
  std::printf("pruned with %s at keep=%.3g -> %s\n", strategy.label.c_str(), opt.keep, out.c_str());
  std::printf("train_error %.6f\n", divnet::classification_error(cell.net, spec.data.train));
  std::printf("test_error %.6f\n", divnet::classification_error(cell.net, spec.data.test));
  return 0;
}

int cmd_experiment(const CliOptions& opt) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  const ExperimentSpec spec = spec_for(cfg, opt);
  const auto result = divnet::run_experiment_to_dir(
      spec, cfg.get_string("experiment.title", "pruning comparison"));
  std::size_t failed = 0;
  for (const auto& r : result.records) failed += r.failed ? 1 : 0;
  std::printf("%zu cells (%zu failed) -> %s\n", result.records.size(), failed,
              spec.output_dir.c_str());
  return 0;
}

int cmd_heatmap(const CliOptions& opt) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  const ExperimentSpec spec = spec_for(cfg, opt);
  const auto net = divnet::load_model(opt.model_path);
  const std::string out = opt.out_path.empty() ? "heatmap.csv" : opt.out_path;
  ensure_parent_dir(out);
  divnet::heatmap_export(net, spec.data.train, opt.layer > 0 ? opt.layer : 1, opt.heat_k, opt.mode,
                         opt.seed.value_or(spec.base_seed), spec.dpp, out);
  std::printf("heat map (%s, k=%zu) -> %s\n", opt.mode.c_str(), opt.heat_k, out.c_str());
  return 0;
}

int cmd_beta_sweep(const CliOptions& opt, bool with_prune_error) {
  const ConfigFile cfg = ConfigFile::parse_file(opt.config_path);
  const ExperimentSpec spec = spec_for(cfg, opt);
  std::vector<double> betas = opt.betas;
  if (betas.empty()) betas = cfg.get_double_list("sweep.betas");
  if (betas.empty())
    throw divnet::format_error("beta sweep needs --betas or a [sweep] betas list");
  const auto rows = divnet::beta_sweep(spec, betas, with_prune_error);
  divnet::write_beta_sweep_outputs(rows, with_prune_error, spec.output_dir);
  std::printf("%zu sweep rows -> %s\n", rows.size(), spec.output_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DivNet: diversity-based neural network pruning"};
  app.require_subcommand(1);
  CliOptions opt;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "config file")->required();
    sub->add_option("--seed", opt.seed, "override the base seed");
  };

  auto* train = app.add_subcommand("train", "train a network on the configured dataset");
  add_config(train);
  train->add_option("--out", opt.out_path, "model output path (default model.bin)");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  add_config(eval);
  eval->add_option("--model", opt.model_path, "model file")->required();
  eval->add_option("--split", opt.split, "train|test|both (default both)");

  auto* prune = app.add_subcommand("prune", "prune a saved model with one strategy");
  add_config(prune);
  prune->add_option("--model", opt.model_path, "model file")->required();
  prune->add_option("--strategy", opt.strategy, "dpp|random|importance|divnet (+rw suffix ok)");
  prune->add_option("--keep", opt.keep, "fraction of neurons kept (0,1]")->check(CLI::Range(1e-6, 1.0));
  prune->add_flag("--reweight", opt.reweight, "fuse removed neurons into kept ones");
  prune->add_option("--layer", opt.layer, "hidden layer to prune (default: config)");
  prune->add_option("--out", opt.out_path, "pruned model output (default pruned.bin)");
  prune->add_option("--decision", opt.decision_path, "write the prune decision JSON here");
  prune->add_option("--export-kernel", opt.kernel_path, "write the DPP kernel (text) here");

  auto* experiment = app.add_subcommand("experiment", "run a strategy x fraction x seed sweep");
  add_config(experiment);
  experiment->add_option("--out-dir", opt.out_dir, "output directory (default: config)");

  auto* heatmap = app.add_subcommand("heatmap", "export per-class activations of selected neurons");
  add_config(heatmap);
  heatmap->add_option("--model", opt.model_path, "model file")->required();
  heatmap->add_option("--layer", opt.layer, "hidden layer (default 1)");
  heatmap->add_option("-k,--neurons", opt.heat_k, "how many neurons");
  heatmap->add_option("--mode", opt.mode, "dpp|first");
  heatmap->add_option("--out", opt.out_path, "CSV output (default heatmap.csv)");

  auto* beta = app.add_subcommand("beta-sweep", "bandwidth sweep with DivNet prune errors");
  add_config(beta);
  beta->add_option("--betas", opt.betas, "comma/space separated bandwidths")->delimiter(',');
  beta->add_option("--out-dir", opt.out_dir, "output directory (default: config)");

  auto* sizes = app.add_subcommand("dpp-size-sweep", "bandwidth sweep of non-parametric DPP sizes");
  add_config(sizes);
  sizes->add_option("--betas", opt.betas, "comma/space separated bandwidths")->delimiter(',');
  sizes->add_option("--out-dir", opt.out_dir, "output directory (default: config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(opt);
    if (*eval) return cmd_eval(opt);
    if (*prune) return cmd_prune(opt);
    if (*experiment) return cmd_experiment(opt);
    if (*heatmap) return cmd_heatmap(opt);
    if (*beta) return cmd_beta_sweep(opt, true);
    if (*sizes) return cmd_beta_sweep(opt, false);
  } catch (const divnet::format_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const divnet::precondition_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
