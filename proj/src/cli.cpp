// SPDX-License-Identifier: Apache-2.0

#include "som/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "som/chanstats.hpp"
#include "som/config_io.hpp"
#include "som/evalharness.hpp"
#include "som/ndarray.hpp"
#include "som/trainer.hpp"

namespace som {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ModelConfig load_model_config(const std::string& path) {
  return path.empty() ? ModelConfig{} : model_config_from_json(read_json(path));
}

TrainConfig load_train_config(const std::string& path) {
  return path.empty() ? TrainConfig{} : train_config_from_json(read_json(path));
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

Json capacity_json(const CapacityConfig& c) {
  return Json{{"bandwidth_hz", c.bandwidth_hz},
              {"segments", c.segments},
              {"noise_psd_dbm_per_hz", c.noise_psd_dbm_per_hz},
              {"seed", c.seed}};
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::logic_error&) {
      throw UsageError("bad fraction list: " + s);
    }
  }
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal sensing to multipath channel generation toolkit", "som_multipath"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = SOM_MULTIPATH_THREADS or all cores)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  std::string gen_config, gen_out;
  std::optional<int> gen_snapshots;
  std::optional<std::uint64_t> gen_seed;
  bool gen_force = false;
  gen->add_option("--config", gen_config, "Scenario config JSON");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--snapshots", gen_snapshots, "Snapshot count");
  gen->add_option("--seed", gen_seed, "Scene seed");
  gen->add_flag("--force", gen_force, "Overwrite an existing dataset");

  // train / ablate share flags
  std::string data, model_cfg_path, train_cfg_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto* tr = app.add_subcommand("train", "Train a model");
  auto* ab = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  std::string variant_name;
  for (CLI::App* sub : {tr, ab}) {
    sub->add_option("--data", data, "Dataset directory")->required();
    sub->add_option("--model-config", model_cfg_path, "Model config JSON");
    sub->add_option("--train-config", train_cfg_path, "Training config JSON");
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Training and init seed");
  }
  ab->add_option("--variant", variant_name, "Variant name or 'all'")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  std::string ckpt, split = "test", report;
  std::string plots;
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--split", split, "train|val|test|all");
  ev->add_option("--report", report, "Report JSON path")->required();
  ev->add_option("--plots", plots, "Optional plot-series JSON path");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Few-shot fine-tuning on a target dataset");
  double fraction = 0.0;
  std::string fractions, mix_data, case_name = "target";
  ft->add_option("--ckpt", ckpt, "Source checkpoint directory")->required();
  ft->add_option("--data", data, "Target dataset directory")->required();
  auto* frac_opt = ft->add_option("--fraction", fraction, "Fraction of the target train split");
  auto* grid_opt = ft->add_option("--fractions", fractions, "Comma-separated fraction grid (report only)");
  frac_opt->excludes(grid_opt);
  ft->add_option("--mix-data", mix_data, "Second source mixed 1:1 into fine-tuning");
  ft->add_option("--train-config", train_cfg_path, "Training config JSON");
  ft->add_option("--case", case_name, "Case label in the grid report");
  ft->add_option("--out", out_dir, "Output directory")->required();
  ft->add_option("--seed", seed, "Sampling and training seed");

  // stats
  auto* st = app.add_subcommand("stats", "PDP, RMS delay spread and FCF of a paths.csv");
  std::string paths_file, out_file;
  double df_max_mhz = 100.0;
  int df_points = 201;
  st->add_option("--paths", paths_file, "paths.csv")->required();
  st->add_option("--out", out_file, "Output JSON")->required();
  st->add_option("--df-max-mhz", df_max_mhz, "FCF grid upper end");
  st->add_option("--df-points", df_points, "FCF grid points")->check(CLI::PositiveNumber);

  // capacity
  auto* cap = app.add_subcommand("capacity", "Shannon capacity per snapshot");
  CapacityConfig cc;
  double bw_mhz = 20.0;
  std::string predictions;
  cap->add_option("--data", data, "Dataset directory")->required();
  cap->add_option("--bandwidth-mhz", bw_mhz, "Bandwidth");
  cap->add_option("--segments", cc.segments, "Bandwidth segments");
  cap->add_option("--noise-dbm-hz", cc.noise_psd_dbm_per_hz, "Noise PSD");
  cap->add_option("--seed", cc.seed, "Phase seed");
  cap->add_option("--split", split, "train|val|test|all");
  cap->add_option("--predictions", predictions, "Predictions CSV from evaluate");
  cap->add_option("--out", out_file, "Output JSON")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      ScenarioConfig sc = gen_config.empty() ? ScenarioConfig{} : scenario_from_json(read_json(gen_config));
      if (gen_snapshots) sc.snapshots = *gen_snapshots;
      if (gen_seed) sc.seed = *gen_seed;
      GenerateOptions opt;
      opt.force = gen_force;
      opt.threads = threads;
      const DatasetManifest m = generate_dataset(sc, gen_out, opt);
      out << "generated " << m.snapshots << " snapshots (train " << m.train.size() << ", val " << m.val.size()
          << ", test " << m.test.size() << ") in " << gen_out << "\n";
    } else if (tr->parsed()) {
      ModelConfig mc = load_model_config(model_cfg_path);
      TrainConfig tc = load_train_config(train_cfg_path);
      if (seed) {
        tc.seed = *seed;
        mc.init_seed = *seed;
      }
      const TrainRun run = train(data, mc, tc, out_dir, threads);
      const EpochLog& last = run.result.log.back();
      out << "trained " << tc.epochs << " epochs; best epoch " << run.result.best_epoch << " val loss "
          << run.result.best_val_loss << "; final train loss " << last.train_loss << "\n";
    } else if (ab->parsed()) {
      ModelConfig mc = load_model_config(model_cfg_path);
      TrainConfig tc = load_train_config(train_cfg_path);
      if (seed) {
        tc.seed = *seed;
        mc.init_seed = *seed;
      }
      std::vector<Variant> variants;
      if (variant_name == "all") variants = all_variants();
      else variants.push_back(parse_variant(variant_name));
      const Dataset ds = load_dataset(data);
      if (ds.manifest.train.empty() || ds.manifest.val.empty())
        throw ConfigError("ablate: dataset needs non-empty train and val splits");
      ModelConfig prep = mc;
      prep.variant = Variant::kFull;
      AblationSamples samples{prepare_samples(ds, ds.manifest.train, prep, threads),
                              prepare_samples(ds, ds.manifest.val, prep, threads),
                              prepare_samples(ds, ds.manifest.test, prep, threads)};
      fs::create_directories(out_dir);
      Json resolved{{"command", "ablate"}, {"data", data}, {"variants", Json::array()}};
      for (Variant v : variants) resolved["variants"].push_back(to_string(v));
      resolved["model"] = to_json(mc);
      resolved["train"] = to_json(tc);
      write_json(fs::path(out_dir) / "resolved_config.json", resolved);
      std::vector<AblationResult> rows;
      for (Variant v : variants) {
        rows.push_back(run_ablation(v, samples, mc, tc, fs::path(out_dir) / to_string(v)));
        out << to_string(v) << ": accuracy " << format_percent(rows.back().metrics.accuracy) << ", nmse power "
            << rows.back().metrics.nmse_power << ", nmse delay " << rows.back().metrics.nmse_delay << "\n";
      }
      write_json(fs::path(out_dir) / "ablation.json", ablation_table_json(rows));
      write_file(fs::path(out_dir) / "ablation.csv", ablation_table_csv(rows));
    } else if (ev->parsed()) {
      const EvaluateOutput o = evaluate(ckpt, data, split, std::nullopt, threads);
      Json rep = o.report;
      rep["resolved_config"] = {{"command", "evaluate"}, {"ckpt", ckpt}, {"data", data}, {"split", split}};
      ensure_parent(report);
      write_json(report, rep);
      write_file(predictions_path_for(report), format_predictions_csv(o.result.predictions));
      if (!plots.empty()) {
        const Dataset ds = load_dataset(data);
        std::vector<MultipathSet> truth, pred;
        for (const Prediction& p : o.result.predictions) {
          truth.push_back(ds.record(p.index).paths);
          pred.push_back(predicted_set(p.paths, truth.back()));
        }
        CapacityConfig pc;
        pc.bandwidth_hz = ds.manifest.scenario.band.bandwidth_hz;
        ensure_parent(plots);
        write_json(plots, channel_plot_data(truth, pred, pc));
      }
      const MetricsReport& m = o.result.metrics;
      out << "accuracy " << format_percent(m.accuracy) << " nmse power " << m.nmse_power << " nmse delay "
          << m.nmse_delay << " (baseline " << format_percent(o.baseline.accuracy) << ", "
          << o.baseline.nmse_power << ", " << o.baseline.nmse_delay << ")\n";
    } else if (ft->parsed()) {
      TrainConfig tc = load_train_config(train_cfg_path);
      if (seed) tc.seed = *seed;
      fs::create_directories(out_dir);
      Json resolved{{"command", "finetune"}, {"ckpt", ckpt}, {"data", data}, {"train", to_json(tc)}};
      if (!mix_data.empty()) resolved["mix_data"] = mix_data;
      if (!fractions.empty()) {
        const auto grid = parse_fractions(fractions);
        resolved["fractions"] = grid;
        write_json(fs::path(out_dir) / "resolved_config.json", resolved);
        const GeneralizationResult g = run_generalization(ckpt, GeneralizationCase{case_name, data}, grid, tc, threads);
        write_json(fs::path(out_dir) / "report.json", generalization_report_json({g}));
        out << "few-shot grid of " << grid.size() << " fractions written to " << out_dir << "\n";
      } else {
        resolved["fraction"] = fraction;
        write_json(fs::path(out_dir) / "resolved_config.json", resolved);
        Model model = load_checkpoint(ckpt);
        const Dataset target = load_dataset(data);
        std::optional<Dataset> mix;
        if (!mix_data.empty()) mix = load_dataset(mix_data);
        const FineTuneResult r = fine_tune_few_shot(model, target, fraction, tc, mix ? &*mix : nullptr, threads);
        CheckpointState state;
        state.seed = tc.seed;
        state.epoch = r.samples_used ? tc.epochs : 0;
        save_checkpoint(fs::path(out_dir) / "final", model, state);
        Json rep{{"fraction", fraction},
                 {"samples_used", r.samples_used},
                 {"mix_samples_used", r.mix_samples_used},
                 {"zero_shot", to_json(r.zero_shot.metrics)},
                 {"metrics", to_json(r.result.metrics)}};
        write_json(fs::path(out_dir) / "report.json", rep);
        out << "fine-tuned on " << r.samples_used << " samples: accuracy " << format_percent(r.result.metrics.accuracy)
            << " nmse power " << r.result.metrics.nmse_power << " nmse delay " << r.result.metrics.nmse_delay << "\n";
      }
    } else if (st->parsed()) {
      const MultipathSet paths = parse_paths_csv(read_file(paths_file));
      const PdpEntry entry = pdp(paths);
      std::vector<double> grid;
      for (int i = 0; i < df_points; ++i)
        grid.push_back(df_points == 1 ? 0.0 : df_max_mhz * 1e6 * i / (df_points - 1));
      Json j;
      j["resolved_config"] = {{"command", "stats"}, {"paths", paths_file}, {"df_max_mhz", df_max_mhz},
                              {"df_points", df_points}};
      Json imp = Json::array();
      for (const Impulse& i : entry) imp.push_back({{"delay_s", i.delay_s}, {"power_w", i.power_w}});
      j["pdp"] = imp;
      double total = 0.0;
      for (const Impulse& i : entry) total += i.power_w;
      if (total > 0.0) {
        j["mean_delay_s"] = mean_delay(entry);
        j["rms_delay_spread_s"] = rms_delay_spread(entry);
        j["rms_delay_spread_ns"] = rms_delay_spread(entry) * 1e9;
        const auto xi = fcf(entry, grid);
        const auto xn = fcf_normalized(entry, grid);
        Json f = Json::array();
        for (std::size_t i = 0; i < grid.size(); ++i)
          f.push_back({{"delta_f_hz", grid[i]}, {"re", xi[i].real()}, {"im", xi[i].imag()}, {"normalized", xn[i]}});
        j["fcf"] = f;
      } else {
        j["rms_delay_spread_s"] = nullptr;
        j["fcf"] = Json::array();
      }
      ensure_parent(out_file);
      write_json(out_file, j);
      if (total > 0.0) out << "rms delay spread " << rms_delay_spread(entry) * 1e9 << " ns\n";
      else out << "no valid paths\n";
    } else if (cap->parsed()) {
      cc.bandwidth_hz = bw_mhz * 1e6;
      cc.validate();
      const Dataset ds = load_dataset(data);
      std::map<std::size_t, PathPrediction> pred;
      if (!predictions.empty()) {
        for (auto& [idx, p] : parse_predictions_csv(read_file(predictions))) pred[idx] = std::move(p);
      }
      Json rows = Json::array();
      double sum = 0.0, psum = 0.0;
      std::size_t pcount = 0;
      const auto indices = ds.split(split);
      if (indices.empty()) throw ConfigError("capacity: split '" + split + "' is empty");
      for (std::size_t idx : indices) {
        CapacityConfig c = cc;
        c.seed = Rng::derive(cc.seed, idx).next_u64();
        const MultipathSet& truth = ds.record(idx).paths;
        const double value = channel_capacity(truth, c);
        sum += value;
        Json row{{"index", idx}, {"capacity_bps", value}};
        if (auto it = pred.find(idx); it != pred.end()) {
          const double pv = channel_capacity(predicted_set(it->second, truth), c);
          row["predicted_capacity_bps"] = pv;
          psum += pv;
          ++pcount;
        }
        rows.push_back(row);
      }
      Json j;
      j["resolved_config"] = {{"command", "capacity"}, {"data", data}, {"split", split}};
      j["resolved_config"]["capacity"] = capacity_json(cc);
      if (!predictions.empty()) j["resolved_config"]["predictions"] = predictions;
      j["per_snapshot"] = rows;
      j["aggregate"] = {{"snapshots", indices.size()}, {"mean_capacity_bps", sum / indices.size()}};
      if (pcount) j["aggregate"]["mean_predicted_capacity_bps"] = psum / pcount;
      ensure_parent(out_file);
      write_json(out_file, j);
      out << "mean capacity " << sum / indices.size() / 1e6 << " Mbit/s over " << indices.size() << " snapshots\n";
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace som
