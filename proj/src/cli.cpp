#include "slotforge/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "slotforge/config.hpp"
#include "slotforge/errors.hpp"
#include "slotforge/feature_io.hpp"
#include "slotforge/masking.hpp"
#include "slotforge/metrics.hpp"
#include "slotforge/pipeline.hpp"
#include "slotforge/trainer.hpp"

namespace fs = std::filesystem;

namespace slotforge {

namespace {

constexpr const char* kFeatureExt = ".sltk";
constexpr const char* kPredSuffix = ".pred.txt";
constexpr const char* kGtSuffix = ".gt.txt";

std::string build_info() {
  std::string s = std::string("slotforge ") + kVersion + " (C++" + std::to_string(__cplusplus / 100 % 100);
#if defined(__clang__)
  s += ", clang " __clang_version__;
#elif defined(__GNUC__)
  s += ", gcc " __VERSION__;
#endif
#ifdef NDEBUG
  s += ", release";
#else
  s += ", debug";
#endif
  return s + ")";
}

/// Sorted feature files: `path` itself when it is a file, else every *.sltk
/// directly inside it.
std::vector<fs::path> feature_files(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_regular_file() && entry.path().extension() == kFeatureExt)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

void write_slots(const fs::path& path, const InferResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  auto dump = [&](const std::string& title, const Tensor& t) {
    out << "# " << title << ' ' << t.rows() << 'x' << t.cols() << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
      for (std::size_t j = 0; j < t.cols(); ++j) out << (j ? " " : "") << t(i, j);
      out << '\n';
    }
  };
  dump("fused reference=" + std::to_string(r.reference), r.fused.slots);
  for (const HeadResult& h : r.heads) dump("head" + std::to_string(h.slots.head_index), h.slots.slots);
  if (!out) throw IoError("failed writing " + path.string());
}

struct GenArgs {
  fs::path out;
  std::size_t count = 64;
  SyntheticSceneSpec spec;
  std::string token_kind = "key";
};

void cmd_gen(const GenArgs& a, std::ostream& out) {
  fs::create_directories(a.out);
  std::ofstream manifest(a.out / "manifest.csv");
  if (!manifest) throw IoError("cannot write " + (a.out / "manifest.csv").string());
  manifest << "index,features,ground_truth,seed\n";
  const Rng root(a.spec.seed);
  for (std::size_t i = 0; i < a.count; ++i) {
    SyntheticSceneSpec spec = a.spec;
    spec.token_kind = parse_token_kind(a.token_kind);
    spec.seed = root.split(i).seed();
    auto [features, gt] = generate_scene(spec);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    const std::string f = std::string(stem) + kFeatureExt, g = std::string(stem) + kGtSuffix;
    save_features(features, a.out / f);
    save_ground_truth(a.out / g, gt);
    manifest << i << ',' << f << ',' << g << ',' << spec.seed << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in " + a.out.string());
  out << "wrote " << a.count << " scenes to " << a.out.string() << '\n';
}

struct TrainArgs {
  std::optional<fs::path> config;
  std::vector<std::string> sets;
  fs::path data;
  fs::path out;
  std::size_t log_every = 10;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  std::vector<Setting> overrides;
  for (const auto& s : a.sets) overrides.push_back(parse_override(s));
  RunConfig cfg = load_run_config(a.config ? &*a.config : nullptr, overrides);

  std::vector<FeatureMap> dataset;
  for (const fs::path& p : feature_files(a.data)) dataset.push_back(load_features(p));
  if (dataset.empty()) throw ContractError("no feature files found in " + a.data.string());
  cfg.model.grid_h = dataset.front().grid_h;
  cfg.model.grid_w = dataset.front().grid_w;
  cfg.model.attention.feat_dim = dataset.front().dim();

  fs::create_directories(a.out);
  {
    std::ofstream dump(a.out / "config.txt");
    dump << dump_run_config(cfg);
  }
  TrainOutput output;
  output.dir = a.out;
  const std::size_t total = total_steps(dataset.size(), cfg.train);
  output.on_step = [&](const LossRecord& r) {
    if (a.log_every > 0 && (r.step % a.log_every == 0 || r.step + 1 == total))
      out << "step " << r.step << " loss " << r.loss << " lr " << r.lr << '\n';
  };
  train(dataset, cfg.train, cfg.model, output);
  out << "trained " << total << " steps; model written to " << (a.out / "model.sltf").string()
      << '\n';
}

struct InferArgs {
  fs::path features;
  fs::path checkpoint;
  fs::path out;
  std::string metric = "cosine";
  std::string matcher = "hungarian";
  std::string reference = "random";
  std::size_t heads = 0;
  std::uint64_t seed = 0;
  std::string mask_source = "alpha";
  bool dump_slots = false;
};

void cmd_infer(const InferArgs& a, std::ostream& out) {
  Model model = load_model(a.checkpoint);
  if (a.heads > 0) model = model.with_heads(a.heads);
  InferOptions opts;
  opts.metric = parse_similarity_metric(a.metric);
  opts.matcher = parse_matcher(a.matcher);
  opts.mask_source = parse_mask_source(a.mask_source);
  if (a.reference != "random") {
    std::size_t idx = 0;
    try {
      std::size_t used = 0;
      idx = std::stoul(a.reference, &used);
      if (used != a.reference.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError("--reference-head expects random or an index, got '" + a.reference + "'");
    }
    opts.reference = idx;
  }
  fs::create_directories(a.out);
  const Rng root(a.seed);
  const auto files = feature_files(a.features);
  for (std::size_t i = 0; i < files.size(); ++i) {
    FeatureMap features = load_features(files[i]);
    InferResult r = infer_image(features, model, opts, root.split(i));
    const std::string stem = stem_of(files[i]);
    write_label_grid(a.out / (stem + kPredSuffix), to_label_grid(r.segmentation));
    if (a.dump_slots) write_slots(a.out / (stem + ".slots.txt"), r);
  }
  out << "wrote " << files.size() << " predictions to " << a.out.string() << '\n';
}

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  std::optional<fs::path> out;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.pred)) throw IoError("prediction directory not found: " + a.pred.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(a.pred)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = kPredSuffix;
    if (name.size() > suffix.size() && name.ends_with(suffix))
      names.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  std::vector<SegmentationResult> results;
  std::vector<GroundTruth> gts;
  for (const std::string& n : names) {
    results.push_back(segmentation_from_labels(read_label_grid(a.pred / (n + kPredSuffix))));
    gts.push_back(load_ground_truth(a.gt / (n + kGtSuffix)));
  }
  EvalReport report = evaluate(results, gts, names);
  if (a.out) write_report_csv(*a.out, report);
  out << "images " << names.size() << " corloc " << report.corloc << " miou " << report.miou
      << " mbo " << report.mbo;
  if (report.skipped > 0) out << " (skipped " << report.skipped << " without ground truth)";
  out << '\n';
}

struct PreviewArgs {
  fs::path features;
  double m = 70.0;
  std::string strategy = "background";
  std::uint64_t seed = 0;
};

void cmd_preview(const PreviewArgs& a, std::ostream& out) {
  FeatureMap map = load_features(a.features);
  MaskingConfig cfg{parse_mask_strategy(a.strategy), a.m, a.seed};
  cfg.validate();
  MaskReport report = build_mask_report(map, cfg);
  out << "N " << map.num_patches() << "\nm " << a.m << "\nstrategy " << a.strategy
      << "\nmasked " << report.masked_indices.size() << ':';
  for (std::size_t i : report.masked_indices) out << ' ' << i;
  out << "\nmeans\n";
  out.precision(6);
  for (std::size_t r = 0; r < map.grid_h; ++r) {
    for (std::size_t c = 0; c < map.grid_w; ++c) {
      const std::size_t n = r * map.grid_w + c;
      const bool masked = std::binary_search(report.masked_indices.begin(),
                                             report.masked_indices.end(), n);
      out << (c ? " " : "") << report.means[n] << (masked ? "*" : "");
    }
    out << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked multi-query slot attention over patch tokens", "slotforge"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", build_info());

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write synthetic scenes with ground truth");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of scenes");
  gen_cmd->add_option("--seed", gen.spec.seed, "Base seed");
  gen_cmd->add_option("--grid-h", gen.spec.grid_h);
  gen_cmd->add_option("--grid-w", gen.spec.grid_w);
  gen_cmd->add_option("--objects", gen.spec.n_objects);
  gen_cmd->add_option("--d-feats", gen.spec.d_feats);
  gen_cmd->add_option("--background-mean", gen.spec.background_mean);
  gen_cmd->add_option("--object-mean-lo", gen.spec.object_mean_lo);
  gen_cmd->add_option("--object-mean-hi", gen.spec.object_mean_hi);
  gen_cmd->add_option("--noise", gen.spec.noise_std);
  gen_cmd->add_option("--min-size", gen.spec.min_size);
  gen_cmd->add_option("--max-size", gen.spec.max_size);
  gen_cmd->add_option("--position-scale", gen.spec.position_scale);
  gen_cmd->add_option("--background-texture", gen.spec.background_texture);
  gen_cmd->add_option("--position-channels", gen.spec.position_channels);
  gen_cmd->add_option("--token-kind", gen.token_kind, "key|query|value");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on a directory of feature files");
  train_cmd->add_option("--config", tr.config, "key=value config file");
  train_cmd->add_option("--set", tr.sets, "Override, key=value (repeatable)");
  train_cmd->add_option("--data", tr.data, "Directory of .sltk files")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--log-every", tr.log_every, "Print every n steps (0 = quiet)");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Fuse all heads and write label grids");
  infer_cmd->add_option("--features", inf.features, "Feature file or directory")->required();
  infer_cmd->add_option("--checkpoint", inf.checkpoint)->required();
  infer_cmd->add_option("--out", inf.out, "Output directory")->required();
  infer_cmd->add_option("--fusion-metric", inf.metric, "cosine|euclidean");
  infer_cmd->add_option("--fusion-matcher", inf.matcher, "hungarian|greedy");
  infer_cmd->add_option("--reference-head", inf.reference, "random|INDEX");
  infer_cmd->add_option("--heads", inf.heads, "Use the first h heads (0 = all)");
  infer_cmd->add_option("--seed", inf.seed);
  infer_cmd->add_option("--mask-source", inf.mask_source, "alpha|attention");
  infer_cmd->add_flag("--dump-slots", inf.dump_slots, "Also write <stem>.slots.txt");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--pred", ev.pred, "Directory of <stem>.pred.txt")->required();
  eval_cmd->add_option("--gt", ev.gt, "Directory of <stem>.gt.txt")->required();
  eval_cmd->add_option("--out", ev.out, "Report CSV");

  PreviewArgs pv;
  auto* preview_cmd = app.add_subcommand("mask-preview", "Show which patches would be masked");
  preview_cmd->add_option("--features", pv.features)->required();
  preview_cmd->add_option("--m", pv.m, "Mask percentage");
  preview_cmd->add_option("--strategy", pv.strategy, "none|random|background");
  preview_cmd->add_option("--seed", pv.seed);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*gen_cmd) cmd_gen(gen, out);
    else if (*train_cmd) cmd_train(tr, out);
    else if (*infer_cmd) cmd_infer(inf, out);
    else if (*eval_cmd) cmd_eval(ev, out);
    else if (*preview_cmd) cmd_preview(pv, out);
    else {
      err << app.help();
      return static_cast<int>(ExitCode::kUsage);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace slotforge
