// uvsn: training, evaluation and summarization toolkit for key-frame video
// summarization learned from unpaired data.
//
// Subcommands: gen-synth, make-splits, train, evaluate, summarize, segment,
// inspect. Configuration is flat `section.key = value` text (--config FILE)
// with `--section.key=value` command-line overrides. Exit codes: 0 success,
// 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uvsn/checkpoint.hpp"
#include "uvsn/config.hpp"
#include "uvsn/datagen.hpp"
#include "uvsn/errors.hpp"
#include "uvsn/io.hpp"
#include "uvsn/pipeline.hpp"
#include "uvsn/trainer.hpp"

namespace fs = std::filesystem;
using namespace uvsn;

namespace {

const std::set<std::string> kKnownKeys = {
    // network
    "network.feature_dim", "network.encoder_channels", "network.encoder_depth", "network.kernel_size",
    "network.k_ratio", "network.disc_channels", "network.disc_depth",
    // train
    "train.preset", "train.epochs", "train.seed", "train.selector_lr", "train.adam_beta1", "train.adam_beta2",
    "train.adam_eps", "train.disc_lr", "train.disc_momentum", "train.beta", "train.gamma", "train.gan_objective",
    "train.psup_fraction", "train.clip_gradients", "train.clip_norm", "train.disc_step_first",
    // eval
    "eval.budget_ratio", "eval.user_aggregation", "eval.kts_max_segments", "eval.kts_penalty_coeff",
    "eval.kts_normalized",
    // split
    "split.target", "split.mode", "split.test_fraction", "split.unpaired_fraction", "split.psup_fraction",
    "split.seed",
    // synth
    "synth.n_videos", "synth.t_min", "synth.t_max", "synth.feature_dim", "synth.segments_min", "synth.segments_max",
    "synth.important_fraction", "synth.noise_sigma", "synth.n_users", "synth.seed", "synth.id_prefix",
    "synth.important_len_min", "synth.important_len_max", "synth.background_len_min", "synth.budget_ratio",
    "synth.interest_strength"};

bool looks_like_override(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return false;
  const auto eq = arg.find('=');
  const auto dot = arg.find('.');
  return eq != std::string::npos && dot != std::string::npos && dot < eq && dot > 2;
}

std::string output_root() {
  const char* env = std::getenv("UVSN_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? env : "uvsn_out";
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  ConfigMap resolve() const {
    ConfigMap cfg = config_path.empty() ? ConfigMap{} : ConfigMap::load_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    cfg.require_known_keys(kKnownKeys);
    return cfg;
  }
};

// "7", "1,2,5" or "1..5" (inclusive).
std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  const auto range = spec.find("..");
  if (range != std::string::npos) {
    const std::uint64_t lo = std::stoull(spec.substr(0, range));
    const std::uint64_t hi = std::stoull(spec.substr(range + 2));
    if (hi < lo) throw ConfigError("bad seed range '" + spec + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::istringstream in(spec);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw ConfigError("empty seed spec '" + spec + "'");
  return seeds;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------

int cmd_gen_synth(const CommonArgs& common, const std::string& out_dir) {
  const ConfigMap cfg = common.resolve();
  const SynthOptions opt = SynthOptions::from_config(cfg);
  const std::string dir = out_dir.empty() ? (fs::path(output_root()) / "synth").string() : out_dir;
  const std::string manifest = generate_synthetic_corpus(opt, dir);
  ConfigMap resolved;
  opt.to_config(resolved);
  write_text_file((fs::path(dir) / "gen_config.txt").string(), resolved.serialize());
  std::printf("wrote %s (%d videos, D=%d)\n", manifest.c_str(), opt.n_videos, opt.feature_dim);
  return 0;
}

int cmd_make_splits(const CommonArgs& common, const std::vector<std::string>& dataset_args,
                    const std::string& out_dir) {
  const ConfigMap cfg = common.resolve();
  SplitSpec spec = SplitSpec::from_config(cfg);
  if (spec.target.empty()) throw ConfigError("make-splits: --target (split.target) is required");
  if (dataset_args.empty()) throw ConfigError("make-splits: at least one --dataset name=manifest is required");

  std::vector<NamedDataset> datasets;
  for (const auto& arg : dataset_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw ConfigError("--dataset expects name=manifest, got '" + arg + "'");
    datasets.push_back(load_named_dataset(arg.substr(0, eq), arg.substr(eq + 1)));
  }

  const SplitResult result = make_unpaired_split(datasets, spec);
  const std::string dir = out_dir.empty() ? (fs::path(output_root()) / "splits").string() : out_dir;
  fs::create_directories(dir);
  write_manifest((fs::path(dir) / "train_manifest.tsv").string(), result.train);
  write_manifest((fs::path(dir) / "test_manifest.tsv").string(), result.test);
  ConfigMap resolved;
  spec.to_config(resolved);
  write_text_file((fs::path(dir) / "split_config.txt").string(), resolved.serialize());

  std::printf("target=%s mode=%s\n", spec.target.c_str(), to_string(spec.mode));
  if (result.paired_count > 0) {
    std::printf("raw=%d summary=%d paired=%d test=%d\n", result.raw_count, result.summary_count, result.paired_count,
                result.test_count);
  } else {
    std::printf("raw=%d summary=%d test=%d\n", result.raw_count, result.summary_count, result.test_count);
  }
  std::printf("train manifest: %s\ntest manifest: %s\n",
              (fs::path(dir) / "train_manifest.tsv").string().c_str(),
              (fs::path(dir) / "test_manifest.tsv").string().c_str());
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& manifest, const std::string& out_dir,
              const std::string& seed_spec, const std::string& resume_path) {
  const ConfigMap cfg = common.resolve();
  const NetworkConfig netcfg = NetworkConfig::from_config(cfg);
  TrainConfig traincfg = TrainConfig::from_config(cfg);
  const std::string dir = out_dir.empty() ? (fs::path(output_root()) / "train").string() : out_dir;

  const auto dataset = load_unpaired_dataset<float>(manifest);
  if (!dataset.raw_videos.empty() && dataset.raw_videos.front().dim() != netcfg.feature_dim) {
    throw ValidationError("train: corpus has D=" + std::to_string(dataset.raw_videos.front().dim()) +
                          " but network.feature_dim=" + std::to_string(netcfg.feature_dim));
  }

  if (!resume_path.empty()) {
    auto loaded = load_train_checkpoint(resume_path);
    fs::create_directories(dir);
    std::ofstream metrics((fs::path(dir) / "metrics.jsonl").string(), std::ios::app);
    TrainSinks sinks{&metrics, dir};
    train_epochs(loaded.state, dataset, loaded.network, traincfg, sinks);
    save_train_checkpoint((fs::path(dir) / "checkpoint.uvsc").string(), loaded.network, loaded.state);
    std::printf("resumed to epoch %d (%ld steps): %s\n", loaded.state.epoch, loaded.state.step,
                (fs::path(dir) / "checkpoint.uvsc").string().c_str());
    return 0;
  }

  const auto seeds = seed_spec.empty() ? std::vector<std::uint64_t>{traincfg.seed} : parse_seed_spec(seed_spec);
  nlohmann::json summary = nlohmann::json::array();
  for (const std::uint64_t seed : seeds) {
    traincfg.seed = seed;
    char sub[32];
    std::snprintf(sub, sizeof(sub), "seed_%04llu", static_cast<unsigned long long>(seed));
    const fs::path run_dir = seed_spec.empty() ? fs::path(dir) : fs::path(dir) / sub;
    fs::create_directories(run_dir);

    ConfigMap resolved;
    netcfg.to_config(resolved);
    traincfg.to_config(resolved);
    write_text_file((run_dir / "resolved_config.txt").string(), resolved.serialize());

    std::ofstream metrics((run_dir / "metrics.jsonl").string(), std::ios::trunc);
    TrainSinks sinks{&metrics, run_dir.string()};
    const TrainState state = train(dataset, netcfg, traincfg, sinks);
    const std::string ckpt = (run_dir / "checkpoint.uvsc").string();
    save_train_checkpoint(ckpt, netcfg, state);

    summary.push_back({{"seed", seed}, {"epochs", state.epoch}, {"steps", state.step}, {"checkpoint", ckpt}});
    std::printf("seed %llu: %d epochs, %ld steps -> %s\n", static_cast<unsigned long long>(seed), state.epoch,
                state.step, ckpt.c_str());
  }
  if (seeds.size() > 1) {
    write_text_file((fs::path(dir) / "seeds_summary.json").string(), summary.dump(2) + "\n");
  }
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::vector<std::string>& checkpoints, const std::string& manifest,
                 const std::string& out_path) {
  const ConfigMap cfg = common.resolve();
  const EvalConfig evalcfg = eval_config_from_map(cfg);

  nlohmann::json runs = nlohmann::json::array();
  double mp = 0, mr = 0, mf = 0;
  std::printf("%-40s %10s %10s %10s\n", "checkpoint", "P", "R", "F");
  for (const auto& ckpt : checkpoints) {
    const EvalReport report = evaluate_dataset(ckpt, manifest, evalcfg);
    ConfigMap echo;
    eval_config_to_map(evalcfg, echo);
    const auto model = load_model_checkpoint(ckpt);
    model.network.to_config(echo);
    nlohmann::json doc = report_to_json(report, echo);
    doc["checkpoint"] = ckpt;
    runs.push_back(doc);
    mp += report.mean_precision / checkpoints.size();
    mr += report.mean_recall / checkpoints.size();
    mf += report.mean_f / checkpoints.size();
    std::printf("%-40s %10.4f %10.4f %10.4f\n", fs::path(ckpt).filename().string().c_str(),
                round4(report.mean_precision), round4(report.mean_recall), round4(report.mean_f));
  }
  std::printf("%-40s %10.4f %10.4f %10.4f\n", "mean", round4(mp), round4(mr), round4(mf));

  nlohmann::json out;
  if (checkpoints.size() == 1) {
    out = runs[0];
  } else {
    ConfigMap echo;
    eval_config_to_map(evalcfg, echo);
    out = nlohmann::json::object();
    out["config"] = nlohmann::json::object();
    for (const auto& [k, v] : echo.values()) out["config"][k] = v;
    out["runs"] = runs;
    out["mean_P"] = round4(mp);
    out["mean_R"] = round4(mr);
    out["mean_F"] = round4(mf);
  }
  if (!out_path.empty()) {
    const fs::path parent = fs::path(out_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_text_file(out_path, out.dump(2) + "\n");
    std::printf("report: %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_summarize(const CommonArgs& common, const std::string& checkpoint, std::vector<std::string> feature_files,
                  const std::string& manifest, const std::string& out_dir) {
  const ConfigMap cfg = common.resolve();
  const EvalConfig evalcfg = eval_config_from_map(cfg);
  const auto model = load_model_checkpoint(checkpoint);

  if (!manifest.empty()) {
    for (const auto& e : read_manifest(manifest)) feature_files.push_back(resolve_path(manifest, e.feature_path));
  }
  if (feature_files.empty()) throw ConfigError("summarize: no input videos (--features or --manifest)");
  const std::string dir = out_dir.empty() ? (fs::path(output_root()) / "summaries").string() : out_dir;
  fs::create_directories(dir);

  ConfigMap echo;
  eval_config_to_map(evalcfg, echo);
  model.network.to_config(echo);
  for (const auto& file : feature_files) {
    const auto video = read_features<float>(file);
    if (video.dim() != model.network.feature_dim) {
      throw ValidationError("summarize: video '" + video.video_id + "' has D=" + std::to_string(video.dim()) +
                            " but the checkpoint expects D=" + std::to_string(model.network.feature_dim));
    }
    const VideoSummary s = summarize_video(model.selector, model.network, video, evalcfg);
    const std::string stem = video.video_id;
    write_annotation_masks((fs::path(dir) / (stem + ".summary.uvsa")).string(), {s.shots.mask});

    nlohmann::json side;
    side["video_id"] = stem;
    side["selected_keyframes"] = s.keyframe_indices;
    side["segment_boundaries"] = s.segments.boundaries;
    side["summary_frames"] = popcount(s.shots.mask);
    side["config"] = nlohmann::json::object();
    for (const auto& [k, v] : echo.values()) side["config"][k] = v;
    write_text_file((fs::path(dir) / (stem + ".summary.json")).string(), side.dump(2) + "\n");
    std::printf("%s: %d key frames, %d summary frames of %d\n", stem.c_str(),
                static_cast<int>(s.keyframe_indices.size()), popcount(s.shots.mask),
                static_cast<int>(video.frames()));
  }
  return 0;
}

int cmd_segment(const CommonArgs& common, const std::vector<std::string>& feature_files, const std::string& out_path) {
  const ConfigMap cfg = common.resolve();
  const EvalConfig evalcfg = eval_config_from_map(cfg);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& file : feature_files) {
    const auto video = read_features<float>(file);
    const int t = static_cast<int>(video.frames());
    const auto segs = kts(video, std::min(evalcfg.kts.max_segments, t), evalcfg.kts.penalty_coeff,
                          evalcfg.kts.normalized);
    nlohmann::json j;
    j["video_id"] = video.video_id;
    j["frames"] = t;
    j["boundaries"] = segs.boundaries;
    j["kts_max_segments"] = evalcfg.kts.max_segments;
    j["kts_penalty_coeff"] = evalcfg.kts.penalty_coeff;
    j["kts_normalized"] = evalcfg.kts.normalized;
    out.push_back(j);
  }
  const std::string text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_file(out_path, text);
    std::printf("segments: %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  const std::string m(magic, 4);
  if (m == "UVSN") {
    const auto v = read_features<float>(path);
    std::printf("feature file: T=%d D=%d (%s)\n", static_cast<int>(v.frames()), static_cast<int>(v.dim()),
                path.c_str());
  } else if (m == "UVSA") {
    const auto masks = read_annotation_masks(path);
    std::printf("annotation file: T=%d U=%d\n", static_cast<int>(masks.front().size()),
                static_cast<int>(masks.size()));
    for (std::size_t u = 0; u < masks.size(); ++u) {
      std::printf("  mask %zu: %d of %zu frames\n", u, popcount(masks[u]), masks[u].size());
    }
  } else if (m == "UVSC") {
    const auto ckpt = read_checkpoint(path);
    std::printf("checkpoint: %zu arrays\n--- config ---\n%s--- arrays ---\n", ckpt.arrays.size(),
                ckpt.config_text.c_str());
    for (const auto& a : ckpt.arrays) {
      std::printf("  %-24s [", a.name.c_str());
      for (std::size_t i = 0; i < a.dims.size(); ++i) std::printf("%s%u", i ? " x " : "", a.dims[i]);
      std::printf("]\n");
    }
  } else {
    const auto entries = read_manifest(path);
    int raw = 0, summary = 0, paired = 0, test = 0;
    for (const auto& e : entries) {
      raw += e.role == Role::raw;
      summary += e.role == Role::summary;
      paired += e.role == Role::paired;
      test += e.role == Role::test;
    }
    std::printf("manifest: %zu entries (raw=%d summary=%d paired=%d test=%d)\n", entries.size(), raw, summary,
                paired, test);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CommonArgs common;
  std::vector<std::string> args;
  args.emplace_back(argv[0]);
  for (int i = 1; i < argc; ++i) {
    const std::string a(argv[i]);
    if (looks_like_override(a)) {
      common.overrides.push_back(a.substr(2));
    } else {
      args.push_back(a);
    }
  }

  CLI::App app{"key-frame video summarization from unpaired data"};
  app.require_subcommand(1);
  app.add_option("--config", common.config_path, "flat section.key=value config file");

  std::string out_dir, manifest, seed_spec, resume_path, out_path, inspect_path, checkpoint;
  std::vector<std::string> datasets, checkpoints, features;

  const auto override_opt = [&common](const std::string& key) {
    return [&common, key](const std::vector<std::string>& v) {
      common.overrides.push_back(key + "=" + v.back());
      return true;
    };
  };

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic corpus with planted structure");
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--videos", override_opt("synth.n_videos"), "number of videos");
  gen->add_option("--seed", override_opt("synth.seed"), "generator seed");
  gen->add_option("--prefix", override_opt("synth.id_prefix"), "video id prefix");

  auto* splits = app.add_subcommand("make-splits", "build unpaired train/test manifests");
  splits->add_option("--dataset", datasets, "name=manifest (repeatable)");
  splits->add_option("--target", override_opt("split.target"), "target dataset name");
  splits->add_option("--mode", override_opt("split.mode"), "standard | transfer");
  splits->add_option("--seed", override_opt("split.seed"), "split seed");
  splits->add_option("--psup-fraction", override_opt("split.psup_fraction"), "fraction of raw videos marked paired");
  splits->add_option("--out", out_dir, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train a model on an unpaired manifest");
  train_cmd->add_option("--manifest", manifest, "training manifest")->required();
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--seeds", seed_spec, "seed list or range, e.g. 1..5");
  train_cmd->add_option("--resume", resume_path, "resume from a training checkpoint");
  train_cmd->add_option("--preset", override_opt("train.preset"),
                        "sumfcn_unsup | unpaired_adv | unpaired | unpaired_psup");
  train_cmd->add_option("--epochs", override_opt("train.epochs"), "training epochs");

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate checkpoints on a test manifest");
  eval_cmd->add_option("--checkpoint", checkpoints, "model checkpoint (repeatable)")->required();
  eval_cmd->add_option("--manifest", manifest, "test manifest")->required();
  eval_cmd->add_option("--out", out_path, "report JSON path");

  auto* summ = app.add_subcommand("summarize", "emit keyshot masks for videos");
  summ->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  summ->add_option("--features", features, "feature file (repeatable)");
  summ->add_option("--manifest", manifest, "manifest whose feature files are summarized");
  summ->add_option("--out", out_dir, "output directory");

  auto* seg = app.add_subcommand("segment", "KTS temporal segmentation of feature files");
  seg->add_option("--features", features, "feature file (repeatable)")->required();
  seg->add_option("--out", out_path, "output JSON path (default stdout)");

  auto* insp = app.add_subcommand("inspect", "describe a uvsn file (features/annotation/checkpoint/manifest)");
  insp->add_option("path", inspect_path, "file to inspect")->required();

  try {
    std::vector<const char*> ptrs;
    ptrs.reserve(args.size());
    for (const auto& a : args) ptrs.push_back(a.c_str());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());

    if (gen->parsed()) return cmd_gen_synth(common, out_dir);
    if (splits->parsed()) return cmd_make_splits(common, datasets, out_dir);
    if (train_cmd->parsed()) return cmd_train(common, manifest, out_dir, seed_spec, resume_path);
    if (eval_cmd->parsed()) return cmd_evaluate(common, checkpoints, manifest, out_path);
    if (summ->parsed()) return cmd_summarize(common, checkpoint, features, manifest, out_dir);
    if (seg->parsed()) return cmd_segment(common, features, out_path);
    if (insp->parsed()) return cmd_inspect(inspect_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "uvsn: config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "uvsn: error: %s\n", e.what());
    return 1;
  }
}
