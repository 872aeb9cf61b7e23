// Command-line front end: synth / train / predict / eval.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data or format
// error, 4 training or other runtime failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gebd/data.hpp"
#include "gebd/errors.hpp"
#include "gebd/jsonio.hpp"
#include "gebd/model.hpp"
#include "gebd/postprocess.hpp"
#include "gebd/trainer.hpp"

namespace fs = std::filesystem;
using namespace gebd;

namespace {

constexpr const char* kToolVersion = "1.0.0";

using Clock = std::chrono::steady_clock;

void write_manifest(const std::string& path, const std::string& command,
                    const ordered_json& config, uint64_t seed,
                    const std::vector<std::string>& artifacts,
                    Clock::time_point started) {
  ordered_json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["artifacts"] = artifacts;
  m["tool_version"] = kToolVersion;
  m["duration_seconds"] =
      std::chrono::duration<double>(Clock::now() - started).count();
  write_file_atomic(path, m.dump(2) + "\n");
}

// Flags beat config files, so these merges only touch keys that exist.
template <typename T>
void take(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void merge_synth_config(SynthConfig& s, const ordered_json& j) {
  take(j, "l_min", s.l_min);
  take(j, "l_max", s.l_max);
  take(j, "dim", s.dim);
  take(j, "segments_min", s.segments_min);
  take(j, "segments_max", s.segments_max);
  take(j, "min_gap", s.min_gap);
  take(j, "noise", s.noise);
  take(j, "snippet_rate", s.snippet_rate);
  take(j, "base_scale", s.base_scale);
  take(j, "action_shift", s.action_shift);
  take(j, "shot_scale", s.shot_scale);
  take(j, "p_shot", s.p_shot);
}

void merge_model_config(ModelConfig& m, const ordered_json& j) {
  take(j, "feature_dim", m.feature_dim);
  take(j, "d_enc", m.d_enc);
  take(j, "enc_tf_layers", m.enc_tf_layers);
  take(j, "enc_tf_heads", m.enc_tf_heads);
  take(j, "simsiam_hidden", m.simsiam_hidden);
  if (j.contains("decoder")) {
    const ordered_json& d = j.at("decoder");
    take(d, "c_decoder", m.decoder.c_decoder);
    if (d.contains("stage_widths")) {
      auto widths = d.at("stage_widths").get<std::vector<int>>();
      if (widths.size() != m.decoder.stage_widths.size())
        throw ConfigError("decoder.stage_widths must have 4 entries");
      std::copy(widths.begin(), widths.end(), m.decoder.stage_widths.begin());
    }
    take(d, "blocks_per_stage", m.decoder.blocks_per_stage);
  }
  take(j, "tsm_head_hidden", m.tsm_head_hidden);
  take(j, "head_tf_layers", m.head_tf_layers);
  take(j, "head_tf_heads", m.head_tf_heads);
  if (j.contains("variant"))
    m.variant = variant_from_string(j.at("variant").get<std::string>());
  take(j, "stop_gradient", m.stop_gradient);
}

void merge_train_config(TrainConfig& t, const ordered_json& j) {
  take(j, "epochs", t.epochs);
  take(j, "learning_rate", t.learning_rate);
  take(j, "weight_decay", t.weight_decay);
  take(j, "seed", t.seed);
  take(j, "local_range", t.local_range);
  if (j.contains("weights")) {
    const ordered_json& w = j.at("weights");
    take(w, "action", t.weights.action);
    take(w, "shot", t.weights.shot);
    take(w, "whole", t.weights.whole);
    take(w, "lambda_contra", t.weights.lambda_contra);
  }
  take(j, "videos_per_step", t.videos_per_step);
  take(j, "label_smooth_width", t.label_smooth_width);
  take(j, "eval_rels", t.eval_rels);
  take(j, "patience", t.patience);
  if (j.contains("peaks")) {
    const ordered_json& p = j.at("peaks");
    take(p, "k", t.peaks.k);
    take(p, "threshold", t.peaks.threshold);
  }
}

ordered_json load_config_file(const std::string& path) {
  if (path.empty()) return ordered_json::object();
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return parse_json_file(path);
}

// ------------------------------------------------------------------ synth

int run_synth(const std::string& out_dir, int num_videos, uint64_t seed,
              const std::string& config_path) {
  const auto started = Clock::now();
  SynthConfig scfg;
  const ordered_json cfg_json = load_config_file(config_path);
  merge_synth_config(scfg, cfg_json);
  scfg.validate();

  auto [features, annotations] =
      generate_synthetic_dataset(num_videos, seed, scfg);
  Dataset data{std::move(features), std::move(annotations)};
  save_dataset(out_dir, data);

  std::vector<std::string> artifacts;
  artifacts.push_back((fs::path(out_dir) / "annotations.json").string());
  for (const FeatureSequence& f : data.features)
    artifacts.push_back(
        (fs::path(out_dir) / "features" / (f.video_id + ".gebf")).string());

  ordered_json resolved;
  resolved["num_videos"] = num_videos;
  resolved["synth"] = ordered_json{{"l_min", scfg.l_min},
                                   {"l_max", scfg.l_max},
                                   {"dim", scfg.dim},
                                   {"segments_min", scfg.segments_min},
                                   {"segments_max", scfg.segments_max},
                                   {"min_gap", scfg.min_gap},
                                   {"noise", scfg.noise},
                                   {"snippet_rate", scfg.snippet_rate},
                                   {"base_scale", scfg.base_scale},
                                   {"action_shift", scfg.action_shift},
                                   {"shot_scale", scfg.shot_scale},
                                   {"p_shot", scfg.p_shot}};
  write_manifest((fs::path(out_dir) / "manifest.json").string(), "synth",
                 resolved, seed, artifacts, started);
  std::cout << "wrote " << data.features.size() << " videos to " << out_dir
            << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

int run_train(const std::string& data_dir, const std::string& out_dir,
              int fold, int k, const std::string& config_path,
              const CLI::App* cmd, uint64_t seed, int epochs, double lr,
              int local_range) {
  const auto started = Clock::now();
  if (fold < 0 || fold >= k)
    throw ConfigError("--fold must lie in [0, --k)");

  ModelConfig mcfg;
  TrainConfig tcfg;
  const ordered_json cfg_json = load_config_file(config_path);
  if (cfg_json.contains("model")) merge_model_config(mcfg, cfg_json.at("model"));
  if (cfg_json.contains("train")) merge_train_config(tcfg, cfg_json.at("train"));
  if (cmd->count("--seed")) tcfg.seed = seed;
  if (cmd->count("--epochs")) tcfg.epochs = epochs;
  if (cmd->count("--lr")) tcfg.learning_rate = lr;
  if (cmd->count("--local-range")) tcfg.local_range = local_range;

  const Dataset data = load_dataset(data_dir);
  if (data.features.empty()) throw InputError(data_dir + ": empty dataset");
  const int data_dim = data.features.front().D;
  if (mcfg.feature_dim == 0) {
    mcfg.feature_dim = data_dim;
  } else if (mcfg.feature_dim != data_dim) {
    throw ConfigError("config feature_dim " + std::to_string(mcfg.feature_dim) +
                      " does not match data dimension " +
                      std::to_string(data_dim));
  }
  mcfg.validate();
  tcfg.validate();

  const std::vector<DatasetSplit> folds = make_folds(data.ids(), k, tcfg.seed);
  const DatasetSplit& split = folds[static_cast<std::size_t>(fold)];

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  const Checkpoint ck =
      train_fold(data, split, mcfg, tcfg, metrics_path, &std::cout);
  const std::string ckpt_path =
      (fs::path(out_dir) / ("fold_" + std::to_string(fold) + ".gebc")).string();
  save_checkpoint(ckpt_path, ck);

  ordered_json resolved;
  resolved["data"] = data_dir;
  resolved["fold"] = fold;
  resolved["k"] = k;
  resolved["model"] = mcfg.to_json();
  resolved["train"] = tcfg.to_json();
  write_manifest(
      (fs::path(out_dir) / ("manifest_fold_" + std::to_string(fold) + ".json"))
          .string(),
      "train", resolved, tcfg.seed, {ckpt_path, metrics_path}, started);
  std::cout << "fold " << fold << ": best epoch " << ck.best_epoch
            << ", val F1 " << ck.best_val_f1 << " -> " << ckpt_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

int run_predict(const std::string& data_dir,
                const std::vector<std::string>& ckpt_paths,
                const std::string& out_path, int peak_k, double threshold,
                const std::string& cls_name) {
  const auto started = Clock::now();
  PeakConfig peaks;
  peaks.k = peak_k;
  peaks.threshold = threshold;
  peaks.validate();

  std::vector<BoundaryClass> classes;
  if (cls_name == "all") {
    classes = {BoundaryClass::Action, BoundaryClass::Shot, BoundaryClass::Whole};
  } else {
    classes = {class_from_name(cls_name)};
  }

  std::vector<GebdModel> models;
  models.reserve(ckpt_paths.size());
  for (const std::string& p : ckpt_paths) {
    Checkpoint ck = load_checkpoint(p);
    if (!models.empty() &&
        ck.model.feature_dim != models.front().config().feature_dim)
      throw InputError("checkpoint " + p +
                       " has a different feature dimension than the first one");
    models.push_back(model_from_checkpoint(ck));
  }

  const Dataset data = load_dataset(data_dir);
  std::vector<BoundaryPrediction> out;
  for (const FeatureSequence& fsq : data.features) {
    std::vector<Mat> per_model;
    per_model.reserve(models.size());
    for (const GebdModel& m : models)
      per_model.push_back(predict_sequence(m, fsq).p_final);
    const Mat p = ensemble_average(per_model);
    for (BoundaryClass c : classes) {
      std::vector<double> series(static_cast<std::size_t>(p.rows));
      for (int t = 0; t < p.rows; ++t)
        series[static_cast<std::size_t>(t)] = p.at(t, static_cast<int>(c));
      BoundaryPrediction bp;
      bp.video_id = fsq.video_id;
      bp.cls = c;
      bp.timestamps = indices_to_timestamps(estimate_peaks(series, peaks),
                                            fsq.snippet_rate);
      out.push_back(std::move(bp));
    }
  }
  write_predictions(out_path, out);

  ordered_json resolved;
  resolved["data"] = data_dir;
  resolved["checkpoints"] = ckpt_paths;
  resolved["peaks"] = ordered_json{{"k", peaks.k}, {"threshold", peaks.threshold}};
  resolved["class"] = cls_name;
  write_manifest(out_path + ".manifest.json", "predict", resolved, 0, {out_path},
                 started);
  std::cout << "wrote predictions for " << data.features.size() << " videos to "
            << out_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval

int run_eval(const std::string& pred_path, const std::string& ann_path,
             std::vector<double> rels, const std::string& cls_name,
             const std::string& out_path) {
  const auto started = Clock::now();
  if (rels.empty()) rels = {0.05};
  const BoundaryClass cls = class_from_name(cls_name);
  const std::vector<BoundaryPrediction> preds = read_predictions(pred_path);
  const std::vector<BoundaryAnnotation> anns = read_annotations(ann_path);
  const EvalReport rep = evaluate_dataset(preds, anns, rels, cls);
  std::cout << rep.table();
  if (!out_path.empty()) {
    write_file_atomic(out_path, rep.to_json().dump(2) + "\n");
    ordered_json resolved;
    resolved["pred"] = pred_path;
    resolved["ann"] = ann_path;
    resolved["rel"] = rels;
    resolved["class"] = cls_name;
    write_manifest(out_path + ".manifest.json", "eval", resolved, 0, {out_path},
                   started);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event boundary detection: synthesize data, train, predict, evaluate"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out, synth_config;
  int num_videos = 0;
  uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--num-videos", num_videos, "Number of videos")
      ->required()
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--config", synth_config, "Synthesis config JSON");

  // train
  auto* train = app.add_subcommand("train", "Train one fold");
  std::string train_data, train_out, train_config;
  int fold = 0, kfolds = 5, epochs = 0, local_range = 0;
  uint64_t train_seed = 0;
  double lr = 0.0;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--fold", fold, "Fold index")->required();
  train->add_option("--k", kfolds, "Number of folds")->check(CLI::PositiveNumber);
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--epochs", epochs, "Epoch count")->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--local-range", local_range, "Contrastive mask span")
      ->check(CLI::PositiveNumber);
  train->add_option("--config", train_config, "Model/train config JSON");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict boundaries");
  std::string pred_data, pred_out, pred_class = "all";
  std::vector<std::string> ckpts;
  int peak_k = 1;
  double threshold = 0.3;
  predict->add_option("--data", pred_data, "Dataset directory")->required();
  predict->add_option("--ckpt", ckpts, "Checkpoint file(s); several ensemble")
      ->required()
      ->expected(-1);
  predict->add_option("--out", pred_out, "Predictions JSON path")->required();
  predict->add_option("--peak-k", peak_k, "Peak neighbor span")
      ->check(CLI::Range(1, 8));
  predict->add_option("--threshold", threshold, "Peak probability threshold")
      ->check(CLI::Range(0.0, 1.0));
  predict->add_option("--class", pred_class, "action|shot|whole|all")
      ->check(CLI::IsMember({"action", "shot", "whole", "all"}));

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions");
  std::string eval_pred, eval_ann, eval_class = "whole", eval_out;
  std::vector<double> rels;
  eval->add_option("--pred", eval_pred, "Predictions JSON")->required();
  eval->add_option("--ann", eval_ann, "Annotations JSON")->required();
  eval->add_option("--rel", rels, "Relative-distance thresholds")
      ->delimiter(',');
  eval->add_option("--class", eval_class, "action|shot|whole")
      ->check(CLI::IsMember({"action", "shot", "whole"}));
  eval->add_option("--out", eval_out, "Report JSON path (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help exits 0; any usage problem is 2
  }

  try {
    if (*synth) return run_synth(synth_out, num_videos, synth_seed, synth_config);
    if (*train)
      return run_train(train_data, train_out, fold, kfolds, train_config, train,
                       train_seed, epochs, lr, local_range);
    if (*predict)
      return run_predict(pred_data, ckpts, pred_out, peak_k, threshold,
                         pred_class);
    if (*eval) return run_eval(eval_pred, eval_ann, rels, eval_class, eval_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
