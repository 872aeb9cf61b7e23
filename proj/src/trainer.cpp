#include "gebd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gebd/binio.hpp"
#include "gebd/errors.hpp"

namespace gebd {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (local_range < 1) throw ConfigError("local_range must be >= 1");
  if (weights.action < 0 || weights.shot < 0 || weights.whole < 0 ||
      weights.lambda_contra < 0)
    throw ConfigError("loss weights must be >= 0");
  if (videos_per_step < 1) throw ConfigError("videos_per_step must be >= 1");
  if (label_smooth_width < 0) throw ConfigError("label_smooth_width must be >= 0");
  if (eval_rels.empty()) throw ConfigError("eval_rels must be nonempty");
  for (double r : eval_rels)
    if (r <= 0.0) throw ConfigError("eval_rels entries must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  peaks.validate();
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["seed"] = seed;
  j["local_range"] = local_range;
  j["weights"] = ordered_json{{"action", weights.action},
                              {"shot", weights.shot},
                              {"whole", weights.whole},
                              {"lambda_contra", weights.lambda_contra}};
  j["videos_per_step"] = videos_per_step;
  j["label_smooth_width"] = label_smooth_width;
  j["eval_rels"] = eval_rels;
  j["patience"] = patience;
  j["peaks"] = ordered_json{{"k", peaks.k}, {"threshold", peaks.threshold}};
  return j;
}

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  TrainConfig c;
  try {
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.local_range = j.at("local_range").get<int>();
    const ordered_json& w = j.at("weights");
    c.weights.action = w.at("action").get<double>();
    c.weights.shot = w.at("shot").get<double>();
    c.weights.whole = w.at("whole").get<double>();
    c.weights.lambda_contra = w.at("lambda_contra").get<double>();
    c.videos_per_step = j.at("videos_per_step").get<int>();
    c.label_smooth_width = j.at("label_smooth_width").get<int>();
    c.eval_rels = j.at("eval_rels").get<std::vector<double>>();
    c.patience = j.at("patience").get<int>();
    const ordered_json& p = j.at("peaks");
    c.peaks.k = p.at("k").get<int>();
    c.peaks.threshold = p.at("threshold").get<double>();
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

// --------------------------------------------------------------------------
// Checkpoint container "GEBC" v1 (little-endian):
//   magic 4B | version u32 | meta_len u64 | meta JSON |
//   num_tensors u32 | per tensor: name_len u16, name, ndims u32,
//   dims u32 each, count u64, count * f64
// --------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'G', 'E', 'B', 'C'};
constexpr uint32_t kCkptVersion = 1;

ordered_json history_json(const std::vector<EpochMetrics>& hist) {
  ordered_json arr = ordered_json::array();
  for (const EpochMetrics& m : hist) {
    ordered_json o;
    o["epoch"] = m.epoch;
    o["train_loss"] = m.train_loss;
    o["train_contra"] = m.train_contra;
    o["val_precision"] = m.val_precision;
    o["val_recall"] = m.val_recall;
    o["val_f1"] = m.val_f1;
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<EpochMetrics> history_from_json(const ordered_json& arr) {
  std::vector<EpochMetrics> hist;
  for (const auto& o : arr) {
    EpochMetrics m;
    m.epoch = o.at("epoch").get<int>();
    m.train_loss = o.at("train_loss").get<double>();
    m.train_contra = o.at("train_contra").get<double>();
    m.val_precision = o.at("val_precision").get<double>();
    m.val_recall = o.at("val_recall").get<double>();
    m.val_f1 = o.at("val_f1").get<double>();
    hist.push_back(m);
  }
  return hist;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ordered_json meta;
  meta["model"] = ck.model.to_json();
  meta["train"] = ck.train.to_json();
  meta["fold_index"] = ck.fold_index;
  meta["best_epoch"] = ck.best_epoch;
  meta["best_val_f1"] = ck.best_val_f1;
  meta["history"] = history_json(ck.history);
  const std::string meta_text = meta.dump();

  std::string buf;
  buf.append(kCkptMagic, 4);
  binio::put_u32(buf, kCkptVersion);
  binio::put_u64(buf, meta_text.size());
  buf.append(meta_text);
  binio::put_u32(buf, static_cast<uint32_t>(ck.tensors.size()));
  for (const TensorBlob& t : ck.tensors) {
    if (t.name.size() > 0xffff)
      throw FormatError(path + ": tensor name longer than 65535 bytes");
    binio::put_u16(buf, static_cast<uint16_t>(t.name.size()));
    buf.append(t.name);
    binio::put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    std::size_t count = 1;
    for (int d : t.shape) {
      if (d < 1) throw FormatError(path + ": non-positive tensor dim");
      binio::put_u32(buf, static_cast<uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != t.v.size())
      throw FormatError(path + ": tensor '" + t.name + "' shape/value mismatch");
    binio::put_u64(buf, count);
    for (double x : t.v) binio::put_f64(buf, x);
  }
  write_file_atomic(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  binio::ByteReader r{read_text_file(path), 0, path};
  r.need(4, "magic");
  if (std::memcmp(r.data.data(), kCkptMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != kCkptVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  const uint64_t meta_len = r.u64("meta length");
  const std::string meta_text = r.bytes(meta_len, "meta block");
  const ordered_json meta = parse_json_text(meta_text, path + " (meta)");

  Checkpoint ck;
  try {
    ck.model = ModelConfig::from_json(meta.at("model"));
    ck.train = TrainConfig::from_json(meta.at("train"));
    ck.fold_index = meta.at("fold_index").get<int>();
    ck.best_epoch = meta.at("best_epoch").get<int>();
    ck.best_val_f1 = meta.at("best_val_f1").get<double>();
    ck.history = history_from_json(meta.at("history"));
  } catch (const ordered_json::exception& e) {
    throw FormatError(path + ": bad checkpoint meta: " + e.what());
  }

  const uint32_t n = r.u32("tensor count");
  ck.tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    TensorBlob t;
    const uint16_t name_len = r.u16("tensor name length");
    t.name = r.bytes(name_len, "tensor name");
    const uint32_t ndims = r.u32("tensor rank");
    if (ndims > 8) throw FormatError(path + ": implausible tensor rank");
    std::size_t count = 1;
    for (uint32_t d = 0; d < ndims; ++d) {
      const uint32_t dim = r.u32("tensor dim");
      t.shape.push_back(static_cast<int>(dim));
      count *= dim;
    }
    const uint64_t stored = r.u64("tensor count");
    if (stored != count)
      throw FormatError(path + ": tensor '" + t.name +
                        "' count mismatch at byte offset " +
                        std::to_string(r.pos));
    t.v.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t off = r.pos;
      t.v[j] = r.f64("tensor payload");
      if (!std::isfinite(t.v[j]))
        throw FormatError(path + ": non-finite parameter at byte offset " +
                          std::to_string(off));
    }
    ck.tensors.push_back(std::move(t));
  }
  if (r.pos != r.data.size())
    throw FormatError(path + ": trailing data at byte offset " +
                      std::to_string(r.pos));
  return ck;
}

namespace {

std::vector<TensorBlob> snapshot_params(nn::ParamList params) {
  std::vector<TensorBlob> out;
  out.reserve(params.size());
  for (const nn::PTensor* p : params)
    out.push_back(TensorBlob{p->name, p->shape, p->v});
  return out;
}

}  // namespace

GebdModel model_from_checkpoint(const Checkpoint& ck) {
  GebdModel model(ck.model);
  nn::ParamList params = model.params();
  if (params.size() != ck.tensors.size())
    throw FormatError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                      " tensors, model expects " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const TensorBlob& t = ck.tensors[i];
    nn::PTensor* p = params[i];
    if (p->name != t.name)
      throw FormatError("checkpoint tensor order mismatch: expected '" +
                        p->name + "', found '" + t.name + "'");
    if (p->shape != t.shape)
      throw FormatError("checkpoint tensor '" + t.name + "' shape mismatch");
    p->v = t.v;
  }
  return model;
}

const FeatureSequence& Dataset::features_of(const std::string& id) const {
  for (const FeatureSequence& f : features)
    if (f.video_id == id) return f;
  throw InputError("no features for video '" + id + "'");
}

const BoundaryAnnotation& Dataset::annotation_of(const std::string& id) const {
  for (const BoundaryAnnotation& a : annotations)
    if (a.video_id == id) return a;
  throw InputError("no annotation for video '" + id + "'");
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const FeatureSequence& f : features) out.push_back(f.video_id);
  return out;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  for (const FeatureSequence& f : data.features)
    write_feature_file((fs::path(dir) / "features" / (f.video_id + ".gebf")).string(), f);
  write_annotations((fs::path(dir) / "annotations.json").string(),
                    data.annotations);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "annotations.json"))
    throw InputError(dir + ": missing annotations.json");
  Dataset data;
  data.annotations = read_annotations((root / "annotations.json").string());
  const fs::path feat_dir = root / "features";
  if (!fs::is_directory(feat_dir))
    throw InputError(dir + ": missing features/ directory");
  for (const BoundaryAnnotation& a : data.annotations) {
    const fs::path p = feat_dir / (a.video_id + ".gebf");
    if (!fs::exists(p))
      throw InputError("missing feature file for video '" + a.video_id + "'");
    FeatureSequence f = read_feature_file(p.string());
    if (f.video_id != a.video_id)
      throw FormatError(p.string() + ": video_id does not match file name");
    data.features.push_back(std::move(f));
  }
  return data;
}

namespace {

// Everything train_fold needs per video, computed once.
struct VideoBundle {
  const FeatureSequence* fs = nullptr;
  Mat x;
  std::array<std::vector<double>, 3> targets;
  std::array<ContrastiveMask, 3> masks;
};

// Pointer list aligned with the bank's stream order. Rebuilt per use; the
// bundles relocate when their vector grows, so cached pointers would dangle.
std::vector<const ContrastiveMask*> stream_masks(const VideoBundle& b,
                                                 const GebdModel& model) {
  std::vector<const ContrastiveMask*> ptrs;
  ptrs.reserve(kNumStreams);
  for (const StreamMeta& m : model.bank().streams())
    ptrs.push_back(&b.masks[static_cast<std::size_t>(m.cls)]);
  return ptrs;
}

VideoBundle make_bundle(const Dataset& data, const std::string& id,
                        const TrainConfig& tcfg, bool with_masks) {
  VideoBundle b;
  b.fs = &data.features_of(id);
  const BoundaryAnnotation& ann = data.annotation_of(id);
  b.x = b.fs->as_mat();
  const LabelSeries labels =
      snippetize_labels(ann, b.fs->L, b.fs->snippet_rate);
  for (int c = 0; c < kNumClasses; ++c)
    b.targets[static_cast<std::size_t>(c)] = label_targets(
        labels, static_cast<BoundaryClass>(c), tcfg.label_smooth_width);
  if (with_masks) {
    for (int c = 0; c < kNumClasses; ++c)
      b.masks[static_cast<std::size_t>(c)] = build_contrastive_mask(
          label_indices(labels, static_cast<BoundaryClass>(c)), b.fs->L,
          tcfg.local_range);
  }
  return b;
}

struct ValScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ValScore validate_model(const GebdModel& model, const Dataset& data,
                        const std::vector<std::string>& val_ids,
                        const TrainConfig& tcfg) {
  ValScore s;
  if (val_ids.empty()) return s;
  for (const std::string& id : val_ids) {
    const FeatureSequence& fs = data.features_of(id);
    const BoundaryAnnotation& ann = data.annotation_of(id);
    const PassPredictions preds = predict_sequence(model, fs);
    std::vector<double> series(static_cast<std::size_t>(preds.p_final.rows));
    for (int t = 0; t < preds.p_final.rows; ++t)
      series[static_cast<std::size_t>(t)] =
          preds.p_final.at(t, static_cast<int>(BoundaryClass::Whole));
    const std::vector<int> peaks = estimate_peaks(series, tcfg.peaks);
    const std::vector<double> ts =
        indices_to_timestamps(peaks, fs.snippet_rate);
    const PrfTriple prf = f1_at_rel_dis(
        ts, ann.boundaries(BoundaryClass::Whole), ann.duration,
        tcfg.eval_rels.front());
    s.precision += prf.precision;
    s.recall += prf.recall;
    s.f1 += prf.f1;
  }
  s.precision /= static_cast<double>(val_ids.size());
  s.recall /= static_cast<double>(val_ids.size());
  s.f1 /= static_cast<double>(val_ids.size());
  return s;
}

}  // namespace

Checkpoint train_fold(const Dataset& data, const DatasetSplit& split,
                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                      const std::string& metrics_path, std::ostream* log) {
  tcfg.validate();
  mcfg.validate();
  if (split.train_ids.empty())
    throw InputError("fold " + std::to_string(split.fold_index) +
                     " has an empty training split");

  GebdModel model(mcfg);
  model.init(Rng::mix(tcfg.seed, 0x666f6c64u + static_cast<uint64_t>(split.fold_index)));
  nn::ParamList params = model.params();
  nn::AdamWConfig ocfg;
  ocfg.lr = tcfg.learning_rate;
  ocfg.weight_decay = tcfg.weight_decay;
  nn::AdamW opt(params, ocfg);

  const bool with_masks = tcfg.weights.lambda_contra > 0.0;
  std::vector<VideoBundle> train;
  train.reserve(split.train_ids.size());
  for (const std::string& id : split.train_ids)
    train.push_back(make_bundle(data, id, tcfg, with_masks));

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path, std::ios::trunc);
    if (!metrics) throw InputError("cannot open metrics file " + metrics_path);
  }

  Checkpoint best;
  best.model = mcfg;
  best.train = tcfg;
  best.fold_index = split.fold_index;
  double best_f1 = -1.0;
  int stale = 0;
  long step = 0;
  std::vector<EpochMetrics> history;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng erng(Rng::mix(tcfg.seed, 0x65706f63u + static_cast<uint64_t>(epoch) * 131 +
                                     static_cast<uint64_t>(split.fold_index)));
    erng.shuffle(order);

    double loss_sum = 0.0, contra_sum = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t group =
          std::min<std::size_t>(tcfg.videos_per_step, order.size() - done);
      opt.zero_grad();
      for (std::size_t g = 0; g < group; ++g) {
        VideoBundle& b = train[order[done + g]];
        ModelForwardCtx ctx;
        std::vector<const ContrastiveMask*> mask_ptrs;
        if (with_masks) mask_ptrs = stream_masks(b, model);
        const PassPredictions preds =
            model.forward(b.x, ctx, with_masks ? &mask_ptrs : nullptr);
        const double loss =
            total_loss_soft(preds, b.targets, ctx.contra.loss, tcfg.weights);
        if (!std::isfinite(loss))
          throw TrainingError("non-finite training loss at step " +
                              std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ", video " +
                              b.fs->video_id + ")");
        loss_sum += loss;
        contra_sum += ctx.contra.loss;
        Mat dfinal = total_loss_soft_grad(preds, b.targets, tcfg.weights);
        const double inv = 1.0 / static_cast<double>(group);
        for (double& v : dfinal.v) v *= inv;
        model.backward(dfinal, tcfg.weights.lambda_contra * inv, ctx);
      }
      opt.step();
      ++step;
      done += group;
    }

    const ValScore vs = validate_model(model, data, split.val_ids, tcfg);
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(train.size());
    em.train_contra = contra_sum / static_cast<double>(train.size());
    em.val_precision = vs.precision;
    em.val_recall = vs.recall;
    em.val_f1 = vs.f1;
    history.push_back(em);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (log)
      *log << "fold " << split.fold_index << " epoch " << epoch
           << ": train_loss=" << em.train_loss
           << " contra=" << em.train_contra << " val_f1=" << em.val_f1 << " ("
           << secs << "s)\n";
    if (metrics.is_open()) {
      ordered_json line;
      line["fold"] = split.fold_index;
      line["epoch"] = epoch;
      line["train_loss"] = em.train_loss;
      line["train_contra"] = em.train_contra;
      line["val_precision"] = em.val_precision;
      line["val_recall"] = em.val_recall;
      line["val_f1"] = em.val_f1;
      metrics << line.dump() << "\n";
      metrics.flush();
    }

    if (em.val_f1 > best_f1) {
      best_f1 = em.val_f1;
      best.best_epoch = epoch;
      best.best_val_f1 = em.val_f1;
      best.tensors = snapshot_params(params);
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      break;
    }
  }
  best.history = std::move(history);
  return best;
}

PassPredictions predict_sequence(const GebdModel& model,
                                 const FeatureSequence& fs) {
  if (fs.D != model.config().feature_dim)
    throw ShapeError("feature dimension " + std::to_string(fs.D) +
                     " does not match model feature_dim " +
                     std::to_string(model.config().feature_dim));
  return model.predict(fs.as_mat());
}

Mat ensemble_average(const std::vector<Mat>& probs) {
  if (probs.empty()) throw InputError("ensemble_average needs >= 1 input");
  Mat out = probs.front();
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (!probs[i].same_shape(out))
      throw InputError("ensemble_average shape mismatch");
    for (std::size_t j = 0; j < out.v.size(); ++j) out.v[j] += probs[i].v[j];
  }
  const double inv = 1.0 / static_cast<double>(probs.size());
  for (double& v : out.v) v *= inv;
  return out;
}

}  // namespace gebd
