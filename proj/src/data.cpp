#include "gebd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "gebd/binio.hpp"
#include "gebd/errors.hpp"
#include "gebd/jsonio.hpp"
#include "gebd/rng.hpp"

namespace gebd {

const char* class_name(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::Action: return "action";
    case BoundaryClass::Shot: return "shot";
    case BoundaryClass::Whole: return "whole";
  }
  return "?";
}

BoundaryClass class_from_name(const std::string& name) {
  if (name == "action") return BoundaryClass::Action;
  if (name == "shot") return BoundaryClass::Shot;
  if (name == "whole") return BoundaryClass::Whole;
  throw InputError("unknown boundary class: " + name);
}

Mat FeatureSequence::as_mat() const {
  Mat m(L, D);
  for (std::size_t i = 0; i < features.size(); ++i)
    m.v[i] = static_cast<double>(features[i]);
  return m;
}

void FeatureSequence::validate() const {
  if (L < 2) throw InputError(video_id + ": L must be >= 2");
  if (D < 1) throw InputError(video_id + ": D must be >= 1");
  if (snippet_rate <= 0.0) throw InputError(video_id + ": snippet_rate must be > 0");
  if (duration <= 0.0) throw InputError(video_id + ": duration must be > 0");
  if (features.size() != static_cast<std::size_t>(L) * D)
    throw InputError(video_id + ": feature buffer size mismatch");
  for (float f : features)
    if (!std::isfinite(f)) throw InputError(video_id + ": non-finite feature value");
  const double expected = std::round(duration * snippet_rate);
  if (std::abs(expected - L) > 1.0)
    throw InputError(video_id + ": L inconsistent with duration * snippet_rate");
}

const std::vector<double>& BoundaryAnnotation::boundaries(BoundaryClass c) const {
  switch (c) {
    case BoundaryClass::Action: return action_boundaries;
    case BoundaryClass::Shot: return shot_boundaries;
    case BoundaryClass::Whole: return whole_boundaries;
  }
  return whole_boundaries;
}

void BoundaryAnnotation::validate() const {
  if (duration <= 0.0) throw InputError(video_id + ": duration must be > 0");
  for (const auto* list :
       {&action_boundaries, &shot_boundaries, &whole_boundaries}) {
    if (!std::is_sorted(list->begin(), list->end()))
      throw InputError(video_id + ": boundary list not sorted");
    for (double t : *list)
      if (!(t > 0.0 && t < duration))
        throw InputError(video_id + ": boundary timestamp outside (0, duration)");
  }
}

std::vector<double> derive_whole(const std::vector<double>& action,
                                 const std::vector<double>& shot,
                                 double merge_eps) {
  std::vector<double> all;
  all.reserve(action.size() + shot.size());
  all.insert(all.end(), action.begin(), action.end());
  all.insert(all.end(), shot.begin(), shot.end());
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  for (double t : all) {
    if (out.empty() || t - out.back() > merge_eps)
      out.push_back(t);
  }
  return out;
}

LabelSeries snippetize_labels(const BoundaryAnnotation& ann, int L,
                              double snippet_rate) {
  if (L < 2) throw ConfigError("snippetize_labels: L must be >= 2");
  if (snippet_rate <= 0.0)
    throw ConfigError("snippetize_labels: snippet_rate must be > 0");
  LabelSeries out;
  for (int c = 0; c < kNumClasses; ++c) {
    out.y[c].assign(L, 0);
    for (double t : ann.boundaries(static_cast<BoundaryClass>(c))) {
      long k = std::lround(t * snippet_rate);
      k = std::clamp(k, 0L, static_cast<long>(L - 1));
      out.y[c][static_cast<std::size_t>(k)] = 1;
    }
  }
  return out;
}

std::vector<int> label_indices(const LabelSeries& labels, BoundaryClass c) {
  std::vector<int> out;
  const auto& y = labels.of(c);
  for (int i = 0; i < static_cast<int>(y.size()); ++i)
    if (y[i]) out.push_back(i);
  return out;
}

std::vector<double> label_targets(const LabelSeries& labels, BoundaryClass c,
                                  int smooth_width) {
  const auto& y = labels.of(c);
  const int L = static_cast<int>(y.size());
  std::vector<double> t(y.begin(), y.end());
  if (smooth_width <= 0) return t;
  for (int i = 0; i < L; ++i) {
    if (!y[i]) continue;
    for (int d = 1; d <= smooth_width; ++d) {
      const double v = 1.0 - static_cast<double>(d) / (smooth_width + 1);
      if (i - d >= 0) t[i - d] = std::max(t[i - d], v);
      if (i + d < L) t[i + d] = std::max(t[i + d], v);
    }
  }
  return t;
}

std::vector<DatasetSplit> make_folds(const std::vector<std::string>& video_ids,
                                     int k, uint64_t seed) {
  if (k < 2) throw ConfigError("make_folds: k must be >= 2");
  if (static_cast<int>(video_ids.size()) < k)
    throw ConfigError("make_folds: fewer videos than folds");
  std::vector<std::string> ids = video_ids;
  Rng rng(seed);
  rng.shuffle(ids);

  const int n = static_cast<int>(ids.size());
  const int base = n / k;
  const int rem = n % k;
  std::vector<std::vector<std::string>> groups(k);
  int pos = 0;
  for (int g = 0; g < k; ++g) {
    const int sz = base + (g < rem ? 1 : 0);
    groups[g].assign(ids.begin() + pos, ids.begin() + pos + sz);
    pos += sz;
  }

  std::vector<DatasetSplit> folds(k);
  for (int g = 0; g < k; ++g) {
    folds[g].fold_index = g;
    folds[g].val_ids = groups[g];
    for (int o = 0; o < k; ++o)
      if (o != g)
        folds[g].train_ids.insert(folds[g].train_ids.end(), groups[o].begin(),
                                  groups[o].end());
  }
  return folds;
}

void SynthConfig::validate() const {
  if (l_min < 2 || l_max < l_min) throw ConfigError("synth: bad L range");
  if (dim < 1) throw ConfigError("synth: dim must be >= 1");
  if (segments_min < 2 || segments_max < segments_min)
    throw ConfigError("synth: segments range must start at >= 2");
  if (min_gap < 1) throw ConfigError("synth: min_gap must be >= 1");
  if (noise < 0.0) throw ConfigError("synth: noise must be >= 0");
  if (snippet_rate <= 0.0) throw ConfigError("synth: snippet_rate must be > 0");
  if (l_min < 2 * min_gap) throw ConfigError("synth: l_min too small for min_gap");
}

namespace {

std::vector<double> unit_direction(Rng& rng, int dim) {
  std::vector<double> v = rng.normal_vec(dim);
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double inv = 1.0 / std::sqrt(n2 > 0.0 ? n2 : 1.0);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

std::pair<std::vector<FeatureSequence>, std::vector<BoundaryAnnotation>>
generate_synthetic_dataset(int num_videos, uint64_t seed, const SynthConfig& cfg) {
  if (num_videos < 1) throw ConfigError("synth: num_videos must be >= 1");
  cfg.validate();

  std::vector<FeatureSequence> feats;
  std::vector<BoundaryAnnotation> anns;
  feats.reserve(num_videos);
  anns.reserve(num_videos);

  for (int vi = 0; vi < num_videos; ++vi) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(vi)));
    const int L = rng.range(cfg.l_min, cfg.l_max);
    int segments = rng.range(cfg.segments_min, cfg.segments_max);
    // Largest segment count the gap constraint allows for this L.
    while (segments > 2 && L - segments * cfg.min_gap < 0) --segments;

    // Sorted boundary indices with pairwise gaps >= min_gap.
    const int slack = L - segments * cfg.min_gap;
    std::vector<int> u(segments - 1);
    for (auto& x : u) x = static_cast<int>(rng.below(static_cast<uint64_t>(slack) + 1));
    std::sort(u.begin(), u.end());
    std::vector<int> bounds(segments - 1);
    for (int i = 0; i < segments - 1; ++i) bounds[i] = u[i] + (i + 1) * cfg.min_gap;

    std::vector<bool> is_shot(bounds.size());
    for (std::size_t i = 0; i < bounds.size(); ++i)
      is_shot[i] = rng.uniform() < cfg.p_shot;

    // Segment means: small directional shift at action boundaries, re-drawn
    // direction with large norm at shot boundaries.
    std::vector<std::vector<double>> means(segments);
    {
      auto dir = unit_direction(rng, cfg.dim);
      means[0].resize(cfg.dim);
      for (int d = 0; d < cfg.dim; ++d) means[0][d] = cfg.base_scale * dir[d];
    }
    for (int s = 1; s < segments; ++s) {
      if (is_shot[s - 1]) {
        auto dir = unit_direction(rng, cfg.dim);
        means[s].resize(cfg.dim);
        for (int d = 0; d < cfg.dim; ++d) means[s][d] = cfg.shot_scale * dir[d];
      } else {
        auto dir = unit_direction(rng, cfg.dim);
        means[s] = means[s - 1];
        for (int d = 0; d < cfg.dim; ++d) means[s][d] += cfg.action_shift * dir[d];
      }
    }

    FeatureSequence fs;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%04d", vi);
    fs.video_id = idbuf;
    fs.snippet_rate = cfg.snippet_rate;
    fs.duration = L / cfg.snippet_rate;
    fs.L = L;
    fs.D = cfg.dim;
    fs.features.resize(static_cast<std::size_t>(L) * cfg.dim);
    int seg = 0;
    for (int t = 0; t < L; ++t) {
      while (seg < static_cast<int>(bounds.size()) && t >= bounds[seg]) ++seg;
      float* row = fs.features.data() + static_cast<std::size_t>(t) * cfg.dim;
      for (int d = 0; d < cfg.dim; ++d) {
        double v = means[seg][d];
        if (cfg.noise > 0.0) v += cfg.noise * rng.normal();
        row[d] = static_cast<float>(v);
      }
    }
    fs.validate();

    BoundaryAnnotation ann;
    ann.video_id = fs.video_id;
    ann.duration = fs.duration;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      const double t = bounds[i] / cfg.snippet_rate;
      (is_shot[i] ? ann.shot_boundaries : ann.action_boundaries).push_back(t);
    }
    ann.whole_boundaries = derive_whole(ann.action_boundaries, ann.shot_boundaries,
                                        1.0 / cfg.snippet_rate);
    ann.validate();

    feats.push_back(std::move(fs));
    anns.push_back(std::move(ann));
  }
  return {std::move(feats), std::move(anns)};
}

// --------------------------------------------------------------------------
// Feature file format "GEBF" v1 (little-endian):
//   magic 4B | version u32 | L u32 | D u32 | snippet_rate f64 | duration f64
//   | id_len u16 | id bytes | L*D f32 row-major
// --------------------------------------------------------------------------

namespace {

constexpr char kFeatureMagic[4] = {'G', 'E', 'B', 'F'};
constexpr uint32_t kFeatureVersion = 1;

}  // namespace

void write_feature_file(const std::string& path, const FeatureSequence& fs) {
  fs.validate();
  if (fs.video_id.size() > 0xffff)
    throw FormatError(path + ": video_id longer than 65535 bytes");
  std::string buf;
  buf.reserve(40 + fs.video_id.size() + fs.features.size() * 4);
  buf.append(kFeatureMagic, 4);
  binio::put_u32(buf, kFeatureVersion);
  binio::put_u32(buf, static_cast<uint32_t>(fs.L));
  binio::put_u32(buf, static_cast<uint32_t>(fs.D));
  binio::put_f64(buf, fs.snippet_rate);
  binio::put_f64(buf, fs.duration);
  binio::put_u16(buf, static_cast<uint16_t>(fs.video_id.size()));
  buf.append(fs.video_id);
  for (float f : fs.features) binio::put_f32(buf, f);
  write_text_file(path, buf);
}

FeatureSequence read_feature_file(const std::string& path) {
  binio::ByteReader r{read_text_file(path), 0, path};
  r.need(4, "magic");
  if (std::memcmp(r.data.data(), kFeatureMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != kFeatureVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  FeatureSequence fs;
  const uint32_t L = r.u32("L");
  const uint32_t D = r.u32("D");
  fs.snippet_rate = r.f64("snippet_rate");
  fs.duration = r.f64("duration");
  const uint16_t idlen = r.u16("video_id length");
  r.need(idlen, "video_id");
  fs.video_id.assign(r.data, r.pos, idlen);
  r.pos += idlen;
  fs.L = static_cast<int>(L);
  fs.D = static_cast<int>(D);
  if (L < 2 || D < 1 || static_cast<uint64_t>(L) * D > (1ull << 31))
    throw FormatError(path + ": implausible dimensions L=" + std::to_string(L) +
                      " D=" + std::to_string(D) + " at byte offset 12");
  fs.features.resize(static_cast<std::size_t>(L) * D);
  for (std::size_t i = 0; i < fs.features.size(); ++i) {
    const std::size_t off = r.pos;
    fs.features[i] = r.f32("feature payload");
    if (!std::isfinite(fs.features[i]))
      throw FormatError(path + ": non-finite feature value at byte offset " +
                        std::to_string(off));
  }
  if (r.pos != r.data.size())
    throw FormatError(path + ": trailing data at byte offset " +
                      std::to_string(r.pos));
  fs.validate();
  return fs;
}

// --------------------------------------------------------------------------
// Annotation JSON
// --------------------------------------------------------------------------

void write_annotations(const std::string& path,
                       const std::vector<BoundaryAnnotation>& anns) {
  ordered_json arr = ordered_json::array();
  for (const auto& a : anns) {
    ordered_json o;
    o["video_id"] = a.video_id;
    o["duration"] = a.duration;
    o["action_boundaries"] = a.action_boundaries;
    o["shot_boundaries"] = a.shot_boundaries;
    arr.push_back(std::move(o));
  }
  write_text_file(path, arr.dump(2) + "\n");
}

std::vector<BoundaryAnnotation> read_annotations(const std::string& path,
                                                 double merge_eps) {
  const std::string text = read_text_file(path);
  const ordered_json arr = parse_json_text(text, path);
  if (!arr.is_array()) throw FormatError(path + ": expected a JSON array");
  std::vector<BoundaryAnnotation> out;
  out.reserve(arr.size());
  for (const auto& o : arr) {
    BoundaryAnnotation a;
    try {
      a.video_id = o.at("video_id").get<std::string>();
      a.duration = o.at("duration").get<double>();
      a.action_boundaries = o.at("action_boundaries").get<std::vector<double>>();
      a.shot_boundaries = o.at("shot_boundaries").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": bad annotation entry: " + e.what());
    }
    std::sort(a.action_boundaries.begin(), a.action_boundaries.end());
    std::sort(a.shot_boundaries.begin(), a.shot_boundaries.end());
    a.whole_boundaries =
        derive_whole(a.action_boundaries, a.shot_boundaries, merge_eps);
    a.validate();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace gebd
