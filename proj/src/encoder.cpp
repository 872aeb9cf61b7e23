#include "gebd/encoder.hpp"

#include "gebd/errors.hpp"

namespace gebd {

const char* to_string(ModuleKind k) {
  switch (k) {
    case ModuleKind::Pointwise: return "pw";
    case ModuleKind::ConvSmall: return "conv3";
    case ModuleKind::ConvMid: return "conv7";
    case ModuleKind::Transformer: return "tf";
  }
  throw ConfigError("unknown module kind");
}

std::optional<int> receptive_field(ModuleKind k) {
  switch (k) {
    case ModuleKind::Pointwise: return 1;
    case ModuleKind::ConvSmall: return 3;
    case ModuleKind::ConvMid: return 7;
    case ModuleKind::Transformer: return std::nullopt;
  }
  throw ConfigError("unknown module kind");
}

std::vector<StreamMeta> EncoderBank::layout() {
  static const BoundaryClass classes[] = {BoundaryClass::Action,
                                          BoundaryClass::Shot,
                                          BoundaryClass::Whole};
  static const ModuleKind kinds[] = {ModuleKind::Pointwise, ModuleKind::ConvSmall,
                                     ModuleKind::ConvMid, ModuleKind::Transformer};
  std::vector<StreamMeta> metas;
  metas.reserve(12);
  int idx = 0;
  for (BoundaryClass c : classes)
    for (ModuleKind k : kinds) {
      StreamMeta m;
      m.cls = c;
      m.kind = k;
      m.index = idx++;
      m.name = std::string(class_name(c)) + "." + to_string(k);
      metas.push_back(std::move(m));
    }
  return metas;
}

EncoderStream::EncoderStream(StreamMeta meta, const EncoderConfig& cfg)
    : meta_(std::move(meta)) {
  const std::string base = "enc." + meta_.name;
  if (meta_.kind == ModuleKind::Transformer) {
    is_tf_ = true;
    tf_ = nn::TransformerEncoder(base, cfg.feature_dim, cfg.d_enc,
                                 cfg.tf_layers, cfg.tf_heads, 2 * cfg.d_enc);
  } else {
    const int k = *receptive_field(meta_.kind);
    c1_ = nn::Conv1d(base + ".c1", cfg.feature_dim, cfg.d_enc, k);
    c2_ = nn::Conv1d(base + ".c2", cfg.d_enc, cfg.d_enc, 1);
  }
}

void EncoderStream::init(Rng& rng) {
  if (is_tf_) {
    tf_.init(rng);
  } else {
    c1_.init(rng);
    c2_.init(rng);
  }
}

void EncoderStream::collect(nn::ParamList& out) {
  if (is_tf_) {
    tf_.collect(out);
  } else {
    c1_.collect(out);
    c2_.collect(out);
  }
}

Mat EncoderStream::forward(const Mat& x, StreamCtx& ctx) const {
  if (is_tf_) return tf_.forward(x, ctx.tf);
  Mat h = c1_.forward(x, ctx.c1);
  ctx.pre = h;
  for (double& v : h.v) v = v > 0.0 ? v : 0.0;
  return c2_.forward(h, ctx.c2);
}

Mat EncoderStream::backward(const Mat& dy, const StreamCtx& ctx) {
  if (is_tf_) return tf_.backward(dy, ctx.tf);
  Mat dh = c2_.backward(dy, ctx.c2);
  for (std::size_t i = 0; i < dh.v.size(); ++i)
    if (ctx.pre.v[i] <= 0.0) dh.v[i] = 0.0;
  return c1_.backward(dh, ctx.c1);
}

EncoderBank::EncoderBank(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.feature_dim < 1) throw ConfigError("encoder feature_dim must be >= 1");
  if (cfg.d_enc < 1) throw ConfigError("encoder d_enc must be >= 1");
  if (cfg.d_enc % cfg.tf_heads != 0)
    throw ConfigError("encoder d_enc must be divisible by tf_heads");
  meta_ = layout();
  streams_.reserve(meta_.size());
  for (const StreamMeta& m : meta_) streams_.emplace_back(m, cfg);
}

void EncoderBank::init(Rng& rng) {
  for (EncoderStream& s : streams_) s.init(rng);
}

void EncoderBank::collect(nn::ParamList& out) {
  for (EncoderStream& s : streams_) s.collect(out);
}

std::vector<Mat> EncoderBank::encode(const Mat& features, BankCtx& ctx) const {
  if (features.cols != cfg_.feature_dim)
    throw ShapeError("encoder expected D=" + std::to_string(cfg_.feature_dim) +
                     ", got " + std::to_string(features.cols));
  if (features.rows < 2) throw InputError("encoder needs at least 2 snippets");
  ctx.streams.assign(streams_.size(), StreamCtx{});
  std::vector<Mat> out;
  out.reserve(streams_.size());
  for (std::size_t s = 0; s < streams_.size(); ++s)
    out.push_back(streams_[s].forward(features, ctx.streams[s]));
  return out;
}

Mat EncoderBank::backward(const std::vector<Mat>& dstreams, const BankCtx& ctx) {
  if (dstreams.size() != streams_.size())
    throw ShapeError("encoder backward expects 12 stream gradients");
  Mat dx;
  for (std::size_t s = 0; s < streams_.size(); ++s) {
    Mat part = streams_[s].backward(dstreams[s], ctx.streams[s]);
    if (s == 0) {
      dx = std::move(part);
    } else {
      for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += part.v[i];
    }
  }
  return dx;
}

}  // namespace gebd
