#include "gebd/model.hpp"

#include <algorithm>

#include "gebd/errors.hpp"
#include "gebd/kernels.hpp"

namespace gebd {

const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Combined: return "combined";
    case ModelVariant::DirectOnly: return "direct";
    case ModelVariant::TsmOnly: return "tsm";
  }
  throw ConfigError("unknown model variant");
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "combined") return ModelVariant::Combined;
  if (s == "direct") return ModelVariant::DirectOnly;
  if (s == "tsm") return ModelVariant::TsmOnly;
  throw ConfigError("unknown model variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (d_enc < 1) throw ConfigError("d_enc must be >= 1");
  if (simsiam_hidden < 1) throw ConfigError("simsiam_hidden must be >= 1");
  if (tsm_head_hidden < 1) throw ConfigError("tsm_head_hidden must be >= 1");
  if (enc_tf_layers < 1 || head_tf_layers < 1)
    throw ConfigError("transformer depth must be >= 1");
  if (enc_tf_heads < 1 || head_tf_heads < 1)
    throw ConfigError("transformer heads must be >= 1");
  if (d_enc % enc_tf_heads != 0)
    throw ConfigError("d_enc must be divisible by enc_tf_heads");
  if ((kNumStreams * d_enc) % head_tf_heads != 0)
    throw ConfigError("12*d_enc must be divisible by head_tf_heads");
  decoder.validate();
}

ordered_json ModelConfig::to_json() const {
  ordered_json j;
  j["feature_dim"] = feature_dim;
  j["d_enc"] = d_enc;
  j["enc_tf_layers"] = enc_tf_layers;
  j["enc_tf_heads"] = enc_tf_heads;
  j["simsiam_hidden"] = simsiam_hidden;
  j["decoder"] = ordered_json{{"c_decoder", decoder.c_decoder},
                              {"stage_widths", decoder.stage_widths},
                              {"blocks_per_stage", decoder.blocks_per_stage}};
  j["tsm_head_hidden"] = tsm_head_hidden;
  j["head_tf_layers"] = head_tf_layers;
  j["head_tf_heads"] = head_tf_heads;
  j["variant"] = to_string(variant);
  j["stop_gradient"] = stop_gradient;
  return j;
}

ModelConfig ModelConfig::from_json(const ordered_json& j) {
  ModelConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<int>();
    c.d_enc = j.at("d_enc").get<int>();
    c.enc_tf_layers = j.at("enc_tf_layers").get<int>();
    c.enc_tf_heads = j.at("enc_tf_heads").get<int>();
    c.simsiam_hidden = j.at("simsiam_hidden").get<int>();
    const ordered_json& d = j.at("decoder");
    c.decoder.c_decoder = d.at("c_decoder").get<int>();
    auto widths = d.at("stage_widths").get<std::vector<int>>();
    if (widths.size() != c.decoder.stage_widths.size())
      throw ConfigError("decoder.stage_widths must have 4 entries");
    std::copy(widths.begin(), widths.end(), c.decoder.stage_widths.begin());
    c.decoder.blocks_per_stage = d.at("blocks_per_stage").get<int>();
    c.tsm_head_hidden = j.at("tsm_head_hidden").get<int>();
    c.head_tf_layers = j.at("head_tf_layers").get<int>();
    c.head_tf_heads = j.at("head_tf_heads").get<int>();
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.stop_gradient = j.at("stop_gradient").get<bool>();
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

GebdModel::GebdModel(const ModelConfig& cfg)
    : cfg_(cfg),
      enc_(EncoderConfig{cfg.feature_dim, cfg.d_enc, cfg.enc_tf_layers,
                         cfg.enc_tf_heads}),
      decoder_("dec", cfg.decoder),
      tsm_head_("tsm_head", cfg.decoder.c_decoder, cfg.tsm_head_hidden),
      direct_head_("direct_head", cfg.d_enc, cfg.head_tf_layers,
                   cfg.head_tf_heads) {
  cfg.validate();
  simsiam_.reserve(kNumStreams);
  for (const StreamMeta& m : enc_.streams())
    simsiam_.emplace_back("simsiam." + m.name, cfg.d_enc, cfg.simsiam_hidden);
  raw_alpha_.resize("raw_alpha", {3});
}

void GebdModel::init(uint64_t seed) {
  Rng rng(seed);
  enc_.init(rng);
  for (SimSiamHead& h : simsiam_) h.init(rng);
  decoder_.init(rng);
  tsm_head_.init(rng);
  direct_head_.init(rng);
  std::fill(raw_alpha_.v.begin(), raw_alpha_.v.end(), 0.0);  // alpha = 0.5
}

nn::ParamList GebdModel::params() {
  nn::ParamList out;
  enc_.collect(out);
  for (SimSiamHead& h : simsiam_) h.collect(out);
  decoder_.collect(out);
  tsm_head_.collect(out);
  direct_head_.collect(out);
  out.push_back(&raw_alpha_);
  return out;
}

void GebdModel::zero_grad() {
  for (nn::PTensor* p : params()) p->zero_grad();
}

PassPredictions GebdModel::forward(
    const Mat& features, ModelForwardCtx& ctx,
    const std::vector<const ContrastiveMask*>* masks) const {
  ctx.streams = enc_.encode(features, ctx.bank);
  const int L = features.rows;

  Mat p_tsm, p_direct;
  if (runs_tsm()) {
    ctx.stack = stack_tsm(ctx.streams, &ctx.degenerate_tsm);
    ctx.dec_out = decoder_.forward(ctx.stack.tsm, ctx.dec);
    ctx.diag = gather_diagonal(ctx.dec_out);
    p_tsm = tsm_head_.forward(ctx.diag, ctx.tsm_head);
  }
  if (runs_direct()) {
    p_direct = direct_head_.forward(ctx.streams, ctx.direct_head);
  }

  switch (cfg_.variant) {
    case ModelVariant::Combined: {
      std::array<double, 3> raw{raw_alpha_.v[0], raw_alpha_.v[1],
                                raw_alpha_.v[2]};
      ctx.preds = combine(p_tsm, p_direct, raw);
      break;
    }
    case ModelVariant::DirectOnly:
      ctx.preds.p_tsm = Mat(L, kNumClasses);
      ctx.preds.p_direct = p_direct;
      ctx.preds.p_final = p_direct;
      ctx.preds.alpha = {0.0, 0.0, 0.0};
      break;
    case ModelVariant::TsmOnly:
      ctx.preds.p_tsm = p_tsm;
      ctx.preds.p_direct = Mat(L, kNumClasses);
      ctx.preds.p_final = p_tsm;
      ctx.preds.alpha = {1.0, 1.0, 1.0};
      break;
  }

  ctx.masks = masks;
  ctx.contra = ContrastiveLossResult{};
  if (masks) {
    if (static_cast<int>(masks->size()) != kNumStreams)
      throw ShapeError("expected one contrastive mask per stream");
    ctx.simsiam.assign(kNumStreams, SimSiamCtx{});
    ctx.projected.clear();
    ctx.contra_sims.clear();
    ctx.projected.reserve(kNumStreams);
    ctx.contra_sims.reserve(kNumStreams);
    for (int s = 0; s < kNumStreams; ++s) {
      const Mat& enc = ctx.streams[static_cast<std::size_t>(s)];
      Mat proj = simsiam_[static_cast<std::size_t>(s)].forward(
          enc, ctx.simsiam[static_cast<std::size_t>(s)]);
      Mat sim(L, L);
      kernels::cross_cosine(enc.v.data(), proj.v.data(), L, enc.cols,
                            sim.v.data(), nullptr);
      ctx.projected.push_back(std::move(proj));
      ctx.contra_sims.push_back(std::move(sim));
    }
    ctx.contra = contrastive_loss(ctx.contra_sims, *masks);
  }
  return ctx.preds;
}

void GebdModel::backward(const Mat& dfinal, double lambda_contra,
                         ModelForwardCtx& ctx) {
  const int L = dfinal.rows;
  std::vector<Mat> dstreams(kNumStreams);
  for (int s = 0; s < kNumStreams; ++s)
    dstreams[static_cast<std::size_t>(s)] = Mat(L, cfg_.d_enc);

  Mat dtsm(L, kNumClasses), ddirect(L, kNumClasses);
  switch (cfg_.variant) {
    case ModelVariant::Combined: {
      std::array<double, 3> draw{0.0, 0.0, 0.0};
      combine_backward(ctx.preds, dfinal, dtsm, ddirect, draw);
      for (int c = 0; c < 3; ++c)
        raw_alpha_.g[static_cast<std::size_t>(c)] += draw[static_cast<std::size_t>(c)];
      break;
    }
    case ModelVariant::DirectOnly:
      ddirect = dfinal;
      break;
    case ModelVariant::TsmOnly:
      dtsm = dfinal;
      break;
  }

  if (runs_direct()) {
    std::vector<Mat> d = direct_head_.backward(ddirect, ctx.direct_head);
    for (int s = 0; s < kNumStreams; ++s) {
      Mat& acc = dstreams[static_cast<std::size_t>(s)];
      const Mat& part = d[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += part.v[i];
    }
  }
  if (runs_tsm()) {
    Mat ddiag = tsm_head_.backward(dtsm, ctx.tsm_head);
    Ten3 dten = gather_diagonal_backward(ddiag, ctx.dec_out);
    Ten3 dstack = decoder_.backward(dten, ctx.dec);
    stack_tsm_backward(ctx.streams, ctx.stack, dstack, dstreams);
  }

  if (ctx.masks && lambda_contra != 0.0 && !ctx.contra.all_skipped) {
    std::vector<Mat> dsims = contrastive_loss_grad(ctx.contra_sims, *ctx.masks);
    for (int s = 0; s < kNumStreams; ++s) {
      Mat& dsim = dsims[static_cast<std::size_t>(s)];
      bool any = false;
      for (double& g : dsim.v) {
        g *= lambda_contra;
        any = any || g != 0.0;
      }
      if (!any) continue;
      const Mat& enc = ctx.streams[static_cast<std::size_t>(s)];
      const Mat& proj = ctx.projected[static_cast<std::size_t>(s)];
      Mat dproj(L, cfg_.d_enc);
      Mat& denc = dstreams[static_cast<std::size_t>(s)];
      kernels::cross_cosine_bwd(
          enc.v.data(), proj.v.data(), L, cfg_.d_enc,
          ctx.contra_sims[static_cast<std::size_t>(s)].v.data(), dsim.v.data(),
          cfg_.stop_gradient ? nullptr : denc.v.data(), dproj.v.data());
      Mat dback = simsiam_[static_cast<std::size_t>(s)].backward(
          dproj, ctx.simsiam[static_cast<std::size_t>(s)]);
      for (std::size_t i = 0; i < denc.v.size(); ++i) denc.v[i] += dback.v[i];
    }
  }

  enc_.backward(dstreams, ctx.bank);
}

PassPredictions GebdModel::predict(const Mat& features) const {
  ModelForwardCtx ctx;
  return forward(features, ctx, nullptr);
}

}  // namespace gebd
